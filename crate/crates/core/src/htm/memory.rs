use std::collections::HashMap;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::ir::{Program, VarDecl, VarKind};

/// Cells per 64-byte line; arrays start and end on this boundary.
const ALIGN_CELLS: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarSlot {
    pub name: String,
    pub base: usize,
    pub len: usize,
    pub array: bool,
}

/// Placement of globals in the flat cell space.
///
/// Scalars are packed in declaration order; every array begins on a fresh
/// 64-byte line and the next variable starts on the line after it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    vars: Vec<VarSlot>,
    index: HashMap<String, usize>,
    cells: usize,
}

impl Layout {
    pub fn new(decls: &[VarDecl]) -> Self {
        let align = |n: usize| n.div_ceil(ALIGN_CELLS) * ALIGN_CELLS;
        let mut vars = Vec::with_capacity(decls.len());
        let mut next = 0;
        for d in decls {
            let array = d.kind != VarKind::Scalar;
            if array {
                next = align(next);
            }
            vars.push(VarSlot {
                name: d.name.clone(),
                base: next,
                len: d.len(),
                array,
            });
            next += d.len();
            if array {
                next = align(next);
            }
        }
        let index = vars
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.clone(), i))
            .collect();
        Self {
            vars,
            index,
            cells: next,
        }
    }

    pub fn slot(&self, name: &str) -> Option<&VarSlot> {
        self.index.get(name).map(|&i| &self.vars[i])
    }

    pub fn vars(&self) -> &[VarSlot] {
        &self.vars
    }

    pub fn cells(&self) -> usize {
        self.cells
    }
}

/// A snapshot of all global cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemoryImage {
    layout: Arc<Layout>,
    cells: Vec<i64>,
}

impl MemoryImage {
    /// Memory at program start: declared initializers, zeros elsewhere.
    pub fn initial(program: &Program) -> Self {
        let layout = Arc::new(Layout::new(&program.globals));
        let mut cells = vec![0; layout.cells()];
        for (d, slot) in program.globals.iter().zip(layout.vars()) {
            cells[slot.base..slot.base + d.init.len()].copy_from_slice(&d.init);
        }
        Self { layout, cells }
    }

    pub fn from_cells(layout: Arc<Layout>, cells: Vec<i64>) -> Self {
        assert_eq!(layout.cells(), cells.len());
        Self { layout, cells }
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn cells(&self) -> &[i64] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [i64] {
        &mut self.cells
    }

    pub fn get(&self, name: &str) -> Option<&[i64]> {
        let s = self.layout.slot(name)?;
        Some(&self.cells[s.base..s.base + s.len])
    }

    pub fn scalar(&self, name: &str) -> Option<i64> {
        self.get(name).map(|c| c[0])
    }

    /// SHA-256 over variable names and values, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for v in self.layout.vars() {
            h.update(v.name.as_bytes());
            h.update([0]);
            for c in &self.cells[v.base..v.base + v.len] {
                h.update(c.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arrays_are_line_aligned() {
        let decls = [
            VarDecl::scalar("a", None),
            VarDecl::array("A", 10),
            VarDecl::scalar("b", None),
            VarDecl::scalar("c", None),
        ];
        let l = Layout::new(&decls);
        assert_eq!(l.slot("a").unwrap().base, 0);
        assert_eq!(l.slot("A").unwrap().base, 8);
        assert_eq!(l.slot("b").unwrap().base, 24);
        assert_eq!(l.slot("c").unwrap().base, 25);
        assert_eq!(l.cells(), 26);
    }

    #[test]
    fn digest_depends_on_values() {
        let mut p = Program::default();
        p.globals.push(VarDecl::scalar("x", Some(3)));
        let a = MemoryImage::initial(&p);
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.cells_mut()[0] = 4;
        assert_ne!(a.digest(), b.digest());
    }
}
