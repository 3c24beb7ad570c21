//! Bundled kernels and transformation fixtures.

use std::fmt;

use crate::frontend::{load, FrontendError};
use crate::ir::{walk_stmts_mut, LoopDirective, Program, Stmt};

/// Seed of the `rnd` intrinsic under which the digests below were taken.
pub const SEED: u64 = 2021;

/// How a kernel's cross-strip sharing is handled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    Reduction,
    Scalar,
    ArrayIfWrite,
    TrueDependence,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Reduction => "reduction",
            KernelKind::Scalar => "scalar",
            KernelKind::ArrayIfWrite => "array-if_write",
            KernelKind::TrueDependence => "true-dependence",
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct KernelSpec {
    pub name: &'static str,
    pub file: &'static str,
    pub source: &'static str,
    pub strip: i64,
    pub kind: KernelKind,
    /// Memory digest after a serial run with [`SEED`].
    pub digest: &'static str,
}

impl KernelSpec {
    pub fn program(&self) -> Result<Program, FrontendError> {
        load(self.file, self.source)
    }
}

const GALLERY: [KernelSpec; 4] = [
    KernelSpec {
        name: "bitcount",
        file: "bitcount.stec",
        source: include_str!("../kernels/bitcount.stec"),
        strip: 5020,
        kind: KernelKind::Reduction,
        digest: "1bfaca065855cf30c2b02847f09701afcad1f6b29fcdf3f79db2cfeead1ba652",
    },
    KernelSpec {
        name: "corners",
        file: "corners.stec",
        source: include_str!("../kernels/corners.stec"),
        strip: 9,
        kind: KernelKind::Scalar,
        digest: "7be29abf6fa0130c9e7fae725b92f9e3dc8abc0f66031a04b2deabbf8ac81514",
    },
    KernelSpec {
        name: "edges",
        file: "edges.stec",
        source: include_str!("../kernels/edges.stec"),
        strip: 25,
        kind: KernelKind::ArrayIfWrite,
        digest: "df6b4e151105ae9500b0c2849c3393fc6c69878c750a1bb20c89ee0064444c92",
    },
    KernelSpec {
        name: "basket",
        file: "basket.stec",
        source: include_str!("../kernels/basket.stec"),
        strip: 75,
        kind: KernelKind::TrueDependence,
        digest: "987b01f1da8e01b21fc5a8d89872857121afcb0d5acf53e1ccc3175781dd96c5",
    },
];

const FIXTURES: [(&str, &str); 3] = [
    ("fig4", include_str!("../kernels/fig4.stec")),
    ("loopv", include_str!("../kernels/loopv.stec")),
    (
        "ordered_corners",
        include_str!("../kernels/ordered_corners.stec"),
    ),
];

pub fn gallery() -> &'static [KernelSpec] {
    &GALLERY
}

pub fn find(name: &str) -> Option<&'static KernelSpec> {
    GALLERY.iter().find(|k| k.name == name)
}

/// Source of a transformation or baseline fixture.
pub fn fixture(name: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|f| f.0 == name).map(|f| f.1)
}

/// Removes every privatization and reduction clause, leaving all sharing to
/// the transactional memory.
pub fn strip_privatization(program: &Program) -> Program {
    let mut p = program.clone();
    p.body.retain(|s| !matches!(s, Stmt::PragmaTls(_)));
    walk_stmts_mut(&mut p.body, &mut |s| match s {
        Stmt::For(l) => {
            l.body.retain(|s| !matches!(s, Stmt::PragmaTls(_)));
            if let Some(LoopDirective::Taskloop(d)) = &mut l.directive {
                d.spec_private.clear();
                d.spec_reduction.clear();
            }
        }
        Stmt::If {
            then_body,
            else_body,
            ..
        } => {
            then_body.retain(|s| !matches!(s, Stmt::PragmaTls(_)));
            else_body.retain(|s| !matches!(s, Stmt::PragmaTls(_)));
        }
        _ => {}
    });
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::walk_stmts;

    #[test]
    fn everything_parses() {
        for k in gallery() {
            k.program().unwrap();
        }
        for (name, src) in FIXTURES {
            load(name, src).unwrap();
        }
    }

    #[test]
    fn stripping_leaves_no_clauses() {
        let p = strip_privatization(&find("edges").unwrap().program().unwrap());
        walk_stmts(&p.body, &mut |s| {
            assert!(!matches!(s, Stmt::PragmaTls(_)));
            if let Stmt::For(l) = s {
                if let Some(d) = l.taskloop() {
                    assert!(d.spec_private.is_empty() && d.spec_reduction.is_empty());
                }
            }
        });
    }
}
