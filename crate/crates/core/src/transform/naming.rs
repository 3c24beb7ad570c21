use std::collections::BTreeSet;

/// Hands out identifiers that are unused in the program being transformed.
#[derive(Debug, Clone)]
pub(crate) struct Namer {
    used: BTreeSet<String>,
}

impl Namer {
    pub fn new(used: BTreeSet<String>) -> Self {
        Self { used }
    }

    /// `base` itself if free, else `base_1`, `base_2`, ...
    pub fn fresh(&mut self, base: &str) -> String {
        let mut name = base.to_string();
        let mut k = 1;
        while self.used.contains(&name) {
            name = format!("{base}_{k}");
            k += 1;
        }
        self.used.insert(name.clone());
        name
    }
}

/// Names generated for one transformed loop.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransformNaming {
    pub cursor: String,
    pub inner: String,
    pub speculative: String,
    /// One per counted `for`, in preorder.
    pub counters: Vec<String>,
    pub scalars: Vec<PrivateScalar>,
    pub arrays: Vec<PrivateArray>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrivateScalar {
    pub var: String,
    pub private: String,
    /// Lazy first-read flag, present when the variable has an `if_read` clause.
    pub read_flag: Option<String>,
    /// Written flag guarding copy-back, present for `if_write`-only variables.
    pub write_flag: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrivateArray {
    pub var: String,
    pub private: String,
    pub counter: String,
    pub pred: Option<String>,
    /// `None` when the copy lives in a nested loop and grows on demand.
    pub len: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_names_skip_collisions() {
        let mut n = Namer::new(["ii".to_string(), "ii_1".to_string()].into());
        assert_eq!(n.fresh("ii"), "ii_2");
        assert_eq!(n.fresh("ii"), "ii_3");
        assert_eq!(n.fresh("globL"), "globL");
        assert_eq!(n.fresh("globL"), "globL_1");
    }
}
