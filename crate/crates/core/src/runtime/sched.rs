use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Order in which idle workers pick up strips.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchedPolicy {
    /// Lowest strip first.
    Monotonic,
    /// Highest strip first.
    Lifo,
    /// A seeded permutation of the strips.
    NonMonotonicRandom(u64),
}

impl fmt::Display for SchedPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedPolicy::Monotonic => write!(f, "mono"),
            SchedPolicy::Lifo => write!(f, "lifo"),
            SchedPolicy::NonMonotonicRandom(s) => write!(f, "rand:{s}"),
        }
    }
}

impl FromStr for SchedPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mono" | "monotonic" => Ok(SchedPolicy::Monotonic),
            "lifo" => Ok(SchedPolicy::Lifo),
            _ => {
                let seed = s
                    .strip_prefix("rand:")
                    .ok_or_else(|| format!("unknown schedule `{s}` (mono, lifo, rand:<seed>)"))?;
                seed.parse()
                    .map(SchedPolicy::NonMonotonicRandom)
                    .map_err(|_| format!("bad seed in `{s}`"))
            }
        }
    }
}

/// Hands out strip indices `0..n` according to a policy.
///
/// Strips that were handed out can be released again; a release puts the
/// strip back into the pool of unclaimed strips.
#[derive(Clone, Debug)]
pub struct Dispatcher {
    order: Vec<usize>,
    next: usize,
    unclaimed: BTreeSet<usize>,
}

impl Dispatcher {
    pub fn new(n: usize, policy: SchedPolicy) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        match policy {
            SchedPolicy::Monotonic => {}
            SchedPolicy::Lifo => order.reverse(),
            SchedPolicy::NonMonotonicRandom(seed) => {
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            }
        }
        Self {
            order,
            next: 0,
            unclaimed: (0..n).collect(),
        }
    }

    /// Next strip in policy order that nobody holds.
    pub fn claim(&mut self) -> Option<usize> {
        while let Some(&s) = self.order.get(self.next) {
            self.next += 1;
            if self.unclaimed.remove(&s) {
                return Some(s);
            }
        }
        // Only released strips remain.
        self.unclaimed.pop_first()
    }

    /// Claims the lowest unclaimed strip if it is below `strip`.
    pub fn claim_predecessor(&mut self, strip: usize) -> Option<usize> {
        let &s = self.unclaimed.first()?;
        (s < strip).then(|| {
            self.unclaimed.remove(&s);
            s
        })
    }

    pub fn release(&mut self, strip: usize) {
        self.unclaimed.insert(strip);
    }

    pub fn remaining(&self) -> usize {
        self.unclaimed.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drain(mut d: Dispatcher) -> Vec<usize> {
        std::iter::from_fn(|| d.claim()).collect()
    }

    #[test]
    fn policies_hand_out_every_strip_once() {
        assert_eq!(
            drain(Dispatcher::new(4, SchedPolicy::Monotonic)),
            [0, 1, 2, 3]
        );
        assert_eq!(drain(Dispatcher::new(4, SchedPolicy::Lifo)), [3, 2, 1, 0]);
        let mut r = drain(Dispatcher::new(50, SchedPolicy::NonMonotonicRandom(3)));
        assert_ne!(r, (0..50).collect::<Vec<_>>());
        r.sort();
        assert_eq!(r, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn released_strips_come_back() {
        let mut d = Dispatcher::new(3, SchedPolicy::Lifo);
        assert_eq!(d.claim(), Some(2));
        assert_eq!(d.claim_predecessor(2), Some(0));
        d.release(2);
        assert_eq!(d.claim(), Some(1));
        assert_eq!(d.claim(), Some(2));
        assert_eq!(d.claim(), None);
    }

    #[test]
    fn parse_round_trip() {
        for p in [
            SchedPolicy::Monotonic,
            SchedPolicy::Lifo,
            SchedPolicy::NonMonotonicRandom(42),
        ] {
            assert_eq!(p.to_string().parse::<SchedPolicy>(), Ok(p));
        }
        assert!("rand:x".parse::<SchedPolicy>().is_err());
    }
}
