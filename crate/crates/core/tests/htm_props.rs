use proptest::prelude::*;
use ste::htm::{AbortReason, CommitResult, Htm, HtmConfig, MemoryImage};
use ste::ir::{Program, VarDecl};

const CELLS: usize = 16;

fn memory() -> MemoryImage {
    let mut p = Program::default();
    p.globals.push(VarDecl::array("M", CELLS));
    MemoryImage::initial(&p)
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Read(usize),
    /// Stores the last value read plus a per-transaction tag.
    Write(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..CELLS).prop_map(Op::Read),
        (0..CELLS).prop_map(Op::Write)
    ]
}

fn tag(t: usize) -> i64 {
    100 * (t as i64 + 1)
}

/// Replays `txs[t]` for each committed `t` in commit order on plain memory.
fn replay(txs: &[Vec<Op>], order: &[usize]) -> Vec<i64> {
    let mut mem = vec![0; CELLS];
    for &t in order {
        let mut last = 0;
        for op in &txs[t] {
            match *op {
                Op::Read(a) => last = mem[a],
                Op::Write(a) => mem[a] = last + tag(t),
            }
        }
    }
    mem
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    /// Committed transactions are equivalent to running them one after the
    /// other in commit order; aborted ones leave no trace.
    #[test]
    fn commits_serialize_in_commit_order(
        txs in prop::collection::vec(prop::collection::vec(op(), 1..6), 2..5),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 40),
        granule in prop::sample::select(vec![8usize, 16, 64]),
    ) {
        let config = HtmConfig { granule_bytes: granule, ..HtmConfig::default() };
        let htm = Htm::new(&memory(), config, txs.len()).unwrap();
        let mut handles: Vec<_> = (0..txs.len()).map(|w| htm.tx_begin(w, 0).unwrap()).collect();
        let mut pc = vec![0usize; txs.len()];
        let mut last = vec![0i64; txs.len()];
        let mut finished = vec![false; txs.len()];
        let mut order = Vec::new();
        let mut picks = picks.into_iter();
        while finished.iter().any(|f| !f) {
            let open: Vec<usize> = (0..txs.len()).filter(|&t| !finished[t]).collect();
            let t = match picks.next() {
                Some(ix) => open[ix.index(open.len())],
                None => open[0],
            };
            let h = &mut handles[t];
            if pc[t] == txs[t].len() {
                finished[t] = true;
                if htm.tx_commit(h) == CommitResult::Committed {
                    order.push(t);
                }
                continue;
            }
            let r = match txs[t][pc[t]] {
                Op::Read(a) => htm.tx_read(h, a).map(|v| last[t] = v),
                Op::Write(a) => htm.tx_write(h, a, last[t] + tag(t)),
            };
            pc[t] += 1;
            if r.is_err() {
                prop_assert!(!h.is_active());
                finished[t] = true;
            }
        }
        prop_assert_eq!(htm.snapshot().cells().to_vec(), replay(&txs, &order));
    }

    /// A transaction may track exactly `cap` distinct granules.
    #[test]
    fn capacity_is_exact(cap in 1usize..12, touched in 1usize..16, write in any::<bool>()) {
        let config = if write {
            HtmConfig { granule_bytes: 8, ws_cap: cap, ..HtmConfig::default() }
        } else {
            HtmConfig { granule_bytes: 8, rs_cap: cap, ..HtmConfig::default() }
        };
        let htm = Htm::new(&memory(), config, 1).unwrap();
        let mut tx = htm.tx_begin(0, 0).unwrap();
        let mut failure = None;
        for a in 0..touched {
            let r = if write { htm.tx_write(&mut tx, a, 1) } else { htm.tx_read(&mut tx, a).map(drop) };
            if let Err(e) = r {
                failure = Some((a, e));
                break;
            }
        }
        if touched > cap {
            prop_assert_eq!(failure, Some((cap, AbortReason::Capacity)));
            prop_assert_eq!(htm.snapshot().cells().to_vec(), vec![0; CELLS]);
        } else {
            prop_assert_eq!(failure, None);
            prop_assert_eq!(htm.tx_commit(&mut tx), CommitResult::Committed);
            let ones = htm.snapshot().cells().iter().filter(|&&v| v == 1).count();
            prop_assert_eq!(ones, if write { touched } else { 0 });
        }
    }

    /// Repeated accesses to one granule count once against the capacity.
    #[test]
    fn revisits_are_free(cap in 1usize..4, rounds in 1usize..20) {
        let config = HtmConfig { granule_bytes: 64, rs_cap: cap, ws_cap: cap, ..HtmConfig::default() };
        let htm = Htm::new(&memory(), config, 1).unwrap();
        let mut tx = htm.tx_begin(0, 0).unwrap();
        for k in 0..rounds {
            prop_assert!(htm.tx_write(&mut tx, k % 8, k as i64).is_ok());
            prop_assert_eq!(htm.tx_read(&mut tx, k % 8), Ok(k as i64));
        }
        prop_assert_eq!(htm.tx_commit(&mut tx), CommitResult::Committed);
    }
}
