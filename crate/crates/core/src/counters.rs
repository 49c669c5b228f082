//! Per-thread operation counters used for complexity bookkeeping.
//!
//! A solver run executes on a single thread, so a snapshot before and after the
//! run gives the work attributable to it even when runs execute concurrently.

use std::cell::Cell;

thread_local! {
    static FACTORIZATIONS: Cell<u64> = const { Cell::new(0) };
    static MATMULS: Cell<u64> = const { Cell::new(0) };
    static BISECTIONS: Cell<u64> = const { Cell::new(0) };
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    /// Hermitian positive definite factorizations (each backs one or more solves).
    pub hpd_solves: u64,
    pub matmuls: u64,
    /// Bisection searches on the power multiplier.
    pub bisections: u64,
}

impl OpCounts {
    pub fn since(self, earlier: OpCounts) -> OpCounts {
        OpCounts {
            hpd_solves: self.hpd_solves - earlier.hpd_solves,
            matmuls: self.matmuls - earlier.matmuls,
            bisections: self.bisections - earlier.bisections,
        }
    }
}

pub fn snapshot() -> OpCounts {
    OpCounts {
        hpd_solves: FACTORIZATIONS.with(Cell::get),
        matmuls: MATMULS.with(Cell::get),
        bisections: BISECTIONS.with(Cell::get),
    }
}

pub(crate) fn record_factorization() {
    FACTORIZATIONS.with(|c| c.set(c.get() + 1));
}

pub(crate) fn record_matmul() {
    MATMULS.with(|c| c.set(c.get() + 1));
}

pub(crate) fn record_bisection() {
    BISECTIONS.with(|c| c.set(c.get() + 1));
}
