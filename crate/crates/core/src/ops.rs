//! Arithmetic operation counting.
//!
//! Conventions: a real product is one multiplication or division of two reals
//! (a complex product is four, `|z|^2` is two, complex times real is two).
//! `exp` counts exponentials and hyperbolic tangents; `log2` counts logarithms;
//! `other` counts the remaining transcendental calls (`sqrt`, `acos`, `atan2`).
//! Additions, comparisons and sorting are not counted.
//!
//! Counting is compiled in with the `op-count` feature (on by default) and is
//! recorded per code block, not per instruction, so the overhead is a handful
//! of thread-local adds per call.

use std::ops::{Add, AddAssign};

use serde::Serialize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCount {
    pub products: u64,
    pub exp: u64,
    pub log2: u64,
    pub other: u64,
}

impl OpCount {
    pub const fn new(products: u64, exp: u64, log2: u64, other: u64) -> Self {
        Self {
            products,
            exp,
            log2,
            other,
        }
    }
}

impl Add for OpCount {
    type Output = OpCount;

    fn add(self, rhs: OpCount) -> OpCount {
        OpCount {
            products: self.products + rhs.products,
            exp: self.exp + rhs.exp,
            log2: self.log2 + rhs.log2,
            other: self.other + rhs.other,
        }
    }
}

impl AddAssign for OpCount {
    fn add_assign(&mut self, rhs: OpCount) {
        *self = *self + rhs;
    }
}

pub const ENABLED: bool = cfg!(feature = "op-count");

#[cfg(feature = "op-count")]
thread_local! {
    static COUNTER: std::cell::Cell<OpCount> = const { std::cell::Cell::new(OpCount::new(0, 0, 0, 0)) };
}

#[inline]
pub(crate) fn record(products: u64, exp: u64, log2: u64, other: u64) {
    #[cfg(feature = "op-count")]
    COUNTER.with(|c| c.set(c.get() + OpCount::new(products, exp, log2, other)));
    #[cfg(not(feature = "op-count"))]
    let _ = (products, exp, log2, other);
}

/// Runs `f` on the current thread and returns the operations it recorded.
/// Without the `op-count` feature the count is always zero.
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, OpCount) {
    #[cfg(feature = "op-count")]
    {
        let before = COUNTER.with(|c| c.replace(OpCount::default()));
        let out = f();
        let counted = COUNTER.with(|c| c.replace(before));
        COUNTER.with(|c| c.set(before + counted));
        (out, counted)
    }
    #[cfg(not(feature = "op-count"))]
    {
        (f(), OpCount::default())
    }
}
