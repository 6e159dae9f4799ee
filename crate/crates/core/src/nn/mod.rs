//! Inference kernels over [`Tensor`](crate::Tensor) values.
//!
//! Every kernel is a pure function. Kernels that perform multiply-accumulates
//! (convolution and fully connected layers) return the number they performed
//! as a [`MacCount`]; bias additions are not part of that count.

mod activation;
mod batchnorm;
mod conv;
mod linear;
mod pool;

use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul};

pub use activation::{activation, Activation};
pub use batchnorm::fold_batchnorm;
pub use conv::{conv2d, ConvSpec};
pub use linear::linear;
pub use pool::{global_avg_pool, max_pool2d};

/// Number of multiply-accumulate operations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacCount(pub u64);

impl MacCount {
    pub const ZERO: MacCount = MacCount(0);

    pub fn get(self) -> u64 {
        self.0
    }
}

impl Add for MacCount {
    type Output = MacCount;

    fn add(self, rhs: MacCount) -> MacCount {
        MacCount(self.0 + rhs.0)
    }
}

impl AddAssign for MacCount {
    fn add_assign(&mut self, rhs: MacCount) {
        self.0 += rhs.0;
    }
}

impl Mul<u64> for MacCount {
    type Output = MacCount;

    fn mul(self, rhs: u64) -> MacCount {
        MacCount(self.0 * rhs)
    }
}

impl Sum for MacCount {
    fn sum<I: Iterator<Item = MacCount>>(iter: I) -> MacCount {
        iter.fold(MacCount::ZERO, Add::add)
    }
}

impl std::fmt::Display for MacCount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}
