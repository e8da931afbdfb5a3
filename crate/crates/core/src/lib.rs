// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod bench;
pub mod datasets;
pub mod error;
pub mod linalg;
pub mod nn;
pub mod privacy;
pub mod projection;
pub mod protocol;
pub mod rng;

pub use error::{Error, Result};
