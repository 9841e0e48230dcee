#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod constellation;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod features;
pub mod geometry;
pub mod jensen;
pub mod mlp;
pub mod ops;
pub mod oracle;
pub mod rng;
pub mod trainer;
