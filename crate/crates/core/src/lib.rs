// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod ellipsoid;
pub mod example;
pub mod numerics;
pub mod quantization;
pub mod reproduce;
pub mod signals;
pub mod simulator;
