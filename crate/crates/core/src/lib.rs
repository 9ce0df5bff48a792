//! Video-aware routing and spectrum assignment for elastic optical networks.
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod estimator;
pub mod instances;
pub mod qot;
pub mod rsa;
pub mod sim;
pub mod spectrum;
pub mod topology;
pub mod video;
