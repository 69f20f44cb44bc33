#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod benchmarks;
pub mod config;
pub mod controller;
pub mod curve;
pub mod dispatch;
pub mod error;
pub mod follower;
pub mod forecast;
pub mod metrics;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod stackelberg;
pub mod sweep;
pub mod types;

pub use error::{Error, Result};
