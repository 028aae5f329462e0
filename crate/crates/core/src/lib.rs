//! Exact scenario-tree solvers for backward SDEs and reflected backward SDEs
//! in filtrations that are not quasi left-continuous, with a harness that
//! checks a priori estimates numerically.

pub mod bsde;
pub mod config;
pub mod constants;
pub mod counterexample;
pub mod error;
pub mod estimates;
pub mod experiments;
pub mod family;
pub mod generator;
pub mod martingale;
pub mod norms;
pub mod process;
pub mod reflected;
pub mod report;
pub mod runner;
pub mod seed;
pub mod stopping;
pub mod suites;
pub mod tree;

pub use error::{Error, Result};
