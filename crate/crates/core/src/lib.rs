//! Automated pathloss model discovery.
//!
//! The crate bundles four pieces that together turn a pathloss dataset into
//! candidate closed-form models:
//!
//! * [`plmodels`]: closed-form pathloss models, synthetic dataset generation
//!   and empirical CSV ingestion.
//! * [`expr`]: the pre-order token representation shared by both discovery
//!   engines, with evaluation, constant fitting and sampling constraints.
//! * [`kan`]: Kolmogorov-Arnold networks with B-spline edges, auto-symbolic
//!   edge matching and expression extraction.
//! * [`dsr`]: deep symbolic regression with risk-seeking, vanilla and
//!   priority-queue policy-gradient trainers.
//!
//! [`evalharness`] scores discovered expressions for accuracy and physical
//! validity, and [`cli`] wires everything into the `autopl` binary.

pub mod cli;
pub mod dsr;
pub mod error;
pub mod evalharness;
pub mod expr;
pub mod kan;
pub mod optim;
pub mod plmodels;

pub use error::{Error, Result};
