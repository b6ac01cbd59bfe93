//! Prescribed-time distributed convex optimization: generator, tracking
//! controllers and a closed-loop simulation engine.

// Negated float comparisons deliberately reject NaN along with out-of-range
// values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain_ctrl;
pub mod costs;
pub mod error;
pub mod generator;
pub mod graph;
pub mod linalg;
pub mod manifest;
pub mod monitors;
pub mod scenario;
pub mod sim_engine;
pub mod strictfb_ctrl;
pub mod svg;
pub mod timegain;

pub use error::{Error, Result};
