//! Decision engine for switching from an incumbent model to a challenger
//! trained on an expanded feature set.
//!
//! The crate values switching and discarding under discounting, solves the
//! stopping problem in closed form for power-law learning curves, builds
//! retraining schedules, simulates noisy gap paths and runs the sequential
//! stopping policies against full-foresight oracles.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod env;
pub mod error;
pub mod eval;
pub mod model;
pub mod oracle;
pub mod policies;
pub mod schedule;
pub mod value;

pub use error::{Error, Result};
pub use model::*;
pub use value::ValueContext;
