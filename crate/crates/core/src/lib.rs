//! Optimal limit-order placement for a market maker facing random linear
//! demand: parameter model, backward-induction solver, Monte-Carlo simulator,
//! order-book replay, calibration and backtesting.

// `!(x > 0.0)` style checks reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod error;
pub mod estimation;
pub mod lob;
pub mod model;
pub mod simulator;
pub mod solver;

pub use error::{BacktestError, EstimationError, LobError, ModelError, SimError, SolverError};
