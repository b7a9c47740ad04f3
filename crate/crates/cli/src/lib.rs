//! Command-line driver for the reducibility pipeline: configuration, presets,
//! stage orchestration, sweeps and reproducible artifacts.

// Negated comparisons double as NaN rejection; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod artifacts;
pub mod config;
pub mod exit;
pub mod pipeline;
pub mod presets;
pub mod sweep;
