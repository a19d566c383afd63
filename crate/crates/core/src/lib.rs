//! Wavelet-aware temperature scaling for graph node classifiers.
//!
//! Heat-kernel graph-wavelet features (Chebyshev-approximated) feed a small
//! MLP that predicts a positive temperature per node; logits are divided by
//! it. The crate also carries the evaluation machinery (binned ECE,
//! reliability and degree-binned statistics), global temperature scaling and
//! ensemble baselines, a synthetic generator with planted miscalibration, and
//! the file-level pipeline behind the `wats` command-line tool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrator;
pub mod error;
pub mod exec;
pub mod graph;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod wavelet;

pub use calibrator::{
    fit_ets, fit_global_ts, scale_logits, temperatures, train_wats, CalibratorParams, LogitSet,
    Split, TrainConfig,
};
pub use error::{Result, WatsError};
pub use exec::Exec;
pub use graph::{load_edge_list, rescale_laplacian, sym_normalized_laplacian, Graph, SparseOperator};
pub use metrics::{ece, nll, predict, CalibrationReport};
pub use wavelet::{wavelet_features, CoeffScheme, WaveletConfig, WaveletFeatures};
