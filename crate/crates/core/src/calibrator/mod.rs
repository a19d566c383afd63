//! Post-hoc calibrators: the wavelet-driven node-wise temperature MLP and the
//! global baselines it is compared against.

mod baselines;
mod data;
mod mlp;

pub use baselines::{
    ets_nll, fit_ets, fit_global_ts, fit_global_ts_in, golden_section_min, nll_at_temperature,
    project_simplex, EtsModel, TS_LOWER, TS_TOL, TS_UPPER,
};
pub use data::{
    read_labels, read_logits_csv, scale_logits, write_labels, write_logits_csv, LogitSet, Split,
};
pub use mlp::{
    eval_nll, loss_and_grad, softplus, temperatures, train_wats, CalibratorParams, DropoutMask,
    Optimizer, Selection, TrainConfig, TrainOutcome,
};
