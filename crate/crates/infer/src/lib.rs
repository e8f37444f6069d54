//! Robust Bayesian inference on top of amortized flow approximations:
//! bound-prior flow pairs, class-size estimation and marginal posterior
//! bound curves, the prior-data and summary-conflict checks, and
//! simulation-based calibration diagnostics.

pub mod amortized;
pub mod calibration;
pub mod conflict;
pub mod error;

pub use amortized::{
    estimate_r_tilde, fit_bound_flows, fit_bound_flows_from_datasets, marginal_bound_curves,
    posterior_event_bounds, BoundFlows, PosteriorClassEstimate, PriorClassSpec, RTildeEstimate,
};
pub use calibration::{run_sbc, simultaneous_band, PosteriorSampler, SbcConfig, SbcResult};
pub use conflict::{
    class_conflict_check, em_bound_check, split_bound_check, split_class_check, AbcConfig,
    BoundSide, CheckReport, SummarySplit,
};
pub use error::InferError;
