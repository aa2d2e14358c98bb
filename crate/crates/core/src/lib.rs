//! Multivariable Mendelian randomization with measurement error on the
//! exposures.
//!
//! The crate provides an inverse-variance-weighted estimator, a
//! measurement-error-aware maximum likelihood estimator with sandwich
//! standard errors, closed-form predictions of IVW bias for two exposures,
//! proportion-mediated estimation, and a simulation engine for evaluating
//! the estimators.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bias;
pub mod data;
pub mod error;
pub mod ivw;
pub mod linalg;
pub mod mediation;
pub mod mle;
pub mod sim;
pub mod stats;

pub use bias::{estimate_moments, predict_ivw_bias, BiasDiagnostics, Centering};
pub use data::{apply_trait_correlation, validate, CausalEstimate, Method, SummaryDataset, ValidationReport};
pub use error::{Error, Result};
pub use ivw::{fit_ivw, fit_ivw_univariable, IvwOptions};
pub use mediation::{delta_method_se, proportion_mediated, MediationResult};
pub use mle::{fit_mle, sandwich_variance, MleOptions};
