//! Speckle statistics: visibilities and derived state features, analytic
//! reference densities, and goodness-of-fit tests. The special-function
//! internals (gamma, Bessel K, incomplete gamma) are hand-implemented and
//! validated against independent quadrature oracles in the test suite.

mod features;
mod gof;
mod pdf;
pub mod quad;
pub mod special;

pub use features::{
    estimate_features, visibility, BootstrapConfig, Corrections, FeatureUncertainties,
    FeatureVector,
};
pub use gof::{goodness_of_fit, ks_distance_sorted, two_sample_ks, GofReport, GofStatistic};
pub use pdf::{
    pdf_accidental, pdf_coincidence_k, pdf_g2_neglog, pdf_g2_uniform, pdf_intensity_gamma,
    truncated_vc, AnalyticPdf, NegLogNormalization,
};
pub use special::{bessel_k, gamma_fn, gamma_p, gamma_q, kolmogorov_q, ln_gamma};

use thiserror::Error;

/// Errors from density evaluation, quadrature and estimation.
#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("{what}: {detail}")]
    Domain { what: &'static str, detail: String },
    #[error("{what}: overflow ({detail})")]
    Overflow { what: &'static str, detail: String },
    #[error("{what}: needs at least {needed} samples, got {got}")]
    NotEnoughSamples { what: &'static str, needed: usize, got: usize },
    #[error("{what}: degenerate input ({detail})")]
    Degenerate { what: &'static str, detail: String },
}
