//! Simulation and statistical analysis of quantum states of light measured
//! through random multimode channels.
//!
//! The pipeline mirrors a fiber-speckle measurement: a source prepares one or
//! two photons over a few input modes, a random transmission matrix scrambles
//! them onto two monitored outputs, and a coincidence counter records singles,
//! coincidences and the normalized correlation `g2 = C / R` for every random
//! setting. Ensembles of such records carry enough information to identify
//! the input state from intensity and coincidence speckle statistics alone.
//!
//! Modules:
//! - [`interferometer`]: random transmission-matrix ensembles (truncated Haar
//!   and the i.i.d. complex Gaussian approximation), spectral stacks and
//!   ensemble diagnostics.
//! - [`sources`]: photon-source models, joint spectral amplitudes and
//!   spectral-mode counting.
//! - [`measurement`]: two-photon interference kernels, the detection model
//!   (counting noise, dark counts, accidentals) and ensemble generation.
//! - [`analytics`]: speckle statistics (visibilities, mode counts, purity),
//!   analytic reference densities with Bessel-function internals, and
//!   goodness-of-fit machinery.
//! - [`classifier`]: nearest-centroid state identification in visibility
//!   feature space with physics-motivated decision rules.
//! - [`presets`]: pinned configurations used by the test suite and shipped
//!   examples.

pub mod analytics;
pub mod classifier;
pub mod interferometer;
pub mod measurement;
pub mod presets;
pub mod rng;
pub mod sources;

mod linalg;

pub use analytics::{
    estimate_features, goodness_of_fit, truncated_vc, visibility, AnalyticPdf, BootstrapConfig,
    Corrections, FeatureUncertainties, FeatureVector, GofReport, GofStatistic, NegLogNormalization,
};
pub use classifier::{
    classify, decision_rules, fit_model, ClassStats, ClassifierModel, LabeledFeatures, StateClass,
};
pub use interferometer::{
    ensemble_stats, sample_gaussian_tm, sample_haar_truncated_tm, sample_haar_unitary,
    sample_spectral_tm, truncate_unitary, unitarity_defect, EnsembleKind, EnsembleReport,
    InterferometerConfig, SpectralTransmission, TransmissionMatrix,
};
pub use measurement::{
    detect, ideal_outcome, noon_coincidence_kernel, pair_coincidence_kernel, run_ensemble,
    set_worker_threads, DetectorConfig, IdealOutcome, MeasurementRecord, NoiseMode, Realization,
    RecordSet,
};
pub use sources::{
    effective_spectral_modes, indistinguishability_from_delay, jsa_gaussian, make_source,
    spectral_pair_weights, DephasingMode, JointSpectralAmplitude, SourceModel, SourceSpec,
    SpectralPairWeight,
};
