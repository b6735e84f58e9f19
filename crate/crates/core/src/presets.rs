//! Pinned configurations and end-to-end helpers shared by the test suite and
//! the CLI: detector operating points, reference channels, and the canonical
//! source roster behind the classifier's labels.

use thiserror::Error;

use crate::analytics::{estimate_features, AnalyticsError, BootstrapConfig, Corrections};
use crate::classifier::{LabeledFeatures, StateClass};
use crate::interferometer::{EnsembleKind, InterferometerConfig};
use crate::measurement::{run_ensemble, DetectorConfig, MeasurementError, NoiseMode};
use crate::rng::derive_seed;
use crate::sources::{make_source, DephasingMode, SourceError, SourceSpec};

/// Coincidence window shared by all presets, seconds.
pub const TAU_C: f64 = 2.5e-9;

/// Fiber mode count of the reference channel.
pub const REFERENCE_TOTAL_MODES: usize = 400;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

/// Idealized detector: no noise, no darks, and a pair rate strong enough
/// that the accidental floor is negligible next to the quantum coincidences
/// (`eta_s = 4e4`). Used wherever analytic distribution shapes are checked.
pub fn bright_noiseless() -> DetectorConfig {
    DetectorConfig {
        tau_c: TAU_C,
        integration_time: 1.0,
        singles_rate: 1.0e4,
        pair_rate: 1.0e4,
        dark1: 0.0,
        dark2: 0.0,
        noise: NoiseMode::Noiseless,
    }
}

/// Counting detector at rates typical of a real photon-pair experiment:
/// `eta_s = 2`, so quantum coincidences and accidentals compete, plus dark
/// counts and Poisson shot noise over a 15 s exposure.
pub fn lab_scale_poisson() -> DetectorConfig {
    DetectorConfig {
        tau_c: TAU_C,
        integration_time: 15.0,
        singles_rate: 1.2e7,
        pair_rate: 7.2e5,
        dark1: 200.0,
        dark2: 200.0,
        noise: NoiseMode::Poisson,
    }
}

/// Physical reference channel: two monitored ports of a 400-mode fiber.
pub fn haar_channel(input_modes: usize) -> InterferometerConfig {
    InterferometerConfig {
        total_modes: REFERENCE_TOTAL_MODES,
        output_modes: 2,
        input_modes,
        ensemble: EnsembleKind::HaarTruncated,
    }
}

/// Same geometry with i.i.d. Gaussian entries: the deep-truncation surrogate,
/// exact for the analytic mode-count identities.
pub fn gaussian_channel(input_modes: usize) -> InterferometerConfig {
    InterferometerConfig {
        total_modes: REFERENCE_TOTAL_MODES,
        output_modes: 2,
        input_modes,
        ensemble: EnsembleKind::ComplexGaussian,
    }
}

/// The source behind each classifier label.
///
/// Noon2 trains on the RmsResidual dephasing variant: the fully averaged one
/// is feature-degenerate with the distinguishable biphoton (identical g2
/// ratio law), which is physics, not a classifier defect.
pub fn class_source(class: StateClass) -> SourceSpec {
    match class {
        StateClass::SinglePhoton => SourceSpec::HeraldedSinglePhoton,
        StateClass::TwoPhotonFock => SourceSpec::TwoPhotonFock,
        StateClass::IndistBiphoton => SourceSpec::BiphotonPair {
            indistinguishability: 1.0,
        },
        StateClass::DistBiphoton => SourceSpec::BiphotonPair {
            indistinguishability: 0.0,
        },
        StateClass::Noon2 => SourceSpec::Noon2 {
            dephasing: DephasingMode::RmsResidual,
        },
        StateClass::Incoherent2Mode => SourceSpec::IncoherentMixture { dim: 2 },
        StateClass::IndistSpectralBiphoton => SourceSpec::SpectralBiphoton {
            indistinguishability: 1.0,
            n_bins: 7,
            pump_bw_nm: None,
            phase_matching_bw_nm: None,
        },
        StateClass::DistSpectralBiphoton => SourceSpec::SpectralBiphoton {
            indistinguishability: 0.0,
            n_bins: 7,
            pump_bw_nm: None,
            phase_matching_bw_nm: None,
        },
        StateClass::IncoherentDispersive => SourceSpec::IncoherentDispersive { dim: 2, n_bins: 10 },
    }
}

/// Simulate `n_ensembles` independent ensembles of one class and reduce each
/// to a labeled feature vector (no bootstrap; class spread comes from the
/// ensembles themselves). Seeds nest per class and ensemble, so the full
/// roster is reproducible from one master seed.
pub fn simulate_labeled_ensembles(
    class: StateClass,
    channel: &InterferometerConfig,
    detector: &DetectorConfig,
    n_ensembles: usize,
    n_settings: usize,
    master_seed: u64,
) -> Result<Vec<LabeledFeatures>, PipelineError> {
    let source = make_source(&class_source(class))?;
    let class_seed = derive_seed(master_seed, class as u64);
    let mut icfg = channel.clone();
    icfg.input_modes = icfg.input_modes.max(source.required_inputs());
    let mut out = Vec::with_capacity(n_ensembles);
    for e in 0..n_ensembles {
        let rs = run_ensemble(
            &source,
            &icfg,
            detector,
            n_settings,
            derive_seed(class_seed, e as u64),
        )?;
        let features = estimate_features(
            &rs.records,
            Corrections::default(),
            BootstrapConfig {
                resamples: 0,
                seed: 0,
            },
        )?;
        out.push(LabeledFeatures {
            label: class,
            features,
        });
    }
    Ok(out)
}
