//! Per-setting optics and detection: ideal singles/coincidence quantities for
//! each source through one channel realization, the rate-level detector model,
//! and ensemble runs over many random settings.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::Poisson;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interferometer::{
    sample_gaussian_tm, sample_haar_truncated_tm, sample_spectral_tm, EnsembleKind,
    InterferometerConfig, InterferometerError, SpectralTransmission, TransmissionMatrix,
};
use crate::rng::{setting_rng, Substream};
use crate::sources::{DephasingMode, SourceModel};

type C64 = Complex64;

#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error("bad detector config: {0}")]
    BadConfig(String),
    #[error("mode selection: {0}")]
    Selection(String),
    #[error("source/channel mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Channel(#[from] InterferometerError),
}

/// Dimensionless per-setting optical quantities, before any detector physics:
/// fractional singles flux at the two monitored outputs and the true
/// pair-coincidence kernel. Zero `c_pair` for sources that never produce
/// correlated pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealOutcome {
    pub s1: f64,
    pub s2: f64,
    pub c_pair: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseMode {
    Noiseless,
    Poisson,
}

/// Rate-level detection model. Rates are counts per second throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// Coincidence window in seconds.
    pub tau_c: f64,
    /// Integration time per setting, seconds.
    pub integration_time: f64,
    /// Singles scale per input arm, counts/s.
    pub singles_rate: f64,
    /// True-pair scale, pairs/s.
    pub pair_rate: f64,
    pub dark1: f64,
    pub dark2: f64,
    pub noise: NoiseMode,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), MeasurementError> {
        let bad = |msg: String| Err(MeasurementError::BadConfig(msg));
        if !self.tau_c.is_finite() || self.tau_c <= 0.0 {
            return bad(format!("tau_c must be positive, got {}", self.tau_c));
        }
        if !self.integration_time.is_finite() || self.integration_time <= 0.0 {
            return bad(format!(
                "integration_time must be positive, got {}",
                self.integration_time
            ));
        }
        for (name, r) in [
            ("singles_rate", self.singles_rate),
            ("pair_rate", self.pair_rate),
            ("dark1", self.dark1),
            ("dark2", self.dark2),
        ] {
            if !r.is_finite() || r < 0.0 {
                return bad(format!("{name} must be a non-negative rate, got {r}"));
            }
        }
        Ok(())
    }

    /// Brightness diagnostic `B_p / (tau_c B^2)`: the quantum coincidence
    /// scale in units of the accidental floor.
    pub fn eta_s(&self) -> f64 {
        self.pair_rate / (self.tau_c * self.singles_rate * self.singles_rate)
    }
}

/// One detected setting. `g2` is absent when the accidental rate vanished
/// (nothing to normalize by), never silently zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementRecord {
    pub setting_index: u64,
    pub i1: f64,
    pub i2: f64,
    pub c: f64,
    pub r: f64,
    pub g2: Option<f64>,
}

/// Ensemble of records plus everything needed to regenerate it.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSet {
    pub records: Vec<MeasurementRecord>,
    pub source: SourceModel,
    pub interferometer: InterferometerConfig,
    pub detector: DetectorConfig,
    pub master_seed: u64,
}

impl RecordSet {
    pub fn eta_s(&self) -> f64 {
        self.detector.eta_s()
    }
}

/// One channel realization: a single block for monochromatic sources, a stack
/// of per-bin blocks for spectrally resolved ones.
#[derive(Debug, Clone, PartialEq)]
pub enum Realization {
    Mono(TransmissionMatrix),
    Spectral(SpectralTransmission),
}

fn check_modes(tm: &TransmissionMatrix, a: usize, b: usize) -> Result<(), MeasurementError> {
    if tm.outputs() < 2 {
        return Err(MeasurementError::Selection(format!(
            "need at least 2 output rows, matrix has {}",
            tm.outputs()
        )));
    }
    if a == b || a >= tm.inputs() || b >= tm.inputs() {
        return Err(MeasurementError::Selection(format!(
            "mode pair ({a}, {b}) invalid for {} input columns",
            tm.inputs()
        )));
    }
    Ok(())
}

/// Interference of the two exchange paths `p1`, `p2`, with the cross term
/// weighted by the two-photon overlap `x`.
fn exchange_kernel(p1: C64, p2: C64, x: f64) -> f64 {
    p1.norm_sqr() + p2.norm_sqr() + 2.0 * x * (p1 * p2.conj()).re
}

/// Two-fold coincidence kernel for a photon pair entering columns `a`, `b`.
/// `x = 1` gives `|t1a t2b + t1b t2a|^2` (full two-photon interference),
/// `x = 0` the incoherent sum of both exchange paths.
pub fn pair_coincidence_kernel(
    tm: &TransmissionMatrix,
    a: usize,
    b: usize,
    x: f64,
) -> Result<f64, MeasurementError> {
    check_modes(tm, a, b)?;
    let t = &tm.entries;
    Ok(exchange_kernel(
        t[[0, a]] * t[[1, b]],
        t[[0, b]] * t[[1, a]],
        x,
    ))
}

/// Coincidence kernel for a dephased two-photon N00N state across columns
/// `a`, `b`. `FullAverage` is the phase-averaged rate; `RmsResidual` keeps a
/// fringe at rms contrast with the supplied per-setting phase.
pub fn noon_coincidence_kernel(
    tm: &TransmissionMatrix,
    a: usize,
    b: usize,
    dephasing: DephasingMode,
    psi: f64,
) -> Result<f64, MeasurementError> {
    check_modes(tm, a, b)?;
    let t = &tm.entries;
    let amp_a = (t[[0, a]] * t[[1, a]]).norm();
    let amp_b = (t[[0, b]] * t[[1, b]]).norm();
    let base = amp_a * amp_a + amp_b * amp_b;
    Ok(match dephasing {
        DephasingMode::FullAverage => base,
        DephasingMode::RmsResidual => {
            (base + std::f64::consts::SQRT_2 * amp_a * amp_b * psi.cos()).max(0.0)
        }
    })
}

fn row_power(tm: &TransmissionMatrix, row: usize, cols: std::ops::Range<usize>) -> f64 {
    cols.map(|k| tm.entries[[row, k]].norm_sqr()).sum()
}

fn require_inputs(have: usize, need: usize) -> Result<(), MeasurementError> {
    if have < need {
        return Err(MeasurementError::Mismatch(format!(
            "source needs {need} input columns, channel provides {have}"
        )));
    }
    Ok(())
}

fn mono<'a>(r: &'a Realization, source: &SourceModel) -> Result<&'a TransmissionMatrix, MeasurementError> {
    match r {
        Realization::Mono(tm) => Ok(tm),
        Realization::Spectral(_) => Err(MeasurementError::Mismatch(format!(
            "{source:?} is monochromatic but got a spectral realization"
        ))),
    }
}

fn spectral(r: &Realization, n_bins: usize) -> Result<&SpectralTransmission, MeasurementError> {
    match r {
        Realization::Spectral(st) if st.bins.len() == n_bins => Ok(st),
        Realization::Spectral(st) => Err(MeasurementError::Mismatch(format!(
            "source resolves {n_bins} spectral bins, realization carries {}",
            st.bins.len()
        ))),
        Realization::Mono(_) => Err(MeasurementError::Mismatch(
            "spectrally resolved source needs a spectral realization".into(),
        )),
    }
}

/// Ideal singles and coincidence quantities for one source through one
/// channel realization. The rng feeds only per-setting source randomness
/// (the residual N00N phase); everything else is deterministic.
pub fn ideal_outcome<R: Rng + ?Sized>(
    source: &SourceModel,
    realization: &Realization,
    rng: &mut R,
) -> Result<IdealOutcome, MeasurementError> {
    match source {
        SourceModel::HeraldedSinglePhoton => {
            let tm = mono(realization, source)?;
            require_inputs(tm.inputs(), 1)?;
            check_rows(tm)?;
            Ok(IdealOutcome {
                s1: tm.entries[[0, 0]].norm_sqr(),
                s2: tm.entries[[1, 0]].norm_sqr(),
                c_pair: 0.0,
            })
        }
        SourceModel::TwoPhotonFock => {
            let tm = mono(realization, source)?;
            require_inputs(tm.inputs(), 1)?;
            check_rows(tm)?;
            let p1 = tm.entries[[0, 0]].norm_sqr();
            let p2 = tm.entries[[1, 0]].norm_sqr();
            Ok(IdealOutcome {
                s1: 2.0 * p1,
                s2: 2.0 * p2,
                c_pair: 2.0 * p1 * p2,
            })
        }
        SourceModel::BiphotonPair {
            indistinguishability,
        } => {
            let tm = mono(realization, source)?;
            require_inputs(tm.inputs(), 2)?;
            let c_pair = pair_coincidence_kernel(tm, 0, 1, *indistinguishability)?;
            Ok(IdealOutcome {
                s1: row_power(tm, 0, 0..2),
                s2: row_power(tm, 1, 0..2),
                c_pair,
            })
        }
        SourceModel::Noon2 { dephasing } => {
            let tm = mono(realization, source)?;
            require_inputs(tm.inputs(), 2)?;
            let psi = match dephasing {
                DephasingMode::FullAverage => 0.0,
                DephasingMode::RmsResidual => {
                    rng.random::<f64>() * 2.0 * std::f64::consts::PI
                }
            };
            let c_pair = noon_coincidence_kernel(tm, 0, 1, *dephasing, psi)?;
            Ok(IdealOutcome {
                s1: row_power(tm, 0, 0..2),
                s2: row_power(tm, 1, 0..2),
                c_pair,
            })
        }
        SourceModel::IncoherentMixture { dim } => {
            let tm = mono(realization, source)?;
            require_inputs(tm.inputs(), *dim)?;
            check_rows(tm)?;
            let inv = 1.0 / *dim as f64;
            Ok(IdealOutcome {
                s1: inv * row_power(tm, 0, 0..*dim),
                s2: inv * row_power(tm, 1, 0..*dim),
                c_pair: 0.0,
            })
        }
        SourceModel::MixedBiphoton { pair_dim } => {
            let tm = mono(realization, source)?;
            require_inputs(tm.inputs(), 2 * pair_dim)?;
            let inv = 1.0 / *pair_dim as f64;
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            let mut c_pair = 0.0;
            for k in 0..*pair_dim {
                let (a, b) = (2 * k, 2 * k + 1);
                s1 += row_power(tm, 0, a..b + 1);
                s2 += row_power(tm, 1, a..b + 1);
                c_pair += pair_coincidence_kernel(tm, a, b, 1.0)?;
            }
            Ok(IdealOutcome {
                s1: inv * s1,
                s2: inv * s2,
                c_pair: inv * c_pair,
            })
        }
        SourceModel::SpectralBiphoton {
            indistinguishability,
            weights,
            n_bins,
        } => {
            let st = spectral(realization, *n_bins)?;
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            let mut c_pair = 0.0;
            for cell in weights {
                let ts = &st.bins[cell.signal_bin];
                let ti = &st.bins[cell.idler_bin];
                require_inputs(ts.inputs().min(ti.inputs()), 2)?;
                check_rows(ts)?;
                check_rows(ti)?;
                let t1a = ts.entries[[0, 0]];
                let t2a = ts.entries[[1, 0]];
                let t1b = ti.entries[[0, 1]];
                let t2b = ti.entries[[1, 1]];
                s1 += cell.weight * (t1a.norm_sqr() + t1b.norm_sqr());
                s2 += cell.weight * (t2a.norm_sqr() + t2b.norm_sqr());
                c_pair += cell.weight
                    * exchange_kernel(t1a * t2b, t1b * t2a, *indistinguishability);
            }
            Ok(IdealOutcome { s1, s2, c_pair })
        }
        SourceModel::IncoherentDispersive { dim, n_bins } => {
            let st = spectral(realization, *n_bins)?;
            let inv = 1.0 / (*dim as f64 * *n_bins as f64);
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for tm in &st.bins {
                require_inputs(tm.inputs(), *dim)?;
                check_rows(tm)?;
                s1 += row_power(tm, 0, 0..*dim);
                s2 += row_power(tm, 1, 0..*dim);
            }
            Ok(IdealOutcome {
                s1: inv * s1,
                s2: inv * s2,
                c_pair: 0.0,
            })
        }
    }
}

fn check_rows(tm: &TransmissionMatrix) -> Result<(), MeasurementError> {
    if tm.outputs() < 2 {
        return Err(MeasurementError::Selection(format!(
            "need at least 2 output rows, matrix has {}",
            tm.outputs()
        )));
    }
    Ok(())
}

fn poisson_counts<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    rng.sample(Poisson::new(mean).expect("finite positive mean"))
}

/// Apply the detector model to one ideal outcome. Singles rates pick up dark
/// counts, coincidences the accidental floor `tau_c I1 I2`; Poisson mode then
/// resolves all three rates from counts over the integration time.
pub fn detect<R: Rng + ?Sized>(
    ideal: &IdealOutcome,
    cfg: &DetectorConfig,
    setting_index: u64,
    rng: &mut R,
) -> MeasurementRecord {
    let lambda1 = cfg.singles_rate * ideal.s1 + cfg.dark1;
    let lambda2 = cfg.singles_rate * ideal.s2 + cfg.dark2;
    let mu = cfg.pair_rate * ideal.c_pair + cfg.tau_c * lambda1 * lambda2;
    let (i1, i2, c) = match cfg.noise {
        NoiseMode::Noiseless => (lambda1, lambda2, mu),
        NoiseMode::Poisson => {
            let t = cfg.integration_time;
            (
                poisson_counts(lambda1 * t, rng) / t,
                poisson_counts(lambda2 * t, rng) / t,
                poisson_counts(mu * t, rng) / t,
            )
        }
    };
    let r = cfg.tau_c * i1 * i2;
    let g2 = if r > 0.0 { Some(c / r) } else { None };
    MeasurementRecord {
        setting_index,
        i1,
        i2,
        c,
        r,
        g2,
    }
}

fn sample_realization<R: Rng + ?Sized>(
    source: &SourceModel,
    icfg: &InterferometerConfig,
    rng: &mut R,
) -> Result<Realization, MeasurementError> {
    let bins = source.n_spectral_bins();
    if bins > 1 {
        Ok(Realization::Spectral(sample_spectral_tm(icfg, bins, rng)?))
    } else {
        Ok(Realization::Mono(match icfg.ensemble {
            EnsembleKind::HaarTruncated => sample_haar_truncated_tm(icfg, rng)?,
            EnsembleKind::ComplexGaussian => sample_gaussian_tm(icfg, rng)?,
        }))
    }
}

/// Caps the worker pool shared by [`run_ensemble`] and the bootstrap.
/// Must run before the first parallel call in the process; afterwards the
/// pool is frozen and this returns an error.
pub fn set_worker_threads(n: usize) -> Result<(), MeasurementError> {
    if n == 0 {
        return Err(MeasurementError::BadConfig(
            "worker count must be at least 1".into(),
        ));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| MeasurementError::BadConfig(format!("worker pool: {e}")))
}

/// Run `n` independent random settings. Each setting derives its own rng
/// substreams from `master_seed`, so the result is reproducible bit for bit
/// and independent of the parallel schedule.
pub fn run_ensemble(
    source: &SourceModel,
    icfg: &InterferometerConfig,
    dcfg: &DetectorConfig,
    n: usize,
    master_seed: u64,
) -> Result<RecordSet, MeasurementError> {
    if n == 0 {
        return Err(MeasurementError::BadConfig(
            "ensemble size must be at least 1".into(),
        ));
    }
    icfg.validate()?;
    dcfg.validate()?;
    if icfg.output_modes < 2 {
        return Err(MeasurementError::Mismatch(format!(
            "two detectors need output_modes >= 2, got {}",
            icfg.output_modes
        )));
    }
    require_inputs(icfg.input_modes, source.required_inputs())?;

    let records = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut mrng = setting_rng(master_seed, i, Substream::MatrixBin(0));
            let realization = sample_realization(source, icfg, &mut mrng)?;
            let mut srng = setting_rng(master_seed, i, Substream::SourcePhase);
            let ideal = ideal_outcome(source, &realization, &mut srng)?;
            let mut drng = setting_rng(master_seed, i, Substream::Detector);
            Ok(detect(&ideal, dcfg, i, &mut drng))
        })
        .collect::<Result<Vec<_>, MeasurementError>>()?;

    Ok(RecordSet {
        records,
        source: source.clone(),
        interferometer: icfg.clone(),
        detector: *dcfg,
        master_seed,
    })
}
