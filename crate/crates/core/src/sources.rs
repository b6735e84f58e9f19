//! Photon-pair source models and their spectral structure.
//!
//! `SourceSpec` is the config-facing description; `make_source` validates it
//! and precomputes whatever the measurement loop needs (for spectrally
//! resolved sources, the per-bin pair weights).

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::hermitian_eigenvalues;

/// Pump envelope width used when a Gaussian joint spectrum is requested
/// without explicit widths.
pub const DEFAULT_PUMP_BW_NM: f64 = 0.1;
/// Phase-matching width partner to [`DEFAULT_PUMP_BW_NM`].
pub const DEFAULT_PM_BW_NM: f64 = 1.4;
/// Grid resolution for the discretized joint spectrum.
pub const DEFAULT_JSA_GRID: usize = 128;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("source field `{field}`: {detail}")]
    BadField { field: &'static str, detail: String },
}

fn bad(field: &'static str, detail: String) -> SourceError {
    SourceError::BadField { field, detail }
}

/// How a two-photon N00N state loses its phase reference.
///
/// `FullAverage` integrates the interference term away entirely;
/// `RmsResidual` keeps a residual fringe at the root-mean-square contrast,
/// with a phase that is random per channel realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DephasingMode {
    FullAverage,
    RmsResidual,
}

/// Declarative source description, as it appears in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SourceSpec {
    /// One photon in one input mode, heralded by a partner that never enters
    /// the fiber.
    HeraldedSinglePhoton,
    /// Two photons in the same input mode.
    TwoPhotonFock,
    /// Photon pair in two input modes with tunable overlap of the two
    /// exchange amplitudes.
    BiphotonPair { indistinguishability: f64 },
    /// (|2,0> + |0,2>)/sqrt(2) across two input modes, dephased.
    Noon2 { dephasing: DephasingMode },
    /// Statistical mixture of `dim` mutually incoherent single-photon
    /// channels.
    IncoherentMixture { dim: usize },
    /// Statistical mixture of `pair_dim` biphoton pairs, each pair fully
    /// indistinguishable within itself.
    MixedBiphoton { pair_dim: usize },
    /// Photon pair whose signal and idler are spread over `n_bins` spectral
    /// bins. With no widths given the bins pair up maximally anticorrelated
    /// with uniform weight; setting either width switches to a binned
    /// Gaussian joint spectrum.
    SpectralBiphoton {
        indistinguishability: f64,
        n_bins: usize,
        pump_bw_nm: Option<f64>,
        phase_matching_bw_nm: Option<f64>,
    },
    /// Incoherent `dim`-channel mixture additionally spread uniformly over
    /// `n_bins` independent spectral bins.
    IncoherentDispersive { dim: usize, n_bins: usize },
}

/// Weight of one (signal bin, idler bin) cell of a discretized joint
/// spectrum. Weights over all cells sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPairWeight {
    pub signal_bin: usize,
    pub idler_bin: usize,
    pub weight: f64,
}

/// Validated, ready-to-simulate source.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceModel {
    HeraldedSinglePhoton,
    TwoPhotonFock,
    BiphotonPair {
        indistinguishability: f64,
    },
    Noon2 {
        dephasing: DephasingMode,
    },
    IncoherentMixture {
        dim: usize,
    },
    MixedBiphoton {
        pair_dim: usize,
    },
    SpectralBiphoton {
        indistinguishability: f64,
        n_bins: usize,
        weights: Vec<SpectralPairWeight>,
    },
    IncoherentDispersive {
        dim: usize,
        n_bins: usize,
    },
}

impl SourceModel {
    /// How many illuminated input columns the transmission block must carry.
    pub fn required_inputs(&self) -> usize {
        match self {
            SourceModel::HeraldedSinglePhoton | SourceModel::TwoPhotonFock => 1,
            SourceModel::BiphotonPair { .. }
            | SourceModel::Noon2 { .. }
            | SourceModel::SpectralBiphoton { .. } => 2,
            SourceModel::IncoherentMixture { dim } => *dim,
            SourceModel::MixedBiphoton { pair_dim } => 2 * pair_dim,
            SourceModel::IncoherentDispersive { dim, .. } => *dim,
        }
    }

    /// Spectral bins the channel must be resolved into; 1 for monochromatic
    /// sources.
    pub fn n_spectral_bins(&self) -> usize {
        match self {
            SourceModel::SpectralBiphoton { n_bins, .. }
            | SourceModel::IncoherentDispersive { n_bins, .. } => *n_bins,
            _ => 1,
        }
    }

    /// True when each realization consumes one random phase (residual N00N
    /// fringe).
    pub fn needs_phase(&self) -> bool {
        matches!(
            self,
            SourceModel::Noon2 {
                dephasing: DephasingMode::RmsResidual
            }
        )
    }
}

fn check_unit_interval(field: &'static str, x: f64) -> Result<(), SourceError> {
    if !x.is_finite() || !(0.0..=1.0).contains(&x) {
        return Err(bad(field, format!("must lie in [0, 1], got {x}")));
    }
    Ok(())
}

pub fn make_source(spec: &SourceSpec) -> Result<SourceModel, SourceError> {
    Ok(match spec {
        SourceSpec::HeraldedSinglePhoton => SourceModel::HeraldedSinglePhoton,
        SourceSpec::TwoPhotonFock => SourceModel::TwoPhotonFock,
        SourceSpec::BiphotonPair {
            indistinguishability,
        } => {
            check_unit_interval("indistinguishability", *indistinguishability)?;
            SourceModel::BiphotonPair {
                indistinguishability: *indistinguishability,
            }
        }
        SourceSpec::Noon2 { dephasing } => SourceModel::Noon2 {
            dephasing: *dephasing,
        },
        SourceSpec::IncoherentMixture { dim } => {
            if *dim == 0 {
                return Err(bad("dim", "must be at least 1".into()));
            }
            SourceModel::IncoherentMixture { dim: *dim }
        }
        SourceSpec::MixedBiphoton { pair_dim } => {
            if *pair_dim == 0 {
                return Err(bad("pair_dim", "must be at least 1".into()));
            }
            SourceModel::MixedBiphoton {
                pair_dim: *pair_dim,
            }
        }
        SourceSpec::SpectralBiphoton {
            indistinguishability,
            n_bins,
            pump_bw_nm,
            phase_matching_bw_nm,
        } => {
            check_unit_interval("indistinguishability", *indistinguishability)?;
            if *n_bins == 0 {
                return Err(bad("n_bins", "must be at least 1".into()));
            }
            let weights = if pump_bw_nm.is_none() && phase_matching_bw_nm.is_none() {
                spectral_pair_weights(None, *n_bins)?
            } else {
                let jsa = jsa_gaussian(
                    pump_bw_nm.unwrap_or(DEFAULT_PUMP_BW_NM),
                    phase_matching_bw_nm.unwrap_or(DEFAULT_PM_BW_NM),
                    DEFAULT_JSA_GRID,
                )?;
                spectral_pair_weights(Some(&jsa), *n_bins)?
            };
            SourceModel::SpectralBiphoton {
                indistinguishability: *indistinguishability,
                n_bins: *n_bins,
                weights,
            }
        }
        SourceSpec::IncoherentDispersive { dim, n_bins } => {
            if *dim == 0 {
                return Err(bad("dim", "must be at least 1".into()));
            }
            if *n_bins == 0 {
                return Err(bad("n_bins", "must be at least 1".into()));
            }
            SourceModel::IncoherentDispersive {
                dim: *dim,
                n_bins: *n_bins,
            }
        }
    })
}

/// Two-photon overlap surviving a relative delay, for photons with a
/// Gaussian coherence envelope of the given width (same units as the delay).
pub fn indistinguishability_from_delay(
    delay: f64,
    coherence_scale: f64,
) -> Result<f64, SourceError> {
    if !delay.is_finite() {
        return Err(bad("delay", format!("must be finite, got {delay}")));
    }
    if !coherence_scale.is_finite() || coherence_scale <= 0.0 {
        return Err(bad(
            "coherence_scale",
            format!("must be positive, got {coherence_scale}"),
        ));
    }
    let r = delay / coherence_scale;
    Ok((-r * r).exp())
}

/// Discretized joint spectral amplitude on a square detuning grid, with
/// `sum amp^2 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpectralAmplitude {
    /// Grid cell centers, as signal/idler detuning from band center in nm.
    pub detunings_nm: Vec<f64>,
    /// Real amplitude at (signal, idler) grid cells.
    pub amp: Array2<f64>,
    pub pump_bw_nm: f64,
    pub phase_matching_bw_nm: f64,
}

impl JointSpectralAmplitude {
    pub fn grid(&self) -> usize {
        self.detunings_nm.len()
    }

    /// Pearson correlation of signal and idler detuning under the joint
    /// intensity. Narrow pumps force anticorrelation (energy conservation),
    /// narrow phase matching forces correlation.
    pub fn correlation(&self) -> f64 {
        let w2 = &self.amp * &self.amp;
        let (mut mx, mut my) = (0.0, 0.0);
        for ((i, j), w) in w2.indexed_iter() {
            mx += w * self.detunings_nm[i];
            my += w * self.detunings_nm[j];
        }
        let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
        for ((i, j), w) in w2.indexed_iter() {
            let dx = self.detunings_nm[i] - mx;
            let dy = self.detunings_nm[j] - my;
            vx += w * dx * dx;
            vy += w * dy * dy;
            cxy += w * dx * dy;
        }
        cxy / (vx * vy).sqrt()
    }

    /// Normalized Schmidt coefficients (squared singular values of the
    /// amplitude grid), descending.
    pub fn schmidt_spectrum(&self) -> Vec<f64> {
        let n = self.grid();
        let gram = self.amp.t().dot(&self.amp);
        let gc = Array2::from_shape_fn((n, n), |(i, j)| Complex64::new(gram[[i, j]], 0.0));
        let mut ev = hermitian_eigenvalues(&gc);
        for v in &mut ev {
            *v = v.max(0.0);
        }
        let total: f64 = ev.iter().sum();
        for v in &mut ev {
            *v /= total;
        }
        ev
    }
}

/// Gaussian pump-times-phase-matching joint spectrum,
/// `amp ~ exp(-(x+y)^2 / (2 sp^2)) * exp(-(x-y)^2 / (2 spm^2))`,
/// sampled on a `grid x grid` square covering three marginal widths.
pub fn jsa_gaussian(
    pump_bw_nm: f64,
    phase_matching_bw_nm: f64,
    grid: usize,
) -> Result<JointSpectralAmplitude, SourceError> {
    if !pump_bw_nm.is_finite() || pump_bw_nm <= 0.0 {
        return Err(bad(
            "pump_bw_nm",
            format!("must be positive, got {pump_bw_nm}"),
        ));
    }
    if !phase_matching_bw_nm.is_finite() || phase_matching_bw_nm <= 0.0 {
        return Err(bad(
            "phase_matching_bw_nm",
            format!("must be positive, got {phase_matching_bw_nm}"),
        ));
    }
    if grid < 8 {
        return Err(bad("grid", format!("must be at least 8, got {grid}")));
    }
    let sp2 = pump_bw_nm * pump_bw_nm;
    let spm2 = phase_matching_bw_nm * phase_matching_bw_nm;
    // Marginal variance of either photon's detuning.
    let half_span = 3.0 * ((sp2 + spm2) / 8.0).sqrt();
    let detunings: Vec<f64> = (0..grid)
        .map(|i| half_span * (2.0 * (i as f64 + 0.5) / grid as f64 - 1.0))
        .collect();
    let mut amp = Array2::from_shape_fn((grid, grid), |(i, j)| {
        let (x, y) = (detunings[i], detunings[j]);
        let s = x + y;
        let d = x - y;
        (-s * s / (2.0 * sp2) - d * d / (2.0 * spm2)).exp()
    });
    let norm = amp.iter().map(|a| a * a).sum::<f64>().sqrt();
    amp.mapv_inplace(|a| a / norm);
    Ok(JointSpectralAmplitude {
        detunings_nm: detunings,
        amp,
        pump_bw_nm,
        phase_matching_bw_nm,
    })
}

/// Participation ratio of the Schmidt coefficients: the effective number of
/// populated spectral modes. Uses the trace identity
/// `K = (tr G)^2 / tr(G^2)` with `G` the Gram matrix of the amplitude grid,
/// which needs no eigendecomposition.
pub fn effective_spectral_modes(jsa: &JointSpectralAmplitude) -> f64 {
    let gram = jsa.amp.t().dot(&jsa.amp);
    let tr: f64 = gram.diag().sum();
    let fro2: f64 = gram.iter().map(|g| g * g).sum();
    tr * tr / fro2
}

/// Reduce a joint spectrum to pair weights on `n_bins` equal detuning bins
/// per photon. `None` requests the idealized limit: uniformly weighted,
/// maximally anticorrelated bins (signal bin `b` pairs with idler bin
/// `n_bins - 1 - b`), the natural discretization of a narrow-pump source.
pub fn spectral_pair_weights(
    jsa: Option<&JointSpectralAmplitude>,
    n_bins: usize,
) -> Result<Vec<SpectralPairWeight>, SourceError> {
    if n_bins == 0 {
        return Err(bad("n_bins", "must be at least 1".into()));
    }
    match jsa {
        None => {
            let w = 1.0 / n_bins as f64;
            Ok((0..n_bins)
                .map(|b| SpectralPairWeight {
                    signal_bin: b,
                    idler_bin: n_bins - 1 - b,
                    weight: w,
                })
                .collect())
        }
        Some(jsa) => {
            let grid = jsa.grid();
            let lo = jsa.detunings_nm[0];
            let hi = jsa.detunings_nm[grid - 1];
            let width = (hi - lo) * grid as f64 / (grid as f64 - 1.0);
            let start = lo - 0.5 * width / grid as f64;
            let to_bin = |x: f64| -> usize {
                let b = ((x - start) / width * n_bins as f64).floor() as isize;
                b.clamp(0, n_bins as isize - 1) as usize
            };
            let mut cells = vec![0.0f64; n_bins * n_bins];
            for ((i, j), a) in jsa.amp.indexed_iter() {
                let bs = to_bin(jsa.detunings_nm[i]);
                let bi = to_bin(jsa.detunings_nm[j]);
                cells[bs * n_bins + bi] += a * a;
            }
            let total: f64 = cells.iter().sum();
            let mut out = Vec::new();
            for bs in 0..n_bins {
                for bi in 0..n_bins {
                    let w = cells[bs * n_bins + bi] / total;
                    if w > 0.0 {
                        out.push(SpectralPairWeight {
                            signal_bin: bs,
                            idler_bin: bi,
                            weight: w,
                        });
                    }
                }
            }
            Ok(out)
        }
    }
}
