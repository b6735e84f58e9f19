//! Random multimode channels: Haar-distributed unitaries, truncations to the
//! monitored ports, and the i.i.d. Gaussian surrogate ensemble.

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::ks_distance_sorted;
use crate::linalg::{householder_qr_unitary, orthonormalize_columns};

pub use crate::linalg::unitarity_defect;

type C64 = Complex64;

/// Nominal center of the spectral bin grid.
pub const CENTER_WAVELENGTH_NM: f64 = 810.0;
/// Full width spanned by the spectral bin centers.
pub const SPECTRAL_SPAN_NM: f64 = 4.2;

#[derive(Debug, Error)]
pub enum InterferometerError {
    #[error("bad interferometer config: {0}")]
    BadConfig(String),
    #[error("bad truncation: {0}")]
    BadTruncation(String),
    #[error("ensemble stats need at least {needed} matrices, got {got}")]
    NotEnoughMatrices { needed: usize, got: usize },
}

/// Which random-matrix ensemble models the channel.
///
/// `HaarTruncated` is the physical one: a lossless mixer over all fiber modes
/// of which only a few ports are monitored. `ComplexGaussian` drops the
/// unitarity constraint and draws every entry independently; the two agree
/// only while the monitored block is a vanishing fraction of the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnsembleKind {
    HaarTruncated,
    ComplexGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferometerConfig {
    /// Total number of propagating fiber modes, `m`.
    pub total_modes: usize,
    /// Monitored output ports, rows of the transmission block.
    pub output_modes: usize,
    /// Illuminated input modes, columns of the transmission block.
    pub input_modes: usize,
    pub ensemble: EnsembleKind,
}

impl InterferometerConfig {
    pub fn validate(&self) -> Result<(), InterferometerError> {
        let bad = |msg: String| Err(InterferometerError::BadConfig(msg));
        if self.total_modes == 0 {
            return bad("total_modes must be at least 1".into());
        }
        if self.output_modes == 0 || self.output_modes > self.total_modes {
            return bad(format!(
                "output_modes must lie in 1..={}, got {}",
                self.total_modes, self.output_modes
            ));
        }
        if self.input_modes == 0 || self.input_modes > self.total_modes {
            return bad(format!(
                "input_modes must lie in 1..={}, got {}",
                self.total_modes, self.input_modes
            ));
        }
        Ok(())
    }

    /// The Gaussian surrogate is only trustworthy deep in the truncated
    /// regime; past `p > m^(1/6)` the missing unitarity constraint shows up
    /// in the tails soon enough to matter.
    pub fn gaussian_regime_warning(&self) -> Option<String> {
        if self.ensemble != EnsembleKind::ComplexGaussian {
            return None;
        }
        let limit = (self.total_modes as f64).powf(1.0 / 6.0);
        if (self.output_modes as f64) > limit {
            Some(format!(
                "ComplexGaussian ensemble with {} monitored ports exceeds the \
                 safe truncation depth m^(1/6) = {:.2} for {} total modes; \
                 prefer HaarTruncated here",
                self.output_modes, limit, self.total_modes
            ))
        } else {
            None
        }
    }
}

/// A `p x n` block of a channel matrix, together with the per-entry intensity
/// scale `E|t_ij|^2 = 1/total_modes` it was drawn at.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionMatrix {
    pub entries: Array2<C64>,
    pub variance_scale: f64,
}

impl TransmissionMatrix {
    pub fn outputs(&self) -> usize {
        self.entries.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.entries.ncols()
    }
}

/// One transmission block per spectral bin, mutually independent draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTransmission {
    pub bins: Vec<TransmissionMatrix>,
    pub bin_centers_nm: Vec<f64>,
}

fn standard_complex<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Haar-distributed `m x m` unitary: QR of a Ginibre matrix with the phase
/// convention fixed so the R diagonal is positive.
pub fn sample_haar_unitary<R: Rng + ?Sized>(
    m: usize,
    rng: &mut R,
) -> Result<Array2<C64>, InterferometerError> {
    if m == 0 {
        return Err(InterferometerError::BadConfig(
            "unitary dimension must be at least 1".into(),
        ));
    }
    let g = Array2::from_shape_fn((m, m), |_| standard_complex(rng));
    Ok(householder_qr_unitary(&g))
}

/// Select monitored rows and illuminated columns out of a full unitary.
pub fn truncate_unitary(
    u: &Array2<C64>,
    rows: &[usize],
    cols: &[usize],
) -> Result<TransmissionMatrix, InterferometerError> {
    let m = u.nrows();
    if u.ncols() != m {
        return Err(InterferometerError::BadTruncation(format!(
            "expected a square unitary, got {}x{}",
            u.nrows(),
            u.ncols()
        )));
    }
    if rows.is_empty() || cols.is_empty() {
        return Err(InterferometerError::BadTruncation(
            "row and column selections must be non-empty".into(),
        ));
    }
    for set in [rows, cols] {
        for (k, &i) in set.iter().enumerate() {
            if i >= m {
                return Err(InterferometerError::BadTruncation(format!(
                    "index {i} out of range for {m} modes"
                )));
            }
            if set[..k].contains(&i) {
                return Err(InterferometerError::BadTruncation(format!(
                    "index {i} selected twice"
                )));
            }
        }
    }
    let entries = Array2::from_shape_fn((rows.len(), cols.len()), |(a, b)| u[[rows[a], cols[b]]]);
    Ok(TransmissionMatrix {
        entries,
        variance_scale: 1.0 / m as f64,
    })
}

/// Truncated-Haar block without building the full `m x m` unitary: draw the
/// `n` illuminated Ginibre columns, orthonormalize them (a Haar isometry),
/// and keep `p` rows. Rows of a Haar isometry are exchangeable, so keeping
/// the first `p` loses nothing.
pub fn sample_haar_truncated_tm<R: Rng + ?Sized>(
    cfg: &InterferometerConfig,
    rng: &mut R,
) -> Result<TransmissionMatrix, InterferometerError> {
    cfg.validate()?;
    let (m, p, n) = (cfg.total_modes, cfg.output_modes, cfg.input_modes);
    let mut g = Array2::from_shape_fn((m, n), |_| standard_complex(rng));
    orthonormalize_columns(&mut g);
    let entries = Array2::from_shape_fn((p, n), |(a, b)| g[[a, b]]);
    Ok(TransmissionMatrix {
        entries,
        variance_scale: 1.0 / m as f64,
    })
}

/// Surrogate block of i.i.d. complex Gaussian entries at the same intensity
/// scale `1/m` as a truncated unitary.
pub fn sample_gaussian_tm<R: Rng + ?Sized>(
    cfg: &InterferometerConfig,
    rng: &mut R,
) -> Result<TransmissionMatrix, InterferometerError> {
    cfg.validate()?;
    let scale = (cfg.total_modes as f64).sqrt().recip();
    let entries = Array2::from_shape_fn((cfg.output_modes, cfg.input_modes), |_| {
        standard_complex(rng) * scale
    });
    Ok(TransmissionMatrix {
        entries,
        variance_scale: 1.0 / cfg.total_modes as f64,
    })
}

/// A stack of independent transmission blocks, one per spectral bin. Bins far
/// enough apart decorrelate completely in a dispersive fiber, which is the
/// regime modeled here.
pub fn sample_spectral_tm<R: Rng + ?Sized>(
    cfg: &InterferometerConfig,
    n_bins: usize,
    rng: &mut R,
) -> Result<SpectralTransmission, InterferometerError> {
    if n_bins == 0 {
        return Err(InterferometerError::BadConfig(
            "n_bins must be at least 1".into(),
        ));
    }
    let mut bins = Vec::with_capacity(n_bins);
    for _ in 0..n_bins {
        bins.push(match cfg.ensemble {
            EnsembleKind::HaarTruncated => sample_haar_truncated_tm(cfg, rng)?,
            EnsembleKind::ComplexGaussian => sample_gaussian_tm(cfg, rng)?,
        });
    }
    let centers = (0..n_bins)
        .map(|b| {
            CENTER_WAVELENGTH_NM + SPECTRAL_SPAN_NM * ((b as f64 + 0.5) / n_bins as f64 - 0.5)
        })
        .collect();
    Ok(SpectralTransmission {
        bins,
        bin_centers_nm: centers,
    })
}

/// Sanity report over a sampled ensemble of equally shaped blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleReport {
    pub n_matrices: usize,
    /// KS distance of pooled entry amplitudes against the Rayleigh law with
    /// the declared variance scale.
    pub amplitude_ks: f64,
    /// KS distance of pooled entry phases against uniform on (-pi, pi].
    pub phase_ks: f64,
    /// Largest absolute complex Pearson correlation over all pairs of entry
    /// positions, taken across the ensemble.
    pub entry_correlation_max: f64,
    /// Set when some entry position does not fluctuate at all; the
    /// correlation figures are meaningless in that case.
    pub degenerate: bool,
}

pub fn ensemble_stats(
    tms: &[TransmissionMatrix],
) -> Result<EnsembleReport, InterferometerError> {
    if tms.len() < 2 {
        return Err(InterferometerError::NotEnoughMatrices {
            needed: 2,
            got: tms.len(),
        });
    }
    let (p, n) = (tms[0].outputs(), tms[0].inputs());
    let s = tms[0].variance_scale;
    for t in tms {
        if t.outputs() != p || t.inputs() != n || t.variance_scale != s {
            return Err(InterferometerError::BadConfig(
                "ensemble_stats requires identically shaped and scaled matrices".into(),
            ));
        }
    }

    let mut amps = Vec::with_capacity(tms.len() * p * n);
    let mut phases = Vec::with_capacity(amps.capacity());
    for t in tms {
        for z in t.entries.iter() {
            amps.push(z.norm());
            phases.push(z.arg());
        }
    }
    amps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    phases.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let amplitude_ks = ks_distance_sorted(&amps, |a| {
        if a <= 0.0 {
            0.0
        } else {
            1.0 - (-a * a / s).exp()
        }
    });
    let phase_ks = ks_distance_sorted(&phases, |x| {
        ((x + std::f64::consts::PI) / (2.0 * std::f64::consts::PI)).clamp(0.0, 1.0)
    });

    // Complex Pearson correlation between entry positions, across draws.
    let k = tms.len() as f64;
    let npos = p * n;
    let mut means = vec![C64::new(0.0, 0.0); npos];
    for t in tms {
        for (i, z) in t.entries.iter().enumerate() {
            means[i] += z;
        }
    }
    for mu in &mut means {
        *mu /= k;
    }
    let mut vars = vec![0.0f64; npos];
    for t in tms {
        for (i, z) in t.entries.iter().enumerate() {
            vars[i] += (z - means[i]).norm_sqr();
        }
    }
    let var_floor = 1e-30 * s;
    let degenerate = vars.iter().any(|&v| v <= var_floor);
    let mut corr_max = 0.0f64;
    if !degenerate {
        let centered: Vec<Vec<C64>> = tms
            .iter()
            .map(|t| t.entries.iter().enumerate().map(|(i, z)| z - means[i]).collect())
            .collect();
        for a in 0..npos {
            for b in (a + 1)..npos {
                let cross: C64 = centered.iter().map(|row| row[a] * row[b].conj()).sum();
                corr_max = corr_max.max(cross.norm() / (vars[a] * vars[b]).sqrt());
            }
        }
    }

    Ok(EnsembleReport {
        n_matrices: tms.len(),
        amplitude_ks,
        phase_ks,
        entry_correlation_max: corr_max,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::two_sample_ks;
    use crate::linalg::unitarity_defect;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(m: usize, p: usize, n: usize, ensemble: EnsembleKind) -> InterferometerConfig {
        InterferometerConfig {
            total_modes: m,
            output_modes: p,
            input_modes: n,
            ensemble,
        }
    }

    #[test]
    fn haar_unitaries_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let u = sample_haar_unitary(24, &mut rng).unwrap();
            assert!(unitarity_defect(&u) < 1e-10);
        }
    }

    #[test]
    fn truncation_selects_the_requested_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = sample_haar_unitary(8, &mut rng).unwrap();
        let t = truncate_unitary(&u, &[0, 2], &[1, 5]).unwrap();
        assert_eq!((t.outputs(), t.inputs()), (2, 2));
        assert_eq!(t.variance_scale, 1.0 / 8.0);
        assert_eq!(t.entries[[1, 0]], u[[2, 1]]);

        assert!(truncate_unitary(&u, &[0, 0], &[1]).is_err());
        assert!(truncate_unitary(&u, &[0], &[8]).is_err());
        assert!(truncate_unitary(&u, &[], &[1]).is_err());
    }

    #[test]
    fn economy_truncation_matches_declared_intensity_scale() {
        let c = cfg(400, 2, 2, EnsembleKind::HaarTruncated);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut mean_sq = 0.0;
        let draws = 4000;
        for _ in 0..draws {
            let t = sample_haar_truncated_tm(&c, &mut rng).unwrap();
            mean_sq += t.entries.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        mean_sq /= (draws * 4) as f64;
        let expect = 1.0 / 400.0;
        assert!(
            (mean_sq / expect - 1.0).abs() < 0.05,
            "mean |t|^2 = {mean_sq:.3e}, expected {expect:.3e}"
        );
    }

    #[test]
    fn economy_truncation_columns_stay_orthonormal_upstream() {
        // The p x n block comes from an m x n isometry; re-drawing with the
        // same rng stream must be bit-identical.
        let c = cfg(50, 3, 2, EnsembleKind::HaarTruncated);
        let a = sample_haar_truncated_tm(&c, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let b = sample_haar_truncated_tm(&c, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_entries_have_the_right_moments() {
        let c = cfg(100, 3, 2, EnsembleKind::ComplexGaussian);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut sum = C64::new(0.0, 0.0);
        let mut sum_re2 = 0.0;
        let mut sum_im2 = 0.0;
        let draws = 5000;
        for _ in 0..draws {
            let t = sample_gaussian_tm(&c, &mut rng).unwrap();
            for z in t.entries.iter() {
                sum += z;
                sum_re2 += z.re * z.re;
                sum_im2 += z.im * z.im;
            }
        }
        let n = (draws * 6) as f64;
        let half = 1.0 / 200.0;
        assert!(sum.norm() / n < 4.0 * (half / n).sqrt());
        assert!((sum_re2 / n / half - 1.0).abs() < 0.05);
        assert!((sum_im2 / n / half - 1.0).abs() < 0.05);
    }

    #[test]
    fn ensemble_report_accepts_a_healthy_haar_ensemble() {
        let c = cfg(50, 2, 2, EnsembleKind::HaarTruncated);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tms: Vec<_> = (0..300)
            .map(|_| sample_haar_truncated_tm(&c, &mut rng).unwrap())
            .collect();
        let rep = ensemble_stats(&tms).unwrap();
        assert_eq!(rep.n_matrices, 300);
        assert!(!rep.degenerate);
        assert!(rep.amplitude_ks < 0.06, "amplitude_ks = {}", rep.amplitude_ks);
        assert!(rep.phase_ks < 0.06, "phase_ks = {}", rep.phase_ks);
        assert!(
            rep.entry_correlation_max < 0.25,
            "entry_correlation_max = {}",
            rep.entry_correlation_max
        );
    }

    #[test]
    fn ensemble_report_flags_a_frozen_ensemble() {
        let c = cfg(50, 2, 2, EnsembleKind::HaarTruncated);
        let t = sample_haar_truncated_tm(&c, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let rep = ensemble_stats(&vec![t; 6]).unwrap();
        assert!(rep.degenerate);
        assert!(rep.amplitude_ks > 0.2);
    }

    #[test]
    fn ensemble_report_needs_two_matrices() {
        let c = cfg(50, 2, 2, EnsembleKind::HaarTruncated);
        let t = sample_haar_truncated_tm(&c, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!(matches!(
            ensemble_stats(&[t]),
            Err(InterferometerError::NotEnoughMatrices { .. })
        ));
    }

    #[test]
    fn spectral_bins_are_independent_and_centered() {
        let c = cfg(60, 2, 2, EnsembleKind::HaarTruncated);
        let st = sample_spectral_tm(&c, 4, &mut ChaCha8Rng::seed_from_u64(17)).unwrap();
        assert_eq!(st.bins.len(), 4);
        assert_eq!(st.bin_centers_nm.len(), 4);
        let mid = 0.5 * (st.bin_centers_nm[1] + st.bin_centers_nm[2]);
        assert!((mid - CENTER_WAVELENGTH_NM).abs() < 1e-12);
        assert!(st.bin_centers_nm.windows(2).all(|w| w[0] < w[1]));
        assert_ne!(st.bins[0], st.bins[1]);

        let again = sample_spectral_tm(&c, 4, &mut ChaCha8Rng::seed_from_u64(17)).unwrap();
        assert_eq!(st, again);
    }

    #[test]
    fn truncated_haar_amplitudes_match_gaussian_surrogate_when_deep() {
        let ch = cfg(400, 2, 2, EnsembleKind::HaarTruncated);
        let cg = cfg(400, 2, 2, EnsembleKind::ComplexGaussian);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut haar = Vec::new();
        let mut gauss = Vec::new();
        for _ in 0..800 {
            haar.extend(
                sample_haar_truncated_tm(&ch, &mut rng)
                    .unwrap()
                    .entries
                    .iter()
                    .map(|z| z.norm()),
            );
            gauss.extend(
                sample_gaussian_tm(&cg, &mut rng)
                    .unwrap()
                    .entries
                    .iter()
                    .map(|z| z.norm()),
            );
        }
        assert!(two_sample_ks(&haar, &gauss) < 0.04);
    }

    #[test]
    fn regime_warning_fires_only_for_deep_gaussian_truncations() {
        assert!(cfg(400, 2, 2, EnsembleKind::ComplexGaussian)
            .gaussian_regime_warning()
            .is_none());
        assert!(cfg(400, 3, 2, EnsembleKind::ComplexGaussian)
            .gaussian_regime_warning()
            .is_some());
        assert!(cfg(400, 16, 2, EnsembleKind::HaarTruncated)
            .gaussian_regime_warning()
            .is_none());
    }

    #[test]
    fn config_validation_rejects_out_of_range_blocks() {
        assert!(cfg(0, 1, 1, EnsembleKind::HaarTruncated).validate().is_err());
        assert!(cfg(10, 0, 1, EnsembleKind::HaarTruncated).validate().is_err());
        assert!(cfg(10, 11, 1, EnsembleKind::HaarTruncated).validate().is_err());
        assert!(cfg(10, 2, 11, EnsembleKind::HaarTruncated).validate().is_err());
        assert!(cfg(10, 2, 2, EnsembleKind::HaarTruncated).validate().is_ok());
    }
}
