//! Ensemble summary statistics: speckle visibilities, mode counts, purity
//! and g2 moments, with bootstrap standard errors.

use super::AnalyticsError;
use crate::measurement::MeasurementRecord;
use crate::rng::derive_seed;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Per-record corrections applied before moment estimation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Corrections {
    /// Dark rates (counts/s) subtracted from I1 and I2.
    pub dark_rates: Option<[f64; 2]>,
    /// Subtract the accidental estimate R from each coincidence rate C.
    pub subtract_accidentals: bool,
}

/// Bootstrap configuration. `resamples = 0` skips uncertainty estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        // Percentile bootstrap; 500 resamples trades noise on the SE for
        // runtime and is plenty for two-digit error bars.
        BootstrapConfig { resamples: 500, seed: 0x0b00_75ee_d000_0001 }
    }
}

/// Bootstrap standard errors for the entries of [`FeatureVector`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureUncertainties {
    pub v_i: f64,
    pub v_c: f64,
    pub v_g2: Option<f64>,
    pub mean_g2: Option<f64>,
    pub d_hat: f64,
    pub purity: f64,
    pub corr_c_g2: Option<f64>,
}

/// Summary statistics of one measurement ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub n_records: usize,
    /// Number of records with a defined g2 (R > 0).
    pub n_g2_valid: usize,
    /// Intensity speckle visibility Var(I1)/mean(I1)^2 after corrections.
    pub v_i: f64,
    /// Coincidence visibility Var(C)/mean(C)^2 after corrections.
    pub v_c: f64,
    /// g2 visibility over valid records; absent if every record was flagged.
    pub v_g2: Option<f64>,
    pub mean_g2: Option<f64>,
    /// Occupied-mode estimate 1/V_I.
    pub d_hat: f64,
    /// Purity estimate V_C - 2 V_I.
    pub purity: f64,
    /// Pair-dimension estimate 1/(V_C - 1); meaningful only when V_C > 1.
    pub pair_dim_hat: f64,
    /// Pearson correlation of C with g2 over valid records.
    pub corr_c_g2: Option<f64>,
    pub corrections: Corrections,
    pub uncertainties: Option<FeatureUncertainties>,
}

/// Speckle visibility of a sample: unbiased variance over squared mean.
/// Constant samples give exactly zero.
pub fn visibility(samples: &[f64]) -> Result<f64, AnalyticsError> {
    if samples.len() < 2 {
        return Err(AnalyticsError::NotEnoughSamples {
            what: "visibility",
            needed: 2,
            got: samples.len(),
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(AnalyticsError::Domain {
            what: "visibility",
            detail: "samples must be finite".into(),
        });
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return Err(AnalyticsError::Degenerate {
            what: "visibility",
            detail: format!("non-positive sample mean {mean}"),
        });
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Ok(var / (mean * mean))
}

/// Estimates the feature vector of an ensemble of measurement records.
/// Requires at least 100 records so the moment estimates and the bootstrap
/// are meaningful.
pub fn estimate_features(
    records: &[MeasurementRecord],
    corrections: Corrections,
    bootstrap: BootstrapConfig,
) -> Result<FeatureVector, AnalyticsError> {
    if records.len() < 100 {
        return Err(AnalyticsError::NotEnoughSamples {
            what: "estimate_features",
            needed: 100,
            got: records.len(),
        });
    }
    let base = features_once(records, corrections)?;
    if bootstrap.resamples == 0 {
        return Ok(base);
    }

    let n = records.len();
    let replicates: Vec<FeatureVector> = (0..bootstrap.resamples)
        .into_par_iter()
        .filter_map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(bootstrap.seed, r as u64));
            let resampled: Vec<MeasurementRecord> =
                (0..n).map(|_| records[rng.random_range(0..n)]).collect();
            features_once(&resampled, corrections).ok()
        })
        .collect();
    if replicates.len() < 2 {
        return Ok(base);
    }

    let se = |pick: &dyn Fn(&FeatureVector) -> f64| -> f64 {
        let vals: Vec<f64> = replicates.iter().map(pick).filter(|v| v.is_finite()).collect();
        std_dev(&vals)
    };
    let se_opt = |pick: &dyn Fn(&FeatureVector) -> Option<f64>| -> Option<f64> {
        let vals: Vec<f64> =
            replicates.iter().filter_map(pick).filter(|v| v.is_finite()).collect();
        if vals.len() < 2 {
            None
        } else {
            Some(std_dev(&vals))
        }
    };

    let unc = FeatureUncertainties {
        v_i: se(&|f| f.v_i),
        v_c: se(&|f| f.v_c),
        v_g2: se_opt(&|f| f.v_g2),
        mean_g2: se_opt(&|f| f.mean_g2),
        d_hat: se(&|f| f.d_hat),
        purity: se(&|f| f.purity),
        corr_c_g2: se_opt(&|f| f.corr_c_g2),
    };
    Ok(FeatureVector { uncertainties: Some(unc), ..base })
}

fn std_dev(vals: &[f64]) -> f64 {
    if vals.len() < 2 {
        return 0.0;
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn features_once(
    records: &[MeasurementRecord],
    corrections: Corrections,
) -> Result<FeatureVector, AnalyticsError> {
    let dark = corrections.dark_rates.unwrap_or([0.0, 0.0]);
    let i1: Vec<f64> = records.iter().map(|r| r.i1 - dark[0]).collect();
    let c: Vec<f64> = records
        .iter()
        .map(|r| if corrections.subtract_accidentals { r.c - r.r } else { r.c })
        .collect();

    let v_i = visibility(&i1)?;
    let v_c = visibility(&c)?;

    let valid: Vec<(f64, f64)> = records
        .iter()
        .zip(&c)
        .filter_map(|(r, &cc)| r.g2.map(|g| (cc, g)))
        .collect();
    let n_g2_valid = valid.len();
    let (v_g2, mean_g2, corr_c_g2) = if n_g2_valid >= 2 {
        let g2s: Vec<f64> = valid.iter().map(|(_, g)| *g).collect();
        let mean = g2s.iter().sum::<f64>() / g2s.len() as f64;
        let v = visibility(&g2s).ok();
        let corr = pearson(&valid);
        (v, Some(mean), corr)
    } else {
        (None, None, None)
    };

    let d_hat = 1.0 / v_i;
    let purity = v_c - 2.0 * v_i;
    let pair_dim_hat = 1.0 / (v_c - 1.0);

    Ok(FeatureVector {
        n_records: records.len(),
        n_g2_valid,
        v_i,
        v_c,
        v_g2,
        mean_g2,
        d_hat,
        purity,
        pair_dim_hat,
        corr_c_g2,
        corrections,
        uncertainties: None,
    })
}

fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    if pairs.len() < 2 {
        return None;
    }
    let mx = pairs.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = pairs.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in pairs {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record(i: u64, i1: f64, i2: f64, c: f64, r: f64) -> MeasurementRecord {
        MeasurementRecord {
            setting_index: i,
            i1,
            i2,
            c,
            r,
            g2: if r > 0.0 { Some(c / r) } else { None },
        }
    }

    #[test]
    fn visibility_of_exponential_draws_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..100_000).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let v = visibility(&xs).unwrap();
        assert!((v - 1.0).abs() < 0.02, "V = {v}");
    }

    #[test]
    fn visibility_edge_cases() {
        assert_eq!(visibility(&[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!(visibility(&[1.0]).is_err());
        assert!(visibility(&[0.0, 0.0]).is_err());
        assert!(visibility(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn features_report_corrections_and_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let recs: Vec<MeasurementRecord> = (0..400)
            .map(|i| {
                let s1 = -(1.0 - rng.random::<f64>()).ln();
                let s2 = -(1.0 - rng.random::<f64>()).ln();
                let r = 0.01 * s1 * s2;
                record(i, s1 + 0.5, s2 + 0.5, r * (1.0 + rng.random::<f64>()), r)
            })
            .collect();
        let corr = Corrections { dark_rates: Some([0.5, 0.5]), subtract_accidentals: false };
        let f = estimate_features(&recs, corr, BootstrapConfig { resamples: 100, seed: 1 })
            .unwrap();
        assert_eq!(f.n_records, 400);
        assert_eq!(f.n_g2_valid, 400);
        // Purity identity holds by construction.
        assert!((f.purity - (f.v_c - 2.0 * f.v_i)).abs() < 1e-12);
        assert!((f.d_hat - 1.0 / f.v_i).abs() < 1e-12);
        let u = f.uncertainties.expect("bootstrap ran");
        assert!(u.v_i > 0.0 && u.v_c > 0.0 && u.purity > 0.0);
        // Dark-corrected intensities are exponential: V_I near 1.
        assert!((f.v_i - 1.0).abs() < 0.25, "v_i = {}", f.v_i);
    }

    #[test]
    fn all_flagged_g2_leaves_g2_fields_absent() {
        let recs: Vec<MeasurementRecord> =
            (0..150).map(|i| record(i, 1.0 + i as f64 * 0.01, 1.0, 0.3, 0.0)).collect();
        let f = estimate_features(&recs, Corrections::default(), BootstrapConfig {
            resamples: 0,
            seed: 0,
        })
        .unwrap();
        assert_eq!(f.n_g2_valid, 0);
        assert!(f.v_g2.is_none() && f.mean_g2.is_none() && f.corr_c_g2.is_none());
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let recs: Vec<MeasurementRecord> = (0..200)
            .map(|i| {
                let s = 1.0 + rng.random::<f64>();
                record(i, s, s, 0.5 * s, 0.25 * s)
            })
            .collect();
        let cfg = BootstrapConfig { resamples: 50, seed: 77 };
        let a = estimate_features(&recs, Corrections::default(), cfg).unwrap();
        let b = estimate_features(&recs, Corrections::default(), cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn requires_one_hundred_records() {
        let recs: Vec<MeasurementRecord> =
            (0..99).map(|i| record(i, 1.0, 1.0, 1.0, 1.0)).collect();
        assert!(estimate_features(&recs, Corrections::default(), BootstrapConfig::default())
            .is_err());
    }
}
