//! Goodness-of-fit of sampled observables against the analytic reference
//! densities: Kolmogorov-Smirnov distance with the asymptotic tail, and a
//! chi-square binning test with automatic bin merging.

use super::pdf::AnalyticPdf;
use super::quad::{integrate, integrate_sqrt_sub};
use super::special::{gamma_q, kolmogorov_q};
use super::AnalyticsError;

/// Which test statistic to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GofStatistic {
    Ks,
    ChiSquare,
}

/// Result of one goodness-of-fit evaluation.
#[derive(Debug, Clone)]
pub struct GofReport {
    pub statistic: GofStatistic,
    /// KS distance, or the chi-square statistic.
    pub value: f64,
    /// Asymptotic p-value (KS valid for n >= 100; chi-square from the
    /// regularized gamma tail).
    pub p_value: f64,
    pub n_samples: usize,
    /// Degrees of freedom of the chi-square variant.
    pub dof: Option<usize>,
}

/// Evaluates the fit of `samples` (non-negative observables, unnormalized
/// ordering irrelevant) against `model`.
pub fn goodness_of_fit(
    samples: &[f64],
    model: &AnalyticPdf,
    statistic: GofStatistic,
) -> Result<GofReport, AnalyticsError> {
    model.validate()?;
    if samples.len() < 100 {
        return Err(AnalyticsError::NotEnoughSamples {
            what: "goodness_of_fit",
            needed: 100,
            got: samples.len(),
        });
    }
    if samples.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(AnalyticsError::Domain {
            what: "goodness_of_fit",
            detail: "samples must be finite and non-negative".into(),
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    match statistic {
        GofStatistic::Ks => {
            let n = sorted.len() as f64;
            let cdfs = model_cdf_at(model, &sorted);
            let mut d = 0.0f64;
            for (i, f) in cdfs.iter().enumerate() {
                let hi = (i as f64 + 1.0) / n - f;
                let lo = f - i as f64 / n;
                d = d.max(hi.abs()).max(lo.abs());
            }
            let p = kolmogorov_q(n.sqrt() * d);
            Ok(GofReport {
                statistic,
                value: d,
                p_value: p,
                n_samples: sorted.len(),
                dof: None,
            })
        }
        GofStatistic::ChiSquare => {
            let n = sorted.len();
            let k = (n / 10).clamp(4, 40);
            // Edges at empirical quantiles; expected mass from the model CDF.
            let mut edges = Vec::with_capacity(k + 1);
            edges.push(0.0);
            for j in 1..k {
                edges.push(sorted[j * n / k]);
            }
            edges.push(f64::INFINITY);
            edges.dedup_by(|a, b| a == b);

            let mut observed = vec![0usize; edges.len() - 1];
            let mut bin = 0;
            for &x in &sorted {
                while bin + 1 < observed.len() && x >= edges[bin + 1] {
                    bin += 1;
                }
                observed[bin] += 1;
            }
            let finite_edges = edges[1..edges.len() - 1].to_vec();
            let cdfs = model_cdf_at(model, &finite_edges);
            let mut expected = Vec::with_capacity(observed.len());
            let mut prev = 0.0;
            for &c in &cdfs {
                expected.push((c - prev).max(0.0) * n as f64);
                prev = c;
            }
            expected.push((1.0 - prev).max(0.0) * n as f64);

            // Merge adjacent bins until every expected count reaches 10.
            let (mut mo, mut me) = (Vec::new(), Vec::new());
            let (mut acc_o, mut acc_e) = (0.0f64, 0.0f64);
            for (o, e) in observed.iter().zip(&expected) {
                acc_o += *o as f64;
                acc_e += *e;
                if acc_e >= 10.0 {
                    mo.push(acc_o);
                    me.push(acc_e);
                    acc_o = 0.0;
                    acc_e = 0.0;
                }
            }
            if acc_e > 0.0 || acc_o > 0.0 {
                if let (Some(lo), Some(le)) = (mo.last_mut(), me.last_mut()) {
                    *lo += acc_o;
                    *le += acc_e;
                } else {
                    mo.push(acc_o);
                    me.push(acc_e);
                }
            }
            if mo.len() < 2 {
                return Err(AnalyticsError::Degenerate {
                    what: "goodness_of_fit",
                    detail: "fewer than two usable chi-square bins".into(),
                });
            }
            let stat: f64 = mo
                .iter()
                .zip(&me)
                .map(|(o, e)| (o - e) * (o - e) / e)
                .sum();
            let dof = mo.len() - 1;
            let p = gamma_q(dof as f64 / 2.0, stat / 2.0);
            Ok(GofReport {
                statistic,
                value: stat,
                p_value: p,
                n_samples: n,
                dof: Some(dof),
            })
        }
    }
}

/// KS distance of pre-sorted samples against an arbitrary CDF.
pub fn ks_distance_sorted(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(((i as f64 + 1.0) / n - f).abs()).max((f - i as f64 / n).abs());
    }
    d
}

/// Two-sample KS distance between independent samples (unsorted input).
pub fn two_sample_ks(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|p, q| p.partial_cmp(q).unwrap());
    b.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Model CDF at an ascending list of points, via one incremental quadrature
/// sweep (closed forms short-circuit inside `cdf`).
fn model_cdf_at(model: &AnalyticPdf, ascending: &[f64]) -> Vec<f64> {
    match model {
        AnalyticPdf::G2Uniform { .. } | AnalyticPdf::G2NegLog { .. } => {
            ascending.iter().map(|&x| model.cdf(x).unwrap_or(0.0)).collect()
        }
        _ => {
            let mut out = Vec::with_capacity(ascending.len());
            let mut acc = 0.0;
            let mut prev = 0.0;
            let f = |x: f64| model.density(x).unwrap_or(0.0);
            for &x in ascending {
                if x > prev {
                    if prev == 0.0 {
                        // First segment may hold an integrable singularity.
                        acc += integrate_sqrt_sub(&f, x, 1e-12);
                    } else {
                        acc += integrate(&f, prev, x, 1e-12);
                    }
                    prev = x;
                }
                out.push(acc.clamp(0.0, 1.0));
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_samples_fit_uniform_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<f64> = (0..4000).map(|_| rng.random::<f64>() * 2.0).collect();
        let model = AnalyticPdf::G2Uniform { mean: 1.0 };
        let r = goodness_of_fit(&samples, &model, GofStatistic::Ks).unwrap();
        assert!(r.value < 0.02, "KS = {}", r.value);
        assert!(r.p_value > 0.01);
        let c = goodness_of_fit(&samples, &model, GofStatistic::ChiSquare).unwrap();
        assert!(c.p_value > 1e-4, "chi2 p = {}", c.p_value);
    }

    #[test]
    fn exponential_samples_fit_d1_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<f64> =
            (0..5000).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let model = AnalyticPdf::IntensityGamma { d: 1.0 };
        let r = goodness_of_fit(&samples, &model, GofStatistic::Ks).unwrap();
        assert!(r.value < 0.025, "KS = {}", r.value);
        // Wrong model is rejected hard.
        let wrong = AnalyticPdf::IntensityGamma { d: 5.0 };
        let w = goodness_of_fit(&samples, &wrong, GofStatistic::Ks).unwrap();
        assert!(w.value > 0.2);
        assert!(w.p_value < 1e-6);
    }

    #[test]
    fn product_of_exponentials_fits_accidental_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let samples: Vec<f64> = (0..5000)
            .map(|_| {
                let a = -(1.0 - rng.random::<f64>()).ln();
                let b = -(1.0 - rng.random::<f64>()).ln();
                a * b
            })
            .collect();
        let model = AnalyticPdf::AccidentalProduct { d: 1.0 };
        let r = goodness_of_fit(&samples, &model, GofStatistic::Ks).unwrap();
        assert!(r.value < 0.025, "KS = {}", r.value);
    }

    #[test]
    fn p_values_stay_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        for stat in [GofStatistic::Ks, GofStatistic::ChiSquare] {
            for model in [
                AnalyticPdf::G2Uniform { mean: 0.5 },
                AnalyticPdf::IntensityGamma { d: 2.0 },
            ] {
                let r = goodness_of_fit(&samples, &model, stat).unwrap();
                assert!((0.0..=1.0).contains(&r.p_value));
                assert!(r.value >= 0.0);
            }
        }
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let samples = vec![0.5; 99];
        let model = AnalyticPdf::G2Uniform { mean: 1.0 };
        assert!(goodness_of_fit(&samples, &model, GofStatistic::Ks).is_err());
    }
}
