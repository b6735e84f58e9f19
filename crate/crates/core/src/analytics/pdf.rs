//! Analytic reference densities for speckle observables, normalized to unit
//! mean: the intensity gamma family, the coincidence K-distribution, the
//! accidental (product-of-intensities) density, and the two g2 densities.
//! All take the occupied-mode count d as a real parameter >= 1.

use super::quad::integrate_sqrt_sub;
use super::special::{bessel_k, ln_gamma};
use super::AnalyticsError;
use serde::{Deserialize, Serialize};

/// Normalization convention for the distinguishable-pair g2 density.
///
/// `Exact` integrates to one. `PaperEq3` keeps the 1/(pi*gbar) prefactor as
/// printed in the source literature; its total mass is 2/pi, which is exposed
/// rather than silently corrected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NegLogNormalization {
    Exact,
    PaperEq3,
}

/// A reference density for one observable, normalized to unit mean where the
/// convention allows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AnalyticPdf {
    /// Single-beam intensity speckle with d occupied modes:
    /// f(x) = d^d / Gamma(d) x^(d-1) exp(-d x).
    IntensityGamma { d: f64 },
    /// Coincidence speckle of a pure biphoton over d modes:
    /// f(x) = 2d / Gamma(d) (dx)^((d-1)/2) K_(d-1)(2 sqrt(dx)).
    CoincidenceK { d: f64 },
    /// Product of two independent d-mode intensities (accidental floor):
    /// f(x) = 2 / Gamma(d)^2 d^(2d) x^(d-1) K_0(2 d sqrt(x)).
    AccidentalProduct { d: f64 },
    /// Indistinguishable-pair g2: uniform on [0, 2 mean].
    G2Uniform { mean: f64 },
    /// Distinguishable-pair g2: -log|x/mean - 1| on [0, 2 mean], under the
    /// chosen normalization convention.
    G2NegLog { mean: f64, normalization: NegLogNormalization },
}

fn check_d(d: f64, what: &'static str) -> Result<(), AnalyticsError> {
    if !d.is_finite() || d < 1.0 {
        return Err(AnalyticsError::Domain {
            what,
            detail: format!("mode count d must be a finite real >= 1, got {d}"),
        });
    }
    Ok(())
}

fn check_x(x: f64, what: &'static str) -> Result<(), AnalyticsError> {
    if !x.is_finite() || x < 0.0 {
        return Err(AnalyticsError::Domain {
            what,
            detail: format!("density argument must be finite and >= 0, got {x}"),
        });
    }
    Ok(())
}

fn check_mean(mean: f64, what: &'static str) -> Result<(), AnalyticsError> {
    if !mean.is_finite() || mean <= 0.0 {
        return Err(AnalyticsError::Domain {
            what,
            detail: format!("mean must be finite and > 0, got {mean}"),
        });
    }
    Ok(())
}

/// Gamma intensity density at normalized intensity `x` for `d` occupied
/// modes. `pdf_intensity_gamma(x, 1)` is the exponential Rayleigh-speckle
/// law.
pub fn pdf_intensity_gamma(x: f64, d: f64) -> Result<f64, AnalyticsError> {
    check_d(d, "pdf_intensity_gamma")?;
    check_x(x, "pdf_intensity_gamma")?;
    if x == 0.0 {
        // x^(d-1) limit: finite only at d = 1.
        return Ok(if d == 1.0 { 1.0 } else { 0.0 });
    }
    Ok((d * d.ln() - ln_gamma(d) + (d - 1.0) * x.ln() - d * x).exp())
}

/// K-distributed coincidence density at normalized coincidence rate `x`.
/// Diverges logarithmically at x = 0 for d = 1; the limit d/(d-1) is
/// returned at x = 0 for d > 1 and +infinity for d = 1.
pub fn pdf_coincidence_k(x: f64, d: f64) -> Result<f64, AnalyticsError> {
    check_d(d, "pdf_coincidence_k")?;
    check_x(x, "pdf_coincidence_k")?;
    if x == 0.0 {
        return Ok(if d == 1.0 { f64::INFINITY } else { d / (d - 1.0) });
    }
    let nu = d - 1.0;
    let arg = 2.0 * (d * x).sqrt();
    let k = bessel_k(nu, arg)?;
    let log_pref = (2.0f64).ln() + d.ln() - ln_gamma(d) + 0.5 * nu * (d * x).ln();
    Ok((log_pref.exp()) * k)
}

/// Accidental-coincidence density at normalized rate `x`: the product of two
/// independent gamma intensities. Diverges at x = 0 for d = 1.
pub fn pdf_accidental(x: f64, d: f64) -> Result<f64, AnalyticsError> {
    check_d(d, "pdf_accidental")?;
    check_x(x, "pdf_accidental")?;
    if x == 0.0 {
        return Ok(if d == 1.0 { f64::INFINITY } else { 0.0 });
    }
    let k0 = bessel_k(0.0, 2.0 * d * x.sqrt())?;
    let log_pref = (2.0f64).ln() + 2.0 * d * d.ln() - 2.0 * ln_gamma(d) + (d - 1.0) * x.ln();
    Ok(log_pref.exp() * k0)
}

/// Uniform g2 density on [0, 2 mean].
pub fn pdf_g2_uniform(x: f64, mean: f64) -> Result<f64, AnalyticsError> {
    check_mean(mean, "pdf_g2_uniform")?;
    check_x(x, "pdf_g2_uniform")?;
    Ok(if x <= 2.0 * mean { 0.5 / mean } else { 0.0 })
}

/// Negative-log g2 density on [0, 2 mean]; diverges (integrably) at
/// x = mean, where +infinity is returned.
pub fn pdf_g2_neglog(
    x: f64,
    mean: f64,
    normalization: NegLogNormalization,
) -> Result<f64, AnalyticsError> {
    check_mean(mean, "pdf_g2_neglog")?;
    check_x(x, "pdf_g2_neglog")?;
    if x > 2.0 * mean {
        return Ok(0.0);
    }
    let t = (x / mean - 1.0).abs();
    if t == 0.0 {
        return Ok(f64::INFINITY);
    }
    let pref = match normalization {
        NegLogNormalization::Exact => 0.5 / mean,
        NegLogNormalization::PaperEq3 => 1.0 / (std::f64::consts::PI * mean),
    };
    Ok(-t.ln() * pref)
}

impl AnalyticPdf {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        match *self {
            AnalyticPdf::IntensityGamma { d } => check_d(d, "IntensityGamma"),
            AnalyticPdf::CoincidenceK { d } => check_d(d, "CoincidenceK"),
            AnalyticPdf::AccidentalProduct { d } => check_d(d, "AccidentalProduct"),
            AnalyticPdf::G2Uniform { mean } => check_mean(mean, "G2Uniform"),
            AnalyticPdf::G2NegLog { mean, .. } => check_mean(mean, "G2NegLog"),
        }
    }

    /// Density at `x >= 0`.
    pub fn density(&self, x: f64) -> Result<f64, AnalyticsError> {
        match *self {
            AnalyticPdf::IntensityGamma { d } => pdf_intensity_gamma(x, d),
            AnalyticPdf::CoincidenceK { d } => pdf_coincidence_k(x, d),
            AnalyticPdf::AccidentalProduct { d } => pdf_accidental(x, d),
            AnalyticPdf::G2Uniform { mean } => pdf_g2_uniform(x, mean),
            AnalyticPdf::G2NegLog { mean, normalization } => {
                pdf_g2_neglog(x, mean, normalization)
            }
        }
    }

    /// Upper integration limit beyond which the density (times x^2) is below
    /// numerical noise; in normalized units.
    fn tail_cutoff(&self) -> f64 {
        match *self {
            AnalyticPdf::IntensityGamma { d } => (90.0 + 20.0 * (1.0 + d).ln()) / d,
            AnalyticPdf::CoincidenceK { d } => 2500.0 / d,
            AnalyticPdf::AccidentalProduct { d } => 2500.0 / (d * d),
            AnalyticPdf::G2Uniform { mean } | AnalyticPdf::G2NegLog { mean, .. } => 2.0 * mean,
        }
    }

    /// Total mass by quadrature: 1 for every normalized family, 2/pi for the
    /// PaperEq3 convention.
    pub fn total_mass(&self) -> Result<f64, AnalyticsError> {
        self.validate()?;
        Ok(self.raw_moment(0))
    }

    /// Mean of the normalized shape (raw first moment divided by the mass).
    pub fn mean(&self) -> Result<f64, AnalyticsError> {
        self.validate()?;
        Ok(self.raw_moment(1) / self.raw_moment(0))
    }

    /// Variance of the normalized shape.
    pub fn variance(&self) -> Result<f64, AnalyticsError> {
        self.validate()?;
        let m0 = self.raw_moment(0);
        let m1 = self.raw_moment(1) / m0;
        let m2 = self.raw_moment(2) / m0;
        Ok(m2 - m1 * m1)
    }

    /// Speckle visibility of the shape: variance / mean^2.
    pub fn visibility(&self) -> Result<f64, AnalyticsError> {
        let m = self.mean()?;
        Ok(self.variance()? / (m * m))
    }

    /// CDF at `x`, from quadrature (closed form for the g2 families). For
    /// `PaperEq3` this is the integral of the stated sub-normalized density.
    pub fn cdf(&self, x: f64) -> Result<f64, AnalyticsError> {
        self.validate()?;
        check_x(x, "cdf")?;
        match *self {
            AnalyticPdf::G2Uniform { mean } => Ok((x / (2.0 * mean)).clamp(0.0, 1.0)),
            AnalyticPdf::G2NegLog { mean, normalization } => {
                let f = neglog_cdf_exact(x, mean);
                Ok(match normalization {
                    NegLogNormalization::Exact => f,
                    NegLogNormalization::PaperEq3 => f * std::f64::consts::FRAC_2_PI,
                })
            }
            _ => {
                let hi = x.min(self.tail_cutoff());
                if hi <= 0.0 {
                    return Ok(0.0);
                }
                let g = |t: f64| self.density(t).unwrap_or(0.0);
                let c = integrate_sqrt_sub(&g, hi, 1e-11);
                Ok(c.clamp(0.0, 1.0))
            }
        }
    }

    fn raw_moment(&self, order: i32) -> f64 {
        match *self {
            AnalyticPdf::G2Uniform { mean } => {
                // Closed moments of U[0, 2 mean].
                let b = 2.0 * mean;
                match order {
                    0 => 1.0,
                    1 => 0.5 * b,
                    _ => b.powi(order) / (order as f64 + 1.0),
                }
            }
            _ => {
                let hi = self.tail_cutoff();
                let g = |t: f64| self.density(t).unwrap_or(0.0) * t.powi(order);
                integrate_sqrt_sub(&g, hi, 1e-12)
            }
        }
    }
}

/// Exact-normalization CDF of the negative-log density.
fn neglog_cdf_exact(x: f64, mean: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 2.0 * mean {
        return 1.0;
    }
    if x <= mean {
        let v = 1.0 - x / mean;
        0.5 * (1.0 - v + v * v.ln())
    } else {
        1.0 - neglog_cdf_exact(2.0 * mean - x, mean)
    }
}

/// Visibility (variance / mean^2) of the coincidence K-distribution
/// restricted to normalized coincidence rates in [0, cutoff]: the value an
/// experiment with a finite rare-event ceiling actually estimates.
pub fn truncated_vc(d: f64, cutoff: f64) -> Result<f64, AnalyticsError> {
    check_d(d, "truncated_vc")?;
    if !cutoff.is_finite() || cutoff <= 0.0 {
        return Err(AnalyticsError::Domain {
            what: "truncated_vc",
            detail: format!("cutoff must be finite and > 0, got {cutoff}"),
        });
    }
    let pdf = AnalyticPdf::CoincidenceK { d };
    let g0 = |t: f64| pdf.density(t).unwrap_or(0.0);
    let g1 = |t: f64| pdf.density(t).unwrap_or(0.0) * t;
    let g2 = |t: f64| pdf.density(t).unwrap_or(0.0) * t * t;
    let m0 = integrate_sqrt_sub(&g0, cutoff, 1e-12);
    if m0 <= 0.0 {
        return Err(AnalyticsError::Degenerate {
            what: "truncated_vc",
            detail: "no probability mass below the cutoff".into(),
        });
    }
    let m1 = integrate_sqrt_sub(&g1, cutoff, 1e-12) / m0;
    let m2 = integrate_sqrt_sub(&g2, cutoff, 1e-12) / m0;
    Ok(m2 / (m1 * m1) - 1.0)
}
