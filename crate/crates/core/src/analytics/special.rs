//! Scalar special functions backing the analytic densities: log-gamma,
//! modified Bessel K of real order, regularized incomplete gamma, and the
//! Kolmogorov tail. All hand-rolled so the crate stays dependency-light and
//! every approximation regime is visible and testable.

// Coefficient tables and frozen reference values keep their source digits
// even where f64 rounds them away.
#![allow(clippy::excessive_precision)]

use super::AnalyticsError;

const EULER: f64 = 0.577_215_664_901_532_9;
/// Odd Taylor coefficient b3 of 1/Gamma(1+x); used in the small-order limit
/// of the Temme series.
const INV_GAMMA_B3: f64 = -0.042_002_635_034_095_235;
const EPS: f64 = 1e-16;

/// Natural log of the gamma function for x > 0 (Lanczos, g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires x > 0, got {x}");
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection keeps the series in its accurate range.
        let s = (std::f64::consts::PI * x).sin();
        return std::f64::consts::PI.ln() - s.ln() - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut a = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    let t = z + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + a.ln()
}

/// Gamma function for x > 0.
pub fn gamma_fn(x: f64) -> f64 {
    ln_gamma(x).exp()
}

/// Modified Bessel function of the second kind, real order `nu >= 0`,
/// argument `z > 0`.
///
/// Small arguments (z < 2) use the Temme power series for orders in
/// [-1/2, 1/2]; larger arguments use Steed's continued fraction. Either seed
/// is walked up in order with the stable upward recurrence
/// `K_{v+1} = K_{v-1} + (2v/z) K_v`.
pub fn bessel_k(nu: f64, z: f64) -> Result<f64, AnalyticsError> {
    if !nu.is_finite() || !z.is_finite() || nu < 0.0 || z <= 0.0 {
        return Err(AnalyticsError::Domain {
            what: "bessel_k",
            detail: format!("requires nu >= 0 and z > 0, got nu={nu}, z={z}"),
        });
    }
    let nl = (nu + 0.5).floor() as i64;
    let xmu = nu - nl as f64; // in [-1/2, 1/2]
    let xi2 = 2.0 / z;

    let (mut rkmu, mut rk1) = if z < 2.0 {
        temme_series(xmu, z)
    } else {
        steed_cf2(xmu, z)
    };

    for i in 1..=nl {
        let rktemp = (xmu + i as f64) * xi2 * rk1 + rkmu;
        rkmu = rk1;
        rk1 = rktemp;
        if !rk1.is_finite() {
            return Err(AnalyticsError::Overflow {
                what: "bessel_k",
                detail: format!("K_nu overflowed during recurrence at nu={nu}, z={z}"),
            });
        }
    }
    Ok(rkmu)
}

/// Temme's series for K_mu(z), K_{mu+1}(z) with |mu| <= 1/2 and z < 2.
fn temme_series(xmu: f64, z: f64) -> (f64, f64) {
    let xmu2 = xmu * xmu;
    let x2 = 0.5 * z;
    let pimu = std::f64::consts::PI * xmu;
    let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
    let d = -x2.ln();
    let e = xmu * d;
    let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };

    // gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu): cancellation-free via
    // the Taylor series once mu is tiny.
    let gampl = 1.0 / gamma_fn(1.0 + xmu);
    let gammi = 1.0 / gamma_fn(1.0 - xmu);
    let gam1 = if xmu.abs() < 1e-4 {
        -(EULER + INV_GAMMA_B3 * xmu2)
    } else {
        (gammi - gampl) / (2.0 * xmu)
    };
    let gam2 = 0.5 * (gammi + gampl);

    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let e = e.exp();
    let mut p = 0.5 * e / gampl;
    let mut q = 0.5 / (e * gammi);
    let mut c = 1.0;
    let d2 = x2 * x2;
    let mut sum1 = p;
    for i in 1..=200 {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - xmu2);
        c *= d2 / fi;
        p /= fi - xmu;
        q /= fi + xmu;
        let del = c * ff;
        sum += del;
        let del1 = c * (p - fi * ff);
        sum1 += del1;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum, sum1 * 2.0 / z)
}

/// Steed's continued fraction CF2 for K_mu(z), K_{mu+1}(z) with z >= 2.
fn steed_cf2(xmu: f64, z: f64) -> (f64, f64) {
    let xmu2 = xmu * xmu;
    let mut b = 2.0 * (1.0 + z);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - xmu2;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..=10_000 {
        a -= 2.0 * (i as f64 - 1.0);
        c = -a * c / i as f64;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    let h = a1 * h;
    let rkmu = (std::f64::consts::PI / (2.0 * z)).sqrt() * (-z).exp() / s;
    let rk1 = rkmu * (xmu + z + 0.5 - h) / z;
    (rkmu, rk1)
}

/// Regularized lower incomplete gamma P(a, x); Q(a, x) = 1 - P(a, x).
/// Series for x < a + 1, continued fraction otherwise.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_p domain: a > 0, x >= 0");
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // Series: P = x^a e^-x / Gamma(a) * sum x^n / (a (a+1) ... (a+n))
        let mut ap = a;
        let mut sum = 1.0 / a;
        let mut del = sum;
        for _ in 0..500 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        sum * (a * x.ln() - x - ln_gamma(a)).exp()
    } else {
        1.0 - gamma_q_cf(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_q domain: a > 0, x >= 0");
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

/// Lentz continued fraction for Q(a, x), x >= a + 1.
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (a * x.ln() - x - ln_gamma(a)).exp() * h
}

/// Kolmogorov distribution tail Q(lambda) = 2 sum_{k>=1} (-1)^{k-1}
/// exp(-2 k^2 lambda^2); the asymptotic p-value of sqrt(n) * D.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.04 {
        // CDF < 1e-300 here; Q is 1 to every representable digit.
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-transformed series for the CDF converges fast at small
        // lambda, where the direct alternating series is useless.
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda
            * (y + y.powi(9) + y.powi(25) + y.powi(49));
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-18 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
