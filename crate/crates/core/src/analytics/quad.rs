//! Adaptive Simpson quadrature. The densities integrated here are smooth
//! away from x = 0; endpoint singularities (x^(d-1)/2 factors, log kinks of
//! K_0) are removed before integration by the u = sqrt(x) substitution, so a
//! refining Simpson rule reaches 1e-10 accuracy cheaply.

/// Integrates `f` over [a, b] to absolute tolerance `tol` (plus a relative
/// floor), by recursive interval halving.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    adapt(f, a, b, fa, fm, fb, whole, tol, 52)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = left + right - whole;
    if depth == 0 || err.abs() <= 15.0 * tol.max(1e-300) {
        return left + right + err / 15.0;
    }
    adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Integrates `g` over [0, x_max] after substituting u = sqrt(x):
/// int_0^X g(x) dx = int_0^sqrt(X) g(u^2) 2u du.
/// `g` may diverge integrably at 0; the substituted integrand is evaluated
/// only at u > 0.
pub fn integrate_sqrt_sub<G: Fn(f64) -> f64>(g: &G, x_max: f64, tol: f64) -> f64 {
    assert!(x_max >= 0.0);
    if x_max == 0.0 {
        return 0.0;
    }
    let h = |u: f64| {
        if u == 0.0 {
            0.0
        } else {
            let v = g(u * u) * 2.0 * u;
            if v.is_finite() {
                v
            } else {
                0.0
            }
        }
    };
    integrate(&h, 0.0, x_max.sqrt(), tol)
}
