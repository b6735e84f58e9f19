//! Small dense complex linear algebra: just enough QR and eigensolving for
//! Haar sampling and Schmidt decompositions. Matrices here are a few hundred
//! rows at most, so plain O(n^3) kernels without blocking are adequate.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

type C64 = Complex64;

/// Full Householder QR of a square matrix, returning the unitary factor with
/// the column phases fixed so that R has a real positive diagonal. Applied to
/// a Ginibre sample this yields the Haar distribution.
pub(crate) fn householder_qr_unitary(a: &Array2<C64>) -> Array2<C64> {
    let m = a.nrows();
    assert_eq!(m, a.ncols(), "householder_qr_unitary expects a square input");
    let mut r = a.clone();
    // Reflectors v_k, each of length m - k.
    let mut vs: Vec<Array1<C64>> = Vec::with_capacity(m);

    for k in 0..m {
        let len = m - k;
        let mut v = Array1::<C64>::zeros(len);
        for i in 0..len {
            v[i] = r[[k + i, k]];
        }
        let norm_x = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            vs.push(Array1::zeros(len));
            continue;
        }
        // alpha = -phase(x0) * |x|, so v = x - alpha e1 never cancels.
        let x0 = v[0];
        let phase = if x0.norm() == 0.0 { C64::new(1.0, 0.0) } else { x0 / x0.norm() };
        let alpha = -phase * norm_x;
        v[0] -= alpha;
        let norm_v = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm_v == 0.0 {
            vs.push(Array1::zeros(len));
            continue;
        }
        v.mapv_inplace(|z| z / norm_v);

        // r[k.., k..] -= 2 v (v^H r[k.., k..])
        for j in k..m {
            let mut dot = C64::new(0.0, 0.0);
            for i in 0..len {
                dot += v[i].conj() * r[[k + i, j]];
            }
            let dot2 = dot * 2.0;
            for i in 0..len {
                let upd = dot2 * v[i];
                r[[k + i, j]] -= upd;
            }
        }
        vs.push(v);
    }

    // Q = H_0 H_1 ... H_{m-1}; build by applying reflectors to I from the last
    // to the first.
    let mut q = Array2::<C64>::eye(m);
    for k in (0..m).rev() {
        let v = &vs[k];
        let len = m - k;
        if v.iter().all(|z| z.norm_sqr() == 0.0) {
            continue;
        }
        for j in 0..m {
            let mut dot = C64::new(0.0, 0.0);
            for i in 0..len {
                dot += v[i].conj() * q[[k + i, j]];
            }
            let dot2 = dot * 2.0;
            for i in 0..len {
                let upd = dot2 * v[i];
                q[[k + i, j]] -= upd;
            }
        }
    }

    // Column phase fix: U = Q diag(r_jj / |r_jj|).
    for j in 0..m {
        let d = r[[j, j]];
        let mag = d.norm();
        let lambda = if mag == 0.0 { C64::new(1.0, 0.0) } else { d / mag };
        for i in 0..m {
            q[[i, j]] *= lambda;
        }
    }
    q
}

/// Orthonormalizes the columns of a tall matrix in place (modified
/// Gram-Schmidt with one reorthogonalization pass). The implicit R has a real
/// positive diagonal, so for a Ginibre input the result is distributed as the
/// leading columns of a Haar unitary.
pub(crate) fn orthonormalize_columns(a: &mut Array2<C64>) {
    let (m, n) = (a.nrows(), a.ncols());
    assert!(n <= m, "cannot orthonormalize more columns than rows");
    for j in 0..n {
        for _pass in 0..2 {
            for i in 0..j {
                let mut dot = C64::new(0.0, 0.0);
                for row in 0..m {
                    dot += a[[row, i]].conj() * a[[row, j]];
                }
                for row in 0..m {
                    let upd = dot * a[[row, i]];
                    a[[row, j]] -= upd;
                }
            }
        }
        let norm = (0..m).map(|row| a[[row, j]].norm_sqr()).sum::<f64>().sqrt();
        assert!(norm > 0.0, "rank-deficient input to orthonormalize_columns");
        for row in 0..m {
            a[[row, j]] /= norm;
        }
    }
}

/// Largest deviation of U^H U from the identity, entrywise.
pub fn unitarity_defect(u: &Array2<C64>) -> f64 {
    let n = u.ncols();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let mut dot = C64::new(0.0, 0.0);
            for k in 0..u.nrows() {
                dot += u[[k, i]].conj() * u[[k, j]];
            }
            let target = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            worst = worst.max((dot - target).norm());
        }
    }
    worst
}

/// Eigenvalues of a Hermitian matrix by cyclic Jacobi rotations, sorted in
/// descending order. Quadratic convergence; 30 sweeps is far more than the
/// sizes used here ever need.
pub(crate) fn hermitian_eigenvalues(h: &Array2<C64>) -> Vec<f64> {
    let n = h.nrows();
    assert_eq!(n, h.ncols());
    let mut a = h.clone();
    let frob: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if frob == 0.0 {
        return vec![0.0; n];
    }
    let tol = 1e-14 * frob;

    for _sweep in 0..30 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q]].norm_sqr();
            }
        }
        if off.sqrt() < tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                let b = apq.norm();
                if b <= 1e-300 {
                    continue;
                }
                let ph = apq / b;
                let app = a[[p, p]].re;
                let aqq = a[[q, q]].re;
                let tau = (aqq - app) / (2.0 * b);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // G = D R with D = diag(1, conj(ph)) on (p, q); a <- G^H a G.
                for k in 0..n {
                    let hpk = a[[p, k]];
                    let hqk = a[[q, k]];
                    a[[p, k]] = hpk * c - hqk * (ph * s);
                    a[[q, k]] = hpk * s + hqk * (ph * c);
                }
                for k in 0..n {
                    let hkp = a[[k, p]];
                    let hkq = a[[k, q]];
                    a[[k, p]] = hkp * c - hkq * (ph.conj() * s);
                    a[[k, q]] = hkp * s + hkq * (ph.conj() * c);
                }
                a[[p, q]] = C64::new(0.0, 0.0);
                a[[q, p]] = C64::new(0.0, 0.0);
                a[[p, p]] = C64::new(a[[p, p]].re, 0.0);
                a[[q, q]] = C64::new(a[[q, q]].re, 0.0);
            }
        }
    }

    let mut eigs: Vec<f64> = (0..n).map(|i| a[[i, i]].re).collect();
    eigs.sort_by(|x, y| y.partial_cmp(x).unwrap());
    eigs
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn qr_of_identity_is_identity_up_to_phase() {
        let eye = Array2::<C64>::eye(4);
        let q = householder_qr_unitary(&eye);
        assert!(unitarity_defect(&q) < 1e-14);
        for i in 0..4 {
            assert_relative_eq!((q[[i, i]] - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn qr_produces_unitary_factor() {
        // Fixed pseudo-random complex matrix; unitarity must hold to near
        // machine precision regardless of conditioning.
        let mut seed = 0x1234_5678_u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let n = 24;
        let a = Array2::from_shape_fn((n, n), |_| c(next(), next()));
        let q = householder_qr_unitary(&a);
        assert!(unitarity_defect(&q) < 1e-12);
    }

    #[test]
    fn mgs_orthonormalizes_tall_matrix() {
        let mut seed = 0xabcd_u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let mut a = Array2::from_shape_fn((50, 3), |_| c(next(), next()));
        orthonormalize_columns(&mut a);
        assert!(unitarity_defect(&a) < 1e-13);
    }

    #[test]
    fn jacobi_matches_known_eigenvalues() {
        // Real symmetric 2x2: eigs 3 and 1.
        let h = array![[c(2.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(2.0, 0.0)]];
        let e = hermitian_eigenvalues(&h);
        assert_relative_eq!(e[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(e[1], 1.0, epsilon = 1e-12);

        // Complex Hermitian 2x2: [[1, i],[-i, 1]] has eigs 2 and 0.
        let h = array![[c(1.0, 0.0), c(0.0, 1.0)], [c(0.0, -1.0), c(1.0, 0.0)]];
        let e = hermitian_eigenvalues(&h);
        assert_relative_eq!(e[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(e[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn jacobi_preserves_trace_and_handles_rank_one() {
        // vv^H has eigenvalues {|v|^2, 0, 0}.
        let v = [c(1.0, 2.0), c(0.0, -1.0), c(3.0, 0.5)];
        let n = 3;
        let h = Array2::from_shape_fn((n, n), |(i, j)| v[i] * v[j].conj());
        let e = hermitian_eigenvalues(&h);
        let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        assert_relative_eq!(e[0], norm2, epsilon = 1e-10, max_relative = 1e-12);
        assert!(e[1].abs() < 1e-10 && e[2].abs() < 1e-10);
        let trace: f64 = e.iter().sum();
        assert_relative_eq!(trace, norm2, epsilon = 1e-10);
    }

    #[test]
    fn jacobi_matches_frozen_reference() {
        // Eigenvalues cross-checked against an independent dense solver:
        // H = [[4, 1+2i, 0], [1-2i, 3, -1i], [0, 1i, 1]]
        let h = array![
            [c(4.0, 0.0), c(1.0, 2.0), c(0.0, 0.0)],
            [c(1.0, -2.0), c(3.0, 0.0), c(0.0, -1.0)],
            [c(0.0, 0.0), c(0.0, 1.0), c(1.0, 0.0)]
        ];
        let e = hermitian_eigenvalues(&h);
        assert_relative_eq!(e[0], 5.873699902248, epsilon = 1e-9);
        assert_relative_eq!(e[1], 1.850256587243, epsilon = 1e-9);
        assert_relative_eq!(e[2], 0.276043510509, epsilon = 1e-9);
    }
}
