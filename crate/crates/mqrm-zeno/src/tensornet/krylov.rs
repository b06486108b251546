//! Krylov (Lanczos) propagator for the local effective problems: applies
//! exp(c·H)·v for Hermitian H given only matrix-vector products, with an a
//! posteriori error estimate.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct KrylovResult {
    pub vector: Array1<C64>,
    /// Krylov subspace dimension actually used.
    pub dim_used: usize,
    /// β_j·|u_j| residual estimate at termination.
    pub error_est: f64,
}

/// exp(coeff·H)·v via Lanczos with full reorthogonalization. H must be
/// Hermitian (the tridiagonal projection is taken real). Terminates on the
/// residual estimate dropping below `tol`, happy breakdown, or `max_dim`.
pub fn expm_krylov(
    apply: &dyn Fn(&Array1<C64>) -> Array1<C64>,
    v: &Array1<C64>,
    coeff: C64,
    max_dim: usize,
    tol: f64,
) -> Result<KrylovResult> {
    let n = v.len();
    let beta0 = norm(v);
    if beta0 == 0.0 {
        return Ok(KrylovResult { vector: v.clone(), dim_used: 0, error_est: 0.0 });
    }
    let max_dim = max_dim.min(n).max(1);
    let mut basis: Vec<Array1<C64>> = vec![v.mapv(|z| z / beta0)];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut u = Array1::<C64>::zeros(1);
    let mut err = f64::INFINITY;

    for j in 0..max_dim {
        let mut w = apply(&basis[j]);
        let alpha = inner(&basis[j], &w).re;
        alphas.push(alpha);
        w.zip_mut_with(&basis[j], |wi, qi| *wi -= qi * alpha);
        if j > 0 {
            let b = betas[j - 1];
            w.zip_mut_with(&basis[j - 1], |wi, qi| *wi -= qi * b);
        }
        // full reorthogonalization against the whole basis
        for q in &basis {
            let c = inner(q, &w);
            w.zip_mut_with(q, |wi, qi| *wi -= qi * c);
        }
        let beta = norm(&w);

        u = small_exp(&alphas, &betas, coeff)?;
        err = beta * u[j].norm();
        if err <= tol || beta < 1e-14 || j + 1 == max_dim {
            break;
        }
        betas.push(beta);
        basis.push(w.mapv(|z| z / beta));
    }

    let mut out = Array1::<C64>::zeros(n);
    for (q, &c) in basis.iter().zip(u.iter()) {
        out.zip_mut_with(q, |oi, qi| *oi += qi * c * beta0);
    }
    Ok(KrylovResult { vector: out, dim_used: basis.len(), error_est: err })
}

fn inner(a: &Array1<C64>, b: &Array1<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &Array1<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// exp(coeff·T)·e₁ for the real symmetric tridiagonal T(alphas, betas).
fn small_exp(alphas: &[f64], betas: &[f64], coeff: C64) -> Result<Array1<C64>> {
    let k = alphas.len();
    let mut t = Array2::<f64>::zeros((k, k));
    for (i, &a) in alphas.iter().enumerate() {
        t[(i, i)] = a;
    }
    for (i, &b) in betas.iter().take(k - 1).enumerate() {
        t[(i, i + 1)] = b;
        t[(i + 1, i)] = b;
    }
    let (evals, evecs) = t
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Engine(format!("tridiagonal eigensolve failed: {e}")))?;
    let mut u = Array1::<C64>::zeros(k);
    for (idx, &lam) in evals.iter().enumerate() {
        let w = (coeff * lam).exp() * evecs[(0, idx)];
        for i in 0..k {
            u[i] += w * evecs[(i, idx)];
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_hermitian(n: usize, seed: u64) -> Array2<C64> {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let m = Array2::from_shape_fn((n, n), |_| C64::new(next(), next()));
        let md = m.t().mapv(|z| z.conj());
        &m + &md
    }

    fn dense_expm_apply(h: &Array2<C64>, v: &Array1<C64>, coeff: C64) -> Array1<C64> {
        // Taylor-series reference, independent of any LAPACK conventions
        let mut term = v.clone();
        let mut out = v.clone();
        for p in 1..120 {
            term = h.dot(&term).mapv(|z| z * coeff / p as f64);
            out += &term;
        }
        out
    }

    #[test]
    fn matches_dense_exponential() {
        let n = 24;
        let h = random_hermitian(n, 3);
        let v = Array1::from_shape_fn(n, |i| C64::new((i as f64 * 0.7).sin(), (i as f64).cos()));
        for &dt in &[0.05, 0.3] {
            let coeff = C64::new(0.0, -dt);
            let reference = dense_expm_apply(&h, &v, coeff);
            let apply = |x: &Array1<C64>| h.dot(x);
            let got = expm_krylov(&apply, &v, coeff, 24, 1e-13).unwrap();
            for (a, b) in got.vector.iter().zip(reference.iter()) {
                assert_relative_eq!(a.re, b.re, epsilon = 1e-9);
                assert_relative_eq!(a.im, b.im, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn preserves_norm_for_unitary_coeff() {
        let h = random_hermitian(16, 11);
        let v = Array1::from_shape_fn(16, |i| C64::new(1.0 / (i + 1) as f64, 0.3));
        let n0 = norm(&v);
        let apply = |x: &Array1<C64>| h.dot(x);
        let got = expm_krylov(&apply, &v, C64::new(0.0, -0.2), 16, 1e-13).unwrap();
        assert_relative_eq!(norm(&got.vector), n0, max_relative = 1e-10);
    }

    #[test]
    fn happy_breakdown_on_eigenvector() {
        // v an eigenvector: one Krylov dimension suffices
        let h = Array2::from_diag(&Array1::from(vec![
            C64::new(2.0, 0.0),
            C64::new(5.0, 0.0),
        ]));
        let v = Array1::from(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let apply = |x: &Array1<C64>| h.dot(x);
        let got = expm_krylov(&apply, &v, C64::new(0.0, -1.0), 8, 1e-12).unwrap();
        assert_eq!(got.dim_used, 1);
        let expect = C64::new(0.0, -2.0).exp();
        assert_relative_eq!(got.vector[0].re, expect.re, epsilon = 1e-12);
        assert_relative_eq!(got.vector[0].im, expect.im, epsilon = 1e-12);
    }

    #[test]
    fn zero_vector_passthrough() {
        let apply = |x: &Array1<C64>| x.clone();
        let v = Array1::<C64>::zeros(4);
        let got = expm_krylov(&apply, &v, C64::new(0.0, -1.0), 4, 1e-12).unwrap();
        assert_eq!(got.dim_used, 0);
        assert!(got.vector.iter().all(|z| z.norm() == 0.0));
    }
}
