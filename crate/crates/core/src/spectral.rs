//! Dense symmetric matrices, eigendecompositions and eigenvalue thresholding.
//!
//! The full decomposition is backed by `nalgebra`'s symmetric QR algorithm.
//! The partial decomposition is a Lanczos process with full
//! reorthogonalization, falling back to the dense solver for small problems
//! or when many eigenpairs are requested.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dense symmetric `n x n` matrix. Constructors keep both triangles equal.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diag(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// Builds a matrix from the lower triangle of `f(i, j)`, `i >= j`.
    pub fn from_lower_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    /// Symmetrizes an arbitrary square matrix as `(M + M^T) / 2`.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        let t = m.transpose();
        Ok(SymMatrix((m + t) * 0.5))
    }

    /// Row-major rows, lower triangle authoritative.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: r.len() });
            }
        }
        Ok(Self::from_lower_fn(n, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Sets `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.0[(i, j)] = v;
        self.0[(j, i)] = v;
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| (0..self.n()).map(|j| self.0[(i, j)]).collect()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Frobenius inner product `trace(A^T B)`.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn norm_fro(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scale(&self, a: f64) -> SymMatrix {
        SymMatrix(&self.0 * a)
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0 * a)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    /// Spectral norm (largest absolute eigenvalue).
    pub fn norm_spectral(&self) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        SymmetricEigen::new(self.0.clone())
            .eigenvalues
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }

    fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.0 * v
    }
}

/// Eigenpairs `W q_i = lambda_i q_i` sorted by non-increasing eigenvalue.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// `n x k` matrix with orthonormal columns.
    pub q: DMatrix<f64>,
    pub lambda: Vec<f64>,
    /// `true` when all `n` eigenpairs are present.
    pub complete: bool,
}

impl EigenDecomposition {
    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn k(&self) -> usize {
        self.lambda.len()
    }

    /// `Q diag(lambda) Q^T` over the captured eigenpairs.
    pub fn reconstruct(&self) -> SymMatrix {
        self.reconstruct_with(|l| l)
    }

    fn reconstruct_with(&self, g: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.n();
        let mut out = DMatrix::zeros(n, n);
        for (i, &l) in self.lambda.iter().enumerate() {
            let w = g(l);
            if w == 0.0 {
                continue;
            }
            let col = self.q.column(i);
            out.ger(w, &col, &col, 1.0);
        }
        SymMatrix::from_matrix(out).expect("square")
    }

    fn sorted(mut q: DMatrix<f64>, lambda: Vec<f64>, complete: bool) -> Self {
        let mut order: Vec<usize> = (0..lambda.len()).collect();
        order.sort_by(|&a, &b| lambda[b].total_cmp(&lambda[a]).then(a.cmp(&b)));
        let n = q.nrows();
        let mut sq = DMatrix::zeros(n, order.len());
        let mut sl = Vec::with_capacity(order.len());
        for (dst, &src) in order.iter().enumerate() {
            let mut col = q.column(src).into_owned();
            // first clearly nonzero component positive
            if let Some(&v) = col.iter().find(|v| v.abs() > 1e-12) {
                if v < 0.0 {
                    col.neg_mut();
                }
            }
            sq.set_column(dst, &col);
            sl.push(lambda[src]);
        }
        q = sq;
        EigenDecomposition { q, lambda: sl, complete }
    }
}

/// Complete symmetric eigendecomposition `W = Q Lambda Q^T`.
pub fn schur_sym(w: &SymMatrix) -> Result<EigenDecomposition> {
    if !w.is_finite() {
        return Err(Error::NonFinite);
    }
    let n = w.n();
    if n == 0 {
        return Ok(EigenDecomposition { q: DMatrix::zeros(0, 0), lambda: vec![], complete: true });
    }
    let eig = SymmetricEigen::new(w.0.clone());
    Ok(EigenDecomposition::sorted(eig.eigenvectors, eig.eigenvalues.iter().copied().collect(), true))
}

/// How [`partial_schur`] computes the leading eigenpairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartialMethod {
    /// Dense for `n <= 200` or `s_k > n / 4`, Lanczos otherwise.
    #[default]
    Auto,
    Dense,
    Lanczos,
}

/// The `s_k` algebraically largest eigenpairs of `w`.
pub fn partial_schur(w: &SymMatrix, s_k: usize) -> Result<EigenDecomposition> {
    partial_schur_with(w, s_k, PartialMethod::Auto)
}

pub fn partial_schur_with(w: &SymMatrix, s_k: usize, method: PartialMethod) -> Result<EigenDecomposition> {
    let n = w.n();
    if s_k == 0 || s_k > n {
        return Err(Error::InvalidArgument(format!("s_k = {s_k} outside [1, {n}]")));
    }
    if !w.is_finite() {
        return Err(Error::NonFinite);
    }
    let dense = match method {
        PartialMethod::Dense => true,
        PartialMethod::Lanczos => s_k == n,
        PartialMethod::Auto => n <= 200 || 4 * s_k > n,
    };
    if dense {
        let full = schur_sym(w)?;
        return Ok(truncate(full, s_k));
    }
    lanczos_top(w, s_k)
}

fn truncate(full: EigenDecomposition, k: usize) -> EigenDecomposition {
    let n = full.n();
    if k == n {
        return full;
    }
    EigenDecomposition {
        q: full.q.columns(0, k).into_owned(),
        lambda: full.lambda[..k].to_vec(),
        complete: false,
    }
}

/// Lanczos with full reorthogonalization. The Krylov dimension grows until
/// the `k` leading Ritz pairs have residuals below `1e-12 * ||W||`, or the
/// space is exhausted (in which case the Ritz pairs are exact).
fn lanczos_top(w: &SymMatrix, k: usize) -> Result<EigenDecomposition> {
    let n = w.n();
    let scale = w.norm_fro().max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a2c);
    let mut v0 = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
    v0 /= v0.norm();

    let mut basis: Vec<DVector<f64>> = vec![v0];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut target = (2 * k + 20).min(n);

    loop {
        let mut exhausted = false;
        while alphas.len() < target {
            let j = alphas.len();
            let mut r = w.mul_vec(&basis[j]);
            let a = basis[j].dot(&r);
            alphas.push(a);
            // two passes of classical Gram-Schmidt against the whole basis
            for _ in 0..2 {
                for v in &basis {
                    let c = v.dot(&r);
                    r.axpy(-c, v, 1.0);
                }
            }
            let b = r.norm();
            if alphas.len() == n {
                exhausted = true;
                break;
            }
            if b <= 1e-14 * scale {
                // invariant subspace found; continue with a fresh orthogonal direction
                let mut fresh = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
                for _ in 0..2 {
                    for v in &basis {
                        let c = v.dot(&fresh);
                        fresh.axpy(-c, v, 1.0);
                    }
                }
                let fnorm = fresh.norm();
                betas.push(0.0);
                basis.push(fresh / fnorm);
            } else {
                betas.push(b);
                basis.push(r / b);
            }
        }

        let m = alphas.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let kk = k.min(m);
        let beta_m = if exhausted || m == n { 0.0 } else { betas.get(m - 1).copied().unwrap_or(0.0) };
        let converged = order[..kk]
            .iter()
            .all(|&i| (beta_m * eig.eigenvectors[(m - 1, i)]).abs() <= tol);

        if (converged && kk == k) || exhausted || m == n {
            let vmat = DMatrix::from_columns(&basis[..m]);
            let mut q = DMatrix::zeros(n, kk);
            let mut lambda = Vec::with_capacity(kk);
            for (dst, &i) in order[..kk].iter().enumerate() {
                let y = eig.eigenvectors.column(i);
                let mut x = &vmat * y;
                let nx = x.norm();
                x /= nx;
                q.set_column(dst, &x);
                lambda.push(eig.eigenvalues[i]);
            }
            return Ok(EigenDecomposition::sorted(q, lambda, k == n));
        }
        target = (target * 2).min(n);
    }
}

/// Eigenvalue soft-thresholding `Q diag((lambda_i - nu)_+) Q^T`.
pub fn threshold(decomp: &EigenDecomposition, nu: f64) -> Result<SymMatrix> {
    if !(nu >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold nu must be >= 0, got {nu}")));
    }
    Ok(decomp.reconstruct_with(|l| (l - nu).max(0.0)))
}

/// Convenience form of [`threshold`] that factorizes `w` first.
pub fn threshold_matrix(w: &SymMatrix, nu: f64) -> Result<SymMatrix> {
    threshold(&schur_sym(w)?, nu)
}

/// Sum of absolute eigenvalues.
pub fn nuclear_norm(w: &SymMatrix) -> Result<f64> {
    Ok(schur_sym(w)?.lambda.iter().map(|l| l.abs()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn zero_matrix_spectrum() {
        let d = schur_sym(&SymMatrix::zeros(4)).unwrap();
        assert_eq!(d.lambda, vec![0.0; 4]);
        assert!(d.complete);
    }

    #[test]
    fn diagonal_spectrum_sorted() {
        let w = SymMatrix::from_diag(&[1.0, 5.0, -3.0]);
        let d = schur_sym(&w).unwrap();
        assert_eq!(d.lambda, vec![5.0, 1.0, -3.0]);
        // permutation of I with positive signs
        assert!(close(d.q[(1, 0)], 1.0, 1e-14));
        assert!(close(d.q[(0, 1)], 1.0, 1e-14));
        assert!(close(d.q[(2, 2)], 1.0, 1e-14));
    }

    #[test]
    fn two_by_two_closed_form() {
        let w = SymMatrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let d = schur_sym(&w).unwrap();
        assert!(close(d.lambda[0], 4.0, 1e-14) && close(d.lambda[1], 2.0, 1e-14));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(d.q[(0, 0)], s, 1e-14) && close(d.q[(1, 0)], s, 1e-14));
        assert!(close(d.q[(0, 1)], s, 1e-14) && close(d.q[(1, 1)], -s, 1e-14));
        assert!(w.sub(&d.reconstruct()).norm_fro() <= 1e-12 * w.norm_fro());
    }

    #[test]
    fn non_finite_rejected() {
        let mut w = SymMatrix::zeros(2);
        w.set(0, 1, f64::NAN);
        assert!(matches!(schur_sym(&w), Err(Error::NonFinite)));
    }

    #[test]
    fn partial_examples() {
        let w = SymMatrix::from_diag(&[1.0, 5.0, -3.0]);
        let d = partial_schur(&w, 1).unwrap();
        assert_eq!(d.lambda, vec![5.0]);
        assert!(!d.complete);
        let full = partial_schur(&w, 3).unwrap();
        assert_eq!(full.lambda, schur_sym(&w).unwrap().lambda);
        assert!(partial_schur(&w, 0).is_err());
        assert!(partial_schur(&w, 4).is_err());
    }

    #[test]
    fn lanczos_handles_diagonal_and_exhaustion() {
        let w = SymMatrix::from_diag(&[1.0, 5.0, -3.0, 2.0, 0.5, 7.0]);
        let d = partial_schur_with(&w, 2, PartialMethod::Lanczos).unwrap();
        assert!(close(d.lambda[0], 7.0, 1e-10) && close(d.lambda[1], 5.0, 1e-10));
    }

    #[test]
    fn threshold_examples() {
        let z = threshold_matrix(&SymMatrix::zeros(3), 1.5).unwrap();
        assert_eq!(z.norm_fro(), 0.0);

        let d = threshold_matrix(&SymMatrix::from_diag(&[5.0, 1.0, -3.0]), 2.0).unwrap();
        assert!(d.sub(&SymMatrix::from_diag(&[3.0, 0.0, 0.0])).norm_fro() < 1e-14);

        let w = SymMatrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let t = threshold_matrix(&w, 2.5).unwrap();
        let expect = SymMatrix::from_rows(&[vec![0.75, 0.75], vec![0.75, 0.75]]).unwrap();
        assert!(t.sub(&expect).norm_fro() < 1e-14);

        assert!(threshold_matrix(&w, -0.1).is_err());
    }

    #[test]
    fn nuclear_norm_examples() {
        assert_eq!(nuclear_norm(&SymMatrix::zeros(3)).unwrap(), 0.0);
        let v = nuclear_norm(&SymMatrix::from_diag(&[5.0, 1.0, -3.0])).unwrap();
        assert!(close(v, 9.0, 1e-14));
    }
}
