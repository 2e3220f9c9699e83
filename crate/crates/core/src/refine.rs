//! Low-rank Gauss-Newton polishing of a Gram matrix `W = C^T C`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grammap::{build_constraints, ConstraintSystem, MonomialBasis};
use crate::polyalg::{rational_to_f64, Monomial, Polynomial};
use crate::spectral::{schur_sym, SymMatrix};

/// Factor rows `c_i` (an `r x n` matrix) over a monomial basis, so that
/// `f ~ sum_i (c_i . mon)^2`.
#[derive(Clone, Debug)]
pub struct SosFactors {
    pub basis: MonomialBasis,
    pub coeffs: DMatrix<f64>,
}

impl SosFactors {
    pub fn new(basis: MonomialBasis, coeffs: DMatrix<f64>) -> Result<Self> {
        if coeffs.ncols() != basis.len() {
            return Err(Error::DimensionMismatch { expected: basis.len(), found: coeffs.ncols() });
        }
        Ok(SosFactors { basis, coeffs })
    }

    pub fn rank(&self) -> usize {
        self.coeffs.nrows()
    }

    /// `C^T C`.
    pub fn gram(&self) -> SymMatrix {
        SymMatrix::from_matrix(self.coeffs.transpose() * &self.coeffs).expect("square")
    }
}

/// `C = diag(sqrt(lambda_1..r)) Q_r^T` from the top `r` eigenpairs of `w`.
pub fn truncated_factor(w: &SymMatrix, r: usize, basis: &MonomialBasis) -> Result<SosFactors> {
    if w.n() != basis.len() {
        return Err(Error::DimensionMismatch { expected: basis.len(), found: w.n() });
    }
    let eig = schur_sym(w)?;
    let positive = eig.lambda.iter().filter(|&&l| l > 0.0).count();
    if r == 0 || r > positive {
        return Err(Error::InvalidArgument(format!(
            "rank {r} requested but the matrix has {positive} positive eigenvalues"
        )));
    }
    let n = w.n();
    let c = DMatrix::from_fn(r, n, |i, j| eig.lambda[i].sqrt() * eig.q[(j, i)]);
    SosFactors::new(basis.clone(), c)
}

/// Like [`truncated_factor`] but accepts any `1 <= r <= n`: eigenvalues below
/// `floor` are lifted to `floor`, so rank-deficient inputs still give a
/// starting point with `r` nonzero rows for Gauss-Newton.
pub fn padded_factor(w: &SymMatrix, r: usize, floor: f64, basis: &MonomialBasis) -> Result<SosFactors> {
    if w.n() != basis.len() {
        return Err(Error::DimensionMismatch { expected: basis.len(), found: w.n() });
    }
    let n = w.n();
    if r == 0 || r > n || !(floor >= 0.0) {
        return Err(Error::InvalidArgument(format!("rank {r} outside [1, {n}] or invalid floor")));
    }
    let eig = schur_sym(w)?;
    let c = DMatrix::from_fn(r, n, |i, j| eig.lambda[i].max(floor).sqrt() * eig.q[(j, i)]);
    SosFactors::new(basis.clone(), c)
}

/// `||coeffs(f - mon^T W mon)||_2`, counting monomials of `f` that no basis
/// product reaches.
pub fn backward_error(f: &Polynomial, w: &SymMatrix, basis: &MonomialBasis) -> Result<f64> {
    if w.n() != basis.len() {
        return Err(Error::DimensionMismatch { expected: basis.len(), found: w.n() });
    }
    let nv = f.nvars().max(basis.nvars());
    let mut acc: BTreeMap<Monomial, f64> = f.terms().map(|(m, c)| (m.with_nvars(nv), rational_to_f64(c))).collect();
    let mons: Vec<Monomial> = basis.monomials().iter().map(|m| m.with_nvars(nv)).collect();
    for i in 0..mons.len() {
        for j in 0..=i {
            let scale = if i == j { 1.0 } else { 2.0 };
            *acc.entry(mons[i].mul(&mons[j])).or_insert(0.0) -= scale * w.get(i, j);
        }
    }
    Ok(acc.values().map(|v| v * v).sum::<f64>().sqrt())
}

#[derive(Clone, Debug)]
pub struct RefineResult {
    pub factors: SosFactors,
    /// Backward error after refinement.
    pub theta: f64,
    /// Backward error of the starting point.
    pub theta_init: f64,
    pub converged: bool,
    pub gn_iterations: usize,
}

/// `b - A(C^T C)` for factor rows `c` (`r x n`).
pub fn factor_residual(cs: &ConstraintSystem, c: &DMatrix<f64>) -> Result<DVector<f64>> {
    let w = SymMatrix::from_matrix(c.transpose() * c)?;
    let aw = cs.apply(&w)?;
    Ok(DVector::from_iterator(cs.p(), cs.b().iter().zip(aw).map(|(b, a)| b - a)))
}

/// Jacobian of `A(C^T C)` with respect to `C`, columns ordered `(i, j) -> i n + j`.
pub fn factor_jacobian(cs: &ConstraintSystem, c: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, n) = c.shape();
    let mut j = DMatrix::zeros(cs.p(), r * n);
    for (m, row) in cs.rows().iter().enumerate() {
        for e in row {
            let coef = 2.0 * e.value;
            for i in 0..r {
                if e.row == e.col {
                    j[(m, i * n + e.row)] += coef * c[(i, e.row)];
                } else {
                    j[(m, i * n + e.row)] += coef * c[(i, e.col)];
                    j[(m, i * n + e.col)] += coef * c[(i, e.row)];
                }
            }
        }
    }
    j
}

/// Damped Gauss-Newton on `b - A(C^T C) = 0`. Each step is the least-norm
/// solution of the linearized system; the step is halved up to 20 times until
/// the residual decreases. Stops when `theta < tol`, after `max_gn` steps, or
/// when no damped step improves.
pub fn gauss_newton_refine(f: &Polynomial, init: &SosFactors, tol: f64, max_gn: usize) -> Result<RefineResult> {
    let cs = build_constraints(f, &init.basis)?;
    gauss_newton_refine_with(&cs, init, tol, max_gn)
}

/// [`gauss_newton_refine`] against a prebuilt constraint system.
pub fn gauss_newton_refine_with(cs: &ConstraintSystem, init: &SosFactors, tol: f64, max_gn: usize) -> Result<RefineResult> {
    if cs.n() != init.basis.len() {
        return Err(Error::DimensionMismatch { expected: cs.n(), found: init.basis.len() });
    }
    if init.coeffs.iter().any(|v| !v.is_finite()) || !tol.is_finite() {
        return Err(Error::NonFinite);
    }
    let mut c = init.coeffs.clone();
    let mut res = factor_residual(cs, &c)?;
    let theta_init = res.norm();
    let mut theta = theta_init;
    let mut iters = 0;
    while theta >= tol && iters < max_gn {
        let jac = factor_jacobian(cs, &c);
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.iter().fold(0.0f64, |a, &s| a.max(s));
        let cutoff = smax * 1e-12 * (svd.singular_values.len() as f64);
        let delta = svd.solve(&res, cutoff).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let step = DMatrix::from_row_slice(c.nrows(), c.ncols(), delta.as_slice());
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=20 {
            let trial = &c + &step * scale;
            let r = factor_residual(cs, &trial)?;
            let t = r.norm();
            if t.is_finite() && t < theta {
                accepted = Some((trial, r, t));
                break;
            }
            scale *= 0.5;
        }
        iters += 1;
        match accepted {
            Some((nc, nr, t)) => {
                c = nc;
                res = nr;
                theta = t;
            }
            None => break,
        }
    }
    Ok(RefineResult {
        factors: SosFactors::new(init.basis.clone(), c)?,
        theta,
        theta_init,
        converged: theta < tol,
        gn_iterations: iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammap::{build_basis, BasisOption};
    use crate::polyalg::parse_polynomial;

    fn basis_of(f: &Polynomial) -> MonomialBasis {
        build_basis(f, &BasisOption::Full).unwrap()
    }

    #[test]
    fn exact_factor_is_fixed() {
        let f = parse_polynomial("x1^2 + 2*x1 + 1").unwrap();
        let init = SosFactors::new(basis_of(&f), DMatrix::from_row_slice(1, 2, &[1.0, 1.0])).unwrap();
        let out = gauss_newton_refine(&f, &init, 1e-12, 10).unwrap();
        assert!(out.converged);
        assert_eq!(out.gn_iterations, 0);
        assert_eq!(out.theta, 0.0);
    }

    #[test]
    fn perturbed_factor_converges() {
        let f = parse_polynomial("x1^2 + 2*x1 + 1").unwrap();
        let init = SosFactors::new(basis_of(&f), DMatrix::from_row_slice(1, 2, &[1.01, 0.99])).unwrap();
        let out = gauss_newton_refine(&f, &init, 1e-12, 10).unwrap();
        assert!(out.converged, "theta {}", out.theta);
        let c = &out.factors.coeffs;
        assert!((c[(0, 0)].abs() - 1.0).abs() < 1e-8 && (c[(0, 1)].abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn insufficient_rank_stalls() {
        let f = parse_polynomial("x1^2 + 1").unwrap();
        let init = SosFactors::new(basis_of(&f), DMatrix::from_row_slice(1, 2, &[0.7, 0.7])).unwrap();
        let out = gauss_newton_refine(&f, &init, 1e-12, 20).unwrap();
        assert!(!out.converged);
        assert!(out.theta > 0.1);
    }

    #[test]
    fn truncated_factor_examples() {
        let b = basis_of(&parse_polynomial("x1^2").unwrap());
        let w = SymMatrix::from_diag(&[4.0, 1.0]);
        let f = truncated_factor(&w, 1, &b).unwrap();
        assert!((f.coeffs[(0, 0)].abs() - 2.0).abs() < 1e-12);
        assert!(f.coeffs[(0, 1)].abs() < 1e-12);
        assert!(truncated_factor(&w, 0, &b).is_err());
        assert!(truncated_factor(&w, 3, &b).is_err());
        let full = truncated_factor(&w, 2, &b).unwrap();
        assert!(full.gram().sub(&w).norm_fro() < 1e-12);
    }

    #[test]
    fn padded_factor_lifts_missing_directions() {
        let b = basis_of(&parse_polynomial("x1^2").unwrap());
        let w = SymMatrix::from_diag(&[4.0, 0.0]);
        let f = padded_factor(&w, 2, 1e-2, &b).unwrap();
        assert!((f.coeffs[(1, 1)].abs() - 0.1).abs() < 1e-12);
        assert!(padded_factor(&w, 3, 1e-2, &b).is_err());
    }

    #[test]
    fn backward_error_examples() {
        let f = parse_polynomial("x1^2").unwrap();
        let b = basis_of(&f);
        assert_eq!(backward_error(&f, &SymMatrix::zeros(2), &b).unwrap(), 1.0);
        assert_eq!(backward_error(&f, &SymMatrix::from_diag(&[0.0, 1.0]), &b).unwrap(), 0.0);
        // a monomial outside the basis products still counts
        let g = parse_polynomial("x1^2 + x2^4").unwrap();
        assert_eq!(backward_error(&g, &SymMatrix::from_diag(&[0.0, 1.0]), &b).unwrap(), 1.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let f = parse_polynomial("x1^4 + 2*x1^2*x2^2 + x2^4 + x1^2 + 1").unwrap();
        let b = basis_of(&f);
        let cs = build_constraints(&f, &b).unwrap();
        let n = b.len();
        let c = DMatrix::from_fn(2, n, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.5);
        let jac = factor_jacobian(&cs, &c);
        let h = 1e-6;
        for col in 0..2 * n {
            let mut cp = c.clone();
            cp[(col / n, col % n)] += h;
            let mut cm = c.clone();
            cm[(col / n, col % n)] -= h;
            // residual is b - A(.), so its derivative is -J
            let fd = (factor_residual(&cs, &cm).unwrap() - factor_residual(&cs, &cp).unwrap()) / (2.0 * h);
            for m in 0..cs.p() {
                assert!((fd[m] - jac[(m, col)]).abs() < 1e-6, "row {m} col {col}");
            }
        }
    }
}
