//! Exact rational certificates: rounding, affine projection, exact LDL^T and
//! the final identity check `f = sum_i d_i q_i^2`.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammap::{ConstraintSystem, MonomialBasis};
use crate::polyalg::{fmt_rational, parse_polynomial_in, parse_rational, Monomial, Polynomial, Rational};
use crate::spectral::SymMatrix;

/// Dense symmetric matrix of rationals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalSymMatrix {
    rows: Vec<Vec<Rational>>,
}

impl RationalSymMatrix {
    /// Builds from the lower triangle of `f(i, j)`, `i >= j`.
    pub fn from_lower_fn(n: usize, mut f: impl FnMut(usize, usize) -> Rational) -> Self {
        let mut rows = vec![vec![Rational::zero(); n]; n];
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                rows[j][i] = v.clone();
                rows[i][j] = v;
            }
        }
        RationalSymMatrix { rows }
    }

    pub fn from_rows(rows: Vec<Vec<Rational>>) -> Result<Self> {
        let n = rows.len();
        for r in &rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: r.len() });
            }
        }
        for i in 0..n {
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::Format(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(RationalSymMatrix { rows })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_lower_fn(n, |i, j| if i == j { Rational::one() } else { Rational::zero() })
    }

    pub fn from_diag(d: &[Rational]) -> Self {
        Self::from_lower_fn(d.len(), |i, j| if i == j { d[i].clone() } else { Rational::zero() })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<Rational>] {
        &self.rows
    }

    pub fn to_f64(&self) -> SymMatrix {
        SymMatrix::from_lower_fn(self.n(), |i, j| crate::polyalg::rational_to_f64(&self.rows[i][j]))
    }

    pub fn to_strings(&self) -> Vec<Vec<String>> {
        self.rows.iter().map(|r| r.iter().map(fmt_rational).collect()).collect()
    }

    pub fn from_strings(rows: &[Vec<String>]) -> Result<Self> {
        let parsed = rows
            .iter()
            .map(|r| r.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(parsed)
    }

    /// `v^T W v`.
    pub fn quadratic(&self, v: &[Rational]) -> Rational {
        let mut acc = Rational::zero();
        for (i, vi) in v.iter().enumerate() {
            if vi.is_zero() {
                continue;
            }
            for (j, vj) in v.iter().enumerate() {
                if vj.is_zero() || self.rows[i][j].is_zero() {
                    continue;
                }
                acc += vi * &self.rows[i][j] * vj;
            }
        }
        acc
    }
}

/// Closest rational to `x` with denominator at most `bound`, from the
/// continued-fraction convergents and the last admissible semiconvergent.
pub fn best_rational(x: f64, bound: &BigInt) -> Result<Rational> {
    let exact = BigRational::from_float(x).ok_or(Error::NonFinite)?;
    Ok(best_rational_exact(&exact, bound))
}

fn best_rational_exact(x: &Rational, bound: &BigInt) -> Rational {
    if x.denom() <= bound {
        return x.clone();
    }
    // convergents h/k; (h0, k0) is the one before (h1, k1)
    let (mut h0, mut k0) = (BigInt::zero(), BigInt::one());
    let (mut h1, mut k1) = (BigInt::one(), BigInt::zero());
    let mut num = x.numer().clone();
    let mut den = x.denom().clone();
    loop {
        let (a, rem) = num.div_mod_floor(&den);
        let h2 = &a * &h1 + &h0;
        let k2 = &a * &k1 + &k0;
        if &k2 > bound {
            // largest j with k0 + j k1 <= bound
            let j = (bound - &k0) / &k1;
            let semi = Rational::new(&h0 + &j * &h1, &k0 + &j * &k1);
            let conv = Rational::new(h1, k1);
            let ds = (&semi - x).abs();
            let dc = (&conv - x).abs();
            return if ds < dc { semi } else { conv };
        }
        h0 = std::mem::replace(&mut h1, h2);
        k0 = std::mem::replace(&mut k1, k2);
        if rem.is_zero() {
            return Rational::new(h1, k1);
        }
        num = den;
        den = rem;
    }
}

/// Entrywise best rational approximation of the lower triangle.
pub fn rationalize(w: &SymMatrix, denom_bound: &BigInt) -> Result<RationalSymMatrix> {
    if denom_bound < &BigInt::one() {
        return Err(Error::InvalidArgument("denominator bound must be at least 1".into()));
    }
    let n = w.n();
    let mut out = RationalSymMatrix::from_lower_fn(n, |_, _| Rational::zero());
    for i in 0..n {
        for j in 0..=i {
            let v = best_rational(w.get(i, j), denom_bound)?;
            out.rows[j][i] = v.clone();
            out.rows[i][j] = v;
        }
    }
    Ok(out)
}

/// Sparse exact linear solve `M z = rhs` by row echelon reduction over the
/// rationals. Dependent rows are dropped when consistent; inconsistent rows
/// yield [`Error::Infeasible`]. Free variables are set to zero.
fn solve_sparse_exact(m: Vec<BTreeMap<usize, Rational>>, rhs: Vec<Rational>, ncols: usize) -> Result<Vec<Rational>> {
    let mut pivots: BTreeMap<usize, (BTreeMap<usize, Rational>, Rational)> = BTreeMap::new();
    for (mut row, mut r) in m.into_iter().zip(rhs) {
        while let Some((c, (prow, prhs))) = row.keys().next().copied().and_then(|c| pivots.get(&c).map(|p| (c, p))) {
            let factor = &row[&c] / &prow[&c];
            for (&j, v) in prow {
                let e = row.entry(j).or_insert_with(Rational::zero);
                *e -= &factor * v;
                if e.is_zero() {
                    row.remove(&j);
                }
            }
            r -= &factor * prhs;
        }
        match row.keys().next().copied() {
            Some(c) => {
                pivots.insert(c, (row, r));
            }
            None => {
                if !r.is_zero() {
                    return Err(Error::Infeasible);
                }
            }
        }
    }
    let mut z = vec![Rational::zero(); ncols];
    for (&c, (row, r)) in pivots.iter().rev() {
        let mut acc = r.clone();
        for (&j, v) in row.range(c + 1..) {
            if !z[j].is_zero() {
                acc -= v * &z[j];
            }
        }
        z[c] = acc / &row[&c];
    }
    Ok(z)
}

/// Orthogonal (Frobenius) projection onto `{W : A(W) = b}`:
/// `W* = w - A^*(M^{-1}(A(w) - b))` with `M_ij = <A_i, A_j>`.
pub fn project_affine_exact(w: &RationalSymMatrix, cs: &ConstraintSystem) -> Result<RationalSymMatrix> {
    if w.n() != cs.n() {
        return Err(Error::DimensionMismatch { expected: cs.n(), found: w.n() });
    }
    let aw = cs.apply_exact(w.rows())?;
    let resid: Vec<Rational> = aw.iter().zip(cs.b_exact()).map(|(a, b)| a - b).collect();
    if resid.iter().all(Zero::is_zero) {
        return Ok(w.clone());
    }

    let p = cs.p();
    let mut by_pos: BTreeMap<(usize, usize), Vec<(usize, Rational)>> = BTreeMap::new();
    for (i, row) in cs.rows().iter().enumerate() {
        for e in row {
            by_pos.entry((e.row, e.col)).or_default().push((i, e.coef.clone()));
        }
    }
    let two = Rational::from_integer(2.into());
    let mut gram: Vec<BTreeMap<usize, Rational>> = vec![BTreeMap::new(); p];
    for ((r, c), users) in &by_pos {
        let weight = if r == c { Rational::one() } else { two.clone() };
        for (i, ci) in users {
            for (j, cj) in users {
                let e = gram[*i].entry(*j).or_insert_with(Rational::zero);
                *e += &weight * ci * cj;
            }
        }
    }
    for row in &mut gram {
        row.retain(|_, v| !v.is_zero());
    }
    let z = solve_sparse_exact(gram, resid, p)?;
    let corr = cs.adjoint_exact(&z)?;
    let n = w.n();
    Ok(RationalSymMatrix::from_lower_fn(n, |i, j| &w.rows[i][j] - &corr[i][j]))
}

/// Exact symmetric-pivoted `W = sum_t d_t l_t l_t^T`.
#[derive(Clone, Debug)]
pub struct LdlFactors {
    /// Pivot index of each step.
    pub pivots: Vec<usize>,
    /// `l_t` in original indexing, `l_t[pivots[t]] = 1`.
    pub l: Vec<Vec<Rational>>,
    /// Positive pivots `d_t`.
    pub d: Vec<Rational>,
}

#[derive(Clone, Debug)]
pub enum PsdCheck {
    Psd(LdlFactors),
    /// `witness^T W witness = value < 0`.
    NotPsd { witness: Vec<Rational>, value: Rational },
}

impl PsdCheck {
    pub fn is_psd(&self) -> bool {
        matches!(self, PsdCheck::Psd(_))
    }
}

/// Exact LDL^T with complete symmetric pivoting on the largest remaining
/// diagonal entry (ties to the lowest index).
pub fn exact_psd_check(w: &RationalSymMatrix) -> PsdCheck {
    let n = w.n();
    let mut s = w.rows.clone();
    let mut active: Vec<bool> = vec![true; n];
    let mut fac = LdlFactors { pivots: vec![], l: vec![], d: vec![] };

    let lift = |u: Vec<Rational>, fac: &LdlFactors| -> Vec<Rational> {
        let mut x = u;
        for t in (0..fac.pivots.len()).rev() {
            let p = fac.pivots[t];
            let mut acc = Rational::zero();
            for (j, lj) in fac.l[t].iter().enumerate() {
                if j != p && !lj.is_zero() && !x[j].is_zero() {
                    acc -= lj * &x[j];
                }
            }
            x[p] = acc;
        }
        x
    };

    loop {
        let mut best: Option<usize> = None;
        for i in (0..n).filter(|&i| active[i]) {
            if best.is_none_or(|b| s[i][i] > s[b][b]) {
                best = Some(i);
            }
        }
        let Some(p) = best else { break };
        let dp = s[p][p].clone();
        if !dp.is_positive() {
            let mut u = vec![Rational::zero(); n];
            if let Some(i) = (0..n).find(|&i| active[i] && s[i][i].is_negative()) {
                u[i] = Rational::one();
            } else {
                // all remaining diagonal entries are zero
                let mut off = None;
                'search: for i in (0..n).filter(|&i| active[i]) {
                    for j in (0..n).filter(|&j| active[j] && j != i) {
                        if !s[i][j].is_zero() {
                            off = Some((i, j));
                            break 'search;
                        }
                    }
                }
                let Some((i, j)) = off else { break };
                u[i] = Rational::one();
                u[j] = if s[i][j].is_positive() { -Rational::one() } else { Rational::one() };
            }
            let witness = lift(u, &fac);
            let value = w.quadratic(&witness);
            return PsdCheck::NotPsd { witness, value };
        }
        let mut l = vec![Rational::zero(); n];
        for j in (0..n).filter(|&j| active[j]) {
            l[j] = &s[j][p] / &dp;
        }
        active[p] = false;
        let idx: Vec<usize> = (0..n).filter(|&j| active[j] && !s[j][p].is_zero()).collect();
        for &i in &idx {
            let sip = s[i][p].clone();
            for &j in &idx {
                if j < i {
                    continue;
                }
                let v = &s[i][j] - &sip * &l[j];
                s[j][i] = v.clone();
                s[i][j] = v;
            }
        }
        fac.pivots.push(p);
        fac.l.push(l);
        fac.d.push(dp);
    }
    PsdCheck::Psd(fac)
}

/// Why a certificate is not exact.
#[derive(Clone, Debug)]
pub enum CertificateFailure {
    /// `f - mon^T W mon`, nonzero.
    Residual(Polynomial),
    NotPsd { witness: Vec<Rational>, value: Rational },
    /// `f - sum d_i q_i^2` after re-expansion, nonzero.
    Reexpansion(Polynomial),
}

impl std::fmt::Display for CertificateFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CertificateFailure::Residual(r) => write!(f, "identity fails, residual {r}"),
            CertificateFailure::NotPsd { witness, value } => {
                let w: Vec<String> = witness.iter().map(fmt_rational).collect();
                write!(f, "Gram matrix not PSD: v^T W v = {} for v = [{}]", fmt_rational(value), w.join(", "))
            }
            CertificateFailure::Reexpansion(r) => write!(f, "re-expanded squares differ by {r}"),
        }
    }
}

/// `f = sum_i weights[i] * squares[i]^2` with a rational Gram matrix.
#[derive(Clone, Debug)]
pub struct SosCertificate {
    pub gram: RationalSymMatrix,
    pub weights: Vec<Rational>,
    pub squares: Vec<Polynomial>,
    pub basis: MonomialBasis,
    pub exact: bool,
    pub failure: Option<CertificateFailure>,
}

impl SosCertificate {
    pub fn to_file(&self) -> CertificateFile {
        CertificateFile {
            exact: self.exact,
            weights: self.weights.iter().map(fmt_rational).collect(),
            squares: self.squares.iter().map(|q| q.to_string()).collect(),
            gram: self.gram.to_strings(),
            basis: Some(self.basis.monomials().iter().map(|m| m.to_string()).collect()),
        }
    }
}

/// Exactly checks `f = mon^T W mon`, `W` PSD, and the weighted squares.
pub fn certify(f: &Polynomial, w: &RationalSymMatrix, basis: &MonomialBasis) -> Result<SosCertificate> {
    if w.n() != basis.len() {
        return Err(Error::DimensionMismatch { expected: basis.len(), found: w.n() });
    }
    let mut cert = SosCertificate {
        gram: w.clone(),
        weights: vec![],
        squares: vec![],
        basis: basis.clone(),
        exact: false,
        failure: None,
    };
    let nv = basis.nvars().max(f.nvars());
    let resid = &f.with_nvars(nv) - &basis.quadratic_form(w.rows());
    if !resid.is_zero() {
        cert.failure = Some(CertificateFailure::Residual(resid));
        return Ok(cert);
    }
    let fac = match exact_psd_check(w) {
        PsdCheck::Psd(fac) => fac,
        PsdCheck::NotPsd { witness, value } => {
            cert.failure = Some(CertificateFailure::NotPsd { witness, value });
            return Ok(cert);
        }
    };
    cert.squares = fac.l.iter().map(|l| basis.combine(l).with_nvars(nv)).collect();
    cert.weights = fac.d;
    let resid = &f.with_nvars(nv) - &weighted_square_sum(&cert.weights, &cert.squares, nv);
    if !resid.is_zero() {
        cert.failure = Some(CertificateFailure::Reexpansion(resid));
        return Ok(cert);
    }
    cert.exact = true;
    Ok(cert)
}

/// `sum_i w_i q_i^2`.
pub fn weighted_square_sum(weights: &[Rational], squares: &[Polynomial], nvars: usize) -> Polynomial {
    let mut acc = Polynomial::zero(nvars);
    for (d, q) in weights.iter().zip(squares) {
        acc = &acc + &q.square().scale(d);
    }
    acc
}

/// JSON layout of a certificate. `basis` is optional on input; when absent
/// the full basis of degree `deg(f) / 2` is assumed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateFile {
    pub exact: bool,
    pub weights: Vec<String>,
    pub squares: Vec<String>,
    pub gram: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<String>>,
}

/// Outcome of re-checking a certificate file against a polynomial.
#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub exact: bool,
    pub problems: Vec<String>,
}

/// Re-runs every exact check on a stored certificate: the Gram identity,
/// PSD-ness of the Gram matrix, positivity of the weights, and
/// `f = sum weights[i] squares[i]^2`.
pub fn verify_certificate(f: &Polynomial, file: &CertificateFile) -> Result<VerifyReport> {
    let gram = RationalSymMatrix::from_strings(&file.gram)?;
    let nv_hint = f.nvars();
    let basis = match &file.basis {
        Some(ms) => {
            let parsed = ms.iter().map(|m| Monomial::parse(m, nv_hint)).collect::<Result<Vec<_>>>()?;
            let nv = parsed.iter().map(Monomial::nvars).max().unwrap_or(0).max(nv_hint);
            MonomialBasis::new(nv, parsed)?
        }
        None => crate::grammap::build_basis(f, &crate::grammap::BasisOption::Full)?,
    };
    let nv = basis.nvars().max(nv_hint);
    let mut problems = Vec::new();
    let cert = certify(f, &gram, &basis)?;
    if let Some(fail) = &cert.failure {
        problems.push(fail.to_string());
    }
    if file.weights.len() != file.squares.len() {
        problems.push(format!("{} weights but {} squares", file.weights.len(), file.squares.len()));
    } else {
        let weights = file.weights.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>()?;
        let squares = file.squares.iter().map(|s| parse_polynomial_in(s, nv)).collect::<Result<Vec<_>>>()?;
        if let Some(w) = weights.iter().find(|w| !w.is_positive()) {
            problems.push(format!("weight {} is not positive", fmt_rational(w)));
        }
        let resid = &f.with_nvars(nv) - &weighted_square_sum(&weights, &squares, nv);
        if !resid.is_zero() {
            problems.push(format!("weighted squares differ from f by {resid}"));
        }
    }
    Ok(VerifyReport { exact: problems.is_empty(), problems })
}
