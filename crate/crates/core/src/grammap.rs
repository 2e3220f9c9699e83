//! Monomial bases and the coefficient-matching linear map `A(W) = b`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polyalg::{fmt_rational, parse_rational, rational_to_f64, Monomial, Polynomial, Rational};
use crate::spectral::SymMatrix;

/// Ordered, duplicate-free list of monomials indexing the Gram matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonomialBasis {
    monomials: Vec<Monomial>,
    nvars: usize,
    max_degree: u32,
}

impl MonomialBasis {
    /// Validates, pads and sorts a caller-supplied list.
    pub fn new(nvars: usize, monomials: Vec<Monomial>) -> Result<Self> {
        let mut ms: Vec<Monomial> = Vec::with_capacity(monomials.len());
        for m in monomials {
            if m.nvars() > nvars {
                return Err(Error::NvarsMismatch { expected: nvars, found: m.nvars() });
            }
            ms.push(m.with_nvars(nvars));
        }
        ms.sort();
        if let Some(w) = ms.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("duplicate basis monomial {}", w[0])));
        }
        let max_degree = ms.iter().map(Monomial::degree).max().unwrap_or(0);
        Ok(MonomialBasis { monomials: ms, nvars, max_degree })
    }

    /// All monomials of degree `<= d` in `nvars` variables, canonical order.
    pub fn full(nvars: usize, d: u32) -> Self {
        let mut ms: Vec<Monomial> = (0..=d).flat_map(|k| monomials_of_degree(nvars, k)).collect();
        ms.sort();
        MonomialBasis { monomials: ms, nvars, max_degree: d }
    }

    /// All monomials of degree exactly `d`.
    pub fn homogeneous(nvars: usize, d: u32) -> Self {
        let mut ms = monomials_of_degree(nvars, d);
        ms.sort();
        MonomialBasis { monomials: ms, nvars, max_degree: d }
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn get(&self, i: usize) -> &Monomial {
        &self.monomials[i]
    }

    /// Polynomial `sum_i coeffs[i] * basis[i]`.
    pub fn combine(&self, coeffs: &[Rational]) -> Polynomial {
        Polynomial::from_terms(
            self.nvars,
            self.monomials.iter().cloned().zip(coeffs.iter().cloned()),
        )
    }

    /// Exact `mon^T W mon`.
    pub fn quadratic_form(&self, w: &[Vec<Rational>]) -> Polynomial {
        let mut acc: BTreeMap<Monomial, Rational> = BTreeMap::new();
        for (i, mi) in self.monomials.iter().enumerate() {
            for (j, mj) in self.monomials.iter().enumerate() {
                if w[i][j].is_zero() {
                    continue;
                }
                *acc.entry(mi.mul(mj)).or_insert_with(Rational::zero) += &w[i][j];
            }
        }
        Polynomial::from_terms(self.nvars, acc)
    }
}

fn monomials_of_degree(nvars: usize, d: u32) -> Vec<Monomial> {
    fn rec(var: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Monomial>) {
        if var + 1 == cur.len() {
            cur[var] = left;
            out.push(Monomial::new(cur.clone()));
            return;
        }
        for e in (0..=left).rev() {
            cur[var] = e;
            rec(var + 1, left - e, cur, out);
        }
        cur[var] = 0;
    }
    if nvars == 0 {
        return if d == 0 { vec![Monomial::one(0)] } else { vec![] };
    }
    let mut out = Vec::new();
    rec(0, d, &mut vec![0; nvars], &mut out);
    out
}

/// Basis selection for [`build_basis`].
#[derive(Clone, Debug, Default)]
pub enum BasisOption {
    /// All monomials of degree `<= deg(f) / 2`.
    #[default]
    Full,
    /// Monomials of degree exactly `deg(f) / 2`; requires homogeneous `f`.
    Homogeneous,
    Custom(Vec<Monomial>),
}

pub fn build_basis(f: &Polynomial, option: &BasisOption) -> Result<MonomialBasis> {
    let deg = f.degree();
    if deg % 2 == 1 {
        return Err(Error::OddDegree(deg));
    }
    let d = deg / 2;
    match option {
        BasisOption::Full => Ok(MonomialBasis::full(f.nvars(), d)),
        BasisOption::Homogeneous => {
            if !f.is_homogeneous() {
                return Err(Error::InvalidArgument("homogeneous basis requested for a non-homogeneous polynomial".into()));
            }
            Ok(MonomialBasis::homogeneous(f.nvars(), d))
        }
        BasisOption::Custom(ms) => {
            let nv = ms.iter().map(Monomial::nvars).max().unwrap_or(0).max(f.nvars());
            MonomialBasis::new(nv, ms.clone())
        }
    }
}

/// One stored entry of a symmetric constraint matrix `A_i`, `row <= col`.
/// An off-diagonal entry stands for both `(row, col)` and `(col, row)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub coef: Rational,
    pub value: f64,
}

/// The linear map `A: S^n -> R^p` with `A(W)_i = <A_i, W>`, plus `b`.
#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    n: usize,
    rows: Vec<Vec<Entry>>,
    b: Vec<f64>,
    b_exact: Vec<Rational>,
    labels: Option<Vec<Monomial>>,
}

impl ConstraintSystem {
    /// Builds a system from raw rows. Entries with `row > col` are swapped.
    pub fn new(n: usize, rows: Vec<Vec<(usize, usize, Rational)>>, b: Vec<Rational>) -> Result<Self> {
        if rows.len() != b.len() {
            return Err(Error::DimensionMismatch { expected: rows.len(), found: b.len() });
        }
        let mut out = Vec::with_capacity(rows.len());
        for row in rows {
            let mut merged: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
            for (i, j, c) in row {
                let (r, c2) = if i <= j { (i, j) } else { (j, i) };
                if c2 >= n {
                    return Err(Error::DimensionMismatch { expected: n, found: c2 + 1 });
                }
                *merged.entry((r, c2)).or_insert_with(Rational::zero) += c;
            }
            out.push(
                merged
                    .into_iter()
                    .filter(|(_, c)| !c.is_zero())
                    .map(|((row, col), coef)| Entry { row, col, value: rational_to_f64(&coef), coef })
                    .collect(),
            );
        }
        let bf = b.iter().map(rational_to_f64).collect();
        Ok(ConstraintSystem { n, rows: out, b: bf, b_exact: b, labels: None })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<Entry>] {
        &self.rows
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn b_exact(&self) -> &[Rational] {
        &self.b_exact
    }

    /// Product monomial for each row, when built from a polynomial.
    pub fn labels(&self) -> Option<&[Monomial]> {
        self.labels.as_deref()
    }

    pub fn b_norm(&self) -> f64 {
        self.b.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `y_i = <A_i, W>`.
    pub fn apply(&self, w: &SymMatrix) -> Result<Vec<f64>> {
        if w.n() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: w.n() });
        }
        let m = w.as_matrix();
        Ok(self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| {
                        let v = m[(e.row, e.col)];
                        if e.row == e.col {
                            e.value * v
                        } else {
                            2.0 * e.value * v
                        }
                    })
                    .sum()
            })
            .collect())
    }

    /// `A^*(y) = sum_i y_i A_i`.
    pub fn adjoint(&self, y: &[f64]) -> Result<SymMatrix> {
        if y.len() != self.p() {
            return Err(Error::DimensionMismatch { expected: self.p(), found: y.len() });
        }
        let mut m = DMatrix::zeros(self.n, self.n);
        for (row, &yi) in self.rows.iter().zip(y) {
            if yi == 0.0 {
                continue;
            }
            for e in row {
                m[(e.row, e.col)] += yi * e.value;
                if e.row != e.col {
                    m[(e.col, e.row)] += yi * e.value;
                }
            }
        }
        Ok(SymMatrix::from_matrix(m).expect("square"))
    }

    /// Exact `A(W)` for a rational matrix given as dense rows.
    pub fn apply_exact(&self, w: &[Vec<Rational>]) -> Result<Vec<Rational>> {
        if w.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: w.len() });
        }
        let two = Rational::from_integer(2.into());
        Ok(self
            .rows
            .iter()
            .map(|row| {
                let mut acc = Rational::zero();
                for e in row {
                    let t = &e.coef * &w[e.row][e.col];
                    if e.row == e.col {
                        acc += t;
                    } else {
                        acc += t * &two;
                    }
                }
                acc
            })
            .collect())
    }

    /// Exact `A^*(y)` as dense rows.
    pub fn adjoint_exact(&self, y: &[Rational]) -> Result<Vec<Vec<Rational>>> {
        if y.len() != self.p() {
            return Err(Error::DimensionMismatch { expected: self.p(), found: y.len() });
        }
        let mut m = vec![vec![Rational::zero(); self.n]; self.n];
        for (row, yi) in self.rows.iter().zip(y) {
            if yi.is_zero() {
                continue;
            }
            for e in row {
                let t = &e.coef * yi;
                if e.row != e.col {
                    m[e.col][e.row] += &t;
                }
                m[e.row][e.col] += t;
            }
        }
        Ok(m)
    }

    /// `||A||_2^2` by power iteration on `W -> A^*(A(W))`, times 1.01.
    pub fn op_norm_sq(&self) -> f64 {
        if self.p() == 0 || self.n == 0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x0a_5eed);
        let mut w = SymMatrix::from_lower_fn(self.n, |_, _| rng.gen::<f64>() - 0.5);
        let mut est = 0.0f64;
        for _ in 0..500 {
            let nw = w.norm_fro();
            if nw == 0.0 {
                return 0.0;
            }
            w = w.scale(1.0 / nw);
            let aw = self.apply(&w).expect("dims");
            let rq: f64 = aw.iter().map(|v| v * v).sum();
            let next = self.adjoint(&aw).expect("dims");
            let done = (rq - est).abs() <= 1e-6 * rq.abs().max(f64::MIN_POSITIVE);
            est = rq;
            w = next;
            if done {
                break;
            }
        }
        est * 1.01
    }

    /// `A^*(b)`, used for the continuation schedule.
    pub fn adjoint_b(&self) -> SymMatrix {
        self.adjoint(&self.b).expect("dims")
    }

    /// Serializes to the JSON dump format.
    pub fn to_json(&self) -> ConstraintFile {
        ConstraintFile {
            n: self.n,
            p: self.p(),
            rows: self
                .rows
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|e| {
                            let c = if e.coef.is_integer() {
                                serde_json::Value::from(e.coef.to_integer().to_i64().unwrap_or(0))
                            } else {
                                serde_json::Value::from(fmt_rational(&e.coef))
                            };
                            (e.row, e.col, c)
                        })
                        .collect()
                })
                .collect(),
            b: self.b_exact.iter().map(fmt_rational).collect(),
        }
    }

    pub fn from_json(file: &ConstraintFile) -> Result<Self> {
        if file.rows.len() != file.p {
            return Err(Error::Format(format!("p = {} but {} rows given", file.p, file.rows.len())));
        }
        if file.b.len() != file.p {
            return Err(Error::Format(format!("p = {} but b has {} entries", file.p, file.b.len())));
        }
        let mut rows = Vec::with_capacity(file.p);
        for (k, row) in file.rows.iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for (i, j, c) in row {
                if *i >= file.n || *j >= file.n {
                    return Err(Error::Format(format!("row {k}: index ({i}, {j}) outside n = {}", file.n)));
                }
                let coef = match c {
                    serde_json::Value::String(s) => parse_rational(s)?,
                    serde_json::Value::Number(num) => {
                        if let Some(i) = num.as_i64() {
                            Rational::from_integer(i.into())
                        } else {
                            let f = num.as_f64().unwrap_or(f64::NAN);
                            BigRational::from_float(f)
                                .ok_or_else(|| Error::Format(format!("row {k}: non-finite coefficient")))?
                        }
                    }
                    other => return Err(Error::Format(format!("row {k}: bad coefficient {other}"))),
                };
                out.push((*i, *j, coef));
            }
            rows.push(out);
        }
        let b = file.b.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>()?;
        ConstraintSystem::new(file.n, rows, b)
    }
}

/// JSON layout of a constraint system:
/// `{ "n": int, "p": int, "rows": [[[i, j, coef], ...], ...], "b": ["num/den", ...] }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstraintFile {
    pub n: usize,
    pub p: usize,
    pub rows: Vec<Vec<(usize, usize, serde_json::Value)>>,
    pub b: Vec<String>,
}

/// Coefficient matching of `f = mon^T W mon`. One row per distinct product
/// `basis_i * basis_j`, in canonical order, including products absent from `f`.
pub fn build_constraints(f: &Polynomial, basis: &MonomialBasis) -> Result<ConstraintSystem> {
    let nv = basis.nvars().max(f.nvars());
    let mons: Vec<Monomial> = basis.monomials().iter().map(|m| m.with_nvars(nv)).collect();
    let mut products: BTreeMap<Monomial, Vec<(usize, usize)>> = BTreeMap::new();
    for i in 0..mons.len() {
        for j in i..mons.len() {
            products.entry(mons[i].mul(&mons[j])).or_default().push((i, j));
        }
    }
    for (m, _) in f.terms() {
        if !products.contains_key(&m.with_nvars(nv)) {
            return Err(Error::Unrepresentable(m.to_string()));
        }
    }
    let one = Rational::from_integer(1.into());
    let mut rows = Vec::with_capacity(products.len());
    let mut b = Vec::with_capacity(products.len());
    let mut labels = Vec::with_capacity(products.len());
    for (m, pairs) in products {
        b.push(f.coeff(&m));
        rows.push(pairs.into_iter().map(|(i, j)| (i, j, one.clone())).collect());
        labels.push(m);
    }
    let mut cs = ConstraintSystem::new(mons.len(), rows, b)?;
    cs.labels = Some(labels);
    Ok(cs)
}

/// `A(W)`; see [`ConstraintSystem::apply`].
pub fn apply_map(cs: &ConstraintSystem, w: &SymMatrix) -> Result<Vec<f64>> {
    cs.apply(w)
}

/// `A^*(y)`; see [`ConstraintSystem::adjoint`].
pub fn apply_adjoint(cs: &ConstraintSystem, y: &[f64]) -> Result<SymMatrix> {
    cs.adjoint(y)
}

pub fn op_norm_sq(cs: &ConstraintSystem) -> f64 {
    cs.op_norm_sq()
}
