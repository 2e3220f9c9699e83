//! Exact sparse multivariate polynomials over the rationals.
//!
//! Terms are stored in a `BTreeMap` keyed by [`Monomial`], whose ordering is
//! graded lexicographic with `x1 > x2 > ... > xs`. Every downstream row and
//! column ordering (basis, constraints) inherits this order.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Exponent vector of a monomial. Index `i` holds the power of `x{i+1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    pub fn one(nvars: usize) -> Self {
        Monomial(vec![0; nvars])
    }

    /// The monomial `x{var+1}`.
    pub fn var(nvars: usize, var: usize) -> Self {
        let mut e = vec![0; nvars];
        e[var] = 1;
        Monomial(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// Pads (or keeps) the exponent vector to `nvars` entries.
    pub fn with_nvars(&self, nvars: usize) -> Monomial {
        let mut e = self.0.clone();
        if e.len() < nvars {
            e.resize(nvars, 0);
        }
        Monomial(e)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let n = self.0.len().max(other.0.len());
        Monomial(
            (0..n)
                .map(|i| self.0.get(i).copied().unwrap_or(0) + other.0.get(i).copied().unwrap_or(0))
                .collect(),
        )
    }

    fn exp(&self, i: usize) -> u32 {
        self.0.get(i).copied().unwrap_or(0)
    }

    /// Parses a single monomial such as `1`, `x2` or `x1^2*x3`.
    pub fn parse(text: &str, nvars: usize) -> Result<Monomial> {
        let p = parse_polynomial_in(text, nvars)?;
        match p.terms.len() {
            1 => {
                let (m, c) = p.terms.iter().next().unwrap();
                if c.is_one() {
                    Ok(m.clone())
                } else {
                    Err(Error::Format(format!("`{text}` is not a monic monomial")))
                }
            }
            _ => Err(Error::Format(format!("`{text}` is not a single monomial"))),
        }
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| {
            let n = self.0.len().max(other.0.len());
            for i in 0..n {
                match self.exp(i).cmp(&other.exp(i)) {
                    Ordering::Equal => continue,
                    ord => return ord,
                }
            }
            Ordering::Equal
        })
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, &e) in self.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                f.write_str("*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "x{}", i + 1)?;
            } else {
                write!(f, "x{}^{}", i + 1, e)?;
            }
        }
        if first {
            f.write_str("1")?;
        }
        Ok(())
    }
}

/// Sparse polynomial with exact rational coefficients. Zero coefficients are
/// never stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, Rational>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: Rational) -> Self {
        let mut p = Polynomial::zero(nvars);
        p.add_term(Monomial::one(nvars), c);
        p
    }

    pub fn from_terms<I>(nvars: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (Monomial, Rational)>,
    {
        let mut p = Polynomial::zero(nvars);
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    /// Adds `c * m` in place, dropping the term if it cancels.
    pub fn add_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        if m.nvars() > self.nvars {
            self.set_nvars(m.nvars());
        }
        let m = m.with_nvars(self.nvars);
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
        }
    }

    fn set_nvars(&mut self, nvars: usize) {
        if nvars <= self.nvars {
            return;
        }
        let terms = std::mem::take(&mut self.terms);
        self.terms = terms.into_iter().map(|(m, c)| (m.with_nvars(nvars), c)).collect();
        self.nvars = nvars;
    }

    /// Returns a copy embedded in a ring with at least `nvars` variables.
    pub fn with_nvars(&self, nvars: usize) -> Polynomial {
        let mut p = self.clone();
        p.set_nvars(nvars);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Maximum total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn is_homogeneous(&self) -> bool {
        let mut degs = self.terms.keys().map(Monomial::degree);
        match degs.next() {
            Some(d) => degs.all(|e| e == d),
            None => true,
        }
    }

    /// Terms in ascending canonical order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> Rational {
        self.terms.get(&m.with_nvars(self.nvars)).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn scale(&self, c: &Rational) -> Polynomial {
        if c.is_zero() {
            return Polynomial::zero(self.nvars);
        }
        Polynomial {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
        }
    }

    pub fn square(&self) -> Polynomial {
        self * self
    }

    /// Euclidean norm of the coefficient vector, in floating point.
    pub fn coeff_norm(&self) -> f64 {
        self.terms
            .values()
            .map(|c| {
                let v = rational_to_f64(c);
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Exact evaluation at a rational point.
    pub fn eval(&self, point: &[Rational]) -> Result<Rational> {
        if point.len() != self.nvars {
            return Err(Error::DimensionMismatch { expected: self.nvars, found: point.len() });
        }
        let mut acc = Rational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (x, &e) in point.iter().zip(m.exponents()) {
                if e > 0 {
                    t *= num_traits::pow(x.clone(), e as usize);
                }
            }
            acc += t;
        }
        Ok(acc)
    }
}

/// Evaluates `f` at `point`; see [`Polynomial::eval`].
pub fn eval_poly(f: &Polynomial, point: &[Rational]) -> Result<Rational> {
    f.eval(point)
}

/// Expands `sum_i factors[i]^2` exactly.
pub fn expand_square_sum(factors: &[Polynomial]) -> Result<Polynomial> {
    let Some(first) = factors.first() else {
        return Ok(Polynomial::zero(0));
    };
    let nvars = first.nvars();
    let mut acc = Polynomial::zero(nvars);
    for q in factors {
        if q.nvars() != nvars {
            return Err(Error::NvarsMismatch { expected: nvars, found: q.nvars() });
        }
        acc = &acc + &q.square();
    }
    Ok(acc)
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.with_nvars(rhs.nvars);
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.with_nvars(rhs.nvars);
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let nvars = self.nvars.max(rhs.nvars);
        let mut out = Polynomial::zero(nvars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        Polynomial {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect(),
        }
    }
}

impl fmt::Display for Polynomial {
    /// Prints terms in descending canonical order using the input grammar.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (k, (m, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            if k == 0 {
                if neg {
                    f.write_str("-")?;
                }
            } else if neg {
                f.write_str(" - ")?;
            } else {
                f.write_str(" + ")?;
            }
            if m.is_one() {
                write!(f, "{}", fmt_rational(&abs))?;
            } else if abs.is_one() {
                write!(f, "{m}")?;
            } else {
                write!(f, "{}*{m}", fmt_rational(&abs))?;
            }
        }
        Ok(())
    }
}

/// Formats a rational as `n` or `n/d`.
pub fn fmt_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses `n` or `n/d` (optionally signed) into a reduced rational.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let t = text.trim();
    let (num, den) = match t.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (t, "1"),
    };
    let num: BigInt = num
        .parse()
        .map_err(|_| Error::Format(format!("invalid rational `{text}`")))?;
    let den: BigInt = den
        .parse()
        .map_err(|_| Error::Format(format!("invalid rational `{text}`")))?;
    if den.is_zero() {
        return Err(Error::ZeroDenominator { pos: 0 });
    }
    Ok(Rational::new(num, den))
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

/// Parses a polynomial; the variable count is the largest index used.
pub fn parse_polynomial(text: &str) -> Result<Polynomial> {
    parse_polynomial_in(text, 0)
}

/// Parses a polynomial in at least `nvars` variables.
pub fn parse_polynomial_in(text: &str, nvars: usize) -> Result<Polynomial> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let terms = p.poly()?;
    let maxvar = terms.iter().map(|(m, _)| m.nvars()).max().unwrap_or(0);
    Ok(Polynomial::from_terms(nvars.max(maxvar), terms))
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn int(&mut self) -> Result<BigInt> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected integer");
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        Ok(s.parse().unwrap())
    }

    fn small_int(&mut self) -> Result<u32> {
        let start = self.pos;
        let v = self.int()?;
        u32::try_from(v).map_err(|_| Error::Parse { pos: start, msg: "integer too large".into() })
    }

    fn poly(&mut self) -> Result<Vec<(Monomial, Rational)>> {
        let mut out = Vec::new();
        let mut sign = if self.eat(b'-') {
            -1
        } else {
            self.eat(b'+');
            1
        };
        loop {
            let (m, c) = self.term()?;
            out.push((m, if sign < 0 { -c } else { c }));
            match self.peek() {
                None => break,
                Some(b'+') => {
                    self.pos += 1;
                    sign = 1;
                }
                Some(b'-') => {
                    self.pos += 1;
                    sign = -1;
                }
                Some(c) => return self.err(format!("unexpected character `{}`", c as char)),
            }
        }
        Ok(out)
    }

    fn term(&mut self) -> Result<(Monomial, Rational)> {
        let mut coef = Rational::one();
        let mut mono = Monomial::one(0);
        match self.peek() {
            Some(c) if c.is_ascii_digit() => {
                let num = self.int()?;
                let mut den = BigInt::one();
                if self.eat(b'/') {
                    let at = self.pos;
                    den = self.int()?;
                    if den.is_zero() {
                        return Err(Error::ZeroDenominator { pos: at });
                    }
                }
                coef = Rational::new(num, den);
                if !self.eat(b'*') {
                    return Ok((mono, coef));
                }
                mono = mono.mul(&self.factor()?);
            }
            Some(b'x') => mono = mono.mul(&self.factor()?),
            Some(c) => return self.err(format!("unexpected character `{}`", c as char)),
            None => return self.err("unexpected end of input"),
        }
        while self.eat(b'*') {
            mono = mono.mul(&self.factor()?);
        }
        Ok((mono, coef))
    }

    fn factor(&mut self) -> Result<Monomial> {
        if !self.eat(b'x') {
            return self.err("expected variable `x<index>`");
        }
        if !matches!(self.src.get(self.pos), Some(c) if c.is_ascii_digit()) {
            return self.err("expected variable index");
        }
        let at = self.pos;
        let idx = self.small_int()? as usize;
        if idx == 0 {
            return Err(Error::Parse { pos: at, msg: "variables are numbered from x1".into() });
        }
        let e = if self.eat(b'^') { self.small_int()? } else { 1 };
        let mut m = vec![0; idx];
        m[idx - 1] = e;
        Ok(Monomial(m))
    }
}
