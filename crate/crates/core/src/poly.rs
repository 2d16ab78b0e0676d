//! Sparse multivariate polynomials with real coefficients.
//!
//! Terms are keyed by [`Exponent`] and iterate in graded lexicographic order
//! (total degree first, then lexicographic with `x1 > x2 > ...`), which is the
//! ordering every moment/localizing matrix in the crate is indexed by.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("variable count mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("variable index {index} out of range for {nvars} variables")]
    IndexOutOfRange { index: usize, nvars: usize },
    #[error("point has length {got}, expected {expected}")]
    PointLength { got: usize, expected: usize },
    #[error("exponent has length {got}, expected {expected}")]
    ExponentLength { got: usize, expected: usize },
    #[error("non-finite coefficient {0}")]
    NonFinite(f64),
    #[error("matrix shape mismatch: {0}")]
    Shape(String),
}

/// A monomial exponent vector `α ∈ ℕⁿ`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Exponent(Vec<u32>);

impl Exponent {
    pub fn new(entries: Vec<u32>) -> Self {
        Exponent(entries)
    }

    pub fn zeros(nvars: usize) -> Self {
        Exponent(vec![0; nvars])
    }

    /// The exponent of the single variable `x_index`.
    pub fn unit(nvars: usize, index: usize) -> Self {
        let mut e = vec![0; nvars];
        e[index] = 1;
        Exponent(e)
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    /// Componentwise sum (monomial product).
    pub fn add(&self, other: &Exponent) -> Exponent {
        debug_assert_eq!(self.0.len(), other.0.len());
        Exponent(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Componentwise difference, `None` if any entry would go negative.
    pub fn checked_sub(&self, other: &Exponent) -> Option<Exponent> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(Exponent)
    }

    /// Value of `x^α` at a point.
    pub fn eval(&self, point: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(point)
            .filter(|(a, _)| **a > 0)
            .map(|(a, x)| x.powi(*a as i32))
            .product()
    }
}

impl Ord for Exponent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Exponent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All exponents of total degree `≤ degree` in `nvars` variables, in grlex order.
///
/// The result has `C(nvars + degree, degree)` entries.
pub fn grlex_basis(nvars: usize, degree: u32) -> Vec<Exponent> {
    let mut out = Vec::with_capacity(binomial(nvars + degree as usize, degree as usize));
    let mut buf = vec![0u32; nvars];
    for d in 0..=degree {
        compositions(d, 0, &mut buf, &mut out);
    }
    out
}

fn compositions(remaining: u32, pos: usize, buf: &mut Vec<u32>, out: &mut Vec<Exponent>) {
    let n = buf.len();
    if n == 0 {
        if remaining == 0 {
            out.push(Exponent(Vec::new()));
        }
        return;
    }
    if pos == n - 1 {
        buf[pos] = remaining;
        out.push(Exponent(buf.clone()));
        buf[pos] = 0;
        return;
    }
    for a in (0..=remaining).rev() {
        buf[pos] = a;
        compositions(remaining - a, pos + 1, buf, out);
    }
    buf[pos] = 0;
}

/// Binomial coefficient `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r as usize
}

/// A sparse polynomial in `nvars` real variables.
#[derive(Clone, PartialEq, Debug)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Exponent, f64>,
}

/// One serialized term: `{"exp": [..], "coef": ..}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TermRecord {
    pub exp: Vec<u32>,
    pub coef: f64,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(Exponent::zeros(nvars), c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, 1.0)
    }

    /// The coordinate polynomial `x_index`.
    pub fn var(nvars: usize, index: usize) -> Self {
        Self::monomial(Exponent::unit(nvars, index), 1.0)
    }

    pub fn monomial(exp: Exponent, coef: f64) -> Self {
        let mut p = Self::zero(exp.nvars());
        p.add_term(exp, coef);
        p
    }

    /// Builds a polynomial from `(exponent, coefficient)` pairs, summing repeats.
    pub fn from_terms(
        nvars: usize,
        terms: impl IntoIterator<Item = (Exponent, f64)>,
    ) -> Result<Self, PolyError> {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            if e.nvars() != nvars {
                return Err(PolyError::ExponentLength {
                    got: e.nvars(),
                    expected: nvars,
                });
            }
            if !c.is_finite() {
                return Err(PolyError::NonFinite(c));
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    pub fn from_records(nvars: usize, records: &[TermRecord]) -> Result<Self, PolyError> {
        Self::from_terms(
            nvars,
            records.iter().map(|r| (Exponent::new(r.exp.clone()), r.coef)),
        )
    }

    pub fn to_records(&self) -> Vec<TermRecord> {
        self.terms
            .iter()
            .map(|(e, c)| TermRecord {
                exp: e.0.clone(),
                coef: *c,
            })
            .collect()
    }

    /// Affine polynomial `constant + Σ coefs[i]·x_i`.
    pub fn affine(coefs: &[f64], constant: f64) -> Self {
        let n = coefs.len();
        let mut p = Self::constant(n, constant);
        for (i, &a) in coefs.iter().enumerate() {
            p.add_term(Exponent::unit(n, i), a);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Terms in grlex order.
    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, f64)> {
        self.terms.iter().map(|(e, c)| (e, *c))
    }

    pub fn coeff(&self, exp: &Exponent) -> f64 {
        self.terms.get(exp).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coeff(&Exponent::zeros(self.nvars))
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Exponent::degree).max().unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.degree() == 0
    }

    /// Degree in the variables whose indices are listed.
    pub fn degree_in(&self, vars: &[usize]) -> u32 {
        self.terms
            .keys()
            .map(|e| vars.iter().map(|&v| e.0[v]).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn max_abs_coef(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Adds `coef·x^exp` in place, dropping the term if it cancels to exactly zero.
    pub fn add_term(&mut self, exp: Exponent, coef: f64) {
        debug_assert_eq!(exp.nvars(), self.nvars);
        if coef == 0.0 {
            return;
        }
        match self.terms.entry(exp) {
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let v = *o.get() + coef;
                if v == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = v;
                }
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(coef);
            }
        }
    }

    fn check_same(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.nvars != other.nvars {
            Err(PolyError::DimensionMismatch {
                left: self.nvars,
                right: other.nvars,
            })
        } else {
            Ok(())
        }
    }

    pub fn checked_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), -*c);
        }
        Ok(out)
    }

    pub fn checked_mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same(other)?;
        let mut out = Polynomial::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                out.add_term(ea.add(eb), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        if s == 0.0 {
            return Polynomial::zero(self.nvars);
        }
        Polynomial {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
        }
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut out = Polynomial::one(self.nvars);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Formal partial derivative with respect to `x_index` (0-based).
    pub fn differentiate(&self, index: usize) -> Result<Polynomial, PolyError> {
        if index >= self.nvars {
            return Err(PolyError::IndexOutOfRange {
                index,
                nvars: self.nvars,
            });
        }
        let mut out = Polynomial::zero(self.nvars);
        for (e, c) in &self.terms {
            let a = e.0[index];
            if a == 0 {
                continue;
            }
            let mut d = e.clone();
            d.0[index] -= 1;
            out.add_term(d, c * a as f64);
        }
        Ok(out)
    }

    pub fn gradient(&self) -> Vec<Polynomial> {
        (0..self.nvars)
            .map(|i| self.differentiate(i).expect("index in range"))
            .collect()
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.nvars {
            return Err(PolyError::PointLength {
                got: point.len(),
                expected: self.nvars,
            });
        }
        Ok(self.eval(point))
    }

    /// Evaluates without a length check; `point` must have `nvars` entries.
    pub fn eval(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.nvars);
        self.terms.iter().map(|(e, c)| c * e.eval(point)).sum()
    }

    /// Substitutes `images[i]` for `x_i`; all images must share one variable count.
    pub fn substitute(&self, images: &[Polynomial]) -> Result<Polynomial, PolyError> {
        if images.len() != self.nvars {
            return Err(PolyError::PointLength {
                got: images.len(),
                expected: self.nvars,
            });
        }
        let target = match images.first() {
            Some(p) => p.nvars,
            None => return Ok(self.clone()),
        };
        for im in images {
            if im.nvars != target {
                return Err(PolyError::DimensionMismatch {
                    left: target,
                    right: im.nvars,
                });
            }
        }
        // cache powers of each image
        let maxdeg: Vec<u32> = (0..self.nvars)
            .map(|i| self.terms.keys().map(|e| e.0[i]).max().unwrap_or(0))
            .collect();
        let powers: Vec<Vec<Polynomial>> = images
            .iter()
            .zip(&maxdeg)
            .map(|(im, &d)| {
                let mut v = vec![Polynomial::one(target)];
                for k in 1..=d as usize {
                    let next = &v[k - 1] * im;
                    v.push(next);
                }
                v
            })
            .collect();
        let mut out = Polynomial::zero(target);
        for (e, c) in &self.terms {
            let mut t = Polynomial::constant(target, *c);
            for (i, &a) in e.0.iter().enumerate() {
                if a > 0 {
                    t = &t * &powers[i][a as usize];
                }
            }
            out += &t;
        }
        Ok(out)
    }

    /// `p(a(x))` for a univariate `p`.
    pub fn compose(&self, inner: &Polynomial) -> Result<Polynomial, PolyError> {
        if self.nvars != 1 {
            return Err(PolyError::DimensionMismatch {
                left: self.nvars,
                right: 1,
            });
        }
        self.substitute(std::slice::from_ref(inner))
    }

    /// Re-expresses the polynomial in a larger variable space, sending `x_i` to
    /// `x_{mapping[i]}` of a `new_nvars`-variable ring.
    pub fn embed(&self, new_nvars: usize, mapping: &[usize]) -> Polynomial {
        assert_eq!(mapping.len(), self.nvars);
        let mut out = Polynomial::zero(new_nvars);
        for (e, c) in &self.terms {
            let mut ne = vec![0u32; new_nvars];
            for (i, &a) in e.0.iter().enumerate() {
                ne[mapping[i]] += a;
            }
            out.add_term(Exponent(ne), *c);
        }
        out
    }

    /// Embeds into the first `self.nvars` coordinates of a larger space.
    pub fn lift(&self, new_nvars: usize) -> Polynomial {
        let mapping: Vec<usize> = (0..self.nvars).collect();
        self.embed(new_nvars, &mapping)
    }

    /// Drops terms with `|c| < rel_tol·max|c|`. Never applied implicitly.
    pub fn clean(&self, rel_tol: f64) -> Polynomial {
        let cut = rel_tol * self.max_abs_coef();
        Polynomial {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.abs() >= cut && **c != 0.0)
                .map(|(e, c)| (e.clone(), *c))
                .collect(),
        }
    }

    /// Coefficient-wise closeness: `max |p_α − q_α| ≤ tol`.
    pub fn approx_eq(&self, other: &Polynomial, tol: f64) -> bool {
        if self.nvars != other.nvars {
            return false;
        }
        let diff = self - other;
        diff.max_abs_coef() <= tol
    }

    /// Coefficients of the degree-1 terms, one per variable.
    pub fn linear_coefficients(&self) -> Vec<f64> {
        (0..self.nvars)
            .map(|i| self.coeff(&Exponent::unit(self.nvars, i)))
            .collect()
    }

    /// Human-readable rendering with the given variable names.
    pub fn display_with<'a>(&'a self, names: &'a [String]) -> PolyDisplay<'a> {
        PolyDisplay { poly: self, names }
    }
}

pub struct PolyDisplay<'a> {
    poly: &'a Polynomial,
    names: &'a [String],
}

impl fmt::Display for PolyDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.poly.is_zero() {
            return write!(f, "0");
        }
        for (k, (e, c)) in self.poly.terms.iter().enumerate() {
            let mono: Vec<String> = e
                .0
                .iter()
                .enumerate()
                .filter(|(_, a)| **a > 0)
                .map(|(i, a)| {
                    let name = self
                        .names
                        .get(i)
                        .cloned()
                        .unwrap_or_else(|| format!("x{}", i + 1));
                    if *a == 1 {
                        name
                    } else {
                        format!("{name}^{a}")
                    }
                })
                .collect();
            let sign = if *c < 0.0 { "-" } else { "+" };
            if k == 0 {
                if *c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let a = c.abs();
            if mono.is_empty() {
                write!(f, "{a}")?;
            } else if a == 1.0 {
                write!(f, "{}", mono.join("*"))?;
            } else {
                write!(f, "{a}*{}", mono.join("*"))?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (0..self.nvars).map(|i| format!("x{}", i + 1)).collect();
        write!(f, "{}", self.display_with(&names))
    }
}

impl Serialize for Polynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_records().serialize(s)
    }
}

impl AddAssign<&Polynomial> for Polynomial {
    fn add_assign(&mut self, rhs: &Polynomial) {
        assert_eq!(self.nvars, rhs.nvars, "polynomial variable count mismatch");
        for (e, c) in &rhs.terms {
            self.add_term(e.clone(), *c);
        }
    }
}

impl SubAssign<&Polynomial> for Polynomial {
    fn sub_assign(&mut self, rhs: &Polynomial) {
        assert_eq!(self.nvars, rhs.nvars, "polynomial variable count mismatch");
        for (e, c) in &rhs.terms {
            self.add_term(e.clone(), -*c);
        }
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.checked_add(rhs).expect("polynomial variable count mismatch")
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.checked_sub(rhs).expect("polynomial variable count mismatch")
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.checked_mul(rhs).expect("polynomial variable count mismatch")
    }
}

impl Mul<f64> for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: f64) -> Polynomial {
        self.scale(rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $m(self, rhs: Polynomial) -> Polynomial {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $m(self, rhs: &Polynomial) -> Polynomial {
                (&self).$m(rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

/// Lookup table from exponents of a grlex basis to their positions.
#[derive(Clone, Debug)]
pub struct MonomialIndex {
    basis: Vec<Exponent>,
    index: std::collections::HashMap<Exponent, usize>,
}

impl MonomialIndex {
    pub fn new(nvars: usize, degree: u32) -> Self {
        let basis = grlex_basis(nvars, degree);
        let index = basis
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        MonomialIndex { basis, index }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn get(&self, exp: &Exponent) -> Option<usize> {
        self.index.get(exp).copied()
    }

    pub fn basis(&self) -> &[Exponent] {
        &self.basis
    }

    /// Number of basis monomials of degree ≤ d.
    pub fn count_up_to(&self, d: u32) -> usize {
        let n = self.basis.first().map(Exponent::nvars).unwrap_or(0);
        binomial(n + d as usize, d as usize).min(self.basis.len())
    }
}

/// A dense rectangular matrix of polynomials sharing one variable count.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    nvars: usize,
    data: Vec<Polynomial>,
}

impl PolyMatrix {
    pub fn zeros(rows: usize, cols: usize, nvars: usize) -> Self {
        PolyMatrix {
            rows,
            cols,
            nvars,
            data: vec![Polynomial::zero(nvars); rows * cols],
        }
    }

    pub fn identity(size: usize, nvars: usize) -> Self {
        let mut m = Self::zeros(size, size, nvars);
        for i in 0..size {
            m.set(i, i, Polynomial::one(nvars));
        }
        m
    }

    pub fn from_rows(nvars: usize, rows: Vec<Vec<Polynomial>>) -> Result<Self, PolyError> {
        let r = rows.len();
        let c = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(PolyError::Shape(format!(
                    "ragged rows: {} vs {}",
                    row.len(),
                    c
                )));
            }
            for p in row {
                if p.nvars() != nvars {
                    return Err(PolyError::DimensionMismatch {
                        left: nvars,
                        right: p.nvars(),
                    });
                }
                data.push(p);
            }
        }
        Ok(PolyMatrix {
            rows: r,
            cols: c,
            nvars,
            data,
        })
    }

    /// A constant matrix.
    pub fn from_constants(nvars: usize, m: &[Vec<f64>]) -> Result<Self, PolyError> {
        Self::from_rows(
            nvars,
            m.iter()
                .map(|row| row.iter().map(|&v| Polynomial::constant(nvars, v)).collect())
                .collect(),
        )
    }

    pub fn column_vector(nvars: usize, entries: Vec<Polynomial>) -> Result<Self, PolyError> {
        Self::from_rows(nvars, entries.into_iter().map(|p| vec![p]).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn get(&self, i: usize, j: usize) -> &Polynomial {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Polynomial) {
        assert_eq!(p.nvars(), self.nvars);
        self.data[i * self.cols + j] = p;
    }

    pub fn row(&self, i: usize) -> Vec<Polynomial> {
        self.data[i * self.cols..(i + 1) * self.cols].to_vec()
    }

    pub fn column(&self, j: usize) -> Vec<Polynomial> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn transpose(&self) -> PolyMatrix {
        let mut t = PolyMatrix::zeros(self.cols, self.rows, self.nvars);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j).clone());
            }
        }
        t
    }

    pub fn checked_mul(&self, other: &PolyMatrix) -> Result<PolyMatrix, PolyError> {
        if self.cols != other.rows {
            return Err(PolyError::Shape(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        if self.nvars != other.nvars {
            return Err(PolyError::DimensionMismatch {
                left: self.nvars,
                right: other.nvars,
            });
        }
        let mut out = PolyMatrix::zeros(self.rows, other.cols, self.nvars);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = Polynomial::zero(self.nvars);
                for k in 0..self.cols {
                    let a = self.get(i, k);
                    let b = other.get(k, j);
                    if a.is_zero() || b.is_zero() {
                        continue;
                    }
                    acc += &(a * b);
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    /// Applies the matrix to a vector of polynomials.
    pub fn mul_vec(&self, v: &[Polynomial]) -> Result<Vec<Polynomial>, PolyError> {
        if v.len() != self.cols {
            return Err(PolyError::Shape(format!(
                "{}x{} times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                let mut acc = Polynomial::zero(self.nvars);
                for (k, vk) in v.iter().enumerate() {
                    let a = self.get(i, k);
                    if !a.is_zero() && !vk.is_zero() {
                        acc += &(a * vk);
                    }
                }
                acc
            })
            .collect())
    }

    pub fn sub(&self, other: &PolyMatrix) -> Result<PolyMatrix, PolyError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(PolyError::Shape("sub shape mismatch".into()));
        }
        Ok(PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            nvars: self.nvars,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// Largest coefficient magnitude of `self − I`; the matrix must be square.
    pub fn identity_defect(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let id = PolyMatrix::identity(self.rows, self.nvars);
        self.sub(&id)
            .map(|d| d.data.iter().fold(0.0f64, |m, p| m.max(p.max_abs_coef())))
            .unwrap_or(f64::INFINITY)
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.rows == self.cols && self.identity_defect() <= tol
    }

    pub fn max_degree(&self) -> u32 {
        self.data.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    pub fn map(&self, f: impl Fn(&Polynomial) -> Polynomial) -> PolyMatrix {
        let data: Vec<Polynomial> = self.data.iter().map(f).collect();
        let nvars = data.first().map(Polynomial::nvars).unwrap_or(self.nvars);
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            nvars,
            data,
        }
    }

    pub fn evaluate(&self, point: &[f64]) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval(point))
    }

    pub fn to_records(&self) -> Vec<Vec<Vec<TermRecord>>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j).to_records()).collect())
            .collect()
    }

    pub fn from_records(nvars: usize, rows: &[Vec<Vec<TermRecord>>]) -> Result<Self, PolyError> {
        let rows = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|t| Polynomial::from_records(nvars, t))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_rows(nvars, rows)
    }
}
