//! Eliminated descriptions of the weakly Pareto set.
//!
//! The KKT system `Σ w_j∇f_j = Σ λ_i∇c_i`, `0 ≤ c ⊥ λ ≥ 0`, `w ∈ Δ` is solved
//! for the multipliers, the weights, or both, using polynomial one-sided
//! inverses of `C(x)`, `Q(x)` and `P(x)`.

use std::collections::HashMap;

use faer::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mop::{ConstraintStructure, LinearTermStructure, MopError, MopProblem, IDENTITY_TOL};
use crate::poly::{grlex_basis, Exponent, PolyError, PolyMatrix, Polynomial};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RepError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Mop(#[from] MopError),
    #[error("the free structure has no Lagrange multipliers to express")]
    FreeStructure,
    #[error("linear-term matrix D is column-rank deficient")]
    RankDeficient,
    #[error("objectives lack a shared nonlinear part and no Q' was supplied")]
    NoWeightInverse,
    #[error("no polynomial left inverse of P(x) with degree <= {0}")]
    NotFound(u32),
    #[error("point has length {got}, expected {expected}")]
    PointLength { got: usize, expected: usize },
    #[error("supplied inverse fails its identity: defect {0:.3e}")]
    BadInverse(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepKind {
    XW,
    XLambda,
    XOnly,
}

impl RepKind {
    pub fn name(self) -> &'static str {
        match self {
            RepKind::XW => "xw",
            RepKind::XLambda => "xlambda",
            RepKind::XOnly => "xonly",
        }
    }
}

/// Which representation to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RepChoice {
    Auto,
    Fixed(RepKind),
}

/// One of the three eliminated forms.
#[derive(Clone, Debug, PartialEq)]
pub enum Representation {
    /// `λ_i(x, w)` in the `n + m` variables `(x, w)`.
    XW { lambda: Vec<Polynomial> },
    /// `w_j(x, λ)` in the `n + l` variables `(x, λ)`.
    XLambda { weights: Vec<Polynomial> },
    /// `w_j(x)` and `λ_i(x)` in `x` alone.
    XOnly {
        weights: Vec<Polynomial>,
        lambda: Vec<Polynomial>,
    },
}

impl Representation {
    pub fn kind(&self) -> RepKind {
        match self {
            Representation::XW { .. } => RepKind::XW,
            Representation::XLambda { .. } => RepKind::XLambda,
            Representation::XOnly { .. } => RepKind::XOnly,
        }
    }

    /// Size of the flat variable space the expressions live in.
    pub fn nvars(&self, prob: &MopProblem) -> usize {
        match self {
            Representation::XW { .. } => prob.n + prob.m(),
            Representation::XLambda { .. } => prob.n + prob.l(),
            Representation::XOnly { .. } => prob.n,
        }
    }

    /// Splits a point of the flat space into `(x, w, λ)` values.
    pub fn split(
        &self,
        prob: &MopProblem,
        point: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), RepError> {
        let expected = self.nvars(prob);
        if point.len() != expected {
            return Err(RepError::PointLength {
                got: point.len(),
                expected,
            });
        }
        let n = prob.n;
        let x = point[..n].to_vec();
        Ok(match self {
            Representation::XW { lambda } => {
                let w = point[n..].to_vec();
                let lam = if lambda.is_empty() {
                    Vec::new()
                } else {
                    lambda.iter().map(|p| p.eval(point)).collect()
                };
                (x, w, lam)
            }
            Representation::XLambda { weights } => {
                let lam = point[n..].to_vec();
                let w = weights.iter().map(|p| p.eval(point)).collect();
                (x, w, lam)
            }
            Representation::XOnly { weights, lambda } => {
                let w = weights.iter().map(|p| p.eval(point)).collect();
                let lam = lambda.iter().map(|p| p.eval(point)).collect();
                (x, w, lam)
            }
        })
    }
}

/// Lifts a polynomial in `x` into the `(x, aux)` space.
fn lift(p: &Polynomial, total: usize) -> Polynomial {
    p.lift(total)
}

/// `λ_i(x, w) = Σ_j w_j ℓ_i(x)ᵀ∇f_j(x)`.
pub fn lagrange_expr_xw(prob: &MopProblem) -> Result<Representation, RepError> {
    if matches!(prob.structure, ConstraintStructure::Free) || prob.l() == 0 {
        return Err(RepError::FreeStructure);
    }
    let n = prob.n;
    let m = prob.m();
    let total = n + m;
    let u = prob.u_matrix();
    let lambda = u
        .iter()
        .map(|row| {
            let mut acc = Polynomial::zero(total);
            for (j, uij) in row.iter().enumerate() {
                if !uij.is_zero() {
                    acc += &(&lift(uij, total) * &Polynomial::var(total, n + j));
                }
            }
            acc
        })
        .collect();
    Ok(Representation::XW { lambda })
}

/// The `(x, w)` form without multipliers, for problems with no constraints.
pub fn unconstrained_xw(prob: &MopProblem) -> Representation {
    debug_assert_eq!(prob.l(), 0);
    Representation::XW { lambda: Vec::new() }
}

/// `w(x, λ)`, from a supplied `Q′(x)` or the shared-nonlinear-part formula
/// `w = (DᵀD)⁻¹Dᵀ([−∇h; 1] + [Σλ_i∇c_i; 0])`.
pub fn weight_expr_xlambda(prob: &MopProblem) -> Result<Representation, RepError> {
    let n = prob.n;
    let l = prob.l();
    let m = prob.m();
    let total = n + l;
    // ĉ_λ = [Σ λ_i ∇c_i ; 1] in (x, λ)
    let mut lam_grad = vec![Polynomial::zero(total); n];
    for (i, c) in prob.constraints.iter().enumerate() {
        let li = Polynomial::var(total, n + i);
        for (k, g) in c.gradient().iter().enumerate() {
            if !g.is_zero() {
                lam_grad[k] += &(&lift(g, total) * &li);
            }
        }
    }
    if m == 1 {
        return Ok(Representation::XLambda {
            weights: vec![Polynomial::one(total)],
        });
    }
    if let Some(qp) = &prob.qprime {
        let defect = qprime_defect(prob, qp)?;
        if defect > IDENTITY_TOL {
            return Err(RepError::BadInverse(defect));
        }
        let mut rhs = lam_grad;
        rhs.push(Polynomial::one(total));
        let mapping: Vec<usize> = (0..n).collect();
        let qp_lift = qp.map(|p| p.embed(total, &mapping));
        let weights = qp_lift.mul_vec(&rhs)?;
        return Ok(Representation::XLambda { weights });
    }
    let lt = LinearTermStructure::detect(&prob.objectives).ok_or(RepError::NoWeightInverse)?;
    let pinv = lt.d_pseudo_inverse().ok_or(RepError::RankDeficient)?;
    let mut rhs: Vec<Polynomial> = lt
        .h
        .gradient()
        .iter()
        .zip(&lam_grad)
        .map(|(gh, lg)| lg - &lift(gh, total))
        .collect();
    rhs.push(Polynomial::one(total));
    let weights = (0..m)
        .map(|j| {
            let mut acc = Polynomial::zero(total);
            for (k, r) in rhs.iter().enumerate() {
                let c = pinv[(j, k)];
                if c != 0.0 && !r.is_zero() {
                    acc += &r.scale(c);
                }
            }
            acc
        })
        .collect();
    Ok(Representation::XLambda { weights })
}

/// `Q(x) = [∇f_1 … ∇f_m; 1 … 1]`.
pub fn q_matrix(prob: &MopProblem) -> PolyMatrix {
    let n = prob.n;
    let mut q = PolyMatrix::zeros(n + 1, prob.m(), n);
    for (j, f) in prob.objectives.iter().enumerate() {
        for (k, g) in f.gradient().into_iter().enumerate() {
            q.set(k, j, g);
        }
        q.set(n, j, Polynomial::one(n));
    }
    q
}

fn qprime_defect(prob: &MopProblem, qp: &PolyMatrix) -> Result<f64, RepError> {
    let q = q_matrix(prob);
    Ok(qp.checked_mul(&q)?.identity_defect())
}

/// `P(x)`, shape `(n+l+1)×m`: rows `Σ_i u_ij∇c_i − ∇f_j`, then `u_ij c_i`, then ones.
pub fn build_p_matrix(prob: &MopProblem) -> PolyMatrix {
    let n = prob.n;
    let l = prob.l();
    let m = prob.m();
    let u = if l > 0 { prob.u_matrix() } else { Vec::new() };
    let cgrads: Vec<Vec<Polynomial>> = prob.constraints.iter().map(|c| c.gradient()).collect();
    let mut p = PolyMatrix::zeros(n + l + 1, m, n);
    for (j, f) in prob.objectives.iter().enumerate() {
        let gf = f.gradient();
        for k in 0..n {
            let mut acc = -&gf[k];
            for i in 0..l {
                if !u[i][j].is_zero() && !cgrads[i][k].is_zero() {
                    acc += &(&u[i][j] * &cgrads[i][k]);
                }
            }
            p.set(k, j, acc);
        }
        for i in 0..l {
            p.set(n + i, j, &u[i][j] * &prob.constraints[i]);
        }
        p.set(n + l, j, Polynomial::one(n));
    }
    p
}

/// Finds `P′` with entries of degree `≤ max_degree` and `P′·pm = I` exactly.
///
/// Degrees are tried in increasing order; `Ok(None)` means no such inverse
/// was found.
pub fn left_poly_inverse(
    pm: &PolyMatrix,
    max_degree: u32,
) -> Result<Option<PolyMatrix>, RepError> {
    if pm.rows() < pm.cols() {
        return Err(PolyError::Shape(format!(
            "left inverse needs rows >= cols, got {}x{}",
            pm.rows(),
            pm.cols()
        ))
        .into());
    }
    for d in 0..=max_degree {
        if let Some(inv) = left_inverse_at_degree(pm, d) {
            return Ok(Some(inv));
        }
    }
    Ok(None)
}

fn left_inverse_at_degree(pm: &PolyMatrix, degree: u32) -> Option<PolyMatrix> {
    let nv = pm.nvars();
    let rows = pm.rows();
    let m = pm.cols();
    let basis = grlex_basis(nv, degree);
    let nb = basis.len();
    let ncols = rows * nb;

    // equation rows keyed by (column b, monomial γ)
    let mut eq_index: HashMap<(usize, Exponent), usize> = HashMap::new();
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for b in 0..m {
        let next = eq_index.len();
        eq_index.insert((b, Exponent::zeros(nv)), next);
    }
    for b in 0..m {
        for r in 0..rows {
            let p = pm.get(r, b);
            for (bi, beta) in basis.iter().enumerate() {
                for (e, c) in p.terms() {
                    let gamma = e.add(beta);
                    let next = eq_index.len();
                    let row = *eq_index.entry((b, gamma)).or_insert(next);
                    entries.push((row, r * nb + bi, c));
                }
            }
        }
    }
    let neq = eq_index.len();
    let mut a = Mat::<f64>::zeros(neq, ncols);
    for (i, j, c) in entries {
        a[(i, j)] += c;
    }
    let mut rhs = Mat::<f64>::zeros(neq, m);
    for b in 0..m {
        rhs[(eq_index[&(b, Exponent::zeros(nv))], b)] = 1.0;
    }
    let z = min_norm_lstsq(&a, &rhs)?;
    let resid = &a * &z - &rhs;
    let mut worst = 0.0f64;
    for j in 0..m {
        for i in 0..neq {
            worst = worst.max(resid[(i, j)].abs());
        }
    }
    if worst > 1e-8 {
        return None;
    }
    let mut inv = PolyMatrix::zeros(m, rows, nv);
    for a_row in 0..m {
        for r in 0..rows {
            let mut p = Polynomial::zero(nv);
            for (bi, beta) in basis.iter().enumerate() {
                let v = z[(r * nb + bi, a_row)];
                if v.abs() > 1e-11 {
                    p.add_term(beta.clone(), v);
                }
            }
            inv.set(a_row, r, p);
        }
    }
    let prod = inv.checked_mul(pm).ok()?;
    (prod.identity_defect() <= IDENTITY_TOL).then_some(inv)
}

/// Minimum-norm least-squares solution through the normal equations with an
/// eigenvalue cutoff, refined twice against the original system.
fn min_norm_lstsq(a: &Mat<f64>, rhs: &Mat<f64>) -> Option<Mat<f64>> {
    let ata = a.transpose() * a;
    let eig = ata.self_adjoint_eigen(faer::Side::Lower).ok()?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let n = ata.nrows();
    let smax = (0..n).map(|i| s[i].abs()).fold(0.0, f64::max);
    if smax == 0.0 {
        return None;
    }
    let cut = 1e-20 * smax;
    let apply_pinv = |v: &Mat<f64>| -> Mat<f64> {
        let mut t = u.transpose() * v;
        for i in 0..n {
            let d = if s[i] > cut { 1.0 / s[i] } else { 0.0 };
            for j in 0..t.ncols() {
                t[(i, j)] *= d;
            }
        }
        u * t
    };
    let mut z = apply_pinv(&(a.transpose() * rhs));
    for _ in 0..2 {
        let r = rhs - a * &z;
        z += apply_pinv(&(a.transpose() * &r));
    }
    Some(z)
}

/// `w(x) = P′(x)e_last`, `λ_i(x) = Σ_j w_j(x)u_ij(x)`.
pub fn eliminate_all(prob: &MopProblem, max_degree: u32) -> Result<Representation, RepError> {
    let n = prob.n;
    let m = prob.m();
    let l = prob.l();
    let u = if l > 0 { prob.u_matrix() } else { Vec::new() };
    let lambda_of = |w: &[Polynomial]| -> Vec<Polynomial> {
        u.iter()
            .map(|row| {
                let mut acc = Polynomial::zero(n);
                for (uij, wj) in row.iter().zip(w) {
                    if !uij.is_zero() && !wj.is_zero() {
                        acc += &(uij * wj);
                    }
                }
                acc
            })
            .collect()
    };
    let finish = |weights: Vec<Polynomial>| {
        let lambda = lambda_of(&weights);
        Ok(Representation::XOnly { weights, lambda })
    };

    if m == 1 {
        return finish(vec![Polynomial::one(n)]);
    }
    let p = build_p_matrix(prob);
    if let Some(pp) = &prob.pprime {
        let defect = pp.checked_mul(&p)?.identity_defect();
        if defect > IDENTITY_TOL {
            return Err(RepError::BadInverse(defect));
        }
        return finish(pp.column(p.rows() - 1));
    }
    if l == 0 {
        if let Some(lt) = LinearTermStructure::detect(&prob.objectives) {
            if let Some(pinv) = lt.d_pseudo_inverse() {
                let gh = lt.h.gradient();
                let weights = (0..m)
                    .map(|j| {
                        let mut acc = Polynomial::constant(n, pinv[(j, n)]);
                        for (k, g) in gh.iter().enumerate() {
                            acc -= &g.scale(pinv[(j, k)]);
                        }
                        acc
                    })
                    .collect();
                return finish(weights);
            }
        }
    }
    let pprime = find_p_inverse(&p, max_degree)?.ok_or(RepError::NotFound(max_degree))?;
    finish(pprime.column(p.rows() - 1))
}

/// Left inverse of `P`, first on the column-reduced matrix `EP` with
/// `E = I − r e_lastᵀ` (`r` the first column above the ones row), then on `P`.
pub fn find_p_inverse(p: &PolyMatrix, max_degree: u32) -> Result<Option<PolyMatrix>, RepError> {
    let rows = p.rows();
    let nv = p.nvars();
    let mut e = PolyMatrix::identity(rows, nv);
    for i in 0..rows - 1 {
        e.set(i, rows - 1, -p.get(i, 0));
    }
    let reduced = e.checked_mul(p)?;
    for d in 0..=max_degree {
        if let Some(mi) = left_inverse_at_degree(&reduced, d) {
            let cand = mi.checked_mul(&e)?;
            if cand.checked_mul(p)?.identity_defect() <= IDENTITY_TOL {
                return Ok(Some(cand));
            }
        }
        if let Some(pi) = left_inverse_at_degree(p, d) {
            return Ok(Some(pi));
        }
    }
    Ok(None)
}

/// Builds the requested representation. `Auto` prefers the fewest variables,
/// breaking ties toward x-only, then (x,w), then (x,λ), and falls back along
/// that order when an inverse is unavailable.
pub fn build_representation(
    prob: &MopProblem,
    choice: RepChoice,
    max_degree: u32,
) -> Result<Representation, RepError> {
    let build = |k: RepKind| match k {
        RepKind::XW => {
            if prob.l() == 0 {
                Ok(unconstrained_xw(prob))
            } else {
                lagrange_expr_xw(prob)
            }
        }
        RepKind::XLambda => weight_expr_xlambda(prob),
        RepKind::XOnly => eliminate_all(prob, max_degree),
    };
    match choice {
        RepChoice::Fixed(k) => build(k),
        RepChoice::Auto => {
            let mut order = [
                (prob.n, 0, RepKind::XOnly),
                (prob.n + prob.m(), 1, RepKind::XW),
                (prob.n + prob.l(), 2, RepKind::XLambda),
            ];
            order.sort();
            let mut last = None;
            for (_, _, k) in order {
                match build(k) {
                    Ok(r) => return Ok(r),
                    Err(e) => last = Some(e),
                }
            }
            Err(last.expect("three candidates tried"))
        }
    }
}

/// KKT violation of explicit `(x, w, λ)`: the maximum of the stationarity
/// residual, `|λ_i c_i|`, negative parts of `λ`, `c`, `w`, and `|Σw − 1|`.
pub fn kkt_residual_explicit(prob: &MopProblem, x: &[f64], w: &[f64], lambda: &[f64]) -> f64 {
    let n = prob.n;
    let mut worst = 0.0f64;
    let mut stat = vec![0.0; n];
    for (wj, f) in w.iter().zip(&prob.objectives) {
        for (k, g) in f.gradient().iter().enumerate() {
            stat[k] += wj * g.eval(x);
        }
    }
    for (li, c) in lambda.iter().zip(&prob.constraints) {
        for (k, g) in c.gradient().iter().enumerate() {
            stat[k] -= li * g.eval(x);
        }
        let cv = c.eval(x);
        worst = worst.max((li * cv).abs()).max(-cv).max(-li);
    }
    // constraints without a supplied multiplier still count for feasibility
    for c in prob.constraints.iter().skip(lambda.len()) {
        worst = worst.max(-c.eval(x));
    }
    for s in stat {
        worst = worst.max(s.abs());
    }
    for wj in w {
        worst = worst.max(-wj);
    }
    worst.max((w.iter().sum::<f64>() - 1.0).abs())
}

/// KKT violation at a point of the representation's variable space.
pub fn kkt_residual(
    prob: &MopProblem,
    rep: &Representation,
    point: &[f64],
) -> Result<f64, RepError> {
    let (x, w, lam) = rep.split(prob, point)?;
    Ok(kkt_residual_explicit(prob, &x, &w, &lam))
}

/// Multipliers from the structure's `C′₁`: `λ = Σ_j w_j C′₁(x)∇f_j(x)`.
pub fn multipliers_at(prob: &MopProblem, x: &[f64], w: &[f64]) -> Vec<f64> {
    if prob.l() == 0 {
        return Vec::new();
    }
    let (c1, _) = prob.cprime();
    let mut g = vec![0.0; prob.n];
    for (wj, f) in w.iter().zip(&prob.objectives) {
        for (k, gk) in f.gradient().iter().enumerate() {
            g[k] += wj * gk.eval(x);
        }
    }
    (0..prob.l())
        .map(|i| (0..prob.n).map(|k| c1.get(i, k).eval(x) * g[k]).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(n: usize, i: usize) -> Polynomial {
        Polynomial::var(n, i)
    }

    fn c(n: usize, v: f64) -> Polynomial {
        Polynomial::constant(n, v)
    }

    fn parabola_cap() -> MopProblem {
        let n = 2;
        let sq = |i| &x(n, i) * &x(n, i);
        let base = &sq(0) + &sq(1);
        let f1 = &(&base + &x(n, 0)) - &x(n, 1).scale(2.0);
        let f2 = &(&base + &x(n, 0).scale(2.0)) - &x(n, 1).scale(2.0);
        let cons = &(&c(n, 1.0) - &sq(0)) - &x(n, 1);
        MopProblem::new(
            &sq(0) + &x(n, 1),
            vec![f1, f2],
            ConstraintStructure::Custom {
                constraints: vec![cons],
                cprime1: PolyMatrix::from_constants(n, &[vec![0.0, -1.0]]).unwrap(),
                cprime2: None,
            },
        )
        .unwrap()
    }

    #[test]
    fn parabola_cap_lambda_xw() {
        let p = parabola_cap();
        let rep = lagrange_expr_xw(&p).unwrap();
        let Representation::XW { lambda } = rep else {
            panic!()
        };
        // (2 − 2x₂)(w₁ + w₂) in (x₁, x₂, w₁, w₂)
        let t = 4;
        let w = &x(t, 2) + &x(t, 3);
        let expect = &(&c(t, 2.0) - &x(t, 1).scale(2.0)) * &w;
        assert!(lambda[0].approx_eq(&expect, 1e-12));
    }

    #[test]
    fn parabola_cap_p_and_inverse() {
        let p = parabola_cap();
        let pm = build_p_matrix(&p);
        assert_eq!((pm.rows(), pm.cols()), (4, 2));
        let n = 2;
        let top0 = &(&(&x(n, 0) * &x(n, 1)).scale(4.0) - &x(n, 0).scale(6.0)) - &c(n, 1.0);
        assert!(pm.get(0, 0).approx_eq(&top0, 1e-12));
        assert!(pm.get(1, 0).is_zero());
        let inv = left_poly_inverse(&pm, 2).unwrap().unwrap();
        assert!(inv.checked_mul(&pm).unwrap().is_identity(1e-9));
    }

    #[test]
    fn parabola_cap_elimination_satisfies_kkt() {
        let p = parabola_cap();
        let rep = eliminate_all(&p, 2).unwrap();
        let Representation::XOnly { weights, lambda } = &rep else {
            panic!()
        };
        let n = 2;
        let sum = &weights[0] + &weights[1];
        assert!(sum.approx_eq(&c(n, 1.0), 1e-9));
        assert!(lambda[0].approx_eq(&(&c(n, 2.0) - &x(n, 1).scale(2.0)), 1e-9));
        // w₁ = 6x₁ − 4x₁x₂ + 2 solves the stationarity row
        let w1 = &(&x(n, 0).scale(6.0) - &(&x(n, 0) * &x(n, 1)).scale(4.0)) + &c(n, 2.0);
        assert!(weights[0].approx_eq(&w1, 1e-9));
    }

    #[test]
    fn tiny_left_inverses() {
        let n = 1;
        let p = PolyMatrix::column_vector(n, vec![c(n, 1.0), x(n, 0)]).unwrap();
        let inv = left_poly_inverse(&p, 0).unwrap().unwrap();
        assert!(inv.get(0, 0).approx_eq(&c(n, 1.0), 1e-12));
        assert!(inv.get(0, 1).is_zero());
        let p = PolyMatrix::column_vector(n, vec![x(n, 0), &c(n, 1.0) - &x(n, 0)]).unwrap();
        let inv = left_poly_inverse(&p, 0).unwrap().unwrap();
        assert!(inv.get(0, 0).approx_eq(&c(n, 1.0), 1e-12));
        assert!(inv.get(0, 1).approx_eq(&c(n, 1.0), 1e-12));
        // x has no polynomial left inverse
        let p = PolyMatrix::column_vector(n, vec![x(n, 0), &x(n, 0) * &x(n, 0)]).unwrap();
        assert!(left_poly_inverse(&p, 2).unwrap().is_none());
    }

    #[test]
    fn single_objective_weight_is_one() {
        let n = 2;
        let f = &x(n, 0) * &x(n, 0);
        let p = MopProblem::new(f.clone(), vec![f], ConstraintStructure::Ball).unwrap();
        let Representation::XOnly { weights, .. } = eliminate_all(&p, 2).unwrap() else {
            panic!()
        };
        assert_eq!(weights, vec![c(n, 1.0)]);
        let Representation::XLambda { weights } = weight_expr_xlambda(&p).unwrap() else {
            panic!()
        };
        assert_eq!(weights, vec![c(n + 1, 1.0)]);
        let pm = build_p_matrix(&p);
        assert_eq!(*pm.get(pm.rows() - 1, 0), c(n, 1.0));
    }

    #[test]
    fn free_linear_terms_closed_form() {
        let n = 2;
        let h = &(&x(n, 0) * &x(n, 0)) + &(&x(n, 1) * &x(n, 1));
        let f1 = &h + &x(n, 0);
        let f2 = &h - &x(n, 1);
        let p = MopProblem::new(h.clone(), vec![f1, f2], ConstraintStructure::Free).unwrap();
        let rep = eliminate_all(&p, 2).unwrap();
        // at x = (−0.25, 0.25) the weights are (½, ½)
        let (_, w, _) = rep.split(&p, &[-0.25, 0.25]).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
        assert!(kkt_residual(&p, &rep, &[-0.25, 0.25]).unwrap() < 1e-12);
        assert!(matches!(lagrange_expr_xw(&p), Err(RepError::FreeStructure)));
    }

    #[test]
    fn xlambda_identity_on_ball() {
        // D is square here, so D·w hits the target everywhere
        let n = 2;
        let h = &(&x(n, 0) * &x(n, 0)) + &(&x(n, 1) * &x(n, 1));
        let f1 = &h + &x(n, 0);
        let f2 = &h + &x(n, 1);
        let p = MopProblem::new(h.clone(), vec![f1, f2, h.clone()], ConstraintStructure::Ball)
            .unwrap();
        let Representation::XLambda { weights } = weight_expr_xlambda(&p).unwrap() else {
            panic!()
        };
        let t = n + 1;
        // D·w − ĥ₁ − ĥ₂ = 0
        let lt = LinearTermStructure::detect(&p.objectives).unwrap();
        let d = lt.d_matrix();
        let gh = lt.h.gradient();
        let gc = p.constraints[0].gradient();
        for k in 0..=n {
            let mut acc = Polynomial::zero(t);
            for j in 0..3 {
                acc += &weights[j].scale(d[(k, j)]);
            }
            let target = if k < n {
                &(&gc[k].lift(t) * &x(t, n)) - &gh[k].lift(t)
            } else {
                c(t, 1.0)
            };
            assert!(acc.approx_eq(&target, 1e-9), "row {k}");
        }
    }

    #[test]
    fn kkt_residual_flags_infeasibility() {
        let p = parabola_cap();
        let rep = eliminate_all(&p, 2).unwrap();
        // c(0, 2) = −1
        let r = kkt_residual(&p, &rep, &[0.0, 2.0]).unwrap();
        assert!(r >= 1.0);
        assert!(kkt_residual(&p, &rep, &[0.0]).is_err());
    }

    #[test]
    fn auto_prefers_xonly() {
        let p = parabola_cap();
        let rep = build_representation(&p, RepChoice::Auto, 2).unwrap();
        assert_eq!(rep.kind(), RepKind::XOnly);
    }
}
