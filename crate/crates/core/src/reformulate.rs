//! Assembly of the single polynomial program `min f₀ s.t. Φ = 0, Ψ ≥ 0`
//! for each representation of the weakly Pareto set.

use serde::{Deserialize, Serialize};

use crate::mop::MopProblem;
use crate::poly::Polynomial;
use crate::representation::{RepKind, Representation};

/// Role of one coordinate of the flat variable vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", content = "index", rename_all = "lowercase")]
pub enum VarRole {
    X(usize),
    W(usize),
    Lambda(usize),
}

/// Names and roles of the flat variables: the `x` block, then the auxiliary block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarLayout {
    pub names: Vec<String>,
    pub roles: Vec<VarRole>,
}

impl VarLayout {
    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }
}

/// `min objective s.t. eqs = 0, ineqs ≥ 0` over `nvars` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyOptProblem {
    pub nvars: usize,
    pub objective: Polynomial,
    pub eqs: Vec<Polynomial>,
    pub ineqs: Vec<Polynomial>,
    pub d0: u32,
    pub layout: VarLayout,
    pub kind: RepKind,
}

impl PolyOptProblem {
    fn finish(
        nvars: usize,
        objective: Polynomial,
        eqs: Vec<Polynomial>,
        ineqs: Vec<Polynomial>,
        layout: VarLayout,
        kind: RepKind,
    ) -> Self {
        let d0 = eqs
            .iter()
            .chain(&ineqs)
            .map(|p| p.degree().div_ceil(2))
            .max()
            .unwrap_or(1)
            .max(1);
        PolyOptProblem {
            nvars,
            objective,
            eqs,
            ineqs,
            d0,
            layout,
            kind,
        }
    }

    /// Largest `|φ(v)|` over the equalities.
    pub fn eq_residual(&self, v: &[f64]) -> f64 {
        self.eqs.iter().fold(0.0, |m, p| m.max(p.eval(v).abs()))
    }

    /// Smallest `ψ(v)` over the inequalities (`+∞` when there are none).
    pub fn min_ineq(&self, v: &[f64]) -> f64 {
        self.ineqs.iter().fold(f64::INFINITY, |m, p| m.min(p.eval(v)))
    }

    /// The first relaxation order worth solving: `max(d0, ⌈deg f₀ / 2⌉)`.
    pub fn min_order(&self) -> u32 {
        self.d0.max(self.objective.degree().div_ceil(2))
    }
}

fn layout_for(prob: &MopProblem, kind: RepKind) -> VarLayout {
    let mut names = prob.var_names.clone();
    let mut roles: Vec<VarRole> = (0..prob.n).map(VarRole::X).collect();
    match kind {
        RepKind::XW => {
            for j in 0..prob.m() {
                names.push(format!("w{}", j + 1));
                roles.push(VarRole::W(j));
            }
        }
        RepKind::XLambda => {
            for i in 0..prob.l() {
                names.push(format!("lambda{}", i + 1));
                roles.push(VarRole::Lambda(i));
            }
        }
        RepKind::XOnly => {}
    }
    VarLayout { names, roles }
}

/// Stationarity components `Σ w_j∇f_j − Σ λ_i∇c_i` in a `total`-variable space.
fn stationarity(
    prob: &MopProblem,
    total: usize,
    w: &[Polynomial],
    lambda: &[Polynomial],
) -> Vec<Polynomial> {
    let mut out = vec![Polynomial::zero(total); prob.n];
    for (wj, f) in w.iter().zip(&prob.objectives) {
        for (k, g) in f.gradient().iter().enumerate() {
            if !g.is_zero() && !wj.is_zero() {
                out[k] += &(&g.lift(total) * wj);
            }
        }
    }
    for (li, c) in lambda.iter().zip(&prob.constraints) {
        for (k, g) in c.gradient().iter().enumerate() {
            if !g.is_zero() && !li.is_zero() {
                out[k] -= &(&g.lift(total) * li);
            }
        }
    }
    out
}

fn tuples(
    prob: &MopProblem,
    total: usize,
    w: &[Polynomial],
    lambda: &[Polynomial],
    kind: RepKind,
) -> (Vec<Polynomial>, Vec<Polynomial>) {
    let cons: Vec<Polynomial> = prob.constraints.iter().map(|c| c.lift(total)).collect();
    let mut eqs = stationarity(prob, total, w, lambda);
    for (li, ci) in lambda.iter().zip(&cons) {
        eqs.push(li * ci);
    }
    let mut wsum = Polynomial::zero(total);
    for wj in w {
        wsum += wj;
    }
    let one = Polynomial::one(total);
    eqs.push(match kind {
        RepKind::XW => &wsum - &one,
        _ => &one - &wsum,
    });

    let mut norm = one.clone();
    for wj in w {
        norm -= &(wj * wj);
    }
    let mut ineqs = vec![norm];
    match kind {
        RepKind::XLambda => {
            ineqs.extend(cons);
            ineqs.extend(w.iter().cloned());
            ineqs.extend(lambda.iter().cloned());
        }
        _ => {
            ineqs.extend(lambda.iter().cloned());
            ineqs.extend(cons);
            ineqs.extend(w.iter().cloned());
        }
    }
    (eqs, ineqs)
}

/// Dispatches on the representation kind.
pub fn reformulate(prob: &MopProblem, rep: &Representation) -> PolyOptProblem {
    match rep {
        Representation::XW { lambda } => reformulate_xw(prob, lambda),
        Representation::XLambda { weights } => reformulate_xlambda(prob, weights),
        Representation::XOnly { weights, lambda } => reformulate_xonly(prob, weights, lambda),
    }
}

/// Variables `(x, w)`; `lambda` are the expressions `λ_i(x, w)`.
pub fn reformulate_xw(prob: &MopProblem, lambda: &[Polynomial]) -> PolyOptProblem {
    let n = prob.n;
    let total = n + prob.m();
    let w: Vec<Polynomial> = (0..prob.m())
        .map(|j| Polynomial::var(total, n + j))
        .collect();
    let (eqs, ineqs) = tuples(prob, total, &w, lambda, RepKind::XW);
    PolyOptProblem::finish(
        total,
        prob.preference.lift(total),
        eqs,
        ineqs,
        layout_for(prob, RepKind::XW),
        RepKind::XW,
    )
}

/// Variables `(x, λ)`; `weights` are the expressions `w_j(x, λ)`.
pub fn reformulate_xlambda(prob: &MopProblem, weights: &[Polynomial]) -> PolyOptProblem {
    let n = prob.n;
    let total = n + prob.l();
    let lambda: Vec<Polynomial> = (0..prob.l())
        .map(|i| Polynomial::var(total, n + i))
        .collect();
    let (eqs, ineqs) = tuples(prob, total, weights, &lambda, RepKind::XLambda);
    PolyOptProblem::finish(
        total,
        prob.preference.lift(total),
        eqs,
        ineqs,
        layout_for(prob, RepKind::XLambda),
        RepKind::XLambda,
    )
}

/// Variables `x` only.
pub fn reformulate_xonly(
    prob: &MopProblem,
    weights: &[Polynomial],
    lambda: &[Polynomial],
) -> PolyOptProblem {
    let n = prob.n;
    let (eqs, ineqs) = tuples(prob, n, weights, lambda, RepKind::XOnly);
    PolyOptProblem::finish(
        n,
        prob.preference.clone(),
        eqs,
        ineqs,
        layout_for(prob, RepKind::XOnly),
        RepKind::XOnly,
    )
}

/// The flat point corresponding to a known `(x, w, λ)`.
pub fn lift_point(rep: &Representation, x: &[f64], w: &[f64], lambda: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    match rep.kind() {
        RepKind::XW => v.extend_from_slice(w),
        RepKind::XLambda => v.extend_from_slice(lambda),
        RepKind::XOnly => {}
    }
    v
}
