//! Linear scalarizations solved by first-order methods.
//!
//! For a convex problem every minimizer of `f_w = Σ w_j f_j` over `K` is
//! weakly Pareto, so sampling `w` over a simplex grid yields feasible
//! witnesses for the preference function and an upper bound on `f_min`.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mop::{ConstraintStructure, MopProblem};
use crate::poly::Polynomial;
use crate::representation::{kkt_residual_explicit, multipliers_at};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    DidNotConverge { iterations: usize, residual: f64 },
    #[error("weight vector has length {got}, expected {expected}")]
    WeightLength { got: usize, expected: usize },
    #[error("weight vector is not on the simplex")]
    NotOnSimplex,
}

/// All `w ∈ Δ^{m−1}` whose coordinates are multiples of `1/N`, in
/// lexicographic order of the integer numerators.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightGrid {
    pub m: usize,
    pub resolution: usize,
    pub points: Vec<Vec<f64>>,
}

impl WeightGrid {
    pub fn new(m: usize, resolution: usize) -> Self {
        let mut points = Vec::new();
        let mut cur = vec![0usize; m];
        fill(&mut cur, 0, resolution, resolution, &mut points);
        WeightGrid {
            m,
            resolution,
            points,
        }
    }

    pub fn step(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn fill(cur: &mut Vec<usize>, pos: usize, left: usize, n: usize, out: &mut Vec<Vec<f64>>) {
    let m = cur.len();
    if m == 0 {
        return;
    }
    if pos == m - 1 {
        cur[pos] = left;
        out.push(cur.iter().map(|&c| c as f64 / n as f64).collect());
        return;
    }
    for v in (0..=left).rev() {
        cur[pos] = v;
        fill(cur, pos + 1, left - v, n, out);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LspOptions {
    /// Stationarity and feasibility tolerance.
    pub tol: f64,
    /// Cap on gradient steps, summed over penalty rounds.
    pub max_iter: usize,
}

impl Default for LspOptions {
    fn default() -> Self {
        LspOptions {
            tol: 1e-7,
            max_iter: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LspSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

struct Smooth {
    f: Polynomial,
    grad: Vec<Polynomial>,
}

impl Smooth {
    fn new(f: Polynomial) -> Self {
        let grad = f.gradient();
        Smooth { f, grad }
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.f.eval(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.grad.iter().map(|g| g.eval(x)).collect()
    }
}

fn scalarized(prob: &MopProblem, w: &[f64]) -> Polynomial {
    let mut f = Polynomial::zero(prob.n);
    for (wj, fj) in w.iter().zip(&prob.objectives) {
        if *wj != 0.0 {
            f += &fj.scale(*wj);
        }
    }
    f
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean projection onto `{x : Ax ≥ b}` for linearly independent rows,
/// by coordinate descent on the dual.
fn project_polyhedron(a: &[Vec<f64>], b: &[f64], v: &[f64]) -> Vec<f64> {
    let l = a.len();
    let gram: Vec<Vec<f64>> = (0..l)
        .map(|i| (0..l).map(|j| dot(&a[i], &a[j])).collect())
        .collect();
    let q: Vec<f64> = (0..l).map(|i| dot(&a[i], v) - b[i]).collect();
    let mut mu = vec![0.0; l];
    for _ in 0..10_000 {
        let mut change = 0.0f64;
        for i in 0..l {
            let r: f64 = q[i] + (0..l).map(|j| gram[i][j] * mu[j]).sum::<f64>();
            let new = (mu[i] - r / gram[i][i]).max(0.0);
            change = change.max((new - mu[i]).abs());
            mu[i] = new;
        }
        if change <= 1e-15 * (1.0 + norm_inf(&mu)) {
            break;
        }
    }
    let mut z = v.to_vec();
    for (ai, mi) in a.iter().zip(&mu) {
        for (zk, ak) in z.iter_mut().zip(ai) {
            *zk += mi * ak;
        }
    }
    z
}

enum Feasible<'a> {
    Free,
    Box(&'a [f64]),
    Ball,
    Orthant,
    Polyhedral(&'a [Vec<f64>], &'a [f64]),
}

impl Feasible<'_> {
    fn project(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Feasible::Free => v.to_vec(),
            Feasible::Box(a) => v.iter().zip(*a).map(|(x, ai)| x.clamp(-ai, *ai)).collect(),
            Feasible::Ball => {
                let nrm = dot(v, v).sqrt();
                if nrm > 1.0 {
                    v.iter().map(|x| x / nrm).collect()
                } else {
                    v.to_vec()
                }
            }
            Feasible::Orthant => v.iter().map(|x| x.max(0.0)).collect(),
            Feasible::Polyhedral(a, b) => project_polyhedron(a, b, v),
        }
    }
}

/// Projected gradient with Barzilai-Borwein steps and Armijo backtracking
/// along the projection arc. Returns the final point and residual
/// `‖x − P(x − ∇f)‖∞`.
fn projected_gradient<F, G>(
    value: F,
    grad: G,
    set: &Feasible,
    x0: &[f64],
    tol: f64,
    budget: usize,
) -> (Vec<f64>, usize, f64)
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = set.project(x0);
    let mut fx = value(&x);
    let mut g = grad(&x);
    let mut t = 1.0 / norm_inf(&g).max(1.0);
    let mut residual = f64::INFINITY;
    for it in 0..budget {
        let step: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
        let p = set.project(&step);
        residual = x.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if residual <= tol {
            return (x, it, residual);
        }
        let (xn, fnew) = loop {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            let xn = set.project(&trial);
            let d: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let fnew = value(&xn);
            // slack at roundoff level: near the solution decreases of
            // order t·|g|² fall below the resolution of f itself
            let slack = 8.0 * f64::EPSILON * (1.0 + fx.abs());
            if fnew <= fx + 1e-4 * dot(&g, &d) + slack || t < 1e-16 {
                break (xn, fnew);
            }
            t *= 0.5;
        };
        let gn = grad(&xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        t = if sy > 0.0 {
            (dot(&s, &s) / sy).clamp(1e-12, 1e12)
        } else {
            (2.0 * t).min(1e12)
        };
        x = xn;
        fx = fnew;
        g = gn;
    }
    (x, budget, residual)
}

/// Minimizes `f_w` over `K`, starting from the projection of the origin.
pub fn solve_lsp(prob: &MopProblem, w: &[f64], opts: &LspOptions) -> Result<LspSolution, OracleError> {
    if w.len() != prob.m() {
        return Err(OracleError::WeightLength {
            got: w.len(),
            expected: prob.m(),
        });
    }
    if w.iter().any(|v| *v < -1e-12) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(OracleError::NotOnSimplex);
    }
    let obj = Smooth::new(scalarized(prob, w));
    let x0 = vec![0.0; prob.n];
    let set = match &prob.structure {
        ConstraintStructure::Free => Feasible::Free,
        ConstraintStructure::Box { a } => Feasible::Box(a),
        ConstraintStructure::Ball => Feasible::Ball,
        ConstraintStructure::NonnegOrthant => Feasible::Orthant,
        ConstraintStructure::Polyhedral { a, b } => Feasible::Polyhedral(a, b),
        ConstraintStructure::Triangular { .. } | ConstraintStructure::Custom { .. } => {
            return augmented_lagrangian(prob, &obj, &x0, opts);
        }
    };
    let (x, iterations, residual) = projected_gradient(
        |x| obj.value(x),
        |x| obj.gradient(x),
        &set,
        &x0,
        opts.tol,
        opts.max_iter,
    );
    if residual <= opts.tol {
        Ok(LspSolution {
            x,
            iterations,
            residual,
        })
    } else {
        Err(OracleError::DidNotConverge {
            iterations,
            residual,
        })
    }
}

/// Quadratic penalty with multiplier updates for general inequality
/// constraints `c_i(x) ≥ 0`.
fn augmented_lagrangian(
    prob: &MopProblem,
    obj: &Smooth,
    x0: &[f64],
    opts: &LspOptions,
) -> Result<LspSolution, OracleError> {
    let cons: Vec<Smooth> = prob.constraints.iter().cloned().map(Smooth::new).collect();
    let l = cons.len();
    let mut mu = vec![0.0; l];
    let mut rho = 10.0;
    let mut x = x0.to_vec();
    let mut used = 0;
    let mut last_viol = f64::INFINITY;
    let mut residual = f64::INFINITY;
    while used < opts.max_iter {
        let shifted = |x: &[f64], mu: &[f64]| -> Vec<f64> {
            cons.iter()
                .zip(mu)
                .map(|(c, m)| (m - rho * c.value(x)).max(0.0))
                .collect()
        };
        let value = |x: &[f64]| {
            let s = shifted(x, &mu);
            obj.value(x) + s.iter().zip(&mu).map(|(a, b)| a * a - b * b).sum::<f64>() / (2.0 * rho)
        };
        let grad = |x: &[f64]| {
            let s = shifted(x, &mu);
            let mut g = obj.gradient(x);
            for (c, si) in cons.iter().zip(&s) {
                if *si > 0.0 {
                    for (gk, ck) in g.iter_mut().zip(c.gradient(x)) {
                        *gk -= si * ck;
                    }
                }
            }
            g
        };
        let (xn, it, _) = projected_gradient(
            value,
            grad,
            &Feasible::Free,
            &x,
            0.1 * opts.tol,
            (opts.max_iter - used).min(2_000),
        );
        used += it.max(1);
        x = xn;
        mu = shifted(&x, &mu);

        let cv: Vec<f64> = cons.iter().map(|c| c.value(&x)).collect();
        let viol = cv
            .iter()
            .zip(&mu)
            .map(|(c, m)| (-c).max((c * m).abs()))
            .fold(0.0, f64::max);
        let mut stat = obj.gradient(&x);
        for (c, m) in cons.iter().zip(&mu) {
            for (sk, ck) in stat.iter_mut().zip(c.gradient(&x)) {
                *sk -= m * ck;
            }
        }
        residual = norm_inf(&stat).max(viol);
        if residual <= opts.tol {
            return Ok(LspSolution {
                x,
                iterations: used,
                residual,
            });
        }
        if viol > 0.25 * last_viol {
            rho = (rho * 10.0).min(1e10);
        }
        last_viol = viol;
    }
    Err(OracleError::DidNotConverge {
        iterations: used,
        residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub f0: f64,
    pub kkt_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub samples: Vec<Sample>,
    /// Weights whose scalarization did not converge.
    pub skipped: Vec<Vec<f64>>,
    pub upper_bound: Option<f64>,
    pub best: Option<usize>,
}

impl OracleReport {
    pub fn best_sample(&self) -> Option<&Sample> {
        self.best.map(|i| &self.samples[i])
    }

    /// Headerless-free CSV with columns `w1..wm, x1..xn, f0, kkt`.
    pub fn write_csv<W: Write>(&self, out: W, var_names: &[String]) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        if let Some(s) = self.samples.first() {
            let mut header: Vec<String> = (1..=s.w.len()).map(|j| format!("w{j}")).collect();
            header.extend(var_names.iter().cloned());
            header.push("f0".into());
            header.push("kkt".into());
            wr.write_record(&header)?;
        }
        for s in &self.samples {
            let row: Vec<String> = s
                .w
                .iter()
                .chain(&s.x)
                .chain([&s.f0, &s.kkt_residual])
                .map(|v| format!("{v:.12e}"))
                .collect();
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// One scalarization per grid weight, solved in parallel.
pub fn sample_wp(prob: &MopProblem, resolution: usize, opts: &LspOptions) -> OracleReport {
    let grid = WeightGrid::new(prob.m(), resolution.max(1));
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(grid.len().max(1));
    let chunk = grid.len().div_ceil(threads).max(1);
    let results: Vec<(Vec<f64>, Result<LspSolution, OracleError>)> = std::thread::scope(|s| {
        let handles: Vec<_> = grid
            .points
            .chunks(chunk)
            .map(|ws| {
                s.spawn(move || {
                    ws.iter()
                        .map(|w| (w.clone(), solve_lsp(prob, w, opts)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("oracle worker panicked"))
            .collect()
    });

    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (w, res) in results {
        match res {
            Ok(sol) => {
                let lambda = multipliers_at(prob, &sol.x, &w);
                let kkt_residual = kkt_residual_explicit(prob, &sol.x, &w, &lambda);
                let f0 = prob.preference.eval(&sol.x);
                samples.push(Sample {
                    w,
                    x: sol.x,
                    lambda,
                    f0,
                    kkt_residual,
                });
            }
            Err(_) => skipped.push(w),
        }
    }
    let best = samples
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.f0.total_cmp(&b.1.f0))
        .map(|(i, _)| i);
    OracleReport {
        upper_bound: best.map(|i| samples[i].f0),
        samples,
        skipped,
        best,
    }
}
