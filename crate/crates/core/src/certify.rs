//! Flat-truncation certificates and extraction of atomic measures from a
//! truncated multi-sequence.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moment::Tms;
use crate::poly::{MonomialIndex, Polynomial};

/// Seed of the random combination of multiplication matrices.
pub const EXTRACTION_SEED: u64 = 0x0057_A7E5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractError {
    #[error("rank {rank} is outside 1..={max}")]
    BadRank { rank: usize, max: usize },
    #[error("truncation order {t} exceeds the tms degree {degree}/2")]
    OrderTooHigh { t: u32, degree: u32 },
    #[error("multiplication matrices are not simultaneously diagonalizable: {0}")]
    EigenDecompositionFailure(String),
}

/// Outcome of the rank test at one order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankCheck {
    pub t: u32,
    pub rank_t: usize,
    pub rank_t_minus_d0: usize,
    pub singular_values_t: Vec<f64>,
    pub singular_values_t_minus_d0: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatTruncationReport {
    /// The order that passed, or the last one tried.
    pub t: u32,
    pub rank_t: usize,
    pub rank_t_minus_d0: usize,
    pub singular_values_t: Vec<f64>,
    pub singular_values_t_minus_d0: Vec<f64>,
    pub passed: bool,
    /// Every order scanned, in increasing `t`.
    pub scan: Vec<RankCheck>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// `‖Σγ_j[atom_j] − y‖∞` over moments of degree `≤ 2t`, before refinement.
    pub moment_residual: f64,
}

impl AtomicMeasure {
    pub fn r(&self) -> usize {
        self.atoms.len()
    }
}

fn sym_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .map(|v| v.abs())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

fn rank_of(sv: &[f64], rel_tol: f64) -> usize {
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s >= rel_tol * smax).count()
}

/// Number of singular values at least `rel_tol · σ_max`.
pub fn numeric_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    rank_of(&sym_singular_values(m), rel_tol)
}

/// Scans `t = d0, …, k` for `rank M_t = rank M_{t−d0}`.
pub fn flat_truncation(y: &Tms, d0: u32, k: u32, rel_tol: f64) -> FlatTruncationReport {
    let k = k.min(y.degree / 2);
    let mut scan = Vec::new();
    for t in d0..=k {
        let sv_t = sym_singular_values(&y.moment_matrix(t));
        let sv_l = sym_singular_values(&y.moment_matrix(t - d0));
        let check = RankCheck {
            t,
            rank_t: rank_of(&sv_t, rel_tol),
            rank_t_minus_d0: rank_of(&sv_l, rel_tol),
            singular_values_t: sv_t,
            singular_values_t_minus_d0: sv_l,
        };
        let passed = check.rank_t == check.rank_t_minus_d0;
        scan.push(check);
        if passed {
            break;
        }
    }
    let last = scan.last().cloned().unwrap_or(RankCheck {
        t: d0,
        rank_t: 0,
        rank_t_minus_d0: 0,
        singular_values_t: Vec::new(),
        singular_values_t_minus_d0: Vec::new(),
    });
    FlatTruncationReport {
        t: last.t,
        rank_t: last.rank_t,
        rank_t_minus_d0: last.rank_t_minus_d0,
        passed: !scan.is_empty() && last.rank_t == last.rank_t_minus_d0,
        singular_values_t: last.singular_values_t,
        singular_values_t_minus_d0: last.singular_values_t_minus_d0,
        scan,
    }
}

/// Reduced column echelon form; returns the matrix and pivot rows.
fn column_echelon(mut u: DMatrix<f64>, tol: f64) -> (DMatrix<f64>, Vec<usize>) {
    let (rows, cols) = u.shape();
    let mut pivots = Vec::with_capacity(cols);
    let mut c = 0;
    for i in 0..rows {
        if c == cols {
            break;
        }
        let (best, val) = (c..cols)
            .map(|j| (j, u[(i, j)]))
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("nonempty range");
        if val.abs() <= tol {
            for j in c..cols {
                u[(i, j)] = 0.0;
            }
            continue;
        }
        u.swap_columns(c, best);
        let col = u.column(c) / val;
        u.set_column(c, &col);
        for j in 0..cols {
            if j != c {
                let f = u[(i, j)];
                if f != 0.0 {
                    let upd = u.column(j) - &col * f;
                    u.set_column(j, &upd);
                }
            }
        }
        pivots.push(i);
        c += 1;
    }
    (u, pivots)
}

/// Recovers an `r`-atomic measure from a flat `M_t[y]`.
pub fn extract_atoms(y: &Tms, t: u32, r: usize) -> Result<AtomicMeasure, ExtractError> {
    if 2 * t > y.degree {
        return Err(ExtractError::OrderTooHigh {
            t,
            degree: y.degree,
        });
    }
    let n = y.nvars;
    let index = MonomialIndex::new(n, y.degree);
    let m = y.moment_matrix(t);
    let s = m.nrows();
    if r == 0 || r > s {
        return Err(ExtractError::BadRank { rank: r, max: s });
    }
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let v = DMatrix::from_fn(s, r, |i, j| {
        let e = order[j];
        eig.eigenvectors[(i, e)] * eig.eigenvalues[e].max(0.0).sqrt()
    });
    let tol = 1e-6 * v.amax().max(1e-300);
    let (u, pivots) = column_echelon(v, tol);
    if pivots.len() != r {
        return Err(ExtractError::EigenDecompositionFailure(format!(
            "echelon form found {} pivots for rank {r}",
            pivots.len()
        )));
    }
    let basis = index.basis();
    let row_of = |e: &crate::poly::Exponent| -> Option<usize> {
        index.get(e).filter(|&i| i < s)
    };
    let mut mults = Vec::with_capacity(n);
    for var in 0..n {
        let unit = crate::poly::Exponent::unit(n, var);
        let mut nm = DMatrix::zeros(r, r);
        for (j, &p) in pivots.iter().enumerate() {
            let shifted = basis[p].add(&unit);
            let Some(row) = row_of(&shifted) else {
                return Err(ExtractError::EigenDecompositionFailure(format!(
                    "shifted basis monomial {shifted:?} leaves the order-{t} basis"
                )));
            };
            for c in 0..r {
                nm[(j, c)] = u[(row, c)];
            }
        }
        mults.push(nm);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(EXTRACTION_SEED);
    let mut coefs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let total: f64 = coefs.iter().sum();
    for c in &mut coefs {
        *c /= total.max(1e-300);
    }
    let mut comb = DMatrix::zeros(r, r);
    for (c, nm) in coefs.iter().zip(&mults) {
        comb += nm * *c;
    }
    let (q, tmat) = nalgebra::linalg::Schur::try_new(comb, f64::EPSILON, 10_000)
        .ok_or_else(|| ExtractError::EigenDecompositionFailure("Schur iteration diverged".into()))?
        .unpack();
    let scale = tmat.amax().max(1.0);
    for j in 0..r.saturating_sub(1) {
        if tmat[(j + 1, j)].abs() > 1e-6 * scale {
            return Err(ExtractError::EigenDecompositionFailure(
                "complex eigenvalue pair in the combined multiplication matrix".into(),
            ));
        }
    }
    let atoms: Vec<Vec<f64>> = (0..r)
        .map(|j| {
            let qj = q.column(j);
            mults
                .iter()
                .map(|nm| (qj.transpose() * nm * qj)[(0, 0)])
                .collect()
        })
        .collect();
    let weights = fit_weights(y, &index, &atoms, t)?;
    let moment_residual = reconstruction_residual(y, &index, &atoms, &weights, 2 * t);
    Ok(AtomicMeasure {
        atoms,
        weights,
        moment_residual,
    })
}

fn fit_weights(
    y: &Tms,
    index: &MonomialIndex,
    atoms: &[Vec<f64>],
    t: u32,
) -> Result<Vec<f64>, ExtractError> {
    let rows = index.count_up_to(t);
    let basis = index.basis();
    let a = DMatrix::from_fn(rows, atoms.len(), |i, j| basis[i].eval(&atoms[j]));
    let b = DVector::from_iterator(rows, y.values[..rows].iter().cloned());
    let svd = a.svd(true, true);
    let g = svd
        .solve(&b, 1e-12)
        .map_err(|e| ExtractError::EigenDecompositionFailure(e.to_string()))?;
    let mut w: Vec<f64> = g.iter().cloned().collect();
    if w.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
        return Err(ExtractError::EigenDecompositionFailure(format!(
            "non-positive atom weight in {w:?}"
        )));
    }
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    Ok(w)
}

/// `‖Σγ_j[atom_j] − y‖∞` over moments of degree `≤ deg`.
pub fn reconstruction_residual(
    y: &Tms,
    index: &MonomialIndex,
    atoms: &[Vec<f64>],
    weights: &[f64],
    deg: u32,
) -> f64 {
    let count = index.count_up_to(deg);
    index.basis()[..count]
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let v: f64 = atoms.iter().zip(weights).map(|(a, g)| g * e.eval(a)).sum();
            (v - y.values[i]).abs()
        })
        .fold(0.0, f64::max)
}

/// Gauss–Newton steps on `eqs(v) = 0` from `start`, keeping only steps that
/// reduce the residual without pushing `ineqs` further negative.
pub fn refine_point(
    start: &[f64],
    eqs: &[Polynomial],
    ineqs: &[Polynomial],
    steps: usize,
) -> Vec<f64> {
    let eqs: Vec<&Polynomial> = eqs.iter().filter(|p| !p.is_zero()).collect();
    if eqs.is_empty() {
        return start.to_vec();
    }
    let nv = start.len();
    let grads: Vec<Vec<Polynomial>> = eqs.iter().map(|p| p.gradient()).collect();
    let resid = |v: &[f64]| -> f64 { eqs.iter().map(|p| p.eval(v).powi(2)).sum::<f64>().sqrt() };
    let viol = |v: &[f64]| -> f64 {
        ineqs
            .iter()
            .map(|p| (-p.eval(v)).max(0.0))
            .fold(0.0, f64::max)
    };
    let mut v = start.to_vec();
    let mut cur = resid(&v);
    for _ in 0..steps {
        if cur < 1e-14 {
            break;
        }
        let jac = DMatrix::from_fn(eqs.len(), nv, |i, j| grads[i][j].eval(&v));
        let f = DVector::from_iterator(eqs.len(), eqs.iter().map(|p| p.eval(&v)));
        let svd = jac.svd(true, true);
        let Ok(step) = svd.solve(&f, 1e-10) else {
            break;
        };
        let cand: Vec<f64> = v.iter().zip(step.iter()).map(|(a, d)| a - d).collect();
        let next = resid(&cand);
        if next < cur && viol(&cand) <= viol(&v).max(1e-9) {
            v = cand;
            cur = next;
        } else {
            break;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_thresholds() {
        assert_eq!(numeric_rank(&DMatrix::identity(5, 5), 1e-6), 5);
        let v = DVector::from_vec(vec![0.3, -1.2, 2.0, 0.7]);
        assert_eq!(numeric_rank(&(&v * v.transpose()), 1e-6), 1);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-3, 1e-12]));
        assert_eq!(numeric_rank(&d, 1e-6), 2);
        assert_eq!(numeric_rank(&DMatrix::zeros(3, 3), 1e-6), 0);
    }

    #[test]
    fn dirac_is_flat_at_every_order() {
        let u = [0.4, -0.7];
        let y = Tms::dirac(&u, 6);
        let rep = flat_truncation(&y, 1, 3, 1e-6);
        assert!(rep.passed);
        assert_eq!(rep.t, 1);
        assert_eq!(rep.rank_t, 1);
        let m = extract_atoms(&y, rep.t, rep.rank_t).unwrap();
        assert_eq!(m.r(), 1);
        assert!((m.weights[0] - 1.0).abs() < 1e-12);
        for (a, b) in m.atoms[0].iter().zip(&u) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn two_atoms_recovered() {
        let u = vec![0.5, -0.25, 1.0];
        let v = vec![-0.8, 0.3, 0.1];
        let y = Tms::mixture(&[(0.5, u.clone()), (0.5, v.clone())], 6);
        let rep = flat_truncation(&y, 1, 3, 1e-6);
        assert!(rep.passed);
        assert_eq!(rep.rank_t, 2);
        let m = extract_atoms(&y, rep.t, rep.rank_t).unwrap();
        assert_eq!(m.r(), 2);
        for target in [&u, &v] {
            let hit = m.atoms.iter().zip(&m.weights).any(|(a, g)| {
                (g - 0.5).abs() < 1e-4 && a.iter().zip(target).all(|(x, t)| (x - t).abs() < 1e-5)
            });
            assert!(hit, "missing {target:?} in {:?}", m.atoms);
        }
        assert!(m.moment_residual < 1e-8);
    }

    #[test]
    fn uniform_measure_is_not_flat() {
        // moments of the uniform measure on [−1, 1]
        let deg = 8;
        let vals: Vec<f64> = (0..=deg)
            .map(|a| if a % 2 == 1 { 0.0 } else { 1.0 / (a as f64 + 1.0) })
            .collect();
        let y = Tms::new(1, deg as u32, vals);
        let rep = flat_truncation(&y, 1, 4, 1e-6);
        assert!(!rep.passed);
        assert_eq!(rep.scan.len(), 4);
        for c in &rep.scan {
            assert_eq!(c.rank_t, c.t as usize + 1);
        }
    }

    #[test]
    fn bad_rank_is_reported() {
        let y = Tms::dirac(&[1.0], 4);
        assert!(matches!(extract_atoms(&y, 1, 0), Err(ExtractError::BadRank { .. })));
        assert!(matches!(extract_atoms(&y, 3, 1), Err(ExtractError::OrderTooHigh { .. })));
    }

    #[test]
    fn refinement_reduces_residual() {
        // circle x² + y² = 1
        let n = 2;
        let x = Polynomial::var(n, 0);
        let y = Polynomial::var(n, 1);
        let circ = &(&(&x * &x) + &(&y * &y)) - &Polynomial::one(n);
        let start = [0.72, 0.71];
        let v = refine_point(&start, std::slice::from_ref(&circ), &[], 5);
        assert!(circ.eval(&v).abs() < 1e-10);
        assert!(circ.eval(&v).abs() < circ.eval(&start).abs());
    }
}
