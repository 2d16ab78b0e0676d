//! Moment and localizing matrices, and the moment relaxation of a
//! [`PolyOptProblem`] as a linear-matrix-inequality SDP over a truncated
//! multi-sequence.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::poly::{binomial, Exponent, MonomialIndex, Polynomial};
use crate::reformulate::PolyOptProblem;
use crate::sdp::{LmiBlock, SdpProblem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("relaxation order {k} is below the minimum {d0}")]
    OrderTooLow { k: u32, d0: u32 },
    #[error("polynomial of degree {deg} does not fit order {k}")]
    DegreeTooHigh { deg: u32, k: u32 },
}

/// A truncated multi-sequence `y = (y_α)_{|α| ≤ degree}` in grlex order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tms {
    pub nvars: usize,
    pub degree: u32,
    pub values: Vec<f64>,
}

impl Tms {
    pub fn new(nvars: usize, degree: u32, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), binomial(nvars + degree as usize, degree as usize));
        Tms {
            nvars,
            degree,
            values,
        }
    }

    /// Moments `[u]_degree` of the Dirac measure at `u`.
    pub fn dirac(point: &[f64], degree: u32) -> Self {
        let index = MonomialIndex::new(point.len(), degree);
        Tms {
            nvars: point.len(),
            degree,
            values: index.basis().iter().map(|e| e.eval(point)).collect(),
        }
    }

    /// Moments of `Σ γ_j δ_{u_j}`.
    pub fn mixture(atoms: &[(f64, Vec<f64>)], degree: u32) -> Self {
        let nvars = atoms.first().map(|a| a.1.len()).unwrap_or(0);
        let index = MonomialIndex::new(nvars, degree);
        let values = index
            .basis()
            .iter()
            .map(|e| atoms.iter().map(|(g, u)| g * e.eval(u)).sum())
            .collect();
        Tms {
            nvars,
            degree,
            values,
        }
    }

    /// `⟨p, y⟩ = Σ p_α y_α`; terms beyond the truncation are ignored.
    pub fn pair(&self, p: &Polynomial, index: &MonomialIndex) -> f64 {
        p.terms()
            .filter_map(|(e, c)| index.get(e).map(|i| c * self.values[i]))
            .sum()
    }

    /// The moment matrix `M_t[y]` as a dense matrix (`2t ≤ degree`).
    pub fn moment_matrix(&self, t: u32) -> nalgebra::DMatrix<f64> {
        let index = MonomialIndex::new(self.nvars, self.degree);
        let map = moment_matrix(&index, t);
        map.evaluate(&self.values)
    }
}

/// A symmetric matrix whose entries are linear in the tms:
/// `F(y) = Σ coef · y_var · (E_ij + E_ji)/(1 or 2)`.
///
/// Only entries with `i ≤ j` are stored.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMatrixMap {
    pub size: usize,
    /// `(i, j, var, coef)` with `i ≤ j`.
    pub terms: Vec<(usize, usize, usize, f64)>,
}

impl LinearMatrixMap {
    pub fn evaluate(&self, y: &[f64]) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.size, self.size);
        for &(i, j, v, c) in &self.terms {
            m[(i, j)] += c * y[v];
            if i != j {
                m[(j, i)] += c * y[v];
            }
        }
        m
    }

    /// Symbolic rendering: each entry as a sum of `coef*y[var]`.
    pub fn entry_terms(&self, i: usize, j: usize) -> Vec<(usize, f64)> {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.terms
            .iter()
            .filter(|t| t.0 == a && t.1 == b)
            .map(|t| (t.2, t.3))
            .collect()
    }
}

/// `M_k[y]`: entry `(α, β)` is `y_{α+β}` over the degree-`k` grlex basis.
pub fn moment_matrix(index: &MonomialIndex, k: u32) -> LinearMatrixMap {
    let s = index.count_up_to(k);
    let b = index.basis();
    let mut terms = Vec::with_capacity(s * (s + 1) / 2);
    for i in 0..s {
        for j in i..s {
            let v = index.get(&b[i].add(&b[j])).expect("degree within 2k");
            terms.push((i, j, v, 1.0));
        }
    }
    LinearMatrixMap { size: s, terms }
}

/// `L_q^{(k)}[y]`: entry `(α, β)` is `Σ_γ q_γ y_{α+β+γ}` with `|α|, |β| ≤ k − ⌈deg q/2⌉`.
pub fn localizing_matrix(
    q: &Polynomial,
    k: u32,
    index: &MonomialIndex,
) -> Result<LinearMatrixMap, MomentError> {
    let half = q.degree().div_ceil(2);
    if half > k {
        return Err(MomentError::DegreeTooHigh {
            deg: q.degree(),
            k,
        });
    }
    let t = k - half;
    let s = index.count_up_to(t);
    let b = index.basis();
    let mut terms = Vec::new();
    for i in 0..s {
        for j in i..s {
            let ab = b[i].add(&b[j]);
            for (g, c) in q.terms() {
                let v = index.get(&ab.add(g)).ok_or(MomentError::DegreeTooHigh {
                    deg: q.degree(),
                    k,
                })?;
                terms.push((i, j, v, c));
            }
        }
    }
    Ok(LinearMatrixMap { size: s, terms })
}

/// How many shifts `x^δ φ` of each equality enter the relaxation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EqualityMode {
    /// Distinct entries of `L_φ^{(k)}[y]`: `|δ| ≤ 2(k − ⌈deg φ/2⌉)`.
    Localizing,
    /// The full truncated ideal: `|δ| ≤ 2k − deg φ`.
    #[default]
    Ideal,
}

/// A labelled PSD block of the relaxation.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdBlock {
    pub label: String,
    pub map: LinearMatrixMap,
}

/// The order-`k` moment relaxation.
#[derive(Clone, Debug)]
pub struct MomentSdp {
    pub nvars: usize,
    pub order: u32,
    pub index: MonomialIndex,
    pub blocks: Vec<PsdBlock>,
    /// Sparse equality rows `Σ coef·y_var = rhs`.
    pub eq_rows: Vec<Vec<(usize, f64)>>,
    pub eq_rhs: Vec<f64>,
    /// Dense objective `⟨f₀, y⟩` coefficients.
    pub objective: Vec<f64>,
}

impl MomentSdp {
    pub fn num_moments(&self) -> usize {
        self.index.len()
    }

    pub fn moment_block_size(&self) -> usize {
        self.blocks[0].map.size
    }

    /// Converts to the solver's LMI form `min cᵀy, By = b, Σ y_i F_i ⪰ 0`.
    pub fn to_sdp(&self) -> SdpProblem {
        let blocks = self
            .blocks
            .iter()
            .map(|b| LmiBlock {
                size: b.map.size,
                constant: Vec::new(),
                terms: b.map.terms.clone(),
            })
            .collect();
        SdpProblem {
            nvars: self.num_moments(),
            c: self.objective.clone(),
            eq_rows: self.eq_rows.clone(),
            eq_rhs: self.eq_rhs.clone(),
            blocks,
        }
    }

    /// Largest equality violation and smallest block eigenvalue at `y`.
    pub fn check_point(&self, y: &[f64]) -> (f64, f64) {
        let eq = self
            .eq_rows
            .iter()
            .zip(&self.eq_rhs)
            .map(|(row, rhs)| (row.iter().map(|(v, c)| c * y[*v]).sum::<f64>() - rhs).abs())
            .fold(0.0, f64::max);
        let eig = self
            .blocks
            .iter()
            .map(|b| b.map.evaluate(y).symmetric_eigenvalues().min())
            .fold(f64::INFINITY, f64::min);
        (eq, eig)
    }

    /// Sparse text export: a header, block sizes, then `block i j var coef`
    /// triples, equality triples `eq row var coef`, right-hand sides and the
    /// objective.
    pub fn export_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# owp moment sdp: nvars {} order {} moments {}",
            self.nvars,
            self.order,
            self.num_moments()
        );
        let _ = writeln!(s, "blocks {}", self.blocks.len());
        for b in &self.blocks {
            let _ = writeln!(s, "size {} {}", b.map.size, b.label);
        }
        for (k, b) in self.blocks.iter().enumerate() {
            for (i, j, v, c) in &b.map.terms {
                let _ = writeln!(s, "F {k} {i} {j} {v} {c:e}");
            }
        }
        for (r, row) in self.eq_rows.iter().enumerate() {
            for (v, c) in row {
                let _ = writeln!(s, "B {r} {v} {c:e}");
            }
            let _ = writeln!(s, "b {r} {:e}", self.eq_rhs[r]);
        }
        for (v, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = writeln!(s, "c {v} {c:e}");
            }
        }
        s
    }
}

/// Normalized hash key of a sparse row (∞-norm 1, first nonzero positive).
fn row_key(row: &[(usize, f64)], rhs: f64) -> Vec<(usize, i64)> {
    let scale = row
        .iter()
        .map(|(_, c)| c.abs())
        .fold(rhs.abs(), f64::max);
    let sign = row
        .first()
        .map(|(_, c)| c.signum())
        .unwrap_or(rhs.signum());
    let q = |c: f64| (sign * c / scale * 1e12).round() as i64;
    let mut key: Vec<(usize, i64)> = row.iter().map(|(v, c)| (*v, q(*c))).collect();
    key.push((usize::MAX, q(rhs)));
    key
}

/// Builds the order-`k` relaxation of `pop`.
pub fn assemble_sdp(
    pop: &PolyOptProblem,
    k: u32,
    mode: EqualityMode,
) -> Result<MomentSdp, MomentError> {
    if k < pop.d0 {
        return Err(MomentError::OrderTooLow { k, d0: pop.d0 });
    }
    if pop.objective.degree() > 2 * k {
        return Err(MomentError::DegreeTooHigh {
            deg: pop.objective.degree(),
            k,
        });
    }
    let index = MonomialIndex::new(pop.nvars, 2 * k);
    let mut blocks = vec![PsdBlock {
        label: "moment".into(),
        map: moment_matrix(&index, k),
    }];
    for (i, q) in pop.ineqs.iter().enumerate() {
        // nonnegative constants are vacuous
        if q.is_constant() && q.constant_term() >= 0.0 {
            continue;
        }
        blocks.push(PsdBlock {
            label: format!("psi{}", i + 1),
            map: localizing_matrix(q, k, &index)?,
        });
    }

    let mut eq_rows: Vec<Vec<(usize, f64)>> = vec![vec![(0, 1.0)]];
    let mut eq_rhs = vec![1.0];
    let mut seen: HashMap<Vec<(usize, i64)>, ()> = HashMap::new();
    seen.insert(row_key(&eq_rows[0], 1.0), ());
    for phi in &pop.eqs {
        if phi.is_zero() {
            continue;
        }
        let deg = phi.degree();
        let shift = match mode {
            EqualityMode::Localizing => 2 * (k - deg.div_ceil(2)),
            EqualityMode::Ideal => 2 * k - deg,
        };
        let n_shift = index.count_up_to(shift);
        for delta in &index.basis()[..n_shift] {
            let mut acc: HashMap<usize, f64> = HashMap::new();
            for (g, c) in phi.terms() {
                let v = index.get(&g.add(delta)).expect("within 2k");
                *acc.entry(v).or_insert(0.0) += c;
            }
            let mut row: Vec<(usize, f64)> = acc.into_iter().filter(|(_, c)| *c != 0.0).collect();
            row.sort_by_key(|(v, _)| *v);
            if row.is_empty() {
                continue;
            }
            let key = row_key(&row, 0.0);
            if seen.insert(key, ()).is_none() {
                eq_rows.push(row);
                eq_rhs.push(0.0);
            }
        }
    }
    let mut objective = vec![0.0; index.len()];
    for (e, c) in pop.objective.terms() {
        objective[index.get(e).expect("objective degree checked")] += c;
    }
    Ok(MomentSdp {
        nvars: pop.nvars,
        order: k,
        index,
        blocks,
        eq_rows,
        eq_rhs,
        objective,
    })
}

/// Monomials indexing the rows of `M_t`.
pub fn row_monomials(index: &MonomialIndex, t: u32) -> &[Exponent] {
    &index.basis()[..index.count_up_to(t)]
}
