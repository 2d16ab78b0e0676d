//! The outer loop: build a representation, then walk up the relaxation
//! orders until flat truncation certifies and extracted minimizers check out.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{extract_atoms, flat_truncation, refine_point, FlatTruncationReport};
use crate::moment::{assemble_sdp, EqualityMode, MomentError, MomentSdp, Tms};
use crate::mop::MopProblem;
use crate::reformulate::{reformulate, PolyOptProblem};
use crate::representation::{
    build_representation, kkt_residual_explicit, RepChoice, RepError, RepKind, Representation,
};
use crate::sdp::{solve, LmiBlock, SdpOptions, SdpProblem, SdpStatus};

#[derive(Clone, Debug, PartialEq)]
pub struct OwpOptions {
    pub rep: RepChoice,
    /// Highest relaxation order; `None` means `d0 + 3`.
    pub k_max: Option<u32>,
    pub rank_tol: f64,
    pub sdp: SdpOptions,
    /// Degree cap of the polynomial left-inverse search.
    pub inverse_degree: u32,
    pub equality_mode: EqualityMode,
    /// Feasibility and objective tolerance for accepting extracted atoms.
    pub accept_tol: f64,
    /// Re-solve with a trace objective when flat truncation fails.
    pub low_rank_pass: bool,
    /// Divide the SDP objective by its largest coefficient before solving.
    pub scale_objective: bool,
}

impl Default for OwpOptions {
    fn default() -> Self {
        OwpOptions {
            rep: RepChoice::Auto,
            k_max: None,
            rank_tol: 1e-6,
            sdp: SdpOptions::default(),
            inverse_degree: 2,
            equality_mode: EqualityMode::Ideal,
            accept_tol: 1e-5,
            low_rank_pass: true,
            scale_objective: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OwpStatus {
    Solved,
    InfeasibleNoWPP,
    OrderLimitReached,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Minimizer {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub lambda: Vec<f64>,
    /// The atom in the flat variable space.
    pub point: Vec<f64>,
    pub weight: f64,
    pub f0: f64,
    pub kkt_residual: f64,
    pub eq_residual: f64,
    /// `+∞` (JSON `null`) when the program has no inequalities.
    #[serde(with = "unbounded_as_null")]
    pub min_ineq: f64,
}

mod unbounded_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// One relaxation order's solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderLog {
    pub k: u32,
    pub sdp_status: SdpStatus,
    pub bound: Option<f64>,
    pub moments: usize,
    pub moment_block: usize,
    pub equalities: usize,
    pub iterations: usize,
    pub seconds: f64,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OwpResult {
    pub status: OwpStatus,
    /// Optimal value when solved, otherwise the best lower bound found.
    pub fmin: f64,
    /// The moment relaxation bound at `order_used`.
    pub lower_bound: Option<f64>,
    pub minimizers: Vec<Minimizer>,
    pub certificate: Option<FlatTruncationReport>,
    pub order_used: u32,
    pub representation: RepKind,
    pub variables: Vec<String>,
    pub history: Vec<OrderLog>,
}

#[derive(Debug, Error)]
pub enum OwpError {
    #[error(transparent)]
    Representation(#[from] RepError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error("SDP solver stopped with {status:?} at order {k}: {detail}")]
    Solver {
        k: u32,
        status: SdpStatus,
        detail: String,
    },
}

/// `min trace M_k[y]` over the relaxation with `⟨f₀, y⟩ ≤ level`.
fn trace_problem(msdp: &MomentSdp, level: f64, weight: Option<&DMatrix<f64>>) -> SdpProblem {
    let mut sdp = msdp.to_sdp();
    let mut c = vec![0.0; sdp.nvars];
    for &(i, j, v, coef) in &msdp.blocks[0].map.terms {
        match weight {
            None if i == j => c[v] += coef,
            None => {}
            Some(w) => c[v] += coef * w[(i, j)] * if i == j { 1.0 } else { 2.0 },
        }
    }
    let terms = msdp
        .objective
        .iter()
        .enumerate()
        .filter(|(_, a)| **a != 0.0)
        .map(|(v, a)| (0, 0, v, -a))
        .collect();
    sdp.blocks.push(LmiBlock {
        size: 1,
        constant: vec![(0, 0, level)],
        terms,
    });
    sdp.c = c;
    sdp
}

/// Reweighting matrix `(M + δI)⁻¹` for the log-det heuristic.
fn reweight(y: &Tms, k: u32) -> DMatrix<f64> {
    let m = y.moment_matrix(k);
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let delta = 1e-4 * top.max(1e-12);
    let mut w = DMatrix::zeros(n, n);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        w += (v * v.transpose()) / (l.max(0.0) + delta);
    }
    w * delta
}

/// Builds the representation and its polynomial program.
pub fn prepare(
    prob: &MopProblem,
    opts: &OwpOptions,
) -> Result<(Representation, PolyOptProblem), OwpError> {
    let rep = build_representation(prob, opts.rep, opts.inverse_degree)?;
    let pop = reformulate(prob, &rep);
    Ok((rep, pop))
}

pub fn run_owp(prob: &MopProblem, opts: &OwpOptions) -> Result<OwpResult, OwpError> {
    let (rep, pop) = prepare(prob, opts)?;
    run_pop(prob, &rep, &pop, opts)
}

/// Runs the hierarchy on an already reformulated problem.
pub fn run_pop(
    prob: &MopProblem,
    rep: &Representation,
    pop: &PolyOptProblem,
    opts: &OwpOptions,
) -> Result<OwpResult, OwpError> {
    let k0 = pop.min_order();
    let k_max = opts.k_max.unwrap_or(pop.d0 + 3).max(k0);
    let mut history = Vec::new();
    let mut last_bound = None;
    let mut last_cert = None;
    let mut last_k = k0;

    for k in k0..=k_max {
        last_k = k;
        let started = Instant::now();
        let mut msdp = assemble_sdp(pop, k, opts.equality_mode)?;
        let mut scale = 1.0;
        if opts.scale_objective {
            let top = msdp.objective.iter().fold(0.0f64, |a, c| a.max(c.abs()));
            if top > 0.0 {
                scale = top;
                msdp.objective.iter_mut().for_each(|c| *c /= top);
            }
        }
        let sol = solve(&msdp.to_sdp(), &opts.sdp);
        let mut log = OrderLog {
            k,
            sdp_status: sol.status,
            bound: None,
            moments: msdp.num_moments(),
            moment_block: msdp.moment_block_size(),
            equalities: msdp.eq_rows.len(),
            iterations: sol.iterations,
            seconds: 0.0,
            note: None,
        };
        match sol.status {
            SdpStatus::PrimalInfeasible => {
                log.note = sol.certificate.clone();
                log.seconds = started.elapsed().as_secs_f64();
                history.push(log);
                return Ok(OwpResult {
                    status: OwpStatus::InfeasibleNoWPP,
                    fmin: f64::INFINITY,
                    lower_bound: None,
                    minimizers: Vec::new(),
                    certificate: None,
                    order_used: k,
                    representation: rep.kind(),
                    variables: pop.layout.names.clone(),
                    history,
                });
            }
            SdpStatus::DualInfeasible => {
                log.note = Some("relaxation unbounded below".into());
                log.seconds = started.elapsed().as_secs_f64();
                history.push(log);
                continue;
            }
            SdpStatus::MaxIter | SdpStatus::NumericalFailure => {
                return Err(OwpError::Solver {
                    k,
                    status: sol.status,
                    detail: format!(
                        "pobj {:.6e} dobj {:.6e} primal residual {:.2e} dual residual {:.2e} gap {:.2e} after {} iterations",
                        sol.pobj, sol.dobj, sol.primal_residual, sol.dual_residual, sol.gap, sol.iterations
                    ),
                });
            }
            SdpStatus::Optimal | SdpStatus::AlmostOptimal => {}
        }
        let bound = sol.pobj * scale;
        log.bound = Some(bound);
        last_bound = Some(bound);

        let mut y = Tms::new(pop.nvars, 2 * k, sol.y.clone());
        let mut cert = flat_truncation(&y, pop.d0, k, opts.rank_tol);
        if !cert.passed && opts.low_rank_pass {
            // the interior-point solution sits in the relative interior of the
            // optimal face; minimizing the trace of M_k over that face pulls
            // it toward a finitely atomic one
            let slack = 1e-3 * opts.accept_tol * (1.0 + bound.abs());
            let mut weight = None;
            for _ in 0..3 {
                let low = solve(
                    &trace_problem(&msdp, (bound + slack) / scale, weight.as_ref()),
                    &opts.sdp,
                );
                if !low.status.is_solved() {
                    break;
                }
                let y2 = Tms::new(pop.nvars, 2 * k, low.y.clone());
                let cert2 = flat_truncation(&y2, pop.d0, k, opts.rank_tol);
                if cert2.passed {
                    y = y2;
                    cert = cert2;
                    break;
                }
                weight = Some(reweight(&y2, k));
            }
        }
        if !cert.passed {
            log.note = Some(format!(
                "flat truncation failed: ranks {:?}",
                cert.scan
                    .iter()
                    .map(|c| (c.t, c.rank_t, c.rank_t_minus_d0))
                    .collect::<Vec<_>>()
            ));
            last_cert = Some(cert);
            log.seconds = started.elapsed().as_secs_f64();
            history.push(log);
            continue;
        }
        let measure = match extract_atoms(&y, cert.t, cert.rank_t) {
            Ok(m) => m,
            Err(e) => {
                log.note = Some(e.to_string());
                last_cert = Some(cert);
                log.seconds = started.elapsed().as_secs_f64();
                history.push(log);
                continue;
            }
        };
        let tol = opts.accept_tol;
        let mut minimizers = Vec::new();
        let mut rejected = None;
        for (atom, weight) in measure.atoms.iter().zip(&measure.weights) {
            let point = refine_point(atom, &pop.eqs, &pop.ineqs, 5);
            let f0 = pop.objective.eval(&point);
            let eq_residual = pop.eq_residual(&point);
            let min_ineq = pop.min_ineq(&point);
            let (x, w, lambda) = rep.split(prob, &point)?;
            let kkt = kkt_residual_explicit(prob, &x, &w, &lambda);
            let ok = eq_residual <= tol
                && min_ineq >= -tol
                && (f0 - bound).abs() <= tol * (1.0 + bound.abs());
            if !ok {
                rejected = Some(format!(
                    "atom rejected: eq residual {eq_residual:.2e}, min ineq {min_ineq:.2e}, f0 {f0:.8} vs bound {bound:.8}"
                ));
                break;
            }
            minimizers.push(Minimizer {
                x,
                w,
                lambda,
                point,
                weight: *weight,
                f0,
                kkt_residual: kkt,
                eq_residual,
                min_ineq,
            });
        }
        if let Some(why) = rejected {
            log.note = Some(why);
            last_cert = Some(cert);
            log.seconds = started.elapsed().as_secs_f64();
            history.push(log);
            continue;
        }
        let fmin = minimizers
            .iter()
            .map(|m| m.f0)
            .fold(f64::INFINITY, f64::min);
        log.seconds = started.elapsed().as_secs_f64();
        history.push(log);
        return Ok(OwpResult {
            status: OwpStatus::Solved,
            fmin,
            lower_bound: Some(bound),
            minimizers,
            certificate: Some(cert),
            order_used: k,
            representation: rep.kind(),
            variables: pop.layout.names.clone(),
            history,
        });
    }
    Ok(OwpResult {
        status: OwpStatus::OrderLimitReached,
        fmin: last_bound.unwrap_or(f64::NEG_INFINITY),
        lower_bound: last_bound,
        minimizers: Vec::new(),
        certificate: last_cert,
        order_used: last_k,
        representation: rep.kind(),
        variables: pop.layout.names.clone(),
        history,
    })
}
