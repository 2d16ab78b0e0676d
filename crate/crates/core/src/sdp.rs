//! Primal-dual interior-point solver for linear-matrix-inequality SDPs
//!
//! ```text
//! min cᵀy  s.t.  By = b,  F0_k + Σ_i y_i F_{k,i} ⪰ 0  (every block k)
//! ```
//!
//! with dual `max bᵀν − ⟨F0, Z⟩  s.t.  𝒜*(Z) + Bᵀν = c, Z ⪰ 0`.
//!
//! The solver runs on the homogeneous self-dual embedding, so infeasibility
//! shows up as `τ → 0` with an improving ray. Steps use Nesterov–Todd scaling
//! and a Mehrotra predictor-corrector. The Schur complement is dense and
//! factored by Cholesky.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance for rays read off a stalled iterate.
const WEAK_RAY_TOL: f64 = 1e-3;

/// One LMI block `F0 + Σ y_i F_i`. Entries are stored for `i ≤ j` only.
#[derive(Clone, Debug, PartialEq)]
pub struct LmiBlock {
    pub size: usize,
    /// `(i, j, value)` of `F0`.
    pub constant: Vec<(usize, usize, f64)>,
    /// `(i, j, var, coef)`: `F_var[i][j] += coef`.
    pub terms: Vec<(usize, usize, usize, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpProblem {
    pub nvars: usize,
    pub c: Vec<f64>,
    pub eq_rows: Vec<Vec<(usize, f64)>>,
    pub eq_rhs: Vec<f64>,
    pub blocks: Vec<LmiBlock>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpOptions {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub infeas_tol: f64,
    pub max_iter: usize,
    pub verbose: bool,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            infeas_tol: 1e-8,
            max_iter: 200,
            verbose: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    /// Stopped short of the tolerances but within a factor 1e3 of them.
    AlmostOptimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIter,
    NumericalFailure,
}

impl SdpStatus {
    pub fn is_solved(self) -> bool {
        matches!(self, SdpStatus::Optimal | SdpStatus::AlmostOptimal)
    }
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub y: Vec<f64>,
    /// Equality multipliers, one per original row.
    pub nu: Vec<f64>,
    /// Dual PSD blocks.
    pub z: Vec<DMatrix<f64>>,
    pub pobj: f64,
    pub dobj: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    /// Human-readable infeasibility certificate summary.
    pub certificate: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("no bound available: solver status {0:?}")]
    WrongStatus(SdpStatus),
}

/// The SOS-side bound, read off the dual objective.
pub fn sos_bound(sol: &SdpSolution) -> Result<f64, SdpError> {
    if sol.status.is_solved() {
        Ok(sol.dobj)
    } else {
        Err(SdpError::WrongStatus(sol.status))
    }
}

struct Block {
    size: usize,
    f0: Option<DMatrix<f64>>,
    /// `(p, q, var, coef)` with `p ≤ q`, sorted by var.
    entries: Vec<(usize, usize, usize, f64)>,
}

impl Block {
    fn apply(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for &(p, q, v, c) in &self.entries {
            let t = c * y[v];
            m[(p, q)] += t;
            if p != q {
                m[(q, p)] += t;
            }
        }
        m
    }

    fn adjoint_into(&self, z: &DMatrix<f64>, out: &mut [f64]) {
        for &(p, q, v, c) in &self.entries {
            let mult = if p == q { 1.0 } else { 2.0 };
            out[v] += c * mult * z[(p, q)];
        }
    }

    /// Adds `⟨F_u, V F_v V⟩` into `h` (row-major `n×n`).
    fn schur_into(&self, vinv: &DMatrix<f64>, h: &mut [f64], n: usize) {
        let e = &self.entries;
        for a in 0..e.len() {
            let (p, q, u, ca) = e[a];
            let ma = if p == q { 1.0 } else { 2.0 };
            let wa = ca * ma * 0.5;
            let row = &mut h[u * n..(u + 1) * n];
            // the a == b term is halved so that doubling the diagonal later
            // counts every unordered pair exactly twice
            let kd = vinv[(p, p)] * vinv[(q, q)] + vinv[(p, q)] * vinv[(q, p)];
            row[u] += 0.5 * wa * ca * ma * kd;
            for &(r, s, v, cb) in &e[a + 1..] {
                let mb = if r == s { 1.0 } else { 2.0 };
                let k = vinv[(p, r)] * vinv[(q, s)] + vinv[(p, s)] * vinv[(q, r)];
                row[v] += wa * cb * mb * k;
            }
        }
    }
}

/// Per-block NT scaling data.
struct Scaling {
    r: DMatrix<f64>,
    rinv: DMatrix<f64>,
    winv: DMatrix<f64>,
    lambda: Vec<f64>,
}

fn sym(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn chol_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::Cholesky::new(m.clone()).map(|c| c.l())
}

fn nt_scaling(s: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Scaling> {
    let ls = chol_lower(s)?;
    let lz = chol_lower(z)?;
    let prod = lz.transpose() * &ls;
    let svd = prod.svd(true, true);
    let v = svd.v_t?.transpose();
    let lam: Vec<f64> = svd.singular_values.iter().cloned().collect();
    if lam.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return None;
    }
    let n = s.nrows();
    let isq = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        lam.iter().map(|l| 1.0 / l.sqrt()),
    ));
    let sq = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        lam.iter().map(|l| l.sqrt()),
    ));
    let r = &ls * &v * &isq;
    // R⁻¹ = Λ^{1/2} Vᵀ L_s⁻¹
    let ls_inv = ls.clone().try_inverse()?;
    let rinv = &sq * v.transpose() * ls_inv;
    let mut winv = rinv.transpose() * &rinv;
    sym(&mut winv);
    Some(Scaling {
        r,
        rinv,
        winv,
        lambda: lam,
    })
}

/// Largest `α ≥ 0` with `Λ + αΔ ⪰ 0` for diagonal `Λ ≻ 0`.
fn max_step_scaled(lambda: &[f64], delta: &DMatrix<f64>) -> f64 {
    let n = lambda.len();
    let mut m = DMatrix::from_fn(n, n, |i, j| {
        delta[(i, j)] / (lambda[i].sqrt() * lambda[j].sqrt())
    });
    sym(&mut m);
    let emin = m.symmetric_eigenvalues().min();
    if emin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / emin
    }
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Independent equality rows and whether the dropped ones are consistent.
fn independent_rows(b: &Mat<f64>, rhs: &[f64]) -> (Vec<usize>, bool) {
    let (m, n) = (b.nrows(), b.ncols());
    if m == 0 {
        return (Vec::new(), true);
    }
    let bt = b.transpose().to_owned();
    let qr = bt.col_piv_qr();
    let r = qr.R();
    let k = m.min(n);
    let r00 = r[(0, 0)].abs();
    let tol = 1e-10 * r00.max(1e-300) * (m.max(n) as f64).sqrt();
    let rank = (0..k).take_while(|&i| r[(i, i)].abs() > tol).count();
    let (fwd, _) = qr.P().arrays();
    let mut keep: Vec<usize> = fwd[..rank].to_vec();
    keep.sort_unstable();
    if rank == m {
        return (keep, true);
    }
    // consistency: rhs must lie in the row space relation of B
    let aug = Mat::from_fn(n + 1, m, |i, j| if i < n { b[(j, i)] } else { rhs[j] });
    let qr2 = aug.col_piv_qr();
    let r2 = qr2.R();
    let k2 = m.min(n + 1);
    let r2_00 = r2[(0, 0)].abs();
    let tol2 = 1e-10 * r2_00.max(1e-300) * (m.max(n + 1) as f64).sqrt();
    let rank2 = (0..k2).take_while(|&i| r2[(i, i)].abs() > tol2).count();
    (keep, rank2 == rank)
}

struct Workspace {
    n: usize,
    blocks: Vec<Block>,
    c: Vec<f64>,
    bmat: Mat<f64>,
    b: Vec<f64>,
}

impl Workspace {
    fn apply_a(&self, y: &[f64]) -> Vec<DMatrix<f64>> {
        self.blocks.iter().map(|bl| bl.apply(y)).collect()
    }

    fn apply_at(&self, z: &[DMatrix<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (bl, zk) in self.blocks.iter().zip(z) {
            bl.adjoint_into(zk, &mut out);
        }
        out
    }

    fn bmul(&self, y: &[f64]) -> Vec<f64> {
        (0..self.bmat.nrows())
            .map(|i| (0..self.n).map(|j| self.bmat[(i, j)] * y[j]).sum())
            .collect()
    }

    fn btmul(&self, nu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, v) in nu.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += self.bmat[(i, j)] * v;
            }
        }
        out
    }

    fn f0_inner(&self, z: &[DMatrix<f64>]) -> f64 {
        self.blocks
            .iter()
            .zip(z)
            .map(|(bl, zk)| bl.f0.as_ref().map(|f| inner(f, zk)).unwrap_or(0.0))
            .sum()
    }
}

/// Factorization of the KKT matrix `[H Bᵀ; B 0]`.
struct KktFactor {
    h: Mat<f64>,
    llt: faer::linalg::solvers::Llt<f64>,
    sb: Option<faer::linalg::solvers::Llt<f64>>,
}

impl KktFactor {
    fn new(h: Mat<f64>, bmat: &Mat<f64>) -> Option<Self> {
        let n = h.nrows();
        let diag_max = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max);
        let mut reg = 0.0;
        let llt = loop {
            let mut hr = h.clone();
            if reg > 0.0 {
                for i in 0..n {
                    hr[(i, i)] += reg;
                }
            }
            match hr.llt(Side::Lower) {
                Ok(f) => break f,
                Err(_) => {
                    reg = if reg == 0.0 { 1e-14 * diag_max } else { reg * 100.0 };
                    if reg > 1e-6 * diag_max.max(1.0) {
                        return None;
                    }
                }
            }
        };
        let m = bmat.nrows();
        if m == 0 {
            return Some(KktFactor {
                h,
                llt,
                sb: None,
            });
        }
        let mut x = bmat.transpose().to_owned();
        llt.L().solve_lower_triangular_in_place(x.as_mut());
        let sbm = x.transpose() * &x;
        let sdiag = (0..m).map(|i| sbm[(i, i)].abs()).fold(0.0, f64::max);
        let mut reg = 0.0;
        let sb = loop {
            let mut s = sbm.clone();
            if reg > 0.0 {
                for i in 0..m {
                    s[(i, i)] += reg;
                }
            }
            match s.llt(Side::Lower) {
                Ok(f) => break f,
                Err(_) => {
                    reg = if reg == 0.0 { 1e-14 * sdiag } else { reg * 100.0 };
                    if reg > 1e-6 * sdiag.max(1.0) {
                        return None;
                    }
                }
            }
        };
        Some(KktFactor {
            h,
            llt,
            sb: Some(sb),
        })
    }

    /// Solves `Hu + Bᵀv = p`, `Bu = q`.
    fn solve_once(&self, bmat: &Mat<f64>, p: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = p.len();
        let pm = Mat::from_fn(n, 1, |i, _| p[i]);
        let a = self.llt.solve(&pm);
        let Some(sb) = &self.sb else {
            return ((0..n).map(|i| a[(i, 0)]).collect(), Vec::new());
        };
        let m = q.len();
        let ba = bmat * &a;
        let rhs = Mat::from_fn(m, 1, |i, _| ba[(i, 0)] - q[i]);
        let v = sb.solve(&rhs);
        let btv = bmat.transpose() * &v;
        let corr = self.llt.solve(&btv);
        (
            (0..n).map(|i| a[(i, 0)] - corr[(i, 0)]).collect(),
            (0..m).map(|i| v[(i, 0)]).collect(),
        )
    }

    /// Solve with two rounds of iterative refinement.
    fn solve(&self, bmat: &Mat<f64>, p: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut u, mut v) = self.solve_once(bmat, p, q);
        for _ in 0..2 {
            let n = u.len();
            let um = Mat::from_fn(n, 1, |i, _| u[i]);
            let hu = &self.h * &um;
            let vm = Mat::from_fn(v.len(), 1, |i, _| v[i]);
            let btv = bmat.transpose() * &vm;
            let bu = bmat * &um;
            let rp: Vec<f64> = (0..n).map(|i| p[i] - hu[(i, 0)] - btv[(i, 0)]).collect();
            let rq: Vec<f64> = (0..q.len()).map(|i| q[i] - bu[(i, 0)]).collect();
            let (du, dv) = self.solve_once(bmat, &rp, &rq);
            for (a, d) in u.iter_mut().zip(du) {
                *a += d;
            }
            for (a, d) in v.iter_mut().zip(dv) {
                *a += d;
            }
        }
        (u, v)
    }
}

struct Rhs {
    e_y: Vec<f64>,
    e_nu: Vec<f64>,
    e_z: Vec<DMatrix<f64>>,
    e_tau: f64,
    d_s: Vec<DMatrix<f64>>,
    d_k: f64,
}

impl Rhs {
    fn norm(&self) -> f64 {
        let mut m = norm_inf(&self.e_y).max(norm_inf(&self.e_nu));
        for a in self.e_z.iter().chain(&self.d_s) {
            m = m.max(a.amax());
        }
        m.max(self.e_tau.abs()).max(self.d_k.abs())
    }
}

struct Direction {
    dy: Vec<f64>,
    dnu: Vec<f64>,
    ds: Vec<DMatrix<f64>>,
    dz: Vec<DMatrix<f64>>,
    dtau: f64,
    dkappa: f64,
}

impl Direction {
    fn add(&mut self, o: &Direction) {
        for (a, b) in self.dy.iter_mut().zip(&o.dy) {
            *a += b;
        }
        for (a, b) in self.dnu.iter_mut().zip(&o.dnu) {
            *a += b;
        }
        for (a, b) in self.ds.iter_mut().zip(&o.ds) {
            *a += b;
        }
        for (a, b) in self.dz.iter_mut().zip(&o.dz) {
            *a += b;
        }
        self.dtau += o.dtau;
        self.dkappa += o.dkappa;
    }
}

/// Solves the SDP.
pub fn solve(prob: &SdpProblem, opts: &SdpOptions) -> SdpSolution {
    let n = prob.nvars;
    // row scaling of equalities and objective scaling
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for (row, rhs) in prob.eq_rows.iter().zip(&prob.eq_rhs) {
        let s = row.iter().map(|(_, c)| c.abs()).fold(0.0, f64::max);
        if s == 0.0 {
            if rhs.abs() > 0.0 {
                return infeasible_trivial(prob, "equality 0 = nonzero");
            }
            continue;
        }
        rows.push((row.iter().map(|(v, c)| (*v, c / s)).collect(), rhs / s));
    }
    let full = Mat::from_fn(rows.len(), n, |i, j| {
        rows[i].0.iter().filter(|(v, _)| *v == j).map(|(_, c)| c).sum()
    });
    let rhs_all: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let (keep, consistent) = independent_rows(&full, &rhs_all);
    if !consistent {
        return infeasible_trivial(prob, "inconsistent equality system");
    }
    let bmat = Mat::from_fn(keep.len(), n, |i, j| full[(keep[i], j)]);
    let b: Vec<f64> = keep.iter().map(|&i| rhs_all[i]).collect();
    let cscale = norm_inf(&prob.c).max(1e-300);
    let cscale = if norm_inf(&prob.c) == 0.0 { 1.0 } else { cscale };
    let c: Vec<f64> = prob.c.iter().map(|v| v / cscale).collect();

    let blocks: Vec<Block> = prob
        .blocks
        .iter()
        .map(|bl| {
            let mut entries = bl.terms.clone();
            for e in &mut entries {
                if e.0 > e.1 {
                    std::mem::swap(&mut e.0, &mut e.1);
                }
            }
            entries.sort_by(|a, b| (a.2, a.0, a.1).cmp(&(b.2, b.0, b.1)));
            let f0 = if bl.constant.is_empty() {
                None
            } else {
                let mut m = DMatrix::zeros(bl.size, bl.size);
                for &(i, j, v) in &bl.constant {
                    m[(i, j)] += v;
                    if i != j {
                        m[(j, i)] += v;
                    }
                }
                Some(m)
            };
            Block {
                size: bl.size,
                f0,
                entries,
            }
        })
        .collect();
    let ws = Workspace {
        n,
        blocks,
        c,
        bmat,
        b,
    };
    let mut sol = run_ipm(&ws, opts);
    // map back to the original scaling and rows
    sol.pobj *= cscale;
    sol.dobj *= cscale;
    for z in &mut sol.z {
        *z *= cscale;
    }
    let mut nu_full = vec![0.0; prob.eq_rows.len()];
    // rows were compressed: map kept rows to the original indices
    let mut orig_index = Vec::new();
    for (i, row) in prob.eq_rows.iter().enumerate() {
        if row.iter().any(|(_, c)| *c != 0.0) {
            orig_index.push(i);
        }
    }
    for (k, &ri) in keep.iter().enumerate() {
        let oi = orig_index[ri];
        let s = prob.eq_rows[oi]
            .iter()
            .map(|(_, c)| c.abs())
            .fold(0.0, f64::max);
        nu_full[oi] = sol.nu.get(k).copied().unwrap_or(0.0) * cscale / s;
    }
    sol.nu = nu_full;
    sol
}

fn infeasible_trivial(prob: &SdpProblem, why: &str) -> SdpSolution {
    SdpSolution {
        status: SdpStatus::PrimalInfeasible,
        y: vec![0.0; prob.nvars],
        nu: vec![0.0; prob.eq_rows.len()],
        z: prob
            .blocks
            .iter()
            .map(|b| DMatrix::zeros(b.size, b.size))
            .collect(),
        pobj: f64::INFINITY,
        dobj: f64::INFINITY,
        iterations: 0,
        primal_residual: f64::INFINITY,
        dual_residual: 0.0,
        gap: f64::INFINITY,
        certificate: Some(why.to_string()),
    }
}

fn run_ipm(ws: &Workspace, opts: &SdpOptions) -> SdpSolution {
    let n = ws.n;
    let m = ws.b.len();
    let nb = ws.blocks.len();
    let degree: f64 = ws.blocks.iter().map(|b| b.size as f64).sum::<f64>() + 1.0;

    let mut y = vec![0.0; n];
    let mut nu = vec![0.0; m];
    let mut s: Vec<DMatrix<f64>> = ws
        .blocks
        .iter()
        .map(|b| DMatrix::identity(b.size, b.size))
        .collect();
    let mut z = s.clone();
    let mut tau = 1.0f64;
    let mut kappa = 1.0f64;

    let bnorm = 1.0 + norm_inf(&ws.b);
    let cnorm = 1.0 + norm_inf(&ws.c);
    let f0norm = 1.0
        + ws
            .blocks
            .iter()
            .filter_map(|b| b.f0.as_ref().map(|f| f.amax()))
            .fold(0.0, f64::max);

    let mut best: Option<(f64, SdpSolution)> = None;
    let mut status = SdpStatus::MaxIter;
    let mut certificate = None;
    let mut iter = 0;
    let mut stall = 0;

    let snapshot = |y: &[f64],
                    nu: &[f64],
                    z: &[DMatrix<f64>],
                    tau: f64,
                    st: SdpStatus,
                    it: usize,
                    pres: f64,
                    dres: f64,
                    gap: f64,
                    pobj: f64,
                    dobj: f64,
                    cert: Option<String>| SdpSolution {
        status: st,
        y: y.iter().map(|v| v / tau).collect(),
        nu: nu.iter().map(|v| v / tau).collect(),
        z: z.iter().map(|zk| zk / tau).collect(),
        pobj,
        dobj,
        iterations: it,
        primal_residual: pres,
        dual_residual: dres,
        gap,
        certificate: cert,
    };

    loop {
        // residuals of the embedding
        let ay = ws.apply_a(&y);
        let atz = ws.apply_at(&z);
        let btnu = ws.btmul(&nu);
        let by = ws.bmul(&y);
        let r_y: Vec<f64> = (0..n)
            .map(|i| -atz[i] - btnu[i] + ws.c[i] * tau)
            .collect();
        let r_nu: Vec<f64> = (0..m).map(|i| by[i] - ws.b[i] * tau).collect();
        let r_z: Vec<DMatrix<f64>> = (0..nb)
            .map(|k| {
                let mut r = &ay[k] - &s[k];
                if let Some(f0) = &ws.blocks[k].f0 {
                    r += f0 * tau;
                }
                r
            })
            .collect();
        let cy: f64 = ws.c.iter().zip(&y).map(|(a, b)| a * b).sum();
        let bnu: f64 = ws.b.iter().zip(&nu).map(|(a, b)| a * b).sum();
        let f0z = ws.f0_inner(&z);
        let r_tau = -cy + bnu - f0z - kappa;

        let pobj = cy / tau;
        let dobj = (bnu - f0z) / tau;
        let pres_eq = norm_inf(&r_nu) / tau / bnorm;
        let pres_lmi = r_z.iter().map(|r| r.amax()).fold(0.0, f64::max) / tau / f0norm;
        let pres = pres_eq.max(pres_lmi);
        let dres = norm_inf(&r_y) / tau / cnorm;
        let gap = (pobj - dobj).abs() / pobj.abs().max(1.0);
        let mu = (s.iter().zip(&z).map(|(a, b)| inner(a, b)).sum::<f64>() + tau * kappa) / degree;

        if opts.verbose {
            eprintln!(
                "iter {iter:3}  pobj {pobj:+.8e}  dobj {dobj:+.8e}  gap {gap:.2e}  pres {pres:.2e}  dres {dres:.2e}  tau {tau:.2e}  kappa {kappa:.2e}  mu {mu:.2e}"
            );
        }

        if pres <= opts.feas_tol && dres <= opts.feas_tol && gap <= opts.gap_tol {
            status = SdpStatus::Optimal;
            break;
        }
        let loose = 1e3;
        let score = pres.max(dres).max(gap);
        if pres <= opts.feas_tol * loose && dres <= opts.feas_tol * loose && gap <= opts.gap_tol * loose
        {
            let better = best.as_ref().map(|(b, _)| score < *b).unwrap_or(true);
            if better {
                best = Some((
                    score,
                    snapshot(
                        &y,
                        &nu,
                        &z,
                        tau,
                        SdpStatus::AlmostOptimal,
                        iter,
                        pres,
                        dres,
                        gap,
                        pobj * 1.0,
                        dobj,
                        None,
                    ),
                ));
            }
        }

        // infeasibility certificates
        if tau < kappa {
            let dz = bnu - f0z;
            if dz > 0.0 {
                let mut ray: Vec<f64> = atz.clone();
                for i in 0..n {
                    ray[i] += btnu[i];
                }
                let res = norm_inf(&ray) / dz;
                if res <= opts.infeas_tol * cnorm {
                    status = SdpStatus::PrimalInfeasible;
                    certificate = Some(format!(
                        "dual ray: b'nu - <F0,Z> = {dz:.3e}, |A*(Z)+B'nu|/that = {res:.3e}"
                    ));
                    break;
                }
            }
            if -cy > 0.0 {
                let py = -cy;
                let eq = norm_inf(&by) / py;
                let lmi = ay
                    .iter()
                    .map(|a| {
                        let mut a = a.clone();
                        sym(&mut a);
                        a.symmetric_eigenvalues().min()
                    })
                    .fold(f64::INFINITY, f64::min)
                    / py;
                if eq <= opts.infeas_tol * bnorm && lmi >= -opts.infeas_tol * f0norm {
                    status = SdpStatus::DualInfeasible;
                    certificate = Some(format!(
                        "primal ray: -c'y = {py:.3e}, |By|/that = {eq:.3e}, min eig A(y)/that = {lmi:.3e}"
                    ));
                    break;
                }
            }
        }
        if iter >= opts.max_iter {
            status = SdpStatus::MaxIter;
            break;
        }
        iter += 1;

        // scaling
        let mut scal = Vec::with_capacity(nb);
        for k in 0..nb {
            match nt_scaling(&s[k], &z[k]) {
                Some(sc) => scal.push(sc),
                None => {
                    status = SdpStatus::NumericalFailure;
                    break;
                }
            }
        }
        if scal.len() < nb {
            break;
        }

        // Schur complement
        let mut hbuf = vec![0.0; n * n];
        for (bl, sc) in ws.blocks.iter().zip(&scal) {
            bl.schur_into(&sc.winv, &mut hbuf, n);
        }
        // pairs were accumulated once each (a ≤ b); add the mirrored half
        let h = Mat::from_fn(n, n, |i, j| hbuf[i * n + j] + hbuf[j * n + i]);
        let Some(kkt) = KktFactor::new(h, &ws.bmat) else {
            status = SdpStatus::NumericalFailure;
            break;
        };

        // g0 and h00 for constant blocks
        let mut g0 = vec![0.0; n];
        let mut h00 = 0.0;
        let mut w_f0_w: Vec<Option<DMatrix<f64>>> = Vec::with_capacity(nb);
        for (bl, sc) in ws.blocks.iter().zip(&scal) {
            match &bl.f0 {
                Some(f0) => {
                    let t = &sc.winv * f0 * &sc.winv;
                    bl.adjoint_into(&t, &mut g0);
                    h00 += inner(f0, &t);
                    w_f0_w.push(Some(t));
                }
                None => w_f0_w.push(None),
            }
        }
        // second right-hand side is shared by predictor and corrector
        let p2: Vec<f64> = (0..n).map(|i| -(ws.c[i] + g0[i])).collect();
        let (u2, v2) = kkt.solve(&ws.bmat, &p2, &ws.b);
        let cg_u2: f64 = (0..n).map(|i| (g0[i] - ws.c[i]) * u2[i]).sum();
        let b_v2: f64 = ws.b.iter().zip(&v2).map(|(a, b)| a * b).sum();
        let denom = cg_u2 - b_v2 + h00 + kappa / tau;

        // Solves the linearized embedding
        //   −𝒜*ΔZ − BᵀΔν + cΔτ = e_y,       BΔy − bΔτ = e_ν,
        //   𝒜Δy + F0Δτ − ΔS = e_Z,          −cᵀΔy + bᵀΔν − ⟨F0,ΔZ⟩ − Δκ = e_τ,
        //   ΔS + WΔZW = d_S,                κΔτ + τΔκ = d_κ.
        let linsolve = |rhs: &Rhs| -> Direction {
            let q: Vec<DMatrix<f64>> = (0..nb).map(|k| &rhs.d_s[k] + &rhs.e_z[k]).collect();
            let mut gq = vec![0.0; n];
            let mut q0 = 0.0;
            for k in 0..nb {
                let t = &scal[k].winv * &q[k] * &scal[k].winv;
                ws.blocks[k].adjoint_into(&t, &mut gq);
                if let Some(wf) = &w_f0_w[k] {
                    q0 += inner(wf, &q[k]);
                }
            }
            let p1: Vec<f64> = (0..n).map(|i| rhs.e_y[i] + gq[i]).collect();
            let (u1, v1) = kkt.solve(&ws.bmat, &p1, &rhs.e_nu);
            let cg_u1: f64 = (0..n).map(|i| (ws.c[i] - g0[i]) * u1[i]).sum();
            let b_v1: f64 = ws.b.iter().zip(&v1).map(|(a, b)| a * b).sum();
            let num = rhs.e_tau + rhs.d_k / tau + q0 + b_v1 + cg_u1;
            let dtau = num / denom;
            let dy: Vec<f64> = (0..n).map(|i| u1[i] + dtau * u2[i]).collect();
            let dnu: Vec<f64> = (0..m).map(|i| -(v1[i] + dtau * v2[i])).collect();
            let ady = ws.apply_a(&dy);
            let mut ds = Vec::with_capacity(nb);
            let mut dz = Vec::with_capacity(nb);
            for k in 0..nb {
                let mut lin = ady[k].clone();
                if let Some(f0) = &ws.blocks[k].f0 {
                    lin += f0 * dtau;
                }
                let mut dsk = &lin - &rhs.e_z[k];
                sym(&mut dsk);
                let mut dzk = &scal[k].winv * (&q[k] - &lin) * &scal[k].winv;
                sym(&mut dzk);
                ds.push(dsk);
                dz.push(dzk);
            }
            let dkappa = (rhs.d_k - kappa * dtau) / tau;
            Direction {
                dy,
                dnu,
                ds,
                dz,
                dtau,
                dkappa,
            }
        };
        let residual = |rhs: &Rhs, d: &Direction| -> Rhs {
            let atdz = ws.apply_at(&d.dz);
            let btdn = ws.btmul(&d.dnu);
            let bdy = ws.bmul(&d.dy);
            let ady = ws.apply_a(&d.dy);
            let e_y = (0..n)
                .map(|i| rhs.e_y[i] - (-atdz[i] - btdn[i] + ws.c[i] * d.dtau))
                .collect();
            let e_nu = (0..m)
                .map(|i| rhs.e_nu[i] - (bdy[i] - ws.b[i] * d.dtau))
                .collect();
            let e_z = (0..nb)
                .map(|k| {
                    let mut lin = &ady[k] - &d.ds[k];
                    if let Some(f0) = &ws.blocks[k].f0 {
                        lin += f0 * d.dtau;
                    }
                    &rhs.e_z[k] - lin
                })
                .collect();
            let cdy: f64 = ws.c.iter().zip(&d.dy).map(|(a, b)| a * b).sum();
            let bdn: f64 = ws.b.iter().zip(&d.dnu).map(|(a, b)| a * b).sum();
            let f0dz = ws.f0_inner(&d.dz);
            let e_tau = rhs.e_tau - (-cdy + bdn - f0dz - d.dkappa);
            // complementarity residual, formed in scaled coordinates:
            // R⁻¹(d_S − ΔS)R⁻ᵀ − RᵀΔZR, then mapped back by R·Rᵀ
            let d_s = (0..nb)
                .map(|k| {
                    let sc = &scal[k];
                    let lhs = &sc.rinv * (&rhs.d_s[k] - &d.ds[k]) * sc.rinv.transpose();
                    let zh = sc.r.transpose() * &d.dz[k] * &sc.r;
                    let mut m = &sc.r * (lhs - zh) * sc.r.transpose();
                    sym(&mut m);
                    m
                })
                .collect();
            let d_k = rhs.d_k - kappa * d.dtau - tau * d.dkappa;
            Rhs {
                e_y,
                e_nu,
                e_z,
                e_tau,
                d_s,
                d_k,
            }
        };
        let direction = |eta: f64, ds_target: &[DMatrix<f64>], dkap: f64| -> Direction {
            let rhs = Rhs {
                e_y: r_y.iter().map(|r| -eta * r).collect(),
                e_nu: r_nu.iter().map(|r| -eta * r).collect(),
                e_z: r_z.iter().map(|r| r * -eta).collect(),
                e_tau: -eta * r_tau,
                d_s: ds_target.to_vec(),
                d_k: dkap,
            };
            let mut d = linsolve(&rhs);
            let mut res = residual(&rhs, &d);
            let mut err = res.norm();
            for _ in 0..3 {
                let mut cand = linsolve(&res);
                cand.add(&d);
                let cres = residual(&rhs, &cand);
                let cerr = cres.norm();
                if cerr < err {
                    d = cand;
                    res = cres;
                    err = cerr;
                } else {
                    break;
                }
            }
            d
        };

        let scaled = |d: &Direction| -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
            let mut a = Vec::with_capacity(nb);
            let mut b = Vec::with_capacity(nb);
            for k in 0..nb {
                a.push(&scal[k].rinv * &d.ds[k] * scal[k].rinv.transpose());
                b.push(scal[k].r.transpose() * &d.dz[k] * &scal[k].r);
            }
            (a, b)
        };
        let step_len = |d: &Direction, dsh: &[DMatrix<f64>], dzh: &[DMatrix<f64>]| -> f64 {
            let mut a = f64::INFINITY;
            for k in 0..nb {
                a = a.min(max_step_scaled(&scal[k].lambda, &dsh[k]));
                a = a.min(max_step_scaled(&scal[k].lambda, &dzh[k]));
            }
            if d.dtau < 0.0 {
                a = a.min(-tau / d.dtau);
            }
            if d.dkappa < 0.0 {
                a = a.min(-kappa / d.dkappa);
            }
            a
        };
        let target = |t: &dyn Fn(usize, usize, usize) -> f64| -> Vec<DMatrix<f64>> {
            (0..nb)
                .map(|k| {
                    let lam = &scal[k].lambda;
                    let sz = lam.len();
                    let d = DMatrix::from_fn(sz, sz, |i, j| 2.0 * t(k, i, j) / (lam[i] + lam[j]));
                    let mut out = &scal[k].r * d * scal[k].r.transpose();
                    sym(&mut out);
                    out
                })
                .collect()
        };

        // predictor
        let aff_t = target(&|k, i, j| {
            if i == j {
                -scal[k].lambda[i] * scal[k].lambda[i]
            } else {
                0.0
            }
        });
        let aff = direction(1.0, &aff_t, -tau * kappa);
        let (dsa, dza) = scaled(&aff);
        let alpha_aff = step_len(&aff, &dsa, &dza).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3);

        // corrector
        let corr: Vec<DMatrix<f64>> = (0..nb)
            .map(|k| {
                let mut p = &dsa[k] * &dza[k];
                p = (&p + p.transpose()) * 0.5;
                p
            })
            .collect();
        let comb_t = target(&|k, i, j| {
            let lam = scal[k].lambda[i];
            let base = if i == j { sigma * mu - lam * lam } else { 0.0 };
            base - corr[k][(i, j)]
        });
        let dk = sigma * mu - tau * kappa - aff.dtau * aff.dkappa;
        let dir = direction(1.0 - sigma, &comb_t, dk);
        let (dsc, dzc) = scaled(&dir);
        let alpha_max = step_len(&dir, &dsc, &dzc);
        let alpha = (0.99 * alpha_max).min(1.0);
        if !alpha.is_finite() || alpha <= 0.0 {
            status = SdpStatus::NumericalFailure;
            break;
        }
        if alpha < 1e-8 {
            stall += 1;
            if stall > 5 {
                status = SdpStatus::NumericalFailure;
                break;
            }
        } else {
            stall = 0;
        }

        for i in 0..n {
            y[i] += alpha * dir.dy[i];
        }
        for i in 0..m {
            nu[i] += alpha * dir.dnu[i];
        }
        for k in 0..nb {
            s[k] += &dir.ds[k] * alpha;
            z[k] += &dir.dz[k] * alpha;
            sym(&mut s[k]);
            sym(&mut z[k]);
        }
        tau += alpha * dir.dtau;
        kappa += alpha * dir.dkappa;
        if !(tau > 0.0 && kappa > 0.0) || y.iter().any(|v| !v.is_finite()) {
            status = SdpStatus::NumericalFailure;
            break;
        }
    }

    // final report from the current iterate
    let cy: f64 = ws.c.iter().zip(&y).map(|(a, b)| a * b).sum();
    let bnu: f64 = ws.b.iter().zip(&nu).map(|(a, b)| a * b).sum();
    let f0z = ws.f0_inner(&z);
    let pobj = cy / tau;
    let dobj = (bnu - f0z) / tau;
    let ay = ws.apply_a(&y);
    let by = ws.bmul(&y);
    let atz = ws.apply_at(&z);
    let btnu = ws.btmul(&nu);
    let pres = {
        let eq = (0..m).map(|i| (by[i] - ws.b[i] * tau).abs()).fold(0.0, f64::max);
        let lmi = (0..nb)
            .map(|k| {
                let mut r = &ay[k] - &s[k];
                if let Some(f0) = &ws.blocks[k].f0 {
                    r += f0 * tau;
                }
                r.amax()
            })
            .fold(0.0, f64::max);
        (eq / bnorm).max(lmi / f0norm) / tau
    };
    let dres = (0..n)
        .map(|i| (atz[i] + btnu[i] - ws.c[i] * tau).abs())
        .fold(0.0, f64::max)
        / tau
        / cnorm;
    let gap = (pobj - dobj).abs() / pobj.abs().max(1.0);

    // A collapsed τ with an objective heading to −∞ and no usable iterate is
    // a weakly unbounded relaxation; test the ray with a loose tolerance.
    if matches!(status, SdpStatus::MaxIter | SdpStatus::NumericalFailure)
        && best.is_none()
        && cy < 0.0
        && tau <= 1e-5 * (1.0 + norm_inf(&y))
    {
        let py = -cy;
        let eq = norm_inf(&by) / py;
        let lmi = ay
            .iter()
            .map(|a| {
                let mut a = a.clone();
                sym(&mut a);
                a.symmetric_eigenvalues().min()
            })
            .fold(f64::INFINITY, f64::min)
            / py;
        if eq <= WEAK_RAY_TOL * bnorm && lmi >= -WEAK_RAY_TOL * f0norm {
            status = SdpStatus::DualInfeasible;
            certificate = Some(format!(
                "approximate primal ray (tau {tau:.1e}): -c'y = {py:.3e}, |By|/that = {eq:.3e}, min eig A(y)/that = {lmi:.3e}"
            ));
        }
    }

    match status {
        SdpStatus::Optimal | SdpStatus::PrimalInfeasible | SdpStatus::DualInfeasible => {
            let (yy, nn, zz) = if status == SdpStatus::Optimal {
                (y.clone(), nu.clone(), z.clone())
            } else {
                // certificates are reported unnormalized by τ
                (y.clone(), nu.clone(), z.clone())
            };
            let t = if status == SdpStatus::Optimal { tau } else { 1.0 };
            snapshot(
                &yy,
                &nn,
                &zz,
                t,
                status,
                iter,
                pres,
                dres,
                gap,
                if status == SdpStatus::Optimal {
                    pobj
                } else if status == SdpStatus::PrimalInfeasible {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                },
                if status == SdpStatus::Optimal {
                    dobj
                } else if status == SdpStatus::PrimalInfeasible {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                },
                certificate,
            )
        }
        _ => match best {
            Some((_, mut b)) => {
                b.iterations = iter;
                b
            }
            None => snapshot(
                &y, &nu, &z, tau, status, iter, pres, dres, gap, pobj, dobj, None,
            ),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(size: usize, terms: Vec<(usize, usize, usize, f64)>, constant: Vec<(usize, usize, f64)>) -> LmiBlock {
        LmiBlock {
            size,
            constant,
            terms,
        }
    }

    #[test]
    fn min_y2_with_unit_corner() {
        // [[1, y1],[y1, y2]] ⪰ 0, min y2 → 0
        let p = SdpProblem {
            nvars: 2,
            c: vec![0.0, 1.0],
            eq_rows: vec![],
            eq_rhs: vec![],
            blocks: vec![block(2, vec![(0, 1, 0, 1.0), (1, 1, 1, 1.0)], vec![(0, 0, 1.0)])],
        };
        let sol = solve(&p, &SdpOptions::default());
        assert_eq!(sol.status, SdpStatus::Optimal, "{sol:?}");
        assert!(sol.pobj.abs() < 1e-7, "{}", sol.pobj);
    }

    #[test]
    fn scalar_lower_bound() {
        // y − 1 ⪰ 0, min y → 1
        let p = SdpProblem {
            nvars: 1,
            c: vec![1.0],
            eq_rows: vec![],
            eq_rhs: vec![],
            blocks: vec![block(1, vec![(0, 0, 0, 1.0)], vec![(0, 0, -1.0)])],
        };
        let sol = solve(&p, &SdpOptions::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.pobj - 1.0).abs() < 1e-8);
        assert!((sos_bound(&sol).unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn schur_complement_bound() {
        // y0 = 1, y1 = 2, [[y0,y1],[y1,y2]] ⪰ 0, min y2 → 4
        let p = SdpProblem {
            nvars: 3,
            c: vec![0.0, 0.0, 1.0],
            eq_rows: vec![vec![(0, 1.0)], vec![(1, 1.0)]],
            eq_rhs: vec![1.0, 2.0],
            blocks: vec![block(
                2,
                vec![(0, 0, 0, 1.0), (0, 1, 1, 1.0), (1, 1, 2, 1.0)],
                vec![],
            )],
        };
        let sol = solve(&p, &SdpOptions::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.pobj - 4.0).abs() < 1e-6);
        assert!(sol.dobj <= sol.pobj + 1e-8 * 4.0);
    }

    #[test]
    fn infeasible_detected() {
        // y0 = 1 and [−y0] ⪰ 0
        let p = SdpProblem {
            nvars: 1,
            c: vec![0.0],
            eq_rows: vec![vec![(0, 1.0)]],
            eq_rhs: vec![1.0],
            blocks: vec![block(1, vec![(0, 0, 0, -1.0)], vec![])],
        };
        let sol = solve(&p, &SdpOptions::default());
        assert_eq!(sol.status, SdpStatus::PrimalInfeasible);
        assert!(sol.certificate.is_some());
        assert!(sos_bound(&sol).is_err());
    }

    #[test]
    fn unbounded_detected() {
        // min y with y ⪰ ... nothing bounding below: block [1] constant only
        let p = SdpProblem {
            nvars: 2,
            c: vec![1.0, 0.0],
            eq_rows: vec![],
            eq_rhs: vec![],
            blocks: vec![block(1, vec![(0, 0, 1, 1.0)], vec![(0, 0, 1.0)])],
        };
        let sol = solve(&p, &SdpOptions::default());
        assert_eq!(sol.status, SdpStatus::DualInfeasible, "{sol:?}");
    }

    #[test]
    fn redundant_equalities_are_presolved() {
        let p = SdpProblem {
            nvars: 3,
            c: vec![0.0, 0.0, 1.0],
            eq_rows: vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(0, 2.0), (1, 2.0)]],
            eq_rhs: vec![1.0, 2.0, 6.0],
            blocks: vec![block(
                2,
                vec![(0, 0, 0, 1.0), (0, 1, 1, 1.0), (1, 1, 2, 1.0)],
                vec![],
            )],
        };
        let sol = solve(&p, &SdpOptions::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.pobj - 4.0).abs() < 1e-6);
        let mut bad = p.clone();
        bad.eq_rhs[2] = 7.0;
        assert_eq!(solve(&bad, &SdpOptions::default()).status, SdpStatus::PrimalInfeasible);
    }

    #[test]
    fn objective_scaling_is_linear() {
        let mk = |s: f64| SdpProblem {
            nvars: 3,
            c: vec![0.0, 0.0, s],
            eq_rows: vec![vec![(0, 1.0)], vec![(1, 1.0)]],
            eq_rhs: vec![1.0, 2.0],
            blocks: vec![block(
                2,
                vec![(0, 0, 0, 1.0), (0, 1, 1, 1.0), (1, 1, 2, 1.0)],
                vec![],
            )],
        };
        let a = solve(&mk(1.0), &SdpOptions::default());
        let b = solve(&mk(10.0), &SdpOptions::default());
        assert_eq!(a.status, b.status);
        assert!((b.pobj - 10.0 * a.pobj).abs() <= 1e-6 * b.pobj.abs());
    }

    #[test]
    fn deterministic() {
        let p = SdpProblem {
            nvars: 3,
            c: vec![0.3, -0.2, 1.0],
            eq_rows: vec![vec![(0, 1.0)]],
            eq_rhs: vec![1.0],
            blocks: vec![block(
                2,
                vec![(0, 0, 0, 1.0), (0, 1, 1, 1.0), (1, 1, 2, 1.0)],
                vec![],
            )],
        };
        let a = solve(&p, &SdpOptions::default());
        let b = solve(&p, &SdpOptions::default());
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.pobj.to_bits(), b.pobj.to_bits());
    }
}
