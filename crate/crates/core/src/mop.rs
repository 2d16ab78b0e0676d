//! Convex multiobjective problems and the structured one-sided inverses
//! `C′(x)` of their constraint matrices.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::poly::{PolyError, PolyMatrix, Polynomial};

/// Tolerance on assembled coefficients for symbolic identity checks.
pub const IDENTITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MopError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("at least one objective is required")]
    NoObjectives,
    #[error("invalid constraint structure: {0}")]
    Structure(String),
    #[error("one-sided inverse identity fails: max coefficient defect {0:.3e}")]
    IdentityFailed(f64),
}

/// Recognized shapes of the feasible set `K = {x : c(x) ≥ 0}`.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintStructure {
    /// `c_i = a_i² − x_i²`, `a_i > 0`.
    Box { a: Vec<f64> },
    /// `c_i = a_iᵀx − b_i` with linearly independent rows `a_i`.
    Polyhedral { a: Vec<Vec<f64>>, b: Vec<f64> },
    /// `c_i = α_i x_i + q_i(x_{i+1}, …, x_n)` with `α_i ≠ 0`.
    Triangular { alpha: Vec<f64>, q: Vec<Polynomial> },
    /// `c = 1 − ‖x‖²`.
    Ball,
    /// `c_i = x_i`.
    NonnegOrthant,
    /// No constraints.
    Free,
    /// User-supplied constraints together with `C′₁` (`l×n`) and optionally
    /// `C′₂` (`l×l`, zero when absent).
    Custom {
        constraints: Vec<Polynomial>,
        cprime1: PolyMatrix,
        cprime2: Option<PolyMatrix>,
    },
}

impl ConstraintStructure {
    pub fn tag(&self) -> &'static str {
        match self {
            ConstraintStructure::Box { .. } => "box",
            ConstraintStructure::Polyhedral { .. } => "polyhedral",
            ConstraintStructure::Triangular { .. } => "triangular",
            ConstraintStructure::Ball => "ball",
            ConstraintStructure::NonnegOrthant => "nonneg_orthant",
            ConstraintStructure::Free => "free",
            ConstraintStructure::Custom { .. } => "custom",
        }
    }

    /// The constraint polynomials this structure induces in `n` variables.
    pub fn constraints(&self, n: usize) -> Vec<Polynomial> {
        match self {
            ConstraintStructure::Box { a } => (0..n)
                .map(|i| {
                    let xi = Polynomial::var(n, i);
                    &Polynomial::constant(n, a[i] * a[i]) - &(&xi * &xi)
                })
                .collect(),
            ConstraintStructure::Polyhedral { a, b } => a
                .iter()
                .zip(b)
                .map(|(row, bi)| Polynomial::affine(row, -bi))
                .collect(),
            ConstraintStructure::Triangular { alpha, q } => alpha
                .iter()
                .zip(q)
                .enumerate()
                .map(|(i, (al, qi))| &Polynomial::var(n, i).scale(*al) + qi)
                .collect(),
            ConstraintStructure::Ball => {
                let mut c = Polynomial::one(n);
                for i in 0..n {
                    let xi = Polynomial::var(n, i);
                    c -= &(&xi * &xi);
                }
                vec![c]
            }
            ConstraintStructure::NonnegOrthant => (0..n).map(|i| Polynomial::var(n, i)).collect(),
            ConstraintStructure::Free => Vec::new(),
            ConstraintStructure::Custom { constraints, .. } => constraints.clone(),
        }
    }

    /// Checks parameter shapes against `n` variables.
    pub fn validate(&self, n: usize) -> Result<(), MopError> {
        let bad = |s: String| Err(MopError::Structure(s));
        match self {
            ConstraintStructure::Box { a } => {
                if a.len() != n {
                    return bad(format!("box needs {n} half-widths, got {}", a.len()));
                }
                if a.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return bad("box half-widths must be positive".into());
                }
            }
            ConstraintStructure::Polyhedral { a, b } => {
                if a.len() != b.len() {
                    return bad(format!("A has {} rows but b has {}", a.len(), b.len()));
                }
                if a.iter().any(|r| r.len() != n) {
                    return bad(format!("every row of A needs {n} entries"));
                }
                if a.is_empty() {
                    return bad("polyhedral structure needs at least one row".into());
                }
                let g = nalgebra::DMatrix::from_fn(n, a.len(), |i, j| a[j][i]);
                if numeric_rank_of(&g) < a.len() {
                    return bad("rows of A are linearly dependent".into());
                }
            }
            ConstraintStructure::Triangular { alpha, q } => {
                if alpha.len() != q.len() {
                    return bad("alpha and q must have equal length".into());
                }
                if alpha.len() > n || alpha.is_empty() {
                    return bad(format!("triangular structure needs 1..={n} constraints"));
                }
                for (i, (al, qi)) in alpha.iter().zip(q).enumerate() {
                    if *al == 0.0 || !al.is_finite() {
                        return bad(format!("alpha[{i}] must be nonzero"));
                    }
                    if qi.nvars() != n {
                        return bad(format!("q[{i}] has wrong variable count"));
                    }
                    if qi.terms().any(|(e, _)| e.entries()[..=i].iter().any(|&v| v > 0)) {
                        return bad(format!(
                            "q[{i}] may only depend on x{}..x{n}",
                            i + 2
                        ));
                    }
                }
            }
            ConstraintStructure::Ball
            | ConstraintStructure::NonnegOrthant
            | ConstraintStructure::Free => {}
            ConstraintStructure::Custom {
                constraints,
                cprime1,
                cprime2,
            } => {
                let l = constraints.len();
                if l == 0 {
                    return bad("custom structure needs at least one constraint".into());
                }
                if constraints.iter().any(|c| c.nvars() != n) {
                    return bad("custom constraint has wrong variable count".into());
                }
                if cprime1.rows() != l || cprime1.cols() != n || cprime1.nvars() != n {
                    return bad(format!(
                        "C'1 must be {l}x{n}, got {}x{}",
                        cprime1.rows(),
                        cprime1.cols()
                    ));
                }
                if let Some(c2) = cprime2 {
                    if c2.rows() != l || c2.cols() != l || c2.nvars() != n {
                        return bad(format!("C'2 must be {l}x{l}"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn numeric_rank_of(m: &nalgebra::DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|s| **s > 1e-10 * smax.max(1e-300)).count()
}

/// `min f₀(x)` subject to `x` weakly Pareto for `min (f₁,…,f_m)` over `c(x) ≥ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct MopProblem {
    pub n: usize,
    pub var_names: Vec<String>,
    pub preference: Polynomial,
    pub objectives: Vec<Polynomial>,
    pub constraints: Vec<Polynomial>,
    pub structure: ConstraintStructure,
    /// Optional verified `Q′(x)` with `Q′Q = I_m`.
    pub qprime: Option<PolyMatrix>,
    /// Optional verified `P′(x)` with `P′P = I_m`.
    pub pprime: Option<PolyMatrix>,
}

impl MopProblem {
    /// Builds and validates a problem; the induced `C′` is checked symbolically.
    pub fn new(
        preference: Polynomial,
        objectives: Vec<Polynomial>,
        structure: ConstraintStructure,
    ) -> Result<Self, MopError> {
        let n = preference.nvars();
        if objectives.is_empty() {
            return Err(MopError::NoObjectives);
        }
        for f in &objectives {
            if f.nvars() != n {
                return Err(PolyError::DimensionMismatch {
                    left: n,
                    right: f.nvars(),
                }
                .into());
            }
        }
        structure.validate(n)?;
        let constraints = structure.constraints(n);
        let prob = MopProblem {
            n,
            var_names: (1..=n).map(|i| format!("x{i}")).collect(),
            preference,
            objectives,
            constraints,
            structure,
            qprime: None,
            pprime: None,
        };
        if prob.l() > 0 {
            let defect = prob.cprime_defect()?;
            if defect > IDENTITY_TOL {
                return Err(MopError::IdentityFailed(defect));
            }
        }
        Ok(prob)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        if names.len() == self.n {
            self.var_names = names;
        }
        self
    }

    pub fn m(&self) -> usize {
        self.objectives.len()
    }

    pub fn l(&self) -> usize {
        self.constraints.len()
    }

    /// `C(x)`: columns `[∇c_i; c_i e_i]`, shape `(n+l)×l`.
    pub fn c_matrix(&self) -> PolyMatrix {
        let (n, l) = (self.n, self.l());
        let mut c = PolyMatrix::zeros(n + l, l, n);
        for (i, ci) in self.constraints.iter().enumerate() {
            for (k, g) in ci.gradient().into_iter().enumerate() {
                c.set(k, i, g);
            }
            c.set(n + i, i, ci.clone());
        }
        c
    }

    /// The structure's `(C′₁, C′₂)` with `C′ = [C′₁ | C′₂]`.
    pub fn cprime(&self) -> (PolyMatrix, PolyMatrix) {
        let n = self.n;
        let l = self.l();
        let zero2 = PolyMatrix::zeros(l, l, n);
        match &self.structure {
            ConstraintStructure::Box { a } => {
                let mut c1 = PolyMatrix::zeros(l, n, n);
                let mut c2 = PolyMatrix::zeros(l, l, n);
                for i in 0..n {
                    let a2 = a[i] * a[i];
                    c1.set(i, i, Polynomial::var(n, i).scale(-0.5 / a2));
                    c2.set(i, i, Polynomial::constant(n, 1.0 / a2));
                }
                (c1, c2)
            }
            ConstraintStructure::Polyhedral { a, .. } => {
                let g = nalgebra::DMatrix::from_fn(n, l, |i, j| a[j][i]);
                let gtg = g.transpose() * &g;
                let inv = gtg
                    .try_inverse()
                    .expect("validated full-rank polyhedral rows");
                let c1 = inv * g.transpose();
                let rows: Vec<Vec<f64>> = (0..l)
                    .map(|i| (0..n).map(|j| c1[(i, j)]).collect())
                    .collect();
                (
                    PolyMatrix::from_constants(n, &rows).expect("consistent shape"),
                    zero2,
                )
            }
            ConstraintStructure::Triangular { .. } => {
                let tinv = self.triangular_inverse();
                let mut c1 = PolyMatrix::zeros(l, n, n);
                for i in 0..l {
                    for j in 0..l {
                        c1.set(i, j, tinv.get(i, j).clone());
                    }
                }
                (c1, zero2)
            }
            ConstraintStructure::Ball => {
                let mut c1 = PolyMatrix::zeros(1, n, n);
                for j in 0..n {
                    c1.set(0, j, Polynomial::var(n, j).scale(-0.5));
                }
                (c1, PolyMatrix::identity(1, n))
            }
            ConstraintStructure::NonnegOrthant => (PolyMatrix::identity(n, n), zero2),
            ConstraintStructure::Free => (PolyMatrix::zeros(0, n, n), zero2),
            ConstraintStructure::Custom {
                cprime1, cprime2, ..
            } => (cprime1.clone(), cprime2.clone().unwrap_or(zero2)),
        }
    }

    /// `T(x)⁻¹` for the triangular structure, by symbolic forward substitution.
    ///
    /// `T[j][i] = ∂c_i/∂x_j` for `j < l`, lower triangular with constant diagonal.
    pub fn triangular_inverse(&self) -> PolyMatrix {
        let n = self.n;
        let l = self.l();
        let t = self.triangular_t();
        let mut inv = PolyMatrix::zeros(l, l, n);
        for col in 0..l {
            for row in col..l {
                let diag = t.get(row, row).constant_term();
                let mut acc = if row == col {
                    Polynomial::one(n)
                } else {
                    Polynomial::zero(n)
                };
                for k in col..row {
                    let tk = t.get(row, k);
                    if !tk.is_zero() {
                        acc -= &(tk * inv.get(k, col));
                    }
                }
                inv.set(row, col, acc.scale(1.0 / diag));
            }
        }
        inv
    }

    /// The leading `l×l` block of the gradient matrix `[∇c_1 … ∇c_l]`.
    pub fn triangular_t(&self) -> PolyMatrix {
        let n = self.n;
        let l = self.l();
        let mut t = PolyMatrix::zeros(l, l, n);
        for (i, ci) in self.constraints.iter().enumerate() {
            for j in 0..l {
                t.set(j, i, ci.differentiate(j).expect("j < l ≤ n"));
            }
        }
        t
    }

    /// `max |(C′C − I)_α|` over all assembled coefficients.
    pub fn cprime_defect(&self) -> Result<f64, MopError> {
        let (c1, c2) = self.cprime();
        let l = self.l();
        let n = self.n;
        let mut cp = PolyMatrix::zeros(l, n + l, n);
        for i in 0..l {
            for j in 0..n {
                cp.set(i, j, c1.get(i, j).clone());
            }
            for j in 0..l {
                cp.set(i, n + j, c2.get(i, j).clone());
            }
        }
        let prod = cp.checked_mul(&self.c_matrix())?;
        Ok(prod.identity_defect())
    }

    /// Rows `ℓ_i(x)ᵀ` of `C′₁`, as per-row gradients-to-multiplier maps.
    pub fn u_matrix(&self) -> Vec<Vec<Polynomial>> {
        let (c1, _) = self.cprime();
        let grads: Vec<Vec<Polynomial>> = self.objectives.iter().map(|f| f.gradient()).collect();
        (0..self.l())
            .map(|i| {
                grads
                    .iter()
                    .map(|g| {
                        let mut acc = Polynomial::zero(self.n);
                        for (k, gk) in g.iter().enumerate() {
                            let lik = c1.get(i, k);
                            if !lik.is_zero() && !gk.is_zero() {
                                acc += &(lik * gk);
                            }
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    }

    /// Numerical spot check of convex objectives and concave constraints.
    ///
    /// Returns human-readable warnings; an empty list means every sampled
    /// Hessian had the expected sign up to `−1e-7`.
    pub fn convexity_warnings(&self, samples: usize, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..samples)
            .map(|_| (0..self.n).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect();
        let mut warnings = Vec::new();
        let check = |p: &Polynomial, sign: f64| -> Option<f64> {
            if p.degree() <= 1 {
                return None;
            }
            let hess: Vec<Vec<Polynomial>> = p
                .gradient()
                .iter()
                .map(|g| g.gradient())
                .collect();
            let mut worst = 0.0f64;
            for x in &pts {
                let h = nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| {
                    sign * hess[i][j].eval(x)
                });
                let ev = h.symmetric_eigenvalues();
                worst = worst.min(ev.min());
            }
            (worst < -1e-7).then_some(worst)
        };
        for (j, f) in self.objectives.iter().enumerate() {
            if let Some(w) = check(f, 1.0) {
                warnings.push(format!(
                    "objective f{} is not convex at a sample (eigenvalue {w:.3e})",
                    j + 1
                ));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if let Some(w) = check(c, -1.0) {
                warnings.push(format!(
                    "constraint c{} is not concave at a sample (eigenvalue {w:.3e})",
                    i + 1
                ));
            }
        }
        warnings
    }
}

/// Objectives of the form `f_i = h + d_iᵀx + e_i` sharing a nonlinear part `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearTermStructure {
    pub h: Polynomial,
    pub d: Vec<Vec<f64>>,
    /// Constant offsets `e_i`; they do not enter any gradient.
    pub offsets: Vec<f64>,
}

impl LinearTermStructure {
    /// Detects the structure, using `f₁` minus its affine part as `h`.
    pub fn detect(objectives: &[Polynomial]) -> Option<Self> {
        let first = objectives.first()?;
        let strip = |f: &Polynomial| {
            let mut g = f.clone();
            for (i, c) in f.linear_coefficients().into_iter().enumerate() {
                g.add_term(crate::poly::Exponent::unit(f.nvars(), i), -c);
            }
            let c0 = g.constant_term();
            g.add_term(crate::poly::Exponent::zeros(f.nvars()), -c0);
            g
        };
        let h = strip(first);
        let scale = objectives
            .iter()
            .map(Polynomial::max_abs_coef)
            .fold(1.0, f64::max);
        for f in &objectives[1..] {
            if !strip(f).approx_eq(&h, 1e-12 * scale) {
                return None;
            }
        }
        Some(LinearTermStructure {
            h,
            d: objectives.iter().map(|f| f.linear_coefficients()).collect(),
            offsets: objectives.iter().map(|f| f.constant_term()).collect(),
        })
    }

    /// `D = [d_1 … d_m; 1 … 1]`, shape `(n+1)×m`.
    pub fn d_matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = self.h.nvars();
        let m = self.d.len();
        nalgebra::DMatrix::from_fn(n + 1, m, |i, j| if i < n { self.d[j][i] } else { 1.0 })
    }

    /// `(DᵀD)⁻¹Dᵀ`, or `None` when `D` is column-rank deficient.
    pub fn d_pseudo_inverse(&self) -> Option<nalgebra::DMatrix<f64>> {
        let d = self.d_matrix();
        if numeric_rank_of(&d) < d.ncols() {
            return None;
        }
        let dtd = d.transpose() * &d;
        dtd.try_inverse().map(|inv| inv * d.transpose())
    }
}
