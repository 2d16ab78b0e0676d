//! Multi-task learning losses as polynomial multiobjective problems.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::mop::{ConstraintStructure, MopError, MopProblem};
use crate::poly::{PolyMatrix, Polynomial};

#[derive(Debug, Error)]
pub enum MtlError {
    #[error("no data sources given")]
    NoSources,
    #[error("source {index}: {msg}")]
    Shape { index: usize, msg: String },
    #[error("tanh degree must be 3 or 5, got {0}")]
    TanhDegree(u32),
    #[error(transparent)]
    Problem(#[from] MopError),
}

/// `‖Xu − y‖²` as a polynomial in `u`.
fn least_squares(x: &[Vec<f64>], y: &[f64], n: usize) -> Polynomial {
    let mut f = Polynomial::zero(n);
    for (row, yi) in x.iter().zip(y) {
        let r = Polynomial::affine(row, -yi);
        f += &(&r * &r);
    }
    f
}

/// Single-label regression over `p` sources: `f_i(u) = ‖X⁽ⁱ⁾u − y‖²` with
/// `u ≥ 0` and preference `‖u‖²`.
pub fn gen_miso(sources: &[Vec<Vec<f64>>], y: &[f64]) -> Result<MopProblem, MtlError> {
    let first = sources.first().ok_or(MtlError::NoSources)?;
    let n = first.first().map_or(0, |r| r.len());
    if n == 0 {
        return Err(MtlError::Shape {
            index: 0,
            msg: "empty matrix".into(),
        });
    }
    for (i, x) in sources.iter().enumerate() {
        if x.len() != y.len() {
            return Err(MtlError::Shape {
                index: i,
                msg: format!("{} rows but the label has {} entries", x.len(), y.len()),
            });
        }
        if let Some(r) = x.iter().position(|r| r.len() != n) {
            return Err(MtlError::Shape {
                index: i,
                msg: format!("row {} has {} columns, expected {n}", r + 1, x[r].len()),
            });
        }
    }
    let objectives = sources.iter().map(|x| least_squares(x, y, n)).collect();
    let mut pref = Polynomial::zero(n);
    for i in 0..n {
        pref += &Polynomial::var(n, i).pow(2);
    }
    let prob = MopProblem::new(pref, objectives, ConstraintStructure::NonnegOrthant)?;
    Ok(prob.with_names((1..=n).map(|i| format!("u{i}")).collect()))
}

/// `p` standard-normal sources of shape `n1×n2` and an `n1` label.
pub fn random_miso_data(p: usize, n1: usize, n2: usize, seed: u64) -> (Vec<Vec<Vec<f64>>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let sources = (0..p)
        .map(|_| (0..n1).map(|_| (0..n2).map(|_| draw()).collect()).collect())
        .collect();
    let y = (0..n1).map(|_| draw()).collect();
    (sources, y)
}

/// The truncated Taylor series of `tanh`.
pub fn tanh_poly(z: &Polynomial, degree: u32) -> Polynomial {
    let z3 = z.pow(3);
    let mut s = z - &z3.scale(1.0 / 3.0);
    if degree >= 5 {
        s += &(&z3 * &z.pow(2)).scale(2.0 / 15.0);
    }
    s
}

/// Scalar version of [`tanh_poly`].
pub fn tanh_approx(z: f64, degree: u32) -> f64 {
    let mut s = z - z.powi(3) / 3.0;
    if degree >= 5 {
        s += 2.0 * z.powi(5) / 15.0;
    }
    s
}

/// Autoencoder reconstruction `σ̃(A·ReLU(x) + b)` evaluated numerically;
/// `a` is row-major.
pub fn mimo_forward(a: &[f64], b: &[f64], x: &[f64], degree: u32) -> Vec<f64> {
    let n = x.len();
    let relu: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    (0..n)
        .map(|j| {
            let z = b[j] + (0..n).map(|k| a[j * n + k] * relu[k]).sum::<f64>();
            tanh_approx(z, degree)
        })
        .collect()
}

/// One-layer autoencoder over `p` inputs in `ℝⁿ`. Variables are the entries
/// of `A` (row-major) followed by `b`; `‖A‖_F² ≤ 1`, `‖b‖² ≤ 1`. Losses are
/// `‖σ̃(A·ReLU(x⁽ⁱ⁾) + b) − x⁽ⁱ⁾‖²`, the preference is the summed bias
/// `Σ_i Σ_j (x⁽ⁱ⁾_j − x̂⁽ⁱ⁾_j)`.
pub fn gen_mimo(inputs: &[Vec<f64>], tanh_degree: u32) -> Result<MopProblem, MtlError> {
    if tanh_degree != 3 && tanh_degree != 5 {
        return Err(MtlError::TanhDegree(tanh_degree));
    }
    let first = inputs.first().ok_or(MtlError::NoSources)?;
    let n = first.len();
    if n == 0 {
        return Err(MtlError::Shape {
            index: 0,
            msg: "empty input".into(),
        });
    }
    if let Some(i) = inputs.iter().position(|x| x.len() != n) {
        return Err(MtlError::Shape {
            index: i,
            msg: format!("length {}, expected {n}", inputs[i].len()),
        });
    }
    let nv = n * n + n;
    let mut objectives = Vec::with_capacity(inputs.len());
    let mut pref = Polynomial::zero(nv);
    for x in inputs {
        let relu: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
        let mut loss = Polynomial::zero(nv);
        for j in 0..n {
            let mut coefs = vec![0.0; nv];
            coefs[j * n..(j + 1) * n].copy_from_slice(&relu);
            coefs[n * n + j] = 1.0;
            let out = tanh_poly(&Polynomial::affine(&coefs, 0.0), tanh_degree);
            let diff = &out - &Polynomial::constant(nv, x[j]);
            loss += &(&diff * &diff);
            pref -= &diff;
        }
        objectives.push(loss);
    }

    let mut ca = Polynomial::one(nv);
    let mut cb = Polynomial::one(nv);
    let mut c1 = PolyMatrix::zeros(2, nv, nv);
    for v in 0..nv {
        let xv = Polynomial::var(nv, v);
        if v < n * n {
            ca -= &xv.pow(2);
            c1.set(0, v, xv.scale(-0.5));
        } else {
            cb -= &xv.pow(2);
            c1.set(1, v, xv.scale(-0.5));
        }
    }
    let structure = ConstraintStructure::Custom {
        constraints: vec![ca, cb],
        cprime1: c1,
        cprime2: Some(PolyMatrix::identity(2, nv)),
    };
    let mut names: Vec<String> = (0..n)
        .flat_map(|r| (0..n).map(move |c| format!("A{}_{}", r + 1, c + 1)))
        .collect();
    names.extend((1..=n).map(|j| format!("b{j}")));
    Ok(MopProblem::new(pref, objectives, structure)?.with_names(names))
}

/// `p` inputs in `[−1, 1]ⁿ` drawn from the standard normal conditioned on
/// that box.
pub fn random_mimo_data(p: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || loop {
        let v: f64 = StandardNormal.sample(&mut rng);
        if v.abs() <= 1.0 {
            return v;
        }
    };
    (0..p).map(|_| (0..n).map(|_| draw()).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngExt;

    #[test]
    fn miso_identity() {
        let x = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let p = gen_miso(&[x], &[1.0, 1.0]).unwrap();
        let u = Polynomial::var(2, 0);
        let v = Polynomial::var(2, 1);
        let one = Polynomial::one(2);
        let expect = &(&(&u - &one) * &(&u - &one)) + &(&(&v - &one) * &(&v - &one));
        assert!(p.objectives[0].approx_eq(&expect, 1e-15));
        assert_eq!(p.structure, ConstraintStructure::NonnegOrthant);
    }

    #[test]
    fn miso_zero_data() {
        let p = gen_miso(&[vec![vec![0.0; 3]; 2]], &[0.0, 0.0]).unwrap();
        assert!(p.objectives[0].is_zero());
    }

    #[test]
    fn miso_matches_matrix_arithmetic() {
        let (xs, y) = random_miso_data(5, 10, 10, 7);
        let p = gen_miso(&xs, &y).unwrap();
        assert_eq!(p.m(), 5);
        assert!(p.objectives.iter().all(|f| f.degree() == 2));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let u: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
            for (x, f) in xs.iter().zip(&p.objectives) {
                let direct: f64 = x
                    .iter()
                    .zip(&y)
                    .map(|(r, yi)| (r.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() - yi).powi(2))
                    .sum();
                assert!((f.eval(&u) - direct).abs() <= 1e-9 * direct.abs().max(1.0));
            }
        }
    }

    #[test]
    fn miso_ragged_rejected() {
        let x = vec![vec![1.0, 0.0], vec![0.0]];
        assert!(gen_miso(&[x], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn mimo_single_weight() {
        let p = gen_mimo(&[vec![1.0]], 3).unwrap();
        assert_eq!(p.n, 2);
        let a = Polynomial::var(2, 0);
        let b = Polynomial::var(2, 1);
        let s = tanh_poly(&(&a + &b), 3);
        let d = &s - &Polynomial::one(2);
        assert!(p.objectives[0].approx_eq(&(&d * &d), 1e-14));
    }

    #[test]
    fn mimo_degrees_and_forward_pass() {
        let xs = random_mimo_data(3, 2, 11);
        let p = gen_mimo(&xs, 3).unwrap();
        assert_eq!(p.n, 6);
        assert!(p.objectives.iter().all(|f| f.degree() == 6));
        assert_eq!(p.preference.degree(), 3);
        assert!(p.cprime_defect().unwrap() < 1e-12);
        let p5 = gen_mimo(&xs, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v: Vec<f64> = (0..6).map(|_| rng.random_range(-0.7..0.7)).collect();
            for (prob, deg) in [(&p, 3), (&p5, 5)] {
                let mut bias = 0.0;
                for (x, f) in xs.iter().zip(&prob.objectives) {
                    let out = mimo_forward(&v[..4], &v[4..], x, deg);
                    let direct: f64 = out.iter().zip(x).map(|(o, t)| (o - t).powi(2)).sum();
                    bias += x.iter().zip(&out).map(|(t, o)| t - o).sum::<f64>();
                    assert!((f.eval(&v) - direct).abs() <= 1e-9 * direct.abs().max(1.0));
                }
                let pv = prob.preference.eval(&v);
                assert!((pv - bias).abs() <= 1e-9 * bias.abs().max(1.0));
            }
        }
    }

    #[test]
    fn mimo_bad_degree() {
        assert!(matches!(gen_mimo(&[vec![1.0]], 4), Err(MtlError::TanhDegree(4))));
    }
}
