#![allow(dead_code)]

use owp::poly::Exponent;
use owp::{ConstraintStructure, MopProblem, PolyMatrix, Polynomial};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// `Σ coef · Π x_var^pow` with 1-based variable indices.
pub fn poly(n: usize, terms: &[(f64, &[(usize, u32)])]) -> Polynomial {
    Polynomial::from_terms(
        n,
        terms.iter().map(|(c, mono)| {
            let mut e = vec![0u32; n];
            for &(v, p) in mono.iter() {
                e[v - 1] += p;
            }
            (Exponent::new(e), *c)
        }),
    )
    .unwrap()
}

pub fn linear(n: usize, coefs: &[(usize, f64)]) -> Polynomial {
    let mut c = vec![0.0; n];
    for &(v, a) in coefs {
        c[v - 1] += a;
    }
    Polynomial::affine(&c, 0.0)
}

fn unit_row(n: usize, var: usize, scale: f64) -> PolyMatrix {
    let row = (0..n)
        .map(|j| Polynomial::constant(n, if j + 1 == var { scale } else { 0.0 }))
        .collect();
    PolyMatrix::from_rows(n, vec![row]).unwrap()
}

/// Eight variables, two objectives, hypercube `1 − x_i² ≥ 0`.
pub fn hypercube() -> MopProblem {
    let n = 8;
    let a = &(&linear(n, &[(1, 1.0), (2, -1.0), (8, -1.0)]) + &poly(n, &[(1.0, &[(7, 2)])]));
    let b = linear(n, &[(3, 1.0), (4, -1.0), (5, -2.0), (6, -4.0)]);
    let f0 = &(a * a) - &(&(&b * &b) * &b);
    let mut f1 = Polynomial::zero(n);
    for i in 1..=n {
        f1 += &poly(n, &[(1.0, &[(i, 2)]), (-1.0, &[(i, 1)])]);
    }
    let d = |i, j| linear(n, &[(i, 1.0), (j, -1.0)]);
    let f2 = &(&(&d(1, 2) * &d(1, 2)) + &(&d(3, 4) * &d(3, 4))) + &(&d(5, 6) * &d(5, 6));
    MopProblem::new(f0, vec![f1, f2], ConstraintStructure::Box { a: vec![1.0; n] }).unwrap()
}

/// Six variables, two objectives, five homogeneous linear constraints.
pub fn polyhedron() -> MopProblem {
    let n = 6;
    let f0 = &(&(&poly(n, &[(1.0, &[(1, 2)]), (-3.0, &[])]) * &poly(n, &[(1.0, &[(2, 1)]), (1.0, &[])]))
        - &poly(n, &[(3.0, &[(3, 1), (4, 1)])]))
        - &poly(n, &[(1.0, &[(5, 2), (6, 1)])]);
    let s1 = linear(n, &[(1, 1.0), (2, 2.0)]);
    let s2 = linear(n, &[(3, 1.0), (4, 3.0)]);
    let f1 = &(&(&s1 * &s1) + &(&s2 * &s2)) + &linear(n, &[(5, 1.0)]);
    let s3 = linear(n, &[(3, 1.0), (4, -0.5), (6, 1.0)]);
    let f2 = &linear(n, &[(1, 1.0), (2, 1.0)]) + &(&s3 * &s3);
    let a = vec![
        vec![-0.5, -1.0, 3.0, 1.0, 1.0, -1.0],
        vec![2.0, -0.5, 0.0, 5.0, 2.0, 3.0],
        vec![-2.0, -1.0, -4.0, 3.0, 6.0, -7.0 / 3.0],
        vec![-9.0 / 4.0, -5.0 / 2.0, -1.0, 2.0, 2.0, 8.0 / 3.0],
        vec![2.0, -8.0 / 3.0, 4.0, 0.0, 5.0 / 2.0, -5.0],
    ];
    MopProblem::new(
        f0,
        vec![f1, f2],
        ConstraintStructure::Polyhedral { a, b: vec![0.0; 5] },
    )
    .unwrap()
}

/// Eight variables, six objectives differing in linear terms, unit ball.
pub fn ball_six() -> MopProblem {
    let n = 8;
    let mut f0 = poly(n, &[(1.0, &[(1, 1), (3, 2)]), (-1.0, &[(1, 1)])]);
    for i in 1..=n {
        f0 -= &poly(n, &[(1.0, &[(i, 4)])]);
    }
    let h = poly(
        n,
        &[
            (1.0, &[(1, 2)]),
            (2.0, &[(1, 1), (2, 1)]),
            (1.0, &[(1, 1), (3, 1)]),
            (2.0, &[(2, 2)]),
            (2.0, &[(3, 2)]),
            (1.0, &[(5, 1)]),
            (1.0, &[(6, 2)]),
        ],
    );
    let lins: [&[(usize, f64)]; 6] = [
        &[(1, 1.0), (2, 2.0), (5, 5.0)],
        &[(2, 2.0), (3, 1.0), (4, -1.0)],
        &[(7, 1.0), (8, 1.0)],
        &[(5, 1.0), (6, 1.0), (7, 1.0), (8, -3.0)],
        &[(1, -3.0), (4, -3.0)],
        &[(3, 1.0), (8, -1.0)],
    ];
    let objs = lins.iter().map(|l| &h + &linear(n, l)).collect();
    MopProblem::new(f0, objs, ConstraintStructure::Ball).unwrap()
}

/// Ten variables, four objectives, one quadratic constraint.
pub fn xonly_first() -> MopProblem {
    let n = 10;
    let f0 = poly(
        n,
        &[
            (1.0, &[(1, 2), (2, 1)]),
            (1.0, &[(2, 2), (3, 1)]),
            (-3.0, &[(4, 1), (5, 1), (6, 1)]),
            (1.0, &[(10, 2)]),
        ],
    );
    let mut h = Polynomial::zero(n);
    for i in 1..=n {
        h += &poly(n, &[(i as f64, &[(i, 2)])]);
    }
    let lins: [&[(usize, f64)]; 4] = [
        &[(1, 3.0), (2, 4.0), (5, 1.0)],
        &[(8, -2.0), (9, -1.0)],
        &[(10, 2.0), (7, -3.0)],
        &[(5, 1.0), (4, -1.0), (3, -1.0)],
    ];
    let objs = lins.iter().map(|l| &h + &linear(n, l)).collect();
    let c = poly(
        n,
        &[
            (1.0, &[]),
            (-2.0, &[(1, 2)]),
            (-1.0, &[(3, 2)]),
            (1.0, &[(5, 1)]),
            (1.0, &[(7, 1)]),
        ],
    );
    MopProblem::new(
        f0,
        objs,
        ConstraintStructure::Custom {
            constraints: vec![c],
            cprime1: unit_row(n, 5, 1.0),
            cprime2: None,
        },
    )
    .unwrap()
}

/// Ten variables, three objectives `xᵀx + linear`, one quadratic constraint.
pub fn xonly_second() -> MopProblem {
    let n = 10;
    let mut xtx = Polynomial::zero(n);
    for i in 1..=n {
        xtx += &poly(n, &[(1.0, &[(i, 2)])]);
    }
    let f0 = &xtx
        - &poly(
            n,
            &[
                (4.0, &[(1, 2), (2, 2)]),
                (4.0, &[(2, 2), (3, 2)]),
                (4.0, &[(3, 2), (4, 2)]),
                (4.0, &[(5, 2), (1, 2)]),
            ],
        );
    let lins: [&[(usize, f64)]; 3] = [
        &[(2, 4.0), (3, 1.0), (4, 2.0), (5, 3.0), (6, 3.0), (7, 4.0), (10, 3.0)],
        &[
            (1, 3.0),
            (2, 2.0),
            (3, 1.0),
            (4, 1.0),
            (5, 2.0),
            (6, 5.0),
            (7, 4.0),
            (8, 2.0),
            (10, 2.0),
        ],
        &[
            (1, 4.0),
            (2, 1.0),
            (3, 2.0),
            (4, 3.0),
            (5, 1.0),
            (6, 5.0),
            (7, 3.0),
            (8, 5.0),
            (9, 1.0),
            (10, 1.0),
        ],
    ];
    let objs = lins.iter().map(|l| &xtx + &linear(n, l)).collect();
    let c = poly(
        n,
        &[
            (1.0, &[]),
            (-1.0, &[(1, 2)]),
            (-1.0, &[(2, 2)]),
            (-1.0, &[(3, 2)]),
            (-1.0, &[(4, 1)]),
            (-1.0, &[(5, 1)]),
            (-1.0, &[(10, 1)]),
        ],
    );
    MopProblem::new(
        f0,
        objs,
        ConstraintStructure::Custom {
            constraints: vec![c],
            cprime1: unit_row(n, 4, -1.0),
            cprime2: None,
        },
    )
    .unwrap()
}

/// Two variables, two objectives, `1 − x₁² − x₂ ≥ 0`.
pub fn parabola_cap() -> MopProblem {
    let n = 2;
    let base = poly(n, &[(1.0, &[(1, 2)]), (1.0, &[(2, 2)])]);
    let f1 = &base + &linear(n, &[(1, 1.0), (2, -2.0)]);
    let f2 = &base + &linear(n, &[(1, 2.0), (2, -2.0)]);
    let c = poly(n, &[(1.0, &[]), (-1.0, &[(1, 2)]), (-1.0, &[(2, 1)])]);
    MopProblem::new(
        poly(n, &[(1.0, &[(1, 2)])]),
        vec![f1, f2],
        ConstraintStructure::Custom {
            constraints: vec![c],
            cprime1: unit_row(n, 2, -1.0),
            cprime2: None,
        },
    )
    .unwrap()
}

/// `c = −1 − x₁² < 0`: the feasible set is empty.
pub fn empty_set() -> MopProblem {
    let n = 2;
    let c = poly(n, &[(-1.0, &[]), (-1.0, &[(1, 2)])]);
    let cp1 = PolyMatrix::from_rows(
        n,
        vec![vec![poly(n, &[(0.5, &[(1, 1)])]), Polynomial::zero(n)]],
    )
    .unwrap();
    let cp2 = PolyMatrix::from_rows(n, vec![vec![Polynomial::constant(n, -1.0)]]).unwrap();
    MopProblem::new(
        linear(n, &[(1, 1.0), (2, 1.0)]),
        vec![
            poly(n, &[(1.0, &[(1, 2)]), (1.0, &[(2, 2)])]),
            poly(n, &[(1.0, &[(1, 2)]), (1.0, &[(2, 2)]), (1.0, &[(2, 1)])]),
        ],
        ConstraintStructure::Custom {
            constraints: vec![c],
            cprime1: cp1,
            cprime2: Some(cp2),
        },
    )
    .unwrap()
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// A random symmetric positive definite matrix `GGᵀ/n + I/2`.
fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let g: Vec<Vec<f64>> = (0..n).map(|_| normal_vec(rng, n)).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let s: f64 = (0..n).map(|k| g[i][k] * g[j][k]).sum();
                    s / n as f64 + if i == j { 0.5 } else { 0.0 }
                })
                .collect()
        })
        .collect()
}

fn quad_form(n: usize, q: &[Vec<f64>], args: &[Polynomial]) -> Polynomial {
    let mut out = Polynomial::zero(n);
    for i in 0..args.len() {
        for j in 0..args.len() {
            out += &(&args[i] * &args[j]).scale(q[i][j]);
        }
    }
    out
}

/// Free convex problem: `m = n` objectives `xᵀQx + d_iᵀx` and a quartic preference.
pub fn random_quadratic(n: usize, seed: u64) -> MopProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Polynomial> = (0..n).map(|i| Polynomial::var(n, i)).collect();
    let sq: Vec<Polynomial> = xs.iter().map(|x| x * x).collect();
    let q1 = random_pd(&mut rng, n);
    let q2 = random_pd(&mut rng, n);
    let q4 = random_pd(&mut rng, n);
    let d0 = normal_vec(&mut rng, n);
    let f0 = &(&quad_form(n, &q1, &sq) + &quad_form(n, &q2, &xs)) + &Polynomial::affine(&d0, 0.0);
    let h = quad_form(n, &q4, &xs);
    let objs = (0..n)
        .map(|_| &h + &Polynomial::affine(&normal_vec(&mut rng, n), 0.0))
        .collect();
    MopProblem::new(f0, objs, ConstraintStructure::Free).unwrap()
}

/// Random convex instance on the unit ball with two or three objectives.
pub fn random_ball(n: usize, m: usize, seed: u64) -> MopProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Polynomial> = (0..n).map(|i| Polynomial::var(n, i)).collect();
    let f0 = &quad_form(n, &random_pd(&mut rng, n), &xs).scale(0.5)
        + &Polynomial::affine(&normal_vec(&mut rng, n), 0.0);
    let objs = (0..m)
        .map(|_| {
            &quad_form(n, &random_pd(&mut rng, n), &xs)
                + &Polynomial::affine(&normal_vec(&mut rng, n), 0.0)
        })
        .collect();
    MopProblem::new(f0, objs, ConstraintStructure::Ball).unwrap()
}

pub fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
