//! Random convex problems with a known strictly feasible point at the origin.

#![allow(dead_code)]

use qcert::kkt::SemiAlgebraicSet;
use qcert::polyring::{Monomial, Polynomial};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct ConvexProblem {
    pub f: Polynomial,
    pub set: SemiAlgebraicSet,
    /// Half-width of a box containing `K`.
    pub radius: f64,
}

fn affine(rng: &mut ChaCha8Rng, n: usize, offset: f64) -> Polynomial {
    let terms = (0..n)
        .map(|i| (Monomial::var(i), rng.random_range(-1.0..1.0)))
        .chain([(Monomial::one(), offset)]);
    Polynomial::from_terms(n, terms).unwrap()
}

/// `f = Σ (aᵀx + b)⁴ + ‖Mx‖² + cᵀx` over affine half-spaces and a ball, all
/// strictly satisfied at the origin.
pub fn convex_problem(seed: u64) -> ConvexProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=3);
    let mut f = Polynomial::zero(n);
    for _ in 0..rng.random_range(1..=2) {
        let b = rng.random_range(-1.0..1.0);
        f = f + affine(&mut rng, n, b).pow(4);
    }
    for _ in 0..n {
        f = f + affine(&mut rng, n, 0.0).square();
    }
    f = f + affine(&mut rng, n, 0.0).scale(2.0);

    let radius: f64 = rng.random_range(1.0..2.0);
    let centre: Vec<f64> = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
    let mut ball = Polynomial::constant(n, radius * radius);
    for (i, c) in centre.iter().enumerate() {
        let xi = Polynomial::var(n, i) - Polynomial::constant(n, *c);
        ball = ball - xi.square();
    }
    let mut g = vec![ball];
    for _ in 0..rng.random_range(0..=2) {
        let off = rng.random_range(0.2..1.0);
        g.push(affine(&mut rng, n, off));
    }
    let set = SemiAlgebraicSet::new(n, g)
        .unwrap()
        .with_slater_point(vec![0.0; n])
        .unwrap();
    let box_radius = radius + centre.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    ConvexProblem { f, set, radius: box_radius }
}

/// Up to `count` points of `K` by rejection from the enclosing box.
pub fn feasible_samples(p: &ConvexProblem, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.set.nvars();
    let mut out = Vec::with_capacity(count);
    for _ in 0..200 * count {
        if out.len() == count {
            break;
        }
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-p.radius..p.radius)).collect();
        if p.set.contains(&x, 0.0) {
            out.push(x);
        }
    }
    out
}
