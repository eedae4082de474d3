//! Exact convex-hull membership for exponent vectors, used to restrict Gram
//! bases to the half Newton polytope.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::polyring::Monomial;

/// Newton polytope of a polynomial, stored as its support exponent vectors.
#[derive(Debug, Clone)]
pub struct NewtonPolytope {
    nvars: usize,
    points: Vec<Vec<u32>>,
}

impl NewtonPolytope {
    pub fn new<'a>(nvars: usize, support: impl IntoIterator<Item = &'a Monomial>) -> Self {
        NewtonPolytope {
            nvars,
            points: support.into_iter().map(|m| m.exponents(nvars)).collect(),
        }
    }

    /// Whether `2·m` lies in the polytope, i.e. `m` lies in the half polytope.
    pub fn contains_doubled(&self, m: &Monomial) -> bool {
        let target: Vec<u32> = m.exponents(self.nvars).iter().map(|e| 2 * e).collect();
        self.contains(&target)
    }

    pub fn contains(&self, target: &[u32]) -> bool {
        if self.points.is_empty() {
            return false;
        }
        if self.points.iter().any(|p| p.as_slice() == target) {
            return true;
        }
        let tdeg: u32 = target.iter().sum();
        let (lo, hi) = self.points.iter().fold((u32::MAX, 0), |(lo, hi), p| {
            let d: u32 = p.iter().sum();
            (lo.min(d), hi.max(d))
        });
        if tdeg < lo || tdeg > hi {
            return false;
        }
        for v in 0..self.nvars {
            let (lo, hi) = self
                .points
                .iter()
                .fold((u32::MAX, 0), |(lo, hi), p| (lo.min(p[v]), hi.max(p[v])));
            if target[v] < lo || target[v] > hi {
                return false;
            }
        }
        convex_combination_exists(&self.points, target)
    }
}

/// Phase-one simplex with Bland's rule over exact rationals: is there `c ≥ 0`
/// with `Σ c_s p_s = target` and `Σ c_s = 1`?
fn convex_combination_exists(points: &[Vec<u32>], target: &[u32]) -> bool {
    let nrows = target.len() + 1;
    let ncols = points.len();
    let int = |v: i64| BigRational::from_integer(BigInt::from(v));

    // Columns: structural variables, then one artificial per row, then rhs.
    let width = ncols + nrows + 1;
    let mut tab: Vec<Vec<BigRational>> = Vec::with_capacity(nrows);
    for r in 0..nrows {
        let mut row = vec![BigRational::zero(); width];
        for (c, p) in points.iter().enumerate() {
            row[c] = if r < target.len() { int(p[r] as i64) } else { int(1) };
        }
        row[ncols + r] = BigRational::one();
        row[width - 1] = if r < target.len() { int(target[r] as i64) } else { int(1) };
        tab.push(row);
    }
    let mut basis: Vec<usize> = (0..nrows).map(|r| ncols + r).collect();

    // Reduced costs of the phase-one objective (sum of artificials).
    let objective_row = |tab: &Vec<Vec<BigRational>>, basis: &[usize]| -> Vec<BigRational> {
        let mut z = vec![BigRational::zero(); width];
        for (row, &b) in tab.iter().zip(basis) {
            if b >= ncols {
                for (c, v) in row.iter().enumerate() {
                    z[c] += v;
                }
            }
        }
        z
    };

    loop {
        let z = objective_row(&tab, &basis);
        // artificial columns never re-enter
        let entering = (0..ncols).find(|&c| z[c].is_positive() && !basis.contains(&c));
        let Some(col) = entering else {
            break;
        };
        let mut best: Option<(usize, BigRational)> = None;
        for (r, row) in tab.iter().enumerate() {
            if row[col].is_positive() {
                let ratio = &row[width - 1] / &row[col];
                let better = match &best {
                    None => true,
                    Some((br, bv)) => ratio < *bv || (ratio == *bv && basis[r] < basis[*br]),
                };
                if better {
                    best = Some((r, ratio));
                }
            }
        }
        let Some((pr, _)) = best else {
            break;
        };
        let pivot = tab[pr][col].clone();
        for v in tab[pr].iter_mut() {
            *v = &*v / &pivot;
        }
        let prow = tab[pr].clone();
        for (r, row) in tab.iter_mut().enumerate() {
            if r != pr && !row[col].is_zero() {
                let factor = row[col].clone();
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v -= &factor * pv;
                }
            }
        }
        basis[pr] = col;
    }

    (0..nrows).all(|r| basis[r] < ncols || tab[r][width - 1].is_zero())
}
