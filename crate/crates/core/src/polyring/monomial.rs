use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A monomial stored sparsely as `(variable index, exponent)` pairs sorted by
/// variable index. Zero exponents are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Monomial(Vec<(usize, u32)>);

impl Monomial {
    /// The constant monomial `1`.
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    /// The monomial `x_var`.
    pub fn var(var: usize) -> Self {
        Monomial(vec![(var, 1)])
    }

    pub fn var_pow(var: usize, exp: u32) -> Self {
        if exp == 0 {
            Monomial::one()
        } else {
            Monomial(vec![(var, exp)])
        }
    }

    /// Builds a monomial from a dense exponent vector.
    pub fn from_exponents(exps: &[u32]) -> Self {
        Monomial(
            exps.iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| (i, e))
                .collect(),
        )
    }

    /// Builds a monomial from arbitrary `(var, exp)` pairs, merging repeats.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, u32)>) -> Self {
        let mut v: Vec<(usize, u32)> = pairs.into_iter().filter(|&(_, e)| e > 0).collect();
        v.sort_unstable_by_key(|&(i, _)| i);
        let mut out: Vec<(usize, u32)> = Vec::with_capacity(v.len());
        for (i, e) in v {
            match out.last_mut() {
                Some((j, f)) if *j == i => *f += e,
                _ => out.push((i, e)),
            }
        }
        Monomial(out)
    }

    pub fn exponents(&self, nvars: usize) -> Vec<u32> {
        let mut dense = vec![0; nvars];
        for &(i, e) in &self.0 {
            dense[i] = e;
        }
        dense
    }

    pub fn exponent(&self, var: usize) -> u32 {
        self.0
            .iter()
            .find(|&&(i, _)| i == var)
            .map_or(0, |&(_, e)| e)
    }

    /// Total degree.
    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        self.0.last().map(|&(i, _)| i)
    }

    pub fn pairs(&self) -> &[(usize, u32)] {
        &self.0
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial(out)
    }

    pub fn pow(&self, k: u32) -> Monomial {
        if k == 0 {
            return Monomial::one();
        }
        Monomial(self.0.iter().map(|&(i, e)| (i, e * k)).collect())
    }

    /// `∂/∂x_var` of this monomial as `(multiplier, monomial)`, or `None` if it
    /// does not depend on `x_var`.
    pub fn derivative(&self, var: usize) -> Option<(u32, Monomial)> {
        let pos = self.0.iter().position(|&(i, _)| i == var)?;
        let e = self.0[pos].1;
        let mut v = self.0.clone();
        if e == 1 {
            v.remove(pos);
        } else {
            v[pos].1 = e - 1;
        }
        Some((e, Monomial(v)))
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.0.iter().map(|&(i, e)| x[i].powi(e as i32)).product()
    }

    /// Shifts every variable index by `offset`.
    pub fn shift_vars(&self, offset: usize) -> Monomial {
        Monomial(self.0.iter().map(|&(i, e)| (i + offset, e)).collect())
    }

    /// Restricts to variables in `range`, re-indexing from `range.start`.
    pub fn restrict(&self, range: std::ops::Range<usize>) -> Monomial {
        Monomial(
            self.0
                .iter()
                .filter(|(i, _)| range.contains(i))
                .map(|&(i, e)| (i - range.start, e))
                .collect(),
        )
    }

    /// Degree counting only variables in `range`.
    pub fn partial_degree(&self, range: std::ops::Range<usize>) -> u32 {
        self.0
            .iter()
            .filter(|(i, _)| range.contains(i))
            .map(|&(_, e)| e)
            .sum()
    }

    /// Returns `m` with `m * m == self` when every exponent is even.
    pub fn sqrt(&self) -> Option<Monomial> {
        if self.0.iter().all(|&(_, e)| e % 2 == 0) {
            Some(Monomial(self.0.iter().map(|&(i, e)| (i, e / 2)).collect()))
        } else {
            None
        }
    }

    /// Renders with the given variable names; `1` for the constant monomial.
    pub fn display_with<'a>(&'a self, names: &'a [String]) -> impl fmt::Display + 'a {
        MonomialDisplay { mono: self, names }
    }
}

struct MonomialDisplay<'a> {
    mono: &'a Monomial,
    names: &'a [String],
}

impl fmt::Display for MonomialDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.mono.is_one() {
            return write!(f, "1");
        }
        for (k, &(i, e)) in self.mono.0.iter().enumerate() {
            if k > 0 {
                write!(f, "*")?;
            }
            match self.names.get(i) {
                Some(name) => write!(f, "{name}")?,
                None => write!(f, "x{}", i + 1)?,
            }
            if e > 1 {
                write!(f, "^{e}")?;
            }
        }
        Ok(())
    }
}

/// Graded lexicographic order: total degree first, then the exponent of `x1`,
/// then `x2`, and so on.
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        let (a, b) = (&self.0, &other.0);
        let mut k = 0;
        loop {
            match (a.get(k), b.get(k)) {
                (None, None) => return Ordering::Equal,
                // the other side has a nonzero exponent on a later variable
                (None, Some(_)) => return Ordering::Less,
                (Some(_), None) => return Ordering::Greater,
                (Some(&(i, e)), Some(&(j, f))) => {
                    if i != j {
                        // whichever mentions the earlier variable is larger there
                        return if i < j {
                            Ordering::Greater
                        } else {
                            Ordering::Less
                        };
                    }
                    if e != f {
                        return e.cmp(&f);
                    }
                }
            }
            k += 1;
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All monomials in `nvars` variables of total degree `<= max_degree`, in
/// ascending graded-lex order.
pub fn monomials_up_to(nvars: usize, max_degree: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    let mut exps = vec![0u32; nvars];
    fn rec(var: usize, remaining: u32, exps: &mut Vec<u32>, out: &mut Vec<Monomial>) {
        if var == exps.len() {
            out.push(Monomial::from_exponents(exps));
            return;
        }
        for e in 0..=remaining {
            exps[var] = e;
            rec(var + 1, remaining - e, exps, out);
        }
        exps[var] = 0;
    }
    rec(0, max_degree, &mut exps, &mut out);
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grlex_order() {
        let x1 = Monomial::var(0);
        let x2 = Monomial::var(1);
        let one = Monomial::one();
        let x1x2 = x1.mul(&x2);
        let x2sq = x2.pow(2);
        let x1sq = x1.pow(2);
        assert!(one < x2);
        assert!(x2 < x1);
        assert!(x1 < x2sq);
        assert!(x2sq < x1x2);
        assert!(x1x2 < x1sq);
    }

    #[test]
    fn canonical_sparsity() {
        let m = Monomial::from_exponents(&[0, 2, 0, 1]);
        assert_eq!(m.pairs(), &[(1, 2), (3, 1)]);
        assert_eq!(m.degree(), 3);
        let (c, d) = m.derivative(3).unwrap();
        assert_eq!(c, 1);
        assert_eq!(d.pairs(), &[(1, 2)]);
        assert!(m.derivative(0).is_none());
        assert_eq!(Monomial::from_pairs([(2, 1), (0, 0), (2, 3)]).pairs(), &[(2, 4)]);
    }

    #[test]
    fn enumeration_counts() {
        // C(n + d, d)
        assert_eq!(monomials_up_to(1, 2).len(), 3);
        assert_eq!(monomials_up_to(2, 2).len(), 6);
        assert_eq!(monomials_up_to(3, 3).len(), 20);
        let ms = monomials_up_to(2, 3);
        assert!(ms.windows(2).all(|w| w[0] < w[1]));
    }
}
