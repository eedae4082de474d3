use nalgebra::DMatrix;

use super::polynomial::Polynomial;
use super::PolyError;

/// Dense matrix whose entries are polynomials over a common ring.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPolynomial {
    rows: usize,
    cols: usize,
    nvars: usize,
    entries: Vec<Polynomial>,
}

impl MatrixPolynomial {
    pub fn zeros(rows: usize, cols: usize, nvars: usize) -> Self {
        MatrixPolynomial {
            rows,
            cols,
            nvars,
            entries: vec![Polynomial::zero(nvars); rows * cols],
        }
    }

    /// Builds a matrix from rows of equal length.
    pub fn from_rows(rows: Vec<Vec<Polynomial>>) -> Result<Self, PolyError> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let nvars = rows
            .first()
            .and_then(|r| r.first())
            .map_or(0, Polynomial::nvars);
        let mut entries = Vec::with_capacity(nrows * ncols);
        for row in rows {
            if row.len() != ncols {
                return Err(PolyError::DimensionMismatch {
                    expected: ncols,
                    got: row.len(),
                });
            }
            for p in row {
                if p.nvars() != nvars {
                    return Err(PolyError::VarCountMismatch {
                        left: nvars,
                        right: p.nvars(),
                    });
                }
                entries.push(p);
            }
        }
        Ok(MatrixPolynomial {
            rows: nrows,
            cols: ncols,
            nvars,
            entries,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn get(&self, i: usize, j: usize) -> &Polynomial {
        &self.entries[i * self.cols + j]
    }

    /// # Panics
    ///
    /// Panics if `p` lives in a different ring than the matrix.
    pub fn set(&mut self, i: usize, j: usize, p: Polynomial) {
        assert_eq!(p.nvars(), self.nvars);
        self.entries[i * self.cols + j] = p;
    }

    pub fn row(&self, i: usize) -> &[Polynomial] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows, self.nvars);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j).clone());
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, PolyError> {
        if self.cols != other.rows {
            return Err(PolyError::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        if self.nvars != other.nvars {
            return Err(PolyError::VarCountMismatch {
                left: self.nvars,
                right: other.nvars,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols, self.nvars);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = Polynomial::zero(self.nvars);
                for k in 0..self.cols {
                    let (a, b) = (self.get(i, k), other.get(k, j));
                    if !a.is_zero() && !b.is_zero() {
                        acc = acc + a * b;
                    }
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    /// `FᵀF`.
    pub fn gram(&self) -> Self {
        self.transpose()
            .matmul(self)
            .expect("transpose always conforms")
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, PolyError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(PolyError::DimensionMismatch {
                expected: self.rows * self.cols,
                got: other.rows * other.cols,
            });
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.checked_sub(b))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MatrixPolynomial {
            rows: self.rows,
            cols: self.cols,
            nvars: self.nvars,
            entries,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        MatrixPolynomial {
            rows: self.rows,
            cols: self.cols,
            nvars: self.nvars,
            entries: self.entries.iter().map(|p| p.scale(s)).collect(),
        }
    }

    /// Stacks blocks vertically; all blocks need the same column count.
    pub fn vstack(blocks: &[MatrixPolynomial]) -> Result<Self, PolyError> {
        let first = blocks.first().ok_or(PolyError::DimensionMismatch {
            expected: 1,
            got: 0,
        })?;
        let mut rows = Vec::new();
        for b in blocks {
            if b.cols != first.cols {
                return Err(PolyError::DimensionMismatch {
                    expected: first.cols,
                    got: b.cols,
                });
            }
            for i in 0..b.rows {
                rows.push(b.row(i).to_vec());
            }
        }
        Self::from_rows(rows)
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Largest entry-wise l1 norm.
    pub fn max_entry_l1(&self) -> f64 {
        self.entries.iter().map(Polynomial::l1_norm).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Polynomial::is_zero)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<DMatrix<f64>, PolyError> {
        if x.len() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                got: x.len(),
            });
        }
        Ok(DMatrix::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j).eval_unchecked(x)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_of_column() {
        let f = MatrixPolynomial::from_rows(vec![vec![
            Polynomial::parse("x1", 2).unwrap(),
            Polynomial::parse("x2", 2).unwrap(),
        ]])
        .unwrap();
        let g = f.gram();
        assert_eq!(g.rows(), 2);
        assert_eq!(g.get(0, 1), &Polynomial::parse("x1*x2", 2).unwrap());
        assert!(g.is_symmetric());
        let v = g.evaluate(&[2.0, 3.0]).unwrap();
        assert_eq!(v[(1, 1)], 9.0);
    }

    #[test]
    fn ragged_rows_rejected() {
        let r = MatrixPolynomial::from_rows(vec![
            vec![Polynomial::zero(1)],
            vec![Polynomial::zero(1), Polynomial::zero(1)],
        ]);
        assert!(r.is_err());
    }
}
