//! Dense complex matrices in row-major order.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major entries, rejecting non-finite values.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Size(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Invariant(format!("entry {pos} is not finite")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Size("ragged rows".into()));
        }
        Self::from_row_major(r, c, rows.concat())
    }

    /// Real matrix convenience constructor, mostly for tests.
    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::from_row_major(rows, cols, data.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    /// Entry-wise `a·self + b·other`.
    pub fn axpby(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Size(format!(
                "shape mismatch {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(x, y)| x * a + y * b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    /// Entry-wise squared modulus as a complex matrix with zero imaginary parts.
    pub fn abs_sq(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| Complex64::new(z.norm_sqr(), 0.0)).collect(),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Size(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Rows `row_idx` and columns `col_idx`; indices may repeat.
    pub fn submatrix(&self, row_idx: &[usize], col_idx: &[usize]) -> Result<Self> {
        if let Some(&i) = row_idx.iter().find(|&&i| i >= self.rows) {
            return Err(Error::Index { index: i, extent: self.rows });
        }
        if let Some(&j) = col_idx.iter().find(|&&j| j >= self.cols) {
            return Err(Error::Index { index: j, extent: self.cols });
        }
        Ok(Self::from_fn(row_idx.len(), col_idx.len(), |i, j| self.get(row_idx[i], col_idx[j])))
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Wire form: `{"rows": R, "cols": C, "data": [[re, im], ...]}`.
#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(d)?;
        let data = repr.data.into_iter().map(|[re, im]| Complex64::new(re, im)).collect();
        ComplexMatrix::from_row_major(repr.rows, repr.cols, data).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn submatrix_identity_block() {
        let id = ComplexMatrix::identity(3);
        assert_eq!(id.submatrix(&[0, 1], &[0, 1]).unwrap(), ComplexMatrix::identity(2));
    }

    #[test]
    fn submatrix_duplicates_columns() {
        let a = ComplexMatrix::from_real(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let s = a.submatrix(&[0], &[2, 2]).unwrap();
        assert_eq!((s.rows(), s.cols()), (1, 2));
        assert_eq!(s[(0, 0)], Complex64::new(3.0, 0.0));
        assert_eq!(s[(0, 1)], Complex64::new(3.0, 0.0));
    }

    #[test]
    fn submatrix_empty_and_out_of_range() {
        let a = ComplexMatrix::identity(3);
        let e = a.submatrix(&[], &[]).unwrap();
        assert_eq!((e.rows(), e.cols()), (0, 0));
        assert!(matches!(a.submatrix(&[3], &[0]), Err(Error::Index { index: 3, extent: 3 })));
        assert!(matches!(a.submatrix(&[0], &[7]), Err(Error::Index { index: 7, .. })));
    }

    #[test]
    fn rejects_non_finite() {
        let r = ComplexMatrix::from_real(1, 1, &[f64::NAN]);
        assert!(matches!(r, Err(Error::Invariant(_))));
    }

    #[test]
    fn json_shape() {
        let m = ComplexMatrix::from_row_major(1, 2, vec![Complex64::new(0.5, -1.0), Complex64::new(0.0, 2.0)])
            .unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["rows"], 1);
        assert_eq!(v["cols"], 2);
        assert_eq!(v["data"][0][1], -1.0);
        let back: ComplexMatrix = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
