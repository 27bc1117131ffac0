//! Haar-random unitaries, complex Ginibre ensembles and the rescaled
//! input block consumed by the polynomial evaluators.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::rng::RngStream;

/// Per-entry tolerance for `U·U† = I`.
pub const UNITARITY_TOL: f64 = 1e-9;

/// An `M×M` unitary circuit matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix {
    matrix: ComplexMatrix,
}

impl UnitaryMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.rows() == 0 {
            return Err(Error::InvalidDimension(format!(
                "unitary must be square and non-empty, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        let dev = unitarity_defect(&matrix);
        if dev > UNITARITY_TOL {
            return Err(Error::Invariant(format!("U·U† deviates from identity by {dev:e}")));
        }
        Ok(Self { matrix })
    }

    pub fn identity(m: usize) -> Result<Self> {
        Self::new(ComplexMatrix::identity(m))
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.matrix.get(i, j)
    }

    /// `√M` times the first `n` rows.
    pub fn rescaled_rows(&self, n: usize) -> Result<RescaledInputMatrix> {
        RescaledInputMatrix::from_unitary(self, n)
    }

    /// `U_{N,cols}`: the first `n` rows restricted to `cols`.
    pub fn input_block(&self, n: usize, cols: &[usize]) -> Result<ComplexMatrix> {
        if n > self.dim() {
            return Err(Error::InvalidDimension(format!("{n} photons in {} modes", self.dim())));
        }
        let rows: Vec<usize> = (0..n).collect();
        self.matrix.submatrix(&rows, cols)
    }
}

/// Largest entry-wise deviation of `A·A†` from the identity.
pub fn unitarity_defect(a: &ComplexMatrix) -> f64 {
    let prod = a.matmul(&a.adjoint()).expect("square");
    prod.max_abs_diff(&ComplexMatrix::identity(a.rows()))
}

impl Serialize for UnitaryMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.matrix.serialize(s)
    }
}

impl<'de> Deserialize<'de> for UnitaryMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = ComplexMatrix::deserialize(d)?;
        UnitaryMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

/// The `N×M` block `z_{i,r} = √M·U_{i,r}` for the `N` occupied input modes.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledInputMatrix {
    n: usize,
    m: usize,
    matrix: ComplexMatrix,
}

impl RescaledInputMatrix {
    pub fn from_unitary(u: &UnitaryMatrix, n: usize) -> Result<Self> {
        let m = u.dim();
        if n == 0 || n > m {
            return Err(Error::InvalidDimension(format!("need 1 <= N <= M, got N={n}, M={m}")));
        }
        let s = (m as f64).sqrt();
        let matrix = ComplexMatrix::from_fn(n, m, |i, r| u.get(i, r) * s);
        Ok(Self { n, m, matrix })
    }

    pub fn photons(&self) -> usize {
        self.n
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    #[inline]
    pub fn get(&self, row: usize, mode: usize) -> Complex64 {
        self.matrix.get(row, mode)
    }

    /// The `N×len(cols)` block `Z` selected by output modes.
    pub fn columns(&self, cols: &[usize]) -> Result<ComplexMatrix> {
        let rows: Vec<usize> = (0..self.n).collect();
        self.matrix.submatrix(&rows, cols)
    }
}

/// Complex Ginibre matrix with `E[z] = 0` and `E|z|² = variance`; real and
/// imaginary parts are independent normals of variance `variance/2`.
pub fn ginibre(rows: usize, cols: usize, variance: f64, rng: &RngStream) -> Result<ComplexMatrix> {
    let mut r = rng.rng();
    ginibre_from(rows, cols, variance, &mut r)
}

pub(crate) fn ginibre_from<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::InvalidArgument(format!("variance must be positive, got {variance}")));
    }
    let sd = (variance / 2.0).sqrt();
    Ok(ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * sd, im * sd)
    }))
}

/// Haar-distributed `M×M` unitary: Gram–Schmidt QR of a complex Ginibre
/// matrix, which leaves the triangular factor with a real positive diagonal.
pub fn haar_unitary(m: usize, rng: &RngStream) -> Result<UnitaryMatrix> {
    if m == 0 {
        return Err(Error::InvalidDimension("M must be at least 1".into()));
    }
    let g = ginibre(m, m, 1.0, rng)?;
    let mut cols: Vec<Vec<Complex64>> = (0..m).map(|j| (0..m).map(|i| g.get(i, j)).collect()).collect();
    for j in 0..m {
        // two passes of modified Gram-Schmidt keep the residual at machine precision
        for _ in 0..2 {
            for k in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let q = &done[k];
                let v = &mut rest[0];
                let proj: Complex64 = q.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
        }
        let norm = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in cols[j].iter_mut() {
            *z /= norm;
        }
    }
    let q = ComplexMatrix::from_fn(m, m, |i, j| cols[j][i]);
    UnitaryMatrix::new(q)
}
