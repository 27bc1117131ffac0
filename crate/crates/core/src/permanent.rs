//! Matrix permanents: a direct permutation sum used as an oracle, and Ryser's
//! inclusion–exclusion formula with Gray-code subset order.

use num_complex::Complex64;

use crate::combinatorics::next_permutation;
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;

/// Largest order accepted by [`permanent_naive`].
pub const NAIVE_MAX_ORDER: usize = 9;

fn require_square(a: &ComplexMatrix) -> Result<usize> {
    if !a.is_square() {
        return Err(Error::Size(format!("permanent of a {}x{} matrix", a.rows(), a.cols())));
    }
    Ok(a.rows())
}

/// `Σ_σ Π_i A[σ(i), i]` by explicit enumeration of `S_n`.
pub fn permanent_naive(a: &ComplexMatrix) -> Result<Complex64> {
    let n = require_square(a)?;
    if n > NAIVE_MAX_ORDER {
        return Err(Error::Size(format!("naive permanent limited to n <= {NAIVE_MAX_ORDER}, got {n}")));
    }
    let mut sigma: Vec<usize> = (0..n).collect();
    let mut total = Complex64::new(0.0, 0.0);
    loop {
        let mut term = Complex64::new(1.0, 0.0);
        for (i, &s) in sigma.iter().enumerate() {
            term *= a.get(s, i);
        }
        total += term;
        if !next_permutation(&mut sigma) {
            break;
        }
    }
    Ok(total)
}

/// Ryser's formula, `O(2^n · n)`. The permanent of the `0×0` matrix is 1.
pub fn permanent_ryser(a: &ComplexMatrix) -> Result<Complex64> {
    let n = require_square(a)?;
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    if n >= 63 {
        return Err(Error::Size(format!("Ryser permanent of order {n} is out of reach")));
    }
    let mut row_sums = vec![Complex64::new(0.0, 0.0); n];
    let mut in_set = vec![false; n];
    let mut total = Complex64::new(0.0, 0.0);
    let mut set_size = 0usize;
    for g in 1u64..(1u64 << n) {
        let j = g.trailing_zeros() as usize;
        if in_set[j] {
            for (i, s) in row_sums.iter_mut().enumerate() {
                *s -= a.get(i, j);
            }
            set_size -= 1;
        } else {
            for (i, s) in row_sums.iter_mut().enumerate() {
                *s += a.get(i, j);
            }
            set_size += 1;
        }
        in_set[j] = !in_set[j];
        let prod: Complex64 = row_sums.iter().product();
        if (n - set_size).is_multiple_of(2) {
            total += prod;
        } else {
            total -= prod;
        }
    }
    Ok(total)
}
