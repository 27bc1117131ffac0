//! Partial distinguishability: every pair of permutation paths that disagree
//! on `d` photons picks up a factor `x^d`.
//!
//! Only the exact small-`N` evaluator, the degree decomposition in the
//! `{1, |z|², z·z'*}` basis and its second moments are constructive here;
//! no truncated sampler exists for this model (see [`barrier_report`]).

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial, derangements, factorial, next_permutation, subsets};
use crate::error::{invalid_arg, Error, Result};
use crate::gaussian::{check_unit, cutoff_from_bound};
use crate::matrix::ComplexMatrix;
use crate::outcome::{OutcomeOrdered, OutcomeUnordered};
use crate::permanent::permanent_ryser;
use crate::unitary::UnitaryMatrix;

/// Largest photon number for the `O((N!)²)` evaluators.
pub const DIST_MAX_PHOTONS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistinguishabilitySpec {
    /// 1 = fully indistinguishable, 0 = fully distinguishable.
    pub x: f64,
}

impl DistinguishabilitySpec {
    pub fn new(x: f64) -> Result<Self> {
        check_unit(x, "x")?;
        Ok(Self { x })
    }
}

fn check_size(n: usize) -> Result<()> {
    if n > DIST_MAX_PHOTONS {
        return Err(Error::Size(format!("brute force limited to N <= {DIST_MAX_PHOTONS}, got {n}")));
    }
    Ok(())
}

/// `Σ_{σ,ρ} x^{#{i: σ(i) ≠ ρ(i)}} Π_i U_{σ(i),z_i} U*_{ρ(i),z_i}`.
pub fn dist_prob_exact(u: &UnitaryMatrix, z: &OutcomeOrdered, x: f64) -> Result<f64> {
    check_unit(x, "x")?;
    let n = z.photons();
    check_size(n)?;
    let block = u.input_block(n, z.positions())?;
    let v = dist_sum(&block, x);
    let scale = v.norm().max(1e-300);
    if v.im.abs() > 1e-12 * scale.max(1.0) {
        return Err(Error::Invariant(format!("distinguishability sum not real: {v}")));
    }
    Ok(v.re)
}

fn dist_sum(block: &ComplexMatrix, x: f64) -> Complex64 {
    let n = block.rows();
    let xp: Vec<f64> = (0..=n).map(|d| x.powi(d as i32)).collect();
    let mut sigma: Vec<usize> = (0..n).collect();
    let mut total = Complex64::new(0.0, 0.0);
    loop {
        let mut rho: Vec<usize> = (0..n).collect();
        loop {
            let mut term = Complex64::new(1.0, 0.0);
            let mut disagree = 0;
            for i in 0..n {
                term *= block.get(sigma[i], i) * block.get(rho[i], i).conj();
                disagree += usize::from(sigma[i] != rho[i]);
            }
            total += term * xp[disagree];
            if !next_permutation(&mut rho) {
                break;
            }
        }
        if !next_permutation(&mut sigma) {
            break;
        }
    }
    total
}

/// Degree-`(N-k)` part: `k` agreeing columns contribute `|z|²` (degree 0),
/// the remaining `N-k` columns pair two different rows (`z·z'*`, degree 1).
pub fn f_dist_eval(z: &ComplexMatrix, k: usize) -> Result<Complex64> {
    if !z.is_square() {
        return Err(Error::Size(format!("square block required, got {}x{}", z.rows(), z.cols())));
    }
    let n = z.rows();
    check_size(n)?;
    if k > n {
        return Err(invalid_arg(format!("k = {k} outside [0, {n}]")));
    }
    let abs = z.abs_sq();
    let mut total = Complex64::new(0.0, 0.0);
    for cols_t in subsets(n, k) {
        let free_cols = cols_t.complement();
        for rows_t in subsets(n, k) {
            let free_rows = rows_t.complement();
            // Σ over σ: T → T' of Π |z|² is a permanent of the |Z|² block
            let fixed = permanent_ryser(&abs.submatrix(rows_t.as_slice(), cols_t.as_slice())?)?;
            if fixed == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mut sigma = free_rows.as_slice().to_vec();
            let mut moving = Complex64::new(0.0, 0.0);
            loop {
                let mut rho = free_rows.as_slice().to_vec();
                loop {
                    if sigma.iter().zip(&rho).all(|(a, b)| a != b) {
                        let mut term = Complex64::new(1.0, 0.0);
                        for (t, &c) in free_cols.as_slice().iter().enumerate() {
                            term *= z.get(sigma[t], c) * z.get(rho[t], c).conj();
                        }
                        moving += term;
                    }
                    if !next_permutation(&mut rho) {
                        break;
                    }
                }
                if !next_permutation(&mut sigma) {
                    break;
                }
            }
            total += fixed * moving;
        }
    }
    Ok(total)
}

/// Closed-form `E_Z |f_dist_{N,k}|²` over unit complex Gaussian `Z`:
/// `C(N,k)² (N-k)! !(N-k) Σ_j C(k,j)² j! (k-j)! !(k-j) 2^j`.
pub fn dist_norm_formula(n: usize, k: usize) -> Result<f64> {
    if k > n {
        return Err(invalid_arg(format!("k = {k} outside [0, {n}]")));
    }
    Ok(dist_norm_exact(n, k) as f64)
}

pub(crate) fn dist_norm_exact(n: usize, k: usize) -> u128 {
    let inner: u128 = (0..=k)
        .map(|j| binomial(k, j).pow(2) * factorial(j) * factorial(k - j) * derangements(k - j) * (1u128 << j))
        .sum();
    binomial(n, k).pow(2) * factorial(n - k) * derangements(n - k) * inner
}

/// Cutoff for the distinguishability bound `2e√N·x^{l+1}/√δ <= ε`.
pub fn dist_cutoff(n: usize, x: f64, eps: f64, delta: f64) -> Result<usize> {
    cutoff_from_bound(n, x, eps, delta, 2.0 * std::f64::consts::E)
}

/// Fully distinguishable photons: photon `i` lands in mode `r` with
/// probability `|U_{i,r}|²`, independently of the others.
pub fn distinguishable_sampler<R: Rng + ?Sized>(u: &UnitaryMatrix, n: usize, rng: &mut R) -> Result<OutcomeUnordered> {
    if n > u.dim() {
        return Err(Error::InvalidDimension(format!("{n} photons in {} modes", u.dim())));
    }
    let m = u.dim();
    let mut r = Vec::with_capacity(n);
    for i in 0..n {
        let probs: Vec<f64> = (0..m).map(|c| u.get(i, c).norm_sqr()).collect();
        let total: f64 = probs.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut cum = 0.0;
        let mut pick = m - 1;
        for (c, p) in probs.iter().enumerate() {
            cum += p;
            if target < cum {
                pick = c;
                break;
            }
        }
        r.push(pick);
    }
    OutcomeUnordered::new(m, r)
}

/// Exact ordered-outcome probability of the fully distinguishable sampler:
/// `Per(|U_{N,z}|²) / Π m_i!`.
pub fn distinguishable_prob(u: &UnitaryMatrix, z: &OutcomeOrdered) -> Result<f64> {
    let block = u.input_block(z.photons(), z.positions())?.abs_sq();
    Ok(permanent_ryser(&block)?.re / z.occupation_factorial())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BarrierEntry {
    pub n: usize,
    pub k: usize,
    /// Product terms in the degree-`(N-k)` part.
    pub summands: u128,
    pub n_factorial: u128,
}

impl BarrierEntry {
    /// Degree `N-k = 1` is identically zero: a single moving photon cannot be
    /// deranged.
    pub fn vanishes(&self) -> bool {
        self.summands == 0
    }
}

/// Term count `C(N,k)² k! (N-k)! !(N-k)` of the degree-`(N-k)` part.
pub fn barrier_report(n: usize, k: usize) -> Result<BarrierEntry> {
    if k > n {
        return Err(invalid_arg(format!("k = {k} outside [0, {n}]")));
    }
    let summands = binomial(n, k).pow(2) * factorial(k) * factorial(n - k) * derangements(n - k);
    Ok(BarrierEntry { n, k, summands, n_factorial: factorial(n) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::unitary::{ginibre, haar_unitary};

    fn haar(m: usize, seed: u64) -> UnitaryMatrix {
        haar_unitary(m, &RngStream::new(seed)).unwrap()
    }

    #[test]
    fn anchors() {
        let u = haar(7, 1);
        let z = OutcomeOrdered::new(7, vec![0, 2, 5]).unwrap();
        let p1 = dist_prob_exact(&u, &z, 1.0).unwrap();
        let per = permanent_ryser(&u.input_block(3, z.positions()).unwrap()).unwrap().norm_sqr();
        assert!((p1 - per).abs() <= 1e-12 * per);
        let p0 = dist_prob_exact(&u, &z, 0.0).unwrap();
        let d = distinguishable_prob(&u, &z).unwrap();
        assert!((p0 - d).abs() <= 1e-12 * d);
        let mid = dist_prob_exact(&u, &z, 0.4).unwrap();
        assert!(mid >= -1e-12);
    }

    #[test]
    fn single_moving_photon_vanishes() {
        for seed in 0..5 {
            let z = ginibre(2, 2, 1.0, &RngStream::new(seed)).unwrap();
            assert_eq!(f_dist_eval(&z, 1).unwrap(), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn decomposition_matches_brute_force() {
        for n in 1..=4 {
            let z = ginibre(n, n, 1.0, &RngStream::new(40 + n as u64)).unwrap();
            for x in [0.0, 0.35, 1.0] {
                let brute = dist_sum(&z, x);
                let parts: Complex64 =
                    (0..=n).map(|k| f_dist_eval(&z, k).unwrap() * x.powi((n - k) as i32)).sum();
                assert!((brute - parts).norm() <= 1e-9 * brute.norm(), "n={n} x={x}");
            }
        }
    }

    #[test]
    fn norm_formula_values() {
        let v: Vec<f64> = (0..=2).map(|k| dist_norm_formula(2, k).unwrap()).collect();
        assert_eq!(v, vec![2.0, 0.0, 10.0]);
        assert_eq!(dist_norm_formula(1, 1).unwrap(), 2.0);
        // Σ_k equals E|Per Z|⁴ = (N!)²(N+1)
        for n in 1..=8 {
            let s: u128 = (0..=n).map(|k| dist_norm_exact(n, k)).sum();
            assert_eq!(s, factorial(n).pow(2) * (n as u128 + 1), "n={n}");
        }
        let e2 = std::f64::consts::E.powi(2);
        for n in 0..=8 {
            for k in 0..=n {
                assert!(dist_norm_formula(n, k).unwrap() <= e2 * (factorial(n).pow(2) as f64));
            }
        }
    }

    #[test]
    fn dist_cutoff_examples() {
        let g = crate::gaussian::select_cutoff(16, 0.5, 0.1, 0.1).unwrap();
        let d = dist_cutoff(16, 0.5, 0.1, 0.1).unwrap();
        // the factor e shifts the real-valued bound by ln(e)/ln(1/x) = 1/ln 2
        let raw = ((2.0 * std::f64::consts::E * 4.0) / (0.1 * 0.1f64.sqrt())).ln() / 2f64.ln() - 1.0;
        assert_eq!(d, raw.ceil() as usize);
        assert!(d >= g);
        assert_eq!(dist_cutoff(5, 0.999_999, 0.01, 0.1).unwrap(), 5);
        assert_eq!(dist_cutoff(5, 0.5, 1e6, 0.1).unwrap(), 0);
    }

    #[test]
    fn sampler_single_photon_row() {
        let u = haar(4, 9);
        let mut rng = RngStream::new(2).rng();
        let mut counts = [0usize; 4];
        let n = 40_000;
        for _ in 0..n {
            counts[distinguishable_sampler(&u, 1, &mut rng).unwrap().positions()[0]] += 1;
        }
        for (c, &k) in counts.iter().enumerate() {
            let p = u.get(0, c).norm_sqr();
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((k as f64 / n as f64 - p).abs() <= 4.0 * sd + 1e-12);
        }
    }

    #[test]
    fn barrier_counts() {
        assert_eq!(barrier_report(3, 3).unwrap().summands, 6);
        assert_eq!(barrier_report(3, 0).unwrap().summands, 12);
        let e = barrier_report(4, 3).unwrap();
        assert!(e.vanishes());
        for k in [0, 1, 2, 4] {
            assert!(barrier_report(4, k).unwrap().summands >= 24);
        }
    }
}
