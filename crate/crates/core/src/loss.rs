//! Uniform photon loss applied before the circuit. The `k`-photon sectors are
//! mutually orthogonal, so truncating the expansion in powers of `η` simply
//! discards whole sectors.

use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial, factorial, subsets};
use crate::error::{invalid_arg, Error, Result};
use crate::gaussian::check_unit;
use crate::marginal::QuasiValue;
use crate::outcome::OutcomeOrdered;
use crate::permanent::permanent_ryser;
use crate::unitary::UnitaryMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LossSpec {
    Direct { eta: f64 },
    /// Per-layer transmission over `depth` layers, `η = η1^depth`.
    Layered { eta1: f64, depth: u32 },
}

impl LossSpec {
    pub fn eta(&self) -> Result<f64> {
        let eta = match *self {
            LossSpec::Direct { eta } => eta,
            LossSpec::Layered { eta1, depth } => {
                if !(eta1 > 0.0 && eta1 <= 1.0) {
                    return Err(invalid_arg(format!("eta1 = {eta1} outside (0, 1]")));
                }
                eta1.powi(depth as i32)
            }
        };
        check_unit(eta, "eta")?;
        Ok(eta)
    }
}

/// `Σ_{T ⊂ [N], |T| = k} |Per U_{T,z}|²` for the `k` clicked modes `z`.
pub fn sector_permanent_sum(u: &UnitaryMatrix, n: usize, z: &[usize]) -> Result<f64> {
    if n > u.dim() {
        return Err(Error::InvalidDimension(format!("{n} photons in {} modes", u.dim())));
    }
    if z.len() > n {
        return Err(invalid_arg(format!("{} clicks from {n} photons", z.len())));
    }
    let mut s = 0.0;
    for rows in subsets(n, z.len()) {
        s += permanent_ryser(&u.matrix().submatrix(rows.as_slice(), z)?)?.norm_sqr();
    }
    Ok(s)
}

fn check_distinct(r: &[usize]) -> Result<()> {
    let mut s = r.to_vec();
    s.sort_unstable();
    if s.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Unsupported("repeated modes in a lossy outcome".into()));
    }
    Ok(())
}

/// Probability of the unordered click sequence `r` (`k = len(r)` distinct
/// modes): `η^k (1-η)^{N-k} / k! · Σ_T |Per U_{T,r}|²`.
pub fn lossy_prob(u: &UnitaryMatrix, n: usize, r: &[usize], eta: f64) -> Result<f64> {
    check_unit(eta, "eta")?;
    check_distinct(r)?;
    let k = r.len();
    let weight = eta.powi(k as i32) * (1.0 - eta).powi((n - k.min(n)) as i32);
    Ok(weight / factorial(k) as f64 * sector_permanent_sum(u, n, r)?)
}

/// Probability of an ordered click pattern, collisions included:
/// `η^k (1-η)^{N-k} Σ_T |Per U_{T,z}|² / Π m_i!`.
pub fn lossy_prob_ordered(u: &UnitaryMatrix, n: usize, z: &OutcomeOrdered, eta: f64) -> Result<f64> {
    check_unit(eta, "eta")?;
    let k = z.photons();
    let weight = eta.powi(k as i32) * (1.0 - eta).powi((n - k.min(n)) as i32);
    Ok(weight * sector_permanent_sum(u, n, z.positions())? / z.occupation_factorial())
}

/// Truncated sector weight `η^k Σ_{j=0}^{l-k} C(N-k, j)(-η)^j`, zero for `k > l`.
pub fn truncated_prefactor(n: usize, k: usize, eta: f64, l: usize) -> f64 {
    if k > l || k > n {
        return 0.0;
    }
    let tail: f64 = (0..=(l - k).min(n - k))
        .map(|j| binomial(n - k, j) as f64 * (-eta).powi(j as i32))
        .sum();
    eta.powi(k as i32) * tail
}

/// Quasi-probability of `r` when only powers `η^{<=l}` are kept.
pub fn lossy_truncated(u: &UnitaryMatrix, n: usize, r: &[usize], eta: f64, l: usize) -> Result<QuasiValue> {
    check_unit(eta, "eta")?;
    check_distinct(r)?;
    let k = r.len();
    if k > l {
        return Ok(QuasiValue(0.0));
    }
    let pre = truncated_prefactor(n, k, eta, l);
    Ok(QuasiValue(pre / factorial(k) as f64 * sector_permanent_sum(u, n, r)?))
}

/// Ordered-outcome counterpart of [`lossy_truncated`], collisions included.
pub fn lossy_truncated_ordered(u: &UnitaryMatrix, n: usize, z: &OutcomeOrdered, eta: f64, l: usize) -> Result<QuasiValue> {
    check_unit(eta, "eta")?;
    let k = z.photons();
    if k > l {
        return Ok(QuasiValue(0.0));
    }
    let pre = truncated_prefactor(n, k, eta, l);
    Ok(QuasiValue(pre * sector_permanent_sum(u, n, z.positions())? / z.occupation_factorial()))
}

/// Binomial weight of the `k`-photon sector.
pub fn sector_weight(n: usize, k: usize, eta: f64) -> f64 {
    binomial(n, k) as f64 * eta.powi(k as i32) * (1.0 - eta).powi((n - k) as i32)
}

/// Mass of all sectors with more than `l` surviving photons.
pub fn discarded_mass(n: usize, eta: f64, l: usize) -> f64 {
    (l + 1..=n).map(|k| sector_weight(n, k, eta)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBarrierReport {
    pub n: usize,
    pub eta: f64,
    pub l: usize,
    pub discarded_mass: f64,
    pub target: f64,
    /// Smallest cutoff whose discarded mass is at most `target`.
    pub required_l: usize,
    pub mean_photons: f64,
    pub sd_photons: f64,
}

pub fn loss_barrier_report(n: usize, eta: f64, l: usize, target: f64) -> Result<LossBarrierReport> {
    check_unit(eta, "eta")?;
    if l > n {
        return Err(invalid_arg(format!("cutoff l = {l} exceeds N = {n}")));
    }
    if !(target >= 0.0) {
        return Err(invalid_arg("target mass must be non-negative"));
    }
    let required_l = (0..=n).find(|&c| discarded_mass(n, eta, c) <= target).unwrap_or(n);
    let nf = n as f64;
    Ok(LossBarrierReport {
        n,
        eta,
        l,
        discarded_mass: discarded_mass(n, eta, l),
        target,
        required_l,
        mean_photons: nf * eta,
        sd_photons: (nf * eta * (1.0 - eta)).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::exact_prob;
    use crate::rng::RngStream;
    use crate::unitary::haar_unitary;

    #[test]
    fn anchors() {
        let u = haar_unitary(6, &RngStream::new(1)).unwrap();
        let n = 3;
        let z = OutcomeOrdered::new(6, vec![0, 2, 5]).unwrap();
        let p = lossy_prob(&u, n, &[5, 0, 2], 1.0).unwrap();
        assert!((p - exact_prob(&u, &z).unwrap() / 6.0).abs() < 1e-15);
        let vac = lossy_prob(&u, n, &[], 0.3).unwrap();
        assert!((vac - 0.7f64.powi(3)).abs() < 1e-15);
        assert!(matches!(lossy_prob(&u, n, &[1, 1], 0.5), Err(Error::Unsupported(_))));
    }

    #[test]
    fn full_cutoff_is_exact() {
        let u = haar_unitary(7, &RngStream::new(2)).unwrap();
        for r in [&[][..], &[3][..], &[1, 4][..], &[0, 2, 6][..]] {
            let a = lossy_prob(&u, 3, r, 0.45).unwrap();
            let b = lossy_truncated(&u, 3, r, 0.45, 3).unwrap().value();
            assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        }
        assert_eq!(lossy_truncated(&u, 3, &[0, 1], 0.45, 1).unwrap().value(), 0.0);
    }

    #[test]
    fn discarded_mass_examples() {
        assert!((discarded_mass(3, 0.9, 1) - 0.972).abs() < 1e-12);
        assert!((discarded_mass(10, 0.5, 5) - 386.0 / 1024.0).abs() < 1e-15);
        assert!((discarded_mass(6, 1.0, 4) - 1.0).abs() < 1e-15);
        assert_eq!(discarded_mass(6, 0.0, 2), 0.0);
    }

    #[test]
    fn barrier_report_moments() {
        let r = loss_barrier_report(20, 0.5, 5, 0.01).unwrap();
        assert_eq!(r.mean_photons, 10.0);
        assert!((r.sd_photons - 5f64.sqrt()).abs() < 1e-12);
        assert!(r.required_l as f64 >= r.mean_photons);
        assert!(discarded_mass(20, 0.5, r.required_l) <= 0.01);
        assert!(discarded_mass(20, 0.5, r.required_l - 1) > 0.01);
    }

    #[test]
    fn layered_eta() {
        let e = LossSpec::Layered { eta1: 0.9, depth: 4 }.eta().unwrap();
        assert!((e - 0.9f64.powi(4)).abs() < 1e-15);
        assert!(LossSpec::Direct { eta: 1.2 }.eta().is_err());
    }
}
