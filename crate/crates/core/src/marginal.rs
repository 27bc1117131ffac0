//! Truncated first-quantized marginals, collision-value assignment and the
//! sequential quasi-probability sampler.
//!
//! The marginal of the degree-truncated distribution over the first `j`
//! photon positions is
//!
//! ```text
//! q̄(r_1..r_j) = (N-j)!/N! · M^{-j} · Σ_{k=max(0,j-l)}^{j} x^{j-k} g_{j,k}(r_1..r_j)
//! ```
//!
//! where `g_{j,k}` collects the products of `j-k` non-constant factors
//! (`h₂(z) = |z|²-1` on agreeing rows, `z·z'*` otherwise). Summing a
//! trailing position over all `M` modes annihilates every non-constant
//! factor because the rows of `√M·U` are exactly orthogonal, which is what
//! makes these marginals telescope.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::combinatorics::{falling_ratio, next_combination, next_permutation};
use crate::error::{invalid_arg, Error, Result};
use crate::outcome::{Distribution, OutcomeKey};
use crate::rng::RngStream;
use crate::unitary::RescaledInputMatrix;

/// Degree-`2(j-k)` part for the output modes `cols` of an `N×·` rescaled
/// block. With `cols.len() == N` this is the full-probability part `f`.
///
/// Sums over the `j-k` non-constant positions `A ⊂ [j]`, row sets
/// `K' ⊂ [N]` with `|K'| = j-k`, and pairs of bijections `A → K'`. Every
/// term carries the weight `(N-j+k)!/(N-j)!`, the number of ways to complete
/// the constant positions with rows outside `K'`.
pub(crate) fn degree_part(z: &crate::matrix::ComplexMatrix, cols: &[usize], k: usize) -> Result<Complex64> {
    let n = z.rows();
    let j = cols.len();
    if j > n {
        return Err(invalid_arg(format!("prefix of length {j} exceeds N = {n}")));
    }
    if k > j {
        return Err(invalid_arg(format!("degree index k = {k} exceeds prefix length {j}")));
    }
    if let Some(&c) = cols.iter().find(|&&c| c >= z.cols()) {
        return Err(Error::Index { index: c, extent: z.cols() });
    }
    let weight = falling_ratio(n - j + k, n - j);
    let d = j - k;
    if d == 0 {
        return Ok(Complex64::new(weight, 0.0));
    }

    // local[t * n + a] = z_{a, cols[t]}
    let local: Vec<Complex64> = cols.iter().flat_map(|&c| (0..n).map(move |a| z.get(a, c))).collect();

    let mut total = Complex64::new(0.0, 0.0);
    let mut active: Vec<usize> = (0..d).collect();
    let mut rows: Vec<usize> = (0..d).collect();
    let mut sigma = vec![0usize; d];
    let mut rho = vec![0usize; d];
    loop {
        rows.iter_mut().enumerate().for_each(|(t, r)| *r = t);
        loop {
            sigma.copy_from_slice(&rows);
            loop {
                rho.copy_from_slice(&rows);
                loop {
                    let mut term = Complex64::new(1.0, 0.0);
                    for t in 0..d {
                        let base = active[t] * n;
                        let (a, b) = (sigma[t], rho[t]);
                        term *= if a == b {
                            Complex64::new(local[base + a].norm_sqr() - 1.0, 0.0)
                        } else {
                            local[base + a] * local[base + b].conj()
                        };
                    }
                    total += term;
                    if !next_permutation(&mut rho) {
                        break;
                    }
                }
                if !next_permutation(&mut sigma) {
                    break;
                }
            }
            if !next_combination(&mut rows, n) {
                break;
            }
        }
        if !next_combination(&mut active, j) {
            break;
        }
    }
    Ok(total * weight)
}

/// `g^{=2(j-k)}` evaluated on the output modes `prefix`.
pub fn g_eval(z: &RescaledInputMatrix, prefix: &[usize], k: usize) -> Result<Complex64> {
    degree_part(z.matrix(), prefix, k)
}

/// Number of product terms `g_eval` sums for given `(N, j, k)`.
pub fn g_term_count(n: usize, j: usize, k: usize) -> u128 {
    use crate::combinatorics::{binomial, factorial};
    let d = j - k;
    binomial(j, d) * binomial(n, d) * factorial(d).pow(2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalQuery {
    pub prefix: Vec<usize>,
    pub x: f64,
    pub cutoff: usize,
}

/// A possibly negative value of the truncated quasi-distribution.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct QuasiValue(pub f64);

impl QuasiValue {
    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_x(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(invalid_arg(format!("noise parameter x = {x} outside [0, 1]")));
    }
    Ok(())
}

fn has_repeat(prefix: &[usize]) -> bool {
    first_repeat(prefix).is_some()
}

/// Position of the first entry that repeats an earlier one.
fn first_repeat(prefix: &[usize]) -> Option<usize> {
    (1..prefix.len()).find(|&t| prefix[..t].contains(&prefix[t]))
}

/// The truncated marginal formula applied verbatim, including to prefixes
/// with repeated modes (where it is the polynomial extension rather than a
/// physical probability).
pub fn qbar_raw(z: &RescaledInputMatrix, prefix: &[usize], x: f64, cutoff: usize) -> Result<f64> {
    check_x(x)?;
    let n = z.photons();
    let j = prefix.len();
    if j > n {
        return Err(invalid_arg(format!("prefix of length {j} exceeds N = {n}")));
    }
    let mut acc = 0.0;
    for k in j.saturating_sub(cutoff)..=j {
        acc += x.powi((j - k) as i32) * degree_part(z.matrix(), prefix, k)?.re;
    }
    let scale = 1.0 / falling_ratio(n, n - j) / (z.modes() as f64).powi(j as i32);
    Ok(acc * scale)
}

/// Truncated marginal `q̄(r_1..r_j)` for a collision-free prefix.
pub fn qbar_marginal(z: &RescaledInputMatrix, query: &MarginalQuery) -> Result<QuasiValue> {
    if has_repeat(&query.prefix) {
        return Err(invalid_arg("prefix has repeated modes; use collision_oracle"));
    }
    qbar_raw(z, &query.prefix, query.x, query.cutoff).map(QuasiValue)
}

/// How values are assigned to prefixes containing a repeated mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CollisionRule {
    /// Leftover mass `q̄(prefix) - Σ_fresh q̄(prefix, r)` split equally among
    /// the modes already present, so that children always sum to the parent.
    Leftover,
    /// The truncated polynomial formula evaluated on the repeated prefix.
    Raw,
    /// Collision prefixes receive zero.
    Zero,
}

/// Marginal oracle over the full outcome tree `[M]^j`, `j <= N`.
#[derive(Debug, Clone)]
pub struct MarginalOracle {
    z: RescaledInputMatrix,
    x: f64,
    cutoff: usize,
    rule: CollisionRule,
}

impl MarginalOracle {
    pub fn new(z: RescaledInputMatrix, x: f64, cutoff: usize, rule: CollisionRule) -> Result<Self> {
        check_x(x)?;
        if cutoff > z.photons() {
            return Err(invalid_arg(format!("cutoff l = {cutoff} exceeds N = {}", z.photons())));
        }
        if rule == CollisionRule::Leftover && cutoff == 0 {
            return Err(Error::Unsupported("collision leftovers require a cutoff l >= 1".into()));
        }
        Ok(Self { z, x, cutoff, rule })
    }

    pub fn photons(&self) -> usize {
        self.z.photons()
    }

    pub fn modes(&self) -> usize {
        self.z.modes()
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn noise(&self) -> f64 {
        self.x
    }

    pub fn rule(&self) -> CollisionRule {
        self.rule
    }

    pub fn rescaled(&self) -> &RescaledInputMatrix {
        &self.z
    }

    /// Marginal of a collision-free prefix.
    pub fn marginal(&self, prefix: &[usize]) -> Result<f64> {
        qbar_raw(&self.z, prefix, self.x, self.cutoff)
    }

    /// Values of all `M` one-step extensions of a collision-free `prefix`
    /// whose own marginal is `parent`. Costs exactly `M` oracle calls.
    pub fn children(&self, prefix: &[usize], parent: f64) -> Result<Vec<f64>> {
        let m = self.modes();
        let mut buf = prefix.to_vec();
        buf.push(0);
        let mut out = vec![0.0; m];
        let mut fresh_sum = 0.0;
        for (r, slot) in out.iter_mut().enumerate() {
            if prefix.contains(&r) {
                continue;
            }
            *buf.last_mut().unwrap() = r;
            *slot = self.marginal(&buf)?;
            fresh_sum += *slot;
        }
        for (r, slot) in out.iter_mut().enumerate() {
            if !prefix.contains(&r) {
                continue;
            }
            *slot = match self.rule {
                CollisionRule::Leftover => (parent - fresh_sum) / prefix.len() as f64,
                CollisionRule::Raw => {
                    *buf.last_mut().unwrap() = r;
                    self.marginal(&buf)?
                }
                CollisionRule::Zero => 0.0,
            };
        }
        Ok(out)
    }

    /// Value of an arbitrary prefix in `[M]^j`. Below the first collision
    /// node the value is spread uniformly over the remaining positions.
    pub fn value(&self, prefix: &[usize]) -> Result<f64> {
        if let Some(&r) = prefix.iter().find(|&&r| r >= self.modes()) {
            return Err(Error::Index { index: r, extent: self.modes() });
        }
        if prefix.len() > self.photons() {
            return Err(invalid_arg("prefix longer than N"));
        }
        let Some(t) = first_repeat(prefix) else {
            return self.marginal(prefix);
        };
        if self.rule == CollisionRule::Raw {
            return self.marginal(prefix);
        }
        let base = &prefix[..t];
        let node = match self.rule {
            CollisionRule::Zero => 0.0,
            _ => {
                let parent = self.marginal(base)?;
                self.children(base, parent)?[prefix[t]]
            }
        };
        Ok(node / (self.modes() as f64).powi((prefix.len() - t - 1) as i32))
    }

    /// Truncated quasi-distribution over collision-free sequences plus the
    /// collision symbol, obtained by walking the tree. Sequence keys are
    /// unsorted; `c` carries the total mass of first-collision nodes.
    pub fn tree_distribution(&self) -> Result<Distribution> {
        let mut out = Distribution::new();
        out.insert(OutcomeKey::Collision, 0.0);
        self.walk(&mut Vec::new(), 1.0, &mut |key, v| out.add(key, v), false)?;
        Ok(out)
    }

    /// Exact distribution induced by [`sample`], by exhaustive tree walk.
    pub fn induced_distribution(&self) -> Result<Distribution> {
        let mut out = Distribution::new();
        out.insert(OutcomeKey::Collision, 0.0);
        self.walk(&mut Vec::new(), 1.0, &mut |key, v| out.add(key, v), true)?;
        Ok(out)
    }

    fn walk(
        &self,
        prefix: &mut Vec<usize>,
        mass: f64,
        emit: &mut dyn FnMut(OutcomeKey, f64),
        sampled: bool,
    ) -> Result<()> {
        if prefix.len() == self.photons() {
            emit(OutcomeKey::Modes(prefix.clone()), mass);
            return Ok(());
        }
        let parent = if sampled { self.marginal(prefix)? } else { mass };
        let children = self.children(prefix, parent)?;
        let weights = if sampled { conditional(&children, prefix).0 } else { children };
        for (r, w) in weights.into_iter().enumerate() {
            let child_mass = if sampled { mass * w } else { w };
            if sampled && w == 0.0 {
                continue;
            }
            if prefix.contains(&r) {
                emit(OutcomeKey::Collision, child_mass);
            } else {
                prefix.push(r);
                self.walk(prefix, child_mass, emit, sampled)?;
                prefix.pop();
            }
        }
        Ok(())
    }
}

/// Collision-extended truncated marginal (leftover assignment).
pub fn collision_oracle(z: &RescaledInputMatrix, prefix: &[usize], x: f64, cutoff: usize) -> Result<QuasiValue> {
    MarginalOracle::new(z.clone(), x, cutoff, CollisionRule::Leftover)?.value(prefix).map(QuasiValue)
}

/// Clamp-and-renormalise: negative weights become zero, the rest are scaled
/// to sum to one. An all-zero row falls back to uniform over the modes not
/// in `prefix`; the flag reports whether that happened.
pub fn conditional(weights: &[f64], prefix: &[usize]) -> (Vec<f64>, bool) {
    let clamped: Vec<f64> = weights.iter().map(|&w| if w > 0.0 { w } else { 0.0 }).collect();
    let total: f64 = clamped.iter().sum();
    if total > 0.0 && total.is_finite() {
        return (clamped.iter().map(|w| w / total).collect(), false);
    }
    let fresh = weights.len() - prefix.iter().collect::<std::collections::BTreeSet<_>>().len();
    let p = 1.0 / fresh as f64;
    ((0..weights.len()).map(|r| if prefix.contains(&r) { 0.0 } else { p }).collect(), true)
}

/// Inverse-CDF draw over left-closed cumulative intervals.
fn draw(probs: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

#[derive(Debug, Clone, Serialize)]
pub struct StepAudit {
    pub step: usize,
    pub prefix: Vec<usize>,
    pub weights: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub fallback: bool,
    pub drawn: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleRecord {
    /// Drawn positions in draw order, or the collision symbol.
    #[serde(serialize_with = "key_as_string")]
    pub outcome: OutcomeKey,
    pub steps: Vec<StepAudit>,
    pub oracle_calls: usize,
}

fn key_as_string<S: serde::Serializer>(k: &OutcomeKey, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&k.to_string())
}

impl SampleRecord {
    pub fn is_collision(&self) -> bool {
        self.outcome == OutcomeKey::Collision
    }

    /// Sorted outcome, as written to sample files.
    pub fn sorted_outcome(&self) -> OutcomeKey {
        match &self.outcome {
            OutcomeKey::Modes(m) => OutcomeKey::sorted(m.clone()),
            OutcomeKey::Collision => OutcomeKey::Collision,
        }
    }
}

/// Draws one outcome photon by photon. Stops with the collision symbol as soon
/// as a mode is drawn twice.
pub fn sample<R: Rng + ?Sized>(oracle: &MarginalOracle, rng: &mut R) -> Result<SampleRecord> {
    let n = oracle.photons();
    let mut prefix: Vec<usize> = Vec::with_capacity(n);
    let mut parent = 1.0;
    let mut steps = Vec::with_capacity(n);
    let mut calls = 0usize;
    for step in 0..n {
        let weights = oracle.children(&prefix, parent)?;
        calls += weights.len();
        let (probs, fallback) = conditional(&weights, &prefix);
        let r = draw(&probs, rng.random::<f64>());
        steps.push(StepAudit {
            step,
            prefix: prefix.clone(),
            weights: weights.clone(),
            probabilities: probs,
            fallback,
            drawn: r,
        });
        if prefix.contains(&r) {
            return Ok(SampleRecord { outcome: OutcomeKey::Collision, steps, oracle_calls: calls });
        }
        parent = weights[r];
        prefix.push(r);
    }
    Ok(SampleRecord { outcome: OutcomeKey::Modes(prefix), steps, oracle_calls: calls })
}

/// `count` independent samples; sample `i` uses stream `(seed, i)`.
pub fn sample_many(oracle: &MarginalOracle, count: usize, seed: u64) -> Result<Vec<SampleRecord>> {
    (0..count)
        .into_par_iter()
        .map(|i| sample(oracle, &mut RngStream::with_index(seed, i as u64).rng()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::ComplexMatrix;
    use crate::unitary::haar_unitary;

    fn setup(n: usize, m: usize, seed: u64) -> RescaledInputMatrix {
        haar_unitary(m, &RngStream::new(seed)).unwrap().rescaled_rows(n).unwrap()
    }

    #[test]
    fn constant_part_is_weight() {
        let z = setup(4, 9, 1);
        // j = 1, k = 1: N
        assert_eq!(g_eval(&z, &[3], 1).unwrap(), Complex64::new(4.0, 0.0));
        // j = N, k = N: N!
        assert_eq!(g_eval(&z, &[0, 1, 2, 3], 4).unwrap(), Complex64::new(24.0, 0.0));
        assert!(g_eval(&z, &[0, 1], 3).is_err());
    }

    #[test]
    fn empty_prefix_marginal_is_one() {
        let z = setup(3, 7, 2);
        let v = qbar_marginal(&z, &MarginalQuery { prefix: vec![], x: 0.3, cutoff: 1 }).unwrap();
        assert_eq!(v.value(), 1.0);
    }

    #[test]
    fn first_marginal_closed_form() {
        let (n, m) = (3, 7);
        let u = haar_unitary(m, &RngStream::new(3)).unwrap();
        let z = u.rescaled_rows(n).unwrap();
        let x = 0.6;
        for r in 0..m {
            let want: f64 = (0..n)
                .map(|i| (1.0 + x * (m as f64 * u.get(i, r).norm_sqr() - 1.0)) / m as f64)
                .sum::<f64>()
                / n as f64;
            for l in 1..=n {
                let got = qbar_marginal(&z, &MarginalQuery { prefix: vec![r], x, cutoff: l }).unwrap().value();
                assert!((got - want).abs() < 1e-13, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn prefix_symmetry() {
        let z = setup(4, 10, 4);
        for l in 1..=4 {
            let a = qbar_raw(&z, &[1, 5, 7], 0.5, l).unwrap();
            let b = qbar_raw(&z, &[7, 1, 5], 0.5, l).unwrap();
            let c = qbar_raw(&z, &[5, 7, 1], 0.5, l).unwrap();
            assert!((a - b).abs() < 1e-12 && (a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn leftover_collision_closes_the_sum() {
        let z = setup(3, 6, 5);
        let oracle = MarginalOracle::new(z.clone(), 0.7, 1, CollisionRule::Leftover).unwrap();
        let r1 = 2;
        let parent = oracle.marginal(&[r1]).unwrap();
        let fresh: f64 = (0..6).filter(|&r| r != r1).map(|r| oracle.marginal(&[r1, r]).unwrap()).sum();
        let v = collision_oracle(&z, &[r1, r1], 0.7, 1).unwrap().value();
        assert!((v - (parent - fresh)).abs() < 1e-15);
        let kids = oracle.children(&[r1], parent).unwrap();
        assert!((kids.iter().sum::<f64>() - parent).abs() < 1e-15);
    }

    #[test]
    fn collision_oracle_needs_positive_cutoff() {
        let z = setup(2, 5, 6);
        assert!(matches!(collision_oracle(&z, &[1, 1], 0.5, 0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn clamp_and_renormalise() {
        let (p, fb) = conditional(&[0.2, -0.1, 0.6, 0.0], &[3]);
        assert!(!fb);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(p.iter().all(|&v| v >= 0.0));
        assert_eq!(p[1], 0.0);
        let (p, fb) = conditional(&[-0.2, -0.1, 0.0, -1.0], &[1]);
        assert!(fb);
        assert_eq!(p, vec![1.0 / 3.0, 0.0, 1.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn draw_intervals_are_left_closed() {
        let p = [0.25, 0.0, 0.75];
        assert_eq!(draw(&p, 0.0), 0);
        assert_eq!(draw(&p, 0.25), 2);
        assert_eq!(draw(&p, 0.999_999), 2);
    }

    #[test]
    fn sampler_budget_and_determinism() {
        let z = setup(3, 8, 7);
        let oracle = MarginalOracle::new(z, 0.5, 1, CollisionRule::Leftover).unwrap();
        let a = sample(&oracle, &mut RngStream::new(1).rng()).unwrap();
        let b = sample(&oracle, &mut RngStream::new(1).rng()).unwrap();
        assert_eq!(a.outcome, b.outcome);
        assert!(a.oracle_calls <= 8 * 3);
        for s in sample_many(&oracle, 50, 3).unwrap() {
            assert!(s.oracle_calls <= 8 * 3);
            if let OutcomeKey::Modes(m) = &s.outcome {
                let mut d = m.clone();
                d.sort();
                d.dedup();
                assert_eq!(d.len(), 3);
            }
        }
    }

    #[test]
    fn f_route_uses_same_kernel() {
        let m = ComplexMatrix::identity(2);
        // Z = I: |Per|^2 = 1 = Σ_k f_k
        let s: f64 = (0..=2).map(|k| degree_part(&m, &[0, 1], k).unwrap().re).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }
}
