//! Gaussian circuit noise `U → √x·U + √(1-x)·Y`, with `Y` complex Ginibre of
//! entry variance `1/M`.
//!
//! The noisy collision-free probability has three independent routes here:
//! the closed form over sub-permanents ([`noisy_prob_analytic`]), the
//! degree decomposition damped by `x^{N-k}` ([`noisy_prob_decomposition`]),
//! and direct Monte Carlo over `Y` ([`noisy_prob_mc`]).

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{factorial, subsets};
use crate::error::{invalid_arg, Error, Result};
use crate::marginal::degree_part;
use crate::matrix::ComplexMatrix;
use crate::outcome::OutcomeOrdered;
use crate::permanent::permanent_ryser;
use crate::rng::RngStream;
use crate::unitary::{ginibre_from, UnitaryMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GaussianNoiseSpec {
    Direct { x: f64 },
    /// Depth-scaled noise, `x = x1^gamma`.
    Scaled { x1: f64, gamma: u32 },
}

impl GaussianNoiseSpec {
    pub fn effective_x(&self) -> Result<f64> {
        let x = match *self {
            GaussianNoiseSpec::Direct { x } => x,
            GaussianNoiseSpec::Scaled { x1, gamma } => {
                if !(0.0..1.0).contains(&x1) || gamma == 0 {
                    return Err(invalid_arg(format!("need x1 in [0,1) and gamma >= 1, got {x1}, {gamma}")));
                }
                x1.powi(gamma as i32)
            }
        };
        check_unit(x, "x")?;
        Ok(x)
    }
}

/// Degree cutoff `l`, optionally with the `(ε, δ)` target it was chosen for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffPolicy {
    pub l: usize,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
}

impl CutoffPolicy {
    pub fn fixed(l: usize, n: usize) -> Result<Self> {
        if l > n {
            return Err(invalid_arg(format!("cutoff l = {l} exceeds N = {n}")));
        }
        Ok(Self { l, eps: None, delta: None })
    }

    pub fn from_target(n: usize, x: f64, eps: f64, delta: f64) -> Result<Self> {
        Ok(Self { l: select_cutoff(n, x, eps, delta)?, eps: Some(eps), delta: Some(delta) })
    }
}

pub(crate) fn check_unit(v: f64, name: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid_arg(format!("{name} = {v} outside [0, 1]")));
    }
    Ok(())
}

fn require_collision_free(z: &OutcomeOrdered) -> Result<()> {
    if !z.is_collision_free() {
        return Err(Error::Unsupported(
            "collision outcome; use exact_prob_general for repeated modes".into(),
        ));
    }
    Ok(())
}

/// `|Per U_{N,z}|²` for a collision-free ordered outcome.
pub fn exact_prob(u: &UnitaryMatrix, z: &OutcomeOrdered) -> Result<f64> {
    require_collision_free(z)?;
    exact_prob_general(u, z)
}

/// `|Per U_{N,z}|² / Π m_i!`, valid for any ordered outcome.
pub fn exact_prob_general(u: &UnitaryMatrix, z: &OutcomeOrdered) -> Result<f64> {
    let block = u.input_block(z.photons(), z.positions())?;
    Ok(permanent_ryser(&block)?.norm_sqr() / z.occupation_factorial())
}

/// Degree-`2(N-k)` part of `|Per Z|²` for a square block `Z`.
pub fn f_eval(z: &ComplexMatrix, k: usize) -> Result<Complex64> {
    if !z.is_square() {
        return Err(Error::Size(format!("f_eval needs a square block, got {}x{}", z.rows(), z.cols())));
    }
    if k > z.rows() {
        return Err(invalid_arg(format!("k = {k} outside [0, {}]", z.rows())));
    }
    let cols: Vec<usize> = (0..z.cols()).collect();
    degree_part(z, &cols, k)
}

/// All degree parts `f_0..f_N` of a square block.
pub fn f_all(z: &ComplexMatrix) -> Result<Vec<Complex64>> {
    (0..=z.rows()).map(|k| f_eval(z, k)).collect()
}

/// `E_Y |Per(√x U + √(1-x) Y)_{N,z}|²` in closed form: a sum over row sets
/// `K ⊂ [N]` and column sets `K' ⊂ z` of `|Per U_{K,K'}|²`.
pub fn noisy_prob_analytic(u: &UnitaryMatrix, z: &OutcomeOrdered, x: f64) -> Result<f64> {
    check_unit(x, "x")?;
    require_collision_free(z)?;
    let n = z.photons();
    let m = u.dim() as f64;
    let cols = z.positions();
    let mut total = 0.0;
    for k in 0..=n {
        let coef = x.powi(k as i32) * (1.0 - x).powi((n - k) as i32) / m.powi((n - k) as i32)
            * factorial(n - k) as f64;
        if coef == 0.0 {
            continue;
        }
        let mut s = 0.0;
        for rows in subsets(n, k) {
            for kc in subsets(n, k) {
                let sel: Vec<usize> = kc.as_slice().iter().map(|&t| cols[t]).collect();
                let block = u.matrix().submatrix(rows.as_slice(), &sel)?;
                s += permanent_ryser(&block)?.norm_sqr();
            }
        }
        total += coef * s;
    }
    Ok(total)
}

/// `M^{-N} Σ_{k=N-l}^{N} x^{N-k} f_k(√M·U_{N,z})`; `l = N` gives the noisy
/// probability itself.
pub fn truncated_prob(u: &UnitaryMatrix, z: &OutcomeOrdered, x: f64, l: usize) -> Result<f64> {
    check_unit(x, "x")?;
    let n = z.photons();
    if l > n {
        return Err(invalid_arg(format!("cutoff l = {l} exceeds N = {n}")));
    }
    let block = u.input_block(n, z.positions())?.scale((u.dim() as f64).sqrt());
    let mut acc = 0.0;
    for k in n - l..=n {
        acc += x.powi((n - k) as i32) * f_eval(&block, k)?.re;
    }
    Ok(acc / (u.dim() as f64).powi(n as i32))
}

/// Degree-decomposition route to the noisy probability.
pub fn noisy_prob_decomposition(u: &UnitaryMatrix, z: &OutcomeOrdered, x: f64) -> Result<f64> {
    require_collision_free(z)?;
    truncated_prob(u, z, x, z.photons())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Running mean and squared deviation (Welford), mergeable across chunks.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    pub n: usize,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn merge(self, o: Moments) -> Moments {
        if self.n == 0 {
            return o;
        }
        if o.n == 0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64,
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

/// Samples per independent RNG substream in Monte Carlo loops.
pub const MC_CHUNK: usize = 4096;

/// Splits `samples` into fixed chunks on substreams of `rng`, folds each with
/// `f`, and merges the chunk moments in chunk order.
pub(crate) fn chunked_moments<F>(samples: usize, rng: &RngStream, f: F) -> Result<Moments>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng, &mut Moments) -> Result<()> + Sync,
{
    let chunks = samples.div_ceil(MC_CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng.substream(c as u64).rng();
            let mut mo = Moments::default();
            let len = MC_CHUNK.min(samples - c * MC_CHUNK);
            for _ in 0..len {
                f(&mut r, &mut mo)?;
            }
            Ok(mo)
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().fold(Moments::default(), Moments::merge))
}

/// Monte Carlo estimate of the noisy probability over independent draws of `Y`.
pub fn noisy_prob_mc(
    u: &UnitaryMatrix,
    z: &OutcomeOrdered,
    x: f64,
    samples: usize,
    rng: &RngStream,
) -> Result<McEstimate> {
    check_unit(x, "x")?;
    if samples < 2 {
        return Err(invalid_arg("need at least two samples"));
    }
    let n = z.photons();
    let block = u.input_block(n, z.positions())?;
    let var = 1.0 / u.dim() as f64;
    let (a, b) = (x.sqrt(), (1.0 - x).sqrt());
    let mo = chunked_moments(samples, rng, |r, mo| {
        let y = ginibre_from(n, n, var, r)?;
        let noisy = block.axpby(a, &y, b)?;
        mo.push(permanent_ryser(&noisy)?.norm_sqr());
        Ok(())
    })?;
    Ok(McEstimate { estimate: mo.mean, stderr: mo.stderr(), samples })
}

fn check_target(eps: f64, delta: f64) -> Result<()> {
    if !(eps > 0.0) || !(delta > 0.0 && delta <= 1.0) {
        return Err(invalid_arg(format!("need eps > 0 and delta in (0, 1], got {eps}, {delta}")));
    }
    Ok(())
}

pub(crate) fn cutoff_from_bound(n: usize, x: f64, eps: f64, delta: f64, prefactor: f64) -> Result<usize> {
    check_unit(x, "x")?;
    check_target(eps, delta)?;
    if x == 0.0 {
        return Ok(0);
    }
    if x == 1.0 {
        return Ok(n);
    }
    let need = (prefactor * (n as f64).sqrt() / (eps * delta.sqrt())).ln() / (1.0 / x).ln() - 1.0;
    let l = (need - 1e-12).ceil().max(0.0);
    Ok((l as usize).min(n))
}

/// Smallest `l` with `2√N·x^{l+1}/√δ <= ε`, clamped to `[0, N]`.
pub fn select_cutoff(n: usize, x: f64, eps: f64, delta: f64) -> Result<usize> {
    cutoff_from_bound(n, x, eps, delta, 2.0)
}

/// `2√N·x^{l+1}/√δ`: the truncation error bound holding for a `1-δ`
/// fraction of Haar unitaries.
pub fn tvd_bound(n: usize, x: f64, l: usize, delta: f64) -> f64 {
    2.0 * (n as f64).sqrt() * x.powi(l as i32 + 1) / delta.sqrt()
}

/// `Σ_{z ∈ cf} p̃(z)` by enumerating all collision-free outcomes.
pub fn collision_free_mass(u: &UnitaryMatrix, n: usize, x: f64) -> Result<f64> {
    let mut s = 0.0;
    for cols in subsets(u.dim(), n) {
        let z = OutcomeOrdered::new(u.dim(), cols.as_slice().to_vec())?;
        s += noisy_prob_analytic(u, &z, x)?;
    }
    Ok(s)
}

/// Haar-average lower bound on the collision-free mass,
/// `Σ_k C(N,k) x^k (1-x)^{N-k} (1 - N/M)^N (1 - 2N²/M)`.
pub fn collision_free_mass_lower_bound(n: usize, m: usize, x: f64) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    let binom_total: f64 = (0..=n)
        .map(|k| crate::combinatorics::binomial(n, k) as f64 * x.powi(k as i32) * (1.0 - x).powi((n - k) as i32))
        .sum();
    binom_total * (1.0 - nf / mf).powi(n as i32) * (1.0 - 2.0 * nf * nf / mf)
}
