//! Exact and statistical checks tying the modules together, each producing a
//! [`ValidationReport`]. Everything is deterministic given the seed except
//! the timing experiment.

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::combinatorics::{factorial, next_permutation, subsets};
use crate::distinguishability::{barrier_report, dist_norm_formula, dist_prob_exact, distinguishable_prob, f_dist_eval};
use crate::error::{invalid_arg, Error, Result};
use crate::gaussian::{
    exact_prob, f_all, noisy_prob_analytic, noisy_prob_decomposition, noisy_prob_mc, tvd_bound, Moments, MC_CHUNK,
};
use crate::loss::{discarded_mass, loss_barrier_report, lossy_prob_ordered, lossy_truncated_ordered, sector_weight};
use crate::marginal::{qbar_raw, sample_many, CollisionRule, MarginalOracle};
use crate::outcome::{Distribution, OutcomeKey, OutcomeOrdered};
use crate::permanent::{permanent_naive, permanent_ryser};
use crate::rng::RngStream;
use crate::unitary::{ginibre, ginibre_from, haar_unitary, UnitaryMatrix};

/// A numeric table, written as CSV next to a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub experiment: String,
    pub parameters: Value,
    pub metrics: Value,
    pub pass: bool,
    #[serde(skip)]
    pub table: Option<Table>,
}

/// 1-norm distance `Σ |p - q|` over the union of keys. `q` may be signed.
pub fn tvd(p: &Distribution, q: &Distribution) -> Result<f64> {
    if let Some((k, v)) = p.iter().find(|(_, &v)| v < 0.0 || !v.is_finite()) {
        return Err(invalid_arg(format!("p has invalid mass {v} at {k}")));
    }
    let mut s = 0.0;
    for (k, &v) in p.iter() {
        s += (v - q.get(k)).abs();
    }
    for (k, &v) in q.iter() {
        if !p.0.contains_key(k) {
            s += v.abs();
        }
    }
    Ok(s)
}

/// Splits the mass of every sorted key evenly over its distinct orderings.
pub fn expand_to_sequences(d: &Distribution) -> Distribution {
    let mut out = Distribution::new();
    for (k, &v) in d.iter() {
        match k {
            OutcomeKey::Collision => out.add(OutcomeKey::Collision, v),
            OutcomeKey::Modes(m) => {
                let mut perm = m.clone();
                perm.sort_unstable();
                let mut all = Vec::new();
                loop {
                    all.push(perm.clone());
                    if !next_permutation(&mut perm) {
                        break;
                    }
                }
                let share = v / all.len() as f64;
                for p in all {
                    out.add(OutcomeKey::Modes(p), share);
                }
            }
        }
    }
    out
}

/// Distance between two sequence-keyed distributions, computed both over
/// sequences and after lumping sequences into sorted outcomes. The two agree
/// when both inputs are invariant under permuting a sequence; asymmetric
/// input is rejected.
pub fn tvd_ordered_vs_unordered(p: &Distribution, q: &Distribution) -> Result<f64> {
    for d in [p, q] {
        let sorted = d.to_sorted();
        let expanded = expand_to_sequences(&sorted);
        for (k, &v) in d.iter() {
            let want = expanded.get(k);
            if (v - want).abs() > 1e-12 * want.abs().max(1e-300) && (v - want).abs() > 1e-15 {
                return Err(Error::Invariant(format!("distribution not symmetric at {k}: {v} vs {want}")));
            }
        }
    }
    let seq = tvd(p, q)?;
    let lumped = tvd(&p.to_sorted(), &q.to_sorted())?;
    if (seq - lumped).abs() > 1e-9 {
        return Err(Error::Invariant(format!("sequence distance {seq} differs from lumped {lumped}")));
    }
    Ok(seq)
}

fn cf_outcomes(m: usize, n: usize) -> Vec<Vec<usize>> {
    subsets(m, n).map(|s| s.as_slice().to_vec()).collect()
}

fn close_with_collision(mut d: Distribution) -> Distribution {
    let cf = d.total();
    d.insert(OutcomeKey::Collision, 1.0 - cf);
    d
}

/// Truncated quasi-distribution over collision-free outcomes (sorted keys)
/// plus the collision symbol carrying the leftover mass.
pub fn enumerate_qbar(u: &UnitaryMatrix, n: usize, x: f64, l: usize) -> Result<Distribution> {
    let m = u.dim();
    let vals: Vec<f64> = cf_outcomes(m, n)
        .into_par_iter()
        .map(|c| crate::gaussian::truncated_prob(u, &OutcomeOrdered::new(m, c)?, x, l))
        .collect::<Result<_>>()?;
    let mut d = Distribution::new();
    for (c, v) in cf_outcomes(m, n).into_iter().zip(vals) {
        d.insert(OutcomeKey::Modes(c), v);
    }
    Ok(close_with_collision(d))
}

/// Noisy distribution over collision-free outcomes plus the collision symbol.
pub fn enumerate_noisy(u: &UnitaryMatrix, n: usize, x: f64) -> Result<Distribution> {
    let m = u.dim();
    let vals: Vec<f64> = cf_outcomes(m, n)
        .into_par_iter()
        .map(|c| noisy_prob_analytic(u, &OutcomeOrdered::new(m, c)?, x))
        .collect::<Result<_>>()?;
    let mut d = Distribution::new();
    for (c, v) in cf_outcomes(m, n).into_iter().zip(vals) {
        d.insert(OutcomeKey::Modes(c), v);
    }
    Ok(close_with_collision(d))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn z_score(mean: f64, stderr: f64, target: f64) -> f64 {
    let diff = mean - target;
    if stderr > 0.0 && stderr.is_finite() {
        return diff / stderr;
    }
    if diff.abs() <= 1e-9 * target.abs().max(1.0) {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Moments of `width` statistics, chunked on substreams and merged in order.
fn chunked_vec_moments<F>(samples: usize, rng: &RngStream, width: usize, f: F) -> Result<Vec<Moments>>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng, &mut [f64]) -> Result<()> + Sync,
{
    let chunks = samples.div_ceil(MC_CHUNK);
    let parts: Vec<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng.substream(c as u64).rng();
            let mut mo = vec![Moments::default(); width];
            let mut buf = vec![0.0; width];
            for _ in 0..MC_CHUNK.min(samples - c * MC_CHUNK) {
                f(&mut r, &mut buf)?;
                mo.iter_mut().zip(&buf).for_each(|(m, &v)| m.push(v));
            }
            Ok(mo)
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().fold(vec![Moments::default(); width], |acc, p| {
        acc.into_iter().zip(p).map(|(a, b)| a.merge(b)).collect()
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DecompositionConfig {
    pub matrices: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub naive_max: usize,
    pub triangle_n: usize,
    pub triangle_m: usize,
    pub xs: Vec<f64>,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        Self {
            matrices: 100,
            n_min: 2,
            n_max: 5,
            naive_max: 9,
            triangle_n: 3,
            triangle_m: 20,
            xs: vec![0.2, 0.5, 0.8],
            mc_samples: 100_000,
            seed: 1,
        }
    }
}

/// `|Per Z|² = Σ_k f_k(Z)` on random matrices, Ryser against enumeration, and
/// the analytic / decomposition / Monte Carlo agreement of the noisy
/// probability.
pub fn validate_decomposition(cfg: &DecompositionConfig) -> Result<ValidationReport> {
    let root = RngStream::new(cfg.seed);
    let mut worst_identity = 0.0f64;
    let mut table = Table::new(&["n", "per_abs_sq", "sum_f", "rel_err"]);
    for i in 0..cfg.matrices {
        let n = cfg.n_min + i % (cfg.n_max - cfg.n_min + 1);
        let z = ginibre(n, n, 1.0, &root.substream(i as u64))?;
        let per = permanent_ryser(&z)?.norm_sqr();
        let sum: f64 = f_all(&z)?.iter().map(|f| f.re).sum();
        let e = rel_err(per, sum);
        worst_identity = worst_identity.max(e);
        table.rows.push(vec![n as f64, per, sum, e]);
    }

    let mut worst_ryser = 0.0f64;
    for n in 1..=cfg.naive_max {
        for t in 0..3u64 {
            let a = ginibre(n, n, 1.0, &root.substream(1_000_000 + 10 * n as u64 + t))?;
            let (r, p) = (permanent_ryser(&a)?, permanent_naive(&a)?);
            worst_ryser = worst_ryser.max((r - p).norm() / p.norm().max(1e-300));
        }
    }

    let m = cfg.triangle_m;
    let n = cfg.triangle_n;
    let u = haar_unitary(m, &root.substream(2_000_000))?;
    let mut modes: Vec<usize> = sample_indices(&mut root.substream(2_000_001).rng(), m, n).into_vec();
    modes.sort_unstable();
    let z = OutcomeOrdered::new(m, modes.clone())?;
    let mut triangle = Vec::new();
    let mut triangle_ok = true;
    for (t, &x) in cfg.xs.iter().enumerate() {
        let a = noisy_prob_analytic(&u, &z, x)?;
        let d = noisy_prob_decomposition(&u, &z, x)?;
        let mc = noisy_prob_mc(&u, &z, x, cfg.mc_samples, &root.substream(3_000_000 + t as u64))?;
        let zs = (mc.estimate - a) / mc.stderr;
        triangle_ok &= rel_err(a, d) <= 1e-9 && zs.abs() <= 4.0;
        triangle.push(json!({
            "x": x, "analytic": a, "decomposition": d, "rel_err": rel_err(a, d),
            "mc": mc.estimate, "mc_stderr": mc.stderr, "z": zs,
        }));
    }

    let pass = worst_identity <= 1e-9 && worst_ryser <= 1e-10 && triangle_ok;
    Ok(ValidationReport {
        experiment: "decomposition".into(),
        parameters: serde_json::to_value(cfg)?,
        metrics: json!({
            "identity_max_rel_err": worst_identity,
            "ryser_vs_naive_max_rel_err": worst_ryser,
            "triangle_outcome": modes,
            "triangle": triangle,
        }),
        pass,
        table: Some(table),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OrthogonalityConfig {
    pub n: usize,
    pub dist_n: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for OrthogonalityConfig {
    fn default() -> Self {
        Self { n: 3, dist_n: 2, samples: 100_000, seed: 2 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentCheck {
    pub family: String,
    pub a: usize,
    pub b: usize,
    pub part: String,
    pub target: f64,
    pub mean: f64,
    pub stderr: f64,
    pub z: f64,
}

fn pair_checks(
    family: &str,
    values: usize,
    moments: &[Moments],
    diag_target: impl Fn(usize) -> f64,
) -> Vec<MomentCheck> {
    let mut out = Vec::new();
    let mut slot = 0;
    for a in 0..values {
        for b in a..values {
            let parts: &[&str] = if a == b { &["re"] } else { &["re", "im"] };
            for part in parts {
                let mo = &moments[slot];
                slot += 1;
                let target = if a == b { diag_target(a) } else { 0.0 };
                out.push(MomentCheck {
                    family: family.into(),
                    a,
                    b,
                    part: part.to_string(),
                    target,
                    mean: mo.mean,
                    stderr: mo.stderr(),
                    z: z_score(mo.mean, mo.stderr(), target),
                });
            }
        }
    }
    out
}

fn push_pairs(fs: &[Complex64], out: &mut [f64]) {
    let mut slot = 0;
    for a in 0..fs.len() {
        for b in a..fs.len() {
            let p = fs[a] * fs[b].conj();
            out[slot] = p.re;
            slot += 1;
            if a != b {
                out[slot] = p.im;
                slot += 1;
            }
        }
    }
}

fn pair_width(values: usize) -> usize {
    values * values
}

/// Monte Carlo second moments of the degree parts under unit complex
/// Gaussian entries, against their closed forms.
pub fn mc_orthogonality_suite(cfg: &OrthogonalityConfig) -> Result<ValidationReport> {
    let root = RngStream::new(cfg.seed);
    let n = cfg.n;
    let gw = pair_width(n + 1);
    let gm = chunked_vec_moments(cfg.samples, &root.substream(0), gw + 1, |r, out| {
        let z = ginibre_from(n, n, 1.0, r)?;
        let fs = f_all(&z)?;
        push_pairs(&fs, &mut out[..gw]);
        out[gw] = fs.iter().sum::<Complex64>().re.powi(2);
        Ok(())
    })?;
    let nf = factorial(n) as f64;
    let mut checks = pair_checks("gaussian", n + 1, &gm[..gw], |_| nf * nf);

    let dn = cfg.dist_n;
    let dw = pair_width(dn + 1);
    let dm = chunked_vec_moments(cfg.samples, &root.substream(1), dw + 1, |r, out| {
        let z = ginibre_from(dn, dn, 1.0, r)?;
        let fs: Vec<Complex64> = (0..=dn).map(|k| f_dist_eval(&z, k)).collect::<Result<_>>()?;
        push_pairs(&fs, &mut out[..dw]);
        out[dw] = permanent_ryser(&z)?.norm_sqr().powi(2);
        Ok(())
    })?;
    let dist_targets: Vec<f64> = (0..=dn).map(|k| dist_norm_formula(dn, k)).collect::<Result<_>>()?;
    checks.extend(pair_checks("distinguishability", dn + 1, &dm[..dw], |k| dist_targets[k]));

    let per4 = |n: usize| (factorial(n) as f64).powi(2) * (n + 1) as f64;
    for (family, n, mo) in [("gaussian", n, &gm[gw]), ("distinguishability", dn, &dm[dw])] {
        checks.push(MomentCheck {
            family: family.into(),
            a: n + 1,
            b: n + 1,
            part: "per4".into(),
            target: per4(n),
            mean: mo.mean,
            stderr: mo.stderr(),
            z: z_score(mo.mean, mo.stderr(), per4(n)),
        });
    }
    let dist_sum: f64 = dist_targets.iter().sum();
    let max_z = checks.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    let tests = checks.len();
    let pass = max_z <= 3.0 && (dist_sum - per4(dn)).abs() < 1e-9;
    Ok(ValidationReport {
        experiment: "orthogonality".into(),
        parameters: serde_json::to_value(cfg)?,
        metrics: json!({
            "checks": checks,
            "max_abs_z": max_z,
            "tests": tests,
            "bonferroni_note": format!("{tests} simultaneous 3-sigma checks; family-wise false alarm rate up to {:.3}", tests as f64 * 0.0027),
            "dist_norm_targets": dist_targets,
            "dist_norm_sum": dist_sum,
        }),
        pass,
        table: None,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TelescopingConfig {
    pub n: usize,
    pub m: usize,
    pub prefixes: usize,
    pub x: f64,
    pub full_n: usize,
    pub full_m: usize,
    pub seed: u64,
}

impl Default for TelescopingConfig {
    fn default() -> Self {
        Self { n: 4, m: 12, prefixes: 200, x: 0.5, full_n: 3, full_m: 6, seed: 3 }
    }
}

fn random_prefix<R: Rng>(rng: &mut R, m: usize, max_len: usize) -> Vec<usize> {
    let j = rng.random_range(0..=max_len);
    sample_indices(rng, m, j).into_vec()
}

/// Summing the next position over all modes reproduces the prefix marginal,
/// and the full tree carries unit mass.
pub fn validate_telescoping(cfg: &TelescopingConfig) -> Result<ValidationReport> {
    let root = RngStream::new(cfg.seed);
    let u = haar_unitary(cfg.m, &root.substream(0))?;
    let z = u.rescaled_rows(cfg.n)?;
    let mut table = Table::new(&["l", "max_abs_err"]);
    let mut worst = 0.0f64;
    for l in 1..=cfg.n {
        let mut rng = root.substream(l as u64).rng();
        let prefixes: Vec<Vec<usize>> =
            (0..cfg.prefixes).map(|_| random_prefix(&mut rng, cfg.m, cfg.n - 1)).collect();
        let errs: Vec<f64> = prefixes
            .par_iter()
            .map(|p| {
                let parent = qbar_raw(&z, p, cfg.x, l)?;
                let mut buf = p.clone();
                buf.push(0);
                let mut s = 0.0;
                for r in 0..cfg.m {
                    *buf.last_mut().unwrap() = r;
                    s += qbar_raw(&z, &buf, cfg.x, l)?;
                }
                Ok((s - parent).abs())
            })
            .collect::<Result<_>>()?;
        let e = errs.into_iter().fold(0.0, f64::max);
        worst = worst.max(e);
        table.rows.push(vec![l as f64, e]);
    }

    let u2 = haar_unitary(cfg.full_m, &root.substream(100))?;
    let z2 = u2.rescaled_rows(cfg.full_n)?;
    let mut full = Vec::new();
    let mut full_worst = 0.0f64;
    for l in 1..=cfg.full_n {
        let oracle = MarginalOracle::new(z2.clone(), cfg.x, l, CollisionRule::Leftover)?;
        let tree = oracle.tree_distribution()?.total();
        let raw = raw_sequence_total(&z2, cfg.x, l)?;
        full_worst = full_worst.max((tree - 1.0).abs()).max((raw - 1.0).abs());
        full.push(json!({"l": l, "tree_total": tree, "raw_total": raw}));
    }

    Ok(ValidationReport {
        experiment: "telescoping".into(),
        parameters: serde_json::to_value(cfg)?,
        metrics: json!({"telescoping_max_abs_err": worst, "full_tree": full, "full_tree_max_abs_err": full_worst}),
        pass: worst <= 1e-9 && full_worst <= 1e-9,
        table: Some(table),
    })
}

/// Sum of the truncated formula over every sequence in `[M]^N`, repeats
/// included.
fn raw_sequence_total(z: &crate::unitary::RescaledInputMatrix, x: f64, l: usize) -> Result<f64> {
    let (n, m) = (z.photons(), z.modes());
    let total = m.pow(n as u32);
    let vals: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let mut seq = vec![0; n];
            for s in seq.iter_mut() {
                *s = idx % m;
                idx /= m;
            }
            qbar_raw(z, &seq, x, l)
        })
        .collect::<Result<_>>()?;
    Ok(vals.iter().sum())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub x: f64,
    pub budget_samples: usize,
    pub hist_samples: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { n: 2, m: 8, l: 1, x: 0.5, budget_samples: 2_000, hist_samples: 100_000, seed: 4 }
    }
}

/// Exact induced-distribution check of the clamp-and-renormalise sampler,
/// its oracle budget, and a histogram test at `x = 1`, `l = N`.
pub fn validate_sampler(cfg: &SamplerConfig) -> Result<ValidationReport> {
    let root = RngStream::new(cfg.seed);
    let (n, m) = (cfg.n, cfg.m);
    let u = haar_unitary(m, &root.substream(0))?;
    let z = u.rescaled_rows(n)?;

    let oracle = MarginalOracle::new(z.clone(), cfg.x, cfg.l, CollisionRule::Leftover)?;
    let qbar = oracle.tree_distribution()?;
    let q = oracle.induced_distribution()?;
    let p = expand_to_sequences(&enumerate_noisy(&u, n, cfg.x)?);
    let eps = tvd(&p, &qbar)?;
    let lhs = tvd(&p, &q)?;
    let bound_ok = lhs <= 2.0 * eps + 1e-9;

    let budget = m * n;
    let records = sample_many(&oracle, cfg.budget_samples, cfg.seed)?;
    let max_calls = records.iter().map(|r| r.oracle_calls).max().unwrap_or(0);

    let exact_oracle = MarginalOracle::new(z, 1.0, n, CollisionRule::Leftover)?;
    let hist = sample_many(&exact_oracle, cfg.hist_samples, cfg.seed.wrapping_add(1))?;
    let mut counts: BTreeMap<OutcomeKey, usize> = BTreeMap::new();
    for r in &hist {
        *counts.entry(r.sorted_outcome()).or_default() += 1;
    }
    let mut expected = Distribution::new();
    for c in cf_outcomes(m, n) {
        let pz = exact_prob(&u, &OutcomeOrdered::new(m, c.clone())?)?;
        expected.insert(OutcomeKey::Modes(c), pz);
    }
    let expected = close_with_collision(expected);
    let total = cfg.hist_samples as f64;
    let mut table = Table::new(&["bin", "expected", "observed", "z"]);
    let mut max_z = 0.0f64;
    let mut outside = 0;
    for (i, (k, &pk)) in expected.iter().enumerate() {
        let obs = counts.get(k).copied().unwrap_or(0) as f64;
        let mean = total * pk;
        let sd = (total * pk * (1.0 - pk)).max(0.0).sqrt();
        let zk = z_score(obs, sd, mean);
        max_z = max_z.max(zk.abs());
        outside += usize::from(zk.abs() > 3.0);
        table.rows.push(vec![i as f64, mean, obs, zk]);
    }
    let unexpected = counts.keys().filter(|k| !expected.0.contains_key(*k)).count();

    let pass = bound_ok && max_calls <= budget && outside == 0 && unexpected == 0;
    Ok(ValidationReport {
        experiment: "sampler".into(),
        parameters: serde_json::to_value(cfg)?,
        metrics: json!({
            "tvd_p_qbar": eps,
            "tvd_p_induced": lhs,
            "two_eps_bound": 2.0 * eps,
            "bound_ok": bound_ok,
            "max_oracle_calls": max_calls,
            "oracle_budget": budget,
            "histogram_bins": expected.len(),
            "histogram_max_abs_z": max_z,
            "histogram_bins_outside_3sigma": outside,
            "unexpected_outcomes": unexpected,
        }),
        pass,
        table: Some(table),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DecayConfig {
    pub n: usize,
    pub m: usize,
    pub x: f64,
    pub delta: f64,
    pub draws: usize,
    pub seed: u64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self { n: 3, m: 60, x: 0.5, delta: 0.1, draws: 50, seed: 5 }
    }
}

/// `Δ_l` for `l = 0..=N` on one unitary.
pub fn decay_deltas(u: &UnitaryMatrix, n: usize, x: f64) -> Result<Vec<f64>> {
    let m = u.dim();
    let mf = m as f64;
    let scale = mf.powi(n as i32);
    let s = mf.sqrt();
    let per_outcome: Vec<(f64, Vec<f64>)> = cf_outcomes(m, n)
        .into_iter()
        .map(|c| {
            let z = OutcomeOrdered::new(m, c)?;
            let p = noisy_prob_analytic(u, &z, x)?;
            let block = u.input_block(n, z.positions())?.scale(s);
            // q[l] = M^{-N} Σ_{k >= N-l} x^{N-k} f_k
            let f = f_all(&block)?;
            let mut q = vec![0.0; n + 1];
            let mut acc = 0.0;
            for l in 0..=n {
                let k = n - l;
                acc += x.powi(l as i32) * f[k].re / scale;
                q[l] = acc;
            }
            Ok((p, q))
        })
        .collect::<Result<_>>()?;
    let p_cf: f64 = per_outcome.iter().map(|(p, _)| p).sum();
    (0..=n)
        .map(|l| {
            let mut delta = 0.0;
            let mut q_cf = 0.0;
            for (p, q) in &per_outcome {
                delta += (p - q[l]).abs();
                q_cf += q[l];
            }
            Ok(delta + ((1.0 - p_cf) - (1.0 - q_cf)).abs())
        })
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Fraction of Haar unitaries whose truncation error stays below
/// `2√N·x^{l+1}/√δ`, for every cutoff.
pub fn decay_experiment(cfg: &DecayConfig) -> Result<ValidationReport> {
    let root = RngStream::new(cfg.seed);
    let n = cfg.n;
    let deltas: Vec<Vec<f64>> = (0..cfg.draws)
        .into_par_iter()
        .map(|d| decay_deltas(&haar_unitary(cfg.m, &root.substream(d as u64))?, n, cfg.x))
        .collect::<Result<_>>()?;
    let draws = cfg.draws as f64;
    let threshold = 1.0 - cfg.delta - 2.0 * (cfg.delta * (1.0 - cfg.delta) / draws).sqrt();
    let mut table = Table::new(&["l", "bound", "pass_fraction", "threshold", "median_delta", "max_delta"]);
    let mut all_ok = true;
    let mut medians = Vec::new();
    for l in 0..=n {
        let bound = tvd_bound(n, cfg.x, l, cfg.delta);
        let mut col: Vec<f64> = deltas.iter().map(|d| d[l]).collect();
        let frac = col.iter().filter(|&&d| d <= bound).count() as f64 / draws;
        let max = col.iter().copied().fold(0.0, f64::max);
        let med = median(&mut col);
        all_ok &= frac >= threshold;
        medians.push(med);
        table.rows.push(vec![l as f64, bound, frac, threshold, med, max]);
    }
    let full_max = deltas.iter().map(|d| d[n]).fold(0.0, f64::max);
    let monotone = medians.windows(2).all(|w| w[1] <= w[0]);
    Ok(ValidationReport {
        experiment: "decay".into(),
        parameters: serde_json::to_value(cfg)?,
        metrics: json!({
            "threshold": threshold,
            "fractions_ok": all_ok,
            "full_degree_max_delta": full_max,
            "median_monotone": monotone,
            "medians": medians,
        }),
        pass: all_ok && full_max <= 1e-9 && monotone,
        table: Some(table),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub n: usize,
    pub m: usize,
    pub eta: f64,
    pub barrier_n: usize,
    pub barrier_target: f64,
    pub seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { n: 3, m: 8, eta: 0.6, barrier_n: 20, barrier_target: 0.01, seed: 6 }
    }
}

/// Non-decreasing sequences of length `k` over `[m]`.
fn multisets(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; k];
    if k == 0 {
        return vec![vec![]];
    }
    loop {
        out.push(cur.clone());
        let Some(t) = (0..k).rev().find(|&t| cur[t] + 1 < m) else {
            return out;
        };
        let v = cur[t] + 1;
        cur[t..].iter_mut().for_each(|c| *c = v);
    }
}

/// Sector masses, discarded mass and truncation distance of the lossy model
/// by full enumeration over click patterns (collisions included).
pub fn validate_loss(cfg: &LossConfig) -> Result<ValidationReport> {
    let u = haar_unitary(cfg.m, &RngStream::new(cfg.seed))?;
    let (n, m, eta) = (cfg.n, cfg.m, cfg.eta);
    let mut exact: Vec<Vec<f64>> = Vec::new();
    let mut patterns: Vec<Vec<Vec<usize>>> = Vec::new();
    for k in 0..=n {
        let pats = multisets(m, k);
        let vals: Vec<f64> = pats
            .iter()
            .map(|p| lossy_prob_ordered(&u, n, &OutcomeOrdered::new(m, p.clone())?, eta))
            .collect::<Result<_>>()?;
        exact.push(vals);
        patterns.push(pats);
    }
    let mut table = Table::new(&["l", "discarded_enumerated", "discarded_formula", "tvd_exact_truncated"]);
    let mut sector_err = 0.0f64;
    let mut sectors = Vec::new();
    for k in 0..=n {
        let s: f64 = exact[k].iter().sum();
        sector_err = sector_err.max((s - sector_weight(n, k, eta)).abs());
        sectors.push(s);
    }
    let mut discard_err = 0.0f64;
    let mut tvd_ok = true;
    for l in 0..=n {
        let enumerated: f64 = sectors[l + 1..].iter().sum();
        let formula = discarded_mass(n, eta, l);
        discard_err = discard_err.max((enumerated - formula).abs());
        let mut dist = 0.0;
        for k in 0..=n {
            for (p, &e) in patterns[k].iter().zip(&exact[k]) {
                let q = lossy_truncated_ordered(&u, n, &OutcomeOrdered::new(m, p.clone())?, eta, l)?.value();
                dist += (e - q).abs();
            }
        }
        tvd_ok &= dist >= formula - 1e-12;
        table.rows.push(vec![l as f64, enumerated, formula, dist]);
    }
    let barrier = loss_barrier_report(cfg.barrier_n, eta, 0, cfg.barrier_target)?;
    Ok(ValidationReport {
        experiment: "loss-barrier".into(),
        parameters: serde_json::to_value(cfg)?,
        metrics: json!({
            "sector_masses": sectors,
            "sector_max_abs_err": sector_err,
            "discarded_max_abs_err": discard_err,
            "tvd_at_least_discarded": tvd_ok,
            "barrier": barrier,
        }),
        pass: sector_err <= 1e-9 && discard_err <= 1e-9 && tvd_ok,
        table: Some(table),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DistBarrierConfig {
    pub n_max: usize,
    pub anchor_n_max: usize,
    pub m: usize,
    pub decomposition_n: usize,
    pub x: f64,
    pub seed: u64,
}

impl Default for DistBarrierConfig {
    fn default() -> Self {
        Self { n_max: 10, anchor_n_max: 4, m: 8, decomposition_n: 3, x: 0.4, seed: 7 }
    }
}

/// Limits of the distinguishability model, its decomposition against the
/// brute-force sum, and the term-count table.
pub fn validate_dist_barrier(cfg: &DistBarrierConfig) -> Result<ValidationReport> {
    let root = RngStream::new(cfg.seed);
    let u = haar_unitary(cfg.m, &root.substream(0))?;
    let mut anchor_err = 0.0f64;
    for n in 1..=cfg.anchor_n_max {
        let mut modes = sample_indices(&mut root.substream(n as u64).rng(), cfg.m, n).into_vec();
        modes.sort_unstable();
        let z = OutcomeOrdered::new(cfg.m, modes)?;
        anchor_err = anchor_err
            .max(rel_err(dist_prob_exact(&u, &z, 1.0)?, exact_prob(&u, &z)?))
            .max(rel_err(dist_prob_exact(&u, &z, 0.0)?, distinguishable_prob(&u, &z)?));
    }

    let n = cfg.decomposition_n;
    let mut modes = sample_indices(&mut root.substream(100).rng(), cfg.m, n).into_vec();
    modes.sort_unstable();
    let z = OutcomeOrdered::new(cfg.m, modes)?;
    let block = u.input_block(n, z.positions())?;
    let decomposed: f64 = (0..=n)
        .map(|k| Ok(cfg.x.powi((n - k) as i32) * f_dist_eval(&block, k)?.re))
        .sum::<Result<f64>>()?;
    let brute = dist_prob_exact(&u, &z, cfg.x)?;
    let decomposition_err = rel_err(decomposed, brute);

    let mut table = Table::new(&["n", "k", "summands", "n_factorial"]);
    let mut barrier_ok = true;
    let mut vanishing = Vec::new();
    for n in 1..=cfg.n_max {
        for k in 0..=n {
            let e = barrier_report(n, k)?;
            if e.vanishes() {
                vanishing.push(json!({"n": n, "k": k}));
            } else {
                barrier_ok &= e.summands >= e.n_factorial;
            }
            table.rows.push(vec![n as f64, k as f64, e.summands as f64, e.n_factorial as f64]);
        }
    }
    Ok(ValidationReport {
        experiment: "dist-barrier".into(),
        parameters: serde_json::to_value(cfg)?,
        metrics: json!({
            "anchor_max_rel_err": anchor_err,
            "decomposition_rel_err": decomposition_err,
            "summands_at_least_n_factorial": barrier_ok,
            "identically_zero_parts": vanishing,
        }),
        pass: anchor_err <= 1e-9 && decomposition_err <= 1e-9 && barrier_ok,
        table: Some(table),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    pub ns: Vec<usize>,
    pub l: usize,
    pub min_reps: usize,
    pub min_seconds: f64,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self { ns: (6..=12).collect(), l: 1, min_reps: 5, min_seconds: 0.05, seed: 8 }
    }
}

/// Time to evaluate the `N` marginals `q̄(r_1), q̄(r_1,r_2), …` along one
/// sampling path, with `M = N²`.
pub fn time_marginal_path(n: usize, l: usize, min_reps: usize, min_seconds: f64, seed: u64) -> Result<f64> {
    let m = n * n;
    let stream = RngStream::new(seed).substream(n as u64);
    let z = haar_unitary(m, &stream)?.rescaled_rows(n)?;
    let path = sample_indices(&mut stream.substream(1).rng(), m, n).into_vec();
    let once = || -> Result<f64> {
        let mut s = 0.0;
        for j in 1..=n {
            s += qbar_raw(&z, &path[..j], 0.5, l)?;
        }
        Ok(s)
    };
    once()?;
    // best of several timed blocks, to shed scheduler noise
    let mut best = f64::INFINITY;
    let mut sink = 0.0;
    for _ in 0..5 {
        let start = Instant::now();
        let mut reps = 0usize;
        while reps < min_reps || start.elapsed().as_secs_f64() < min_seconds / 5.0 {
            sink += once()?;
            reps += 1;
        }
        best = best.min(start.elapsed().as_secs_f64() / reps as f64);
    }
    std::hint::black_box(sink);
    Ok(best)
}

/// Least-squares slope of `log t` against `log N`.
pub fn loglog_slope(ns: &[usize], times: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Empirical growth of marginal evaluation time in `N` at fixed `l`, compared
/// with the `O(N^{2l+1})` bound. Timing-dependent, so not reproducible.
pub fn marginal_scaling(cfg: &ScalingConfig) -> Result<ValidationReport> {
    let mut table = Table::new(&["n", "seconds"]);
    let mut times = Vec::new();
    for &n in &cfg.ns {
        let t = time_marginal_path(n, cfg.l, cfg.min_reps, cfg.min_seconds, cfg.seed)?;
        times.push(t);
        table.rows.push(vec![n as f64, t]);
    }
    let slope = loglog_slope(&cfg.ns, &times);
    let bound = (2 * cfg.l + 1) as f64;
    Ok(ValidationReport {
        experiment: "marginal-scaling".into(),
        parameters: serde_json::to_value(cfg)?,
        metrics: json!({"slope": slope, "exponent_bound": bound, "times": times}),
        pass: (2.0..=bound + 1.0).contains(&slope),
        table: Some(table),
    })
}
