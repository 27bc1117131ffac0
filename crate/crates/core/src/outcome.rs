//! The three outcome encodings (photon positions `r`, sorted positions `z`,
//! occupation numbers `m`), the aggregated collision symbol, and keyed
//! distributions over outcomes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};

fn check_modes(modes: usize, idx: &[usize]) -> Result<()> {
    match idx.iter().find(|&&i| i >= modes) {
        Some(&i) => Err(Error::Index { index: i, extent: modes }),
        None => Ok(()),
    }
}

fn sorted_distinct(z: &[usize]) -> bool {
    z.windows(2).all(|w| w[0] < w[1])
}

/// Photon positions in first quantization; repeats mean a collision.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutcomeUnordered {
    modes: usize,
    r: Vec<usize>,
}

impl OutcomeUnordered {
    pub fn new(modes: usize, r: Vec<usize>) -> Result<Self> {
        check_modes(modes, &r)?;
        Ok(Self { modes, r })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn positions(&self) -> &[usize] {
        &self.r
    }

    pub fn photons(&self) -> usize {
        self.r.len()
    }

    pub fn is_collision_free(&self) -> bool {
        self.to_ordered().is_collision_free()
    }

    pub fn to_ordered(&self) -> OutcomeOrdered {
        let mut z = self.r.clone();
        z.sort_unstable();
        OutcomeOrdered { modes: self.modes, z }
    }
}

/// Nondecreasing photon positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OutcomeOrdered {
    modes: usize,
    z: Vec<usize>,
}

impl OutcomeOrdered {
    pub fn new(modes: usize, z: Vec<usize>) -> Result<Self> {
        check_modes(modes, &z)?;
        if z.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Invariant(format!("{z:?} is not nondecreasing")));
        }
        Ok(Self { modes, z })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn positions(&self) -> &[usize] {
        &self.z
    }

    pub fn photons(&self) -> usize {
        self.z.len()
    }

    pub fn is_collision_free(&self) -> bool {
        sorted_distinct(&self.z)
    }

    pub fn to_occupation(&self) -> OutcomeOccupation {
        let mut m = vec![0; self.modes];
        for &i in &self.z {
            m[i] += 1;
        }
        OutcomeOccupation { m }
    }

    /// Canonical first-quantized representative (the sorted list itself).
    pub fn to_unordered(&self) -> OutcomeUnordered {
        OutcomeUnordered { modes: self.modes, r: self.z.clone() }
    }

    /// `Π m_i!`, the multiplicity correction for collision outcomes.
    pub fn occupation_factorial(&self) -> f64 {
        self.to_occupation().m.iter().map(|&c| crate::combinatorics::factorial(c) as f64).product()
    }
}

/// Photon count per output mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutcomeOccupation {
    m: Vec<usize>,
}

impl OutcomeOccupation {
    pub fn new(m: Vec<usize>) -> Self {
        Self { m }
    }

    pub fn counts(&self) -> &[usize] {
        &self.m
    }

    pub fn total(&self) -> usize {
        self.m.iter().sum()
    }

    /// Expands to sorted positions, checking `Σ m_i = n`.
    pub fn to_ordered(&self, n: usize) -> Result<OutcomeOrdered> {
        if self.total() != n {
            return Err(Error::Invariant(format!("occupation sums to {}, expected {n}", self.total())));
        }
        let z = self.m.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c)).collect();
        Ok(OutcomeOrdered { modes: self.m.len(), z })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeForm {
    Unordered,
    Ordered,
    Occupation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Unordered(OutcomeUnordered),
    Ordered(OutcomeOrdered),
    Occupation(OutcomeOccupation),
}

impl Outcome {
    /// Converts between encodings; `n` is the photon number expected of
    /// occupation vectors.
    pub fn convert(&self, target: OutcomeForm, n: usize) -> Result<Outcome> {
        let ordered = match self {
            Outcome::Unordered(r) => r.to_ordered(),
            Outcome::Ordered(z) => z.clone(),
            Outcome::Occupation(m) => m.to_ordered(n)?,
        };
        Ok(match target {
            OutcomeForm::Unordered => Outcome::Unordered(ordered.to_unordered()),
            OutcomeForm::Ordered => Outcome::Ordered(ordered),
            OutcomeForm::Occupation => Outcome::Occupation(ordered.to_occupation()),
        })
    }
}

/// Key of a distribution: a list of modes, or the aggregated collision symbol.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutcomeKey {
    Modes(Vec<usize>),
    Collision,
}

impl OutcomeKey {
    pub fn sorted(mut modes: Vec<usize>) -> Self {
        modes.sort_unstable();
        OutcomeKey::Modes(modes)
    }

    pub fn modes(&self) -> Option<&[usize]> {
        match self {
            OutcomeKey::Modes(m) => Some(m),
            OutcomeKey::Collision => None,
        }
    }
}

impl fmt::Display for OutcomeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutcomeKey::Collision => f.write_str("c"),
            OutcomeKey::Modes(m) => {
                for (t, i) in m.iter().enumerate() {
                    if t > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{i}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for OutcomeKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "c" {
            return Ok(OutcomeKey::Collision);
        }
        parse_modes(s).map(OutcomeKey::Modes)
    }
}

/// Parses a whitespace-separated list of mode indices.
pub fn parse_modes(s: &str) -> Result<Vec<usize>> {
    s.split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| invalid_arg(format!("malformed mode index {t:?}"))))
        .collect()
}

/// A (quasi-)distribution keyed by outcome. Missing keys are zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Distribution(pub BTreeMap<OutcomeKey, f64>);

impl Distribution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, k: &OutcomeKey) -> f64 {
        self.0.get(k).copied().unwrap_or(0.0)
    }

    pub fn insert(&mut self, k: OutcomeKey, v: f64) {
        self.0.insert(k, v);
    }

    pub fn add(&mut self, k: OutcomeKey, v: f64) {
        *self.0.entry(k).or_insert(0.0) += v;
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&OutcomeKey, &f64)> {
        self.0.iter()
    }

    /// Lumps sequence keys into their sorted form.
    pub fn to_sorted(&self) -> Distribution {
        let mut out = Distribution::new();
        for (k, &v) in &self.0 {
            let key = match k {
                OutcomeKey::Modes(m) => OutcomeKey::sorted(m.clone()),
                OutcomeKey::Collision => OutcomeKey::Collision,
            };
            out.add(key, v);
        }
        out
    }

    /// CSV with header `outcome,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("outcome,value\n");
        for (k, v) in &self.0 {
            s.push_str(&format!("{k},{v:e}\n"));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut out = Distribution::new();
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(',')
                .ok_or_else(|| invalid_arg(format!("line {}: expected `outcome,value`", lineno + 1)))?;
            let v: f64 = v.trim().parse().map_err(|_| invalid_arg(format!("line {}: bad value", lineno + 1)))?;
            out.insert(k.parse()?, v);
        }
        Ok(out)
    }

    /// JSON mirror: `[{"outcome": "0 3", "value": ...}, ...]`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.0
                .iter()
                .map(|(k, v)| serde_json::json!({"outcome": k.to_string(), "value": v}))
                .collect(),
        )
    }
}
