//! Lazy enumeration of subsets and bijections, agreement sets and derangement
//! counts. Iteration order is lexicographic everywhere so that floating-point
//! folds over these streams are reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};

/// Strictly increasing list of indices below `universe`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndexSet {
    universe: usize,
    items: Vec<usize>,
}

impl IndexSet {
    pub fn new(universe: usize, items: Vec<usize>) -> Result<Self> {
        if items.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invariant(format!("index set {items:?} is not strictly increasing")));
        }
        if let Some(&i) = items.last().filter(|&&i| i >= universe) {
            return Err(Error::Index { index: i, extent: universe });
        }
        Ok(Self { universe, items })
    }

    pub fn empty(universe: usize) -> Self {
        Self { universe, items: Vec::new() }
    }

    /// `{0, 1, ..., n-1}`.
    pub fn range(n: usize) -> Self {
        Self { universe: n, items: (0..n).collect() }
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.items.binary_search(&i).is_ok()
    }

    /// Complement within the universe.
    pub fn complement(&self) -> Self {
        let items = (0..self.universe).filter(|i| !self.contains(*i)).collect();
        Self { universe: self.universe, items }
    }
}

/// A bijection between two index sets of equal size; `mapping[t]` is the
/// image of `domain[t]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bijection {
    domain: IndexSet,
    codomain: IndexSet,
    mapping: Vec<usize>,
}

impl Bijection {
    pub fn new(domain: IndexSet, codomain: IndexSet, mapping: Vec<usize>) -> Result<Self> {
        if domain.len() != codomain.len() || mapping.len() != domain.len() {
            return Err(invalid_arg("bijection sizes disagree"));
        }
        let mut image = mapping.clone();
        image.sort_unstable();
        if image != codomain.as_slice() {
            return Err(Error::Invariant(format!("{mapping:?} is not onto {:?}", codomain.as_slice())));
        }
        Ok(Self { domain, codomain, mapping })
    }

    pub fn domain(&self) -> &IndexSet {
        &self.domain
    }

    pub fn codomain(&self) -> &IndexSet {
        &self.codomain
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    /// Image of a domain element, if it belongs to the domain.
    pub fn apply(&self, i: usize) -> Option<usize> {
        self.domain.as_slice().binary_search(&i).ok().map(|t| self.mapping[t])
    }
}

/// Advances `c` (a strictly increasing `k`-combination of `0..n`) to its
/// lexicographic successor. Returns `false` once the last one is passed.
pub fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for t in i + 1..k {
                c[t] = c[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// In-place lexicographic successor permutation.
pub fn next_permutation<T: Ord>(p: &mut [T]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// All `size`-subsets of `0..universe`, in lexicographic order.
pub struct Subsets {
    universe: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for Subsets {
    type Item = IndexSet;

    fn next(&mut self) -> Option<IndexSet> {
        let cur = self.current.as_mut()?;
        let out = IndexSet { universe: self.universe, items: cur.clone() };
        if !next_combination(cur, self.universe) {
            self.current = None;
        }
        Some(out)
    }
}

pub fn subsets(universe: usize, size: usize) -> Subsets {
    let current = (size <= universe).then(|| (0..size).collect());
    Subsets { universe, current }
}

/// All bijections `domain → codomain`, ordered lexicographically by mapping.
pub struct Bijections {
    domain: IndexSet,
    codomain: IndexSet,
    current: Option<Vec<usize>>,
}

impl Iterator for Bijections {
    type Item = Bijection;

    fn next(&mut self) -> Option<Bijection> {
        let cur = self.current.as_mut()?;
        let out = Bijection {
            domain: self.domain.clone(),
            codomain: self.codomain.clone(),
            mapping: cur.clone(),
        };
        if !next_permutation(cur) {
            self.current = None;
        }
        Some(out)
    }
}

pub fn bijections(domain: &IndexSet, codomain: &IndexSet) -> Result<Bijections> {
    if domain.len() != codomain.len() {
        return Err(invalid_arg(format!(
            "domain has {} elements, codomain {}",
            domain.len(),
            codomain.len()
        )));
    }
    Ok(Bijections {
        domain: domain.clone(),
        codomain: codomain.clone(),
        current: Some(codomain.as_slice().to_vec()),
    })
}

/// Domain points on which `f` and `g` agree.
pub fn agreement_set(f: &Bijection, g: &Bijection) -> Result<IndexSet> {
    if f.domain != g.domain {
        return Err(invalid_arg("bijections have different domains"));
    }
    let items = f
        .domain
        .as_slice()
        .iter()
        .zip(f.mapping.iter().zip(&g.mapping))
        .filter(|(_, (a, b))| a == b)
        .map(|(&i, _)| i)
        .collect();
    Ok(IndexSet { universe: f.domain.universe, items })
}

/// `!k`, the number of fixed-point-free permutations of `k` elements.
pub fn derangements(k: usize) -> u128 {
    let (mut prev, mut cur) = (1u128, 0u128); // !0, !1
    if k == 0 {
        return 1;
    }
    for n in 2..=k {
        let next = (n as u128 - 1) * (cur + prev);
        prev = cur;
        cur = next;
    }
    cur
}

pub fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u128;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i as u128 + 1);
    }
    acc
}

/// `n!/m!` for `m <= n`, as a float.
pub fn falling_ratio(n: usize, m: usize) -> f64 {
    debug_assert!(m <= n);
    ((m + 1)..=n).map(|v| v as f64).product()
}
