//! Corner labels (membership in the sets `C_i`) and the Sperner test for
//! cells.
//!
//! A vertex `x` with image `F(x)` is labelled from its barycentric weights
//! `lam_x = lambda(x)` and `lam_fx = lambda(F(x))` under one of three rules:
//!
//! - [`LabelRule::NotCloser`]: `i` is a label iff `lam_fx[i] <= lam_x[i]`, the
//!   image is not closer to corner `v_i`.
//! - [`LabelRule::MaxGain`]: the labels are the argmax set of the gains
//!   `lam_x[i] - lam_fx[i]`.
//! - [`LabelRule::FirstIndexReduced`]: `NotCloser`, with labels on vanishing
//!   weights `lam_x[i] == 0` dropped, then reduced to the smallest index.
//!   This rule can lose fixed points and is only kept for comparison.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Barycentric;
use crate::mesh::Mesh;

/// Label sets are bitmasks, so `d + 1 <= 64`.
pub const MAX_LABELS: usize = 64;

pub const DEFAULT_TAU: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("barycentric dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("at most {MAX_LABELS} labels are supported, got {0}")]
    TooManyLabels(usize),
    #[error("unknown labeling strategy '{0}' (expected not-closer, max-gain or first-index)")]
    UnknownRule(String),
    #[error("tolerance must be finite and non-negative, got {0}")]
    BadTolerance(f64),
}

/// A subset of `{0, ..., d}`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "Vec<usize>", try_from = "Vec<usize>")]
pub struct LabelSet(u64);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);

    pub fn single(i: usize) -> Self {
        debug_assert!(i < MAX_LABELS);
        LabelSet(1 << i)
    }

    /// `{0, ..., n-1}`.
    pub fn full(n: usize) -> Self {
        if n >= MAX_LABELS {
            LabelSet(u64::MAX)
        } else {
            LabelSet((1u64 << n) - 1)
        }
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1 << i;
    }

    pub fn contains(self, i: usize) -> bool {
        i < MAX_LABELS && self.0 & (1 << i) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn intersection(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 & other.0)
    }

    pub fn min(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }

    pub fn max(self) -> Option<usize> {
        (self.0 != 0).then(|| 63 - self.0.leading_zeros() as usize)
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..MAX_LABELS).filter(move |&i| bits & (1 << i) != 0)
    }
}

impl FromIterator<usize> for LabelSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        let mut s = LabelSet::EMPTY;
        for i in iter {
            s.insert(i);
        }
        s
    }
}

impl From<LabelSet> for Vec<usize> {
    fn from(s: LabelSet) -> Self {
        s.iter().collect()
    }
}

impl TryFrom<Vec<usize>> for LabelSet {
    type Error = LabelError;
    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        if let Some(&bad) = v.iter().find(|&&i| i >= MAX_LABELS) {
            return Err(LabelError::TooManyLabels(bad + 1));
        }
        Ok(v.into_iter().collect())
    }
}

impl fmt::Debug for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Labels joined by `;`, e.g. `0;2`. Used in CSV output.
impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for i in self.iter() {
            if !first {
                f.write_str(";")?;
            }
            write!(f, "{i}")?;
            first = false;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelRule {
    NotCloser,
    MaxGain,
    #[serde(rename = "first-index")]
    FirstIndexReduced,
}

impl LabelRule {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelRule::NotCloser => "not-closer",
            LabelRule::MaxGain => "max-gain",
            LabelRule::FirstIndexReduced => "first-index",
        }
    }
}

impl fmt::Display for LabelRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelRule {
    type Err = LabelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "not-closer" => Ok(LabelRule::NotCloser),
            "max-gain" => Ok(LabelRule::MaxGain),
            "first-index" => Ok(LabelRule::FirstIndexReduced),
            other => Err(LabelError::UnknownRule(other.to_string())),
        }
    }
}

/// A labeling rule together with its comparison tolerance `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelingStrategy {
    pub rule: LabelRule,
    pub tau: f64,
}

impl LabelingStrategy {
    pub fn new(rule: LabelRule, tau: f64) -> Result<Self, LabelError> {
        if !tau.is_finite() || tau < 0.0 {
            return Err(LabelError::BadTolerance(tau));
        }
        Ok(Self { rule, tau })
    }

    pub fn not_closer() -> Self {
        Self { rule: LabelRule::NotCloser, tau: DEFAULT_TAU }
    }

    pub fn max_gain() -> Self {
        Self { rule: LabelRule::MaxGain, tau: DEFAULT_TAU }
    }

    pub fn first_index() -> Self {
        Self { rule: LabelRule::FirstIndexReduced, tau: DEFAULT_TAU }
    }
}

impl Default for LabelingStrategy {
    fn default() -> Self {
        Self::not_closer()
    }
}

impl From<LabelRule> for LabelingStrategy {
    fn from(rule: LabelRule) -> Self {
        Self { rule, tau: DEFAULT_TAU }
    }
}

pub fn compute_labels(
    lam_x: &Barycentric,
    lam_fx: &Barycentric,
    strategy: LabelingStrategy,
) -> Result<LabelSet, LabelError> {
    let n = lam_x.len();
    if lam_fx.len() != n {
        return Err(LabelError::DimensionMismatch(n, lam_fx.len()));
    }
    if n > MAX_LABELS {
        return Err(LabelError::TooManyLabels(n));
    }
    let x = lam_x.weights();
    let fx = lam_fx.weights();
    let tau = strategy.tau;
    let not_closer = || (0..n).filter(|&i| fx[i] <= x[i] + tau).collect::<LabelSet>();
    let labels = match strategy.rule {
        LabelRule::NotCloser => not_closer(),
        LabelRule::MaxGain => {
            let gains: Vec<f64> = (0..n).map(|i| x[i] - fx[i]).collect();
            let best = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (0..n).filter(|&i| gains[i] >= best - tau).collect()
        }
        LabelRule::FirstIndexReduced => {
            let kept = not_closer().iter().filter(|&i| x[i].abs() > tau);
            kept.min().map(LabelSet::single).unwrap_or_default()
        }
    };
    Ok(labels)
}

/// Labels `i` whose weight `lam_x[i]` is non-zero, i.e. the indices of the
/// smallest root face containing the point.
pub fn support(lam_x: &Barycentric, tau: f64) -> LabelSet {
    lam_x
        .weights()
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > tau)
        .map(|(i, _)| i)
        .collect()
}

/// True iff the corners can be matched to distinct labels `0..=d`, one drawn
/// from each corner's set (a system of distinct representatives). Decided by
/// augmenting paths.
pub fn is_sperner(cell_label_sets: &[LabelSet]) -> bool {
    let n = cell_label_sets.len();
    if n == 0 || n > MAX_LABELS {
        return false;
    }
    let all = LabelSet::full(n);
    let union = cell_label_sets
        .iter()
        .fold(LabelSet::EMPTY, |acc, s| LabelSet(acc.0 | s.0));
    if union.intersection(all) != all {
        return false;
    }
    // owner[label] = corner currently matched to it
    let mut owner = vec![usize::MAX; n];
    for corner in 0..n {
        let mut seen = vec![false; n];
        if !augment(corner, cell_label_sets, all, &mut owner, &mut seen) {
            return false;
        }
    }
    true
}

fn augment(
    corner: usize,
    sets: &[LabelSet],
    all: LabelSet,
    owner: &mut [usize],
    seen: &mut [bool],
) -> bool {
    for label in sets[corner].intersection(all).iter() {
        if seen[label] {
            continue;
        }
        seen[label] = true;
        if owner[label] == usize::MAX || augment(owner[label], sets, all, owner, seen) {
            owner[label] = corner;
            return true;
        }
    }
    false
}

/// Face condition of Sperner's lemma: every labelled vertex on a root face
/// `conv(v_i1, ..., v_in)` carries at least one label from `{i1, ..., in}`.
/// Unlabelled vertices fail the check.
pub fn face_cover_check(mesh: &Mesh, strategy: LabelingStrategy) -> bool {
    mesh.vertices().iter().all(|v| match v.eval() {
        Some(e) => !e.labels.intersection(support(&e.lam_x, strategy.tau)).is_empty(),
        None => false,
    })
}
