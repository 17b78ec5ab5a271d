//! Disparity metrics over recommendation sets.

mod transport;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use transport::{solve, wasserstein, OptimalTransport, TransportPlan};

use crate::vocab::{MajorId, RecommendationSet, LIST_LEN};

const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("not a probability vector: {0}")]
    NotNormalized(String),
    #[error("invalid rank weights: {0}")]
    Weights(String),
    #[error("invalid Bayes inputs: {0}")]
    Bayes(String),
    #[error("no STEM evidence: every level has zero STEM probability")]
    NoStemEvidence,
    #[error("major id {id} outside vocabulary of size {k}")]
    OutOfRange { id: usize, k: usize },
    #[error("no recommendation sets")]
    Empty,
}

/// `|a ∩ b| / |a ∪ b|`, with two empty sets counting as identical.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Jaccard between the distinct majors of two sets.
pub fn jaccard_sets(a: &RecommendationSet, b: &RecommendationSet) -> f64 {
    let a: BTreeSet<_> = a.majors.iter().copied().collect();
    let b: BTreeSet<_> = b.majors.iter().copied().collect();
    jaccard(&a, &b)
}

/// Probability vector over `k` majors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    mass: Vec<f64>,
}

impl Distribution {
    pub fn new(mass: Vec<f64>) -> Result<Self, MetricError> {
        if let Some((i, m)) = mass.iter().enumerate().find(|(_, m)| !(m.is_finite() && **m >= 0.0)) {
            return Err(MetricError::NotNormalized(format!("entry {i} is {m}")));
        }
        let sum: f64 = mass.iter().sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(MetricError::NotNormalized(format!("mass sums to {sum}")));
        }
        Ok(Self { mass })
    }

    pub fn point(k: usize, i: usize) -> Self {
        let mut mass = vec![0.0; k];
        mass[i] = 1.0;
        Self { mass }
    }

    pub fn k(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Mean under the given support values.
    pub fn mean(&self, values: &[f64]) -> f64 {
        self.mass.iter().zip(values).map(|(m, x)| m * x).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    RankWeighted,
}

/// Per-rank weights (rank 1 first) and the score normalizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankWeights {
    weights: Vec<f64>,
    normalizer: f64,
}

impl Default for RankWeights {
    fn default() -> Self {
        Self { weights: (1..=LIST_LEN).rev().map(|w| w as f64).collect(), normalizer: 10.0 }
    }
}

impl RankWeights {
    pub fn new(weights: Vec<f64>, normalizer: f64) -> Result<Self, MetricError> {
        if weights.len() != LIST_LEN {
            return Err(MetricError::Weights(format!("{} weights, expected {LIST_LEN}", weights.len())));
        }
        if !weights.windows(2).all(|w| w[0] > w[1]) {
            return Err(MetricError::Weights("weights must be strictly decreasing".into()));
        }
        if !(normalizer > 0.0 && normalizer.is_finite()) {
            return Err(MetricError::Weights(format!("normalizer {normalizer} must be positive")));
        }
        Ok(Self { weights, normalizer })
    }

    /// Default weights with a custom normalizer.
    pub fn with_normalizer(normalizer: f64) -> Result<Self, MetricError> {
        Self::new(Self::default().weights, normalizer)
    }

    /// Normalizer equal to the weight total, so scores land in `[0, 1]`.
    pub fn unit_interval() -> Self {
        let w = Self::default().weights;
        let total = w.iter().sum();
        Self { weights: w, normalizer: total }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }
}

/// Empirical distribution from ranked slots `(rank_index, id)`.
pub fn distribution_from_slots(
    k: usize,
    slots: impl IntoIterator<Item = (usize, MajorId)>,
    weighting: Weighting,
    weights: &RankWeights,
) -> Result<Distribution, MetricError> {
    let mut mass = vec![0.0; k];
    for (rank, id) in slots {
        if id >= k {
            return Err(MetricError::OutOfRange { id, k });
        }
        mass[id] += match weighting {
            Weighting::Uniform => 1.0,
            Weighting::RankWeighted => weights.weights.get(rank).copied().unwrap_or(0.0),
        };
    }
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return Err(MetricError::Empty);
    }
    mass.iter_mut().for_each(|m| *m /= total);
    Distribution::new(mass)
}

/// Pool the ranked slots of `sets` into a distribution over `k` majors.
pub fn empirical_distribution(sets: &[RecommendationSet], k: usize, weighting: Weighting) -> Result<Distribution, MetricError> {
    let weights = RankWeights::default();
    distribution_from_slots(k, sets.iter().flat_map(|s| s.majors.iter().copied().enumerate()), weighting, &weights)
}

/// Rank-weighted STEM count: `Σ_j W_j · I_j / normalizer`.
pub fn sds(set: &RecommendationSet, stem_flags: &[bool], weights: &RankWeights) -> f64 {
    let total: f64 = set
        .majors
        .iter()
        .zip(&weights.weights)
        .filter(|(id, _)| stem_flags.get(**id).copied().unwrap_or(false))
        .map(|(_, w)| *w)
        .sum();
    total / weights.normalizer
}

/// A validated top-k cut-off, `1..=10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct TopK(usize);

impl TopK {
    pub fn new(k: usize) -> Result<Self, MetricError> {
        if (1..=LIST_LEN).contains(&k) {
            Ok(Self(k))
        } else {
            Err(MetricError::Dimension(format!("top-k {k} outside 1..={LIST_LEN}")))
        }
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for TopK {
    type Error = MetricError;
    fn try_from(k: usize) -> Result<Self, Self::Error> {
        Self::new(k)
    }
}

impl From<TopK> for usize {
    fn from(k: TopK) -> usize {
        k.0
    }
}

/// True when any of the first `k` ranks is a STEM major.
pub fn stem_in_top_k(set: &RecommendationSet, stem_flags: &[bool], k: TopK) -> bool {
    set.majors.iter().take(k.0).any(|&id| stem_flags.get(id).copied().unwrap_or(false))
}

/// Likelihood `P(STEM | score)` and prior `P(score)` per score level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesInputs {
    pub score_levels: Vec<f64>,
    pub p_stem_given_score: Vec<f64>,
    pub p_score: Vec<f64>,
}

impl BayesInputs {
    pub fn new(score_levels: Vec<f64>, p_stem_given_score: Vec<f64>, p_score: Vec<f64>) -> Result<Self, MetricError> {
        let b = Self { score_levels, p_stem_given_score, p_score };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let n = self.score_levels.len();
        if n == 0 || self.p_stem_given_score.len() != n || self.p_score.len() != n {
            return Err(MetricError::Bayes(format!(
                "lengths {} / {} / {} must match and be non-zero",
                n,
                self.p_stem_given_score.len(),
                self.p_score.len()
            )));
        }
        for p in self.p_stem_given_score.iter().chain(&self.p_score) {
            if !(0.0..=1.0).contains(p) {
                return Err(MetricError::Bayes(format!("probability {p} outside [0,1]")));
            }
        }
        let sum: f64 = self.p_score.iter().sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(MetricError::Bayes(format!("prior sums to {sum}")));
        }
        Ok(())
    }
}

/// `P(score | STEM) ∝ P(STEM | score) · P(score)`, normalized by total probability.
pub fn bayes_score_posterior(inputs: &BayesInputs) -> Result<Distribution, MetricError> {
    inputs.validate()?;
    let joint: Vec<f64> = inputs.p_stem_given_score.iter().zip(&inputs.p_score).map(|(l, p)| l * p).collect();
    let evidence: f64 = joint.iter().sum();
    if evidence <= 0.0 {
        return Err(MetricError::NoStemEvidence);
    }
    Distribution::new(joint.into_iter().map(|j| j / evidence).collect())
}
