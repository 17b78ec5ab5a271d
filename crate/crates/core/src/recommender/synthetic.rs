//! Deterministic synthetic recommender with configurable STEM bias.
//!
//! Each of the ten ranks independently draws STEM with the profile's
//! propensity, then takes a uniformly random unused major from that pool.
//! The expected STEM Disparity Score of a profile with propensity `p` is
//! therefore `p · Σ W_j / normalizer`.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, QueryError, QuerySpec, Source};
use crate::demographics::DemographicValue;
use crate::prompt::StudentProfile;
use crate::vocab::{format_recommendations, StemLexicon, LIST_LEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticBiasModel {
    /// STEM propensity for profiles with no specified demographic.
    pub baseline: f64,
    pub propensity: BTreeMap<DemographicValue, f64>,
    /// Change in propensity per 100 percentile points above the median.
    pub score_slope: f64,
    pub stem_pool: Vec<String>,
    pub non_stem_pool: Vec<String>,
    pub seed: u64,
    /// Cache keys that fail with a transport-style error.
    pub fail_keys: BTreeSet<String>,
    /// Cache keys that answer with only nine items.
    pub malformed_keys: BTreeSet<String>,
}

impl Default for SyntheticBiasModel {
    fn default() -> Self {
        let lex = StemLexicon::shipped();
        Self {
            baseline: 0.6,
            propensity: BTreeMap::new(),
            score_slope: 0.0,
            stem_pool: lex.names(true),
            non_stem_pool: lex.names(false),
            seed: 42,
            fail_keys: BTreeSet::new(),
            malformed_keys: BTreeSet::new(),
        }
    }
}

impl SyntheticBiasModel {
    pub fn validate(&self) -> Result<(), QueryError> {
        let bad = |what: String| Err(QueryError::Config(what));
        for (name, p) in std::iter::once(("baseline".to_string(), self.baseline))
            .chain(self.propensity.iter().map(|(k, v)| (k.key().to_string(), *v)))
        {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("propensity {name} = {p} outside [0,1]"));
            }
        }
        if self.stem_pool.len() < LIST_LEN || self.non_stem_pool.len() < LIST_LEN {
            return bad(format!(
                "pools need at least {LIST_LEN} majors each (stem {}, non-stem {})",
                self.stem_pool.len(),
                self.non_stem_pool.len()
            ));
        }
        if !self.score_slope.is_finite() {
            return bad("score_slope must be finite".into());
        }
        Ok(())
    }

    /// STEM propensity for a profile: the mean over its specified values
    /// (baseline when none), shifted by the score slope.
    pub fn propensity_for(&self, profile: &StudentProfile) -> f64 {
        let specified = profile.demographics().specified();
        let base = if specified.is_empty() {
            self.baseline
        } else {
            specified.iter().map(|v| self.propensity.get(v).copied().unwrap_or(self.baseline)).sum::<f64>()
                / specified.len() as f64
        };
        let shift = self.score_slope * (f64::from(profile.score_percentile.get()) - 50.5) / 100.0;
        (base + shift).clamp(0.0, 1.0)
    }

    fn rng_for(&self, key: &str) -> ChaCha8Rng {
        let digest = hex::decode(key).ok().filter(|d| d.len() >= 8);
        let mixed = match digest {
            Some(d) => u64::from_le_bytes(d[..8].try_into().expect("8 bytes")),
            None => key.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3)),
        };
        ChaCha8Rng::seed_from_u64(self.seed ^ mixed)
    }

    /// Ten ranked majors for a query.
    pub fn draw(&self, spec: &QuerySpec) -> Vec<String> {
        let mut rng = self.rng_for(&spec.key());
        let p = self.propensity_for(&spec.profile);
        let mut stem: Vec<&String> = self.stem_pool.iter().collect();
        let mut other: Vec<&String> = self.non_stem_pool.iter().collect();
        (0..LIST_LEN)
            .map(|_| {
                let pool = if rng.random_bool(p) { &mut stem } else { &mut other };
                let pick = *pool.choose(&mut rng).expect("pool holds at least ten majors");
                pool.retain(|m| *m != pick);
                pick.clone()
            })
            .collect()
    }

    pub fn respond(&self, spec: &QuerySpec) -> Result<String, QueryError> {
        let key = spec.key();
        if self.fail_keys.contains(&key) {
            return Err(QueryError::Injected(key));
        }
        let majors = self.draw(spec);
        let shown = if self.malformed_keys.contains(&key) { &majors[..LIST_LEN - 1] } else { &majors[..] };
        Ok(format!("Here are ten majors that would suit this student:\n\n{}\nEach option builds on the student's strengths.\n", format_recommendations(shown)))
    }
}

/// [`Backend`] wrapper around a [`SyntheticBiasModel`].
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    pub model: SyntheticBiasModel,
}

impl SyntheticBackend {
    pub fn new(model: SyntheticBiasModel) -> Result<Self, QueryError> {
        model.validate()?;
        Ok(Self { model })
    }
}

impl Backend for SyntheticBackend {
    fn identity(&self) -> String {
        format!("synthetic(seed={})", self.model.seed)
    }

    fn source(&self) -> Source {
        Source::Synthetic
    }

    fn complete(&self, spec: &QuerySpec) -> Result<String, QueryError> {
        self.model.respond(spec)
    }
}
