//! End-to-end audit: plan the prompt matrix, collect responses, compute
//! per-cell metrics with confidence intervals and emit reports.

mod bayes;
mod config;
mod report;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use bayes::{bayes_report, BayesGroup, BayesReport};
pub use config::{
    parse_scheme, AuditConfig, BackendConfig, BackendKind, MetricKind, PathsConfig, StatsConfig, StudyConfig,
    TemperaturePolicy,
};
pub use report::{emit_series, emit_table, results_csv, write_outputs, Point, ResultsFile, Series, SeriesFile, TableReport};

use crate::demographics::{DemographicValue, Demographics};
use crate::embeddings::{build_cost_matrix_for, embedded_subset, fixture_table, load_embeddings, CostMatrix, EmbeddingTable};
use crate::metrics::{distribution_from_slots, jaccard_sets, sds, wasserstein, RankWeights};
use crate::prompt::{enumerate, sample_profiles, BracketScheme, Cell, PromptTemplate, StudentProfile};
use crate::recommender::{Backend, LiveBackend, QuerySpec, RecommenderClient, ResponseCache, SyntheticBackend};
use crate::stats::{mean, mean_ci, percentile_interval};
use crate::vocab::{normalize, parse_recommendations, CanonMode, MajorVocabulary, RecommendationSet, StemLexicon, LIST_LEN};

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Prompt(#[from] crate::prompt::PromptError),
    #[error("{0}")]
    Vocab(#[from] crate::vocab::VocabError),
    #[error("{0}")]
    Embedding(#[from] crate::embeddings::EmbeddingError),
    #[error("{0}")]
    Metric(#[from] crate::metrics::MetricError),
    #[error("series need a decile bracket scheme; re-run with brackets = \"deciles\"")]
    NotDeciles,
    #[error("no STEM events for group {0}")]
    NoStemEvidence(String),
}

impl AuditError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            AuditError::Config(_) | AuditError::NotDeciles => 2,
            _ => 1,
        }
    }
}

/// Derive an independent stream seed from the base seed and a label.
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Template, lexicon and embeddings with their content hashes.
#[derive(Debug, Clone)]
pub struct Resources {
    pub template: PromptTemplate,
    pub lexicon: StemLexicon,
    pub embeddings: EmbeddingTable,
    pub template_hash: String,
    pub embeddings_hash: String,
}

impl Resources {
    pub fn load(config: &AuditConfig) -> Result<Self, AuditError> {
        let read = |p: &Path| std::fs::read(p).map_err(|e| AuditError::Config(format!("reading {}: {e}", p.display())));
        let (template, template_hash) = match &config.paths.template {
            Some(p) => {
                let bytes = read(p)?;
                let text = String::from_utf8_lossy(&bytes);
                (PromptTemplate::parse(&text).map_err(|e| AuditError::Config(e.to_string()))?, sha_hex(&bytes))
            }
            None => {
                let t = PromptTemplate::default();
                let h = sha_hex(format!("{}\0{}", t.system_text, t.student_info_text).as_bytes());
                (t, h)
            }
        };
        let lexicon = match &config.paths.lexicon {
            Some(p) => StemLexicon::from_csv(read(p)?.as_slice()).map_err(|e| AuditError::Config(e.to_string()))?,
            None => StemLexicon::shipped(),
        };
        let (embeddings, embeddings_hash) = match &config.paths.embeddings {
            Some(p) => {
                let bytes = read(p)?;
                let table = load_embeddings(bytes.as_slice()).map_err(|e| AuditError::Config(e.to_string()))?;
                (table, sha_hex(&bytes))
            }
            None => (fixture_table(), sha_hex(crate::embeddings::FIXTURE.as_bytes())),
        };
        Ok(Self { template, lexicon, embeddings, template_hash, embeddings_hash })
    }
}

/// Build the configured backend and client (cache attached).
pub fn build_client(config: &AuditConfig) -> Result<RecommenderClient, AuditError> {
    let cache = match &config.paths.cache {
        Some(p) => ResponseCache::open(p)?,
        None => ResponseCache::in_memory(),
    };
    if !cache.skipped_lines.is_empty() {
        log::warn!("cache: skipped unreadable lines {:?}", cache.skipped_lines);
    }
    let cfg_err = |e: crate::recommender::QueryError| AuditError::Config(e.to_string());
    let backend: Arc<dyn Backend> = match config.backend.kind {
        BackendKind::Synthetic => Arc::new(SyntheticBackend::new(config.backend.synthetic.clone()).map_err(cfg_err)?),
        BackendKind::Live => Arc::new(LiveBackend::from_env(config.backend.live.clone()).map_err(cfg_err)?),
    };
    Ok(RecommenderClient::new(backend, cache).with_rate_limit(config.backend.rate_limit))
}

/// A client that answers only from the configured cache.
pub fn build_cache_client(config: &AuditConfig) -> Result<RecommenderClient, AuditError> {
    let path = config.paths.cache.as_ref().ok_or_else(|| AuditError::Config("no cache path configured".into()))?;
    Ok(RecommenderClient::cache_only(ResponseCache::open(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedSample {
    pub cell: QuerySpec,
    pub baseline: QuerySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedCell {
    pub cell: Cell,
    pub temperature_policy: String,
    pub samples: Vec<PlannedSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub scheme: BracketScheme,
    pub cells: Vec<PlannedCell>,
}

impl Plan {
    /// Unique query specs in plan order.
    pub fn unique_specs(&self) -> Vec<QuerySpec> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for c in &self.cells {
            for s in &c.samples {
                for q in [&s.cell, &s.baseline] {
                    if seen.insert(q.key()) {
                        out.push(q.clone());
                    }
                }
            }
        }
        out
    }

    /// One line per cell: policy, bracket, demographics, sample count.
    pub fn summary(&self) -> String {
        let mut out = String::from("policy\tbracket\tcell\tsamples\n");
        for c in &self.cells {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", c.temperature_policy, c.cell.bracket, c.cell.demographics.label(), c.samples.len()));
        }
        out.push_str(&format!("# {} cells, {} unique queries\n", self.cells.len(), self.unique_specs().len()));
        out
    }
}

fn temperature_groups(study: &StudyConfig) -> Vec<(String, Vec<f64>)> {
    let pooled = || {
        let list: Vec<String> = study.temperatures.iter().map(|t| format!("{t}")).collect();
        (format!("pooled[{}]", list.join(",")), study.temperatures.clone())
    };
    let each = || study.temperatures.iter().map(|t| (format!("t={t}"), vec![*t]));
    match study.temperature_policy {
        TemperaturePolicy::Pooled => vec![pooled()],
        TemperaturePolicy::PerTemperature => each().collect(),
        TemperaturePolicy::Both => std::iter::once(pooled()).chain(each()).collect(),
    }
}

/// Lay out every cell with its paired cell/baseline queries.
///
/// Percentiles are drawn once per bracket, so every cell in a bracket
/// shares the same baseline queries.
pub fn plan(config: &AuditConfig, template: &PromptTemplate) -> Result<Plan, AuditError> {
    config.validate()?;
    let scheme = config.scheme()?;
    let study = &config.study;
    let cells = enumerate(&scheme, &config.values(), study.design);
    let mut planned = Vec::new();
    for (label, temps) in temperature_groups(study) {
        for (bi, bracket) in scheme.brackets().iter().enumerate() {
            let base_cell = Cell { bracket: bracket.clone(), demographics: Demographics::baseline() };
            let seed = derive_seed(study.seed, &["profiles", &bi.to_string()]);
            let percentiles: Vec<StudentProfile> = sample_profiles(&base_cell, study.n_per_cell, seed);
            for cell in cells.iter().filter(|c| &c.bracket == bracket) {
                let mut samples = Vec::with_capacity(percentiles.len());
                for (s, base) in percentiles.iter().enumerate() {
                    let profile = StudentProfile::new(cell.demographics, base.score_percentile);
                    let temperature = temps[s % temps.len()];
                    let spec = |p: &StudentProfile| -> Result<QuerySpec, AuditError> {
                        let r = template.render(p)?;
                        Ok(QuerySpec {
                            system_text: r.system,
                            prompt_text: r.user,
                            temperature,
                            model_name: study.model_name.clone(),
                            profile: *p,
                            replicate: s as u32,
                            attempt: 0,
                        })
                    };
                    samples.push(PlannedSample { cell: spec(&profile)?, baseline: spec(&profile.baseline())? });
                }
                planned.push(PlannedCell { cell: cell.clone(), temperature_policy: label.clone(), samples });
            }
        }
    }
    Ok(Plan { scheme, cells: planned })
}

/// Final state of one planned query after at most one re-query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectedResponse {
    /// Key of the originally planned query.
    pub key: String,
    /// Attempt whose response was used (or last tried).
    pub attempt: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub majors: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default)]
pub struct Collection {
    responses: Vec<CollectedResponse>,
    index: HashMap<String, usize>,
}

impl Collection {
    pub fn get(&self, key: &str) -> Option<&CollectedResponse> {
        self.index.get(key).map(|&i| &self.responses[i])
    }

    pub fn responses(&self) -> &[CollectedResponse] {
        &self.responses
    }

    pub fn failures(&self) -> usize {
        self.responses.iter().filter(|r| r.majors.is_none()).count()
    }

    /// One JSON object per planned query, in plan order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.responses {
            out.push_str(&serde_json::to_string(r).expect("response serializes"));
            out.push('\n');
        }
        out
    }

    pub fn hash(&self) -> String {
        sha_hex(self.to_jsonl().as_bytes())
    }
}

/// Ten names with no repeats after normalization, or why not.
fn check_response(text: &str) -> Result<Vec<String>, String> {
    let names = parse_recommendations(text).map_err(|e| e.to_string())?;
    let distinct: HashSet<String> = names.iter().map(|n| normalize(n)).collect();
    if distinct.len() < LIST_LEN {
        return Err(format!("response repeats a major ({} distinct)", distinct.len()));
    }
    Ok(names)
}

/// Query every planned spec. Malformed or repeating responses get one
/// re-query with `attempt = 1`; anything still failing is recorded.
pub fn collect(plan: &Plan, client: &RecommenderClient, parallelism: usize) -> Collection {
    let specs = plan.unique_specs();
    let first = client.run_batch(&specs, parallelism);
    let mut responses: Vec<CollectedResponse> = specs
        .iter()
        .zip(first)
        .map(|(spec, r)| {
            let key = spec.key();
            match r {
                Ok(raw) => match check_response(&raw.text) {
                    Ok(m) => CollectedResponse { key, attempt: 0, text: Some(raw.text), error: None, majors: Some(m) },
                    Err(e) => CollectedResponse { key, attempt: 0, text: Some(raw.text), error: Some(e), majors: None },
                },
                Err(e) => CollectedResponse { key, attempt: 0, text: None, error: Some(e.to_string()), majors: None },
            }
        })
        .collect();

    // Only malformed text is retried; transport errors already had retries.
    let retry: Vec<usize> = (0..responses.len()).filter(|&i| responses[i].majors.is_none() && responses[i].text.is_some()).collect();
    if !retry.is_empty() {
        let again: Vec<QuerySpec> = retry.iter().map(|&i| QuerySpec { attempt: 1, ..specs[i].clone() }).collect();
        for (&i, r) in retry.iter().zip(client.run_batch(&again, parallelism)) {
            let slot = &mut responses[i];
            slot.attempt = 1;
            match r {
                Ok(raw) => match check_response(&raw.text) {
                    Ok(m) => {
                        slot.text = Some(raw.text);
                        slot.error = None;
                        slot.majors = Some(m);
                    }
                    Err(e) => {
                        slot.text = Some(raw.text);
                        slot.error = Some(e);
                    }
                },
                Err(e) => {
                    slot.text = None;
                    slot.error = Some(e.to_string());
                }
            }
        }
    }
    let index = responses.iter().enumerate().map(|(i, r)| (r.key.clone(), i)).collect();
    Collection { responses, index }
}

/// Non-finite values (empty cells) travel as JSON `null`.
pub(crate) mod nullable_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub metric: MetricKind,
    pub samples: Vec<f64>,
    #[serde(with = "nullable_f64")]
    pub mean: f64,
    #[serde(with = "nullable_f64")]
    pub ci_lo: f64,
    #[serde(with = "nullable_f64")]
    pub ci_hi: f64,
    pub n: usize,
    /// Planned samples excluded because a response failed.
    pub failures: usize,
    pub reliable: bool,
    pub temperature_policy: String,
    pub vocab_hash: String,
    pub lexicon_hash: String,
    pub cost_matrix_hash: Option<String>,
}

impl CellResult {
    pub fn value(&self) -> Option<DemographicValue> {
        self.cell.value()
    }
}

/// Canonical sets for one cell, kept for the posterior report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSets {
    pub cell: Cell,
    pub temperature_policy: String,
    pub sets: Vec<RecommendationSet>,
}

/// Everything needed to recreate a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: AuditConfig,
    pub seeds: BTreeMap<String, u64>,
    pub backend_identity: String,
    pub temperature_policy: TemperaturePolicy,
    pub vocab_hash: String,
    pub lexicon_hash: String,
    pub embeddings_hash: String,
    pub template_hash: String,
    pub cost_matrix_hash: Option<String>,
    pub responses_hash: String,
    pub cache_file_hash: Option<String>,
    pub backend_calls: usize,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

impl RunManifest {
    /// Hash over the fields that determine outputs. Timestamps, call counts
    /// and the cache file bytes are excluded.
    pub fn fingerprint(&self) -> String {
        let view = serde_json::json!({
            "config": self.config,
            "seeds": self.seeds,
            "backend": self.backend_identity,
            "temperature_policy": self.temperature_policy,
            "vocab": self.vocab_hash,
            "lexicon": self.lexicon_hash,
            "embeddings": self.embeddings_hash,
            "template": self.template_hash,
            "cost_matrix": self.cost_matrix_hash,
            "responses": self.responses_hash,
        });
        sha_hex(view.to_string().as_bytes())
    }
}

#[derive(Debug, Clone)]
pub struct AuditRun {
    pub results: Vec<CellResult>,
    pub manifest: RunManifest,
    pub scheme: BracketScheme,
    pub cell_sets: Vec<CellSets>,
    pub vocab: MajorVocabulary,
    pub collection: Collection,
    /// Planned queries that ended without a usable response.
    pub failed_queries: usize,
}

impl AuditRun {
    /// 0 when every sample was usable, 1 when some were excluded.
    pub fn exit_code(&self) -> i32 {
        i32::from(self.failed_queries > 0)
    }
}

struct WmContext {
    cost: CostMatrix,
    /// Vocabulary id to cost-matrix index.
    position: Vec<Option<usize>>,
}

impl WmContext {
    fn new(vocab: &MajorVocabulary, table: &EmbeddingTable) -> Result<Self, AuditError> {
        let (ids, misses) = embedded_subset(vocab, table);
        if !misses.is_empty() {
            log::warn!("{} majors have no embedding and are left out of the Wasserstein metric: {:?}", misses.len(), misses);
        }
        let cost = build_cost_matrix_for(vocab, &ids, table)?;
        let mut position = vec![None; vocab.len()];
        for (pos, &id) in ids.iter().enumerate() {
            position[id] = Some(pos);
        }
        Ok(Self { cost, position })
    }

    fn distribution(
        &self,
        sets: &[&RecommendationSet],
        weighting: crate::metrics::Weighting,
    ) -> Result<crate::metrics::Distribution, crate::metrics::MetricError> {
        let slots = sets
            .iter()
            .flat_map(|s| s.majors.iter().enumerate())
            .filter_map(|(rank, &id)| self.position[id].map(|p| (rank, p)));
        distribution_from_slots(self.cost.k(), slots, weighting, &RankWeights::default())
    }
}

/// Results, per-cell sets, the built vocabulary and the cost-matrix hash.
pub type Computed = (Vec<CellResult>, Vec<CellSets>, MajorVocabulary, Option<String>);

/// Compute every configured metric for every planned cell.
pub fn compute(
    config: &AuditConfig,
    plan: &Plan,
    collection: &Collection,
    resources: &Resources,
) -> Result<Computed, AuditError> {
    let lexicon = &resources.lexicon;
    let mut vocab = MajorVocabulary::from_lexicon(lexicon);
    let mut sets: HashMap<String, RecommendationSet> = HashMap::new();
    for r in collection.responses() {
        if let Some(names) = &r.majors {
            let set = RecommendationSet::from_names(names, &mut vocab, CanonMode::Extend, lexicon, r.key.clone())?;
            sets.insert(r.key.clone(), set);
        }
    }
    for name in &vocab.unlisted {
        log::warn!("major {name:?} is not in the STEM lexicon; treated as non-STEM");
    }
    let flags = vocab.stem_flags();
    let weights = RankWeights::with_normalizer(config.stats.sds_normalizer)?;
    let wm = if config.study.metrics.contains(&MetricKind::Wasserstein) {
        Some(WmContext::new(&vocab, &resources.embeddings)?)
    } else {
        None
    };
    let cost_hash = wm.as_ref().map(|w| w.cost.hash());
    let vocab_hash = vocab.hash();
    let stats = &config.stats;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.backend.parallelism)
        .build()
        .map_err(|e| AuditError::Config(e.to_string()))?;
    let per_cell: Vec<(Vec<CellResult>, CellSets)> = pool.install(|| {
        plan.cells
            .par_iter()
            .map(|pc| {
                let pairs: Vec<(Option<&RecommendationSet>, Option<&RecommendationSet>)> =
                    pc.samples.iter().map(|s| (sets.get(&s.cell.key()), sets.get(&s.baseline.key()))).collect();
                let cell_sets: Vec<&RecommendationSet> = pairs.iter().filter_map(|p| p.0).collect();
                let base_sets: Vec<&RecommendationSet> = pairs.iter().filter_map(|p| p.1).collect();
                let failures = pairs.iter().filter(|(a, b)| a.is_none() || b.is_none()).count();
                let tag = format!("{}|{}", pc.temperature_policy, pc.cell.key());
                let results = config
                    .study
                    .metrics
                    .iter()
                    .map(|&metric| {
                        let seed = derive_seed(config.study.seed, &["ci", &tag, metric.as_str()]);
                        let (samples, interval) = match metric {
                            MetricKind::Jaccard => {
                                let xs: Vec<f64> =
                                    pairs.iter().filter_map(|p| Some(jaccard_sets(p.0?, p.1?))).collect();
                                let iv = sample_interval(&xs, stats, seed);
                                (xs, iv)
                            }
                            MetricKind::Sds => {
                                let xs: Vec<f64> = cell_sets.iter().map(|s| sds(s, &flags, &weights)).collect();
                                let iv = sample_interval(&xs, stats, seed);
                                (xs, iv)
                            }
                            MetricKind::Wasserstein => {
                                let ctx = wm.as_ref().expect("built when selected");
                                let xs = wm_replicates(ctx, &cell_sets, &base_sets, stats, seed);
                                let iv = if xs.is_empty() {
                                    (f64::NAN, f64::NAN, f64::NAN)
                                } else {
                                    let m = mean(&xs);
                                    let (lo, hi) = percentile_interval(&xs, stats.ci_level, m);
                                    (m, lo, hi)
                                };
                                (xs, iv)
                            }
                        };
                        let valid = match metric {
                            MetricKind::Sds => cell_sets.len(),
                            MetricKind::Jaccard => samples.len(),
                            MetricKind::Wasserstein => cell_sets.len().min(base_sets.len()),
                        };
                        CellResult {
                            cell: pc.cell.clone(),
                            metric,
                            n: samples.len(),
                            mean: interval.0,
                            ci_lo: interval.1,
                            ci_hi: interval.2,
                            samples,
                            failures,
                            reliable: valid >= config.study.min_valid,
                            temperature_policy: pc.temperature_policy.clone(),
                            vocab_hash: vocab_hash.clone(),
                            lexicon_hash: lexicon.hash().to_string(),
                            cost_matrix_hash: if metric == MetricKind::Wasserstein { cost_hash.clone() } else { None },
                        }
                    })
                    .collect();
                let kept = CellSets {
                    cell: pc.cell.clone(),
                    temperature_policy: pc.temperature_policy.clone(),
                    sets: cell_sets.into_iter().cloned().collect(),
                };
                (results, kept)
            })
            .collect()
    });
    let mut results = Vec::new();
    let mut kept = Vec::new();
    for (r, k) in per_cell {
        results.extend(r);
        kept.push(k);
    }
    Ok((results, kept, vocab, cost_hash))
}

fn sample_interval(xs: &[f64], stats: &StatsConfig, seed: u64) -> (f64, f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let iv = mean_ci(xs, stats.ci_level, stats.ci_method, stats.resamples, seed);
    (iv.mean, iv.lo, iv.hi)
}

/// One distance per bootstrap resample of the cell and baseline sets.
fn wm_replicates(
    ctx: &WmContext,
    cell: &[&RecommendationSet],
    base: &[&RecommendationSet],
    stats: &StatsConfig,
    seed: u64,
) -> Vec<f64> {
    if cell.is_empty() || base.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(stats.wm_resamples);
    for _ in 0..stats.wm_resamples {
        let a: Vec<&RecommendationSet> = (0..cell.len()).map(|_| cell[rng.random_range(0..cell.len())]).collect();
        let b: Vec<&RecommendationSet> = (0..base.len()).map(|_| base[rng.random_range(0..base.len())]).collect();
        let (Ok(u), Ok(v)) = (ctx.distribution(&a, stats.wm_weighting), ctx.distribution(&b, stats.wm_weighting)) else {
            continue;
        };
        match wasserstein(&u, &v, &ctx.cost) {
            Ok((d, _)) => out.push(d),
            Err(e) => log::warn!("wasserstein replicate failed: {e}"),
        }
    }
    out
}

/// Plan, collect, and compute in one go.
pub fn run_audit(config: &AuditConfig, client: &RecommenderClient) -> Result<AuditRun, AuditError> {
    let started_at = Utc::now();
    let resources = Resources::load(config)?;
    let plan = plan(config, &resources.template)?;
    let collection = collect(&plan, client, config.backend.parallelism);
    let (results, cell_sets, vocab, cost_matrix_hash) = compute(config, &plan, &collection, &resources)?;
    let mut seeds = BTreeMap::new();
    seeds.insert("study".to_string(), config.study.seed);
    seeds.insert("synthetic".to_string(), config.backend.synthetic.seed);
    let manifest = RunManifest {
        config: config.clone(),
        seeds,
        backend_identity: config.backend_identity(),
        temperature_policy: config.study.temperature_policy,
        vocab_hash: vocab.hash(),
        lexicon_hash: resources.lexicon.hash().to_string(),
        embeddings_hash: resources.embeddings_hash.clone(),
        template_hash: resources.template_hash.clone(),
        cost_matrix_hash,
        responses_hash: collection.hash(),
        cache_file_hash: client.cache_file_hash(),
        backend_calls: client.backend_calls(),
        started_at,
        finished_at: Utc::now(),
    };
    Ok(AuditRun { results, manifest, scheme: plan.scheme, cell_sets, vocab, failed_queries: collection.failures(), collection })
}
