use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::AuditError;
use crate::demographics::DemographicValue;
use crate::metrics::Weighting;
use crate::prompt::{BracketScheme, CellDesign};
use crate::recommender::{LiveConfig, SyntheticBiasModel};
use crate::stats::CiMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Jaccard,
    Wasserstein,
    Sds,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Jaccard, MetricKind::Wasserstein, MetricKind::Sds];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Jaccard => "jaccard",
            MetricKind::Wasserstein => "wasserstein",
            MetricKind::Sds => "sds",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jaccard" | "jc" => Ok(MetricKind::Jaccard),
            "wasserstein" | "wm" | "emd" => Ok(MetricKind::Wasserstein),
            "sds" => Ok(MetricKind::Sds),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperaturePolicy {
    /// Samples cycle through the temperatures and are aggregated together.
    #[default]
    Pooled,
    /// Each temperature gets its own full set of results.
    PerTemperature,
    /// Pooled results plus one set per temperature.
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// `quintiles`, `deciles`, or `uniform:<width>`.
    pub brackets: String,
    /// Value keys such as `male` or `lgbtq_plus`; empty means all twelve.
    pub values: Vec<DemographicValue>,
    pub design: CellDesign,
    pub n_per_cell: usize,
    /// Cells with fewer valid samples are flagged unreliable.
    pub min_valid: usize,
    pub metrics: Vec<MetricKind>,
    pub temperatures: Vec<f64>,
    pub temperature_policy: TemperaturePolicy,
    pub model_name: String,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            brackets: "quintiles".into(),
            values: Vec::new(),
            design: CellDesign::OneAtATime,
            n_per_cell: 100,
            min_valid: 20,
            metrics: MetricKind::ALL.to_vec(),
            temperatures: vec![0.0, 0.7, 1.0],
            temperature_policy: TemperaturePolicy::Pooled,
            model_name: "gpt-3.5-turbo".into(),
            seed: 20230301,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub template: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    /// Word2vec file; the shipped fixture is used when unset.
    pub embeddings: Option<PathBuf>,
    /// Response cache; in-memory when unset.
    pub cache: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub ci_level: f64,
    pub ci_method: CiMethod,
    pub resamples: usize,
    /// Bootstrap replicates per cell for the Wasserstein metric.
    pub wm_resamples: usize,
    pub wm_weighting: Weighting,
    /// SDS divisor: 10 or 55.
    pub sds_normalizer: f64,
    /// Top-k cut-off for the STEM event in the posterior report.
    pub bayes_top_k: usize,
    /// Prior over deciles for the posterior report; uniform when empty.
    pub score_prior: Vec<f64>,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            ci_level: 0.95,
            ci_method: CiMethod::PercentileBootstrap,
            resamples: 1000,
            wm_resamples: 100,
            wm_weighting: Weighting::Uniform,
            sds_normalizer: 10.0,
            bayes_top_k: 3,
            score_prior: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Synthetic,
    Live,
}

impl std::str::FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "synthetic" => Ok(BackendKind::Synthetic),
            "live" => Ok(BackendKind::Live),
            other => Err(format!("unknown backend {other:?} (expected live or synthetic)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub parallelism: usize,
    /// Requests per minute; 0 disables limiting.
    pub rate_limit: f64,
    pub synthetic: SyntheticBiasModel,
    pub live: LiveConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Synthetic,
            parallelism: 4,
            rate_limit: 0.0,
            synthetic: SyntheticBiasModel::default(),
            live: LiveConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub study: StudyConfig,
    pub paths: PathsConfig,
    pub stats: StatsConfig,
    pub backend: BackendConfig,
}

impl AuditConfig {
    pub fn from_toml(text: &str) -> Result<Self, AuditError> {
        let cfg: Self = toml::from_str(text).map_err(|e| AuditError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a config file. Relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, AuditError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| AuditError::Config(format!("reading {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.paths.resolve_against(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn scheme(&self) -> Result<BracketScheme, AuditError> {
        parse_scheme(&self.study.brackets)
    }

    pub fn values(&self) -> Vec<DemographicValue> {
        if self.study.values.is_empty() {
            DemographicValue::all_specified().to_vec()
        } else {
            self.study.values.clone()
        }
    }

    /// Stable description of the configured backend.
    pub fn backend_identity(&self) -> String {
        match self.backend.kind {
            BackendKind::Synthetic => format!("synthetic(seed={})", self.backend.synthetic.seed),
            BackendKind::Live => format!("live({}, {})", self.study.model_name, self.backend.live.endpoint),
        }
    }

    pub fn validate(&self) -> Result<(), AuditError> {
        let bad = |m: String| Err(AuditError::Config(m));
        self.scheme()?;
        let s = &self.study;
        if s.n_per_cell == 0 {
            return bad("n_per_cell must be positive".into());
        }
        if s.metrics.is_empty() {
            return bad("no metrics selected".into());
        }
        if s.temperatures.is_empty() {
            return bad("at least one temperature is required".into());
        }
        if let Some(t) = s.temperatures.iter().find(|t| !(0.0..=2.0).contains(*t)) {
            return bad(format!("temperature {t} outside [0,2]"));
        }
        if s.values.iter().any(|v| v.is_unspecified()) {
            return bad("values must be specified demographic values".into());
        }
        if s.model_name.trim().is_empty() {
            return bad("model_name is empty".into());
        }
        let st = &self.stats;
        if !(st.ci_level > 0.0 && st.ci_level < 1.0) {
            return bad(format!("ci_level {} outside (0,1)", st.ci_level));
        }
        if st.resamples == 0 || st.wm_resamples == 0 {
            return bad("resample counts must be positive".into());
        }
        if !(st.sds_normalizer.is_finite() && st.sds_normalizer > 0.0) {
            return bad(format!("sds_normalizer {} must be positive", st.sds_normalizer));
        }
        if !(1..=10).contains(&st.bayes_top_k) {
            return bad(format!("bayes_top_k {} outside 1..=10", st.bayes_top_k));
        }
        if !st.score_prior.is_empty() && st.score_prior.len() != 10 {
            return bad(format!("score_prior needs 10 entries, got {}", st.score_prior.len()));
        }
        if self.backend.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if !(self.backend.rate_limit.is_finite() && self.backend.rate_limit >= 0.0) {
            return bad("rate_limit must be a non-negative number".into());
        }
        if self.backend.kind == BackendKind::Synthetic {
            self.backend.synthetic.validate().map_err(|e| AuditError::Config(e.to_string()))?;
        }
        for (name, p) in [("template", &self.paths.template), ("lexicon", &self.paths.lexicon), ("embeddings", &self.paths.embeddings)] {
            if let Some(p) = p.as_ref().filter(|p| !p.exists()) {
                return bad(format!("{name} file {} does not exist", p.display()));
            }
        }
        Ok(())
    }
}

impl PathsConfig {
    fn resolve_against(&mut self, dir: &Path) {
        for p in [&mut self.template, &mut self.lexicon, &mut self.embeddings, &mut self.cache, &mut self.output_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
}

pub fn parse_scheme(spec: &str) -> Result<BracketScheme, AuditError> {
    let spec = spec.trim();
    match spec {
        "quintiles" => Ok(BracketScheme::quintiles()),
        "deciles" => Ok(BracketScheme::deciles()),
        _ => {
            let width = spec
                .strip_prefix("uniform:")
                .and_then(|w| w.parse::<u8>().ok())
                .ok_or_else(|| AuditError::Config(format!("bracket scheme {spec:?}: use quintiles, deciles or uniform:<width>")))?;
            BracketScheme::uniform(width).map_err(|e| AuditError::Config(e.to_string()))
        }
    }
}
