use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AuditError, AuditRun, CellResult, MetricKind};
use crate::demographics::{DemographicValue, Demographics, Dimension};
use crate::prompt::BracketScheme;

const MISSING: &str = "—";

fn manifest_line(hash: &str) -> String {
    format!("# manifest: {hash}\n")
}

fn fmt_cell(r: &CellResult) -> String {
    if r.n == 0 || !r.mean.is_finite() {
        return MISSING.to_string();
    }
    let mut s = format!("{:.3} [{:.3},{:.3}]", r.mean, r.ci_lo, r.ci_hi);
    if !r.reliable {
        s.push_str(" *");
    }
    s
}

fn row_order(d: &Demographics) -> (usize, Demographics) {
    let all = DemographicValue::all_specified();
    let rank = d.single_value().and_then(|v| all.iter().position(|a| *a == v)).unwrap_or(all.len());
    (rank, *d)
}

fn row_label(d: &Demographics) -> String {
    d.single_value().map_or_else(|| d.label(), |v| v.label().to_string())
}

fn row_dimension(d: &Demographics) -> Option<Dimension> {
    d.single_value().map(DemographicValue::dimension)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableReport {
    pub csv: String,
    pub text: String,
}

/// Grid of `mean [lo,hi]` cells: demographic rows grouped by dimension,
/// one column per bracket. Cells absent from `results` print as a dash.
pub fn emit_table(results: &[CellResult], metric: MetricKind, scheme: &BracketScheme, manifest_hash: &str) -> TableReport {
    let mut grid: BTreeMap<(usize, Demographics), BTreeMap<String, String>> = BTreeMap::new();
    for r in results.iter().filter(|r| r.metric == metric) {
        grid.entry(row_order(&r.cell.demographics))
            .or_default()
            .entry(r.cell.bracket.label.clone())
            .or_insert_with(|| fmt_cell(r));
    }
    let columns: Vec<&str> = scheme.brackets().iter().map(|b| b.label.as_str()).collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["dimension", "group"];
    header.extend(&columns);
    w.write_record(&header).expect("in-memory write");
    let mut rows: Vec<(Option<Dimension>, String, Vec<String>)> = Vec::new();
    for ((_, d), cells) in &grid {
        let values: Vec<String> = columns.iter().map(|c| cells.get(*c).cloned().unwrap_or_else(|| MISSING.to_string())).collect();
        let dim = row_dimension(d);
        let mut rec = vec![dim.map_or("cross", |x| x.as_str()).to_string(), row_label(d)];
        rec.extend(values.iter().cloned());
        w.write_record(&rec).expect("in-memory write");
        rows.push((dim, row_label(d), values));
    }
    let mut csv = manifest_line(manifest_hash);
    csv.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf-8"));

    let label_w = rows.iter().map(|r| r.1.chars().count() + 2).chain([metric.as_str().len()]).max().unwrap_or(8);
    let col_w: Vec<usize> = columns
        .iter()
        .enumerate()
        .map(|(i, c)| rows.iter().map(|r| r.2[i].chars().count()).chain([c.chars().count()]).max().unwrap_or(1))
        .collect();
    let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w.saturating_sub(s.chars().count())));
    let mut text = manifest_line(manifest_hash);
    let mut line = pad(metric.as_str(), label_w);
    for (c, w) in columns.iter().zip(&col_w) {
        line.push_str(" | ");
        line.push_str(&pad(c, *w));
    }
    text.push_str(line.trim_end());
    text.push('\n');
    let mut last_dim = None;
    for (dim, label, values) in &rows {
        if *dim != last_dim {
            let title = dim.map_or("Cross", |d| d.title());
            let _ = writeln!(text, "{title}");
            last_dim = *dim;
        }
        let mut line = pad(&format!("  {label}"), label_w);
        for (v, w) in values.iter().zip(&col_w) {
            line.push_str(" | ");
            line.push_str(&pad(v, *w));
        }
        text.push_str(line.trim_end());
        text.push('\n');
    }
    if results.iter().any(|r| r.metric == metric && !r.reliable) {
        text.push_str("* fewer valid samples than the configured minimum\n");
    }
    TableReport { csv, text }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    /// Upper percentile of the decile.
    pub x: u8,
    #[serde(with = "super::nullable_f64")]
    pub mean: f64,
    #[serde(with = "super::nullable_f64")]
    pub lo: f64,
    #[serde(with = "super::nullable_f64")]
    pub hi: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub group: DemographicValue,
    pub label: String,
    pub points: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFile {
    pub manifest: String,
    pub metric: MetricKind,
    pub dimension: Dimension,
    pub series: Vec<Series>,
}

impl SeriesFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("series serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_csv(&self) -> String {
        let mut out = manifest_line(&self.manifest);
        out.push_str("group,x,mean,lo,hi,n\n");
        for s in &self.series {
            for p in &s.points {
                let _ = writeln!(out, "{},{},{:.6},{:.6},{:.6},{}", s.group.key(), p.x, p.mean, p.lo, p.hi, p.n);
            }
        }
        out
    }
}

/// One series per value of `dimension`, ten decile points each.
pub fn emit_series(
    results: &[CellResult],
    metric: MetricKind,
    dimension: Dimension,
    scheme: &BracketScheme,
    manifest_hash: &str,
) -> Result<SeriesFile, AuditError> {
    if !scheme.is_deciles() {
        return Err(AuditError::NotDeciles);
    }
    let mut by_group: BTreeMap<usize, Series> = BTreeMap::new();
    let order = DemographicValue::all_specified();
    for r in results.iter().filter(|r| r.metric == metric) {
        let Some(v) = r.value().filter(|v| v.dimension() == dimension) else { continue };
        let rank = order.iter().position(|a| *a == v).unwrap_or(order.len());
        let s = by_group.entry(rank).or_insert_with(|| Series { group: v, label: v.label().to_string(), points: Vec::new() });
        if s.points.iter().all(|p| p.x != r.cell.bracket.hi) {
            s.points.push(Point { x: r.cell.bracket.hi, mean: r.mean, lo: r.ci_lo, hi: r.ci_hi, n: r.n });
        }
    }
    let mut series: Vec<Series> = by_group.into_values().collect();
    for s in &mut series {
        s.points.sort_by_key(|p| p.x);
    }
    Ok(SeriesFile { manifest: manifest_hash.to_string(), metric, dimension, series })
}

/// Long-format CSV of every cell result.
pub fn results_csv(results: &[CellResult], manifest_hash: &str) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "temperature_policy",
        "bracket",
        "cell",
        "metric",
        "n",
        "failures",
        "mean",
        "ci_lo",
        "ci_hi",
        "reliable",
        "vocab_hash",
        "lexicon_hash",
        "cost_matrix_hash",
    ])
    .expect("in-memory write");
    for r in results {
        w.write_record([
            r.temperature_policy.clone(),
            r.cell.bracket.label.clone(),
            r.cell.demographics.label(),
            r.metric.to_string(),
            r.n.to_string(),
            r.failures.to_string(),
            format!("{:.6}", r.mean),
            format!("{:.6}", r.ci_lo),
            format!("{:.6}", r.ci_hi),
            r.reliable.to_string(),
            r.vocab_hash.clone(),
            r.lexicon_hash.clone(),
            r.cost_matrix_hash.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    manifest_line(manifest_hash) + &String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Cell results as written by `metrics` and read back by `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub manifest: String,
    pub scheme: BracketScheme,
    pub metrics: Vec<MetricKind>,
    pub results: Vec<CellResult>,
}

impl ResultsFile {
    pub fn from_run(run: &AuditRun) -> Self {
        Self {
            manifest: run.manifest.fingerprint(),
            scheme: run.scheme.clone(),
            metrics: run.manifest.config.study.metrics.clone(),
            results: run.results.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, AuditError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| AuditError::Config(format!("{}: {e}", path.display())))
    }

    /// Results grouped by temperature policy, in first-seen order.
    pub fn by_policy(&self) -> Vec<(String, Vec<CellResult>)> {
        let mut out: Vec<(String, Vec<CellResult>)> = Vec::new();
        for r in &self.results {
            match out.iter_mut().find(|(p, _)| *p == r.temperature_policy) {
                Some((_, v)) => v.push(r.clone()),
                None => out.push((r.temperature_policy.clone(), vec![r.clone()])),
            }
        }
        out
    }
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' }).collect()
}

/// Write manifest, results, tables and (for deciles) series into `dir`.
pub fn write_outputs(run: &AuditRun, dir: &Path) -> Result<Vec<PathBuf>, AuditError> {
    std::fs::create_dir_all(dir)?;
    let hash = run.manifest.fingerprint();
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<(), AuditError> {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    put("manifest.json".into(), serde_json::to_string_pretty(&run.manifest).expect("manifest serializes") + "\n")?;
    put("results.csv".into(), results_csv(&run.results, &hash))?;
    put("responses.jsonl".into(), run.collection.to_jsonl())?;
    let file = ResultsFile::from_run(run);
    put("results.json".into(), serde_json::to_string(&file).expect("results serialize") + "\n")?;

    let policies = file.by_policy();
    for (policy, subset) in &policies {
        let suffix = if policies.len() > 1 { format!("_{}", slug(policy)) } else { String::new() };
        for metric in &file.metrics {
            let t = emit_table(subset, *metric, &run.scheme, &hash);
            put(format!("table_{metric}{suffix}.csv"), t.csv)?;
            put(format!("table_{metric}{suffix}.txt"), t.text)?;
            if run.scheme.is_deciles() {
                for dim in Dimension::ALL {
                    let s = emit_series(subset, *metric, dim, &run.scheme, &hash)?;
                    if s.series.is_empty() {
                        continue;
                    }
                    put(format!("series_{metric}_{}{suffix}.csv", dim.as_str()), s.to_csv())?;
                    put(format!("series_{metric}_{}{suffix}.json", dim.as_str()), s.to_json())?;
                }
            }
        }
    }
    Ok(written)
}
