use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AuditError, CellSets};
use crate::demographics::DemographicValue;
use crate::metrics::{bayes_score_posterior, stem_in_top_k, BayesInputs, MetricError, TopK};
use crate::prompt::BracketScheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesGroup {
    pub group: DemographicValue,
    /// Empirical `P(STEM in top k | decile, group)`.
    pub likelihood: Vec<f64>,
    pub sets_per_decile: Vec<usize>,
    pub posterior: Vec<f64>,
    /// `P(STEM in top k | group)` under the prior.
    pub p_stem: f64,
    pub posterior_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesReport {
    pub k: usize,
    /// Decile upper percentiles, 10..=100.
    pub levels: Vec<f64>,
    pub prior: Vec<f64>,
    pub prior_mean: f64,
    pub groups: Vec<BayesGroup>,
}

impl BayesReport {
    pub fn to_csv(&self, manifest_hash: &str) -> String {
        let mut out = format!("# manifest: {manifest_hash}\ngroup,decile,prior,likelihood,posterior,sets\n");
        for g in &self.groups {
            for (i, x) in self.levels.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{:.6},{:.6},{:.6},{}",
                    g.group.key(),
                    x,
                    self.prior[i],
                    g.likelihood[i],
                    g.posterior[i],
                    g.sets_per_decile[i]
                );
            }
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = format!("STEM in top {} | prior mean percentile {:.2}\n", self.k, self.prior_mean);
        for g in &self.groups {
            let _ = writeln!(
                out,
                "{:<32} P(STEM) {:.4}  posterior mean percentile {:.2}",
                g.group.label(),
                g.p_stem,
                g.posterior_mean
            );
        }
        if let [a, b] = self.groups.as_slice() {
            if b.p_stem > 0.0 {
                let _ = writeln!(out, "P(STEM) ratio {} / {}: {:.3}", a.group.label(), b.group.label(), a.p_stem / b.p_stem);
            }
        }
        out
    }
}

/// Posterior over score deciles given a top-k STEM recommendation, per group.
///
/// `prior` defaults to uniform and is normalized when supplied.
pub fn bayes_report(
    cells: &[CellSets],
    stem_flags: &[bool],
    scheme: &BracketScheme,
    groups: &[DemographicValue],
    k: TopK,
    prior: Option<&[f64]>,
) -> Result<BayesReport, AuditError> {
    if !scheme.is_deciles() {
        return Err(AuditError::NotDeciles);
    }
    let brackets = scheme.brackets();
    let levels: Vec<f64> = brackets.iter().map(|b| f64::from(b.hi)).collect();
    let prior: Vec<f64> = match prior {
        Some(p) if p.len() == levels.len() && p.iter().all(|x| *x >= 0.0) && p.iter().sum::<f64>() > 0.0 => {
            let s: f64 = p.iter().sum();
            p.iter().map(|x| x / s).collect()
        }
        Some(p) => return Err(AuditError::Config(format!("score prior of length {} is not a valid decile prior", p.len()))),
        None => vec![1.0 / levels.len() as f64; levels.len()],
    };
    let prior_mean: f64 = levels.iter().zip(&prior).map(|(x, p)| x * p).sum();

    let mut out = Vec::new();
    for &group in groups {
        let mut likelihood = Vec::with_capacity(brackets.len());
        let mut counts = Vec::with_capacity(brackets.len());
        for b in brackets {
            let sets: Vec<_> = cells
                .iter()
                .filter(|c| c.cell.bracket == *b && c.cell.value() == Some(group))
                .flat_map(|c| c.sets.iter())
                .collect();
            let hits = sets.iter().filter(|s| stem_in_top_k(s, stem_flags, k)).count();
            counts.push(sets.len());
            likelihood.push(if sets.is_empty() { 0.0 } else { hits as f64 / sets.len() as f64 });
        }
        let inputs = BayesInputs::new(levels.clone(), likelihood.clone(), prior.clone())?;
        let posterior = match bayes_score_posterior(&inputs) {
            Ok(d) => d.mass().to_vec(),
            Err(MetricError::NoStemEvidence) => return Err(AuditError::NoStemEvidence(group.label().to_string())),
            Err(e) => return Err(e.into()),
        };
        let p_stem = likelihood.iter().zip(&prior).map(|(l, p)| l * p).sum();
        let posterior_mean = levels.iter().zip(&posterior).map(|(x, p)| x * p).sum();
        out.push(BayesGroup { group, likelihood, sets_per_decile: counts, posterior, p_stem, posterior_mean });
    }
    Ok(BayesReport { k: k.get(), levels, prior, prior_mean, groups: out })
}
