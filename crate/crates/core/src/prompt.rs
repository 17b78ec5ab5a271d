//! The audit cell matrix, profile sampling and prompt rendering.

use std::collections::BTreeSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::demographics::{DemographicValue, Demographics, Gender, Race, Ses};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("invalid bracket scheme: {0}")]
    Scheme(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("percentile {0} outside 1..=100")]
    Percentile(u8),
}

/// Standard score percentile, 1 (lowest) to 100 (highest).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Percentile(u8);

impl Percentile {
    pub fn new(p: u8) -> Result<Self, PromptError> {
        if (1..=100).contains(&p) {
            Ok(Self(p))
        } else {
            Err(PromptError::Percentile(p))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// The "top N%" share shown to the model: percentile 100 is the top 1%.
    pub fn top_share(self) -> u8 {
        101 - self.0
    }
}

impl TryFrom<u8> for Percentile {
    type Error = PromptError;
    fn try_from(p: u8) -> Result<Self, Self::Error> {
        Self::new(p)
    }
}

impl From<Percentile> for u8 {
    fn from(p: Percentile) -> u8 {
        p.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StudentProfile {
    pub gender: Gender,
    pub race: Race,
    pub ses: Ses,
    pub score_percentile: Percentile,
}

impl StudentProfile {
    pub fn new(demographics: Demographics, score_percentile: Percentile) -> Self {
        Self { gender: demographics.gender, race: demographics.race, ses: demographics.ses, score_percentile }
    }

    pub fn demographics(&self) -> Demographics {
        Demographics { gender: self.gender, race: self.race, ses: self.ses }
    }

    /// Same percentile with every demographic dimension unspecified.
    pub fn baseline(&self) -> Self {
        Self::new(Demographics::baseline(), self.score_percentile)
    }
}

/// Inclusive percentile interval.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ScoreBracket {
    pub lo: u8,
    pub hi: u8,
    pub label: String,
}

impl ScoreBracket {
    pub fn new(lo: u8, hi: u8) -> Result<Self, PromptError> {
        if lo < 1 || hi > 100 || lo > hi {
            return Err(PromptError::Scheme(format!("bracket [{lo},{hi}] not within 1..=100")));
        }
        Ok(Self { lo, hi, label: format!("{}-{}%", lo - 1, hi) })
    }

    pub fn contains(&self, p: u8) -> bool {
        (self.lo..=self.hi).contains(&p)
    }

    pub fn width(&self) -> u8 {
        self.hi - self.lo + 1
    }
}

impl fmt::Display for ScoreBracket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// An ordered set of disjoint brackets covering 1..=100.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ScoreBracket>", into = "Vec<ScoreBracket>")]
pub struct BracketScheme(Vec<ScoreBracket>);

impl BracketScheme {
    pub fn new(mut brackets: Vec<ScoreBracket>) -> Result<Self, PromptError> {
        if brackets.is_empty() {
            return Err(PromptError::Scheme("no brackets".into()));
        }
        brackets.sort_by_key(|b| (b.lo, b.hi));
        let mut next = 1u16;
        for b in &brackets {
            if b.lo == 0 || b.lo > b.hi || b.hi > 100 {
                return Err(PromptError::Scheme(format!("bracket [{},{}] invalid", b.lo, b.hi)));
            }
            if u16::from(b.lo) < next {
                return Err(PromptError::Scheme(format!("bracket {} overlaps its predecessor", b.label)));
            }
            if u16::from(b.lo) > next {
                return Err(PromptError::Scheme(format!("percentiles {next}..{} are not covered", b.lo)));
            }
            next = u16::from(b.hi) + 1;
        }
        if next != 101 {
            return Err(PromptError::Scheme(format!("percentiles {next}..=100 are not covered")));
        }
        Ok(Self(brackets))
    }

    /// Equal-width brackets; `width` must divide 100.
    pub fn uniform(width: u8) -> Result<Self, PromptError> {
        if width == 0 || 100 % width != 0 {
            return Err(PromptError::Scheme(format!("width {width} does not divide 100")));
        }
        let brackets = (0..100 / width).map(|i| ScoreBracket::new(i * width + 1, (i + 1) * width)).collect::<Result<_, _>>()?;
        Self::new(brackets)
    }

    /// Five 20-point brackets.
    pub fn quintiles() -> Self {
        Self::uniform(20).expect("20 divides 100")
    }

    pub fn deciles() -> Self {
        Self::uniform(10).expect("10 divides 100")
    }

    pub fn is_deciles(&self) -> bool {
        self.0.len() == 10 && self.0.iter().all(|b| b.width() == 10)
    }

    pub fn brackets(&self) -> &[ScoreBracket] {
        &self.0
    }

    pub fn bracket_of(&self, p: u8) -> Option<&ScoreBracket> {
        self.0.iter().find(|b| b.contains(p))
    }
}

impl TryFrom<Vec<ScoreBracket>> for BracketScheme {
    type Error = PromptError;
    fn try_from(v: Vec<ScoreBracket>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<BracketScheme> for Vec<ScoreBracket> {
    fn from(s: BracketScheme) -> Self {
        s.0
    }
}

/// One audit unit: a score bracket crossed with a demographic setting.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub bracket: ScoreBracket,
    pub demographics: Demographics,
}

impl Cell {
    /// The varied value for one-at-a-time cells.
    pub fn value(&self) -> Option<DemographicValue> {
        self.demographics.single_value()
    }

    pub fn key(&self) -> String {
        format!("{}|{}", self.bracket.label, self.demographics.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellDesign {
    #[default]
    OneAtATime,
    FullCross,
}

/// Brackets × varied values, one demographic value per cell and the other
/// two dimensions unspecified. Bracket-major order.
pub fn enumerate_cells(scheme: &BracketScheme, values: &[DemographicValue]) -> Vec<Cell> {
    let values: BTreeSet<_> = values.iter().copied().filter(|v| !v.is_unspecified()).collect();
    let ordered: Vec<_> = DemographicValue::all_specified().into_iter().filter(|v| values.contains(v)).collect();
    scheme
        .brackets()
        .iter()
        .flat_map(|b| ordered.iter().map(move |&v| Cell { bracket: b.clone(), demographics: Demographics::with_value(v) }))
        .collect()
}

/// Every fully specified gender × ses × race combination per bracket.
pub fn enumerate_full_cross(scheme: &BracketScheme) -> Vec<Cell> {
    let mut combos = Vec::new();
    for g in Gender::SPECIFIED {
        for s in Ses::SPECIFIED {
            for r in Race::SPECIFIED {
                combos.push(Demographics { gender: g, race: r, ses: s });
            }
        }
    }
    scheme
        .brackets()
        .iter()
        .flat_map(|b| combos.iter().map(move |&d| Cell { bracket: b.clone(), demographics: d }))
        .collect()
}

pub fn enumerate(scheme: &BracketScheme, values: &[DemographicValue], design: CellDesign) -> Vec<Cell> {
    match design {
        CellDesign::OneAtATime => enumerate_cells(scheme, values),
        CellDesign::FullCross => enumerate_full_cross(scheme),
    }
}

/// `n` profiles with percentiles uniform over the cell's bracket.
pub fn sample_profiles(cell: &Cell, n: usize, seed: u64) -> Vec<StudentProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let p = rng.random_range(cell.bracket.lo..=cell.bracket.hi);
            StudentProfile::new(cell.demographics, Percentile(p))
        })
        .collect()
}

/// The two prompt parts sent to the model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

const PLACEHOLDERS: [&str; 4] = ["percentile", "race", "gender", "ses"];

/// System persona plus student-information text with
/// `{percentile}`, `{race}`, `{gender}` and `{ses}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub system_text: String,
    pub student_info_text: String,
}

const DEFAULT_TEMPLATE: &str = include_str!("../data/prompt_template.txt");

fn placeholder_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([^{}\s]*)\}").expect("static regex"))
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATE).expect("shipped template is valid")
    }
}

impl PromptTemplate {
    pub fn new(system_text: impl Into<String>, student_info_text: impl Into<String>) -> Result<Self, PromptError> {
        let t = Self { system_text: system_text.into(), student_info_text: student_info_text.into() };
        t.validate()?;
        Ok(t)
    }

    /// Parse the two-section template file format:
    ///
    /// ```text
    /// [system]
    /// ...
    /// [student]
    /// ...
    /// ```
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut system: Option<Vec<&str>> = None;
        let mut student: Option<Vec<&str>> = None;
        let mut current: Option<&mut Vec<&str>> = None;
        for line in text.lines() {
            match line.trim() {
                "[system]" => current = Some(system.insert(Vec::new())),
                "[student]" => current = Some(student.insert(Vec::new())),
                _ => match current.as_mut() {
                    Some(buf) => buf.push(line),
                    None if line.trim().is_empty() || line.trim_start().starts_with('#') => {}
                    None => return Err(PromptError::Template("text before the first section header".into())),
                },
            }
        }
        let join = |v: Option<Vec<&str>>, name: &str| {
            v.map(|lines| lines.join("\n").trim().to_string())
                .ok_or_else(|| PromptError::Template(format!("missing [{name}] section")))
        };
        Self::new(join(system, "system")?, join(student, "student")?)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let re = placeholder_re();
        for text in [&self.system_text, &self.student_info_text] {
            for cap in re.captures_iter(text) {
                let name = &cap[1];
                if !PLACEHOLDERS.contains(&name) {
                    return Err(PromptError::Template(format!("unknown placeholder {{{name}}}")));
                }
            }
        }
        Ok(())
    }

    fn fill(text: &str, profile: &StudentProfile) -> Result<String, PromptError> {
        let d = profile.demographics();
        let mut err = None;
        let out = placeholder_re().replace_all(text, |cap: &regex::Captures<'_>| match &cap[1] {
            "percentile" => format!("{}%", profile.score_percentile.top_share()),
            "race" => DemographicValue::Race(d.race).prompt_text().to_string(),
            "gender" => DemographicValue::Gender(d.gender).prompt_text().to_string(),
            "ses" => DemographicValue::Ses(d.ses).prompt_text().to_string(),
            other => {
                err = Some(PromptError::Template(format!("unknown placeholder {{{other}}}")));
                String::new()
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(out.into_owned()),
        }
    }

    pub fn render(&self, profile: &StudentProfile) -> Result<RenderedPrompt, PromptError> {
        Ok(RenderedPrompt { system: Self::fill(&self.system_text, profile)?, user: Self::fill(&self.student_info_text, profile)? })
    }
}

pub fn render_prompt(profile: &StudentProfile, template: &PromptTemplate) -> Result<RenderedPrompt, PromptError> {
    template.render(profile)
}
