//! Recommendation-list parsing, major-name canonicalization and STEM flags.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Number of ranked majors in one recommendation.
pub const LIST_LEN: usize = 10;

/// Dense index into a [`MajorVocabulary`].
pub type MajorId = usize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VocabError {
    #[error("malformed response ({reason}): {text:?}")]
    Malformed { reason: String, text: String },
    #[error("unknown major `{name}`; nearest: {suggestions:?}")]
    UnknownMajor { name: String, suggestions: Vec<String> },
    #[error("empty major name")]
    Empty,
    #[error("lexicon error: {0}")]
    Lexicon(String),
}

fn item_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[*#>]+\s*)?(\d{1,3})\s*[.)\-:]\s*(.+?)\s*$").expect("static regex"))
}

/// Strip markdown emphasis and any trailing explanation after a colon or dash.
fn clean_item(raw: &str) -> String {
    let mut s = raw.trim().trim_matches('*').trim().to_string();
    for sep in [": ", " - ", " – ", " — "] {
        if let Some(i) = s.find(sep) {
            s.truncate(i);
        }
    }
    s.trim().trim_matches('*').trim().to_string()
}

/// Extract the ten numbered items of a response, ordered by their number.
///
/// Lines that are not numbered items (preambles, sign-offs) are ignored.
pub fn parse_recommendations(text: &str) -> Result<Vec<String>, VocabError> {
    let malformed = |reason: String| VocabError::Malformed { reason, text: text.to_string() };
    let mut items: BTreeMap<usize, String> = BTreeMap::new();
    for line in text.lines() {
        let Some(cap) = item_re().captures(line) else { continue };
        let n: usize = cap[1].parse().expect("digits");
        let name = clean_item(&cap[2]);
        if name.is_empty() {
            return Err(malformed(format!("item {n} has no name")));
        }
        if items.insert(n, name).is_some() {
            return Err(malformed(format!("item number {n} repeated")));
        }
    }
    if items.len() != LIST_LEN {
        return Err(malformed(format!("expected {LIST_LEN} numbered items, found {}", items.len())));
    }
    if !items.keys().copied().eq(1..=LIST_LEN) {
        return Err(malformed(format!("numbering is not 1..={LIST_LEN}: {:?}", items.keys().collect::<Vec<_>>())));
    }
    Ok(items.into_values().collect())
}

/// Format names as a numbered list, the inverse of [`parse_recommendations`].
pub fn format_recommendations<S: AsRef<str>>(names: &[S]) -> String {
    names.iter().enumerate().map(|(i, n)| format!("{}. {}\n", i + 1, n.as_ref())).collect()
}

/// Case-fold, trim, collapse internal whitespace and strip trailing punctuation.
pub fn normalize(name: &str) -> String {
    let collapsed = name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() && c != ')' && c != '+')
        .trim()
        .to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StemClass {
    Stem,
    NonStem,
    Unlisted,
}

impl StemClass {
    pub fn is_stem(self) -> bool {
        self == StemClass::Stem
    }
}

/// Editable STEM classification (CSV `name,stem`).
#[derive(Debug, Clone, Default)]
pub struct StemLexicon {
    entries: BTreeMap<String, bool>,
    display: Vec<String>,
    hash: String,
}

const SHIPPED_LEXICON: &str = include_str!("../data/stem_lexicon.csv");

impl StemLexicon {
    pub fn shipped() -> Self {
        Self::from_csv(SHIPPED_LEXICON.as_bytes()).expect("shipped lexicon is valid")
    }

    pub fn from_csv<R: Read>(mut source: R) -> Result<Self, VocabError> {
        let mut bytes = Vec::new();
        source.read_to_end(&mut bytes).map_err(|e| VocabError::Lexicon(e.to_string()))?;
        let mut lex = Self { hash: hex::encode(Sha256::digest(&bytes)), ..Self::default() };
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(bytes.as_slice());
        for row in reader.records() {
            let row = row.map_err(|e| VocabError::Lexicon(e.to_string()))?;
            let (Some(name), Some(flag)) = (row.get(0), row.get(1)) else {
                return Err(VocabError::Lexicon(format!("row {:?} needs name,stem", row)));
            };
            let stem = match flag.to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" => true,
                "false" | "0" | "no" => false,
                other => return Err(VocabError::Lexicon(format!("bad stem flag `{other}` for `{name}`"))),
            };
            let key = normalize(name);
            if key.is_empty() {
                return Err(VocabError::Lexicon("empty name".into()));
            }
            match lex.entries.insert(key.clone(), stem) {
                Some(prev) if prev != stem => {
                    return Err(VocabError::Lexicon(format!("`{name}` is listed as both STEM and non-STEM")))
                }
                Some(_) => {}
                None => lex.display.push(name.to_string()),
            }
        }
        Ok(lex)
    }

    pub fn classify(&self, name: &str) -> StemClass {
        match self.entries.get(&normalize(name)) {
            Some(true) => StemClass::Stem,
            Some(false) => StemClass::NonStem,
            None => StemClass::Unlisted,
        }
    }

    /// SHA-256 of the lexicon source bytes.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Display names for one class, in file order.
    pub fn names(&self, stem: bool) -> Vec<String> {
        self.display.iter().filter(|n| self.entries[&normalize(n)] == stem).cloned().collect()
    }
}

/// STEM flag lookup; unlisted names are non-STEM and returned as a warning.
pub fn stem_flag(canonical_name: &str, lexicon: &StemLexicon) -> (bool, Option<String>) {
    match lexicon.classify(canonical_name) {
        StemClass::Stem => (true, None),
        StemClass::NonStem => (false, None),
        StemClass::Unlisted => (false, Some(format!("`{canonical_name}` is not in the STEM lexicon; treated as non-STEM"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonMode {
    Strict,
    Extend,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Major {
    /// Normalized name; the vocabulary key.
    pub name: String,
    pub stem: bool,
}

/// Canonical majors with dense ids `0..k`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MajorVocabulary {
    majors: Vec<Major>,
    #[serde(skip)]
    index: HashMap<String, MajorId>,
    /// Names added without a lexicon entry.
    pub unlisted: Vec<String>,
}

impl MajorVocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Vocabulary seeded with every lexicon entry, in file order.
    pub fn from_lexicon(lexicon: &StemLexicon) -> Self {
        let mut v = Self::new();
        for name in &lexicon.display {
            v.push(name, lexicon);
        }
        v
    }

    fn push(&mut self, raw: &str, lexicon: &StemLexicon) -> MajorId {
        let name = normalize(raw);
        if let Some(&id) = self.index.get(&name) {
            return id;
        }
        let (stem, warning) = stem_flag(&name, lexicon);
        if warning.is_some() {
            self.unlisted.push(name.clone());
        }
        let id = self.majors.len();
        self.index.insert(name.clone(), id);
        self.majors.push(Major { name, stem });
        id
    }

    pub fn len(&self) -> usize {
        self.majors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.majors.is_empty()
    }

    pub fn majors(&self) -> &[Major] {
        &self.majors
    }

    pub fn name(&self, id: MajorId) -> &str {
        &self.majors[id].name
    }

    pub fn get(&self, raw: &str) -> Option<MajorId> {
        self.index.get(&normalize(raw)).copied()
    }

    pub fn stem_flags(&self) -> Vec<bool> {
        self.majors.iter().map(|m| m.stem).collect()
    }

    /// Normalized names within edit distance 2 of `raw`, closest first.
    pub fn suggestions(&self, raw: &str) -> Vec<String> {
        let key = normalize(raw);
        let mut near: Vec<(usize, &str)> = self
            .majors
            .iter()
            .map(|m| (strsim::levenshtein(&key, &m.name), m.name.as_str()))
            .filter(|(d, _)| *d <= 2)
            .collect();
        near.sort();
        near.into_iter().map(|(_, n)| n.to_string()).collect()
    }

    pub fn canonicalize(&mut self, raw: &str, mode: CanonMode, lexicon: &StemLexicon) -> Result<MajorId, VocabError> {
        let key = normalize(raw);
        if key.is_empty() {
            return Err(VocabError::Empty);
        }
        if let Some(&id) = self.index.get(&key) {
            return Ok(id);
        }
        match mode {
            CanonMode::Extend => Ok(self.push(&key, lexicon)),
            CanonMode::Strict => Err(VocabError::UnknownMajor { suggestions: self.suggestions(&key), name: key }),
        }
    }

    /// SHA-256 over the ordered names and flags.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for m in &self.majors {
            h.update(m.name.as_bytes());
            h.update([0, u8::from(m.stem), 0xff]);
        }
        hex::encode(h.finalize())
    }

    /// Rebuild the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.majors.iter().enumerate().map(|(i, m)| (m.name.clone(), i)).collect();
    }
}

/// Ten ranked vocabulary ids (rank 1 first) from one response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendationSet {
    pub majors: Vec<MajorId>,
    /// True when the response repeated a major.
    pub duplicate: bool,
    /// Cache key of the response the set came from.
    pub provenance: String,
}

impl RecommendationSet {
    pub fn new(majors: Vec<MajorId>, provenance: impl Into<String>) -> Result<Self, VocabError> {
        if majors.len() != LIST_LEN {
            return Err(VocabError::Malformed { reason: format!("{} majors", majors.len()), text: String::new() });
        }
        let mut seen = std::collections::HashSet::new();
        let duplicate = !majors.iter().all(|m| seen.insert(*m));
        Ok(Self { majors, duplicate, provenance: provenance.into() })
    }

    pub fn from_names(
        names: &[String],
        vocab: &mut MajorVocabulary,
        mode: CanonMode,
        lexicon: &StemLexicon,
        provenance: impl Into<String>,
    ) -> Result<Self, VocabError> {
        let ids = names.iter().map(|n| vocab.canonicalize(n, mode, lexicon)).collect::<Result<Vec<_>, _>>()?;
        Self::new(ids, provenance)
    }

    /// Ids in rank order with later repeats dropped.
    pub fn distinct(&self) -> Vec<MajorId> {
        let mut seen = std::collections::HashSet::new();
        self.majors.iter().copied().filter(|m| seen.insert(*m)).collect()
    }
}
