//! Word2vec embedding tables and the semantic cost matrix between majors.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::vocab::{MajorId, MajorVocabulary};

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("i/o error reading embeddings: {0}")]
    Io(#[from] std::io::Error),
    #[error("embedding file is empty")]
    Empty,
    #[error("bad header: {0}")]
    Header(String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("no in-vocabulary token for `{0}`")]
    Miss(String),
    #[error("zero-norm vector for `{0}`")]
    Degenerate(String),
    #[error("major `{0}` has no vector")]
    MissingMajor(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Format {
    Text,
    Binary,
}

#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
    pub warnings: Vec<String>,
}

impl EmbeddingTable {
    pub fn from_vectors(dim: usize, vectors: impl IntoIterator<Item = (String, Vec<f32>)>) -> Result<Self, EmbeddingError> {
        let mut t = Self { dim, ..Self::default() };
        for (i, (tok, v)) in vectors.into_iter().enumerate() {
            if v.len() != dim {
                return Err(EmbeddingError::Line { line: i + 1, message: format!("expected {dim} values, got {}", v.len()) });
            }
            t.insert(tok, v);
        }
        Ok(t)
    }

    fn insert(&mut self, token: String, v: Vec<f32>) {
        let token = token.to_lowercase();
        if self.vectors.insert(token.clone(), v).is_some() {
            self.warnings.push(format!("duplicate token `{token}`; last occurrence kept"));
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Order-independent SHA-256 over the table contents.
    pub fn checksum(&self) -> String {
        let mut tokens: Vec<_> = self.vectors.keys().collect();
        tokens.sort();
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for t in tokens {
            h.update(t.as_bytes());
            h.update([0]);
            for x in &self.vectors[t] {
                h.update(x.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

fn parse_header(line: &str) -> Result<(usize, usize), EmbeddingError> {
    let mut it = line.split_whitespace();
    let (Some(c), Some(d), None) = (it.next(), it.next(), it.next()) else {
        return Err(EmbeddingError::Header(line.trim().to_string()));
    };
    let count = c.parse().map_err(|_| EmbeddingError::Header(line.trim().to_string()))?;
    let dim: usize = d.parse().map_err(|_| EmbeddingError::Header(line.trim().to_string()))?;
    if dim == 0 {
        return Err(EmbeddingError::Header("dimension 0".into()));
    }
    Ok((count, dim))
}

/// A first record is text if it is valid UTF-8 and splits into a token
/// followed by exactly `dim` floats.
fn looks_like_text(peek: &[u8], dim: usize) -> bool {
    let end = peek.iter().position(|&b| b == b'\n').unwrap_or(peek.len());
    let Ok(line) = std::str::from_utf8(&peek[..end]) else { return false };
    let fields: Vec<_> = line.split_whitespace().collect();
    fields.len() == dim + 1 && fields[1..].iter().all(|f| f.parse::<f32>().is_ok())
}

/// Load a word2vec file, detecting text or binary layout from the first record.
pub fn load_embeddings<R: Read>(source: R) -> Result<EmbeddingTable, EmbeddingError> {
    load_embeddings_filtered(source, None)
}

/// Like [`load_embeddings`], optionally keeping only tokens in `keep`
/// (lower-cased). Useful for multi-gigabyte pretrained files.
pub fn load_embeddings_filtered<R: Read>(source: R, keep: Option<&HashSet<String>>) -> Result<EmbeddingTable, EmbeddingError> {
    let mut reader = BufReader::with_capacity(1 << 16, source);
    let mut header = String::new();
    if reader.read_line(&mut header)? == 0 || header.trim().is_empty() {
        return Err(EmbeddingError::Empty);
    }
    let (count, dim) = parse_header(&header)?;
    let format = if looks_like_text(reader.fill_buf()?, dim) { Format::Text } else { Format::Binary };
    let mut table = EmbeddingTable { dim, ..EmbeddingTable::default() };
    let wanted = |tok: &str| keep.is_none_or(|k| k.contains(&tok.to_lowercase()));

    match format {
        Format::Text => {
            let mut line = String::new();
            let mut read = 0;
            let mut lineno = 1;
            while read < count {
                line.clear();
                lineno += 1;
                if reader.read_line(&mut line)? == 0 {
                    return Err(EmbeddingError::Line { line: lineno, message: format!("file ends after {read} of {count} vectors") });
                }
                if line.trim().is_empty() {
                    continue;
                }
                let mut fields = line.split_whitespace();
                let token = fields.next().expect("non-empty line");
                let values: Vec<f32> = fields
                    .map(|f| f.parse::<f32>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| EmbeddingError::Line { line: lineno, message: e.to_string() })?;
                if values.len() != dim {
                    return Err(EmbeddingError::Line { line: lineno, message: format!("expected {dim} values, got {}", values.len()) });
                }
                read += 1;
                if wanted(token) {
                    table.insert(token.to_string(), values);
                }
            }
        }
        Format::Binary => {
            let mut buf = vec![0u8; dim * 4];
            for record in 0..count {
                let mut token = Vec::new();
                reader.read_until(b' ', &mut token)?;
                if token.last() != Some(&b' ') {
                    return Err(EmbeddingError::Line { line: record + 2, message: format!("file ends after {record} of {count} vectors") });
                }
                token.pop();
                let start = token.iter().position(|b| !b.is_ascii_whitespace()).unwrap_or(token.len());
                let token = String::from_utf8_lossy(&token[start..]).into_owned();
                reader.read_exact(&mut buf).map_err(|_| EmbeddingError::Line {
                    line: record + 2,
                    message: format!("vector for `{token}` is truncated"),
                })?;
                if wanted(&token) {
                    let values = buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
                    table.insert(token, values);
                }
            }
        }
    }
    Ok(table)
}

/// Write a table in word2vec binary layout (tokens sorted).
pub fn write_binary(table: &EmbeddingTable) -> Vec<u8> {
    let mut tokens: Vec<_> = table.vectors.keys().collect();
    tokens.sort();
    let mut out = format!("{} {}\n", tokens.len(), table.dim).into_bytes();
    for t in tokens {
        out.extend_from_slice(t.as_bytes());
        out.push(b' ');
        for x in &table.vectors[t] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.push(b'\n');
    }
    out
}

fn tokens_of(name: &str) -> impl Iterator<Item = String> + '_ {
    name.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'').to_lowercase())
        .filter(|t| !t.is_empty())
}

/// Mean of the in-vocabulary token vectors of a (normalized) major name.
/// Returns the vector and the tokens that were skipped.
pub fn major_vector(name: &str, table: &EmbeddingTable) -> Result<(Vec<f64>, Vec<String>), EmbeddingError> {
    let mut sum = vec![0.0f64; table.dim];
    let mut found = 0usize;
    let mut missing = Vec::new();
    for tok in tokens_of(name) {
        match table.get(&tok) {
            Some(v) => {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += f64::from(*x);
                }
                found += 1;
            }
            None => missing.push(tok),
        }
    }
    if found == 0 {
        return Err(EmbeddingError::Miss(name.to_string()));
    }
    sum.iter_mut().for_each(|s| *s /= found as f64);
    Ok((sum, missing))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `1 - cos(a, b)` clamped to `[0, 1]`.
pub fn cosine_cost(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let cos = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    Some((1.0 - cos).clamp(0.0, 1.0))
}

pub fn semantic_cost(a: MajorId, b: MajorId, vocab: &MajorVocabulary, table: &EmbeddingTable) -> Result<f64, EmbeddingError> {
    let (va, _) = major_vector(vocab.name(a), table)?;
    if a == b {
        return if norm(&va) == 0.0 { Err(EmbeddingError::Degenerate(vocab.name(a).into())) } else { Ok(0.0) };
    }
    let (vb, _) = major_vector(vocab.name(b), table)?;
    cosine_cost(&va, &vb).ok_or_else(|| {
        let which = if norm(&va) == 0.0 { a } else { b };
        EmbeddingError::Degenerate(vocab.name(which).into())
    })
}

/// Symmetric `k × k` cost matrix with a zero diagonal and entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostMatrix {
    k: usize,
    cost: Vec<f64>,
    /// Hash of the vocabulary (or subset) the rows refer to.
    pub vocab_hash: String,
}

impl CostMatrix {
    /// Build from a dense row-major matrix, checking the invariants.
    pub fn from_rows(rows: Vec<Vec<f64>>, vocab_hash: impl Into<String>) -> Result<Self, String> {
        let k = rows.len();
        let mut cost = Vec::with_capacity(k * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(format!("row {i} has {} entries, expected {k}", row.len()));
            }
            cost.extend_from_slice(row);
        }
        let m = Self { k, cost, vocab_hash: vocab_hash.into() };
        for i in 0..k {
            if m.get(i, i) != 0.0 {
                return Err(format!("diagonal entry {i} is {}", m.get(i, i)));
            }
            for j in 0..k {
                let c = m.get(i, j);
                if !(0.0..=1.0).contains(&c) {
                    return Err(format!("entry ({i},{j}) = {c} outside [0,1]"));
                }
                if c != m.get(j, i) {
                    return Err(format!("entries ({i},{j}) and ({j},{i}) differ"));
                }
            }
        }
        Ok(m)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.k + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.cost
    }

    pub fn max(&self) -> f64 {
        self.cost.iter().copied().fold(0.0, f64::max)
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.vocab_hash.as_bytes());
        for c in &self.cost {
            h.update(c.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn to_csv(&self, labels: &[String]) -> String {
        let mut out = String::from("major");
        for l in labels {
            let _ = write!(out, ",{}", csv_field(l));
        }
        out.push('\n');
        for i in 0..self.k {
            out.push_str(&csv_field(&labels[i]));
            for j in 0..self.k {
                let _ = write!(out, ",{:.6}", self.get(i, j));
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Cost matrix over every vocabulary entry.
pub fn build_cost_matrix(vocab: &MajorVocabulary, table: &EmbeddingTable) -> Result<CostMatrix, EmbeddingError> {
    let ids: Vec<MajorId> = (0..vocab.len()).collect();
    build_cost_matrix_for(vocab, &ids, table).map(|m| CostMatrix { vocab_hash: vocab.hash(), ..m })
}

/// Cost matrix over a subset of vocabulary ids, in the given order.
pub fn build_cost_matrix_for(vocab: &MajorVocabulary, ids: &[MajorId], table: &EmbeddingTable) -> Result<CostMatrix, EmbeddingError> {
    let vectors = ids
        .iter()
        .map(|&id| {
            let (v, _) = major_vector(vocab.name(id), table)?;
            if norm(&v) == 0.0 {
                return Err(EmbeddingError::Degenerate(vocab.name(id).into()));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let k = ids.len();
    let mut cost = vec![0.0; k * k];
    for i in 0..k {
        for j in (i + 1)..k {
            let c = cosine_cost(&vectors[i], &vectors[j]).expect("norms checked");
            cost[i * k + j] = c;
            cost[j * k + i] = c;
        }
    }
    let mut h = Sha256::new();
    for &id in ids {
        h.update(vocab.name(id).as_bytes());
        h.update([0]);
    }
    Ok(CostMatrix { k, cost, vocab_hash: hex::encode(h.finalize()) })
}

/// Vocabulary ids that have an embedding, and the names that do not.
pub fn embedded_subset(vocab: &MajorVocabulary, table: &EmbeddingTable) -> (Vec<MajorId>, Vec<String>) {
    let mut ids = Vec::new();
    let mut misses = Vec::new();
    for (id, m) in vocab.majors().iter().enumerate() {
        match major_vector(&m.name, table) {
            Ok((v, _)) if norm(&v) > 0.0 => ids.push(id),
            _ => misses.push(m.name.clone()),
        }
    }
    (ids, misses)
}

pub const FIXTURE: &str = include_str!("../data/embeddings_fixture.txt");

/// The shipped 50-dimensional test fixture.
pub fn fixture_table() -> EmbeddingTable {
    load_embeddings(FIXTURE.as_bytes()).expect("shipped fixture is valid")
}
