//! CAASPP statewide research-file ingestion.
//!
//! The research files are delimited text with one row per
//! (school, test, student group). Column names and the delimiter vary
//! between vintages, so both come from a [`FileDescriptor`].

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::demographics::Dimension;

/// Test IDs listed for the statewide research files.
pub const KNOWN_TEST_IDS: [u32; 7] = [1, 2, 3, 4, 17, 18, 39];

/// California Science Test.
pub const CAST_TEST_ID: u32 = 17;

/// Marker written for suppressed (masked) numeric cells.
pub const SUPPRESSED: &str = "*";

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("failed to read research file: {0}")]
    Io(#[from] std::io::Error),
    #[error("descriptor error: {0}")]
    Config(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("catalog error: {0}")]
    Catalog(String),
}

/// One row of a research file.
///
/// Numeric fields that the file suppresses (e.g. `*`) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaasppRecord {
    pub school_code: String,
    pub test_year: i32,
    pub student_group_id: u32,
    pub grade: u8,
    pub test_id: u32,
    pub students_tested: Option<u64>,
    pub mean_scale_score: Option<f64>,
    pub pct_standard_exceeded: Option<f64>,
}

impl CaasppRecord {
    pub fn is_known_test(&self) -> bool {
        KNOWN_TEST_IDS.contains(&self.test_id)
    }
}

/// Column names for the eight record fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub school_code: String,
    pub test_year: String,
    pub student_group_id: String,
    pub grade: String,
    pub test_id: String,
    pub students_tested: String,
    pub mean_scale_score: String,
    pub pct_standard_exceeded: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            school_code: "School Code".into(),
            test_year: "Test Year".into(),
            student_group_id: "Student Group ID".into(),
            grade: "Grade".into(),
            test_id: "Test ID".into(),
            students_tested: "Students Tested".into(),
            mean_scale_score: "Mean Scale Score".into(),
            pct_standard_exceeded: "Percentage Standard Exceeded".into(),
        }
    }
}

impl ColumnMap {
    fn names(&self) -> [(&'static str, &str); 8] {
        [
            ("school_code", &self.school_code),
            ("test_year", &self.test_year),
            ("student_group_id", &self.student_group_id),
            ("grade", &self.grade),
            ("test_id", &self.test_id),
            ("students_tested", &self.students_tested),
            ("mean_scale_score", &self.mean_scale_score),
            ("pct_standard_exceeded", &self.pct_standard_exceeded),
        ]
    }
}

/// How to read a research file.
///
/// With `has_header = false` every column entry must be a zero-based
/// column index written as a decimal string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FileDescriptor {
    pub delimiter: char,
    pub has_header: bool,
    pub columns: ColumnMap,
}

impl Default for FileDescriptor {
    fn default() -> Self {
        Self { delimiter: '\t', has_header: true, columns: ColumnMap::default() }
    }
}

impl FileDescriptor {
    fn delimiter_byte(&self) -> Result<u8, IngestError> {
        u8::try_from(self.delimiter as u32)
            .ok()
            .filter(u8::is_ascii)
            .ok_or_else(|| IngestError::Config(format!("delimiter {:?} is not a single ASCII byte", self.delimiter)))
    }

    /// Resolve the eight column positions against an optional header row.
    fn resolve(&self, header: Option<&csv::StringRecord>) -> Result<[usize; 8], IngestError> {
        let mut out = [0usize; 8];
        for (slot, (field, name)) in out.iter_mut().zip(self.columns.names()) {
            if name.trim().is_empty() {
                return Err(IngestError::Config(format!("no column configured for `{field}`")));
            }
            *slot = match header {
                Some(h) => h
                    .iter()
                    .position(|c| c.trim() == name.trim())
                    .ok_or_else(|| IngestError::Config(format!("column `{name}` for `{field}` not in header")))?,
                None => name.trim().parse().map_err(|_| {
                    IngestError::Config(format!("headerless file needs a column index for `{field}`, got `{name}`"))
                })?,
            };
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    /// 1-based line number in the source, header included.
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ParseReport {
    pub errors: Vec<RowError>,
    /// Rows whose `students_tested` was suppressed.
    pub suppressed_rows: usize,
    /// Rows whose test ID is outside [`KNOWN_TEST_IDS`] (kept).
    pub unknown_test_rows: usize,
}

impl ParseReport {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedFile {
    pub records: Vec<CaasppRecord>,
    pub report: ParseReport,
}

fn is_masked(s: &str) -> bool {
    let s = s.trim();
    s.is_empty() || s.chars().all(|c| c == '*') || s.eq_ignore_ascii_case("n/a")
}

fn required<T: std::str::FromStr>(raw: &str, field: &str) -> Result<T, String> {
    raw.trim().parse().map_err(|_| format!("`{field}` is not numeric: {raw:?}"))
}

fn optional<T: std::str::FromStr>(raw: &str, field: &str) -> Result<Option<T>, String> {
    if is_masked(raw) {
        Ok(None)
    } else {
        required(raw, field).map(Some)
    }
}

fn record_from_row(row: &csv::StringRecord, cols: &[usize; 8]) -> Result<CaasppRecord, String> {
    let get = |i: usize| row.get(cols[i]).ok_or_else(|| format!("row has {} fields, column {} missing", row.len(), cols[i]));
    let school_code = get(0)?.trim().to_string();
    if school_code.is_empty() || !school_code.chars().all(|c| c.is_ascii_digit()) {
        return Err(format!("school code {school_code:?} is not a digit string"));
    }
    let grade: u8 = required(get(3)?, "grade")?;
    if !(1..=13).contains(&grade) {
        return Err(format!("grade {grade} outside 1..=13"));
    }
    let pct: Option<f64> = optional(get(7)?, "pct_standard_exceeded")?;
    if let Some(p) = pct {
        if !(0.0..=100.0).contains(&p) {
            return Err(format!("percentage {p} outside [0,100]"));
        }
    }
    Ok(CaasppRecord {
        school_code,
        test_year: required(get(1)?, "test_year")?,
        student_group_id: required(get(2)?, "student_group_id")?,
        grade,
        test_id: required(get(4)?, "test_id")?,
        students_tested: optional(get(5)?, "students_tested")?,
        mean_scale_score: optional(get(6)?, "mean_scale_score")?,
        pct_standard_exceeded: pct,
    })
}

/// Parse a research file. Malformed rows land in the report with their
/// line number; everything else is returned in file order.
pub fn parse_research_file<R: Read>(source: R, descriptor: &FileDescriptor) -> Result<ParsedFile, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(descriptor.delimiter_byte()?)
        .has_headers(descriptor.has_header)
        .flexible(true)
        .trim(csv::Trim::None)
        .from_reader(source);

    let header = if descriptor.has_header {
        match reader.headers() {
            Ok(h) => Some(h.clone()),
            Err(e) => return Err(io_or_csv(e)),
        }
    } else {
        None
    };
    let mut out = ParsedFile::default();
    // Empty input: no header and no rows.
    if header.as_ref().is_some_and(|h| h.is_empty()) {
        return Ok(out);
    }
    let cols = descriptor.resolve(header.as_ref())?;

    let mut row = csv::StringRecord::new();
    loop {
        let more = match reader.read_record(&mut row) {
            Ok(more) => more,
            Err(e) => match e.kind() {
                csv::ErrorKind::Io(_) => return Err(io_or_csv(e)),
                _ => {
                    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                    out.report.errors.push(RowError { row: line, message: e.to_string() });
                    continue;
                }
            },
        };
        if !more {
            break;
        }
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        match record_from_row(&row, &cols) {
            Ok(rec) => {
                if rec.students_tested.is_none() {
                    out.report.suppressed_rows += 1;
                }
                if !rec.is_known_test() {
                    out.report.unknown_test_rows += 1;
                }
                out.records.push(rec);
            }
            Err(message) => out.report.errors.push(RowError { row: line, message }),
        }
    }
    Ok(out)
}

fn io_or_csv(e: csv::Error) -> IngestError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => IngestError::Io(io),
            _ => unreachable!(),
        }
    } else {
        IngestError::Csv(e)
    }
}

fn fmt_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| SUPPRESSED.to_string(), ToString::to_string)
}

/// Serialize records back to the descriptor's delimited layout (header
/// first when the descriptor has one). Suppressed fields are written as `*`.
pub fn write_research_file(records: &[CaasppRecord], descriptor: &FileDescriptor) -> Result<String, IngestError> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(descriptor.delimiter_byte()?)
        .flexible(true)
        .from_writer(Vec::new());
    let cols = if descriptor.has_header {
        let names: Vec<&str> = descriptor.columns.names().iter().map(|(_, n)| *n).collect();
        w.write_record(&names)?;
        [0, 1, 2, 3, 4, 5, 6, 7]
    } else {
        descriptor.resolve(None)?
    };
    let width = cols.iter().max().map_or(0, |m| m + 1);
    for r in records {
        let values = [
            r.school_code.clone(),
            r.test_year.to_string(),
            r.student_group_id.to_string(),
            r.grade.to_string(),
            r.test_id.to_string(),
            fmt_opt(&r.students_tested),
            fmt_opt(&r.mean_scale_score),
            fmt_opt(&r.pct_standard_exceeded),
        ];
        let mut row = vec![String::new(); width];
        for (v, &c) in values.into_iter().zip(&cols) {
            row[c] = v;
        }
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| IngestError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

/// Study-population predicate: one grade, a set of tests, a set of groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyFilter {
    pub grade: u8,
    pub test_ids: BTreeSet<u32>,
    pub group_ids: BTreeSet<u32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilteredPopulation {
    pub records: Vec<CaasppRecord>,
    /// Matching rows dropped because `students_tested` was suppressed.
    pub suppressed: usize,
}

impl StudyFilter {
    pub fn matches(&self, r: &CaasppRecord) -> bool {
        r.grade == self.grade && self.test_ids.contains(&r.test_id) && self.group_ids.contains(&r.student_group_id)
    }

    pub fn apply(&self, records: &[CaasppRecord]) -> FilteredPopulation {
        let mut out = FilteredPopulation::default();
        for r in records.iter().filter(|r| self.matches(r)) {
            if r.students_tested.is_some() {
                out.records.push(r.clone());
            } else {
                out.suppressed += 1;
            }
        }
        out
    }
}

/// Filter to the study population, dropping rows without a tested count.
pub fn filter_study_population(
    records: &[CaasppRecord],
    grade: u8,
    test_ids: &BTreeSet<u32>,
    group_ids: &BTreeSet<u32>,
) -> Vec<CaasppRecord> {
    StudyFilter { grade, test_ids: test_ids.clone(), group_ids: group_ids.clone() }
        .apply(records)
        .records
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub dimension: Dimension,
    pub label: String,
    pub population_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogWarning {
    pub dimension: Dimension,
    pub coverage: f64,
}

/// Student-group IDs of interest and their published population shares.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DemographicCatalog {
    pub entries: BTreeMap<u32, GroupEntry>,
}

const SHARE_TOLERANCE: f64 = 0.01;

impl DemographicCatalog {
    pub fn new(entries: BTreeMap<u32, GroupEntry>) -> Result<Self, IngestError> {
        let cat = Self { entries };
        cat.validate()?;
        Ok(cat)
    }

    /// The twelve study groups with their 2023 grade-12 shares.
    pub fn study_groups() -> Self {
        let rows: [(u32, Dimension, &str, f64); 12] = [
            (31, Dimension::Ses, "Socioeconomically disadvantaged", 0.626),
            (111, Dimension::Ses, "Not socioeconomically disadvantaged", 0.374),
            (75, Dimension::Race, "American Indian or Alaska Native", 0.005),
            (76, Dimension::Race, "Asian", 0.095),
            (74, Dimension::Race, "Black or African American", 0.053),
            (77, Dimension::Race, "Filipino", 0.023),
            (78, Dimension::Race, "Hispanic or Latino", 0.552),
            (79, Dimension::Race, "Native Hawaiian or Pacific Islander", 0.004),
            (80, Dimension::Race, "White", 0.218),
            (4, Dimension::Gender, "Female", 0.491),
            (3, Dimension::Gender, "Male", 0.508),
            (190, Dimension::Gender, "LGBTQ+", 0.001),
        ];
        let entries = rows
            .into_iter()
            .map(|(id, dimension, label, share)| {
                (id, GroupEntry { dimension, label: label.to_string(), population_share: share })
            })
            .collect();
        Self { entries }
    }

    /// Load a catalog from CSV with columns `id,dimension,label,share`.
    pub fn from_csv<R: Read>(source: R) -> Result<Self, IngestError> {
        #[derive(Deserialize)]
        struct Row {
            id: u32,
            dimension: String,
            label: String,
            share: f64,
        }
        let mut entries = BTreeMap::new();
        for row in csv::Reader::from_reader(source).deserialize::<Row>() {
            let row = row?;
            let dimension = row.dimension.parse().map_err(|e| IngestError::Catalog(format!("{e}")))?;
            if entries
                .insert(row.id, GroupEntry { dimension, label: row.label, population_share: row.share })
                .is_some()
            {
                return Err(IngestError::Catalog(format!("duplicate group id {}", row.id)));
            }
        }
        Self::new(entries)
    }

    pub fn share_sums(&self) -> BTreeMap<Dimension, f64> {
        let mut sums = BTreeMap::new();
        for e in self.entries.values() {
            *sums.entry(e.dimension).or_insert(0.0) += e.population_share;
        }
        sums
    }

    /// Hard errors for impossible shares. A dimension whose shares fall
    /// short of 1 (groups left out of the published table) is reported as
    /// a warning carrying its coverage.
    pub fn validate(&self) -> Result<Vec<CatalogWarning>, IngestError> {
        for (id, e) in &self.entries {
            if !(0.0..=1.0).contains(&e.population_share) {
                return Err(IngestError::Catalog(format!("group {id} share {} outside [0,1]", e.population_share)));
            }
        }
        let mut warnings = Vec::new();
        for (dimension, sum) in self.share_sums() {
            if sum > 1.0 + SHARE_TOLERANCE {
                return Err(IngestError::Catalog(format!("{dimension} shares sum to {sum:.4}")));
            }
            if sum < 1.0 - SHARE_TOLERANCE {
                warnings.push(CatalogWarning { dimension, coverage: sum });
            }
        }
        Ok(warnings)
    }

    pub fn group_ids(&self) -> BTreeSet<u32> {
        self.entries.keys().copied().collect()
    }
}

/// Share of `students_tested` per label within each dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GroupSummary {
    pub shares: BTreeMap<Dimension, BTreeMap<String, f64>>,
    /// Students tested under IDs absent from the catalog, by ID.
    pub uncataloged: BTreeMap<u32, u64>,
}

impl GroupSummary {
    /// CSV with columns `dimension,label,share`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["dimension", "label", "share"]).expect("in-memory write");
        for (dim, labels) in &self.shares {
            for (label, share) in labels {
                w.write_record([dim.as_str(), label, &format!("{share:.6}")]).expect("in-memory write");
            }
        }
        for (id, count) in &self.uncataloged {
            w.write_record(["uncataloged", &id.to_string(), &count.to_string()]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

pub fn summarize_groups(records: &[CaasppRecord], catalog: &DemographicCatalog) -> GroupSummary {
    let mut counts: BTreeMap<Dimension, BTreeMap<String, u64>> = BTreeMap::new();
    let mut summary = GroupSummary::default();
    for r in records {
        let Some(n) = r.students_tested else { continue };
        match catalog.entries.get(&r.student_group_id) {
            Some(e) => *counts.entry(e.dimension).or_default().entry(e.label.clone()).or_insert(0) += n,
            None => *summary.uncataloged.entry(r.student_group_id).or_insert(0) += n,
        }
    }
    for (dim, labels) in counts {
        let total: u64 = labels.values().sum();
        if total == 0 {
            continue;
        }
        let shares = labels.into_iter().map(|(l, c)| (l, c as f64 / total as f64)).collect();
        summary.shares.insert(dim, shares);
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const STATEWIDE_SAMPLE: &str = "School Code\tTest Year\tStudent Group ID\tGrade\tTest ID\tStudents Tested\tMean Scale Score\tPercentage Standard Exceeded
0000000\t2023\t1\t12\t17\t134323\t599.5\t6.58
0000000\t2023\t3\t12\t17\t68214\t599.2\t7.39
0000000\t2023\t4\t12\t17\t65908\t599.8\t5.71
0000000\t2023\t6\t12\t17\t119419\t601.9\t7.39
0000000\t2023\t7\t12\t17\t6879\t610.8\t15.67
0000000\t2023\t8\t12\t17\t43806\t599.6\t4.44
0000000\t2023\t28\t12\t17\t1192\t589.8\t0.67
0000000\t2023\t29\t12\t17\t133131\t599.6\t6.63
0000000\t2023\t31\t12\t17\t80462\t594.2\t2.5
0000000\t2023\t50\t12\t17\t2059\t602.3\t6.76
";

    fn parse(text: &str) -> ParsedFile {
        parse_research_file(text.as_bytes(), &FileDescriptor::default()).unwrap()
    }

    fn rec(group: u32, grade: u8, tested: Option<u64>) -> CaasppRecord {
        CaasppRecord {
            school_code: "0000000".into(),
            test_year: 2023,
            student_group_id: group,
            grade,
            test_id: CAST_TEST_ID,
            students_tested: tested,
            mean_scale_score: Some(600.0),
            pct_standard_exceeded: Some(5.0),
        }
    }

    #[test]
    fn first_table_row() {
        let parsed = parse(STATEWIDE_SAMPLE);
        assert!(parsed.report.is_clean());
        assert_eq!(parsed.records.len(), 10);
        assert_eq!(
            parsed.records[0],
            CaasppRecord {
                school_code: "0000000".into(),
                test_year: 2023,
                student_group_id: 1,
                grade: 12,
                test_id: 17,
                students_tested: Some(134323),
                mean_scale_score: Some(599.5),
                pct_standard_exceeded: Some(6.58),
            }
        );
    }

    #[test]
    fn empty_input_is_empty() {
        let parsed = parse("");
        assert!(parsed.records.is_empty());
        assert!(parsed.report.errors.is_empty());
    }

    #[test]
    fn grade_eleven_rows_still_parse() {
        let text = STATEWIDE_SAMPLE.replace("\t12\t17\t", "\t11\t17\t");
        let parsed = parse(&text);
        assert_eq!(parsed.records.len(), 10);
        assert!(parsed.records.iter().all(|r| r.grade == 11));
    }

    #[test]
    fn bad_rows_are_reported_with_line_numbers() {
        let text = format!("{STATEWIDE_SAMPLE}0000000\t2023\t3\t12\t17\tabc\t599.2\t7.39\n0000000\t2023\t3\t12\t17\t5\t599.2\t140\n");
        let parsed = parse(&text);
        assert_eq!(parsed.records.len(), 10);
        assert_eq!(parsed.report.errors.len(), 2);
        assert_eq!(parsed.report.errors[0].row, 12);
        assert_eq!(parsed.report.errors[1].row, 13);
    }

    #[test]
    fn suppressed_cells_parse_as_absent() {
        let text = format!("{STATEWIDE_SAMPLE}0012345\t2023\t190\t12\t17\t*\t*\t*\n");
        let parsed = parse(&text);
        let last = parsed.records.last().unwrap();
        assert_eq!(last.students_tested, None);
        assert_eq!(last.mean_scale_score, None);
        assert_eq!(parsed.report.suppressed_rows, 1);
    }

    #[test]
    fn unknown_test_is_kept_and_flagged() {
        let text = STATEWIDE_SAMPLE.replace("0000000\t2023\t50\t12\t17", "0000000\t2023\t50\t12\t99");
        let parsed = parse(&text);
        assert_eq!(parsed.records.len(), 10);
        assert_eq!(parsed.report.unknown_test_rows, 1);
        assert!(!parsed.records[9].is_known_test());
    }

    #[test]
    fn missing_column_fails_fast() {
        let mut d = FileDescriptor::default();
        d.columns.grade = "Grade Level".into();
        let err = parse_research_file(STATEWIDE_SAMPLE.as_bytes(), &d).unwrap_err();
        assert!(matches!(err, IngestError::Config(_)), "{err}");
    }

    #[test]
    fn headerless_with_indices() {
        let body: String = STATEWIDE_SAMPLE.lines().skip(1).map(|l| format!("{}\n", l.replace('\t', ","))).collect();
        let d = FileDescriptor {
            delimiter: ',',
            has_header: false,
            columns: ColumnMap {
                school_code: "0".into(),
                test_year: "1".into(),
                student_group_id: "2".into(),
                grade: "3".into(),
                test_id: "4".into(),
                students_tested: "5".into(),
                mean_scale_score: "6".into(),
                pct_standard_exceeded: "7".into(),
            },
        };
        let parsed = parse_research_file(body.as_bytes(), &d).unwrap();
        assert_eq!(parsed.records, parse(STATEWIDE_SAMPLE).records);
        let written = write_research_file(&parsed.records, &d).unwrap();
        assert_eq!(parse_research_file(written.as_bytes(), &d).unwrap().records, parsed.records);
    }

    #[test]
    fn filter_by_grade_and_group() {
        let records = vec![rec(3, 11, Some(10)), rec(3, 12, Some(10)), rec(4, 12, Some(10))];
        let tests = BTreeSet::from([CAST_TEST_ID]);
        let out = filter_study_population(&records, 12, &tests, &BTreeSet::from([3, 4]));
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|r| r.grade == 12));

        let table = parse(STATEWIDE_SAMPLE).records;
        let one = filter_study_population(&table, 12, &tests, &BTreeSet::from([1]));
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].student_group_id, 1);

        assert!(filter_study_population(&table, 12, &BTreeSet::new(), &BTreeSet::from([1])).is_empty());
    }

    #[test]
    fn filter_excludes_and_counts_suppressed() {
        let f = StudyFilter {
            grade: 12,
            test_ids: BTreeSet::from([CAST_TEST_ID]),
            group_ids: BTreeSet::from([3]),
        };
        let out = f.apply(&[rec(3, 12, None), rec(3, 12, Some(4))]);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.suppressed, 1);
    }

    #[test]
    fn symmetric_gender_counts() {
        let s = summarize_groups(&[rec(3, 12, Some(100)), rec(4, 12, Some(100))], &DemographicCatalog::study_groups());
        let g = &s.shares[&Dimension::Gender];
        assert_eq!(g["Male"], 0.5);
        assert_eq!(g["Female"], 0.5);
    }

    #[test]
    fn single_group_has_full_share() {
        let s = summarize_groups(&[rec(31, 12, Some(7)), rec(31, 12, Some(3))], &DemographicCatalog::study_groups());
        assert_eq!(s.shares[&Dimension::Ses]["Socioeconomically disadvantaged"], 1.0);
    }

    #[test]
    fn unknown_ids_are_bucketed() {
        let s = summarize_groups(&parse(STATEWIDE_SAMPLE).records, &DemographicCatalog::study_groups());
        // 1, 6, 7, 8, 28, 29, 50 are not study groups
        assert_eq!(s.uncataloged.len(), 7);
        assert_eq!(s.uncataloged[&6], 119419);
        let g = &s.shares[&Dimension::Gender];
        assert!((g.values().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(s.to_csv().starts_with("dimension,label,share\n"));
    }

    #[test]
    fn study_catalog_validates_with_race_coverage_warning() {
        let cat = DemographicCatalog::study_groups();
        let sums = cat.share_sums();
        assert!((sums[&Dimension::Gender] - 1.0).abs() < 1e-9);
        assert!((sums[&Dimension::Ses] - 1.0).abs() < 1e-9);
        let warnings = cat.validate().unwrap();
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].dimension, Dimension::Race);
        assert!((warnings[0].coverage - 0.95).abs() < 1e-9);
        for id in [31, 111] {
            assert_eq!(cat.entries[&id].dimension, Dimension::Ses);
        }
        for id in [3, 4, 190] {
            assert_eq!(cat.entries[&id].dimension, Dimension::Gender);
        }
        for id in 74..=80 {
            assert_eq!(cat.entries[&id].dimension, Dimension::Race);
        }
    }

    #[test]
    fn catalog_rejects_overfull_dimension() {
        let csv = "id,dimension,label,share\n3,gender,Male,0.7\n4,gender,Female,0.7\n";
        assert!(DemographicCatalog::from_csv(csv.as_bytes()).is_err());
        let ok = "id,dimension,label,share\n3,gender,Male,0.5\n4,gender,Female,0.5\n";
        assert_eq!(DemographicCatalog::from_csv(ok.as_bytes()).unwrap().entries.len(), 2);
    }
}
