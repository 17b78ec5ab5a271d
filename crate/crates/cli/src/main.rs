use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use majoraudit::audit::{
    bayes_report, build_cache_client, build_client, collect, emit_series, emit_table, plan, run_audit, write_outputs,
    AuditConfig, AuditError, BackendKind, MetricKind, Resources, ResultsFile,
};
use majoraudit::demographics::{DemographicValue, Dimension};
use majoraudit::ingest::{
    parse_research_file, summarize_groups, write_research_file, DemographicCatalog, FileDescriptor, IngestError,
    StudyFilter, KNOWN_TEST_IDS,
};
use majoraudit::metrics::TopK;

#[derive(Parser)]
#[command(name = "majoraudit", version, about = "Audit demographic disparities in college-major recommendations")]
struct Cli {
    #[command(flatten)]
    global: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Audit config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["synthetic", "live"])]
    backend: Option<String>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Requests per minute (0 = unlimited).
    #[arg(long, global = true)]
    rate_limit: Option<f64>,
    /// Comma-separated sampling temperatures.
    #[arg(long, global = true, value_delimiter = ',')]
    temperatures: Option<Vec<f64>>,
    /// Cache file (JSONL).
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a research file, filter it and summarize group shares.
    Ingest(IngestArgs),
    /// Print the cell matrix.
    Plan {
        #[arg(long)]
        json: bool,
    },
    /// Run every planned query into the cache.
    Collect {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute metrics from the cache and write all reports.
    Metrics {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a table or series from a results file.
    Report(ReportArgs),
    /// Posterior over score deciles per group.
    Bayes(BayesArgs),
}

#[derive(Args)]
struct IngestArgs {
    input: PathBuf,
    /// Descriptor TOML (delimiter, has_header, [columns]).
    #[arg(long)]
    descriptor: Option<PathBuf>,
    #[arg(long)]
    delimiter: Option<char>,
    #[arg(long)]
    no_header: bool,
    /// Catalog CSV `id,dimension,label,share`; the built-in study catalog otherwise.
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    grade: u8,
    #[arg(long, value_delimiter = ',')]
    tests: Option<Vec<u32>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Table,
    Series,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Args)]
struct ReportArgs {
    /// results.json written by `metrics`; `<output_dir>/results.json` by default.
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long, default_value = "jaccard")]
    metric: MetricKind,
    #[arg(long, value_enum, default_value_t = Layout::Table)]
    layout: Layout,
    #[arg(long)]
    dimension: Option<Dimension>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Only results with this temperature policy label.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BayesArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    groups: Vec<DemographicValue>,
    #[arg(long)]
    k: Option<usize>,
    /// Write the posterior table CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<AuditError> for Failure {
    fn from(e: AuditError) -> Self {
        Self { code: e.exit_code() as u8, message: e.to_string() }
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        let code = if matches!(e, IngestError::Config(_) | IngestError::Catalog(_)) { 2 } else { 1 };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: 1, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

type Outcome = Result<u8, Failure>;

fn load_config(o: &Overrides) -> Result<AuditConfig, Failure> {
    let mut c = match &o.config {
        Some(p) => AuditConfig::load(p)?,
        None => AuditConfig::default(),
    };
    if let Some(b) = &o.backend {
        c.backend.kind = b.parse::<BackendKind>().map_err(usage)?;
    }
    if let Some(p) = o.parallelism {
        c.backend.parallelism = p;
    }
    if let Some(r) = o.rate_limit {
        c.backend.rate_limit = r;
    }
    if let Some(t) = &o.temperatures {
        c.study.temperatures = t.clone();
    }
    if let Some(p) = &o.cache {
        c.paths.cache = Some(p.clone());
    }
    c.validate()?;
    Ok(c)
}

fn output_dir(config: &AuditConfig, flag: &Option<PathBuf>) -> PathBuf {
    flag.clone().or_else(|| config.paths.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

/// Write to stdout, treating a closed pipe as success.
fn emit(body: &str) -> Result<(), Failure> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(body.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn write_or_print(out: &Option<PathBuf>, body: &str) -> Result<(), Failure> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, body)?;
        }
        None => emit(body)?,
    }
    Ok(())
}

fn ingest(a: &IngestArgs) -> Outcome {
    let mut descriptor = match &a.descriptor {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str::<FileDescriptor>(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => FileDescriptor::default(),
    };
    if let Some(d) = a.delimiter {
        descriptor.delimiter = d;
    }
    if a.no_header {
        descriptor.has_header = false;
    }
    let catalog = match &a.catalog {
        Some(p) => DemographicCatalog::from_csv(BufReader::new(File::open(p)?))?,
        None => DemographicCatalog::study_groups(),
    };
    for w in catalog.validate()? {
        log::warn!("catalog: {} shares cover {:.3}", w.dimension.as_str(), w.coverage);
    }
    let parsed = parse_research_file(BufReader::new(File::open(&a.input)?), &descriptor)?;
    let report = &parsed.report;
    for e in &report.errors {
        eprintln!("row {}: {}", e.row, e.message);
    }
    let filter = StudyFilter {
        grade: a.grade,
        test_ids: a.tests.clone().map_or_else(|| KNOWN_TEST_IDS.into_iter().collect(), |t| t.into_iter().collect::<BTreeSet<_>>()),
        group_ids: catalog.group_ids(),
    };
    let population = filter.apply(&parsed.records);
    let summary = summarize_groups(&population.records, &catalog);
    eprintln!(
        "{} records, {} row errors, {} suppressed, {} unknown-test; {} in study population ({} suppressed dropped)",
        parsed.records.len(),
        report.errors.len(),
        report.suppressed_rows,
        report.unknown_test_rows,
        population.records.len(),
        population.suppressed,
    );
    match &a.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("population.tsv"), write_research_file(&population.records, &descriptor)?)?;
            std::fs::write(dir.join("groups.csv"), summary.to_csv())?;
        }
        None => emit(&summary.to_csv())?,
    }
    Ok(u8::from(!report.is_clean()))
}

fn plan_cmd(config: &AuditConfig, json: bool) -> Outcome {
    let resources = Resources::load(config)?;
    let p = plan(config, &resources.template)?;
    if json {
        emit(&(serde_json::to_string_pretty(&p).expect("plan serializes") + "\n"))?;
    } else {
        emit(&p.summary())?;
    }
    Ok(0)
}

fn collect_cmd(config: &AuditConfig, out: &Option<PathBuf>) -> Outcome {
    if config.paths.cache.is_none() {
        return Err(usage("collect needs a cache path (paths.cache or --cache)"));
    }
    let resources = Resources::load(config)?;
    let p = plan(config, &resources.template)?;
    let client = build_client(config)?;
    let collection = collect(&p, &client, config.backend.parallelism);
    let dir = output_dir(config, out);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("responses.jsonl"), collection.to_jsonl())?;
    let failures = collection.failures();
    eprintln!(
        "{} responses, {} failed, {} backend calls, cache holds {}",
        collection.responses().len(),
        failures,
        client.backend_calls(),
        client.cache_len()
    );
    Ok(u8::from(failures > 0))
}

fn metrics_cmd(config: &AuditConfig, out: &Option<PathBuf>) -> Outcome {
    let client = build_cache_client(config)?;
    let run = run_audit(config, &client)?;
    let dir = output_dir(config, out);
    let written = write_outputs(&run, &dir)?;
    for m in &config.study.metrics {
        emit(&emit_table(&run.results, *m, &run.scheme, &run.manifest.fingerprint()).text)?;
    }
    eprintln!("wrote {} files to {}; {} failed queries", written.len(), dir.display(), run.failed_queries);
    Ok(run.exit_code() as u8)
}

fn report_cmd(config: &AuditConfig, a: &ReportArgs) -> Outcome {
    let path = a.results.clone().unwrap_or_else(|| output_dir(config, &None).join("results.json"));
    let file = ResultsFile::load(&path)?;
    let mut groups = file.by_policy();
    if let Some(p) = &a.policy {
        groups.retain(|(label, _)| label == p);
    }
    let (_, results) = match groups.len() {
        0 => return Err(usage("no results match the requested policy")),
        1 => groups.remove(0),
        _ => {
            let labels: Vec<&str> = groups.iter().map(|(l, _)| l.as_str()).collect();
            return Err(usage(format!("several temperature policies present, pick one with --policy: {}", labels.join(", "))));
        }
    };
    let body = match a.layout {
        Layout::Table => {
            let t = emit_table(&results, a.metric, &file.scheme, &file.manifest);
            match a.format.unwrap_or(Format::Text) {
                Format::Text => t.text,
                Format::Csv => t.csv,
                Format::Json => return Err(usage("tables are emitted as text or csv")),
            }
        }
        Layout::Series => {
            let dim = a.dimension.ok_or_else(|| usage("series layout needs --dimension"))?;
            let s = emit_series(&results, a.metric, dim, &file.scheme, &file.manifest)?;
            match a.format.unwrap_or(Format::Csv) {
                Format::Json => s.to_json(),
                Format::Csv => s.to_csv(),
                Format::Text => return Err(usage("series are emitted as csv or json")),
            }
        }
    };
    write_or_print(&a.out, &body)?;
    Ok(0)
}

fn bayes_cmd(config: &AuditConfig, a: &BayesArgs) -> Outcome {
    let k = TopK::new(a.k.unwrap_or(config.stats.bayes_top_k)).map_err(|e| usage(e.to_string()))?;
    if !config.scheme()?.is_deciles() {
        return Err(AuditError::NotDeciles.into());
    }
    let client = build_cache_client(config)?;
    let run = run_audit(config, &client)?;
    let prior = (!config.stats.score_prior.is_empty()).then_some(config.stats.score_prior.as_slice());
    let report = bayes_report(&run.cell_sets, &run.vocab.stem_flags(), &run.scheme, &a.groups, k, prior)?;
    emit(&report.summary())?;
    if let Some(p) = &a.out {
        write_or_print(&Some(p.clone()), &report.to_csv(&run.manifest.fingerprint()))?;
    }
    Ok(run.exit_code() as u8)
}

fn run(cli: &Cli) -> Outcome {
    if let Command::Ingest(a) = &cli.command {
        return ingest(a);
    }
    let config = load_config(&cli.global)?;
    match &cli.command {
        Command::Ingest(_) => unreachable!(),
        Command::Plan { json } => plan_cmd(&config, *json),
        Command::Collect { out } => collect_cmd(&config, out),
        Command::Metrics { out } => metrics_cmd(&config, out),
        Command::Report(a) => report_cmd(&config, a),
        Command::Bayes(a) => bayes_cmd(&config, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
