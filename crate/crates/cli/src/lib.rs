//! Command-line front end: `srtk link | preprocess | retrieve | visualize`.
//!
//! Exit codes: 0 when every record succeeded, 1 when some record failed
//! (its error is kept in the output where the format allows), 2 for bad
//! configuration, in which case no output is written.

pub mod config;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use srtk_core::evaluator::EvalReport;
use srtk_core::expander::{ExpanderConfig, PathExpander};
use srtk_core::kgdata::{read_records, QuestionRecord, Record, RecordWriter, RetrievalResult, Subgraph};
use srtk_core::kgsource::GraphKind;
use srtk_core::linker::{link_records, Linker, WikiMapping, DEFAULT_SPOTLIGHT_CONFIDENCE};
use srtk_core::preprocess::{generate_samples, Metric, PreprocessConfig};
use srtk_core::visualizer::{build_graph_document, file_stem, label_ids, render_html, DEFAULT_TEMPLATE};
use srtk_core::{Error, Result};

pub use config::{open_source, resolve_profile, run_profile, ScorerSpec};

const TRAIN_POINTER: &str = "srtk train is provided by the separate trainer tool: \
run `srtk-trainer train`, then `srtk-trainer serve` and pass its URL to `srtk retrieve --scorer`";

pub const AUTH_ENV: &str = "SRTK_EL_AUTHORIZATION";

#[derive(Debug, Parser)]
#[command(name = "srtk", version, about = "Subgraph retrieval over knowledge graphs")]
struct Cli {
    /// Worker threads for record-level parallelism.
    #[arg(long, global = true, default_value_t = 4)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Link question entities through an entity-linking service.
    Link(LinkArgs),
    /// Build scorer training samples from question/answer pairs.
    Preprocess(PreprocessArgs),
    /// Retrieve subgraphs by beam search over relation paths.
    Retrieve(RetrieveArgs),
    /// Render retrieved subgraphs as standalone HTML pages.
    Visualize(VisualizeArgs),
    /// Training lives in the separate trainer tool.
    #[command(disable_help_flag = true)]
    Train {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        rest: Vec<String>,
    },
}

#[derive(Debug, Args)]
struct GraphArgs {
    /// wikidata, freebase, dbpedia, custom, or a TOML profile file.
    #[arg(long = "knowledge-graph", default_value = "wikidata")]
    knowledge_graph: String,
    #[arg(long = "sparql-endpoint")]
    sparql_endpoint: Option<String>,
    /// Answer graph queries from a local triple file instead of an endpoint.
    #[arg(long)]
    fixture: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LinkArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long = "knowledge-graph", default_value = "wikidata")]
    knowledge_graph: String,
    #[arg(long = "el-endpoint")]
    el_endpoint: String,
    /// Title-to-Q-ID table (TSV) for wikidata linking.
    #[arg(long = "wikimapper-db")]
    wikimapper_db: Option<PathBuf>,
    #[arg(long, env = AUTH_ENV, hide_env_values = true)]
    authorization: Option<String>,
    /// Spotlight confidence threshold.
    #[arg(long, default_value_t = DEFAULT_SPOTLIGHT_CONFIDENCE)]
    confidence: f64,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    graph: GraphArgs,
    /// Search paths between question and answer entities instead of reading `paths`.
    #[arg(long = "search-path")]
    search_path: bool,
    #[arg(long, default_value = "jaccard")]
    metric: String,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long = "num-negative", default_value_t = 2)]
    num_negative: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct RetrieveArgs {
    #[arg(long)]
    input: PathBuf,
    /// Required unless --evaluate is given.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    graph: GraphArgs,
    /// `lexical` or the URL of an embedding service.
    #[arg(long, alias = "scorer-model-path", default_value = "lexical")]
    scorer: String,
    #[arg(long = "beam-width", default_value_t = 2)]
    beam_width: usize,
    #[arg(long = "max-depth", default_value_t = 1)]
    max_depth: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Print answer coverage and average subgraph size.
    #[arg(long)]
    evaluate: bool,
    /// Keep the ranked relation paths in each output line.
    #[arg(long = "include-paths")]
    include_paths: bool,
}

#[derive(Debug, Args)]
struct VisualizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long = "output-dir", default_value = "visualized")]
    output_dir: PathBuf,
    #[command(flatten)]
    graph: GraphArgs,
    /// HTML template with {{data}} and {{script}} placeholders.
    #[arg(long)]
    template: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if cli.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return 2;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let outcome = pool.install(|| match cli.command {
        Command::Link(args) => link(args),
        Command::Preprocess(args) => preprocess(args),
        Command::Retrieve(args) => retrieve(args),
        Command::Visualize(args) => visualize(args),
        Command::Train { .. } => {
            eprintln!("{TRAIN_POINTER}");
            Ok(usize::MAX)
        }
    });
    match outcome {
        Ok(usize::MAX) => 2,
        Ok(0) => 0,
        Ok(_) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn read_input<T: Record>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path)
        .map_err(|e| Error::Config(format!("cannot open input {}: {e}", path.display())))?;
    read_records(BufReader::new(file))
        .collect::<Result<Vec<T>>>()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_output<'a, T: Record + 'a>(path: &Path, records: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let file = File::create(path)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", path.display())))?;
    let mut writer = RecordWriter::new(BufWriter::new(file));
    for record in records {
        writer.write(record)?;
    }
    writer.into_inner()?;
    Ok(())
}

fn check_unit(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1], got {value}")))
    }
}

// Each command returns the number of failed records.

fn link(args: LinkArgs) -> Result<usize> {
    check_unit("--confidence", args.confidence)?;
    let profile = resolve_profile(&args.knowledge_graph)?;
    let linker = match profile.name {
        GraphKind::Wikidata => {
            let db = args.wikimapper_db.as_deref().ok_or_else(|| {
                Error::Config("linking to wikidata needs --wikimapper-db".to_owned())
            })?;
            Linker::rel(
                args.el_endpoint.clone(),
                args.authorization.clone(),
                WikiMapping::open(db)?,
                profile.http_settings(),
            )
        }
        GraphKind::Dbpedia => Linker::spotlight(
            args.el_endpoint.clone(),
            args.confidence,
            profile.clone(),
            profile.http_settings(),
        )?,
        other => {
            return Err(Error::Config(format!(
                "entity linking is available for wikidata and dbpedia, not {other}"
            )))
        }
    };
    let mut records: Vec<QuestionRecord> = read_input(&args.input)?;
    let stats = link_records(&linker, &mut records);
    write_output(&args.output, &records)?;
    eprintln!(
        "link: {} records, {} failed, {} annotations without a Wikidata id",
        stats.records, stats.failed, stats.dropped
    );
    Ok(stats.failed)
}

fn preprocess(args: PreprocessArgs) -> Result<usize> {
    check_unit("--threshold", args.threshold)?;
    let metric: Metric = args.metric.parse()?;
    let profile = run_profile(
        &args.graph.knowledge_graph,
        args.graph.sparql_endpoint.as_deref(),
        args.graph.fixture.is_some(),
    )?;
    let source = open_source(profile, args.graph.fixture.as_deref())?;
    let config = PreprocessConfig {
        threshold: args.threshold,
        num_negative: args.num_negative,
        seed: args.seed,
        metric,
        search_paths: args.search_path,
    };
    let records: Vec<QuestionRecord> = read_input(&args.input)?;
    let outcomes: Vec<_> = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| generate_samples(r, i, source.as_ref(), &config))
        .collect();
    let mut samples = Vec::new();
    let mut failed = 0;
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(s) => samples.extend(s),
            Err(e) => {
                failed += 1;
                eprintln!("record {}: {e}", i + 1);
            }
        }
    }
    write_output(&args.output, &samples)?;
    eprintln!(
        "preprocess: {} records, {} failed, {} samples",
        records.len(),
        failed,
        samples.len()
    );
    Ok(failed)
}

fn retrieve(args: RetrieveArgs) -> Result<usize> {
    if args.output.is_none() && !args.evaluate {
        return Err(Error::Config("--output is required unless --evaluate is given".to_owned()));
    }
    let scorer = ScorerSpec::parse(&args.scorer)?.build()?;
    let profile = run_profile(
        &args.graph.knowledge_graph,
        args.graph.sparql_endpoint.as_deref(),
        args.graph.fixture.is_some(),
    )?;
    let source = open_source(profile, args.graph.fixture.as_deref())?;
    let expander = PathExpander::new(
        source.as_ref(),
        scorer.as_ref(),
        ExpanderConfig {
            beam_width: args.beam_width,
            max_depth: args.max_depth,
            temperature: args.temperature,
            ..Default::default()
        },
    )?;
    let records: Vec<QuestionRecord> = read_input(&args.input)?;
    let outcomes: Vec<Result<RetrievalResult>> =
        records.par_iter().map(|r| expander.retrieve(r)).collect();

    let mut report = EvalReport::default();
    let mut failed = 0;
    let results: Vec<RetrievalResult> = records
        .into_iter()
        .zip(outcomes)
        .enumerate()
        .map(|(i, (record, outcome))| match outcome {
            Ok(mut result) => {
                match &result.record.answer_entities {
                    Some(answers) => report.record(&result.subgraph, answers),
                    None => report.record_failure(),
                }
                if !args.include_paths {
                    result.paths = None;
                }
                result
            }
            Err(e) => {
                failed += 1;
                report.record_failure();
                eprintln!("record {}: {e}", i + 1);
                let mut record = record;
                record.set_error(e.to_string());
                RetrievalResult {
                    record,
                    paths: None,
                    subgraph: Subgraph::new(),
                }
            }
        })
        .collect();
    if let Some(output) = &args.output {
        write_output(output, &results)?;
    }
    eprintln!("retrieve: {} records, {} failed", results.len(), failed);
    if args.evaluate {
        println!("{report}");
    }
    Ok(failed)
}

fn visualize(args: VisualizeArgs) -> Result<usize> {
    let template = match &args.template {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read template {}: {e}", path.display())))?,
        None => DEFAULT_TEMPLATE.to_owned(),
    };
    for required in ["{{data}}", "{{script}}"] {
        if !template.contains(required) {
            return Err(Error::Config(format!("template lacks the {required} placeholder")));
        }
    }
    let profile = run_profile(
        &args.graph.knowledge_graph,
        args.graph.sparql_endpoint.as_deref(),
        args.graph.fixture.is_some(),
    )?;
    let source = open_source(profile, args.graph.fixture.as_deref())?;
    let results: Vec<RetrievalResult> = read_input(&args.input)?;
    fs::create_dir_all(&args.output_dir).map_err(|e| {
        Error::Config(format!("cannot create {}: {e}", args.output_dir.display()))
    })?;

    let pages: Vec<(String, Result<String>)> = results
        .par_iter()
        .enumerate()
        .map(|(i, result)| {
            let page = source.fetch_labels(&label_ids(result)).and_then(|labels| {
                render_html(&build_graph_document(result, &labels), &template)
            });
            (file_stem(result, i), page)
        })
        .collect();

    let mut used = BTreeSet::new();
    let mut failed = 0;
    for (i, (stem, page)) in pages.into_iter().enumerate() {
        let page = match page {
            Ok(page) => page,
            Err(e) => {
                failed += 1;
                eprintln!("record {}: {e}", i + 1);
                continue;
            }
        };
        let stem = if used.insert(stem.clone()) {
            stem
        } else {
            let alt = format!("{stem}-{i}");
            used.insert(alt.clone());
            alt
        };
        let path = args.output_dir.join(format!("{stem}.html"));
        fs::write(&path, page)?;
    }
    eprintln!(
        "visualize: {} records, {} failed, pages in {}",
        results.len(),
        failed,
        args.output_dir.display()
    );
    Ok(failed)
}
