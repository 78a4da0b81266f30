use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use sparqlgen_core::eval::{
    accounting_report, echo_reference_llm, load_corpus, profile_corpus, run_evaluation, EvalConfig, EvalSystem,
    EvaluationReport, Outcome,
};
use sparqlgen_core::harvest::QueryExample;
use sparqlgen_core::iri::PrefixMap;
use sparqlgen_core::knowledge::{KnowledgeBase, KnowledgeSources};
use sparqlgen_core::llm::{LlmProvider, ScriptedLlm, Transcript};
use sparqlgen_core::pipeline::execute;
use sparqlgen_core::results::ResultSet;
use sparqlgen_core::schema::{build_matrix, render_shapes, truncate_matrix};
use sparqlgen_server::config::{secret_from_env, Config};
use sparqlgen_server::state::{descriptor, AppState, SourceProvider};
use sparqlgen_server::turnlog::TurnLog;
use sparqlgen_server::{providers, router};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Parser)]
#[command(name = "sparqlgen", version, about = "Answer questions over SPARQL endpoints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "sparqlgen.toml")]
        config: PathBuf,
        /// Harvest every endpoint again instead of using cached records.
        #[arg(long)]
        refresh: bool,
    },
    /// Harvest endpoint metadata into the cache.
    Harvest {
        #[arg(long, default_value = "sparqlgen.toml")]
        config: PathBuf,
        /// Only this endpoint; all configured endpoints by default.
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Build the vector index from cached harvests and write it to disk.
    Index {
        #[arg(long, default_value = "sparqlgen.toml")]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the ShEx shapes of an endpoint's cached schema.
    ExportShapes {
        #[arg(long, default_value = "sparqlgen.toml")]
        config: PathBuf,
        #[arg(long)]
        endpoint: String,
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Cross-validate the pipeline on a corpus of question/query pairs.
    Evaluate {
        #[arg(long, default_value = "sparqlgen.toml")]
        config: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
        /// `config` for the configured model, `echo` to answer with the
        /// reference queries, or `mock:<transcript.json>`.
        #[arg(long, default_value = "config")]
        provider: String,
        /// JSON object of example id to result set, used instead of
        /// running the reference queries.
        #[arg(long)]
        references: Option<PathBuf>,
        /// Keep examples whose reference query returns no rows.
        #[arg(long)]
        keep_empty: bool,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Histogram of triple-pattern counts in a corpus.
    Profile {
        #[arg(long)]
        corpus: PathBuf,
    },
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse().command).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

async fn run(command: Command) -> Result<(), BoxError> {
    match command {
        Command::Serve { config, refresh } => serve(&Config::load(&config)?, refresh).await,
        Command::Harvest { config, endpoint } => harvest(&Config::load(&config)?, endpoint.as_deref()).await,
        Command::Index { config, out } => index(&Config::load(&config)?, out).await,
        Command::ExportShapes { config, endpoint, fraction } => {
            export_shapes(&Config::load(&config)?, &endpoint, fraction).await
        }
        Command::Evaluate { config, corpus, k, seed, repeats, parallelism, provider, references, keep_empty, out } => {
            let config = Config::load(&config)?;
            let eval = EvalConfig {
                k,
                seed,
                repeats,
                parallelism,
                schema_fraction: config.index.schema_fraction,
                index_batch: config.index.batch_size,
                pipeline: config.pipeline.clone(),
                ..EvalConfig::default()
            };
            let options = EvaluateOptions { provider, references, keep_empty, out };
            evaluate(&config, &corpus, eval, options).await
        }
        Command::Profile { corpus } => {
            let profile = profile_corpus(&load_corpus(&corpus)?);
            println!("{}", serde_json::to_string_pretty(&profile)?);
            Ok(())
        }
    }
}

async fn serve(config: &Config, refresh: bool) -> Result<(), BoxError> {
    let providers = providers::from_config(config)?;
    let admin_token = secret_from_env(Some(&config.server.admin_token_env)).ok().flatten();
    if admin_token.is_none() {
        tracing::warn!(var = %config.server.admin_token_env, "admin token not set; /v1/admin routes are disabled");
    }
    let turn_log = config.server.turn_log.as_deref().map(TurnLog::open).transpose()?;
    let state = Arc::new(
        AppState::new(config.clone(), providers).with_admin_token(admin_token).with_turn_log(turn_log),
    );
    let indexing = state.clone();
    tokio::spawn(async move {
        if let Err(e) = indexing.index_all(refresh).await {
            tracing::error!(error = %e, "initial indexing failed");
        }
    });
    let listener = tokio::net::TcpListener::bind(&config.server.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state)).await?;
    Ok(())
}

async fn harvest(config: &Config, only: Option<&str>) -> Result<(), BoxError> {
    let harvester = providers::harvester(config);
    let mut failed = 0;
    for ep in config.endpoints.iter().filter(|e| only.is_none_or(|u| u == e.url)) {
        match harvester.fetch(&descriptor(ep), true).await {
            Ok(r) => {
                let summary = serde_json::json!({
                    "endpoint": r.endpoint.endpoint_url,
                    "metadata_status": r.endpoint.metadata_status,
                    "examples": r.examples.usable.len(),
                    "quarantined": r.examples.quarantined.len(),
                    "void_records": r.void.len(),
                    "void_source": r.void_source,
                    "harvested_at": r.harvested_at,
                });
                println!("{summary}");
            }
            Err(e) => {
                failed += 1;
                eprintln!("{e}");
            }
        }
    }
    if failed > 0 {
        return Err(format!("{failed} endpoint(s) failed").into());
    }
    Ok(())
}

async fn cached_sources(config: &Config) -> Result<KnowledgeSources, BoxError> {
    let harvester = providers::harvester(config);
    let mut records = Vec::new();
    for ep in &config.endpoints {
        let mut r = harvester.fetch(&descriptor(ep), false).await?;
        if let Some(label) = &ep.label {
            r.endpoint.label = label.clone();
        }
        if let Some(description) = &ep.description {
            r.endpoint.description = description.clone();
        }
        records.push(r);
    }
    Ok(KnowledgeSources::from_records(&records))
}

async fn index(config: &Config, out: Option<PathBuf>) -> Result<(), BoxError> {
    let sources = cached_sources(config).await?;
    let embedder = providers::embedder(&config.embeddings)?;
    let kb = KnowledgeBase::build(&sources, embedder.as_ref(), config.index.schema_fraction, config.index.batch_size)
        .await?;
    let dir = out.unwrap_or_else(|| config.index.dir.clone());
    let manifest = kb.index.save(&dir)?;
    println!("{}", serde_json::to_string_pretty(&manifest)?);
    Ok(())
}

async fn export_shapes(config: &Config, endpoint: &str, fraction: Option<f64>) -> Result<(), BoxError> {
    let sources = cached_sources(config).await?;
    let records = sources.void.get(endpoint).ok_or_else(|| format!("no harvested schema for {endpoint}"))?;
    let mut prefixes = PrefixMap::default();
    for ex in &sources.examples {
        for (p, ns) in ex.parsed().map(|q| q.prefixes.clone()).unwrap_or_default() {
            if prefixes.namespace(&p).is_none() {
                prefixes.add(&p, &ns);
            }
        }
    }
    let matrix = truncate_matrix(&build_matrix(records), fraction.unwrap_or(config.index.schema_fraction))?;
    let mut stdout = std::io::stdout().lock();
    for shape in render_shapes(&matrix, &prefixes) {
        writeln!(stdout, "{}\n", shape.rendered_shex)?;
    }
    Ok(())
}

struct EvaluateOptions {
    provider: String,
    references: Option<PathBuf>,
    keep_empty: bool,
    out: Option<PathBuf>,
}

async fn evaluate(config: &Config, corpus_path: &Path, eval: EvalConfig, options: EvaluateOptions) -> Result<(), BoxError> {
    let mut corpus = load_corpus(corpus_path)?;
    corpus.retain(|e| {
        let ok = e.parsed().is_some();
        if !ok {
            eprintln!("skipping {}: reference query does not parse", e.id);
        }
        ok
    });
    let llm: Arc<dyn LlmProvider> = match options.provider.as_str() {
        "config" => providers::llm(&config.llm)?,
        "echo" => Arc::new(echo_reference_llm(&corpus)),
        other => match other.strip_prefix("mock:") {
            Some(path) => Arc::new(ScriptedLlm::new(Transcript::from_file(Path::new(path))?)),
            None => return Err(format!("unknown provider {other:?}").into()),
        },
    };
    let executor = Arc::new(providers::executor(config));
    let mut references: BTreeMap<String, ResultSet> = match &options.references {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => BTreeMap::new(),
    };
    let limits = eval.pipeline.limits();
    for ex in &corpus {
        if !references.contains_key(&ex.id) {
            if let Ok(rs) = execute(executor.as_ref(), &ex.sparql, &ex.endpoint_url, &limits).await {
                references.insert(ex.id.clone(), rs);
            }
        }
    }
    if !options.keep_empty {
        let before = corpus.len();
        corpus.retain(|e| references.get(&e.id).is_none_or(|rs| !rs.is_empty()));
        if corpus.len() < before {
            eprintln!("excluded {} example(s) whose reference returns no rows", before - corpus.len());
        }
    }
    let sources = cached_sources(config).await?;
    let system = EvalSystem { llm, embedder: providers::embedder(&config.embeddings)?, executor };
    let report = run_evaluation(&sources, &corpus, &system, &eval, &references).await?;

    let json = serde_json::to_string_pretty(&serde_json::json!({
        "report": report,
        "accounting": accounting_report(&report.records.iter().map(|r| r.accounting).collect::<Vec<_>>(), &config.prices),
    }))?;
    match &options.out {
        Some(path) => std::fs::write(path, json)?,
        None => println!("{json}"),
    }
    eprint!("{}", summary_table(&report, &corpus));
    Ok(())
}

fn summary_table(report: &EvaluationReport, corpus: &[QueryExample]) -> String {
    let mut out = format!("{:<24} {:>5} {:>9} {:>9} {:>9}\n", "example", "fold", "precision", "recall", "f1");
    for r in report.records.iter().filter(|r| r.repeat == 0) {
        let note = match (&r.reference, &r.generated) {
            (Outcome::Error(_), _) => "  reference failed",
            (_, Outcome::NotRun) => "  no query",
            (_, Outcome::Error(_)) => "  execution failed",
            _ => "",
        };
        out.push_str(&format!(
            "{:<24} {:>5} {:>9.3} {:>9.3} {:>9.3}{note}\n",
            r.example_id, r.fold, r.precision, r.recall, r.f1
        ));
    }
    let s = &report.summary;
    out.push_str(&format!("\n{} examples, {} repeats, mean F1 {:.3}", corpus.len(), report.repeats, s.mean_f1));
    if let Some(ci) = s.ci95 {
        out.push_str(&format!(" (95% CI {:.3} to {:.3})", ci.low, ci.high));
    }
    out.push('\n');
    out
}
