//! `kgresolve` command-line driver.
//!
//! Each pipeline stage is a subcommand working on files, so a run can be
//! stopped, inspected and resumed between stages:
//!
//! ```text
//! kgresolve build-graph --context ctx.txt --out graph.json
//! kgresolve retrieve-paths --graph graph.json --question "..." --out paths.json
//! kgresolve resolve --paths paths.json --question "..." --context ctx.txt
//! kgresolve answer --context ctx.txt --question "..."
//! kgresolve eval --dataset data.jsonl --out runs/full
//! ```
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 backend
//! failure, 3 dataset error.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use kgresolve::conflict::{resolve, ConflictError};
use kgresolve::eval::{load_dataset, run_eval, write_results, EvalError};
use kgresolve::gateway::{EmbeddingCache, Endpoint, GatewayError, HttpGateway, MockBackend, ModelGateway};
use kgresolve::graph::{construct_graph, GraphError};
use kgresolve::pipeline::{
    answer_query, load_graph, parse_config, save_graph, Clock, ConfigError, ConfigOverrides, FrozenClock,
    PipelineConfig, PipelineError, SystemClock,
};
use kgresolve::retrieval::{retrieve, Retrieval, RetrievalError};

#[derive(Parser)]
#[command(
    name = "kgresolve",
    version,
    about = "Graph-based conflict filtering for retrieval-augmented answering"
)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat TOML config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// OpenAI-compatible base URL for generation
    #[arg(long, global = true)]
    model_url: Option<String>,
    #[arg(long, global = true)]
    model_id: Option<String>,
    /// Base URL for embeddings (defaults to --model-url)
    #[arg(long, global = true)]
    embed_url: Option<String>,
    #[arg(long, global = true)]
    embed_model: Option<String>,
    /// Entropy-increase threshold in bits
    #[arg(long, global = true, allow_negative_numbers = true)]
    tau: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    beta: Option<f64>,
    /// Number of important entities and relations
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Number of paths kept after scoring
    #[arg(long, global = true)]
    paths_k: Option<usize>,
    /// full, no_kg, no_conflict, standard_rag or no_rag
    #[arg(long, global = true)]
    mode: Option<String>,
    /// top_delta or raw_context
    #[arg(long, global = true)]
    fallback: Option<String>,
    #[arg(long, global = true)]
    temperature: Option<f64>,
    #[arg(long, global = true)]
    logprob_top_k: Option<u32>,
    #[arg(long, global = true)]
    max_answer_tokens: Option<u32>,
    #[arg(long, global = true)]
    max_extraction_tokens: Option<u32>,
    #[arg(long, global = true)]
    max_segment_tokens: Option<usize>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Write query traces as JSON Lines
    #[arg(long, global = true)]
    trace: bool,
    /// Answer from a scripted mock backend instead of HTTP endpoints
    #[arg(long, global = true)]
    mock_script: Option<PathBuf>,
    /// Log at debug level
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Extract triples from a context and save the graph
    BuildGraph {
        #[arg(long)]
        context: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select and render reasoning paths for a question over a saved graph
    RetrievePaths {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        question: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter saved paths by entropy change and answer
    Resolve {
        #[arg(long)]
        paths: PathBuf,
        #[arg(long)]
        question: String,
        /// Raw context used when no path is usable
        #[arg(long)]
        context: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole pipeline for one question
    Answer {
        #[arg(long)]
        context: PathBuf,
        #[arg(long)]
        question: String,
        /// Directory receiving traces.jsonl when --trace is set
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a JSON Lines dataset
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Directory receiving results.csv, summary.json and traces.jsonl
        #[arg(long)]
        out: PathBuf,
        /// Report failing records instead of aborting
        #[arg(long)]
        skip_errors: bool,
    },
}

enum Failure {
    Invalid(String),
    Backend(String),
    Dataset(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Backend(_) => 2,
            Failure::Dataset(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Backend(m) | Failure::Dataset(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Invalid(format!("invalid configuration: {e}"))
    }
}

impl From<GatewayError> for Failure {
    fn from(e: GatewayError) -> Self {
        Failure::Backend(e.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.gateway_error().is_some() {
            Failure::Backend(e.to_string())
        } else {
            Failure::Invalid(e.to_string())
        }
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<RetrievalError> for Failure {
    fn from(e: RetrievalError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<ConflictError> for Failure {
    fn from(e: ConflictError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Record { id, source } => {
                let inner = Failure::from(source);
                let msg = format!("record {id}: {}", inner.message());
                match inner {
                    Failure::Backend(_) => Failure::Backend(msg),
                    _ => Failure::Invalid(msg),
                }
            }
            other => Failure::Invalid(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Invalid(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn to_json(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

type Backend = (Arc<dyn ModelGateway>, Box<dyn Clock>);

impl Common {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            model_url: self.model_url.clone(),
            model_id: self.model_id.clone(),
            embed_url: self.embed_url.clone(),
            embed_model: self.embed_model.clone(),
            alpha: self.alpha,
            beta: self.beta,
            k: self.k,
            paths_k: self.paths_k,
            tau: self.tau,
            fallback: self.fallback.clone(),
            temperature: self.temperature,
            logprob_top_k: self.logprob_top_k,
            max_answer_tokens: self.max_answer_tokens,
            max_extraction_tokens: self.max_extraction_tokens,
            max_segment_tokens: self.max_segment_tokens,
            mode: self.mode.clone(),
            parallelism: self.parallelism,
            trace: self.trace.then_some(true),
        }
    }

    /// The backend plus a clock: mock runs use a frozen clock so their
    /// output is reproducible byte for byte.
    fn backend(&self, cfg: &PipelineConfig) -> Result<Backend, Failure> {
        if let Some(script) = &self.mock_script {
            let mock = MockBackend::from_path(script).map_err(|e| io_err(script, e))?;
            return Ok((Arc::new(mock), Box::new(FrozenClock)));
        }
        let url = cfg
            .model
            .url
            .clone()
            .ok_or_else(|| Failure::Invalid("no backend: pass --model-url or --mock-script".into()))?;
        let embed_url = cfg.embedding.url.clone().unwrap_or_else(|| url.clone());
        let http = HttpGateway::new(
            Endpoint::new(url, cfg.model.model_id.clone()),
            Endpoint::new(embed_url, cfg.embedding.model_id.clone()),
        )?;
        Ok((Arc::new(http), Box::new(SystemClock::new())))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = parse_config(cli.common.config.as_deref(), cli.common.overrides())?;
    let (gateway, clock) = cli.common.backend(&cfg)?;
    let gateway: &dyn ModelGateway = gateway.as_ref();

    match cli.command {
        Command::BuildGraph { context, out } => {
            let text = read(&context)?;
            let built = construct_graph(&text, cfg.max_segment_tokens, gateway, &cfg.extraction_settings())?;
            save_graph(&built.graph, &out).map_err(|e| io_err(&out, e))?;
            let stats = built.graph.stats();
            println!(
                "{} segments ({} skipped), {} entities, {} relations, {} triples -> {}",
                built.segments.len(),
                built.skipped_segments.len(),
                stats.entities,
                stats.relations,
                stats.triples,
                out.display()
            );
        }
        Command::RetrievePaths { graph, question, out } => {
            let g = load_graph(&graph).map_err(|e| io_err(&graph, e))?;
            let cache = EmbeddingCache::new(gateway);
            let r = retrieve(
                &question,
                &g,
                gateway,
                &cfg.extraction_settings(),
                &cfg.retrieval,
                &cache,
            )?;
            write(&out, &to_json(&r))?;
            println!(
                "{} candidate paths, {} selected -> {}",
                r.init_count,
                r.super_paths.len(),
                out.display()
            );
        }
        Command::Resolve {
            paths,
            question,
            context,
            out,
        } => {
            let r: Retrieval = serde_json::from_str(&read(&paths)?).map_err(|e| io_err(&paths, e))?;
            let raw = context.as_deref().map(read).transpose()?;
            let outcome = resolve(&question, &r.super_paths, raw.as_deref(), gateway, &cfg.resolution())?;
            if let Some(out) = out {
                write(&out, &to_json(&outcome))?;
            }
            println!("{}", outcome.response);
        }
        Command::Answer { context, question, out } => {
            let text = read(&context)?;
            let trace = answer_query(&question, &text, &cfg, gateway, clock.as_ref())?;
            if cfg.trace {
                let dir = out.unwrap_or_else(|| PathBuf::from("."));
                std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
                let path = dir.join("traces.jsonl");
                let mut f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .map_err(|e| io_err(&path, e))?;
                trace
                    .append_jsonl(&mut f)
                    .and_then(|_| f.flush())
                    .map_err(|e| io_err(&path, e))?;
            }
            println!("{}", trace.response);
        }
        Command::Eval {
            dataset,
            out,
            skip_errors,
        } => {
            let records = load_dataset(&dataset).map_err(|e| Failure::Dataset(e.to_string()))?;
            let result = run_eval(&records, &cfg, gateway, clock.as_ref(), skip_errors)?;
            write_results(&result, &out, cfg.trace)?;
            let s = &result.summary;
            print!(
                "mode {}: accuracy {:.4} over {} records ({} skipped)",
                s.mode,
                s.accuracy,
                s.evaluated,
                s.skipped.len()
            );
            if let Some(cpr) = s.mean_cpr {
                print!(", mean CPR {cpr:.4}");
            }
            println!(" -> {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_max_level(if cli.common.verbose {
            tracing::Level::DEBUG
        } else {
            tracing::Level::WARN
        })
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
