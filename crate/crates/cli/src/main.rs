mod glob;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use tracing::{info, warn};

use bioqa_client::BioqaClient;
use bioqa_core::corpus::{self, parse_dataset, plan_hyperparameters, write_records, Dataset, QARecord};
use bioqa_core::index::{index_records, load_index_file, save_index_file, ChunkPolicy};
use bioqa_core::metrics::{score_corpus, CorpusMetric, RougeVariant};
use bioqa_core::pairwise::{sample_pairs, Criterion, PairwiseStore, PairwiseSummary, Rating};
use bioqa_core::prompts::{profile_for, ProfileMode};
use bioqa_core::runner::{emit_report, run_eval, sweep_topk, MetricReport, ReportFormat, RunConfig};
use bioqa_server::{serve, AppState};

#[derive(Parser)]
#[command(name = "bioqa", version, about = "Biomedical QA evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset ingestion, fine-tuning export and planning.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Build and query the keyword retrieval index.
    #[command(subcommand)]
    Index(IndexCmd),
    /// Lexical metrics over plain-text files.
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Run one evaluation config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        remote: Remote,
    },
    /// Run one config once per top-k value.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        ks: Vec<usize>,
        #[command(flatten)]
        remote: Remote,
    },
    /// Render saved reports side by side.
    Report {
        /// Report files or glob patterns.
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<String>,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Blind side-by-side human review of two runs.
    #[command(subcommand)]
    Pairwise(PairwiseCmd),
    /// Run the HTTP service.
    Serve {
        #[command(flatten)]
        listen: Listen,
        /// Retrieval index to expose through the search endpoint.
        #[arg(long)]
        index: Option<PathBuf>,
        /// Existing review session to attach.
        #[arg(long)]
        pairwise_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Remote {
    /// Send the work to a running service instead of running locally.
    #[arg(long, value_name = "URL")]
    server: Option<String>,
}

#[derive(Args)]
struct Listen {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    format: Dataset,
    #[arg(long)]
    input: PathBuf,
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Validate a dataset file and print per-mode counts.
    Parse {
        #[command(flatten)]
        data: DatasetArgs,
        /// Write the normalized records here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write chat-format fine-tuning examples.
    ExportFt {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        out: PathBuf,
        /// Profile whose system message is used. Defaults to the records' mode.
        #[arg(long)]
        profile: Option<ProfileMode>,
    },
    /// Derive fine-tuning hyperparameters from a training-set size.
    Plan {
        #[arg(long)]
        n_train: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Seeded train/test split.
    Split {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
}

#[derive(Subcommand)]
enum IndexCmd {
    Build {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = ChunkPolicy::default().max_tokens)]
        max_tokens: usize,
        #[arg(long, default_value_t = ChunkPolicy::default().overlap)]
        overlap: usize,
    },
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
}

#[derive(Subcommand)]
enum MetricsCmd {
    /// Corpus score of candidate lines against reference lines.
    Score {
        #[arg(long)]
        metric: CorpusMetric,
        /// One candidate per line.
        #[arg(long)]
        cand: PathBuf,
        /// One reference per line, aligned with the candidates.
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, default_value = "recall")]
        variant: RougeVariant,
        #[command(flatten)]
        remote: Remote,
    },
}

#[derive(Subcommand)]
enum PairwiseCmd {
    /// Sample pairs from two reports and serve the review API. Without
    /// `--run1/--run2` an existing session in `--dir` is resumed.
    Serve {
        #[arg(long, requires = "run2")]
        run1: Option<PathBuf>,
        #[arg(long, requires = "run1")]
        run2: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "pairwise-session")]
        dir: PathBuf,
        #[command(flatten)]
        listen: Listen,
    },
    /// Per-criterion preference shares.
    Summary {
        #[arg(long, default_value = "pairwise-session")]
        dir: PathBuf,
        #[command(flatten)]
        remote: Remote,
    },
    /// Dump every rating as JSON lines.
    Export {
        #[arg(long, default_value = "pairwise-session")]
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        remote: Remote,
    },
}

fn read_records(data: &DatasetArgs) -> Result<Vec<QARecord>> {
    let file = File::open(&data.input).with_context(|| format!("opening {}", data.input.display()))?;
    parse_dataset(data.format, BufReader::new(file)).with_context(|| format!("parsing {}", data.input.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

/// Config text plus the absolute directory its relative paths resolve against.
fn config_for_remote(path: &Path) -> Result<(String, String)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let abs = std::fs::canonicalize(path)?;
    let base = abs.parent().unwrap_or(Path::new("/")).to_string_lossy().into_owned();
    Ok((text, base))
}

fn summary_table(summary: &PairwiseSummary) -> String {
    let mut out = format!("{} tasks, {} ratings\n", summary.n_tasks, summary.n_ratings);
    out.push_str(&format!("{:<16} {:>8} {:>8} {:>8}\n", "criterion", "model1", "model2", "tie"));
    for c in Criterion::ALL {
        if let Some(s) = summary.criteria.get(&c) {
            out.push_str(&format!("{:<16} {:>8.2} {:>8.2} {:>8.2}\n", c.as_str(), s.model1, s.model2, s.tie));
        }
    }
    out
}

fn export_lines(ratings: &[Rating]) -> Result<String> {
    let mut out = String::new();
    for r in ratings {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

async fn bind(listen: &Listen) -> Result<tokio::net::TcpListener> {
    let addr: SocketAddr = format!("{}:{}", listen.host, listen.port).parse().context("invalid listen address")?;
    tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))
}

async fn shutdown_signal() {
    if tokio::signal::ctrl_c().await.is_err() {
        std::future::pending::<()>().await;
    }
    info!("shutting down");
}

async fn run_corpus(cmd: CorpusCmd) -> Result<()> {
    match cmd {
        CorpusCmd::Parse { data, out } => {
            let records = read_records(&data)?;
            let mut counts = std::collections::BTreeMap::new();
            for r in &records {
                *counts.entry(r.mode.as_str()).or_insert(0usize) += 1;
            }
            println!("{} records", records.len());
            for (mode, n) in counts {
                println!("  {mode}: {n}");
            }
            if let Some(out) = out {
                write_records(&records, create(&out)?)?;
            }
        }
        CorpusCmd::ExportFt { data, out, profile } => {
            let records = read_records(&data)?;
            let first = records.first().context("dataset is empty")?;
            let profile = profile_for(profile.unwrap_or(ProfileMode::for_record(first.mode)));
            let n = corpus::export_finetune_file(&records, &profile, create(&out)?)?;
            println!("wrote {n} examples to {}", out.display());
        }
        CorpusCmd::Plan { n_train, seed } => {
            let plan = plan_hyperparameters(n_train, seed)?;
            for w in &plan.warnings {
                warn!("{w}");
            }
            println!("{}", serde_json::to_string_pretty(&plan)?);
        }
        CorpusCmd::Split { data, train_fraction, seed, train_out, test_out } => {
            let records = read_records(&data)?;
            let (train, test) = corpus::split(&records, seed, train_fraction)?;
            write_records(&train, create(&train_out)?)?;
            write_records(&test, create(&test_out)?)?;
            println!("train {} / test {}", train.len(), test.len());
        }
    }
    Ok(())
}

async fn run_index(cmd: IndexCmd) -> Result<()> {
    match cmd {
        IndexCmd::Build { data, out, max_tokens, overlap } => {
            let records = read_records(&data)?;
            let index = index_records(&records, ChunkPolicy { max_tokens, overlap })?;
            save_index_file(&index, &out)?;
            println!("indexed {} chunks from {} records into {}", index.doc_count(), records.len(), out.display());
        }
        IndexCmd::Search { index, query, k } => {
            let index = load_index_file(&index).with_context(|| format!("loading {}", index.display()))?;
            for hit in index.search(&query, k)? {
                let text = index.chunk(&hit.chunk_id).map(|c| c.text.as_str()).unwrap_or_default();
                println!("{}\t{:.4}\t{}\t{}", hit.rank, hit.score, hit.chunk_id, text);
            }
        }
    }
    Ok(())
}

async fn run_metrics(cmd: MetricsCmd) -> Result<()> {
    let MetricsCmd::Score { metric, cand, reference, variant, remote } = cmd;
    let candidates = read_lines(&cand)?;
    let references = read_lines(&reference)?;
    let (score, bleu) = match remote.server {
        Some(url) => {
            let resp = BioqaClient::new(url).score(metric, candidates, references, variant).await?;
            (resp.score, resp.bleu)
        }
        None => {
            let (s, b) = score_corpus(metric, &candidates, &references, variant)?;
            (s.0, b)
        }
    };
    println!("{} {score:.2}", metric.as_str());
    if let Some(b) = bleu {
        let p: Vec<String> = b.p.iter().map(|p| format!("{p:.4}")).collect();
        println!("p = [{}] bp = {:.4} c = {} r = {}", p.join(", "), b.bp, b.candidate_len, b.reference_len);
    }
    Ok(())
}

async fn run_pairwise(cmd: PairwiseCmd) -> Result<()> {
    match cmd {
        PairwiseCmd::Serve { run1, run2, n, seed, dir, listen } => {
            let store = match (run1, run2) {
                (Some(r1), Some(r2)) => {
                    let tasks = sample_pairs(&MetricReport::load(&r1)?, &MetricReport::load(&r2)?, n, seed)?;
                    PairwiseStore::open_or_create(&dir, tasks)?
                }
                _ => PairwiseStore::open(&dir).with_context(|| format!("no review session in {}", dir.display()))?,
            };
            let store = Arc::new(store);
            info!(tasks = store.tasks().len(), ratings = store.rating_count(), dir = %dir.display(), "review session ready");
            let state = AppState { pairwise: Some(Arc::clone(&store)), index: None };
            serve(bind(&listen).await?, state, shutdown_signal()).await?;
            store.snapshot()?;
        }
        PairwiseCmd::Summary { dir, remote } => {
            let summary = match remote.server {
                Some(url) => BioqaClient::new(url).summary().await?,
                None => PairwiseStore::open(&dir)?.tally()?,
            };
            print!("{}", summary_table(&summary));
        }
        PairwiseCmd::Export { dir, out, remote } => {
            let ratings = match remote.server {
                Some(url) => BioqaClient::new(url).export().await?,
                None => PairwiseStore::open(&dir)?.export(),
            };
            write_output(out.as_deref(), &export_lines(&ratings)?)?;
        }
    }
    Ok(())
}

async fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Corpus(cmd) => run_corpus(cmd).await,
        Command::Index(cmd) => run_index(cmd).await,
        Command::Metrics(cmd) => run_metrics(cmd).await,
        Command::Run { config, remote } => {
            let report = match remote.server {
                Some(url) => {
                    let (text, base) = config_for_remote(&config)?;
                    BioqaClient::new(url).run(&text, &base).await?
                }
                None => run_eval(&RunConfig::load(&config)?).await?,
            };
            if report.failures > 0 {
                warn!(failures = report.failures, "some records failed");
            }
            print!("{}", emit_report(std::slice::from_ref(&report), ReportFormat::TableText)?);
            Ok(())
        }
        Command::Sweep { config, ks, remote } => {
            let summary = match remote.server {
                Some(url) => {
                    let (text, base) = config_for_remote(&config)?;
                    BioqaClient::new(url).sweep(&text, &base, &ks).await?.summary
                }
                None => sweep_topk(&RunConfig::load(&config)?, &ks).await?.summary,
            };
            print!("{}", summary.to_delimited());
            Ok(())
        }
        Command::Report { inputs, format, out } => {
            let paths = glob::expand(&inputs)?;
            let reports = paths
                .iter()
                .map(|p| MetricReport::load(p).with_context(|| format!("loading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            write_output(out.as_deref(), &emit_report(&reports, format)?)
        }
        Command::Pairwise(cmd) => run_pairwise(cmd).await,
        Command::Serve { listen, index, pairwise_dir } => {
            let index = match index {
                Some(p) => Some(Arc::new(load_index_file(&p).with_context(|| format!("loading {}", p.display()))?)),
                None => None,
            };
            let pairwise = match pairwise_dir {
                Some(d) => Some(Arc::new(PairwiseStore::open(&d)?)),
                None => None,
            };
            let state = AppState { pairwise: pairwise.clone(), index };
            serve(bind(&listen).await?, state, shutdown_signal()).await?;
            if let Some(store) = pairwise {
                store.snapshot()?;
            }
            Ok(())
        }
    }
}

#[tokio::main]
async fn main() -> std::process::ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli).await {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn sweep_ks_parse_as_a_list() {
        let cli = Cli::try_parse_from(["bioqa", "sweep", "--config", "c.toml", "--ks", "1,3,5"]).unwrap();
        match cli.command {
            Command::Sweep { ks, .. } => assert_eq!(ks, [1, 3, 5]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn run_pair_must_come_together() {
        assert!(Cli::try_parse_from(["bioqa", "pairwise", "serve", "--run1", "a.json"]).is_err());
        assert!(Cli::try_parse_from(["bioqa", "pairwise", "serve", "--dir", "s"]).is_ok());
    }
}
