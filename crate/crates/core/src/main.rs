use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use aql_core::analysis::Granularity;
use aql_core::archive::cdx::DEFAULT_ARCHIVE_BASE;
use aql_core::fetch::warc::DEFAULT_ROLL_SIZE;
use aql_core::fetch::DEFAULT_DOWNLOAD_CAP;
use aql_core::pipeline::{
    Analysis, ArchiveSource, CorpusOptions, DownloadOptions, FetchOptions, FuseOptions, Pipeline, StageError,
    StageReport,
};
use aql_core::providers::fusion::{DEFAULT_CUTOFF, DEFAULT_RRF_K};

/// Build a query log from web-archive captures of search engine result pages.
#[derive(Parser, Debug)]
#[command(name = "aql", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Provider registry (TOML).
    #[arg(long, global = true)]
    registry: Option<PathBuf>,
    /// Wayback/CDX base URL for live runs.
    #[arg(long, global = true, env = "AQL_ARCHIVE_BASE", conflicts_with = "replay_dir")]
    archive_base: Option<String>,
    /// Replay fixture directory used instead of the live archive.
    #[arg(long, global = true)]
    replay_dir: Option<PathBuf>,
    /// Parallel snapshot fetches.
    #[arg(long, global = true, env = "AQL_WORKERS", default_value_t = 4)]
    workers: usize,
    /// Requests per second per archive host.
    #[arg(long, global = true, default_value_t = 1.0)]
    rate: f64,
    /// Retries per request on transient failures.
    #[arg(long, global = true, default_value_t = 10)]
    max_retries: u32,
    /// Output root; each stage writes a subdirectory.
    #[arg(long, global = true, default_value = "aql-out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Provider catalog tasks.
    #[command(subcommand)]
    Providers(ProvidersCmd),
    /// Capture listing and filtering.
    #[command(subcommand)]
    Captures(CapturesCmd),
    /// Query extraction and deduplication.
    #[command(subcommand)]
    Queries(QueriesCmd),
    /// SERP download planning, download and parsing.
    #[command(subcommand)]
    Serps(SerpsCmd),
    /// Corpus assembly.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Measurements over the built corpus.
    Analyze {
        #[command(subcommand)]
        which: AnalyzeCmd,
    },
    /// SERP parser approval snapshots.
    #[command(subcommand)]
    Approval(ApprovalCmd),
}

#[derive(Subcommand, Debug)]
enum ProvidersCmd {
    /// Fuse popularity ranking snapshots with reciprocal rank fusion.
    Fuse {
        /// `rank,domain` CSV files.
        #[arg(long = "snapshot", required = true)]
        snapshots: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CUTOFF)]
        cutoff: usize,
        #[arg(long, default_value_t = DEFAULT_RRF_K)]
        k: f64,
        /// Keep only the first N fused domains.
        #[arg(long)]
        top: Option<usize>,
    },
    /// Check the registry and report provider counts.
    Validate,
}

#[derive(Subcommand, Debug)]
enum CapturesCmd {
    /// List captures under every provider URL prefix.
    Fetch {
        /// Only these providers (repeatable).
        #[arg(long = "provider")]
        providers: Vec<String>,
    },
    /// Keep captures with status 200 and an HTML MIME type.
    Filter,
}

#[derive(Subcommand, Debug)]
enum QueriesCmd {
    /// Parse queries, pages and offsets from capture URLs.
    Extract,
    /// Group by query and select one representative per group.
    Dedup {
        /// Rows held in memory before spilling a sorted chunk.
        #[arg(long, default_value_t = aql_core::dedup::DEFAULT_CHUNK_SIZE)]
        chunk_size: usize,
    },
}

#[derive(Subcommand, Debug)]
enum SerpsCmd {
    /// Apply per-provider download caps.
    Plan {
        /// Cap for providers missing from the registry.
        #[arg(long, default_value_t = DEFAULT_DOWNLOAD_CAP)]
        default_cap: u64,
    },
    /// Fetch planned SERPs into WARC files.
    Download {
        /// Store request records next to responses.
        #[arg(long)]
        with_requests: bool,
        /// Start a new WARC file past this many bytes.
        #[arg(long, default_value_t = DEFAULT_ROLL_SIZE)]
        roll_size: u64,
    },
    /// Parse downloaded SERPs with the providers' parser chains.
    Parse,
}

#[derive(Subcommand, Debug)]
enum CorpusCmd {
    /// Assemble and write the query and result corpus.
    Build {
        /// Look up the nearest archived snapshot of each result document.
        #[arg(long)]
        nearest_snapshots: bool,
        /// Directory of `<lang>.txt` stopword lists replacing the bundled ones.
        #[arg(long)]
        stopwords: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GranularityArg {
    Month,
    Quarter,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::Month => Granularity::Month,
            GranularityArg::Quarter => Granularity::Quarter,
        }
    }
}

#[derive(Subcommand, Debug)]
enum AnalyzeCmd {
    /// Query length histograms for the largest providers.
    Lengths {
        #[arg(long, default_value_t = 5)]
        top_n: usize,
    },
    /// Per-period counts of URLs, queries, SERPs and results.
    Coverage {
        #[arg(long, value_enum, default_value = "quarter")]
        granularity: GranularityArg,
    },
    /// Most frequent result domains and the self-reference share.
    Domains {
        /// Rank cutoff.
        #[arg(long, default_value_t = 10)]
        k: u64,
        /// Named domains in the output.
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
    /// Monthly counts of queries containing any of the terms.
    Timeline {
        #[arg(long = "term", required = true)]
        terms: Vec<String>,
        #[arg(long, value_enum, default_value = "month")]
        granularity: GranularityArg,
    },
    /// Share of an external query list found in the corpus.
    Overlap {
        /// One query per line.
        #[arg(long)]
        external: PathBuf,
    },
    /// Share of queries containing listed terms.
    Obscenity {
        /// Directory of `<lang>.txt` term lists.
        #[arg(long)]
        wordlists: PathBuf,
    },
    /// Extrapolate SERP and result totals from planned downloads.
    Estimate {
        #[arg(long)]
        availability: f64,
        #[arg(long)]
        parse_rate: f64,
        #[arg(long)]
        results_per_serp: f64,
        /// Planned downloads; read from the plan stage when omitted.
        #[arg(long)]
        planned: Option<u64>,
    },
}

#[derive(Subcommand, Debug)]
enum ApprovalCmd {
    /// Write snapshots for every fixture.
    Record {
        #[arg(long)]
        fixtures: PathBuf,
    },
    /// Compare fixtures against their approved snapshots.
    Verify {
        #[arg(long)]
        fixtures: PathBuf,
    },
}

fn pipeline(global: &Global) -> Pipeline {
    let mut p = Pipeline::new(&global.out);
    p.registry_path = global.registry.clone();
    p.archive = match (&global.replay_dir, &global.archive_base) {
        (Some(dir), _) => ArchiveSource::Replay(dir.clone()),
        (None, Some(base)) => ArchiveSource::Live(base.clone()),
        (None, None) => ArchiveSource::Live(DEFAULT_ARCHIVE_BASE.to_string()),
    };
    p.workers = global.workers.max(1);
    p.policy.per_host_rate = global.rate;
    p.policy.max_retries = global.max_retries;
    p
}

fn print_report(report: &StageReport) {
    let counts = serde_json::to_string(&report.counts).unwrap_or_default();
    let state = if report.skipped { "up to date" } else { "done" };
    println!("{}: {state} {counts}", report.stage);
}

fn run(cli: Cli) -> Result<(), StageError> {
    let p = pipeline(&cli.global);
    let report = match cli.command {
        Command::Providers(ProvidersCmd::Fuse { snapshots, cutoff, k, top }) => {
            p.providers_fuse(&FuseOptions { snapshots, cutoff, k, top })?
        }
        Command::Providers(ProvidersCmd::Validate) => p.providers_validate()?,
        Command::Captures(CapturesCmd::Fetch { providers }) => p.captures_fetch(&FetchOptions { providers })?,
        Command::Captures(CapturesCmd::Filter) => p.captures_filter()?,
        Command::Queries(QueriesCmd::Extract) => p.queries_extract()?,
        Command::Queries(QueriesCmd::Dedup { chunk_size }) => p.queries_dedup(chunk_size)?,
        Command::Serps(SerpsCmd::Plan { default_cap }) => p.serps_plan(default_cap)?,
        Command::Serps(SerpsCmd::Download { with_requests, roll_size }) => {
            p.serps_download(&DownloadOptions { with_requests, roll_size })?
        }
        Command::Serps(SerpsCmd::Parse) => p.serps_parse()?,
        Command::Corpus(CorpusCmd::Build { nearest_snapshots, stopwords }) => {
            p.corpus_build(&CorpusOptions { nearest_snapshots, stopwords })?
        }
        Command::Analyze { which } => {
            let analysis = match which {
                AnalyzeCmd::Lengths { top_n } => Analysis::Lengths { top_n },
                AnalyzeCmd::Coverage { granularity } => Analysis::Coverage { granularity: granularity.into() },
                AnalyzeCmd::Domains { k, n } => Analysis::Domains { k, n },
                AnalyzeCmd::Timeline { terms, granularity } => {
                    Analysis::Timeline { terms, granularity: granularity.into() }
                }
                AnalyzeCmd::Overlap { external } => Analysis::Overlap { external },
                AnalyzeCmd::Obscenity { wordlists } => Analysis::Obscenity { wordlists },
                AnalyzeCmd::Estimate { availability, parse_rate, results_per_serp, planned } => {
                    Analysis::Estimate { availability, parse_rate, results_per_serp, planned }
                }
            };
            p.analyze(&analysis)?
        }
        Command::Approval(cmd) => {
            let (dir, verify) = match cmd {
                ApprovalCmd::Record { fixtures } => (fixtures, false),
                ApprovalCmd::Verify { fixtures } => (fixtures, true),
            };
            let outcome = p.approval(&dir, verify)?;
            for (id, diff) in &outcome.cases {
                match diff {
                    None if verify => println!("PASS {id}"),
                    None => println!("RECORDED {id}"),
                    Some(d) => println!("DIFF {id}: {d}"),
                }
            }
            if !outcome.all_passed() {
                return Err(StageError::Failed("approval snapshots differ".into()));
            }
            return Ok(());
        }
    };
    print_report(&report);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .json()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("AQL_LOG").unwrap_or_else(|_| "info".into()))
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!(error = %e, "command failed");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
