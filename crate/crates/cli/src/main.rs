use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use feds_core::eval::{Averaging, DEFAULT_SEED};
use feds_core::SimilarityMeasure;

mod commands;

use commands::Failure;

pub const EXIT_IO: u8 = 2;
pub const EXIT_PROVIDER: u8 = 3;
pub const EXIT_VALIDATION: u8 = 4;
pub const EXIT_INTERNAL: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "feds", version, about = "Build, query and evaluate nearest-centroid embedding stores")]
struct Cli {
    /// Output format: line-delimited JSON or aligned text.
    #[arg(long, global = true, env = "FED_FORMAT", value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,

    /// Worker threads for embedding and classification (default: all cores).
    #[arg(long, global = true, env = "FED_PARALLELISM")]
    parallelism: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeasureArg {
    Cosine,
    L2,
}

impl From<MeasureArg> for SimilarityMeasure {
    fn from(m: MeasureArg) -> Self {
        match m {
            MeasureArg::Cosine => SimilarityMeasure::Cosine,
            MeasureArg::L2 => SimilarityMeasure::L2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    Mean,
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AveragingArg {
    Macro,
    Micro,
}

impl From<AveragingArg> for Averaging {
    fn from(a: AveragingArg) -> Self {
        match a {
            AveragingArg::Macro => Averaging::Macro,
            AveragingArg::Micro => Averaging::Micro,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ProviderArgs {
    /// Retries for an unavailable HTTP provider.
    #[arg(long, env = "FED_RETRIES", default_value_t = 1)]
    pub retries: u32,

    /// Per-request timeout for the HTTP provider, in seconds.
    #[arg(long, env = "FED_TIMEOUT_SECS", default_value_t = 30)]
    pub timeout_secs: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Embed a labeled manifest and write a store with class centroids.
    Build {
        #[arg(long, env = "FED_MANIFEST")]
        manifest: PathBuf,
        #[arg(long, env = "FED_STORE")]
        store: PathBuf,
        #[arg(long, env = "FED_AGGREGATION", value_enum, default_value_t = AggregationArg::Mean)]
        aggregation: AggregationArg,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Classify documents against a store's class centroids.
    Classify {
        #[arg(long, env = "FED_STORE")]
        store: PathBuf,
        /// Manifest of documents to classify (labels optional).
        #[arg(long, group = "input")]
        manifest: Option<PathBuf>,
        /// A single pre-computed embedding, comma separated.
        #[arg(long, group = "input", allow_hyphen_values = true)]
        vector: Option<String>,
        /// A single rendered page file.
        #[arg(long, group = "input")]
        page: Option<PathBuf>,
        /// Textual prompt sent with --page.
        #[arg(long, requires = "page")]
        text_hint: Option<String>,
        /// Embedding sidecar for --page; the mock embedder is used otherwise.
        #[arg(long, env = "FED_PROVIDER_URL")]
        provider_url: Option<String>,
        #[arg(long, env = "FED_MEASURE", value_enum, default_value_t = MeasureArg::Cosine)]
        measure: MeasureArg,
        #[arg(long, env = "FED_AGGREGATION", value_enum, default_value_t = AggregationArg::Mean)]
        aggregation: AggregationArg,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Split, train centroids, classify the test split and report metrics.
    Evaluate {
        #[arg(long, env = "FED_STORE")]
        store: PathBuf,
        #[arg(long, env = "FED_TRAIN_FRAC", default_value_t = 0.7)]
        train: f64,
        #[arg(long, env = "FED_VAL_FRAC", default_value_t = 0.1)]
        val: f64,
        #[arg(long, env = "FED_TEST_FRAC", default_value_t = 0.2)]
        test: f64,
        #[arg(long, env = "FED_SEED", default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, env = "FED_MEASURE", value_enum, default_value_t = MeasureArg::Cosine)]
        measure: MeasureArg,
        #[arg(long, env = "FED_AVERAGING", value_enum, default_value_t = AveragingArg::Macro)]
        averaging: AveragingArg,
    },
    /// Compare IVF-flat search against exact search over the store's samples.
    Bench {
        #[arg(long, env = "FED_STORE")]
        store: PathBuf,
        #[arg(long, env = "FED_NLIST", default_value_t = 16)]
        nlist: usize,
        /// Comma-separated nprobe values.
        #[arg(long, env = "FED_NPROBE", value_delimiter = ',', num_args = 0..)]
        nprobe: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Number of stored samples used as queries.
        #[arg(long, default_value_t = 100)]
        queries: usize,
        #[arg(long, env = "FED_SEED", default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, env = "FED_MEASURE", value_enum, default_value_t = MeasureArg::Cosine)]
        measure: MeasureArg,
        /// Also persist the trained IVF index to this FEDS file.
        #[arg(long)]
        index_out: Option<PathBuf>,
    },
    /// Dump a FEDS file's header, label table and per-class counts.
    Inspect {
        #[arg(long, env = "FED_STORE")]
        store: PathBuf,
    },
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let format = cli.format;
    match cli.command {
        Command::Build {
            manifest,
            store,
            aggregation,
            provider,
        } => commands::build(&manifest, &store, aggregation, &provider, format),
        Command::Classify {
            store,
            manifest,
            vector,
            page,
            text_hint,
            provider_url,
            measure,
            aggregation,
            provider,
        } => {
            let input = match (manifest, vector, page) {
                (Some(m), None, None) => commands::ClassifyInput::Manifest(m),
                (None, Some(v), None) => commands::ClassifyInput::Vector(v),
                (None, None, Some(p)) => commands::ClassifyInput::Page { path: p, text_hint, provider_url },
                _ => {
                    return Err(Failure::validation(
                        "classify needs exactly one of --manifest, --vector or --page",
                    ))
                }
            };
            commands::classify(&store, input, measure.into(), aggregation, &provider, format)
        }
        Command::Evaluate {
            store,
            train,
            val,
            test,
            seed,
            measure,
            averaging,
        } => commands::evaluate(&store, [train, val, test], seed, measure.into(), averaging.into(), format),
        Command::Bench {
            store,
            nlist,
            nprobe,
            k,
            queries,
            seed,
            measure,
            index_out,
        } => commands::bench(
            &store,
            commands::BenchParams {
                nlist,
                nprobe,
                k,
                queries,
                seed,
                measure: measure.into(),
                index_out,
            },
            format,
        ),
        Command::Inspect { store } => commands::inspect(&store, format),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_VALIDATION),
            };
        }
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.parallelism {
        if n == 0 {
            eprintln!("error: --parallelism must be at least 1");
            return ExitCode::from(EXIT_VALIDATION);
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_INTERNAL);
        }
    };

    let outcome = catch_unwind(AssertUnwindSafe(|| pool.install(|| run(cli))));
    match outcome {
        Ok(Ok(code)) => ExitCode::from(code),
        Ok(Err(failure)) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
