//! `emoctx`: drives generation, scoring, statistics and the annotation service.
//!
//! Every invocation resolves its settings (defaults, `--config`, flags), writes
//! its outputs under `--out` and finishes with `<out>/manifest.json`.

mod commands;
pub mod manifest;
mod plots;
pub mod settings;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use emoctx_core::Method;

use crate::manifest::Run;
use crate::settings::{BackendChoice, ConfigFile, Overrides, ScorerChoice, Settings};

#[derive(Debug, Parser)]
#[command(name = "emoctx", version, about = "Emotion-conditioned backstory generation and evaluation")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Global seed; sub-seeds are derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML config file. Flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Chat backend: synthetic, fixture:<path> or http.
    #[arg(long, global = true)]
    pub backend: Option<BackendChoice>,
    /// Likelihood scorer: ngram, ngram:<model file> or remote.
    #[arg(long, global = true)]
    pub scorer: Option<ScorerChoice>,
    /// Output directory (default: out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Concluding events.
    #[command(subcommand)]
    Events(EventsCmd),
    /// Backstory chains.
    #[command(subcommand)]
    Chains(ChainsCmd),
    /// Shuffle-test coherence.
    #[command(subcommand)]
    Coherence(CoherenceCmd),
    /// Zero-shot emotion classification.
    #[command(subcommand)]
    Emotion(EmotionCmd),
    /// Corpus and annotation statistics.
    #[command(subcommand)]
    Stats(StatsCmd),
    /// Runs the annotation service.
    Serve(ServeArgs),
    /// Exports annotations from a service store directory.
    Export(ExportArgs),
}

#[derive(Debug, Subcommand)]
pub enum EventsCmd {
    /// Generates concluding events from catalog (type, object) pairs.
    Generate {
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Saves every exchanged message as a replayable transcript.
        #[arg(long)]
        record: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ChainsCmd {
    /// Generates one chain per (event, emotion, method) cell.
    Generate {
        #[arg(long, value_delimiter = ',', default_values_t = Method::ALL)]
        method: Vec<Method>,
        #[arg(long)]
        events: PathBuf,
        /// Keeps chains already in this file and only fills missing cells.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        record: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum CoherenceCmd {
    /// Scores chains by the rank of their order among shuffles.
    Score {
        #[arg(long)]
        chains: PathBuf,
        /// Orderings scored per chain, the original included.
        #[arg(long)]
        sample: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EmotionCmd {
    /// Classifies a text, or every full chain / event in a file.
    Classify {
        #[arg(long, conflicts_with_all = ["chains", "events"])]
        text: Option<String>,
        #[arg(long)]
        chains: Option<PathBuf>,
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Distributions over growing prefixes of each chain.
    Trajectory {
        #[arg(long)]
        chains: PathBuf,
    },
    /// Prompted-emotion probabilities for events, backstories and chains.
    Report {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        chains: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct AnnotationInput {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub raters: u32,
    /// Also count records from flagged annotators.
    #[arg(long)]
    pub keep_flagged: bool,
}

#[derive(Debug, Subcommand)]
pub enum StatsCmd {
    /// Mean pairwise Jaccard distance of backstories per method.
    Diversity {
        #[arg(long)]
        chains: PathBuf,
        /// Also reports the concluding events.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Share of backstories naming their prompted emotion.
    Leakage {
        #[arg(long)]
        chains: PathBuf,
        /// Lexicon file (`emotion<TAB>term, term`); defaults to the bundled one.
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Mean backstory sentence lengths per method.
    Lengths {
        #[arg(long)]
        chains: PathBuf,
    },
    /// Fleiss' kappa over all annotated instances.
    Kappa {
        #[command(flatten)]
        input: AnnotationInput,
    },
    /// Kappa over each event's k best-agreed chains.
    Curve {
        #[command(flatten)]
        input: AnnotationInput,
        #[arg(long)]
        chains: PathBuf,
    },
    /// Pearson and Spearman correlation.
    Correlate {
        /// CSV file with a header row.
        #[arg(long, requires_all = ["x", "y"], conflicts_with_all = ["annotations", "distributions"])]
        csv: Option<PathBuf>,
        #[arg(long)]
        x: Option<String>,
        #[arg(long)]
        y: Option<String>,
        /// Annotator label shares, paired with model probabilities.
        #[arg(long, requires = "distributions")]
        annotations: Option<PathBuf>,
        /// Output of `emotion classify`.
        #[arg(long)]
        distributions: Option<PathBuf>,
    },
    /// Prompted versus annotated emotion, with precision, recall and F1.
    Confusion {
        #[command(flatten)]
        input: AnnotationInput,
        #[arg(long)]
        chains: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long)]
    pub chains: Option<PathBuf>,
    #[arg(long)]
    pub bind: Option<String>,
    /// Directory for annotations and session state.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Built annotation UI bundle to serve at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long)]
    pub chains: Option<PathBuf>,
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let command: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            1
        }
    }
}

fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").replace('\n', " ")
}

fn run(cli: Cli, command: Vec<String>) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let settings = Settings::resolve(
        file,
        Overrides {
            seed: cli.seed,
            out: cli.out,
            backend: cli.backend,
            scorer: cli.scorer,
        },
    )?;
    let mut run = Run::new(settings, command);
    if let Some(p) = &cli.config {
        run.input(p);
    }
    let result = commands::dispatch(&mut run, cli.command);
    let error = result.as_ref().err().map(one_line);
    let written = run.finish(error);
    result?;
    written.map(|_| ())
}
