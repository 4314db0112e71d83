use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use adaptive_threshold::harness::{
    export_rows, export_summary, generate_synthetic, roc_export, run_incremental, simulate_stream,
    summarize, ExportFormat, IdentityOrder, IncrementalConfig, StreamConfig, SynthSpec,
};
use adaptive_threshold::{
    adapt, build_distributions, AdaptConfig, AdaptOutcome, BoundMode, EmbeddingSet, Gallery,
    Objective, TprDenominator,
};

#[derive(Parser)]
#[command(
    name = "adathresh",
    version,
    about = "Adaptive match thresholds for embedding galleries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the adaptive threshold for a gallery and print it as JSON.
    Adapt {
        #[arg(long)]
        gallery: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Grow a gallery one identity at a time and compare thresholds.
    Simulate {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.7")]
        fixed: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Order::Input)]
        order: Order,
        /// Shuffle seed; required with `--order shuffle`.
        #[arg(long)]
        seed: Option<u64>,
        /// Rows file (.csv or .json).
        #[arg(long)]
        out: PathBuf,
        /// Summary file (.csv or .json).
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long)]
        per_step_roc: bool,
        #[arg(long, default_value_t = 1001)]
        roc_points: usize,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Write a synthetic clustered embedding file.
    Synth {
        #[arg(long)]
        identities: usize,
        #[arg(long)]
        per_identity: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        within: f64,
        #[arg(long)]
        between: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the ROC curve of a gallery's score distributions.
    Roc {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value_t = 1001)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Match queries one by one against a live gallery.
    SimulateStream {
        /// Initial gallery.
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// Register unmatched queries as new identities.
        #[arg(long)]
        auto_register: bool,
        /// Add matched queries to the matched identity.
        #[arg(long)]
        append_matched: bool,
        #[arg(long, default_value_t = 0.5)]
        initial_threshold: f64,
        /// Event log (CSV).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    Input,
    Shuffle,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    F1,
    TprFprGap,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundArg {
    Unbounded,
    Means,
}

#[derive(Clone, Copy, ValueEnum)]
enum DenominatorArg {
    Standard,
    Paper,
}

/// Adaptation settings: an optional JSON file, overridden by individual flags.
#[derive(Args)]
struct Tuning {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    #[arg(long, value_enum)]
    bound: Option<BoundArg>,
    #[arg(long, value_enum)]
    tpr_denominator: Option<DenominatorArg>,
}

impl Tuning {
    fn resolve(&self) -> Result<AdaptConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
                serde_json::from_reader(f).with_context(|| format!("parsing {}", p.display()))?
            }
            None => AdaptConfig::default(),
        };
        if let Some(t) = self.tau {
            cfg.tau = t;
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        if let Some(o) = self.objective {
            cfg.objective = match o {
                ObjectiveArg::F1 => Objective::F1,
                ObjectiveArg::TprFprGap => Objective::TprFprGap,
            };
        }
        if let Some(b) = self.bound {
            cfg.bound_mode = match b {
                BoundArg::Unbounded => BoundMode::Unbounded01,
                BoundArg::Means => BoundMode::MeansBounded,
            };
        }
        if let Some(d) = self.tpr_denominator {
            cfg.tpr_denominator = match d {
                DenominatorArg::Standard => TprDenominator::Standard,
                DenominatorArg::Paper => TprDenominator::Paper,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

const EXIT_INPUT: u8 = 2;
const EXIT_SKIPPED: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Adapt { gallery, tuning } => {
            let cfg = tuning.resolve()?;
            let mut g = Gallery::load(&gallery)
                .with_context(|| format!("loading {}", gallery.display()))?;
            match adapt(&mut g, None, &cfg) {
                AdaptOutcome::Skipped { reason, .. } => {
                    eprintln!("adaptation skipped: {reason}");
                    Ok(ExitCode::from(EXIT_SKIPPED))
                }
                outcome => {
                    let state = outcome.into_state().expect("adapted");
                    println!("{}", serde_json::to_string_pretty(&state)?);
                    Ok(ExitCode::SUCCESS)
                }
            }
        }
        Command::Simulate {
            embeddings,
            fixed,
            order,
            seed,
            out,
            summary,
            per_step_roc,
            roc_points,
            tuning,
        } => {
            let order = match (order, seed) {
                (Order::Input, _) => IdentityOrder::Input,
                (Order::Shuffle, Some(seed)) => IdentityOrder::Shuffle { seed },
                (Order::Shuffle, None) => anyhow::bail!("--order shuffle needs --seed"),
            };
            let config = IncrementalConfig {
                adapt: tuning.resolve()?,
                fixed,
                order,
                per_step_roc,
                roc_points,
            };
            let set = load_set(&embeddings)?;
            let run = run_incremental(&set, &config)?;
            export_rows(&run.rows, &out, ExportFormat::from_path(&out))?;
            if let Some(path) = summary {
                export_summary(
                    &summarize(&run.rows)?,
                    &path,
                    ExportFormat::from_path(&path),
                )?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth {
            identities,
            per_identity,
            dim,
            within,
            between,
            seed,
            out,
        } => {
            let set = generate_synthetic(&SynthSpec {
                num_identities: identities,
                embeddings_per_identity: per_identity,
                dimension: dim,
                within_spread: within,
                between_spread: between,
                rng_seed: seed,
            })?;
            set.save(&out)
                .with_context(|| format!("writing {}", out.display()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Roc {
            embeddings,
            points,
            out,
            tuning,
        } => {
            let cfg = tuning.resolve()?;
            let gallery = Gallery::from_set(&load_set(&embeddings)?)?;
            let dist = build_distributions(&gallery)?;
            let curve = roc_export(&dist, &cfg, points, &out)?;
            eprintln!("auc {}", curve.auc);
            Ok(ExitCode::SUCCESS)
        }
        Command::SimulateStream {
            gallery,
            queries,
            auto_register,
            append_matched,
            initial_threshold,
            out,
            tuning,
        } => {
            let config = StreamConfig {
                auto_register,
                append_matched,
                initial_threshold,
                adapt: tuning.resolve()?,
            };
            let (events, _) = simulate_stream(&load_set(&gallery)?, &load_set(&queries)?, &config)?;
            let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&out)?));
            for e in &events {
                w.serialize(e)?;
            }
            w.flush()?;
            let correct = events.iter().filter(|e| e.correct).count();
            eprintln!("{correct}/{} decisions correct", events.len());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_set(path: &Path) -> Result<EmbeddingSet> {
    EmbeddingSet::load(path).with_context(|| format!("loading {}", path.display()))
}
