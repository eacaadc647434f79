//! Command-line benchmark harness around `vpr-core`.
//!
//! Exit codes: 0 on success, 1 for validation errors (bad arguments,
//! configs, manifests, incompatible artifacts), 2 for runtime failures.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::commands::GtMode;
use crate::config::RunConfig;
use crate::error::{CliError, Result, EXIT_VALIDATION};
use crate::manifest::{Bundle, DatasetManifest};

#[derive(Debug, Parser)]
#[command(name = "vpr", version, about = "Visual place recognition benchmark harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file or directory.
    #[arg(long)]
    pub out: PathBuf,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        RunConfig::resolve(self.config.as_deref(), self.seed)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a visual dictionary on a training manifest.
    TrainDict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Build a map directory from a reference manifest.
    BuildMap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        dictionary: PathBuf,
    },
    /// Localize every image of a query manifest against a map.
    Localize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        map: PathBuf,
        /// Localize concurrently (throughput mode).
        #[arg(long)]
        parallel: bool,
    },
    /// Precision-recall evaluation of one or more results files.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Results CSV, optionally as LABEL=PATH. Repeat to overlay curves.
        #[arg(long = "results", required = true)]
        results: Vec<String>,
        #[arg(long)]
        ground_truth: PathBuf,
    },
    /// Mean descriptor correlation between two datasets.
    Correlate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Full train, map, localize, evaluate run on a bundle.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Generate a synthetic bundle.
    GenSynthetic {
        #[command(flatten)]
        common: Common,
        /// Overrides `synthetic.places`.
        #[arg(long)]
        places: Option<usize>,
        /// Overrides `synthetic.training_frames`.
        #[arg(long)]
        training_frames: Option<usize>,
    },
    /// Generate ground truth for a query manifest.
    GenGt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Match by list position instead of identical ids.
        #[arg(long)]
        by_position: bool,
        /// With --by-position, also accept this many neighbouring places.
        #[arg(long, default_value_t = 0)]
        tolerance: usize,
    },
}

fn parse_results_arg(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((label, path)) if !label.is_empty() => (label.to_string(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(arg);
            let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            (label, p)
        }
    }
}

fn manifest(path: &Path) -> Result<DatasetManifest> {
    DatasetManifest::load(path)
}

/// Runs a parsed command, printing a short summary on success.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainDict { common, manifest: m } => {
            let cfg = common.config()?;
            let s = commands::cmd_train_dict(&cfg, &manifest(&m)?, &common.out)?;
            println!("words: {}", s.words);
            println!("descriptors: {}", s.descriptors);
            println!("final distortion: {}", s.final_distortion);
            println!("iterations: {} (converged: {})", s.iterations, s.converged);
            println!("fingerprint: {}", s.fingerprint);
        }
        Command::BuildMap {
            common,
            manifest: m,
            dictionary,
        } => {
            let cfg = common.config()?;
            let s = commands::cmd_build_map(&cfg, &manifest(&m)?, &dictionary, &common.out)?;
            println!("images: {} (indexed {})", s.images, s.indexed);
            if !s.degenerate.is_empty() {
                println!("degenerate: {}", s.degenerate.join(", "));
            }
            println!("vlad store sha256: {}", s.vlad_store_sha256);
        }
        Command::Localize {
            common,
            manifest: m,
            map,
            parallel,
        } => {
            let mut cfg = common.config()?;
            cfg.localize.parallel |= parallel;
            let s = commands::cmd_localize(&cfg, &manifest(&m)?, &map, &common.out)?;
            println!("queries: {} (degenerate {})", s.queries, s.degenerate);
            println!(
                "mean t_descriptor {:.6}s, t_search {:.6}s, t_total {:.6}s ({} mode)",
                s.timing.t_descriptor.mean, s.timing.t_search.mean, s.timing.t_total.mean, s.mode
            );
        }
        Command::Evaluate {
            common,
            results,
            ground_truth,
        } => {
            let results: Vec<(String, PathBuf)> = results.iter().map(|r| parse_results_arg(r)).collect();
            for c in commands::cmd_evaluate(&results, &ground_truth, &common.out)? {
                println!(
                    "{}: AUC {:.6}, rank-1 correct {}/{}",
                    c.label, c.auc, c.correct_at_rank1, c.queries
                );
            }
        }
        Command::Correlate { common, a, b } => {
            let cfg = common.config()?;
            let r = commands::cmd_correlate(&cfg, &manifest(&a)?, &manifest(&b)?, &common.out)?;
            println!(
                "correlation {:.6} over {} pairs ({} skipped, seed {})",
                r.value, r.pairs_used, r.pairs_skipped, r.seed
            );
        }
        Command::Bench { common, bundle } => {
            let cfg = common.config()?;
            let b = Bundle::load(&bundle)?;
            let report = commands::cmd_bench(&cfg, &b, &bundle, &common.out)?;
            for f in &report.families {
                for (a, t) in f.accuracy.iter().zip(&f.timing) {
                    println!(
                        "{} [{}] k={}: AUC {:.4}, mean t_total {:.6}s",
                        f.label, a.split, f.k, a.auc, t.mean_t_total
                    );
                }
            }
        }
        Command::GenSynthetic {
            common,
            places,
            training_frames,
        } => {
            let mut cfg = common.config()?;
            if let Some(p) = places {
                cfg.synthetic.places = p;
            }
            if let Some(t) = training_frames {
                cfg.synthetic.training_frames = t;
            }
            cfg.validate()?;
            let s = commands::cmd_gen_synthetic(&cfg, &common.out)?;
            println!(
                "training {}, reference {}, query splits {}",
                s.training,
                s.reference,
                s.query_splits.join(", ")
            );
            println!("bundle: {}", s.bundle.display());
        }
        Command::GenGt {
            common,
            manifest: m,
            reference,
            by_position,
            tolerance,
        } => {
            let mode = if by_position {
                GtMode::Position { tolerance }
            } else if tolerance > 0 {
                return Err(CliError::validation("--tolerance needs --by-position"));
            } else {
                GtMode::SameId
            };
            let n = commands::cmd_gen_gt(&manifest(&m)?, &manifest(&reference)?, mode, &common.out)?;
            println!("ground truth entries: {n}");
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
