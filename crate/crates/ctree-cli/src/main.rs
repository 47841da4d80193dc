//! `ctree`: build tree representations of structural connectomes, verify them
//! against the exact homology oracle, and run the comparative statistics
//! pipeline (PCA, CCA, cross-validated prediction, Bayesian model averaging)
//! on real or synthetic cohorts. All artifacts are CSV or SVG; every output
//! gets a run manifest recording inputs, configuration, and timing.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;
mod synthcfg;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Computation(String),
}

impl CliError {
    fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Computation(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Computation(m) => m,
        }
    }
}

impl From<ctree::Error> for CliError {
    fn from(err: ctree::Error) -> Self {
        match err.kind() {
            ctree::ErrorKind::Validation => CliError::Validation(err.to_string()),
            ctree::ErrorKind::Computation => CliError::Computation(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Validation(err.to_string())
    }
}

pub type CliResult = Result<(), CliError>;

#[derive(Parser)]
#[command(
    name = "ctree",
    version,
    about = "Tree representations of brain structural connectomes",
    disable_help_subcommand = true
)]
struct Cli {
    /// Cap worker parallelism (env: CTREE_THREADS). Any value yields
    /// identical outputs.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct CvArgs {
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated regressors: linear, ridge, gp (baseline always runs).
    #[arg(long, default_value = "linear,ridge")]
    pub regressors: String,
    /// Ridge penalty for the `ridge` regressor.
    #[arg(long, default_value_t = 1.0)]
    pub ridge: f64,
    #[arg(long, default_value_t = 16)]
    pub gp_starts: usize,
    #[arg(long, default_value_t = 200)]
    pub gp_evals: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort from a config CSV.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Hierarchy CSV; the bundled Desikan-Killiany file when omitted.
        #[arg(long)]
        hierarchy: Option<PathBuf>,
    },
    /// Build the tree representation of one adjacency matrix.
    Build {
        #[arg(short = 'H', long)]
        hierarchy: Option<PathBuf>,
        #[arg(short = 'A', long)]
        matrix: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Check corank(node) == weight(node) for every internal node.
    VerifyTheorem {
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        #[arg(long)]
        matrix: PathBuf,
        /// Report CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Oracle cell budget per node.
        #[arg(long, default_value_t = 100_000)]
        budget: u64,
    },
    /// Fit PCA on a feature CSV and write component scores.
    Pca {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 23)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write the principal axes.
        #[arg(long)]
        axes: Option<PathBuf>,
    },
    /// Canonical correlation analysis of features against traits.
    Cca {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        traits: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        ridge: f64,
        /// Drop traits whose missing fraction exceeds this before imputation.
        #[arg(long, default_value_t = 0.10)]
        drop_sparse: f64,
    },
    /// Cross-validated prediction comparing two representations.
    Cv {
        #[arg(long)]
        features_tree: PathBuf,
        #[arg(long)]
        features_pca: PathBuf,
        #[arg(long)]
        traits: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cv: CvArgs,
    },
    /// Bayesian model averaging for one trait over a feature CSV.
    Bma {
        #[arg(long)]
        features: PathBuf,
        #[arg(long = "trait")]
        trait_name: String,
        #[arg(long)]
        traits: PathBuf,
        #[arg(long, default_value_t = 0.75)]
        threshold: f64,
        /// Zellner g; the retained sample size when omitted.
        #[arg(long)]
        g: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render SVG figures.
    Plot {
        #[command(subcommand)]
        kind: PlotKind,
    },
    /// Synthetic cohort end to end: synth, trees, PCA, CCA, CV, BMA, plots.
    Pipeline {
        #[arg(long)]
        synth_config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        /// Principal components kept for the matrix representation; defaults
        /// to the tree dimension.
        #[arg(long)]
        k: Option<usize>,
        /// Also fit the GP regressor (slow).
        #[arg(long)]
        gp: bool,
        #[command(flatten)]
        cv: CvArgs,
    },
}

#[derive(Subcommand)]
enum PlotKind {
    /// Circle chord plot of one tree.
    Chord {
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hierarchy diagram, optionally annotated against a comparison tree.
    Tree {
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trait scatter from a CCA model CSV.
    Cca {
        #[arg(long = "in")]
        input: PathBuf,
        /// CSV `trait,desirability` for color coding.
        #[arg(long)]
        desirability: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn thread_cap(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| {
        std::env::var("CTREE_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
}

fn run(cli: Cli) -> CliResult {
    if let Some(threads) = thread_cap(cli.threads) {
        if threads == 0 {
            return Err(CliError::validation("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::validation(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Synth {
            config,
            out_dir,
            hierarchy,
        } => commands::synth(&config, &out_dir, hierarchy.as_deref()),
        Command::Build {
            hierarchy,
            matrix,
            out,
        } => commands::build(hierarchy.as_deref(), &matrix, &out),
        Command::VerifyTheorem {
            hierarchy,
            matrix,
            out,
            budget,
        } => commands::verify_theorem(hierarchy.as_deref(), &matrix, out.as_deref(), budget),
        Command::Pca {
            features,
            k,
            out,
            axes,
        } => commands::pca(&features, k, &out, axes.as_deref()),
        Command::Cca {
            features,
            traits,
            out,
            ridge,
            drop_sparse,
        } => commands::cca(&features, &traits, &out, ridge, drop_sparse),
        Command::Cv {
            features_tree,
            features_pca,
            traits,
            out,
            cv,
        } => commands::cv(&features_tree, &features_pca, &traits, &out, &cv),
        Command::Bma {
            features,
            trait_name,
            traits,
            threshold,
            g,
            out,
        } => commands::bma(&features, &traits, &trait_name, threshold, g, &out),
        Command::Plot { kind } => match kind {
            PlotKind::Chord {
                hierarchy,
                input,
                out,
            } => commands::plot_chord(hierarchy.as_deref(), &input, &out),
            PlotKind::Tree {
                hierarchy,
                input,
                compare,
                out,
            } => commands::plot_tree(hierarchy.as_deref(), &input, compare.as_deref(), &out),
            PlotKind::Cca {
                input,
                desirability,
                out,
            } => commands::plot_cca(&input, desirability.as_deref(), &out),
        },
        Command::Pipeline {
            synth_config,
            out_dir,
            hierarchy,
            k,
            gp,
            cv,
        } => commands::pipeline(&synth_config, &out_dir, hierarchy.as_deref(), k, gp, &cv),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{err}");
                    return ExitCode::SUCCESS;
                }
                _ => 1,
            };
            eprint!("{err}");
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
