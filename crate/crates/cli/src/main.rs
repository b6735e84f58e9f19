use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use speckle_cli::{
    parse_run_config, run_analyze, run_classify, run_simulate, run_train, run_validate_ensemble,
    CliError,
};

/// Simulate, analyze and classify quantum-light speckle measurements.
#[derive(Parser)]
#[command(name = "speckle", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured ensemble and write records, features, fits and
    /// figures into the configured output directory.
    Simulate { config: PathBuf },
    /// Recompute features and figures from an existing records.csv.
    Analyze {
        records: PathBuf,
        /// Where to write the report files (default: next to the records).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Label for the appended feature-scatter row.
        #[arg(long, default_value = "unlabeled")]
        label: String,
        /// Histogram bin count.
        #[arg(long, default_value_t = 40)]
        bins: usize,
        /// Classify against this trained model.
        #[arg(short, long)]
        model: Option<PathBuf>,
    },
    /// Draw the config's transmission-matrix stream and report its health.
    ValidateEnsemble { config: PathBuf },
    /// Fit a classifier from a directory of labeled ensembles
    /// (`<ClassName>__*.csv`) and write the model file.
    Train {
        labeled_dir: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Classify one records.csv against a trained model.
    Classify {
        records: PathBuf,
        #[arg(short, long)]
        model: PathBuf,
    },
}

fn apply_worker_env() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("SPECKLE_WORKERS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .map_err(|_| CliError::Invalid(format!("SPECKLE_WORKERS must be a positive integer, got `{raw}`")))?;
    speckle_core::set_worker_threads(n).map_err(|e| CliError::Invalid(e.to_string()))
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Simulate { config } => {
            let cfg = parse_run_config(&config)?;
            let arts = run_simulate(&cfg)?;
            for w in &arts.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {} ({} rows)", arts.records.display(), arts.n_records);
            println!("wrote {}", arts.features.display());
            println!("wrote {}", arts.gof.display());
            for svg in &arts.svgs {
                println!("wrote {}", svg.display());
            }
            Ok(())
        }
        Command::Analyze { records, out_dir, label, bins, model } => {
            let out = out_dir.unwrap_or_else(|| {
                records.parent().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
            });
            let arts = run_analyze(&records, &out, &label, bins, model.as_deref())?;
            println!("wrote {}", arts.features.display());
            for svg in &arts.svgs {
                println!("wrote {}", svg.display());
            }
            println!("appended row `{label}` to {}", arts.scatter.display());
            if let Some((class, score)) = arts.classification {
                println!("classification: {class} score={score:.4}");
            }
            Ok(())
        }
        Command::ValidateEnsemble { config } => {
            let cfg = parse_run_config(&config)?;
            let (report, warnings) = run_validate_ensemble(&cfg)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            println!("matrices = {}", report.n_matrices);
            println!("amplitude_ks = {:.6}", report.amplitude_ks);
            println!("phase_ks = {:.6}", report.phase_ks);
            println!("entry_correlation_max = {:.6}", report.entry_correlation_max);
            println!("degenerate = {}", report.degenerate);
            if report.degenerate {
                return Err(CliError::Runtime("ensemble is degenerate".into()));
            }
            Ok(())
        }
        Command::Train { labeled_dir, output } => {
            let model = run_train(&labeled_dir, &output)?;
            println!(
                "trained {} classes -> {}",
                model.classes.len(),
                output.display()
            );
            Ok(())
        }
        Command::Classify { records, model } => {
            let (class, score) = run_classify(&records, &model)?;
            println!("classification: {class} score={score:.4}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = apply_worker_env() {
        eprintln!("{e}");
        return ExitCode::from(e.exit_code());
    }
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
