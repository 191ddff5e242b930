use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use feet::embedding_io::{validate_manifest, RunManifest};
use feet::metrics::{bootstrap_ci, Averaging, BootstrapConfig, MetricEstimate, MetricKind, MetricSpec};
use feet::reporting::{build_tables, render_delta, render_feet, Format};
use feet::runner::{execute_run, expand_cells, load_results, manifest_hash, read_predictions, RunOptions};
use feet::{synthetic, Error, Finding};

#[derive(Parser)]
#[command(name = "feet", version, about = "Frozen / few-shot / fine-tuned embedding evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a manifest and every embedding file it references.
    Validate { manifest: PathBuf },
    /// Execute (or resume) a run.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "FEET_THREADS", default_value_t = 1)]
        parallelism: usize,
        #[arg(long)]
        resume: bool,
        /// Overrides the manifest's master_seed.
        #[arg(long, env = "FEET_SEED")]
        seed: Option<u64>,
        /// Stop after this many cells; continue later with --resume.
        #[arg(long, hide = true)]
        max_cells: Option<usize>,
    },
    /// Render the tables of a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
        format: FormatArg,
        /// Render delta tables instead of FEET tables.
        #[arg(long)]
        delta: bool,
        /// Fail if this manifest no longer matches the one the run used.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, env = "FEET_SEED")]
        seed: Option<u64>,
    },
    /// Score a predictions file (JSONL with id, label, scores).
    Metrics {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        metric: String,
        #[arg(long, default_value_t = 1000)]
        boot: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = AveragingArg::Macro)]
        averaging: AveragingArg,
        #[arg(long, default_value_t = 1)]
        pos_class: u32,
    },
    /// Write a synthetic fixture (embedding files plus manifest.toml).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Fixture::Bundled)]
        fixture: Fixture,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Markdown,
    Latex,
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Markdown => Format::Markdown,
            FormatArg::Latex => Format::Latex,
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AveragingArg {
    Macro,
    Micro,
    Binary,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fixture {
    Bundled,
    Degradation,
}

const EXIT_CELLS_FAILED: u8 = 1;
const EXIT_INVALID: u8 = 2;

fn print_findings(findings: &[Finding]) {
    for f in findings {
        eprintln!("{f}");
    }
}

fn load_manifest(path: &Path, seed: Option<u64>) -> Result<RunManifest, Error> {
    let mut m = RunManifest::load(path)?;
    if let Some(s) = seed {
        m.master_seed = s;
    }
    Ok(m)
}

fn validate(path: &Path) -> ExitCode {
    let manifest = match load_manifest(path, None) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID);
        }
    };
    let findings = validate_manifest(&manifest);
    print_findings(&findings);
    let errors = findings.iter().filter(|f| f.is_error()).count();
    if errors > 0 {
        eprintln!("{errors} error(s)");
        return ExitCode::from(EXIT_INVALID);
    }
    println!(
        "ok: {} model(s), {} task(s), up to {} cells",
        manifest.models.len(),
        manifest.tasks.len(),
        expand_cells(&manifest).len()
    );
    ExitCode::SUCCESS
}

fn run(manifest: &Path, out: &Path, opts: RunOptions, seed: Option<u64>) -> ExitCode {
    let manifest = match load_manifest(manifest, seed) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID);
        }
    };
    match execute_run(&manifest, out, &opts) {
        Ok(outcome) => {
            print_findings(&outcome.findings);
            for c in outcome.state.cells.iter().filter(|c| c.error.is_some()) {
                eprintln!("failed: {}: {}", c.key, c.error.as_deref().unwrap_or(""));
            }
            if outcome.finished() {
                println!(
                    "{}: {} cell(s) done, {} failed; results in {}",
                    outcome.state.run_id,
                    outcome.state.count(feet::runner::CellStatus::Done),
                    outcome.state.count(feet::runner::CellStatus::Failed),
                    out.display()
                );
            } else {
                println!(
                    "stopped after {} cell(s); continue with --resume",
                    outcome.executed
                );
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(Error::Validation(n)) => {
            print_findings(&validate_manifest(&manifest));
            eprintln!("error: manifest validation failed with {n} error(s); run not started");
            ExitCode::from(EXIT_INVALID)
        }
        Err(e @ (Error::RunDirNotEmpty(_) | Error::ManifestDrift { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CELLS_FAILED)
        }
    }
}

fn report(run: &Path, format: Format, delta: bool, manifest: Option<&Path>, seed: Option<u64>) -> Result<(), Error> {
    let doc = load_results(run)?;
    if let Some(path) = manifest {
        let current = manifest_hash(&load_manifest(path, seed)?)?;
        if current != doc.manifest_hash {
            return Err(Error::ManifestDrift {
                recorded: doc.manifest_hash,
                current,
            });
        }
    }
    let tables = build_tables(&doc.cells);
    print_findings(&tables.findings);
    let text = if delta {
        render_delta(&tables.delta, format)
    } else {
        render_feet(&tables.feet, format)
    };
    print!("{text}");
    Ok(())
}

fn metrics(
    path: &Path,
    metric: &str,
    cfg: BootstrapConfig,
    averaging: AveragingArg,
    pos_class: u32,
) -> Result<MetricEstimate, Error> {
    let kind: MetricKind = metric.parse()?;
    let preds = read_predictions(path)?;
    let averaging = match averaging {
        AveragingArg::Macro => Averaging::Macro,
        AveragingArg::Micro => Averaging::Micro,
        AveragingArg::Binary => Averaging::Binary(pos_class),
    };
    let spec = MetricSpec::new(kind, averaging, pos_class);
    match bootstrap_ci(&preds, &spec, &cfg) {
        Err(Error::AllResamplesUndefined) => Ok(MetricEstimate::point_only(
            kind,
            spec.evaluate(&preds)?,
            preds.len(),
            &cfg,
        )),
        other => other,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { manifest } => validate(&manifest),
        Command::Run {
            manifest,
            out,
            parallelism,
            resume,
            seed,
            max_cells,
        } => run(
            &manifest,
            &out,
            RunOptions {
                parallelism,
                resume,
                max_cells,
            },
            seed,
        ),
        Command::Report {
            run,
            format,
            delta,
            manifest,
            seed,
        } => match report(&run, format.into(), delta, manifest.as_deref(), seed) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_INVALID)
            }
        },
        Command::Metrics {
            predictions,
            metric,
            boot,
            seed,
            averaging,
            pos_class,
        } => {
            let cfg = BootstrapConfig {
                replicates: boot,
                seed,
            };
            match metrics(&predictions, &metric, cfg, averaging, pos_class) {
                Ok(est) => {
                    println!("{}", serde_json::to_string_pretty(&est).expect("estimate serializes"));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_INVALID)
                }
            }
        }
        Command::Synth { out, seed, fixture } => {
            let written = match fixture {
                Fixture::Bundled => synthetic::write_bundled(&out, seed),
                Fixture::Degradation => synthetic::write_degradation(&out, seed),
            };
            match written {
                Ok(path) => {
                    println!("{}", path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_INVALID)
                }
            }
        }
    }
}
