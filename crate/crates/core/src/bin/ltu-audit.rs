use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ltu_profiling::pipeline::{self, RunConfig};
use ltu_profiling::synth::{self, SynthConfig};
use ltu_profiling::{Error, Result};

/// Profiling-model fairness audits for long-term unemployment prediction.
#[derive(Parser)]
#[command(name = "ltu-audit", version)]
struct Cli {
    /// Worker threads (defaults to all cores); results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic record corpus.
    Synth {
        /// Generator configuration (JSON); defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate or read the records into the run directory.
    Ingest(StageArgs),
    /// Merge records into labeled unemployment spells.
    Label(StageArgs),
    /// Build feature rows for every spell.
    Features(StageArgs),
    /// Temporal cross-validation over the tuning grids.
    Tune(StageArgs),
    /// Train the selected models on each training history.
    Train(StageArgs),
    /// Run every stage and write the full report bundle.
    Audit(StageArgs),
    /// Threshold sweeps of precision, recall and group parity.
    Sweep(StageArgs),
    /// Score, classify and evaluate; print the combined report.
    Report {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
}

fn load(args: &StageArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::read_json(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn stage_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir)
}

fn print(bytes: &[u8]) -> Result<()> {
    std::io::stdout()
        .write_all(bytes)
        .map_err(|e| Error::io("<stdout>", e))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth { config, seed, out } => {
            let mut cfg = match config {
                Some(path) => {
                    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
                    serde_json::from_reader::<_, SynthConfig>(std::io::BufReader::new(file))?
                }
                None => SynthConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let data = synth::generate(&cfg)?;
            synth::write_dataset(&out, &data)?;
            print(&serde_json::to_vec_pretty(&data.summary)?)?;
            println!();
        }
        Command::Ingest(a) => {
            let cfg = load(&a)?;
            let s = pipeline::ingest(&cfg, stage_dir(&cfg)?)?;
            println!(
                "{} persons, {} records, {} rejected rows",
                s.n_persons, s.n_records, s.rejected_rows
            );
        }
        Command::Label(a) => {
            let cfg = load(&a)?;
            println!("{} spells", pipeline::label(&cfg, stage_dir(&cfg)?)?);
        }
        Command::Features(a) => {
            let cfg = load(&a)?;
            println!("{} rows", pipeline::features(&cfg, stage_dir(&cfg)?)?);
        }
        Command::Tune(a) => {
            let cfg = load(&a)?;
            for s in pipeline::tune(&cfg, stage_dir(&cfg)?)? {
                println!("{}: {}", s.method, s.best.label());
            }
        }
        Command::Train(a) => {
            let cfg = load(&a)?;
            println!("{} models", pipeline::train(&cfg, stage_dir(&cfg)?)?);
        }
        Command::Audit(a) => {
            let cfg = load(&a)?;
            let report = pipeline::run(&cfg)?;
            println!(
                "{} report rows written to {} (config {})",
                report.rows.len(),
                cfg.output_dir.display(),
                report.provenance.config_hash
            );
        }
        Command::Sweep(a) => {
            let cfg = load(&a)?;
            println!("{} sweep rows", pipeline::sweep(&cfg, stage_dir(&cfg)?)?);
        }
        Command::Report { stage, format } => {
            let cfg = load(&stage)?;
            let report = pipeline::report(&cfg, stage_dir(&cfg)?)?;
            print(&match format {
                Format::Csv => pipeline::report_csv(&report.rows)?,
                Format::Json => pipeline::report_json(&report.rows)?,
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
