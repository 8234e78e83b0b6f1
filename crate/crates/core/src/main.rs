use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cpsrobust::cli::{self, CliError, Overrides, RunConfig, SynthOptions};

#[derive(Debug, Parser)]
#[command(name = "cpsrobust", version, about = "Robustness benchmark for multivariate sensor forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train (if needed), disturb and score one model on one dataset.
    Run(RunArgs),
    /// Check a config and print it with every default filled in.
    ValidateConfig(RunArgs),
    /// Write the robustness curves of a report as CSV.
    ExportCurves {
        report: PathBuf,
        /// Output file; standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean and std of R and test MSE per model across reports.
    Aggregate {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Also write the summary as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic demo dataset (not measured data).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        rows: usize,
        /// Continuous channels; a binary actuator channel is always added.
        #[arg(long, default_value_t = 3)]
        sensors: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Report JSON path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    severity_step: Option<f64>,
    /// Number of test windows.
    #[arg(long)]
    windows: Option<usize>,
    /// Evaluate an external model served by this command.
    #[arg(long)]
    adapter_cmd: Option<String>,
    #[arg(long)]
    curves_csv: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            out: self.out.clone(),
            severity_step: self.severity_step,
            test_windows: self.windows,
            adapter_cmd: self.adapter_cmd.clone(),
            curves_csv: self.curves_csv.clone(),
            workers: self.workers,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

fn output(path: Option<&Path>, stage: &'static str) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::io(stage, &p.display().to_string(), e))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn aggregate_error(e: cli::AggregateError) -> CliError {
    CliError::Data { stage: "aggregate", message: e.to_string() }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(args) => {
            let cfg = args.config()?;
            let report = cli::run(&cfg)?;
            for sc in &report.scenarios {
                match sc.r_d {
                    Some(r) => eprintln!("{:<20} R_d = {r:.6}", sc.kind),
                    None => eprintln!("{:<20} not applicable", sc.kind),
                }
            }
            eprintln!("overall R = {:.6}", report.overall_robustness);
            if cfg.output.report.is_none() {
                serde_json::to_writer_pretty(io::stdout().lock(), &report)
                    .map_err(|e| CliError::io("report", "stdout", e))?;
                println!();
            }
            Ok(())
        }
        Command::ValidateConfig(args) => {
            let cfg = args.config()?;
            println!("{}", serde_json::to_string_pretty(&cfg.snapshot()).expect("config serializes"));
            Ok(())
        }
        Command::ExportCurves { report, out } => {
            let report = cli::read_report(&report).map_err(aggregate_error)?;
            cpsrobust::score::write_curves_csv(&report, output(out.as_deref(), "export-curves")?)
                .map_err(|e| CliError::io("export-curves", "write", e))
        }
        Command::Aggregate { reports, out } => {
            let loaded = reports.iter().map(|p| cli::read_report(p)).collect::<Result<Vec<_>, _>>().map_err(aggregate_error)?;
            let summary = cli::aggregate(&loaded).map_err(aggregate_error)?;
            print!("{}", cli::render_table(&summary));
            if let Some(path) = out {
                cli::write_summary_csv(&summary, output(Some(&path), "aggregate")?)
                    .map_err(|e| CliError::io("aggregate", "write", e))?;
            }
            Ok(())
        }
        Command::Synth { out, rows, sensors, seed } => {
            let opts = SynthOptions { rows, continuous: sensors, seed, ..Default::default() };
            cli::write_synth_csv(&opts, output(Some(&out), "synth")?).map_err(|e| CliError::io("synth", "write", e))
        }
    }
}

fn main() -> ExitCode {
    let parsed = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(parsed.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
