use anyhow::bail;
use clap::{Args, Parser, Subcommand};
use mamr_core::batch::{self, BatchOptions, RunReport};
use mamr_core::scenario::{Override, RunSpec, ScenarioFile};
use std::path::PathBuf;
use std::process::ExitCode;

/// Parking simulator for a robot driven by one omni wheel and steered by
/// two on/off brakes.
#[derive(Debug, Parser)]
#[command(name = "mamr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every `[[runs]]` entry of a scenario file.
    Run(Exec),
    /// Run the `[sweep]` grid of a scenario file.
    Sweep(Exec),
    /// Parse and check a scenario file without running it.
    ValidateConfig(Source),
    /// Print a scenario file with every default spelled out.
    PrintDefaults,
}

#[derive(Debug, Args)]
struct Source {
    /// Scenario file (TOML).
    #[arg(long, short)]
    scenario: PathBuf,
    /// Override a setting, e.g. `--set controller.drive_force=4.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<Override>,
    /// Noise seed; replaces `sim.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct Exec {
    #[command(flatten)]
    source: Source,
    /// Output directory for trajectories and summaries.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    parallel: u16,
    /// Exit 0 even if some runs do not converge.
    #[arg(long)]
    allow_nonconvergence: bool,
}

/// Exit status for bad input or I/O failures; 1 is reserved for runs that
/// did not converge.
const EXIT_ERROR: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("MAMR_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Run(exec) => {
            let scenario = load(&exec.source)?;
            execute(&scenario, scenario.run_specs(), &exec, false)
        }
        Command::Sweep(exec) => {
            let scenario = load(&exec.source)?;
            if scenario.sweep.is_none() {
                bail!("{} has no [sweep] section", exec.source.scenario.display());
            }
            execute(&scenario, scenario.sweep_specs(), &exec, true)
        }
        Command::ValidateConfig(source) => {
            let scenario = load(&source)?;
            println!(
                "{}: ok ({} runs, {} sweep cells)",
                source.scenario.display(),
                scenario.runs.len(),
                scenario.sweep_specs().len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::PrintDefaults => {
            print!("{}", reference_text());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load(source: &Source) -> anyhow::Result<ScenarioFile> {
    let mut overrides = source.set.clone();
    if let Some(seed) = source.seed {
        overrides.push(format!("sim.seed={seed}").parse()?);
    }
    Ok(ScenarioFile::load(&source.scenario, &overrides)?)
}

fn execute(scenario: &ScenarioFile, specs: Vec<RunSpec>, exec: &Exec, sweep: bool) -> anyhow::Result<ExitCode> {
    if specs.is_empty() {
        log::warn!("{} defines no runs; nothing to do", exec.source.scenario.display());
        return Ok(ExitCode::SUCCESS);
    }
    let opts = BatchOptions { out_dir: Some(&exec.out), parallel: exec.parallel.into() };
    let outcomes = batch::execute(&scenario.robot, &specs, opts)?;
    let reports: Vec<RunReport> = outcomes.into_iter().map(|o| o.report).collect();

    let summary = batch::write_summary(&exec.out, &reports)?;
    if sweep {
        batch::write_convergence_table(&exec.out, &reports)?;
    }
    print_table(&reports);
    println!("summary: {}", summary.display());

    if batch::all_converged(&reports) || exec.allow_nonconvergence {
        Ok(ExitCode::SUCCESS)
    } else {
        let failed = reports.iter().filter(|r| !r.converged).count();
        eprintln!("{failed} of {} runs did not converge", reports.len());
        Ok(ExitCode::FAILURE)
    }
}

fn print_table(reports: &[RunReport]) {
    let time = |t: Option<f64>| t.map_or_else(|| "-".to_string(), |t| format!("{t:.2}"));
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    println!("{:width$}  conv  align_s  park_s  e_x_m     e_y_m     e_theta_deg", "run");
    for r in reports {
        let e = &r.final_errors;
        println!(
            "{:width$}  {:4}  {:>7}  {:>6}  {:>8}  {:>8.4}  {:>8.3}",
            r.name,
            if r.converged { "yes" } else { "no" },
            time(r.alignment_time),
            time(r.parking_time),
            e.e_x.map_or_else(|| "-".to_string(), |x| format!("{x:.4}")),
            e.e_y,
            e.e_theta_deg,
        );
    }
}

fn reference_text() -> String {
    let header = "\
# Scenario file reference. Every value shown is the built-in default;
# any section or key may be left out.
#
# [[runs]] entries: name, mode (flc_only | full_parking), start {x, y, theta},
# target {x = <m> | \"free\", y}, optional beta_deg and noise {std_x, std_y, std_theta_deg}.
# Units: m, s, N, kg, degrees.

";
    format!("{header}{}", ScenarioFile::reference().to_toml_string())
}
