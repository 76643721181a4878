//! Batch execution of resolved runs, per-run reports and the files that go
//! with them.

use crate::controller::{Configuration, Mode};
use crate::dynamics::RobotParams;
use crate::export::{self, format_sig6, ExportError};
use crate::scenario::{GridCell, RunSpec};
use crate::simulator::{run_scenario, FinalErrors, RunSetup, SimError, Termination, TrajectoryLog};
use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Metrics of one finished run plus the files written for it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub index: u64,
    pub name: String,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell: Option<GridCell>,
    pub start: Configuration,
    pub converged: bool,
    pub termination: Termination,
    pub alignment_time: Option<f64>,
    pub parking_time: Option<f64>,
    pub final_configuration: Configuration,
    pub final_errors: FinalErrors,
    pub max_constraint_residual: f64,
    pub ticks: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary_json: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub log: TrajectoryLog,
}

#[derive(Debug, thiserror::Error)]
pub enum BatchError {
    #[error("run `{name}`: {source}")]
    Sim { name: String, source: SimError },
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error("cannot create output directory {}: {source}", path.display())]
    OutDir { path: PathBuf, source: std::io::Error },
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, Copy)]
pub struct BatchOptions<'a> {
    /// Where trajectories and summaries go. Nothing is written without it.
    pub out_dir: Option<&'a Path>,
    /// Worker threads; 1 runs everything on the calling thread.
    pub parallel: usize,
}

impl Default for BatchOptions<'_> {
    fn default() -> Self {
        Self { out_dir: None, parallel: 1 }
    }
}

/// Simulates one run with its own noise stream.
pub fn simulate(params: &RobotParams, spec: &RunSpec) -> Result<TrajectoryLog, SimError> {
    let setup = RunSetup {
        params,
        sim: &spec.sim,
        controller: &spec.controller,
        start: spec.start,
        target: spec.target,
        mode: spec.mode,
    };
    run_scenario(&setup, &mut spec.sim.rng_for_run(spec.index))
}

fn report(spec: &RunSpec, log: &TrajectoryLog) -> RunReport {
    let s = &log.summary;
    RunReport {
        index: spec.index,
        name: spec.name.clone(),
        mode: spec.mode,
        cell: spec.cell,
        start: spec.start,
        converged: s.converged,
        termination: s.termination,
        alignment_time: s.alignment_time,
        parking_time: s.parking_time,
        final_configuration: s.final_configuration,
        final_errors: s.final_errors,
        max_constraint_residual: s.max_constraint_residual,
        ticks: s.ticks,
        trajectory_csv: None,
        summary_json: None,
    }
}

fn run_and_write(params: &RobotParams, spec: &RunSpec, out_dir: Option<&Path>) -> Result<RunOutcome, BatchError> {
    let log = simulate(params, spec).map_err(|source| BatchError::Sim { name: spec.name.clone(), source })?;
    let mut report = report(spec, &log);
    if let Some(dir) = out_dir {
        let csv = dir.join(format!("{}.csv", spec.name));
        let json = dir.join(format!("{}.json", spec.name));
        export::write_trajectory(&log, &csv)?;
        report.trajectory_csv = Some(csv);
        report.summary_json = Some(json.clone());
        export::write_json(&report, &json)?;
    }
    log::info!(
        "{}: {} after {:.2} s",
        spec.name,
        if report.converged { "converged" } else { "not converged" },
        report.ticks.saturating_sub(1) as f64 * spec.sim.control_period
    );
    Ok(RunOutcome { report, log })
}

/// Runs every spec, writing each run's files from the worker that ran it.
/// Outcomes come back in input order.
pub fn execute(params: &RobotParams, specs: &[RunSpec], opts: BatchOptions<'_>) -> Result<Vec<RunOutcome>, BatchError> {
    if let Some(dir) = opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|source| BatchError::OutDir { path: dir.to_path_buf(), source })?;
    }
    if opts.parallel <= 1 || specs.len() <= 1 {
        return specs.iter().map(|spec| run_and_write(params, spec, opts.out_dir)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.parallel).build()?;
    pool.install(|| specs.par_iter().map(|spec| run_and_write(params, spec, opts.out_dir)).collect())
}

#[derive(Debug, Serialize)]
struct BatchSummary<'a> {
    runs: usize,
    converged: usize,
    all_converged: bool,
    reports: &'a [RunReport],
}

pub fn all_converged(reports: &[RunReport]) -> bool {
    reports.iter().all(|r| r.converged)
}

/// `summary.json` with every report. Returns the path written.
pub fn write_summary(dir: &Path, reports: &[RunReport]) -> Result<PathBuf, ExportError> {
    let path = dir.join("summary.json");
    let summary = BatchSummary {
        runs: reports.len(),
        converged: reports.iter().filter(|r| r.converged).count(),
        all_converged: all_converged(reports),
        reports,
    };
    export::write_json(&summary, &path)?;
    Ok(path)
}

pub const CONVERGENCE_HEADER: [&str; 10] =
    ["name", "y0", "theta0", "mirrored", "converged", "alignment_time", "parking_time", "e_x", "e_y", "e_theta"];

/// One row per sweep cell. Missing times and errors are left empty.
pub fn convergence_table<W: std::io::Write>(reports: &[RunReport], out: W) -> csv::Result<()> {
    let opt = |v: Option<f64>| v.map(format_sig6).unwrap_or_default();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CONVERGENCE_HEADER)?;
    for r in reports {
        let cell = r.cell.unwrap_or(GridCell { y0: r.start.y, theta0: r.start.theta, mirrored: false });
        w.write_record([
            r.name.clone(),
            format_sig6(cell.y0),
            format_sig6(cell.theta0),
            cell.mirrored.to_string(),
            r.converged.to_string(),
            opt(r.alignment_time),
            opt(r.parking_time),
            opt(r.final_errors.e_x),
            format_sig6(r.final_errors.e_y),
            format_sig6(r.final_errors.e_theta_deg),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_convergence_table(dir: &Path, reports: &[RunReport]) -> Result<PathBuf, ExportError> {
    let path = dir.join("convergence.csv");
    let file = std::fs::File::create(&path).map_err(|source| ExportError::Io { path: path.clone(), source })?;
    convergence_table(reports, std::io::BufWriter::new(file))
        .map_err(|source| ExportError::Csv { path: path.clone(), source })?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioFile;

    fn short_sweep() -> ScenarioFile {
        let text = r#"
[sim]
duration_max = 0.5

[sweep]
y0 = [1.0]
theta0 = [0.0, 60.0]
target = { x = 7.0 }
mirror = true
"#;
        ScenarioFile::parse(text, "test").unwrap()
    }

    #[test]
    fn parallel_and_serial_agree() {
        let f = short_sweep();
        let specs = f.sweep_specs();
        let serial = execute(&f.robot, &specs, BatchOptions::default()).unwrap();
        let parallel = execute(&f.robot, &specs, BatchOptions { out_dir: None, parallel: 3 }).unwrap();
        assert_eq!(serial.len(), 4);
        for (a, b) in serial.iter().zip(&parallel) {
            assert_eq!(a.report, b.report);
            assert_eq!(a.log, b.log);
        }
    }

    #[test]
    fn files_are_written_per_run() {
        let f = short_sweep();
        let specs = f.sweep_specs();
        let dir = tempfile::tempdir().unwrap();
        let out = execute(&f.robot, &specs, BatchOptions { out_dir: Some(dir.path()), parallel: 2 }).unwrap();
        let reports: Vec<RunReport> = out.iter().map(|o| o.report.clone()).collect();
        for r in &reports {
            let csv = r.trajectory_csv.as_ref().unwrap();
            assert_eq!(export::read_trajectory(csv).unwrap().len(), r.ticks);
            assert!(r.summary_json.as_ref().unwrap().exists());
        }
        write_summary(dir.path(), &reports).unwrap();
        let table = write_convergence_table(dir.path(), &reports).unwrap();
        let text = std::fs::read_to_string(table).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(3).unwrap().starts_with("sweep_mirror_y-1_th0,-1.00000,0,true,"), "{text}");
    }

    #[test]
    fn single_cell_sweep_matches_a_plain_run() {
        let text = r#"
[sim]
duration_max = 2.0

[[runs]]
name = "cell"
mode = "full_parking"
start = { x = 0.0, y = 1.5, theta = -60.0 }
target = { x = 7.0 }

[sweep]
y0 = [1.5]
theta0 = [-60.0]
target = { x = 7.0 }
"#;
        let f = ScenarioFile::parse(text, "test").unwrap();
        let run = execute(&f.robot, &f.run_specs(), BatchOptions::default()).unwrap();
        let cell = execute(&f.robot, &f.sweep_specs(), BatchOptions::default()).unwrap();
        assert_eq!(run[0].log, cell[0].log);
    }
}
