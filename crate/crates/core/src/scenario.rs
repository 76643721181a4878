//! Scenario files: one TOML document with `[robot]`, `[sim]`, `[controller]`
//! and `[fis]` sections, a list of `[[runs]]` and an optional `[sweep]` grid.
//! Every section is optional and falls back to the built-in defaults;
//! unknown keys are rejected.

use crate::controller::{Configuration, ControllerConfig, ControllerConfigError, Mode, ParkingTarget};
use crate::dynamics::RobotParams;
use crate::fuzzy::{FisDefinition, FisError};
use crate::simulator::{NoiseConfig, SimConfig};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin}: {source}")]
    Parse { origin: String, source: toml::de::Error },
    #[error("invalid override `{0}`: expected dotted.key=value")]
    Override(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), reason: reason.into() }
}

/// The literal `"free"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Free {
    Free,
}

/// Target x: a coordinate, or `"free"` to leave x uncontrolled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetX {
    Fixed(f64),
    Free(Free),
}

/// Target position in the frame rotated by the run's final heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub x: TargetX,
    #[serde(default)]
    pub y: f64,
}

impl TargetSpec {
    pub fn to_target(&self) -> ParkingTarget {
        let x = match self.x {
            TargetX::Fixed(x) => Some(x),
            TargetX::Free(_) => None,
        };
        ParkingTarget { x, y: self.y }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunEntry {
    pub name: String,
    pub mode: Mode,
    /// Initial pose, m and deg. The robot starts at rest.
    pub start: Configuration,
    pub target: TargetSpec,
    /// Final heading, deg. Falls back to `controller.beta_deg`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_deg: Option<f64>,
    /// Sensor noise for this run. Falls back to `sim.noise`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
}

fn full_parking() -> Mode {
    Mode::FullParking
}

/// Cross-product of initial lateral offsets and headings, all from rest at `x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub y0: Vec<f64>,
    /// deg
    pub theta0: Vec<f64>,
    #[serde(default)]
    pub x0: f64,
    pub target: TargetSpec,
    #[serde(default = "full_parking")]
    pub mode: Mode,
    /// Also run every cell reflected through the x axis.
    #[serde(default)]
    pub mirror: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub robot: RobotParams,
    pub sim: SimConfig,
    pub controller: ControllerConfig,
    pub fis: FisDefinition,
    pub runs: Vec<RunEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

/// Where a sweep run sits in its grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell {
    pub y0: f64,
    pub theta0: f64,
    pub mirrored: bool,
}

/// A fully resolved run, ready to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    /// Position in the batch; selects the noise stream.
    pub index: u64,
    pub name: String,
    pub mode: Mode,
    pub start: Configuration,
    pub target: ParkingTarget,
    pub sim: SimConfig,
    pub controller: ControllerConfig,
    pub cell: Option<GridCell>,
}

/// A `dotted.key=value` patch applied on top of the parsed file.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: toml::Value,
}

impl std::str::FromStr for Override {
    type Err = ScenarioError;

    /// The value is read as a TOML value; anything that does not parse as
    /// one is taken as a bare string.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (key, raw) = s.split_once('=').ok_or_else(|| ScenarioError::Override(s.to_string()))?;
        let path: Vec<String> = key.trim().split('.').map(|p| p.trim().to_string()).collect();
        if path.iter().any(String::is_empty) {
            return Err(ScenarioError::Override(s.to_string()));
        }
        let raw = raw.trim();
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        Ok(Override { path, value })
    }
}

fn apply_override(doc: &mut toml::Table, ov: &Override) -> Result<(), ScenarioError> {
    let (last, parents) = ov.path.split_last().expect("override path is never empty");
    let mut table = doc;
    for (depth, key) in parents.iter().enumerate() {
        let entry = table.entry(key.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            invalid(ov.path[..=depth].join("."), "override path runs through a non-table value")
        })?;
    }
    table.insert(last.clone(), ov.value.clone());
    Ok(())
}

impl ScenarioFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        Self::parse_with_overrides(text, origin, &[])
    }

    /// Parses `text`, applies the overrides in order, then validates.
    pub fn parse_with_overrides(text: &str, origin: &str, overrides: &[Override]) -> Result<Self, ScenarioError> {
        let parse_err = |source| ScenarioError::Parse { origin: origin.to_string(), source };
        let file: ScenarioFile = if overrides.is_empty() {
            toml::from_str(text).map_err(parse_err)?
        } else {
            let mut doc: toml::Table = toml::from_str(text).map_err(parse_err)?;
            for ov in overrides {
                apply_override(&mut doc, ov)?;
            }
            toml::Value::Table(doc)
                .try_into()
                .map_err(|source| ScenarioError::Parse { origin: format!("{origin} (with overrides)"), source })?
        };
        file.validate()?;
        Ok(file)
    }

    pub fn load(path: &Path, overrides: &[Override]) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
        Self::parse_with_overrides(&text, &path.display().to_string(), overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario values always serialize")
    }

    /// Every default spelled out, with one example run and sweep.
    pub fn reference() -> Self {
        ScenarioFile {
            runs: vec![
                RunEntry {
                    name: "align_only".into(),
                    mode: Mode::FlcOnly,
                    start: Configuration::new(0.0, 0.63, 0.0),
                    target: TargetSpec { x: TargetX::Free(Free::Free), y: 0.0 },
                    beta_deg: None,
                    noise: None,
                },
                RunEntry {
                    name: "park".into(),
                    mode: Mode::FullParking,
                    start: Configuration::new(-0.2, 0.6, 0.0),
                    target: TargetSpec { x: TargetX::Fixed(2.3), y: 0.0 },
                    beta_deg: None,
                    noise: None,
                },
            ],
            sweep: Some(SweepSpec {
                y0: vec![1.0, 1.5],
                theta0: vec![0.0, -60.0, 60.0],
                x0: 0.0,
                target: TargetSpec { x: TargetX::Fixed(7.0), y: 0.0 },
                mode: Mode::FullParking,
                mirror: true,
            }),
            ..Default::default()
        }
    }

    /// Controller settings with the `[fis]` section folded in.
    pub fn controller_config(&self) -> ControllerConfig {
        ControllerConfig { fis: self.fis.clone(), ..self.controller.clone() }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.robot
            .validate()
            .map_err(|e| invalid(format!("robot.{}", e.field), e.reason))?;
        self.sim.validate().map_err(|e| invalid(format!("sim.{}", e.field), e.reason))?;
        self.controller_config().validate().map_err(|e| match e {
            ControllerConfigError::Setting { field, reason } => invalid(format!("controller.{field}"), reason),
            ControllerConfigError::Fis(FisError::Definition { field, reason }) => {
                invalid(format!("fis.{field}"), reason)
            }
            ControllerConfigError::Fis(other) => invalid("fis", other.to_string()),
        })?;

        let mut names = HashSet::new();
        for (i, run) in self.runs.iter().enumerate() {
            let at = |f: &str| format!("runs[{i}].{f}");
            check_name(&run.name).map_err(|reason| invalid(at("name"), reason))?;
            if !names.insert(run.name.as_str()) {
                return Err(invalid(at("name"), format!("duplicate run name `{}`", run.name)));
            }
            check_pose(&run.start).map_err(|reason| invalid(at("start"), reason))?;
            check_target(&run.target, run.mode).map_err(|reason| invalid(at("target"), reason))?;
            if run.beta_deg.is_some_and(|b| !b.is_finite()) {
                return Err(invalid(at("beta_deg"), "must be finite"));
            }
            if let Some(noise) = run.noise {
                SimConfig { noise, ..self.sim.clone() }
                    .validate()
                    .map_err(|e| invalid(at(e.field), e.reason))?;
            }
        }

        if let Some(sweep) = &self.sweep {
            if sweep.y0.is_empty() || sweep.theta0.is_empty() {
                return Err(invalid("sweep", "y0 and theta0 need at least one value each"));
            }
            if !sweep.y0.iter().chain(&sweep.theta0).chain([&sweep.x0]).all(|v| v.is_finite()) {
                return Err(invalid("sweep", "grid values must be finite"));
            }
            check_target(&sweep.target, sweep.mode).map_err(|reason| invalid("sweep.target", reason))?;
        }
        Ok(())
    }

    fn resolve(&self, index: usize, run: &RunEntry, cell: Option<GridCell>) -> RunSpec {
        let mut controller = self.controller_config();
        if let Some(beta) = run.beta_deg {
            controller.beta_deg = beta;
        }
        let mut sim = self.sim.clone();
        if let Some(noise) = run.noise {
            sim.noise = noise;
        }
        RunSpec {
            index: index as u64,
            name: run.name.clone(),
            mode: run.mode,
            start: run.start,
            target: run.target.to_target(),
            sim,
            controller,
            cell,
        }
    }

    /// The `[[runs]]` list, resolved.
    pub fn run_specs(&self) -> Vec<RunSpec> {
        self.runs.iter().enumerate().map(|(i, run)| self.resolve(i, run, None)).collect()
    }

    /// The `[sweep]` grid in y0-major order, followed by the mirrored cells
    /// when requested. Empty without a sweep section.
    pub fn sweep_specs(&self) -> Vec<RunSpec> {
        let Some(sweep) = &self.sweep else { return Vec::new() };
        let mut cells: Vec<GridCell> = sweep
            .y0
            .iter()
            .flat_map(|&y0| sweep.theta0.iter().map(move |&theta0| GridCell { y0, theta0, mirrored: false }))
            .collect();
        if sweep.mirror {
            let mirrored: Vec<GridCell> =
                // `+ 0.0` keeps a mirrored zero from printing as -0
                cells.iter().map(|c| GridCell { y0: -c.y0 + 0.0, theta0: -c.theta0 + 0.0, mirrored: true }).collect();
            cells.extend(mirrored);
        }
        cells
            .into_iter()
            .enumerate()
            .map(|(i, cell)| {
                let prefix = if cell.mirrored { "sweep_mirror" } else { "sweep" };
                let run = RunEntry {
                    name: format!("{prefix}_y{}_th{}", cell.y0, cell.theta0),
                    mode: sweep.mode,
                    start: Configuration::new(sweep.x0, cell.y0, cell.theta0),
                    target: if cell.mirrored {
                        TargetSpec { y: -sweep.target.y, ..sweep.target }
                    } else {
                        sweep.target
                    },
                    beta_deg: None,
                    noise: None,
                };
                self.resolve(i, &run, Some(cell))
            })
            .collect()
    }
}

fn check_name(name: &str) -> Result<(), String> {
    let ok = !name.is_empty()
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !name.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(format!("`{name}` must be non-empty and use only letters, digits, `_`, `-` or `.`"))
    }
}

fn check_pose(pose: &Configuration) -> Result<(), String> {
    if [pose.x, pose.y, pose.theta].iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err("pose values must be finite".into())
    }
}

fn check_target(target: &TargetSpec, mode: Mode) -> Result<(), String> {
    if !target.y.is_finite() || matches!(target.x, TargetX::Fixed(x) if !x.is_finite()) {
        return Err("target values must be finite".into());
    }
    if mode == Mode::FullParking && matches!(target.x, TargetX::Free(_)) {
        return Err("full_parking needs a numeric target x".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[sim]
duration_max = 45.0

[controller]
drive_force = 4.0

[fis]
dead_band = 0.1

[[runs]]
name = "a"
mode = "flc_only"
start = { x = 0.0, y = 0.63, theta = 0.0 }
target = { x = "free", y = 0.0 }

[[runs]]
name = "b"
mode = "full_parking"
start = { x = -0.2, y = 0.6, theta = 0.0 }
target = { x = 2.3 }
beta_deg = 22.0
"#;

    #[test]
    fn parses_sections_and_runs() {
        let f = ScenarioFile::parse(SAMPLE, "sample").unwrap();
        assert_eq!(f.sim.duration_max, 45.0);
        assert_eq!(f.sim.dt_physics, SimConfig::default().dt_physics);
        assert_eq!(f.controller.drive_force, 4.0);
        assert_eq!(f.controller_config().fis.dead_band, 0.1);
        let specs = f.run_specs();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[0].target, ParkingTarget { x: None, y: 0.0 });
        assert_eq!(specs[1].target, ParkingTarget { x: Some(2.3), y: 0.0 });
        assert_eq!(specs[1].controller.beta_deg, 22.0);
        assert_eq!(specs[0].controller.beta_deg, 0.0);
        assert_eq!(specs[1].index, 1);
    }

    #[test]
    fn round_trip_is_idempotent() {
        let f = ScenarioFile::parse(SAMPLE, "sample").unwrap();
        let once = f.to_toml_string();
        let back = ScenarioFile::parse(&once, "once").unwrap();
        assert_eq!(f, back);
        assert_eq!(once, back.to_toml_string());

        let reference = ScenarioFile::reference();
        assert_eq!(ScenarioFile::parse(&reference.to_toml_string(), "ref").unwrap(), reference);
    }

    #[test]
    fn empty_file_is_all_defaults() {
        let f = ScenarioFile::parse("", "empty").unwrap();
        assert_eq!(f, ScenarioFile::default());
        assert!(f.run_specs().is_empty());
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = ScenarioFile::parse("[controller]\ndrive_forse = 3.0\n", "typo.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("typo.toml"), "{msg}");
        assert!(msg.contains("drive_forse"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let text = SAMPLE.replace("drive_force = 4.0", "drive_force = 40.0");
        let msg = ScenarioFile::parse(&text, "s").unwrap_err().to_string();
        assert!(msg.contains("controller.drive_force"), "{msg}");

        let text = SAMPLE.replace("target = { x = 2.3 }", "target = { x = \"free\" }");
        let msg = ScenarioFile::parse(&text, "s").unwrap_err().to_string();
        assert!(msg.contains("runs[1].target"), "{msg}");

        let text = SAMPLE.replace("name = \"b\"", "name = \"a\"");
        let msg = ScenarioFile::parse(&text, "s").unwrap_err().to_string();
        assert!(msg.contains("duplicate"), "{msg}");

        let text = SAMPLE.replace("name = \"b\"", "name = \"../b\"");
        assert!(ScenarioFile::parse(&text, "s").is_err());

        let msg = ScenarioFile::parse("[fis]\ndead_band = 5.0\n", "s").unwrap_err().to_string();
        assert!(msg.contains("fis.dead_band"), "{msg}");
    }

    #[test]
    fn free_keyword_is_exact() {
        let text = SAMPLE.replace("x = \"free\"", "x = \"loose\"");
        assert!(ScenarioFile::parse(&text, "s").is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let ovs: Vec<Override> = ["controller.drive_force=6.5", "sim.seed=42", "fis.dead_band=0.2", "sim.integrator=semi_implicit_euler"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let f = ScenarioFile::parse_with_overrides(SAMPLE, "s", &ovs).unwrap();
        assert_eq!(f.controller.drive_force, 6.5);
        assert_eq!(f.sim.seed, 42);
        assert_eq!(f.fis.dead_band, 0.2);
        assert_eq!(f.sim.integrator, crate::simulator::Integrator::SemiImplicitEuler);
        // untouched fields keep the file value, then the default
        assert_eq!(f.sim.duration_max, 45.0);
        assert_eq!(f.controller.kp, ControllerConfig::default().kp);

        let bad: Override = "controller.nonsense=1".parse().unwrap();
        assert!(ScenarioFile::parse_with_overrides(SAMPLE, "s", &[bad]).is_err());
        assert!("novalue".parse::<Override>().is_err());
        assert!("a..b=1".parse::<Override>().is_err());
    }

    #[test]
    fn sweep_expands_grid_and_mirror() {
        let f = ScenarioFile::reference();
        let specs = f.sweep_specs();
        assert_eq!(specs.len(), 12);
        assert_eq!(specs[0].start, Configuration::new(0.0, 1.0, 0.0));
        assert_eq!(specs[1].start, Configuration::new(0.0, 1.0, -60.0));
        assert_eq!(specs[5].start, Configuration::new(0.0, 1.5, 60.0));
        assert_eq!(specs[7].start, Configuration::new(0.0, -1.0, 60.0));
        assert!(specs[7].cell.unwrap().mirrored);
        assert_eq!(specs[7].index, 7);
        let names: HashSet<_> = specs.iter().map(|s| s.name.clone()).collect();
        assert_eq!(names.len(), 12);
        assert!(specs.iter().all(|s| s.target == ParkingTarget { x: Some(7.0), y: 0.0 }));
    }
}
