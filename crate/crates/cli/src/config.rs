use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use lgr_ocp::estimate::DirectionPolicy;
use lgr_ocp::nlp::SolverOptions;
use lgr_ocp::ode::{IntegratorSpec, Method};
use lgr_ocp::problem::{hyper_sensitive, robot_arm, supersonic_climb, AeroModel, OcpDefinition, TimeSpec};
use lgr_ocp::refinement::RefinementOptions;
use serde::Serialize;

use crate::problem_file;

/// Horizon of the built-in hyper-sensitive problem.
pub const HYPER_SENSITIVE_HORIZON: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegratorArg {
    Dp54,
    V98,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionArg {
    Both,
    Forward,
    Backward,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Arguments of `lgr-ocp solve`. Unset numeric options fall back to the
/// preset of the chosen problem.
#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// robot_arm, hyper_sensitive, supersonic_climb, or file:<path> to a TOML problem
    #[arg(long)]
    pub problem: String,
    /// Smallest collocation count per interval
    #[arg(long)]
    pub nmin: Option<usize>,
    /// Largest collocation count per interval
    #[arg(long)]
    pub nmax: Option<usize>,
    #[arg(long, value_enum)]
    pub integrator: Option<IntegratorArg>,
    /// Mesh error tolerance
    #[arg(long)]
    pub mesh_tol: Option<f64>,
    /// Integrator tolerance
    #[arg(long)]
    pub ode_tol: Option<f64>,
    /// NLP optimality and feasibility tolerance
    #[arg(long)]
    pub nlp_tol: Option<f64>,
    /// Largest mesh iteration index
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
    /// Output directory
    #[arg(long, default_value = "lgr-ocp-out")]
    pub out: PathBuf,
    /// Comma-separated subset of json,csv; empty writes nothing
    #[arg(long, default_value = "json,csv")]
    pub format: String,
    /// Record per-iteration wall time (reports then differ between runs)
    #[arg(long)]
    pub wall_time: bool,
}

/// Fully resolved run settings, echoed into the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem: String,
    pub n_min: usize,
    pub n_max: usize,
    pub integrator: IntegratorArg,
    pub mesh_tol: f64,
    pub ode_tol: f64,
    pub nlp_tol: f64,
    pub max_iters: usize,
    pub direction: DirectionArg,
    pub output_dir: PathBuf,
    pub formats: Vec<Format>,
    pub wall_time: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Preset {
    n_min: usize,
    n_max: usize,
    integrator: IntegratorArg,
    direction: DirectionArg,
}

fn preset(problem: &str) -> Preset {
    match problem {
        "robot_arm" => Preset { n_min: 2, n_max: 6, integrator: IntegratorArg::Dp54, direction: DirectionArg::Both },
        "hyper_sensitive" => {
            Preset { n_min: 3, n_max: 12, integrator: IntegratorArg::V98, direction: DirectionArg::Auto }
        }
        _ => {
            let d = RefinementOptions::default();
            Preset { n_min: d.n_min, n_max: d.n_max, integrator: IntegratorArg::Dp54, direction: DirectionArg::Both }
        }
    }
}

pub fn parse_formats(spec: &str) -> Result<Vec<Format>> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let f = match item.to_ascii_lowercase().as_str() {
            "json" => Format::Json,
            "csv" => Format::Csv,
            "none" => continue,
            other => bail!("unknown output format `{other}` (expected json, csv)"),
        };
        if !out.contains(&f) {
            out.push(f);
        }
    }
    out.sort();
    Ok(out)
}

impl RunConfig {
    pub fn from_args(args: &SolveArgs) -> Result<Self> {
        let p = preset(&args.problem);
        let defaults = RefinementOptions::default();
        Ok(Self {
            problem: args.problem.clone(),
            n_min: args.nmin.unwrap_or(p.n_min),
            n_max: args.nmax.unwrap_or(p.n_max),
            integrator: args.integrator.unwrap_or(p.integrator),
            mesh_tol: args.mesh_tol.unwrap_or(defaults.mesh_tolerance),
            ode_tol: args.ode_tol.unwrap_or(defaults.integrator.tolerance),
            nlp_tol: args.nlp_tol.unwrap_or(defaults.nlp.kkt_tolerance),
            max_iters: args.max_iters.unwrap_or(defaults.max_iterations),
            direction: args.direction.unwrap_or(p.direction),
            output_dir: args.out.clone(),
            formats: parse_formats(&args.format)?,
            wall_time: args.wall_time,
        })
    }

    pub fn options(&self) -> RefinementOptions {
        RefinementOptions {
            n_min: self.n_min,
            n_max: self.n_max,
            mesh_tolerance: self.mesh_tol,
            max_iterations: self.max_iters,
            integrator: IntegratorSpec {
                method: match self.integrator {
                    IntegratorArg::Dp54 => Method::Dp54,
                    IntegratorArg::V98 => Method::V98,
                },
                tolerance: self.ode_tol,
                ..IntegratorSpec::default()
            },
            direction_policy: match self.direction {
                DirectionArg::Both => DirectionPolicy::Both,
                DirectionArg::Forward => DirectionPolicy::ForwardOnly,
                DirectionArg::Backward => DirectionPolicy::BackwardOnly,
                DirectionArg::Auto => DirectionPolicy::Auto,
            },
            nlp: SolverOptions {
                kkt_tolerance: self.nlp_tol,
                feasibility_tolerance: self.nlp_tol,
                ..SolverOptions::default()
            },
            record_wall_time: self.wall_time,
        }
    }

    /// Checks everything that can be checked without solving.
    pub fn validate(&self) -> Result<()> {
        self.options().validate().map_err(|e| anyhow!("invalid configuration: {e}"))?;
        if !(self.nlp_tol > 0.0 && self.nlp_tol.is_finite()) {
            bail!("invalid configuration: NLP tolerance must be positive, got {}", self.nlp_tol);
        }
        Ok(())
    }

    pub fn load_problem(&self) -> Result<OcpDefinition> {
        load_problem(&self.problem)
    }

    /// Creates the output directory and proves it accepts files. Does
    /// nothing when no format is selected.
    pub fn prepare_output(&self) -> Result<()> {
        if self.formats.is_empty() {
            return Ok(());
        }
        ensure_writable(&self.output_dir)
    }
}

fn ensure_writable(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("output directory {} is not writable", dir.display()))?;
    Ok(())
}

/// Stand-in aerodynamics for the climb problem in km, km/s and s. It makes
/// the problem solvable but is not a faithful aircraft model.
pub fn placeholder_aero() -> AeroModel {
    AeroModel::new(|h, _| 0.006 * (-h / 20.0f64).exp(), |h, v| 0.045 * (-h / 7.2f64).exp() * v * v, 1.0, 9.80665e-3)
}

pub fn load_problem(name: &str) -> Result<OcpDefinition> {
    match name {
        "robot_arm" => Ok(robot_arm()),
        "hyper_sensitive" => Ok(hyper_sensitive(HYPER_SENSITIVE_HORIZON)),
        "supersonic_climb" => {
            let mut ocp = supersonic_climb(placeholder_aero());
            ocp.tf = TimeSpec::Free { lower: 1.0, upper: 1e4, guess: Some(300.0) };
            Ok(ocp)
        }
        other => match other.strip_prefix("file:") {
            Some(path) => problem_file::load(Path::new(path)),
            None => bail!(
                "unknown problem `{other}` (expected robot_arm, hyper_sensitive, supersonic_climb or file:<path>)"
            ),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(problem: &str) -> SolveArgs {
        SolveArgs {
            problem: problem.into(),
            nmin: None,
            nmax: None,
            integrator: None,
            mesh_tol: None,
            ode_tol: None,
            nlp_tol: None,
            max_iters: None,
            direction: None,
            out: "out".into(),
            format: "json,csv".into(),
            wall_time: false,
        }
    }

    #[test]
    fn presets_follow_the_problem() {
        let arm = RunConfig::from_args(&args("robot_arm")).unwrap();
        assert_eq!(
            (arm.n_min, arm.n_max, arm.integrator, arm.direction),
            (2, 6, IntegratorArg::Dp54, DirectionArg::Both)
        );
        let hs = RunConfig::from_args(&args("hyper_sensitive")).unwrap();
        assert_eq!((hs.n_min, hs.n_max, hs.integrator, hs.direction), (3, 12, IntegratorArg::V98, DirectionArg::Auto));
        assert_eq!(hs.options().direction_policy, DirectionPolicy::Auto);
        let mut a = args("robot_arm");
        a.nmin = Some(4);
        a.direction = Some(DirectionArg::Forward);
        let c = RunConfig::from_args(&a).unwrap();
        assert_eq!(c.n_min, 4);
        assert_eq!(c.options().direction_policy, DirectionPolicy::ForwardOnly);
    }

    #[test]
    fn formats() {
        assert_eq!(parse_formats("csv,json,csv").unwrap(), vec![Format::Json, Format::Csv]);
        assert_eq!(parse_formats("").unwrap(), vec![]);
        assert_eq!(parse_formats("none").unwrap(), vec![]);
        assert!(parse_formats("xml").is_err());
    }

    #[test]
    fn validation() {
        let mut a = args("robot_arm");
        a.nmin = Some(5);
        a.nmax = Some(3);
        assert!(RunConfig::from_args(&a).unwrap().validate().is_err());
        let mut a = args("robot_arm");
        a.nlp_tol = Some(0.0);
        assert!(RunConfig::from_args(&a).unwrap().validate().is_err());
        assert!(RunConfig::from_args(&args("robot_arm")).unwrap().validate().is_ok());
    }

    #[test]
    fn problem_names() {
        assert!(load_problem("robot_arm").is_ok());
        assert_eq!(load_problem("supersonic_climb").unwrap().tf.guess(), 300.0);
        assert!(load_problem("nope").unwrap_err().to_string().contains("unknown problem"));
        assert!(load_problem("file:/does/not/exist.toml").is_err());
    }
}
