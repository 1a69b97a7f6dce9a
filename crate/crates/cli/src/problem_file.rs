//! Declarative problem files.
//!
//! A problem file is TOML. Expressions are strings evaluated by [`crate::expr`].
//! Dynamics, running cost and path rows see the state and control names plus
//! `tau`, the normalized time in `[-1, 1]`. The endpoint cost and boundary rows
//! see `<state>_0`, `<state>_f`, `t0` and `tf`.
//!
//! ```toml
//! name = "double_integrator"
//! states = ["x", "v"]
//! controls = ["u"]
//! dynamics = ["v", "u"]
//! lagrange = "0.5 * u^2"
//!
//! [time]
//! t0 = 0.0
//! tf = 2.0                       # or { lower = 0.1, upper = 10.0, guess = 2.0 }
//!
//! [initial]
//! x = 0.0
//! v = 0.0
//!
//! [final]
//! x = 1.0
//! v = 0.0
//!
//! [control_bounds]
//! u = [-10.0, 10.0]
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use lgr_ocp::problem::{OcpDefinition, TimeSpec};
use serde::Deserialize;

use crate::expr::Expr;

const RESERVED: &[&str] = &["tau", "t0", "tf", "pi", "e"];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    name: Option<String>,
    states: Vec<String>,
    #[serde(default)]
    controls: Vec<String>,
    dynamics: Vec<String>,
    lagrange: Option<String>,
    mayer: Option<String>,
    #[serde(default)]
    constants: BTreeMap<String, f64>,
    #[serde(default)]
    time: TimeSection,
    #[serde(default)]
    initial: BTreeMap<String, f64>,
    #[serde(default, rename = "final")]
    terminal: BTreeMap<String, f64>,
    #[serde(default)]
    state_bounds: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    control_bounds: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    path: Vec<Row>,
    #[serde(default)]
    boundary: Vec<Row>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeSection {
    t0: Option<TimeEntry>,
    tf: Option<TimeEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TimeEntry {
    Fixed(f64),
    Free { lower: f64, upper: f64, guess: Option<f64> },
}

impl TimeEntry {
    fn spec(&self, which: &str) -> Result<TimeSpec> {
        Ok(match *self {
            TimeEntry::Fixed(v) => {
                ensure!(v.is_finite(), "{which} must be finite");
                TimeSpec::Fixed(v)
            }
            TimeEntry::Free { lower, upper, guess } => {
                ensure!(
                    lower.is_finite() && upper.is_finite() && lower < upper,
                    "{which} bounds must be finite with lower < upper"
                );
                if let Some(g) = guess {
                    ensure!((lower..=upper).contains(&g), "{which} guess {g} outside [{lower}, {upper}]");
                }
                TimeSpec::Free { lower, upper, guess }
            }
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    expr: String,
    lower: f64,
    upper: f64,
}

fn check_name(name: &str, seen: &mut Vec<String>) -> Result<()> {
    let mut chars = name.chars();
    let ok_start = chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
    ensure!(ok_start && chars.all(|c| c.is_ascii_alphanumeric() || c == '_'), "`{name}` is not a valid variable name");
    ensure!(!RESERVED.contains(&name), "`{name}` is reserved");
    ensure!(!seen.iter().any(|s| s == name), "`{name}` is declared twice");
    seen.push(name.to_string());
    Ok(())
}

fn bounds_for(names: &[String], given: &BTreeMap<String, [f64; 2]>, what: &str) -> Result<Vec<(f64, f64)>> {
    for key in given.keys() {
        ensure!(names.contains(key), "{what} bound for undeclared variable `{key}`");
    }
    names
        .iter()
        .map(|n| match given.get(n) {
            Some(&[lo, hi]) => {
                ensure!(!lo.is_nan() && !hi.is_nan() && lo <= hi, "{what} bounds for `{n}` need lower <= upper");
                Ok((lo, hi))
            }
            None => Ok((f64::NEG_INFINITY, f64::INFINITY)),
        })
        .collect()
}

fn pinned(states: &[String], given: &BTreeMap<String, f64>, what: &str) -> Result<Vec<Option<f64>>> {
    for key in given.keys() {
        ensure!(states.contains(key), "{what} value for undeclared state `{key}`");
    }
    Ok(states.iter().map(|s| given.get(s).copied()).collect())
}

/// Compiled constraint rows and their bounds.
type CompiledRows = (Vec<Expr>, Vec<(f64, f64)>);

fn parse_rows(rows: &[Row], names: &[&str], constants: &[(String, f64)], what: &str) -> Result<CompiledRows> {
    let mut exprs = Vec::with_capacity(rows.len());
    let mut bounds = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        ensure!(!r.lower.is_nan() && !r.upper.is_nan() && r.lower <= r.upper, "{what} row {i} needs lower <= upper");
        exprs.push(Expr::parse(&r.expr, names, constants).with_context(|| format!("{what} row {i}"))?);
        bounds.push((r.lower, r.upper));
    }
    Ok((exprs, bounds))
}

/// Reads and compiles a problem file.
pub fn load(path: &Path) -> Result<OcpDefinition> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let fallback = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse(&text, &fallback).with_context(|| format!("in problem file {}", path.display()))
}

/// Compiles problem-file text; `default_name` is used when the file has none.
pub fn parse(text: &str, default_name: &str) -> Result<OcpDefinition> {
    let file: ProblemFile = toml::from_str(text)?;
    let n_x = file.states.len();
    let n_u = file.controls.len();
    ensure!(n_x > 0, "at least one state is required");
    ensure!(file.dynamics.len() == n_x, "{} dynamics rows for {n_x} states", file.dynamics.len());

    let mut seen = Vec::new();
    for n in file.states.iter().chain(&file.controls) {
        check_name(n, &mut seen)?;
    }
    let constants: Vec<(String, f64)> = file.constants.iter().map(|(k, v)| (k.clone(), *v)).collect();
    for (k, v) in &constants {
        ensure!(v.is_finite(), "constant `{k}` must be finite");
        if seen.contains(k) || RESERVED.contains(&k.as_str()) {
            bail!("constant `{k}` clashes with a variable or reserved name");
        }
    }

    // slots: states, controls, tau
    let running: Vec<&str> = file.states.iter().chain(&file.controls).map(String::as_str).chain(["tau"]).collect();
    // slots: initial states, t0, final states, tf
    let endpoint_names: Vec<String> = file
        .states
        .iter()
        .map(|s| format!("{s}_0"))
        .chain(["t0".to_string()])
        .chain(file.states.iter().map(|s| format!("{s}_f")))
        .chain(["tf".to_string()])
        .collect();
    let endpoint: Vec<&str> = endpoint_names.iter().map(String::as_str).collect();

    let dynamics = file
        .dynamics
        .iter()
        .enumerate()
        .map(|(i, src)| {
            Expr::parse(src, &running, &constants).with_context(|| format!("dynamics of `{}`", file.states[i]))
        })
        .collect::<Result<Vec<_>>>()?;
    let dynamics = Arc::new(dynamics);

    let pack_running = move |x: &[f64], u: &[f64], tau: f64| {
        let mut v = Vec::with_capacity(x.len() + u.len() + 1);
        v.extend_from_slice(x);
        v.extend_from_slice(u);
        v.push(tau);
        v
    };
    let pack_endpoint = move |x0: &[f64], t0: f64, xf: &[f64], tf: f64| {
        let mut v = Vec::with_capacity(2 * x0.len() + 2);
        v.extend_from_slice(x0);
        v.push(t0);
        v.extend_from_slice(xf);
        v.push(tf);
        v
    };

    let name = file.name.clone().unwrap_or_else(|| default_name.to_string());
    let mut ocp = OcpDefinition::new(name, n_x, n_u, move |x, u, tau| {
        let vars = pack_running(x, u, tau);
        dynamics.iter().map(|e| e.eval(&vars)).collect()
    });

    if let Some(src) = &file.lagrange {
        let e = Expr::parse(src, &running, &constants).context("running cost")?;
        ocp = ocp.with_lagrange(move |x, u, tau| e.eval(&pack_running(x, u, tau)));
    }
    if let Some(src) = &file.mayer {
        let e = Expr::parse(src, &endpoint, &constants).context("endpoint cost")?;
        ocp = ocp.with_mayer(move |x0, t0, xf, tf| e.eval(&pack_endpoint(x0, t0, xf, tf)));
    }
    ensure!(
        file.lagrange.is_some() || file.mayer.is_some(),
        "an objective is required: give `lagrange`, `mayer`, or both"
    );
    if !file.path.is_empty() {
        let (rows, bounds) = parse_rows(&file.path, &running, &constants, "path")?;
        ocp = ocp.with_path(bounds, move |x, u, tau| {
            let vars = pack_running(x, u, tau);
            rows.iter().map(|e| e.eval(&vars)).collect()
        });
    }
    if !file.boundary.is_empty() {
        let (rows, bounds) = parse_rows(&file.boundary, &endpoint, &constants, "boundary")?;
        ocp = ocp.with_boundary(bounds, move |x0, t0, xf, tf| {
            let vars = pack_endpoint(x0, t0, xf, tf);
            rows.iter().map(|e| e.eval(&vars)).collect()
        });
    }

    let t0 = file.time.t0.as_ref().map(|t| t.spec("t0")).transpose()?.unwrap_or(TimeSpec::Fixed(0.0));
    let tf = file.time.tf.as_ref().map(|t| t.spec("tf")).transpose()?.unwrap_or(ocp.tf);
    ensure!(t0.bounds().0 < tf.bounds().1, "the horizon is empty: t0 cannot precede tf");

    Ok(ocp
        .with_times(t0, tf)
        .with_state_bounds(bounds_for(&file.states, &file.state_bounds, "state")?)
        .with_control_bounds(bounds_for(&file.controls, &file.control_bounds, "control")?)
        .with_initial_state(pinned(&file.states, &file.initial, "initial")?)
        .with_final_state(pinned(&file.states, &file.terminal, "final")?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOUBLE_INTEGRATOR: &str = r#"
        states = ["x", "v"]
        controls = ["u"]
        dynamics = ["v", "u * gain"]
        lagrange = "0.5 * u^2"
        mayer = "x_f - x_0 + tf"

        [constants]
        gain = 2.0

        [time]
        tf = { lower = 0.5, upper = 4.0, guess = 1.0 }

        [initial]
        x = 0.0

        [final]
        v = 0.0

        [state_bounds]
        v = [-inf, 3.0]

        [[path]]
        expr = "x + v + tau"
        lower = -1.0
        upper = 1.0

        [[boundary]]
        expr = "x_f"
        lower = 1.0
        upper = 1.0
    "#;

    #[test]
    fn compiles_every_callback() {
        let ocp = parse(DOUBLE_INTEGRATOR, "di").unwrap();
        assert_eq!(ocp.name, "di");
        assert_eq!((ocp.n_x, ocp.n_u), (2, 1));
        assert_eq!(ocp.dynamics(&[1.0, 2.0], &[3.0], 0.0), vec![2.0, 6.0]);
        assert_eq!(ocp.lagrange(&[0.0, 0.0], &[2.0], 0.0), 2.0);
        assert_eq!(ocp.mayer(&[1.0, 0.0], 0.0, &[4.0, 0.0], 2.0), 5.0);
        assert_eq!(ocp.path(&[1.0, 2.0], &[0.0], 0.5), vec![3.5]);
        assert_eq!(ocp.tf, TimeSpec::Free { lower: 0.5, upper: 4.0, guess: Some(1.0) });
        assert_eq!(ocp.t0, TimeSpec::Fixed(0.0));
        assert_eq!(ocp.initial_state, vec![Some(0.0), None]);
        assert_eq!(ocp.final_state, vec![None, Some(0.0)]);
        assert_eq!(ocp.state_bounds[1], (f64::NEG_INFINITY, 3.0));
        assert_eq!(ocp.control_bounds[0], (f64::NEG_INFINITY, f64::INFINITY));
        // pinned initial x, pinned final v, then the general row
        assert_eq!(ocp.n_boundary(), 3);
    }

    #[test]
    fn rejects_bad_files() {
        let cases = [
            ("states = []\ndynamics = []\nlagrange = \"1\"", "at least one state"),
            ("states = [\"x\"]\ndynamics = []\nlagrange = \"1\"", "dynamics rows"),
            ("states = [\"x\"]\ndynamics = [\"y\"]\nlagrange = \"1\"", "unknown variable"),
            ("states = [\"x\"]\ndynamics = [\"x\"]", "objective is required"),
            ("states = [\"tau\"]\ndynamics = [\"1\"]\nlagrange = \"1\"", "reserved"),
            ("states = [\"x\", \"x\"]\ndynamics = [\"1\", \"1\"]\nlagrange = \"1\"", "twice"),
            ("states = [\"x\"]\ndynamics = [\"1\"]\nlagrange = \"1\"\n[initial]\ny = 1.0", "undeclared"),
            (
                "states = [\"x\"]\ndynamics = [\"1\"]\nlagrange = \"1\"\n[state_bounds]\nx = [2.0, 1.0]",
                "lower <= upper",
            ),
            ("states = [\"x\"]\ndynamics = [\"1\"]\nmayer = \"x\"", "unknown variable"),
            ("states = [\"x\"]\ndynamics = [\"1\"]\nlagrange = \"1\"\nbogus = 1", "unknown field"),
        ];
        for (text, needle) in cases {
            let err = format!("{:#}", parse(text, "p").unwrap_err());
            assert!(err.contains(needle), "`{text}` gave `{err}`, expected `{needle}`");
        }
    }
}
