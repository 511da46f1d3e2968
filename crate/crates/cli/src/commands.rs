//! Command implementations behind the subcommands.
//!
//! Each command takes a parsed [`RunConfig`] and returns the report text it
//! would print, so the binary and the integration tests share one code path.
//! CSV layouts:
//!
//! * `laplace hitting|joint|total|minimum`: `x,a,lambda,mu,value,abs_err,status`
//! * `laplace marginal`: `x,t,q,value,abs_err,status`
//! * `simulate`: `estimand,lambda,mu,mc_mean,stderr,n,censored_frac,seed,flagged`
//!
//! Rows are ordered by grid index, values formatted with the shortest
//! round-trip `f64` form, so output is reproducible byte for byte. Domain
//! violations of a single grid point (say `x <= a`) mark that row's status
//! instead of aborting the run.

use std::fmt::Write as _;

use cbi::classify::{classify, Polarity, Recurrence};
use cbi::sim::{self, McEstimate};
use cbi::transform::{self, TransformValue};
use cbi::{CbiError, CbiModel};

use crate::config::RunConfig;

/// Failures split by exit code: bad configuration (2) against a numerical
/// routine giving up mid-run (3).
#[derive(Debug)]
pub enum CmdError {
    Config(String),
    Numeric(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Config(_) => 2,
            CmdError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CmdError::Config(m) | CmdError::Numeric(m) => m,
        }
    }
}

fn lift(e: CbiError) -> CmdError {
    match e {
        CbiError::Numeric(m) => CmdError::Numeric(format!("numeric failure: {m}")),
        other => CmdError::Config(other.to_string()),
    }
}

fn build(cfg: &RunConfig) -> Result<CbiModel, CmdError> {
    cfg.build_model().map_err(CmdError::Config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplaceKind {
    Hitting,
    Joint,
    Total,
    Marginal,
    Minimum,
}

impl std::str::FromStr for LaplaceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hitting" => Ok(LaplaceKind::Hitting),
            "joint" => Ok(LaplaceKind::Joint),
            "total" => Ok(LaplaceKind::Total),
            "marginal" => Ok(LaplaceKind::Marginal),
            "minimum" => Ok(LaplaceKind::Minimum),
            other => Err(format!(
                "unknown transform kind `{other}` \
                 (expected hitting | joint | total | marginal | minimum)"
            )),
        }
    }
}

/// JSON classification report: criticality, long-run behaviour, boundary
/// polarity, the boundary point `v`, the effective drift `d`, and an
/// evidence trail of `(criterion, method, verdict)` entries.
pub fn cmd_classify(cfg: &RunConfig) -> Result<String, CmdError> {
    let model = build(cfg)?;
    let report = classify(&model).map_err(lift)?;

    let crit = format!("{:?}", model.criticality());
    let (longrun, longrun_note) = match &report.recurrence {
        Recurrence::PositiveRecurrent => ("PositiveRecurrent".to_string(), None),
        Recurrence::NullRecurrent => ("NullRecurrent".to_string(), None),
        Recurrence::Transient => ("Transient".to_string(), None),
        Recurrence::Undetermined { note } => ("Undetermined".to_string(), Some(note.clone())),
    };
    let polar = report.polarity == Polarity::Polar;

    // The trail records recurrence reasoning first; polarity reasoning
    // always opens with an effective-drift statement.
    let split = report
        .evidence
        .iter()
        .position(|l| l.starts_with("effective drift"))
        .unwrap_or(report.evidence.len());

    let mut evidence = Vec::new();
    evidence.push(serde_json::json!({
        "criterion": "criticality",
        "method": "sign of the branching mechanism's derivative at 0+",
        "verdict": crit,
    }));
    for line in &report.evidence[..split] {
        evidence.push(serde_json::json!({
            "criterion": "long-run behaviour",
            "method": line,
            "verdict": longrun,
        }));
    }
    for line in &report.evidence[split..] {
        evidence.push(serde_json::json!({
            "criterion": "boundary polarity",
            "method": line,
            "verdict": if polar { "Polar" } else { "NotPolar" },
        }));
    }

    let d = model.effective_drift();
    let mut out = serde_json::json!({
        "criticality": crit,
        "longrun": longrun,
        "boundary_polar": polar,
        "v": model.lower_boundary(),
        "d": if d.is_finite() {
            serde_json::json!(d)
        } else {
            serde_json::json!("inf")
        },
        "evidence": evidence,
    });
    if let Some(note) = longrun_note {
        out["longrun_note"] = serde_json::json!(note);
    }
    Ok(format!("{:#}\n", out))
}

fn push_row(out: &mut String, cells: &[String], result: Result<TransformValue, CbiError>) {
    for c in cells {
        out.push_str(c);
        out.push(',');
    }
    match result {
        Ok(tv) => {
            let _ = writeln!(out, "{},{},ok", tv.value, tv.abs_err);
        }
        Err(CbiError::Domain(_)) => out.push_str(",,domain_error\n"),
        Err(_) => out.push_str(",,numeric_error\n"),
    }
}

/// Transform tables over the config grids. Row order follows grid order:
/// `a` outermost, then `lambda`, then `mu` (or `t` then `q` for the
/// marginal law).
pub fn cmd_laplace(cfg: &RunConfig, kind: LaplaceKind) -> Result<String, CmdError> {
    let model = build(cfg)?;
    let g = &cfg.grid;
    let tol = cfg.quad.tol;
    let x = g.x;
    if g.a.is_empty() || g.lambda.is_empty() || g.mu.is_empty() || g.q.is_empty() || g.t.is_empty()
    {
        return Err(CmdError::Config("grid: arrays must be nonempty".into()));
    }

    let mut out = String::new();
    match kind {
        LaplaceKind::Marginal => {
            out.push_str("x,t,q,value,abs_err,status\n");
            for &t in &g.t {
                for &q in &g.q {
                    let cells = [x.to_string(), t.to_string(), q.to_string()];
                    push_row(
                        &mut out,
                        &cells,
                        transform::marginal_laplace(&model, x, q, t, tol),
                    );
                }
            }
        }
        LaplaceKind::Hitting => {
            out.push_str("x,a,lambda,mu,value,abs_err,status\n");
            for &a in &g.a {
                for &l in &g.lambda {
                    let cells = [
                        x.to_string(),
                        a.to_string(),
                        l.to_string(),
                        "0".to_string(),
                    ];
                    push_row(
                        &mut out,
                        &cells,
                        transform::hitting_time_laplace(&model, x, a, l, tol),
                    );
                }
            }
        }
        LaplaceKind::Joint => {
            out.push_str("x,a,lambda,mu,value,abs_err,status\n");
            for &a in &g.a {
                for &l in &g.lambda {
                    for &m in &g.mu {
                        let cells = [
                            x.to_string(),
                            a.to_string(),
                            l.to_string(),
                            m.to_string(),
                        ];
                        push_row(
                            &mut out,
                            &cells,
                            transform::joint_laplace(&model, x, a, l, m, tol),
                        );
                    }
                }
            }
        }
        LaplaceKind::Total => {
            out.push_str("x,a,lambda,mu,value,abs_err,status\n");
            for &a in &g.a {
                for &m in &g.mu {
                    let cells = [
                        x.to_string(),
                        a.to_string(),
                        "0".to_string(),
                        m.to_string(),
                    ];
                    push_row(
                        &mut out,
                        &cells,
                        transform::total_population_laplace(&model, x, a, m, tol),
                    );
                }
            }
        }
        LaplaceKind::Minimum => {
            out.push_str("x,a,lambda,mu,value,abs_err,status\n");
            for &a in &g.a {
                let cells = [
                    x.to_string(),
                    a.to_string(),
                    "0".to_string(),
                    "0".to_string(),
                ];
                push_row(&mut out, &cells, transform::minimum_cdf(&model, x, a, tol));
            }
        }
    }
    Ok(out)
}

fn push_estimate(out: &mut String, estimand: &str, lambda: f64, mu: f64, est: &McEstimate) {
    let frac = est.censored as f64 / est.n.max(1) as f64;
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{}",
        estimand,
        lambda,
        mu,
        est.mean,
        est.std_error,
        est.n,
        frac,
        est.seed,
        u8::from(est.flagged)
    );
}

/// Monte Carlo summaries for the configured estimands, one batch per
/// estimand where possible:
///
/// * `hitting` and `joint` share one batch armed at the first level in
///   `grid.a` and sweep the `lambda` (and `mu`) grids through the
///   reusable samples.
/// * `minimum` reports `P(inf X <= a)` per level in `grid.a`; the level
///   is reported in the `lambda` column.
/// * `marginal` reports `E[e^{-q X_t}]` per `(t, q)` grid point; `t` is
///   reported in the `mu` column and `q` in the `lambda` column.
///
/// Returns the summary CSV and, when `output.path_dump` is set, the dump
/// CSV `path_id,t,x` of every sampled path.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<(String, Option<String>), CmdError> {
    let model = build(cfg)?;
    let sim_cfg = cfg.sim_config().map_err(CmdError::Config)?;
    let g = &cfg.grid;
    if g.a.is_empty() {
        return Err(CmdError::Config("grid.a: must be nonempty".into()));
    }

    let mut out = String::from("estimand,lambda,mu,mc_mean,stderr,n,censored_frac,seed,flagged\n");
    for estimand in &cfg.sim.estimands {
        match estimand.as_str() {
            "hitting" | "joint" => {
                let a = g.a[0];
                let samples =
                    sim::mc_hitting_samples(&model, g.x, a, &sim_cfg).map_err(lift)?;
                if estimand == "hitting" {
                    for &l in &g.lambda {
                        let mut est = sim::mc_laplace(&samples, l, 0.0, sim_cfg.horizon);
                        est.seed = sim_cfg.seed;
                        push_estimate(&mut out, "hitting", l, 0.0, &est);
                    }
                } else {
                    for &l in &g.lambda {
                        for &m in &g.mu {
                            let mut est = sim::mc_laplace(&samples, l, m, sim_cfg.horizon);
                            est.seed = sim_cfg.seed;
                            push_estimate(&mut out, "joint", l, m, &est);
                        }
                    }
                }
            }
            "minimum" => {
                let ests = sim::mc_minimum_cdf(&model, g.x, &g.a, &sim_cfg).map_err(lift)?;
                for (&a, est) in g.a.iter().zip(&ests) {
                    push_estimate(&mut out, "minimum", a, 0.0, est);
                }
            }
            "marginal" => {
                for &t in &g.t {
                    for &q in &g.q {
                        let est =
                            sim::mc_marginal_laplace(&model, g.x, q, t, &sim_cfg).map_err(lift)?;
                        push_estimate(&mut out, "marginal", q, t, &est);
                    }
                }
            }
            other => {
                return Err(CmdError::Config(format!(
                    "sim.estimands: unknown estimand `{other}`"
                )))
            }
        }
    }

    let dump = if cfg.output.path_dump.is_some() {
        Some(dump_paths(cfg, &model)?)
    } else {
        None
    };
    Ok((out, dump))
}

fn dump_paths(cfg: &RunConfig, model: &CbiModel) -> Result<String, CmdError> {
    let sim_cfg = cfg.sim_config().map_err(CmdError::Config)?;
    let x = cfg.grid.x;
    let paths: Box<dyn Iterator<Item = cbi::Result<sim::PathSample>>> =
        if cfg.sim.scheme == "exact" {
            use cbi::{BranchingMechanism, ImmigrationMechanism};
            let (gamma, sigma2) = match model.psi {
                BranchingMechanism::Quadratic { gamma, sigma2 } => (gamma, sigma2),
                _ => {
                    return Err(CmdError::Config(
                        "sim.scheme: exact sampling requires a quadratic branching mechanism"
                            .into(),
                    ))
                }
            };
            let b = match model.phi {
                ImmigrationMechanism::None => 0.0,
                ImmigrationMechanism::LinearDrift { b } => b,
                _ => {
                    return Err(CmdError::Config(
                        "sim.scheme: exact sampling requires drift-only immigration".into(),
                    ))
                }
            };
            Box::new(sim::simulate_cir_exact(sigma2, gamma, b, x, &sim_cfg).map_err(lift)?)
        } else {
            Box::new(sim::simulate_euler(model, x, &sim_cfg).map_err(lift)?)
        };

    let mut out = String::from("path_id,t,x\n");
    for (id, path) in paths.enumerate() {
        let path = path.map_err(lift)?;
        for (t, v) in path.times.iter().zip(&path.values) {
            let _ = writeln!(out, "{id},{t},{v}");
        }
    }
    Ok(out)
}
