//! TOML run configuration.
//!
//! A config file has five sections, all but `[model]` optional:
//!
//! ```toml
//! [model]
//! psi = "quadratic"        # linear | quadratic | stable | mixed
//! gamma = 0.5
//! sigma2 = 2.0
//!
//! [model.immigration]
//! phi = "drift"            # none | drift | stable | derived | logtail | atoms
//! b = 1.0
//!
//! [grid]
//! x = 2.0
//! a = [1.0]
//! lambda = [0.25, 0.5, 1.0]
//!
//! [quad]
//! tol = 1e-9
//!
//! [sim]
//! scheme = "exact"         # exact | euler
//! paths = 20000
//! estimands = ["hitting"]
//!
//! [output]
//! dir = "out"
//! ```
//!
//! `parse` fails with the TOML span of the offending key. `build_model`
//! failures name the missing or invalid field. Every config serializes back
//! to TOML and reparses to an equal value, so normalized configs round-trip.

use cbi::sim::{Scheme, SimConfig};
use cbi::{BranchingMechanism, CbiModel, ImmigrationMechanism};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub quad: QuadSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// One of `linear`, `quadratic`, `stable`, `mixed`.
    pub psi: String,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub immigration: ImmigrationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImmigrationSection {
    /// One of `none`, `drift`, `stable`, `derived`, `logtail`, `atoms`.
    pub phi: String,
    #[serde(default)]
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dprime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<(f64, f64)>>,
}

impl Default for ImmigrationSection {
    fn default() -> Self {
        ImmigrationSection {
            phi: "none".into(),
            b: 0.0,
            dprime: None,
            beta: None,
            atoms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Starting state, shared by every command.
    #[serde(default = "d_x")]
    pub x: f64,
    /// Lower levels for hitting/joint/total/minimum transforms.
    #[serde(default = "d_a")]
    pub a: Vec<f64>,
    #[serde(default = "d_lambda")]
    pub lambda: Vec<f64>,
    #[serde(default = "d_mu")]
    pub mu: Vec<f64>,
    /// Laplace arguments for the marginal law.
    #[serde(default = "d_q")]
    pub q: Vec<f64>,
    /// Time points for the marginal law.
    #[serde(default = "d_t")]
    pub t: Vec<f64>,
}

fn d_x() -> f64 {
    2.0
}
fn d_a() -> Vec<f64> {
    vec![1.0]
}
fn d_lambda() -> Vec<f64> {
    vec![0.5]
}
fn d_mu() -> Vec<f64> {
    vec![0.0]
}
fn d_q() -> Vec<f64> {
    vec![1.0]
}
fn d_t() -> Vec<f64> {
    vec![1.0]
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            x: d_x(),
            a: d_a(),
            lambda: d_lambda(),
            mu: d_mu(),
            q: d_q(),
            t: d_t(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSection {
    #[serde(default = "d_tol")]
    pub tol: f64,
}

fn d_tol() -> f64 {
    1e-9
}

impl Default for QuadSection {
    fn default() -> Self {
        QuadSection { tol: d_tol() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    /// `exact` (CIR only) or `euler`.
    #[serde(default = "d_scheme")]
    pub scheme: String,
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(default = "d_horizon")]
    pub horizon: f64,
    #[serde(default = "d_paths")]
    pub paths: usize,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default)]
    pub stream_offset: u64,
    #[serde(default = "d_cutoff")]
    pub small_jump_cutoff: f64,
    #[serde(default)]
    pub gaussian_small_jump_correction: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escape_level: Option<f64>,
    /// Which Monte Carlo estimates `simulate` reports: any of `hitting`,
    /// `joint`, `minimum`, `marginal`.
    #[serde(default = "d_estimands")]
    pub estimands: Vec<String>,
}

fn d_scheme() -> String {
    "euler".into()
}
fn d_dt() -> f64 {
    SimConfig::default().dt
}
fn d_horizon() -> f64 {
    SimConfig::default().horizon
}
fn d_paths() -> usize {
    SimConfig::default().path_count
}
fn d_seed() -> u64 {
    SimConfig::default().seed
}
fn d_cutoff() -> f64 {
    SimConfig::default().small_jump_cutoff
}
fn d_estimands() -> Vec<String> {
    vec!["hitting".into()]
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            scheme: d_scheme(),
            dt: d_dt(),
            horizon: d_horizon(),
            paths: d_paths(),
            seed: d_seed(),
            stream_offset: 0,
            small_jump_cutoff: d_cutoff(),
            gaussian_small_jump_correction: false,
            escape_level: None,
            estimands: d_estimands(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Directory that relative `--out` paths and path dumps resolve under.
    /// The environment variable `CBI_OUT_DIR` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// When set, `simulate` writes every sampled path to this CSV file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_dump: Option<String>,
}

impl RunConfig {
    /// Parse TOML text. Errors carry the offending line and key.
    pub fn parse(text: &str) -> Result<RunConfig, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        if !(self.grid.x.is_finite() && self.grid.x > 0.0) {
            return Err(format!("grid.x: must be positive and finite, got {}", self.grid.x));
        }
        if !(self.quad.tol.is_finite() && self.quad.tol > 0.0) {
            return Err(format!("quad.tol: must be positive, got {}", self.quad.tol));
        }
        for name in &self.sim.estimands {
            match name.as_str() {
                "hitting" | "joint" | "minimum" | "marginal" => {}
                other => {
                    return Err(format!(
                        "sim.estimands: unknown estimand `{other}` \
                         (expected hitting | joint | minimum | marginal)"
                    ))
                }
            }
        }
        match self.sim.scheme.as_str() {
            "exact" | "euler" => {}
            other => {
                return Err(format!(
                    "sim.scheme: unknown scheme `{other}` (expected exact | euler)"
                ))
            }
        }
        // Mechanism field errors should surface at load time, not mid-run.
        self.build_model()?;
        self.sim_config()?;
        Ok(())
    }

    /// Serialize back to TOML. Composing with `parse` is the identity.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn build_model(&self) -> Result<CbiModel, String> {
        let m = &self.model;
        let need = |opt: Option<f64>, field: &str| {
            opt.ok_or_else(|| format!("model.{field}: required for psi = \"{}\"", m.psi))
        };
        let psi = match m.psi.as_str() {
            "linear" => BranchingMechanism::Linear { gamma: m.gamma },
            "quadratic" => BranchingMechanism::Quadratic {
                gamma: m.gamma,
                sigma2: need(m.sigma2, "sigma2")?,
            },
            "stable" => BranchingMechanism::Stable {
                gamma: m.gamma,
                d: need(m.d, "d")?,
                alpha: need(m.alpha, "alpha")?,
            },
            "mixed" => BranchingMechanism::Mixed {
                gamma: m.gamma,
                sigma2: need(m.sigma2, "sigma2")?,
                d: need(m.d, "d")?,
                alpha: need(m.alpha, "alpha")?,
            },
            other => {
                return Err(format!(
                    "model.psi: unknown form `{other}` \
                     (expected linear | quadratic | stable | mixed)"
                ))
            }
        };
        let im = &m.immigration;
        let ineed = |opt: Option<f64>, field: &str| {
            opt.ok_or_else(|| {
                format!("model.immigration.{field}: required for phi = \"{}\"", im.phi)
            })
        };
        let phi = match im.phi.as_str() {
            "none" => ImmigrationMechanism::None,
            "drift" => ImmigrationMechanism::LinearDrift { b: im.b },
            "stable" => ImmigrationMechanism::Stable {
                b: im.b,
                dprime: ineed(im.dprime, "dprime")?,
                beta: ineed(im.beta, "beta")?,
            },
            "derived" => ImmigrationMechanism::DerivedFromPsi,
            "logtail" => ImmigrationMechanism::LogTail,
            "atoms" => ImmigrationMechanism::Atoms {
                b: im.b,
                atoms: im.atoms.clone().ok_or_else(|| {
                    "model.immigration.atoms: required for phi = \"atoms\"".to_string()
                })?,
            },
            other => {
                return Err(format!(
                    "model.immigration.phi: unknown form `{other}` \
                     (expected none | drift | stable | derived | logtail | atoms)"
                ))
            }
        };
        CbiModel::new(psi, phi).map_err(|e| format!("model: {e}"))
    }

    pub fn sim_config(&self) -> Result<SimConfig, String> {
        let s = &self.sim;
        let cfg = SimConfig {
            scheme: match s.scheme.as_str() {
                "exact" => Scheme::ExactCir,
                _ => Scheme::EulerFullTruncation,
            },
            dt: s.dt,
            horizon: s.horizon,
            path_count: s.paths,
            seed: s.seed,
            stream_offset: s.stream_offset,
            small_jump_cutoff: s.small_jump_cutoff,
            gaussian_small_jump_correction: s.gaussian_small_jump_correction,
            escape_level: s.escape_level,
        };
        cfg.validate().map_err(|e| format!("sim: {e}"))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
        [model]
        psi = "quadratic"
        gamma = 0.5
        sigma2 = 2.0

        [model.immigration]
        phi = "drift"
        b = 1.0

        [grid]
        x = 2.0
        a = [1.0, 1.5]
        lambda = [0.25, 0.5, 1.0]
        mu = [0.0]
        q = [1.0]
        t = [0.5, 1.5]

        [quad]
        tol = 1e-10

        [sim]
        scheme = "exact"
        dt = 0.001
        horizon = 20.0
        paths = 50000
        seed = 7
        stream_offset = 3
        small_jump_cutoff = 0.001
        gaussian_small_jump_correction = false
        estimands = ["hitting", "joint"]

        [output]
        dir = "out"
    "#;

    #[test]
    fn full_config_round_trips() {
        let cfg = RunConfig::parse(FULL).unwrap();
        let again = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        let m1 = format!("{:?}", cfg.build_model().unwrap());
        let m2 = format!("{:?}", again.build_model().unwrap());
        assert_eq!(m1, m2);
    }

    #[test]
    fn defaults_fill_every_optional_section() {
        let cfg = RunConfig::parse("[model]\npsi = \"linear\"\ngamma = 1.0\n").unwrap();
        assert_eq!(cfg.grid.x, 2.0);
        assert_eq!(cfg.quad.tol, 1e-9);
        assert_eq!(cfg.sim.paths, 10_000);
        assert_eq!(cfg.sim.estimands, vec!["hitting".to_string()]);
        assert!(cfg.build_model().unwrap().phi.is_zero());
        let again = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected_with_context() {
        let err = RunConfig::parse("[model]\npsi = \"linear\"\ngamna = 1.0\n").unwrap_err();
        assert!(err.contains("gamna"), "{err}");

        let err = RunConfig::parse("[model]\npsi = \"cubic\"\n").unwrap_err();
        assert!(err.contains("cubic"), "{err}");

        let err = RunConfig::parse("[model]\npsi = \"quadratic\"\n").unwrap_err();
        assert!(err.contains("model.sigma2"), "{err}");

        let err = RunConfig::parse(
            "[model]\npsi = \"quadratic\"\nsigma2 = 2.0\n[sim]\ndt = -0.5\n",
        )
        .unwrap_err();
        assert!(err.starts_with("sim:"), "{err}");

        let err = RunConfig::parse(
            "[model]\npsi = \"quadratic\"\nsigma2 = 2.0\n[sim]\nestimands = [\"median\"]\n",
        )
        .unwrap_err();
        assert!(err.contains("median"), "{err}");
    }

    #[test]
    fn atoms_immigration_parses_as_pairs() {
        let cfg = RunConfig::parse(
            "[model]\npsi = \"linear\"\ngamma = 1.0\n\
             [model.immigration]\nphi = \"atoms\"\nb = 0.3\natoms = [[0.5, 0.4], [1.5, 0.2]]\n",
        )
        .unwrap();
        let model = cfg.build_model().unwrap();
        assert!((model.lower_boundary() - 0.3).abs() < 1e-12);
        let again = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }
}
