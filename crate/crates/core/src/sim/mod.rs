//! Monte Carlo simulation of CBI paths: hitting times, running minima,
//! occupation integrals, and terminal marginals, with reproducible
//! parallel sampling.
//!
//! Two schemes: exact grid transitions for the diffusion mechanism with
//! drift immigration (`Scheme::ExactCir`), and full-truncation Euler with
//! compound-Poisson jumps for the other catalog models. Within-step
//! behaviour is recovered by a Brownian-bridge minimum draw with a frozen
//! diffusion coefficient: the same draw yields the bridge-corrected
//! running minimum and the downward-crossing test for hitting times.
//!
//! Reproducibility contract: path `i` of a run uses an independent
//! counter-based stream at index `stream_offset + i`, so results are
//! identical across thread counts; estimates aggregate through
//! compensated sums in path order.

mod gamma;
mod kernel;

use crate::error::{CbiError, Result};
use crate::mechanism::{BranchingMechanism, CbiModel, ImmigrationMechanism};
use crate::quad::compensated_sum;
use kernel::Kernel;
use rand::{Rng, SeedableRng};
pub use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Transition scheme for path generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Exact grid transitions; diffusion mechanism with drift immigration
    /// only.
    ExactCir,
    /// Full-truncation Euler with restricted compound-Poisson jumps.
    EulerFullTruncation,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub scheme: Scheme,
    /// grid step
    pub dt: f64,
    /// time horizon per path
    pub horizon: f64,
    pub path_count: usize,
    pub seed: u64,
    /// first RNG stream index; path `i` uses `stream_offset + i`
    pub stream_offset: u64,
    /// jump sizes below this are folded into the drift
    pub small_jump_cutoff: f64,
    /// fold the variance of discarded small jumps into the diffusion term
    /// (off by default: the drift-only folding keeps the scheme simple and
    /// the acceptance runs deterministic)
    pub gaussian_small_jump_correction: bool,
    /// stop a minimum-law path once it rises this high; `None` means
    /// `50 * x0`
    pub escape_level: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            scheme: Scheme::EulerFullTruncation,
            dt: 1e-2,
            horizon: 10.0,
            path_count: 10_000,
            seed: 1,
            stream_offset: 0,
            small_jump_cutoff: 1e-3,
            gaussian_small_jump_correction: false,
            escape_level: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(CbiError::domain("dt must be positive and finite"));
        }
        if !(self.horizon >= self.dt) {
            return Err(CbiError::domain("horizon must be at least one step"));
        }
        if self.path_count == 0 {
            return Err(CbiError::domain("path_count must be at least 1"));
        }
        if !(self.small_jump_cutoff > 0.0) {
            return Err(CbiError::domain("small_jump_cutoff must be positive"));
        }
        Ok(())
    }
}

/// One simulated path on its grid, with derived statistics.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// first passage below the armed level, bridge-corrected; `None` when
    /// no level was armed or the path never crossed
    pub hit_time: Option<f64>,
    /// occupation integral up to the hit (meaningful when `hit_time` is set)
    pub hit_occupation: f64,
    /// bridge-corrected running minimum
    pub running_min: f64,
    /// trapezoid integral of the path up to its stop time
    pub occupation: f64,
    /// an armed level was not resolved within the horizon
    pub censored: bool,
    /// the path stopped by rising through the escape level
    pub escaped: bool,
}

/// A hitting observation for Laplace estimation: `Some((time,
/// occupation))`, or `None` for a path censored at the horizon.
#[derive(Debug, Clone, Copy)]
pub struct McSample {
    pub hit: Option<(f64, f64)>,
}

/// Monte Carlo estimate with provenance and censoring diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub mean: f64,
    /// sample standard deviation over sqrt(n)
    pub std_error: f64,
    pub n: usize,
    pub censored: usize,
    /// upper bound on the bias from zeroing censored paths
    pub censor_bias_bound: f64,
    /// censoring bias bound is not safely below the statistical error
    pub flagged: bool,
    pub seed: u64,
    pub stream_offset: u64,
}

/// The independent generator for one path: same `(seed, stream)` always
/// yields the same draws, and distinct streams are independent, so path
/// outputs do not depend on how work is scheduled.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct RawOutcome {
    hit: Option<(f64, f64)>,
    occupation: f64,
    minimum: f64,
    final_value: f64,
    escaped: bool,
}

/// Advance one path to its stop time: armed-level hit, escape-level exit,
/// or the horizon. `record` collects the grid when a full sample is wanted.
fn simulate_one<R: Rng>(
    kernel: &Kernel,
    x0: f64,
    level: Option<f64>,
    escape: Option<f64>,
    cfg: &SimConfig,
    rng: &mut R,
    mut record: Option<&mut (Vec<f64>, Vec<f64>)>,
) -> Result<RawOutcome> {
    if let Some((ts, xs)) = record.as_deref_mut() {
        ts.push(0.0);
        xs.push(x0);
    }
    if let Some(a) = level {
        if x0 <= a {
            return Ok(RawOutcome {
                hit: Some((0.0, 0.0)),
                occupation: 0.0,
                minimum: x0,
                final_value: x0,
                escaped: false,
            });
        }
    }

    let mut x = x0;
    let mut t = 0.0;
    let mut occupation = 0.0;
    let mut minimum = x0;

    while t < cfg.horizon - 1e-12 * cfg.horizon {
        let dt = cfg.dt.min(cfg.horizon - t);
        let x1 = kernel.step(x, dt, rng)?;

        // bridge minimum with the diffusion coefficient frozen mid-step;
        // exact for Brownian motion, an O(dt) correction here
        let grid_min = x.min(x1);
        let s2 = kernel.diffusion(0.5 * (x + x1));
        let step_min = if s2 > 0.0 {
            let u: f64 = 1.0 - rng.gen::<f64>();
            let d = x1 - x;
            let m = 0.5 * (x + x1 - (d * d - 2.0 * s2 * dt * u.ln()).sqrt());
            m.min(grid_min).max(0.0)
        } else {
            grid_min
        };
        minimum = minimum.min(step_min);

        if let Some(a) = level {
            if x1 <= a {
                // grid crossing: linear interpolation inside the step
                let frac = if x > x1 { ((x - a) / (x - x1)).clamp(0.0, 1.0) } else { 1.0 };
                let tau = t + frac * dt;
                return Ok(RawOutcome {
                    hit: Some((tau, occupation + 0.5 * (x + a) * frac * dt)),
                    occupation: occupation + 0.5 * (x + a) * frac * dt,
                    minimum: minimum.min(a),
                    final_value: a,
                    escaped: false,
                });
            }
            if step_min <= a {
                // bridge crossing between two above-level endpoints
                let tau = t + 0.5 * dt;
                return Ok(RawOutcome {
                    hit: Some((tau, occupation + 0.5 * (x + a) * 0.5 * dt)),
                    occupation: occupation + 0.5 * (x + a) * 0.5 * dt,
                    minimum: minimum.min(a),
                    final_value: a,
                    escaped: false,
                });
            }
        }

        occupation += 0.5 * (x + x1) * dt;
        t += dt;
        x = x1;
        if let Some((ts, xs)) = record.as_deref_mut() {
            ts.push(t);
            xs.push(x);
        }
        if let Some(l) = escape {
            if x >= l {
                return Ok(RawOutcome {
                    hit: None,
                    occupation,
                    minimum,
                    final_value: x,
                    escaped: true,
                });
            }
        }
    }

    Ok(RawOutcome {
        hit: None,
        occupation,
        minimum,
        final_value: x,
        escaped: false,
    })
}

/// Run all paths in parallel, outcomes in path order.
fn run_outcomes(
    model: &CbiModel,
    x0: f64,
    level: Option<f64>,
    escape: Option<f64>,
    cfg: &SimConfig,
) -> Result<Vec<RawOutcome>> {
    cfg.validate()?;
    if !(x0 >= 0.0 && x0.is_finite()) {
        return Err(CbiError::domain("start point must be nonnegative and finite"));
    }
    let kernel = Kernel::build(model, cfg)?;
    (0..cfg.path_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_stream(cfg.seed, cfg.stream_offset + i as u64);
            simulate_one(&kernel, x0, level, escape, cfg, &mut rng, None)
        })
        .collect()
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = compensated_sum(&sq) / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Mean of `exp(-lambda t - mu w)` over hit samples `(t, w)`, censored
/// paths contributing zero. The recorded bias bound is
/// `censored_frac * exp(-lambda horizon)`; the estimate is flagged when
/// that bound is not safely below the statistical error.
pub fn mc_laplace(samples: &[McSample], lambda: f64, mu: f64, horizon: f64) -> McEstimate {
    let values: Vec<f64> = samples
        .iter()
        .map(|s| match s.hit {
            Some((t, w)) => (-lambda * t - mu * w).exp(),
            None => 0.0,
        })
        .collect();
    let censored = samples.iter().filter(|s| s.hit.is_none()).count();
    let (mean, std_error) = mean_and_stderr(&values);
    let frac = censored as f64 / samples.len().max(1) as f64;
    let censor_bias_bound = frac * (-lambda * horizon).exp();
    McEstimate {
        mean,
        std_error,
        n: samples.len(),
        censored,
        censor_bias_bound,
        flagged: censor_bias_bound > std_error.max(1e-12),
        seed: 0,
        stream_offset: 0,
    }
}

/// One batch of level-armed paths reduced to their hitting observations,
/// reusable across any number of `(lambda, mu)` evaluations through
/// [`mc_laplace`].
pub fn mc_hitting_samples(
    model: &CbiModel,
    x0: f64,
    a: f64,
    cfg: &SimConfig,
) -> Result<Vec<McSample>> {
    let outcomes = run_outcomes(model, x0, Some(a), None, cfg)?;
    Ok(outcomes.iter().map(|o| McSample { hit: o.hit }).collect())
}

/// `E[e^{-lambda sigma_a - mu I(sigma_a)}]` by simulation, with the level
/// crossing bridge-corrected.
pub fn mc_hitting_laplace(
    model: &CbiModel,
    x0: f64,
    a: f64,
    lambda: f64,
    mu: f64,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    if !(lambda >= 0.0 && mu >= 0.0) {
        return Err(CbiError::domain("rates must be nonnegative"));
    }
    let samples = mc_hitting_samples(model, x0, a, cfg)?;
    let mut est = mc_laplace(&samples, lambda, mu, cfg.horizon);
    est.seed = cfg.seed;
    est.stream_offset = cfg.stream_offset;
    Ok(est)
}

/// `P(inf X <= a)` for each requested level from one batch of paths. The
/// run arms the lowest level and stops a path once it resolves every
/// level (crossing the lowest) or rises through the escape level; paths
/// that do neither within the horizon count as censored.
pub fn mc_minimum_cdf(
    model: &CbiModel,
    x0: f64,
    levels: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<McEstimate>> {
    if levels.is_empty() {
        return Err(CbiError::domain("need at least one level"));
    }
    let lowest = levels.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(lowest >= 0.0) {
        return Err(CbiError::domain("levels must be nonnegative"));
    }
    let escape = cfg.escape_level.unwrap_or(50.0 * x0);
    let outcomes = run_outcomes(model, x0, Some(lowest), Some(escape), cfg)?;
    let censored = outcomes.iter().filter(|o| o.hit.is_none() && !o.escaped).count();
    let frac = censored as f64 / outcomes.len() as f64;
    Ok(levels
        .iter()
        .map(|&a| {
            let values: Vec<f64> = outcomes
                .iter()
                .map(|o| if o.minimum <= a { 1.0 } else { 0.0 })
                .collect();
            let (mean, std_error) = mean_and_stderr(&values);
            McEstimate {
                mean,
                std_error,
                n: outcomes.len(),
                censored,
                censor_bias_bound: frac,
                flagged: frac > std_error.max(1e-12),
                seed: cfg.seed,
                stream_offset: cfg.stream_offset,
            }
        })
        .collect())
}

/// `E[e^{-q X_t}]` by simulation.
pub fn mc_marginal_laplace(
    model: &CbiModel,
    x0: f64,
    q: f64,
    t: f64,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    if !(q >= 0.0 && t > 0.0) {
        return Err(CbiError::domain("need q >= 0 and t > 0"));
    }
    let mut local = cfg.clone();
    local.horizon = t;
    let outcomes = run_outcomes(model, x0, None, None, &local)?;
    let values: Vec<f64> = outcomes.iter().map(|o| (-q * o.final_value).exp()).collect();
    let (mean, std_error) = mean_and_stderr(&values);
    Ok(McEstimate {
        mean,
        std_error,
        n: outcomes.len(),
        censored: 0,
        censor_bias_bound: 0.0,
        flagged: false,
        seed: cfg.seed,
        stream_offset: cfg.stream_offset,
    })
}

fn record_paths(
    model: &CbiModel,
    x0: f64,
    cfg: &SimConfig,
) -> Result<impl Iterator<Item = Result<PathSample>>> {
    cfg.validate()?;
    if !(x0 >= 0.0 && x0.is_finite()) {
        return Err(CbiError::domain("start point must be nonnegative and finite"));
    }
    let kernel = Kernel::build(model, cfg)?;
    let cfg = cfg.clone();
    Ok((0..cfg.path_count).map(move |i| {
        let mut rng = rng_stream(cfg.seed, cfg.stream_offset + i as u64);
        let mut grid = (Vec::new(), Vec::new());
        let out = simulate_one(&kernel, x0, None, None, &cfg, &mut rng, Some(&mut grid))?;
        Ok(PathSample {
            times: grid.0,
            values: grid.1,
            hit_time: None,
            hit_occupation: 0.0,
            running_min: out.minimum,
            occupation: out.occupation,
            censored: false,
            escaped: out.escaped,
        })
    }))
}

/// Full-grid paths of the diffusion mechanism `(sigma2, gamma)` with
/// drift immigration `b`, sampled by the exact transition law: the grid
/// marginals carry no discretization bias.
pub fn simulate_cir_exact(
    sigma2: f64,
    gamma: f64,
    b: f64,
    x0: f64,
    cfg: &SimConfig,
) -> Result<impl Iterator<Item = Result<PathSample>>> {
    let psi = BranchingMechanism::Quadratic { gamma, sigma2 };
    let phi = if b == 0.0 {
        ImmigrationMechanism::None
    } else {
        ImmigrationMechanism::LinearDrift { b }
    };
    let model = CbiModel::new(psi, phi)?;
    let mut local = cfg.clone();
    local.scheme = Scheme::ExactCir;
    record_paths(&model, x0, &local)
}

/// Full-grid paths of any catalog model by full-truncation Euler.
pub fn simulate_euler(
    model: &CbiModel,
    x0: f64,
    cfg: &SimConfig,
) -> Result<impl Iterator<Item = Result<PathSample>>> {
    let mut local = cfg.clone();
    local.scheme = Scheme::EulerFullTruncation;
    record_paths(model, x0, &local)
}

/// First grid time with value <= a, refined by linear interpolation
/// within the bracketing step. Grid-level only: the bridge-corrected
/// crossing lives in the level-armed estimators.
pub fn estimate_hitting_time(path: &PathSample, a: f64) -> Option<f64> {
    if path.values.is_empty() {
        return None;
    }
    if path.values[0] <= a {
        return Some(0.0);
    }
    for k in 1..path.values.len() {
        let prev = path.values[k - 1];
        let cur = path.values[k];
        if cur <= a {
            let dt = path.times[k] - path.times[k - 1];
            let frac = if prev > cur {
                ((prev - a) / (prev - cur)).clamp(0.0, 1.0)
            } else {
                1.0
            };
            return Some(path.times[k - 1] + frac * dt);
        }
    }
    None
}

/// The path's bridge-corrected running minimum.
pub fn estimate_minimum(path: &PathSample) -> f64 {
    path.running_min
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform;

    fn cir_cfg(n: usize, dt: f64, horizon: f64, seed: u64) -> SimConfig {
        SimConfig {
            scheme: Scheme::ExactCir,
            dt,
            horizon,
            path_count: n,
            seed,
            ..SimConfig::default()
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut r = rng_stream(42, 7);
            (0..1000).map(|_| r.gen::<u64>()).collect()
        };
        let b: Vec<u64> = {
            let mut r = rng_stream(42, 7);
            (0..1000).map(|_| r.gen::<u64>()).collect()
        };
        assert_eq!(a, b);
        let c: Vec<u64> = {
            let mut r = rng_stream(42, 8);
            (0..1000).map(|_| r.gen::<u64>()).collect()
        };
        assert_ne!(a, c);
    }

    #[test]
    fn identical_configs_reproduce_estimates_exactly() {
        let model = CbiModel::cir(2.0, 0.5).unwrap();
        let cfg = cir_cfg(500, 0.02, 8.0, 9);
        let e1 = mc_hitting_laplace(&model, 2.0, 1.0, 0.5, 0.0, &cfg).unwrap();
        let e2 = mc_hitting_laplace(&model, 2.0, 1.0, 0.5, 0.0, &cfg).unwrap();
        assert_eq!(e1.mean.to_bits(), e2.mean.to_bits());
        assert_eq!(e1.std_error.to_bits(), e2.std_error.to_bits());
        let mut other = cfg;
        other.seed = 10;
        let e3 = mc_hitting_laplace(&model, 2.0, 1.0, 0.5, 0.0, &other).unwrap();
        assert_ne!(e1.mean.to_bits(), e3.mean.to_bits());
    }

    #[test]
    fn laplace_estimator_trivial_cases() {
        let zeros = vec![McSample { hit: Some((0.0, 0.0)) }; 50];
        let e = mc_laplace(&zeros, 1.0, 0.0, 10.0);
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.std_error, 0.0);
        assert!(!e.flagged);

        let lambda = 0.7;
        let halves = vec![McSample { hit: Some((2f64.ln() / lambda, 0.0)) }; 50];
        let e = mc_laplace(&halves, lambda, 0.0, 10.0);
        assert!((e.mean - 0.5).abs() < 1e-15);

        let censored = vec![McSample { hit: None }; 10];
        let e = mc_laplace(&censored, 0.1, 0.0, 5.0);
        assert_eq!(e.mean, 0.0);
        assert!(e.flagged, "all-censored estimate must be flagged");
    }

    #[test]
    fn exact_marginal_matches_transform() {
        // E e^{-q X_t} for the critical diffusion against the flow formula
        let model = CbiModel::cir(2.0, 1.0).unwrap();
        let want = transform::marginal_laplace(&model, 1.5, 1.0, 1.0, 1e-10)
            .unwrap()
            .value;
        let cfg = cir_cfg(30_000, 0.25, 1.0, 5);
        let est = mc_marginal_laplace(&model, 1.5, 1.0, 1.0, &cfg).unwrap();
        assert!(
            (est.mean - want).abs() < 3.0 * est.std_error,
            "mc {} vs transform {want}, stderr {}",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn euler_marginal_matches_exact_scheme() {
        let model = CbiModel::cir(2.0, 1.0).unwrap();
        let exact = mc_marginal_laplace(&model, 1.0, 1.0, 1.0, &cir_cfg(20_000, 1e-3, 1.0, 6)).unwrap();
        let mut euler_cfg = cir_cfg(20_000, 1e-3, 1.0, 6);
        euler_cfg.scheme = Scheme::EulerFullTruncation;
        let euler = mc_marginal_laplace(&model, 1.0, 1.0, 1.0, &euler_cfg).unwrap();
        let joint = (exact.std_error.powi(2) + euler.std_error.powi(2)).sqrt();
        assert!(
            (exact.mean - euler.mean).abs() < 3.0 * joint,
            "exact {} vs euler {}, joint stderr {joint}",
            exact.mean,
            euler.mean
        );
    }

    #[test]
    fn euler_marginal_matches_transform_on_jump_models() {
        // branch jump sampler with bounded immigration; the branch
        // intensity scales with the state, so the thin alpha = 1.9 tail
        // plus subcritical pull keeps the intensity gate open
        let model = CbiModel::new(
            BranchingMechanism::Stable {
                gamma: 0.8,
                d: 0.4,
                alpha: 1.9,
            },
            ImmigrationMechanism::LinearDrift { b: 0.3 },
        )
        .unwrap();
        let want = transform::marginal_laplace(&model, 1.0, 1.0, 0.5, 1e-9)
            .unwrap()
            .value;
        let cfg = SimConfig {
            dt: 1e-4,
            horizon: 0.5,
            path_count: 1500,
            seed: 12,
            small_jump_cutoff: 0.05,
            gaussian_small_jump_correction: true,
            ..SimConfig::default()
        };
        let est = mc_marginal_laplace(&model, 1.0, 1.0, 0.5, &cfg).unwrap();
        assert!(
            (est.mean - want).abs() < 4.0 * est.std_error + 0.01,
            "mc {} vs transform {want}, stderr {}",
            est.mean,
            est.std_error
        );

        // fat-tail immigration (infinite-mean jumps) over a jump-free
        // branching part: the gate is a constant and huge excursions are
        // routine but harmless for the marginal
        let fat = CbiModel::new(
            BranchingMechanism::Quadratic {
                gamma: 0.8,
                sigma2: 1.0,
            },
            ImmigrationMechanism::Stable {
                b: 0.1,
                dprime: 0.3,
                beta: 0.5,
            },
        )
        .unwrap();
        let want = transform::marginal_laplace(&fat, 1.0, 1.0, 0.5, 1e-9)
            .unwrap()
            .value;
        let cfg = SimConfig {
            dt: 5e-4,
            horizon: 0.5,
            path_count: 3000,
            seed: 14,
            ..SimConfig::default()
        };
        let est = mc_marginal_laplace(&fat, 1.0, 1.0, 0.5, &cfg).unwrap();
        assert!(
            (est.mean - want).abs() < 4.0 * est.std_error + 0.01,
            "mc {} vs transform {want}, stderr {}",
            est.mean,
            est.std_error
        );

        // heavy-tail immigration: rare enormous jumps, most paths decay
        let heavy = CbiModel::new(
            BranchingMechanism::Quadratic {
                gamma: 0.5,
                sigma2: 2.0,
            },
            ImmigrationMechanism::LogTail,
        )
        .unwrap();
        let want = transform::marginal_laplace(&heavy, 1.0, 1.0, 1.0, 1e-9)
            .unwrap()
            .value;
        let cfg = SimConfig {
            dt: 1e-3,
            horizon: 1.0,
            path_count: 4000,
            seed: 13,
            ..SimConfig::default()
        };
        let est = mc_marginal_laplace(&heavy, 1.0, 1.0, 1.0, &cfg).unwrap();
        assert!(
            (est.mean - want).abs() < 4.0 * est.std_error + 0.01,
            "mc {} vs transform {want}, stderr {}",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn deterministic_decay_hits_on_schedule() {
        // pure decay: X_t = x e^{-gamma t}, crossing of a at ln(x/a)/gamma
        let model = CbiModel::pure(BranchingMechanism::Linear { gamma: 1.0 }).unwrap();
        let cfg = SimConfig {
            dt: 1e-3,
            horizon: 2.0,
            path_count: 1,
            seed: 4,
            ..SimConfig::default()
        };
        let path = simulate_euler(&model, 2.0, &cfg)
            .unwrap()
            .next()
            .unwrap()
            .unwrap();
        let hit = estimate_hitting_time(&path, 1.0).unwrap();
        assert!(
            (hit - 2f64.ln()).abs() < cfg.dt,
            "hit {hit} vs {}",
            2f64.ln()
        );
        // a monotone decreasing path started below never reports a hit
        // above itself
        assert!(estimate_hitting_time(&path, 3.0) == Some(0.0));
        assert!(estimate_hitting_time(&path, 0.1).is_none());
    }

    #[test]
    fn decay_between_unit_jumps_is_piecewise_exponential() {
        // unit point-mass immigration on pure decay: between jumps each
        // Euler step multiplies by exactly (1 - gamma dt)
        let model = CbiModel::new(
            BranchingMechanism::Linear { gamma: 1.0 },
            ImmigrationMechanism::Atoms {
                b: 0.0,
                atoms: vec![(1.0, 1.0)],
            },
        )
        .unwrap();
        let cfg = SimConfig {
            dt: 1e-3,
            horizon: 5.0,
            path_count: 1,
            seed: 8,
            ..SimConfig::default()
        };
        let path = simulate_euler(&model, 0.0, &cfg)
            .unwrap()
            .next()
            .unwrap()
            .unwrap();
        let mut jumps = 0usize;
        for k in 1..path.values.len() {
            let residual = path.values[k] - path.values[k - 1] * (1.0 - cfg.dt);
            let jump_count = residual.round();
            assert!(
                (residual - jump_count).abs() < 1e-9,
                "step {k}: residual {residual} is not a whole number of unit jumps"
            );
            jumps += jump_count as usize;
        }
        assert!(jumps > 0, "a rate-1 sampler should jump within 5 time units");
        assert!(path.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn bounded_variation_paths_respect_the_drift_floor() {
        // bounded-variation preset: effective drift d = gamma, boundary
        // v = b/d; every grid value stays above the deterministic floor
        // e^{-d t} x + v (1 - e^{-d t}) up to Euler slack
        let gamma = 1.0;
        let b = 0.3;
        let model = CbiModel::new(
            BranchingMechanism::Linear { gamma },
            ImmigrationMechanism::Atoms {
                b,
                atoms: vec![(0.5, 0.4), (1.5, 0.2)],
            },
        )
        .unwrap();
        let v = model.lower_boundary();
        assert!((v - b / gamma).abs() < 1e-12);
        let cfg = SimConfig {
            dt: 2e-3,
            horizon: 6.0,
            path_count: 300,
            seed: 21,
            ..SimConfig::default()
        };
        let x0 = 2.0;
        let slack = 10.0 * cfg.dt;
        for path in simulate_euler(&model, x0, &cfg).unwrap() {
            let path = path.unwrap();
            for (t, xv) in path.times.iter().zip(&path.values) {
                let floor = (-gamma * t).exp() * x0 + v * (1.0 - (-gamma * t).exp());
                assert!(
                    *xv >= floor - slack,
                    "value {xv} below floor {floor} at t = {t}"
                );
            }
        }
    }

    #[test]
    fn hitting_laplace_matches_quadrature() {
        let model = CbiModel::cir(2.0, 0.5).unwrap();
        let want = transform::hitting_time_laplace(&model, 2.0, 1.0, 0.5, 1e-10)
            .unwrap()
            .value;
        let cfg = cir_cfg(6000, 0.01, 20.0, 17);
        let est = mc_hitting_laplace(&model, 2.0, 1.0, 0.5, 0.0, &cfg).unwrap();
        assert!(
            (est.mean - want).abs() < 4.0 * est.std_error + 0.01,
            "mc {} vs quadrature {want}, stderr {}",
            est.mean,
            est.std_error
        );
        assert!(!est.flagged, "censoring bias should be negligible here");
    }

    #[test]
    fn joint_laplace_matches_quadrature() {
        let model = CbiModel::cir(2.0, 0.5).unwrap();
        let want = transform::joint_laplace(&model, 2.0, 1.0, 0.5, 0.5, 1e-10)
            .unwrap()
            .value;
        let cfg = cir_cfg(6000, 0.01, 20.0, 19);
        let est = mc_hitting_laplace(&model, 2.0, 1.0, 0.5, 0.5, &cfg).unwrap();
        assert!(
            (est.mean - want).abs() < 4.0 * est.std_error + 0.01,
            "mc {} vs quadrature {want}, stderr {}",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn minimum_law_of_conditioned_critical_process_is_uniform() {
        let model = CbiModel::conditioned_critical_cb(1.0).unwrap();
        let cfg = SimConfig {
            scheme: Scheme::ExactCir,
            dt: 5e-3,
            horizon: 500.0,
            path_count: 3000,
            seed: 23,
            escape_level: Some(60.0),
            ..SimConfig::default()
        };
        let ests = mc_minimum_cdf(&model, 1.0, &[0.2, 0.5, 0.8], &cfg).unwrap();
        for (a, est) in [0.2, 0.5, 0.8].iter().zip(&ests) {
            assert!(
                (est.mean - a).abs() < 0.04,
                "P(min <= {a}) = {} (stderr {})",
                est.mean,
                est.std_error
            );
        }
    }

    #[test]
    fn supercritical_minimum_matches_hit_probability() {
        // growing pure branching: P(I <= 1 | X_0 = 2) = e^{ -(2-1) q(0) }
        // with q(0) = 1
        let model = CbiModel::pure(BranchingMechanism::Quadratic {
            gamma: -1.0,
            sigma2: 2.0,
        })
        .unwrap();
        let cfg = SimConfig {
            scheme: Scheme::ExactCir,
            dt: 5e-3,
            horizon: 200.0,
            path_count: 4000,
            seed: 29,
            escape_level: Some(200.0),
            ..SimConfig::default()
        };
        let est = &mc_minimum_cdf(&model, 2.0, &[1.0], &cfg).unwrap()[0];
        let want = (-1.0f64).exp();
        assert!(
            (est.mean - want).abs() < 4.0 * est.std_error + 0.01,
            "mc {} vs {want}, stderr {}",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn euler_hitting_bias_shrinks_with_dt() {
        // common seed across the dt ladder so the bias trend is visible
        // through correlated noise; the slack covers the residual noise
        let model = CbiModel::cir(2.0, 0.5).unwrap();
        let want = transform::hitting_time_laplace(&model, 2.0, 1.0, 0.5, 1e-10)
            .unwrap()
            .value;
        let mut errs = Vec::new();
        let mut ses = Vec::new();
        for dt in [4e-3, 2e-3, 1e-3] {
            let cfg = SimConfig {
                scheme: Scheme::EulerFullTruncation,
                dt,
                horizon: 12.0,
                path_count: 2000,
                seed: 31,
                ..SimConfig::default()
            };
            let est = mc_hitting_laplace(&model, 2.0, 1.0, 0.5, 0.0, &cfg).unwrap();
            errs.push((est.mean - want).abs());
            ses.push(est.std_error);
        }
        let slack = 3.0 * (ses[0] * ses[0] + ses[2] * ses[2]).sqrt();
        assert!(
            errs[2] <= errs[0] + slack,
            "refinement did not help: errors {errs:?}, slack {slack}"
        );
        assert!(errs[2] < 0.03, "fine-grid error too large: {errs:?}");
    }

    #[test]
    fn path_sample_invariants_hold() {
        let model = CbiModel::new(
            BranchingMechanism::Mixed {
                gamma: 0.0,
                sigma2: 1.0,
                d: 0.5,
                alpha: 1.6,
            },
            ImmigrationMechanism::LinearDrift { b: 0.4 },
        )
        .unwrap();
        let cfg = SimConfig {
            dt: 5e-4,
            horizon: 2.0,
            path_count: 40,
            seed: 37,
            small_jump_cutoff: 0.12,
            ..SimConfig::default()
        };
        for path in simulate_euler(&model, 1.0, &cfg).unwrap() {
            let path = path.unwrap();
            assert_eq!(path.times.len(), path.values.len());
            assert!(path.values.iter().all(|&v| v >= 0.0));
            let grid_min = path.values.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(path.running_min <= grid_min + 1e-12);
            let elapsed = path.times.last().unwrap();
            assert!(path.occupation >= path.running_min * elapsed - 1e-9);
            assert!(estimate_minimum(&path) == path.running_min);
        }
    }

    #[test]
    fn zero_start_without_immigration_stays_zero() {
        let cfg = cir_cfg(3, 0.05, 1.0, 41);
        for path in simulate_cir_exact(2.0, 0.0, 0.0, 0.0, &cfg).unwrap() {
            let path = path.unwrap();
            assert!(path.values.iter().all(|&v| v == 0.0));
            assert_eq!(path.running_min, 0.0);
        }
    }
}
