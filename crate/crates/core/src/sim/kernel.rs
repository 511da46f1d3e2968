//! Transition kernels for path simulation.
//!
//! The diffusion mechanism with drift immigration has a known transition
//! law (a Poisson mixture of gamma laws), sampled exactly on the grid.
//! Everything else steps by full-truncation Euler: the diffusion part is
//! frozen at the current state, jumps of size >= epsilon come from
//! compound-Poisson samplers of the restricted measures, smaller branching
//! jumps are absorbed into the drift through their compensator mean, and
//! the state is clamped at 0 after each step.

use crate::error::{CbiError, Result};
use crate::mechanism::{
    log_tail_complement, BranchingMechanism, CbiModel, ImmigrationMechanism, LOG_TAIL_CUT,
};
use crate::sim::gamma::gamma;
use crate::sim::SimConfig;
use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, Poisson, StandardNormal};

/// Per-step jump intensity times dt above which a step is rejected; the
/// Euler drift freeze is no longer trustworthy past this point and the
/// caller has to shrink dt.
const INTENSITY_DT_LIMIT: f64 = 0.1;

/// Cap on the log of a heavy-tail jump draw. Sizes this large are beyond
/// every level and horizon we can simulate, so capping changes no hitting
/// or minimum outcome, but it keeps occupation sums finite.
const LOG_JUMP_CAP: f64 = 200.0;

pub(crate) enum Kernel {
    Cir(CirKernel),
    Euler(EulerKernel),
}

pub(crate) struct CirKernel {
    gamma: f64,
    sigma2: f64,
    b: f64,
}

/// Power-tail sampler: `P(U > u) = (cutoff/u)^index` for `u >= cutoff`.
struct TailSampler {
    intensity: f64,
    index: f64,
    cutoff: f64,
}

impl TailSampler {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let v: f64 = 1.0 - rng.gen::<f64>();
        self.cutoff * v.powf(-1.0 / self.index)
    }
}

enum ImmigrationSampler {
    Tail(TailSampler),
    Atoms {
        intensity: f64,
        items: Vec<(f64, f64)>,
    },
    HeavyTail {
        intensity: f64,
    },
}

impl ImmigrationSampler {
    fn intensity(&self) -> f64 {
        match self {
            ImmigrationSampler::Tail(t) => t.intensity,
            ImmigrationSampler::Atoms { intensity, .. } => *intensity,
            ImmigrationSampler::HeavyTail { intensity } => *intensity,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            ImmigrationSampler::Tail(t) => t.sample(rng),
            ImmigrationSampler::Atoms { intensity, items } => {
                let mut target = rng.gen::<f64>() * intensity;
                for (u, w) in items {
                    target -= w;
                    if target <= 0.0 {
                        return *u;
                    }
                }
                items.last().map(|(u, _)| *u).unwrap_or(0.0)
            }
            ImmigrationSampler::HeavyTail { intensity } => {
                let v: f64 = 1.0 - rng.gen::<f64>();
                sample_heavy_tail(v * intensity)
            }
        }
    }
}

/// Inverts the heavy-tail mass `1/(ln u lnln u) = target` by Newton in
/// `s = ln u`.
fn sample_heavy_tail(target: f64) -> f64 {
    let r = 1.0 / target;
    let mut s = (r / r.ln().max(1.5)).max(LOG_TAIL_CUT.ln());
    for _ in 0..60 {
        let f = s * s.ln() - r;
        let fp = s.ln() + 1.0;
        let next = (s - f / fp).max(LOG_TAIL_CUT.ln());
        if (next - s).abs() < 1e-12 * s {
            s = next;
            break;
        }
        s = next;
    }
    s.min(LOG_JUMP_CAP).exp()
}

pub(crate) struct EulerKernel {
    /// coefficient of `-X dt` in the drift, compensator of explicit
    /// sub-unit branching jumps included
    linear_drift: f64,
    /// constant drift: immigration drift plus the mean of truncated small
    /// immigration jumps
    constant_drift: f64,
    /// diffusion coefficient per unit of state
    sigma2_eff: f64,
    /// branching jumps >= cutoff, intensity per unit of state
    branch: Option<TailSampler>,
    immigration: Option<ImmigrationSampler>,
}

impl Kernel {
    pub(crate) fn build(model: &CbiModel, cfg: &SimConfig) -> Result<Kernel> {
        match cfg.scheme {
            super::Scheme::ExactCir => {
                let (gamma_coef, sigma2) = match model.psi {
                    BranchingMechanism::Quadratic { gamma, sigma2 } => (gamma, sigma2),
                    _ => {
                        return Err(CbiError::unsupported(
                            "the exact scheme needs a pure diffusion branching mechanism",
                        ))
                    }
                };
                let b = match model.phi {
                    ImmigrationMechanism::None => 0.0,
                    ImmigrationMechanism::LinearDrift { b } => b,
                    // phi = psi' = sigma2 q for the critical diffusion
                    ImmigrationMechanism::DerivedFromPsi => sigma2,
                    _ => {
                        return Err(CbiError::unsupported(
                            "the exact scheme needs drift-only immigration",
                        ))
                    }
                };
                Ok(Kernel::Cir(CirKernel {
                    gamma: gamma_coef,
                    sigma2,
                    b,
                }))
            }
            super::Scheme::EulerFullTruncation => Ok(Kernel::Euler(EulerKernel::build(model, cfg)?)),
        }
    }

    pub(crate) fn step<R: Rng>(&self, x: f64, dt: f64, rng: &mut R) -> Result<f64> {
        match self {
            Kernel::Cir(k) => Ok(k.step(x, dt, rng)),
            Kernel::Euler(k) => k.step(x, dt, rng),
        }
    }

    /// Local diffusion coefficient, for bridge corrections.
    pub(crate) fn diffusion(&self, x: f64) -> f64 {
        let s2 = match self {
            Kernel::Cir(k) => k.sigma2,
            Kernel::Euler(k) => k.sigma2_eff,
        };
        s2 * x.max(0.0)
    }
}

impl CirKernel {
    fn step<R: Rng>(&self, x: f64, dt: f64, rng: &mut R) -> f64 {
        let (c, decay) = if self.gamma == 0.0 {
            (0.5 * self.sigma2 * dt, 1.0)
        } else {
            let e = (-self.gamma * dt).exp();
            (self.sigma2 * (1.0 - e) / (2.0 * self.gamma), e)
        };
        let m = x * decay / c;
        let count = if m > 0.0 {
            Poisson::new(m).expect("positive Poisson mean").sample(rng)
        } else {
            0.0
        };
        let shape = 2.0 * self.b / self.sigma2 + count;
        if shape > 0.0 {
            c * GammaDist::new(shape, 1.0)
                .expect("positive gamma shape")
                .sample(rng)
        } else {
            0.0
        }
    }
}

impl EulerKernel {
    fn build(model: &CbiModel, cfg: &SimConfig) -> Result<EulerKernel> {
        let eps = cfg.small_jump_cutoff;
        if !(eps > 0.0) {
            return Err(CbiError::domain("small_jump_cutoff must be positive"));
        }

        let (linear_drift, sigma2_eff, branch) = match model.psi {
            BranchingMechanism::Linear { gamma } => (gamma, 0.0, None),
            BranchingMechanism::Quadratic { gamma, sigma2 } => (gamma, sigma2, None),
            BranchingMechanism::Stable { gamma, d, alpha } => {
                let (ts, comp, var) = stable_branch_parts(d, alpha, eps);
                (gamma + comp, var_or_zero(var, cfg), Some(ts))
            }
            BranchingMechanism::Mixed {
                gamma,
                sigma2,
                d,
                alpha,
            } => {
                let (ts, comp, var) = stable_branch_parts(d, alpha, eps);
                (gamma + comp, sigma2 + var_or_zero(var, cfg), Some(ts))
            }
            BranchingMechanism::GeneralTriplet { .. } => {
                return Err(CbiError::unsupported(
                    "triplet mechanisms have no declared jump sampler",
                ))
            }
        };

        let (constant_drift, immigration) = match &model.phi {
            ImmigrationMechanism::None => (0.0, None),
            ImmigrationMechanism::LinearDrift { b } => (*b, None),
            ImmigrationMechanism::Stable { b, dprime, beta } => {
                let (sampler, mean_below) = stable_imm_parts(*dprime, *beta, eps);
                (*b + mean_below, Some(ImmigrationSampler::Tail(sampler)))
            }
            ImmigrationMechanism::DerivedFromPsi => {
                // phi = psi': sigma2 becomes constant drift; the stable part
                // contributes the size-biased jump measure u pi(du), itself a
                // power tail one index lower.
                match model.psi {
                    BranchingMechanism::Quadratic { sigma2, .. } => (sigma2, None),
                    BranchingMechanism::Stable { d, alpha, .. } => {
                        let (sampler, mean_below) = stable_imm_parts(d * alpha, alpha - 1.0, eps);
                        (mean_below, Some(ImmigrationSampler::Tail(sampler)))
                    }
                    BranchingMechanism::Mixed {
                        sigma2, d, alpha, ..
                    } => {
                        let (sampler, mean_below) = stable_imm_parts(d * alpha, alpha - 1.0, eps);
                        (sigma2 + mean_below, Some(ImmigrationSampler::Tail(sampler)))
                    }
                    _ => {
                        return Err(CbiError::unsupported(
                            "derived immigration needs a critical catalog mechanism",
                        ))
                    }
                }
            }
            ImmigrationMechanism::LogTail => (
                0.0,
                Some(ImmigrationSampler::HeavyTail {
                    intensity: log_tail_complement(LOG_TAIL_CUT),
                }),
            ),
            ImmigrationMechanism::Atoms { b, atoms } => {
                let intensity: f64 = atoms.iter().map(|(_, w)| w).sum();
                (
                    *b,
                    Some(ImmigrationSampler::Atoms {
                        intensity,
                        items: atoms.clone(),
                    }),
                )
            }
            ImmigrationMechanism::GeneralTriplet { .. } => {
                return Err(CbiError::unsupported(
                    "triplet immigration has no declared jump sampler",
                ))
            }
        };

        Ok(EulerKernel {
            linear_drift,
            constant_drift,
            sigma2_eff,
            branch,
            immigration,
        })
    }

    fn step<R: Rng>(&self, x: f64, dt: f64, rng: &mut R) -> Result<f64> {
        let xp = x.max(0.0);
        let branch_rate = self.branch.as_ref().map_or(0.0, |s| s.intensity * xp);
        let imm_rate = self.immigration.as_ref().map_or(0.0, |s| s.intensity());
        if (branch_rate + imm_rate) * dt > INTENSITY_DT_LIMIT {
            return Err(CbiError::numeric(format!(
                "jump intensity {:.3} times dt {dt:.2e} exceeds {INTENSITY_DT_LIMIT}; reduce dt",
                branch_rate + imm_rate
            )));
        }

        let mut next = x + (self.constant_drift - self.linear_drift * xp) * dt;
        if self.sigma2_eff > 0.0 && xp > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            next += (self.sigma2_eff * xp * dt).sqrt() * z;
        }
        if branch_rate > 0.0 {
            let n = Poisson::new(branch_rate * dt)
                .expect("positive Poisson mean")
                .sample(rng) as u64;
            let sampler = self.branch.as_ref().expect("branch sampler present");
            for _ in 0..n {
                next += sampler.sample(rng);
            }
        }
        if imm_rate > 0.0 {
            let n = Poisson::new(imm_rate * dt)
                .expect("positive Poisson mean")
                .sample(rng) as u64;
            let sampler = self.immigration.as_ref().expect("immigration sampler present");
            for _ in 0..n {
                next += sampler.sample(rng);
            }
        }
        Ok(next.max(0.0))
    }
}

/// Restricted-jump data for a stable branching density `c u^{-1-alpha}`:
/// the sampler for sizes >= eps, the drift compensator of the explicit
/// jumps below 1, and the variance of the discarded jumps below eps.
fn stable_branch_parts(d: f64, alpha: f64, eps: f64) -> (TailSampler, f64, f64) {
    let c = d * alpha * (alpha - 1.0) / gamma(2.0 - alpha);
    let eps = eps.min(0.5);
    let sampler = TailSampler {
        intensity: c * eps.powf(-alpha) / alpha,
        index: alpha,
        cutoff: eps,
    };
    let compensator = c * (eps.powf(1.0 - alpha) - 1.0) / (alpha - 1.0);
    let small_variance = c * eps.powf(2.0 - alpha) / (2.0 - alpha);
    (sampler, compensator, small_variance)
}

/// Restricted-jump data for a stable immigration density `c u^{-1-beta}`:
/// the sampler for sizes >= eps and the mean of the discarded smaller
/// jumps, folded into the drift.
fn stable_imm_parts(dprime: f64, beta: f64, eps: f64) -> (TailSampler, f64) {
    let c = dprime * beta / gamma(1.0 - beta);
    let eps = eps.min(0.5);
    let sampler = TailSampler {
        intensity: c * eps.powf(-beta) / beta,
        index: beta,
        cutoff: eps,
    };
    let mean_below = c * eps.powf(1.0 - beta) / (1.0 - beta);
    (sampler, mean_below)
}

fn var_or_zero(small_variance: f64, cfg: &SimConfig) -> f64 {
    if cfg.gaussian_small_jump_correction {
        small_variance
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::CbiModel;
    use rand::SeedableRng;

    #[test]
    fn exact_kernel_keeps_zero_absorbing() {
        let model = CbiModel::pure(BranchingMechanism::Quadratic {
            gamma: 0.0,
            sigma2: 2.0,
        })
        .unwrap();
        let cfg = SimConfig {
            scheme: super::super::Scheme::ExactCir,
            ..SimConfig::default()
        };
        let kernel = Kernel::build(&model, &cfg).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut x = 0.0;
        for _ in 0..50 {
            x = kernel.step(x, 0.1, &mut rng).unwrap();
            assert_eq!(x, 0.0);
        }
    }

    #[test]
    fn exact_kernel_matches_first_moment() {
        // critical diffusion with drift immigration: E X_t = x + b t
        let model = CbiModel::cir(2.0, 1.0).unwrap();
        let cfg = SimConfig {
            scheme: super::super::Scheme::ExactCir,
            ..SimConfig::default()
        };
        let kernel = Kernel::build(&model, &cfg).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 40_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let x = kernel.step(1.0, 1.0, &mut rng).unwrap();
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let sd = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(
            (mean - 2.0).abs() < 4.0 * sd,
            "mean {mean}, want 2 within {}",
            4.0 * sd
        );
    }

    #[test]
    fn euler_rejects_oversized_jump_steps() {
        let model = CbiModel::stable_pair(1.0, 1.5, 0.4, 0.5).unwrap();
        let cfg = SimConfig {
            small_jump_cutoff: 1e-4,
            ..SimConfig::default()
        };
        let kernel = Kernel::build(&model, &cfg).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let err = kernel.step(1.0, 0.01, &mut rng).unwrap_err();
        assert!(err.to_string().contains("reduce dt"));
    }

    #[test]
    fn heavy_tail_sampler_respects_support_and_mass() {
        let total = log_tail_complement(LOG_TAIL_CUT);
        // median draw: nu_bar(u) = total/2
        let median = sample_heavy_tail(0.5 * total);
        assert!(median >= LOG_TAIL_CUT);
        let back = log_tail_complement(median);
        assert!(
            (back - 0.5 * total).abs() < 1e-8 * total,
            "round trip {back} vs {}",
            0.5 * total
        );
        // the smallest admissible draw is the lower support edge
        let low = sample_heavy_tail(total);
        assert!((low - LOG_TAIL_CUT).abs() < 1e-6);
    }

    #[test]
    fn stable_sampler_matches_restricted_mass() {
        // intensity of the restricted measure equals the analytic tail mass
        let d = 1.0;
        let alpha = 1.5;
        let eps = 0.01;
        let (sampler, _, _) = stable_branch_parts(d, alpha, eps);
        let c = d * alpha * (alpha - 1.0) / gamma(2.0 - alpha);
        let want = c * eps.powf(-alpha) / alpha;
        assert!((sampler.intensity - want).abs() < 1e-12 * want);

        // draws never fall below the cutoff and follow the declared tail law
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut above = 0usize;
        let n = 20_000;
        let probe = 0.03;
        for _ in 0..n {
            let u = sampler.sample(&mut rng);
            assert!(u >= eps);
            if u > probe {
                above += 1;
            }
        }
        let want_frac = (eps / probe).powf(alpha);
        let got_frac = above as f64 / n as f64;
        assert!(
            (got_frac - want_frac).abs() < 0.01,
            "tail fraction {got_frac} vs {want_frac}"
        );
    }
}
