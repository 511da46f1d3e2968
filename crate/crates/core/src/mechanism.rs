//! Branching and immigration mechanisms.
//!
//! The branching side is a convex function `psi` with `psi(0) = 0`,
//!
//! ```text
//! psi(q) = gamma q + (sigma2/2) q^2
//!          + integral (e^{-qu} - 1 + qu 1{u<1}) pi(du),
//! ```
//!
//! the immigration side a concave nondecreasing `phi` with `phi(0) = 0`,
//!
//! ```text
//! phi(q) = b q + integral (1 - e^{-qu}) nu(du).
//! ```
//!
//! Models must satisfy `psi(q) > 0` somewhere; the effective drift (the
//! slope `psi(q)/q` at infinity, `+inf` for unbounded variation) must be
//! strictly positive. Both constraints are enforced at construction.
//!
//! Catalog forms evaluate in closed form. [`LevyDensitySpec`] admits an
//! arbitrary jump density; its evaluations run the adaptive quadrature from
//! [`crate::quad`], with endpoint exponents supplied by the caller so the
//! integrator can pick the right strategy.

use std::fmt;
use std::sync::Arc;

use crate::error::{CbiError, Result};
use crate::quad::{self, QuadStatus};

/// Relative tolerance used for every internal mechanism quadrature.
const MECH_TOL: f64 = 1e-11;

/// Jump density plus the endpoint exponents numeric code needs.
///
/// `density` is the density of the jump measure on `support = (lo, hi)`;
/// values outside the support are never requested. When `lo == 0`,
/// `zero_index` is the exponent `a` with density roughly `C u^{-1-a}` as
/// `u -> 0`; when `hi` is infinite, `tail_index` is the exponent `t` with
/// density roughly `C u^{-1-t}` as `u -> inf`. An endpoint that is finite
/// and positive ignores the corresponding exponent.
#[derive(Clone)]
pub struct LevyDensitySpec {
    pub density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub zero_index: f64,
    pub tail_index: f64,
    pub support: (f64, f64),
}

impl fmt::Debug for LevyDensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevyDensitySpec")
            .field("zero_index", &self.zero_index)
            .field("tail_index", &self.tail_index)
            .field("support", &self.support)
            .finish_non_exhaustive()
    }
}

fn usable(r: quad::QuadResult) -> f64 {
    // an Inconclusive value is still the best available estimate; only a
    // certified divergence poisons the evaluation
    if r.status == QuadStatus::Diverged {
        f64::NAN
    } else {
        r.value
    }
}

impl LevyDensitySpec {
    /// Integral of `f(u) density(u)` over the support below 1. `vanish` is
    /// the power with which `f` vanishes at `0+`; it offsets the density
    /// blow-up there.
    fn integrate_near<F: Fn(f64) -> f64>(&self, f: F, vanish: f64, tol: f64) -> f64 {
        let lo = self.support.0;
        let hi = self.support.1.min(1.0);
        if lo >= hi {
            return 0.0;
        }
        let g = |u: f64| f(u) * (self.density)(u);
        if lo == 0.0 {
            usable(quad::integrate_power_singular(
                g,
                0.0,
                hi,
                vanish - self.zero_index,
                tol,
            ))
        } else {
            usable(quad::integrate_adaptive(g, lo, hi, tol))
        }
    }

    /// Integral of `f(u) density(u)` over the support above 1; `f` must stay
    /// bounded at infinity. `rho` is the power exponent of the transformed
    /// integrand at the far end (`tail_index` for a bounded kernel).
    fn integrate_far<F: Fn(f64) -> f64>(&self, f: F, rho: f64, tol: f64) -> f64 {
        let lo = self.support.0.max(1.0);
        let hi = self.support.1;
        if hi <= lo {
            return 0.0;
        }
        let g = |u: f64| f(u) * (self.density)(u);
        if hi.is_finite() {
            usable(quad::integrate_adaptive(g, lo, hi, tol))
        } else {
            // u = lo/w maps (0, 1] onto [lo, inf)
            let h = |w: f64| {
                let u = lo / w;
                g(u) * lo / (w * w)
            };
            usable(quad::integrate_power_singular(h, 0.0, 1.0, rho, tol))
        }
    }

    fn probe_density(&self) -> Result<()> {
        let (lo, hi) = self.support;
        let samples: Vec<f64> = if hi.is_finite() {
            (0..8)
                .map(|k| lo + (hi - lo) * (k as f64 + 0.5) / 8.0)
                .collect()
        } else {
            let base = lo.max(1e-6);
            (0..8).map(|k| base * 4.0f64.powi(k + 1)).collect()
        };
        for u in samples {
            let v = (self.density)(u);
            if !v.is_finite() || v < 0.0 {
                return Err(CbiError::mechanism(format!(
                    "jump density must be finite and nonnegative on its support, got {v} at u={u}"
                )));
            }
        }
        Ok(())
    }
}

/// Position of the mean of the underlying spectrally positive process:
/// `psi'(0+) > 0`, `= 0`, `< 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

/// Leading power behavior `coeff * q^exponent` of a mechanism at one end of
/// its domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTerm {
    pub coeff: f64,
    pub exponent: f64,
}

/// Branching mechanism `psi`.
#[derive(Debug, Clone)]
pub enum BranchingMechanism {
    /// `psi(q) = gamma q`, `gamma > 0`: deterministic exponential decay.
    Linear { gamma: f64 },
    /// `psi(q) = gamma q + (sigma2/2) q^2`: diffusive branching.
    Quadratic { gamma: f64, sigma2: f64 },
    /// `psi(q) = gamma q + d q^alpha`, `alpha` in (1, 2): stable jumps.
    Stable { gamma: f64, d: f64, alpha: f64 },
    /// `psi(q) = gamma q + (sigma2/2) q^2 + d q^alpha`.
    Mixed {
        gamma: f64,
        sigma2: f64,
        d: f64,
        alpha: f64,
    },
    /// Full triplet with an arbitrary jump density. `gamma` is the drift of
    /// the `(0,1)`-truncated representation.
    GeneralTriplet {
        gamma: f64,
        sigma2: f64,
        levy: LevyDensitySpec,
    },
}

impl BranchingMechanism {
    pub fn validate(&self) -> Result<()> {
        match self {
            BranchingMechanism::Linear { gamma } => {
                if !(*gamma > 0.0) {
                    return Err(CbiError::mechanism(
                        "linear branching needs gamma > 0 so that psi is positive somewhere",
                    ));
                }
            }
            BranchingMechanism::Quadratic { gamma, sigma2 } => {
                if !gamma.is_finite() || !(*sigma2 > 0.0) {
                    return Err(CbiError::mechanism("quadratic branching needs sigma2 > 0"));
                }
            }
            BranchingMechanism::Stable { gamma, d, alpha } => {
                if !gamma.is_finite() || !(*d > 0.0) || !(*alpha > 1.0 && *alpha < 2.0) {
                    return Err(CbiError::mechanism(
                        "stable branching needs d > 0 and alpha in (1, 2)",
                    ));
                }
            }
            BranchingMechanism::Mixed {
                gamma,
                sigma2,
                d,
                alpha,
            } => {
                if !gamma.is_finite()
                    || !(*sigma2 > 0.0)
                    || !(*d > 0.0)
                    || !(*alpha > 1.0 && *alpha < 2.0)
                {
                    return Err(CbiError::mechanism(
                        "mixed branching needs sigma2 > 0, d > 0, alpha in (1, 2)",
                    ));
                }
            }
            BranchingMechanism::GeneralTriplet {
                gamma,
                sigma2,
                levy,
            } => {
                if !gamma.is_finite() || !(*sigma2 >= 0.0) {
                    return Err(CbiError::mechanism("triplet needs finite gamma, sigma2 >= 0"));
                }
                let (lo, hi) = levy.support;
                if !(lo >= 0.0) || !(hi > lo) {
                    return Err(CbiError::mechanism("jump support must satisfy 0 <= lo < hi"));
                }
                if lo == 0.0 && !(levy.zero_index < 2.0) {
                    return Err(CbiError::mechanism(
                        "jump density must integrate u^2 at zero (zero_index < 2)",
                    ));
                }
                if hi.is_infinite() && !(levy.tail_index > 0.0) {
                    return Err(CbiError::mechanism(
                        "an unbounded jump density needs tail_index > 0",
                    ));
                }
                levy.probe_density()?;
                let drift = self.effective_drift();
                if drift.is_finite() && !(drift > 0.0) {
                    return Err(CbiError::mechanism(format!(
                        "effective drift must be positive, got {drift}"
                    )));
                }
                let trial = self.psi(1.0);
                if !trial.is_finite() {
                    return Err(CbiError::mechanism(
                        "psi(1) did not evaluate to a finite value",
                    ));
                }
            }
        }
        Ok(())
    }

    /// `psi(q)` for `q >= 0`.
    pub fn psi(&self, q: f64) -> f64 {
        debug_assert!(q >= 0.0);
        match self {
            BranchingMechanism::Linear { gamma } => gamma * q,
            BranchingMechanism::Quadratic { gamma, sigma2 } => gamma * q + 0.5 * sigma2 * q * q,
            BranchingMechanism::Stable { gamma, d, alpha } => gamma * q + d * q.powf(*alpha),
            BranchingMechanism::Mixed {
                gamma,
                sigma2,
                d,
                alpha,
            } => gamma * q + 0.5 * sigma2 * q * q + d * q.powf(*alpha),
            BranchingMechanism::GeneralTriplet {
                gamma,
                sigma2,
                levy,
            } => {
                let near = levy.integrate_near(|u| (-q * u).exp_m1() + q * u, 2.0, MECH_TOL);
                let far = levy.integrate_far(|u| (-q * u).exp_m1(), levy.tail_index, MECH_TOL);
                gamma * q + 0.5 * sigma2 * q * q + near + far
            }
        }
    }

    /// `psi(q + dz) - psi(q)` for `q, dz >= 0`, accurate when `dz` is many
    /// orders below `q`. Callers holding a computed root of `psi = mu` use
    /// this so `dz = 0` is a root exactly; subtracting `mu` itself leaves a
    /// rounding residue that blows up relative accuracy as `dz -> 0`.
    pub fn psi_diff(&self, q: f64, dz: f64) -> f64 {
        debug_assert!(q >= 0.0 && dz >= 0.0);
        // (q + dz)^alpha - q^alpha without cancellation.
        let frac = |d: f64, alpha: f64| -> f64 {
            if q == 0.0 {
                d * dz.powf(alpha)
            } else {
                d * q.powf(alpha) * (alpha * (dz / q).ln_1p()).exp_m1()
            }
        };
        match self {
            BranchingMechanism::Linear { gamma } => gamma * dz,
            BranchingMechanism::Quadratic { gamma, sigma2 } => {
                dz * (gamma + 0.5 * sigma2 * (2.0 * q + dz))
            }
            BranchingMechanism::Stable { gamma, d, alpha } => gamma * dz + frac(*d, *alpha),
            BranchingMechanism::Mixed {
                gamma,
                sigma2,
                d,
                alpha,
            } => dz * (gamma + 0.5 * sigma2 * (2.0 * q + dz)) + frac(*d, *alpha),
            BranchingMechanism::GeneralTriplet { .. } => self.psi(q + dz) - self.psi(q),
        }
    }

    /// `psi'(q)`. At `q = 0` this is the right derivative and may be `-inf`.
    pub fn psi_prime(&self, q: f64) -> f64 {
        debug_assert!(q >= 0.0);
        match self {
            BranchingMechanism::Linear { gamma } => *gamma,
            BranchingMechanism::Quadratic { gamma, sigma2 } => gamma + sigma2 * q,
            BranchingMechanism::Stable { gamma, d, alpha } => {
                gamma + d * alpha * q.powf(alpha - 1.0)
            }
            BranchingMechanism::Mixed {
                gamma,
                sigma2,
                d,
                alpha,
            } => gamma + sigma2 * q + d * alpha * q.powf(alpha - 1.0),
            BranchingMechanism::GeneralTriplet {
                gamma,
                sigma2,
                levy,
            } => {
                if q == 0.0 {
                    return self.psi_prime_zero();
                }
                let near = levy.integrate_near(|u| -u * (-q * u).exp_m1(), 2.0, MECH_TOL);
                let far = levy.integrate_far(|u| -u * (-q * u).exp(), levy.tail_index, MECH_TOL);
                gamma + sigma2 * q + near + far
            }
        }
    }

    /// `psi'(0+)`, the negated mean of the underlying Levy process. Equals
    /// `-inf` when the jump density has no first moment at infinity.
    pub fn psi_prime_zero(&self) -> f64 {
        match self {
            BranchingMechanism::Linear { gamma }
            | BranchingMechanism::Quadratic { gamma, .. }
            | BranchingMechanism::Stable { gamma, .. }
            | BranchingMechanism::Mixed { gamma, .. } => *gamma,
            BranchingMechanism::GeneralTriplet { gamma, levy, .. } => {
                if levy.support.1.is_infinite() && levy.tail_index <= 1.0 {
                    return f64::NEG_INFINITY;
                }
                let rho = (levy.tail_index - 1.0).max(0.5);
                gamma - levy.integrate_far(|u| u, rho, MECH_TOL)
            }
        }
    }

    pub fn criticality(&self) -> Criticality {
        let slope = self.psi_prime_zero();
        let tol = match self {
            // catalog drifts are exact user input; respect their sign
            BranchingMechanism::GeneralTriplet { gamma, .. } => 1e-10 * (1.0 + gamma.abs()),
            _ => 0.0,
        };
        if slope > tol {
            Criticality::Subcritical
        } else if slope < -tol {
            Criticality::Supercritical
        } else {
            Criticality::Critical
        }
    }

    /// Slope of `psi` at infinity: `gamma + integral_0^1 u pi(du)` for
    /// bounded variation, `+inf` otherwise.
    pub fn effective_drift(&self) -> f64 {
        match self {
            BranchingMechanism::Linear { gamma } => *gamma,
            BranchingMechanism::Quadratic { .. }
            | BranchingMechanism::Stable { .. }
            | BranchingMechanism::Mixed { .. } => f64::INFINITY,
            BranchingMechanism::GeneralTriplet {
                gamma,
                sigma2,
                levy,
            } => {
                if *sigma2 > 0.0 || (levy.support.0 == 0.0 && levy.zero_index >= 1.0) {
                    f64::INFINITY
                } else {
                    gamma + levy.integrate_near(|u| u, 1.0, MECH_TOL)
                }
            }
        }
    }

    /// Largest root of `psi(q) = mu`, `mu >= 0`.
    ///
    /// Zero for `mu = 0` unless the mechanism is supercritical, in which
    /// case the strictly positive root is returned.
    pub fn root(&self, mu: f64) -> Result<f64> {
        if !(mu >= 0.0) {
            return Err(CbiError::domain(format!("root needs mu >= 0, got {mu}")));
        }
        if mu == 0.0 {
            if self.criticality() != Criticality::Supercritical {
                return Ok(0.0);
            }
            // bracket the positive zero: psi < 0 just right of 0
            let mut lo = 1.0;
            while self.psi(lo) >= 0.0 {
                lo *= 0.5;
                if lo < 1e-250 {
                    return Err(CbiError::numeric(
                        "could not find where psi is negative despite supercriticality",
                    ));
                }
            }
            let mut hi = lo * 2.0;
            while self.psi(hi) <= 0.0 {
                hi *= 2.0;
                if hi > 1e100 {
                    return Err(CbiError::numeric("psi never becomes positive"));
                }
            }
            return Ok(bisect(|q| self.psi(q), lo, hi));
        }
        // psi - mu is negative on all of [0, root) because psi <= 0 up to the
        // rightmost zero and increases after the minimizer
        let mut hi = 1.0;
        while self.psi(hi) <= mu {
            hi *= 2.0;
            if hi > 1e100 {
                return Err(CbiError::numeric(format!("psi never exceeds mu = {mu}")));
            }
        }
        Ok(bisect(|q| self.psi(q) - mu, 0.0, hi))
    }

    /// Leading `coeff * q^exponent` of `psi` as `q -> 0+`, when one exists.
    pub fn small_q_power(&self) -> Option<PowerTerm> {
        match self {
            BranchingMechanism::Linear { gamma } => Some(PowerTerm {
                coeff: *gamma,
                exponent: 1.0,
            }),
            BranchingMechanism::Quadratic { gamma, sigma2 } => Some(if *gamma != 0.0 {
                PowerTerm {
                    coeff: *gamma,
                    exponent: 1.0,
                }
            } else {
                PowerTerm {
                    coeff: 0.5 * sigma2,
                    exponent: 2.0,
                }
            }),
            BranchingMechanism::Stable { gamma, d, alpha }
            | BranchingMechanism::Mixed {
                gamma, d, alpha, ..
            } => Some(if *gamma != 0.0 {
                PowerTerm {
                    coeff: *gamma,
                    exponent: 1.0,
                }
            } else {
                PowerTerm {
                    coeff: *d,
                    exponent: *alpha,
                }
            }),
            BranchingMechanism::GeneralTriplet { .. } => None,
        }
    }

    /// Leading `coeff * q^exponent` of `psi` as `q -> inf`, when one exists.
    pub fn large_q_power(&self) -> Option<PowerTerm> {
        match self {
            BranchingMechanism::Linear { gamma } => Some(PowerTerm {
                coeff: *gamma,
                exponent: 1.0,
            }),
            BranchingMechanism::Quadratic { sigma2, .. }
            | BranchingMechanism::Mixed { sigma2, .. } => Some(PowerTerm {
                coeff: 0.5 * sigma2,
                exponent: 2.0,
            }),
            BranchingMechanism::Stable { d, alpha, .. } => Some(PowerTerm {
                coeff: *d,
                exponent: *alpha,
            }),
            BranchingMechanism::GeneralTriplet { sigma2, .. } => {
                if *sigma2 > 0.0 {
                    Some(PowerTerm {
                        coeff: 0.5 * sigma2,
                        exponent: 2.0,
                    })
                } else {
                    None
                }
            }
        }
    }

    /// The diffusion coefficient `sigma2`.
    pub fn diffusion(&self) -> f64 {
        match self {
            BranchingMechanism::Linear { .. } => 0.0,
            BranchingMechanism::Quadratic { sigma2, .. }
            | BranchingMechanism::Mixed { sigma2, .. }
            | BranchingMechanism::GeneralTriplet { sigma2, .. } => *sigma2,
            BranchingMechanism::Stable { .. } => 0.0,
        }
    }
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    // invariant: f(lo) < 0 <= f(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Lower cut of the heavy-tail immigration preset's support.
pub(crate) const LOG_TAIL_CUT: f64 = 100.0;

/// Tail mass `nu((u, inf))` of the heavy-tail preset, `u >= 100`:
/// `1 / (log u loglog u)`. Decays so slowly that `log u` has no mean.
pub fn log_tail_complement(u: f64) -> f64 {
    1.0 / (u.ln() * u.ln().ln())
}

fn log_tail_phi(q: f64) -> f64 {
    debug_assert!(q >= 0.0);
    if q == 0.0 {
        return 0.0;
    }
    // integration by parts against the tail mass avoids differentiating it
    let head = -(-LOG_TAIL_CUT * q).exp_m1() * log_tail_complement(LOG_TAIL_CUT);
    let tail = quad::integrate_decaying_tail(
        |u| (-q * u).exp() * log_tail_complement(u),
        LOG_TAIL_CUT,
        q,
        MECH_TOL,
    );
    head + q * usable(tail)
}

/// Immigration mechanism `phi`.
#[derive(Debug, Clone)]
pub enum ImmigrationMechanism {
    /// `phi = 0`: no immigration, a pure branching process.
    None,
    /// `phi(q) = b q`, `b > 0`.
    LinearDrift { b: f64 },
    /// `phi(q) = b q + dprime q^beta`, `beta` in (0, 1).
    Stable { b: f64, dprime: f64, beta: f64 },
    /// `phi = psi'`. Valid for critical mechanisms whose derivative is
    /// concave; this is the immigration created by conditioning a critical
    /// branching process on survival.
    DerivedFromPsi,
    /// Preset with tail mass `1/(log u loglog u)` on `[100, inf)`. Finite
    /// total mass but no logarithmic moment.
    LogTail,
    /// `phi(q) = b q + sum w_i (1 - e^{-q u_i})`, finitely many atoms
    /// `(u_i, w_i)`.
    Atoms { b: f64, atoms: Vec<(f64, f64)> },
    /// Full form with an arbitrary jump density.
    GeneralTriplet { b: f64, levy: LevyDensitySpec },
}

impl ImmigrationMechanism {
    pub fn is_zero(&self) -> bool {
        matches!(self, ImmigrationMechanism::None)
    }

    pub fn validate(&self, psi: &BranchingMechanism) -> Result<()> {
        match self {
            ImmigrationMechanism::None | ImmigrationMechanism::LogTail => {}
            ImmigrationMechanism::LinearDrift { b } => {
                if !(*b > 0.0) {
                    return Err(CbiError::mechanism(
                        "drift immigration needs b > 0 (use None for no immigration)",
                    ));
                }
            }
            ImmigrationMechanism::Stable { b, dprime, beta } => {
                if !(*b >= 0.0) || !(*dprime > 0.0) || !(*beta > 0.0 && *beta < 1.0) {
                    return Err(CbiError::mechanism(
                        "stable immigration needs b >= 0, dprime > 0, beta in (0, 1)",
                    ));
                }
            }
            ImmigrationMechanism::DerivedFromPsi => {
                if psi.criticality() != Criticality::Critical {
                    return Err(CbiError::mechanism(
                        "phi = psi' requires a critical branching mechanism",
                    ));
                }
                if matches!(psi, BranchingMechanism::GeneralTriplet { .. }) {
                    return Err(CbiError::unsupported(
                        "phi = psi' over a general triplet (concavity of psi' is unverifiable)",
                    ));
                }
            }
            ImmigrationMechanism::Atoms { b, atoms } => {
                if !(*b >= 0.0) || atoms.is_empty() {
                    return Err(CbiError::mechanism(
                        "atom immigration needs b >= 0 and at least one atom",
                    ));
                }
                for (u, w) in atoms {
                    if !(*u > 0.0) || !(*w > 0.0) {
                        return Err(CbiError::mechanism(
                            "every immigration atom needs positive position and weight",
                        ));
                    }
                }
            }
            ImmigrationMechanism::GeneralTriplet { b, levy } => {
                if !(*b >= 0.0) {
                    return Err(CbiError::mechanism("immigration drift must be >= 0"));
                }
                let (lo, hi) = levy.support;
                if !(lo >= 0.0) || !(hi > lo) {
                    return Err(CbiError::mechanism("jump support must satisfy 0 <= lo < hi"));
                }
                if lo == 0.0 && !(levy.zero_index < 1.0) {
                    return Err(CbiError::mechanism(
                        "immigration density must integrate u at zero (zero_index < 1)",
                    ));
                }
                if hi.is_infinite() && !(levy.tail_index > 0.0) {
                    return Err(CbiError::mechanism(
                        "an unbounded immigration density needs tail_index > 0",
                    ));
                }
                levy.probe_density()?;
            }
        }
        Ok(())
    }

    /// `phi(q)` for `q >= 0`. `psi` resolves the [`Self::DerivedFromPsi`] form.
    pub fn phi(&self, psi: &BranchingMechanism, q: f64) -> f64 {
        debug_assert!(q >= 0.0);
        match self {
            ImmigrationMechanism::None => 0.0,
            ImmigrationMechanism::LinearDrift { b } => b * q,
            ImmigrationMechanism::Stable { b, dprime, beta } => b * q + dprime * q.powf(*beta),
            ImmigrationMechanism::DerivedFromPsi => psi.psi_prime(q),
            ImmigrationMechanism::LogTail => log_tail_phi(q),
            ImmigrationMechanism::Atoms { b, atoms } => {
                let jumps: f64 = atoms.iter().map(|(u, w)| -w * (-q * u).exp_m1()).sum();
                b * q + jumps
            }
            ImmigrationMechanism::GeneralTriplet { b, levy } => {
                let near = levy.integrate_near(|u| -(-q * u).exp_m1(), 1.0, MECH_TOL);
                let far = levy.integrate_far(|u| -(-q * u).exp_m1(), levy.tail_index, MECH_TOL);
                b * q + near + far
            }
        }
    }

    /// The pure drift part `b` (the slope of `phi` at infinity).
    pub fn drift_part(&self, psi: &BranchingMechanism) -> f64 {
        match self {
            ImmigrationMechanism::None | ImmigrationMechanism::LogTail => 0.0,
            ImmigrationMechanism::LinearDrift { b }
            | ImmigrationMechanism::Stable { b, .. }
            | ImmigrationMechanism::Atoms { b, .. }
            | ImmigrationMechanism::GeneralTriplet { b, .. } => *b,
            ImmigrationMechanism::DerivedFromPsi => psi.diffusion(),
        }
    }

    /// Whether `integral log(u) nu(du)` converges. This is what separates
    /// positive recurrence from null recurrence once recurrence holds.
    pub fn log_moment_finite(&self) -> bool {
        // every power-tailed or compactly supported form has it; only the
        // heavy-tail preset was built to lack it
        !matches!(self, ImmigrationMechanism::LogTail)
    }

    /// Leading `coeff * q^exponent` of `phi` as `q -> 0+`, when one exists.
    pub fn small_q_power(&self, psi: &BranchingMechanism) -> Option<PowerTerm> {
        match self {
            ImmigrationMechanism::None | ImmigrationMechanism::LogTail => None,
            ImmigrationMechanism::LinearDrift { b } => Some(PowerTerm {
                coeff: *b,
                exponent: 1.0,
            }),
            ImmigrationMechanism::Stable { dprime, beta, .. } => Some(PowerTerm {
                coeff: *dprime,
                exponent: *beta,
            }),
            ImmigrationMechanism::DerivedFromPsi => psi.small_q_power().map(|t| PowerTerm {
                coeff: t.coeff * t.exponent,
                exponent: t.exponent - 1.0,
            }),
            ImmigrationMechanism::Atoms { b, atoms } => {
                let mean: f64 = atoms.iter().map(|(u, w)| u * w).sum();
                Some(PowerTerm {
                    coeff: b + mean,
                    exponent: 1.0,
                })
            }
            ImmigrationMechanism::GeneralTriplet { .. } => None,
        }
    }

    /// Leading `coeff * q^exponent` of `phi` as `q -> inf`, when one exists.
    /// Exponent 0 means `phi` saturates at a finite total jump rate.
    pub fn large_q_power(&self, psi: &BranchingMechanism) -> Option<PowerTerm> {
        match self {
            ImmigrationMechanism::None => None,
            ImmigrationMechanism::LinearDrift { b } => Some(PowerTerm {
                coeff: *b,
                exponent: 1.0,
            }),
            ImmigrationMechanism::Stable { b, dprime, beta } => Some(if *b > 0.0 {
                PowerTerm {
                    coeff: *b,
                    exponent: 1.0,
                }
            } else {
                PowerTerm {
                    coeff: *dprime,
                    exponent: *beta,
                }
            }),
            ImmigrationMechanism::DerivedFromPsi => psi.large_q_power().map(|t| PowerTerm {
                coeff: t.coeff * t.exponent,
                exponent: t.exponent - 1.0,
            }),
            ImmigrationMechanism::LogTail => Some(PowerTerm {
                coeff: log_tail_complement(LOG_TAIL_CUT),
                exponent: 0.0,
            }),
            ImmigrationMechanism::Atoms { b, atoms } => Some(if *b > 0.0 {
                PowerTerm {
                    coeff: *b,
                    exponent: 1.0,
                }
            } else {
                PowerTerm {
                    coeff: atoms.iter().map(|(_, w)| w).sum(),
                    exponent: 0.0,
                }
            }),
            ImmigrationMechanism::GeneralTriplet { b, .. } => {
                if *b > 0.0 {
                    Some(PowerTerm {
                        coeff: *b,
                        exponent: 1.0,
                    })
                } else {
                    None
                }
            }
        }
    }
}

/// A validated pair of branching and immigration mechanisms.
#[derive(Debug, Clone)]
pub struct CbiModel {
    pub psi: BranchingMechanism,
    pub phi: ImmigrationMechanism,
}

impl CbiModel {
    pub fn new(psi: BranchingMechanism, phi: ImmigrationMechanism) -> Result<Self> {
        psi.validate()?;
        phi.validate(&psi)?;
        Ok(CbiModel { psi, phi })
    }

    /// Diffusive branching `psi(q) = (sigma2/2) q^2` with drift immigration
    /// `phi(q) = b q`; `b = 0` means no immigration.
    pub fn cir(sigma2: f64, b: f64) -> Result<Self> {
        let phi = if b == 0.0 {
            ImmigrationMechanism::None
        } else {
            ImmigrationMechanism::LinearDrift { b }
        };
        CbiModel::new(BranchingMechanism::Quadratic { gamma: 0.0, sigma2 }, phi)
    }

    /// Critical diffusive branching conditioned on survival:
    /// `psi(q) = (sigma2/2) q^2`, `phi = psi'`.
    pub fn conditioned_critical_cb(sigma2: f64) -> Result<Self> {
        CbiModel::new(
            BranchingMechanism::Quadratic { gamma: 0.0, sigma2 },
            ImmigrationMechanism::DerivedFromPsi,
        )
    }

    /// Critical stable branching with stable immigration:
    /// `psi(q) = d q^alpha`, `phi(q) = dprime q^beta`.
    pub fn stable_pair(d: f64, alpha: f64, dprime: f64, beta: f64) -> Result<Self> {
        CbiModel::new(
            BranchingMechanism::Stable {
                gamma: 0.0,
                d,
                alpha,
            },
            ImmigrationMechanism::Stable {
                b: 0.0,
                dprime,
                beta,
            },
        )
    }

    pub fn pure(psi: BranchingMechanism) -> Result<Self> {
        CbiModel::new(psi, ImmigrationMechanism::None)
    }

    pub fn psi(&self, q: f64) -> f64 {
        self.psi.psi(q)
    }

    pub fn psi_prime(&self, q: f64) -> f64 {
        self.psi.psi_prime(q)
    }

    pub fn phi(&self, q: f64) -> f64 {
        self.phi.phi(&self.psi, q)
    }

    pub fn root(&self, mu: f64) -> Result<f64> {
        self.psi.root(mu)
    }

    pub fn criticality(&self) -> Criticality {
        self.psi.criticality()
    }

    pub fn effective_drift(&self) -> f64 {
        self.psi.effective_drift()
    }

    /// Lower boundary `v = b / d` of the state space: immigration drift over
    /// effective drift, zero when the drift is infinite.
    pub fn lower_boundary(&self) -> f64 {
        let d = self.effective_drift();
        if d.is_infinite() {
            0.0
        } else {
            self.phi.drift_part(&self.psi) / d
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quadratic(gamma: f64, sigma2: f64) -> BranchingMechanism {
        BranchingMechanism::Quadratic { gamma, sigma2 }
    }

    #[test]
    fn quadratic_root_matches_closed_form() {
        for gamma in [0.0, 0.5, 2.0] {
            for sigma2 in [1.0, 2.0] {
                for mu in [0.1, 1.0, 10.0] {
                    let psi = quadratic(gamma, sigma2);
                    let got = psi.root(mu).unwrap();
                    let want = (-gamma + (gamma * gamma + 2.0 * sigma2 * mu).sqrt()) / sigma2;
                    assert!(
                        (got - want).abs() <= 1e-12 * want,
                        "gamma={gamma} sigma2={sigma2} mu={mu}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn stable_root_closed_form() {
        let psi = BranchingMechanism::Stable {
            gamma: 0.0,
            d: 1.0,
            alpha: 1.5,
        };
        let got = psi.root(2.0).unwrap();
        assert!((got - 1.587_401_051_968_199_474_8).abs() < 1e-13);
        for (d, alpha) in [(0.5, 1.2), (2.0, 1.9)] {
            let psi = BranchingMechanism::Stable {
                gamma: 0.0,
                d,
                alpha,
            };
            for mu in [0.3, 4.0] {
                let q = psi.root(mu).unwrap();
                assert!((psi.psi(q) - mu).abs() <= 1e-10 * mu);
                assert!((q - (mu / d).powf(1.0 / alpha)).abs() <= 1e-10 * q);
            }
        }
    }

    #[test]
    fn supercritical_quadratic_roots() {
        // psi(q) = q^2 - q: zero at 1, psi(2) = 2
        let psi = quadratic(-1.0, 2.0);
        assert_eq!(psi.criticality(), Criticality::Supercritical);
        let q0 = psi.root(0.0).unwrap();
        assert!((q0 - 1.0).abs() < 1e-13);
        let q2 = psi.root(2.0).unwrap();
        assert!((q2 - 2.0).abs() < 1e-12);
        assert!(psi.root(1e-9).unwrap() >= q0);
    }

    #[test]
    fn root_monotone_and_consistent() {
        let psi = quadratic(0.3, 1.7);
        let mut prev = 0.0;
        for k in 0..30 {
            let mu = 0.05 * (k as f64 + 1.0);
            let q = psi.root(mu).unwrap();
            assert!(q > prev);
            assert!((psi.psi(q) - mu).abs() <= 1e-11 * mu.max(1.0));
            prev = q;
        }
    }

    #[test]
    fn linear_root_is_ratio() {
        let psi = BranchingMechanism::Linear { gamma: 2.0 };
        assert!((psi.root(3.0).unwrap() - 1.5).abs() < 1e-13);
    }

    #[test]
    fn negative_mu_rejected() {
        let err = quadratic(0.0, 2.0).root(-1.0).unwrap_err();
        assert!(matches!(err, CbiError::Domain(_)));
    }

    #[test]
    fn criticality_follows_drift_sign() {
        assert_eq!(quadratic(0.5, 1.0).criticality(), Criticality::Subcritical);
        assert_eq!(quadratic(0.0, 1.0).criticality(), Criticality::Critical);
        assert_eq!(
            quadratic(-1.0, 1.0).criticality(),
            Criticality::Supercritical
        );
    }

    #[test]
    fn heavy_tailed_triplet_is_supercritical() {
        // density u^{-2} on (1, inf): tail mass integrates, the mean does not
        let psi = BranchingMechanism::GeneralTriplet {
            gamma: 0.1,
            sigma2: 0.0,
            levy: LevyDensitySpec {
                density: Arc::new(|u| u.powi(-2)),
                zero_index: 0.0,
                tail_index: 1.0,
                support: (1.0, f64::INFINITY),
            },
        };
        psi.validate().unwrap();
        assert_eq!(psi.psi_prime_zero(), f64::NEG_INFINITY);
        assert_eq!(psi.criticality(), Criticality::Supercritical);
        let q0 = psi.root(0.0).unwrap();
        assert!(q0 > 0.0);
        assert!(psi.psi(q0).abs() < 1e-9, "psi({q0}) = {}", psi.psi(q0));
        assert_eq!(psi.effective_drift(), 0.1);
    }

    #[test]
    fn narrow_bump_matches_direct_sum() {
        // unit mass spread uniformly over [0.99, 1.0], inside the
        // compensation window, so the compensated kernel applies everywhere
        let psi = BranchingMechanism::GeneralTriplet {
            gamma: 0.0,
            sigma2: 0.0,
            levy: LevyDensitySpec {
                density: Arc::new(|_| 100.0),
                zero_index: 0.0,
                tail_index: 0.0,
                support: (0.99, 1.0),
            },
        };
        psi.validate().unwrap();
        assert_eq!(psi.criticality(), Criticality::Critical);

        for q in [0.5, 1.0, 2.5] {
            // independent oracle: trapezoid rule on a fine fixed grid
            let n = 20_000;
            let h = 0.01 / n as f64;
            let kernel = |u: f64| (-q * u).exp_m1() + q * u;
            let mut trap = 0.5 * (kernel(0.99) + kernel(1.0));
            for k in 1..n {
                trap += kernel(0.99 + h * k as f64);
            }
            trap *= 100.0 * h;

            let got = psi.psi(q);
            assert!(
                (got - trap).abs() <= 1e-9 * trap.abs().max(1e-6),
                "q={q}: {got} vs trapezoid {trap}"
            );
            // midpoint closed form is good to O(width^2)
            let mid = (-0.995 * q).exp_m1() + 0.995 * q;
            assert!((got - mid).abs() < 1e-4);
        }

        let drift = psi.effective_drift();
        assert!((drift - 0.995).abs() < 1e-10);
        let model = CbiModel::new(psi, ImmigrationMechanism::LinearDrift { b: 0.199 }).unwrap();
        assert!((model.lower_boundary() - 0.2).abs() < 1e-10);
    }

    #[test]
    fn inverse_powers_triplet_matches_series() {
        // density u^{-3/2} on (0, 1):
        // jump part of psi(q) = sum_{k>=2} (-q)^k / (k! (k - 1/2))
        let psi = BranchingMechanism::GeneralTriplet {
            gamma: 1.0,
            sigma2: 0.0,
            levy: LevyDensitySpec {
                density: Arc::new(|u| u.powf(-1.5)),
                zero_index: 0.5,
                tail_index: 0.0,
                support: (0.0, 1.0),
            },
        };
        psi.validate().unwrap();

        let q = 1.0f64;
        let mut series = 0.0;
        let mut fact = 2.0; // k!
        for k in 2..30u32 {
            series += (-q).powi(k as i32) / (fact * (k as f64 - 0.5));
            fact *= (k + 1) as f64;
        }
        let got = psi.psi(q);
        assert!(
            (got - (1.0 + series)).abs() < 1e-8,
            "{got} vs {}",
            1.0 + series
        );

        assert!((psi.effective_drift() - 3.0).abs() < 1e-9);

        let h = 1e-5;
        let fd = (psi.psi(q + h) - psi.psi(q - h)) / (2.0 * h);
        assert!((psi.psi_prime(q) - fd).abs() < 1e-6);
    }

    #[test]
    fn log_tail_agrees_with_direct_density_integral() {
        let bar = log_tail_complement;
        for q in [0.01, 0.1, 1.0] {
            let parts = log_tail_phi(q);
            // direct route: total mass minus the e^{-qu}-weighted density
            let density = |u: f64| {
                let l = u.ln();
                let ll = l.ln();
                (ll + 1.0) / (u * l * l * ll * ll)
            };
            let weighted =
                quad::integrate_decaying_tail(|u| (-q * u).exp() * density(u), 100.0, q, 1e-11);
            let direct = bar(100.0) - weighted.value;
            assert!(
                (parts - direct).abs() <= 1e-8 * parts.abs(),
                "q={q}: {parts} vs {direct}"
            );
        }
        let phi = ImmigrationMechanism::LogTail;
        let psi = quadratic(0.5, 1.0);
        assert_eq!(phi.phi(&psi, 0.0), 0.0);
        // increasing and concave where phi still varies; all the mass sits
        // above u = 100, so phi saturates once q is of order 1/100
        let grid: Vec<f64> = (1..=8).map(|k| 2e-3 * k as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|q| phi.phi(&psi, *q)).collect();
        for w in vals.windows(2) {
            assert!(w[1] > w[0]);
        }
        for w in vals.windows(3) {
            assert!(w[2] - 2.0 * w[1] + w[0] < 1e-12);
        }
        assert!(!phi.log_moment_finite());
        assert!(ImmigrationMechanism::LinearDrift { b: 1.0 }.log_moment_finite());
    }

    #[test]
    fn derived_immigration_is_psi_prime() {
        let model = CbiModel::conditioned_critical_cb(1.3).unwrap();
        for q in [0.0, 0.7, 3.0] {
            assert!((model.phi(q) - 1.3 * q).abs() < 1e-14);
        }

        let stable = CbiModel::new(
            BranchingMechanism::Stable {
                gamma: 0.0,
                d: 0.8,
                alpha: 1.6,
            },
            ImmigrationMechanism::DerivedFromPsi,
        )
        .unwrap();
        for q in [0.4, 2.0] {
            let want = 0.8 * 1.6 * f64::powf(q, 0.6);
            assert!((stable.phi(q) - want).abs() < 1e-12 * want);
        }

        let err = CbiModel::new(quadratic(0.5, 1.0), ImmigrationMechanism::DerivedFromPsi)
            .unwrap_err();
        assert!(matches!(err, CbiError::Mechanism(_)));
    }

    #[test]
    fn atoms_evaluate_directly() {
        let phi = ImmigrationMechanism::Atoms {
            b: 0.3,
            atoms: vec![(1.0, 2.0), (0.5, 0.25)],
        };
        let psi = quadratic(0.0, 2.0);
        let q = 0.8f64;
        let want = 0.3 * q + 2.0 * (1.0 - (-q).exp()) + 0.25 * (1.0 - (-0.5 * q).exp());
        assert!((phi.phi(&psi, q) - want).abs() < 1e-15);
        let term = phi.small_q_power(&psi).unwrap();
        assert!((term.coeff - (0.3 + 2.0 + 0.125)).abs() < 1e-15);
        assert_eq!(term.exponent, 1.0);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let bad: Vec<BranchingMechanism> = vec![
            BranchingMechanism::Linear { gamma: 0.0 },
            BranchingMechanism::Linear { gamma: -1.0 },
            quadratic(1.0, 0.0),
            BranchingMechanism::Stable {
                gamma: 0.0,
                d: 1.0,
                alpha: 2.1,
            },
            BranchingMechanism::Stable {
                gamma: 0.0,
                d: 1.0,
                alpha: 1.0,
            },
            BranchingMechanism::Stable {
                gamma: 0.0,
                d: -1.0,
                alpha: 1.5,
            },
        ];
        for psi in bad {
            assert!(psi.validate().is_err(), "{psi:?} should not validate");
        }

        let psi = quadratic(0.0, 1.0);
        let bad_phi: Vec<ImmigrationMechanism> = vec![
            ImmigrationMechanism::LinearDrift { b: 0.0 },
            ImmigrationMechanism::Stable {
                b: 0.0,
                dprime: 1.0,
                beta: 1.0,
            },
            ImmigrationMechanism::Atoms {
                b: 0.0,
                atoms: vec![],
            },
            ImmigrationMechanism::Atoms {
                b: 0.0,
                atoms: vec![(1.0, -1.0)],
            },
        ];
        for phi in bad_phi {
            assert!(phi.validate(&psi).is_err(), "{phi:?} should not validate");
        }

        // negative effective drift in a bounded-variation triplet
        let sinking = BranchingMechanism::GeneralTriplet {
            gamma: -1.0,
            sigma2: 0.0,
            levy: LevyDensitySpec {
                density: Arc::new(|_| 1.0),
                zero_index: 0.0,
                tail_index: 0.0,
                support: (0.0, 1.0),
            },
        };
        assert!(sinking.validate().is_err());
    }

    #[test]
    fn power_terms_match_expectations() {
        let t = quadratic(0.0, 2.0).small_q_power().unwrap();
        assert_eq!((t.coeff, t.exponent), (1.0, 2.0));
        let t = quadratic(0.7, 2.0).small_q_power().unwrap();
        assert_eq!((t.coeff, t.exponent), (0.7, 1.0));
        let t = BranchingMechanism::Stable {
            gamma: 0.0,
            d: 0.9,
            alpha: 1.4,
        }
        .large_q_power()
        .unwrap();
        assert_eq!((t.coeff, t.exponent), (0.9, 1.4));

        let psi = quadratic(0.0, 2.0);
        let t = ImmigrationMechanism::Stable {
            b: 0.0,
            dprime: 0.4,
            beta: 0.3,
        }
        .small_q_power(&psi)
        .unwrap();
        assert_eq!((t.coeff, t.exponent), (0.4, 0.3));

        // saturating forms report exponent zero with the total jump rate
        let t = ImmigrationMechanism::Atoms {
            b: 0.0,
            atoms: vec![(2.0, 0.5), (3.0, 0.25)],
        }
        .large_q_power(&psi)
        .unwrap();
        assert_eq!((t.coeff, t.exponent), (0.75, 0.0));
        let t = ImmigrationMechanism::LogTail.large_q_power(&psi).unwrap();
        assert!((t.coeff - log_tail_complement(100.0)).abs() < 1e-15);
        assert_eq!(t.exponent, 0.0);
    }

    #[test]
    fn boundary_is_drift_ratio() {
        let model = CbiModel::new(
            BranchingMechanism::Linear { gamma: 2.0 },
            ImmigrationMechanism::LinearDrift { b: 1.0 },
        )
        .unwrap();
        assert_eq!(model.effective_drift(), 2.0);
        assert!((model.lower_boundary() - 0.5).abs() < 1e-15);

        let cir = CbiModel::cir(2.0, 0.5).unwrap();
        assert_eq!(cir.effective_drift(), f64::INFINITY);
        assert_eq!(cir.lower_boundary(), 0.0);
    }

    fn arbitrary_catalog_psi() -> impl Strategy<Value = BranchingMechanism> {
        prop_oneof![
            (0.1f64..3.0).prop_map(|gamma| BranchingMechanism::Linear { gamma }),
            ((-1.0f64..2.0), 0.2f64..3.0)
                .prop_map(|(gamma, sigma2)| BranchingMechanism::Quadratic { gamma, sigma2 }),
            ((-1.0f64..2.0), 0.2f64..2.0, 1.1f64..1.9).prop_map(|(gamma, d, alpha)| {
                BranchingMechanism::Stable { gamma, d, alpha }
            }),
            ((-1.0f64..2.0), 0.2f64..2.0, 0.2f64..2.0, 1.1f64..1.9).prop_map(
                |(gamma, sigma2, d, alpha)| BranchingMechanism::Mixed {
                    gamma,
                    sigma2,
                    d,
                    alpha
                }
            ),
        ]
    }

    proptest! {
        #[test]
        fn psi_vanishes_at_zero_and_is_convex(
            psi in arbitrary_catalog_psi(),
            q1 in 0.0f64..8.0,
            q2 in 0.0f64..8.0,
        ) {
            prop_assert_eq!(psi.psi(0.0), 0.0);
            let mid = psi.psi(0.5 * (q1 + q2));
            let chord = 0.5 * (psi.psi(q1) + psi.psi(q2));
            prop_assert!(mid <= chord + 1e-9 * chord.abs().max(1.0));
        }

        #[test]
        fn psi_prime_matches_finite_difference(
            psi in arbitrary_catalog_psi(),
            q in 0.1f64..5.0,
        ) {
            let h = 1e-6 * q.max(1.0);
            let fd = (psi.psi(q + h) - psi.psi(q - h)) / (2.0 * h);
            let exact = psi.psi_prime(q);
            prop_assert!((exact - fd).abs() <= 1e-5 * exact.abs().max(1.0),
                "{:?} at {}: {} vs {}", psi, q, exact, fd);
        }

        #[test]
        fn phi_vanishes_at_zero_and_is_concave(
            b in 0.1f64..2.0,
            dprime in 0.1f64..2.0,
            beta in 0.1f64..0.9,
            q1 in 0.0f64..8.0,
            q2 in 0.0f64..8.0,
        ) {
            let psi = BranchingMechanism::Quadratic { gamma: 0.0, sigma2: 1.0 };
            let phi = ImmigrationMechanism::Stable { b, dprime, beta };
            prop_assert_eq!(phi.phi(&psi, 0.0), 0.0);
            let mid = phi.phi(&psi, 0.5 * (q1 + q2));
            let chord = 0.5 * (phi.phi(&psi, q1) + phi.phi(&psi, q2));
            prop_assert!(mid >= chord - 1e-9 * chord.abs().max(1.0));
        }
    }
}
