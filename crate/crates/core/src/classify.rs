//! Boundary classification: recurrence, positive recurrence, polarity.
//!
//! Both questions reduce to convergence tests on the invariant density
//! `g(z) = exp(J(z)) / psi(z)` with `J(z) = integral_theta^z phi/psi`:
//!
//! * recurrence of the process is divergence of `integral_0 g(z) dz` at
//!   the left endpoint, controlled by the local powers of `phi` and `psi`
//!   at 0;
//! * attainability of the lower boundary point is convergence of
//!   `integral^inf e^{-vz} g(z) dz` at infinity, controlled by the powers
//!   at infinity (`v` is the boundary, 0 for infinite effective drift).
//!
//! For the catalog mechanisms both tests are exact exponent comparisons.
//! General-triplet mechanisms fall back to numerical divergence probes of
//! the same integrals. Positive recurrence additionally needs a finite
//! logarithmic moment of the immigration measure; the heavy-tail preset
//! is the canonical example that is recurrent but has none, so it never
//! settles into a stationary law.

use crate::error::{CbiError, Result};
use crate::mechanism::{CbiModel, Criticality, ImmigrationMechanism};
use crate::quad::{self, ProbeSide, ProbeVerdict};

/// Long-run return behaviour of the process.
#[derive(Debug, Clone, PartialEq)]
pub enum Recurrence {
    /// Recurrent with a stationary law it converges to.
    PositiveRecurrent,
    /// Recurrent but with no stationary law.
    NullRecurrent,
    Transient,
    /// The question does not apply or could not be settled; the note says
    /// why.
    Undetermined { note: String },
}

/// Whether the lower boundary point of the state space can be reached in
/// finite time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Polar,
    NotPolar,
}

/// Classification outcome plus the reasoning that produced it, one step
/// per line.
#[derive(Debug, Clone)]
pub struct ClassificationReport {
    pub recurrence: Recurrence,
    pub polarity: Polarity,
    pub evidence: Vec<String>,
}

const PROBE_ANCHOR: f64 = 1.0;
const PROBE_WINDOWS: usize = 40;

/// Classify recurrence and boundary attainability together.
pub fn classify(model: &CbiModel) -> Result<ClassificationReport> {
    let mut evidence = Vec::new();
    let recurrence = classify_recurrence(model, &mut evidence)?;
    let polarity = classify_polarity(model, &mut evidence)?;
    Ok(ClassificationReport {
        recurrence,
        polarity,
        evidence,
    })
}

fn classify_recurrence(model: &CbiModel, evidence: &mut Vec<String>) -> Result<Recurrence> {
    if model.criticality() == Criticality::Supercritical {
        evidence.push("psi'(0+) < 0: supercritical, the process explodes with positive probability".into());
        return Ok(Recurrence::Transient);
    }
    if model.phi.is_zero() {
        evidence.push(
            "no immigration: the population is absorbed after extinction, so recurrence \
             in the regenerative sense does not apply"
                .into(),
        );
        return Ok(Recurrence::Undetermined {
            note: "pure branching process without immigration".into(),
        });
    }

    let pt = model.psi.small_q_power();
    let ft = model.phi.small_q_power(&model.psi);

    match (pt, ft) {
        (Some(pt), Some(ft)) => {
            evidence.push(format!(
                "local powers at 0: psi ~ {:.6} u^{:.6}, phi ~ {:.6} u^{:.6}",
                pt.coeff, pt.exponent, ft.coeff, ft.exponent
            ));
            let p = ft.exponent - pt.exponent;
            if p > -1.0 {
                evidence.push(format!(
                    "power gap {p:.6} > -1: the invariant density is non-integrable at 0, recurrent"
                ));
                Ok(positive_or_null(model, evidence))
            } else if p == -1.0 {
                let c = ft.coeff / pt.coeff;
                let edge = pt.exponent - 1.0;
                evidence.push(format!(
                    "power gap exactly -1: compare c = {c:.6} against psi exponent - 1 = {edge:.6}"
                ));
                if c <= edge {
                    evidence.push("c <= edge: recurrent, but the mean grows, so never positive".into());
                    Ok(Recurrence::NullRecurrent)
                } else {
                    evidence.push("c > edge: the invariant density is integrable at 0, transient".into());
                    Ok(Recurrence::Transient)
                }
            } else {
                evidence.push(format!(
                    "power gap {p:.6} < -1: exp(J) vanishes essentially at 0, transient"
                ));
                Ok(Recurrence::Transient)
            }
        }
        (Some(_), None) => match model.phi {
            ImmigrationMechanism::LogTail => {
                if model.criticality() == Criticality::Subcritical {
                    evidence.push(
                        "subcritical with slowly varying immigration: recurrent, but the \
                         immigration measure has no finite logarithmic moment"
                            .into(),
                    );
                    Ok(Recurrence::NullRecurrent)
                } else {
                    evidence.push(
                        "critical branching with slowly varying immigration: phi/psi \
                         diverges too fast at 0, transient"
                            .into(),
                    );
                    Ok(Recurrence::Transient)
                }
            }
            _ => probe_recurrence(model, evidence),
        },
        (None, _) => probe_recurrence(model, evidence),
    }
}

// A recurrent process settles into a stationary law exactly when
// integral_0 phi/psi converges. On the power path that is already encoded
// in the exponent gap; what remains is the logarithmic moment of the
// immigration measure, which for subcritical mechanisms is the same
// condition. The heavy-tail preset is the one catalog entry without it.
fn positive_or_null(model: &CbiModel, evidence: &mut Vec<String>) -> Recurrence {
    if model.phi.log_moment_finite() {
        evidence.push("immigration has a finite logarithmic moment: positive recurrent".into());
        Recurrence::PositiveRecurrent
    } else {
        evidence.push("immigration has no finite logarithmic moment: null recurrent".into());
        Recurrence::NullRecurrent
    }
}

/// Probe-path version of the stationarity decision: test convergence of
/// `integral_0 phi/psi` directly.
fn positive_or_null_probe(model: &CbiModel, evidence: &mut Vec<String>) -> Recurrence {
    let g = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let p = model.psi(u);
        if p <= 0.0 {
            return f64::NAN;
        }
        model.phi(u) / p
    };
    match quad::divergence_probe(g, 0.0, ProbeSide::FromAbove, 40) {
        ProbeVerdict::ConvergesTo { .. } => {
            evidence.push("numerical probe: the stationarity integral converges, positive recurrent".into());
            Recurrence::PositiveRecurrent
        }
        ProbeVerdict::Diverges => {
            evidence.push("numerical probe: the stationarity integral diverges, null recurrent".into());
            Recurrence::NullRecurrent
        }
        ProbeVerdict::Inconclusive => Recurrence::Undetermined {
            note: "recurrent, but the stationarity probe did not reach a verdict".into(),
        },
    }
}

/// `J(z) = integral_1^z phi/psi du` for the numerical probes. Values are
/// computed once per dyadic octave and interpolated linearly in `log z`
/// between anchors; the probes only compare window-sum ratios against a
/// contraction threshold, so percent-level error in `J` is harmless,
/// while a fresh quadrature per evaluation would make triplet mechanisms
/// (whose psi is itself a quadrature) infeasibly slow.
struct JCache<'m> {
    model: &'m CbiModel,
    /// down[i] = J at 2^{-(i+1)}
    down: std::cell::RefCell<Vec<f64>>,
    /// up[i] = J at 2^{i+1}
    up: std::cell::RefCell<Vec<f64>>,
}

impl<'m> JCache<'m> {
    fn new(model: &'m CbiModel) -> Self {
        JCache {
            model,
            down: std::cell::RefCell::new(Vec::new()),
            up: std::cell::RefCell::new(Vec::new()),
        }
    }

    fn segment(&self, lo: f64, hi: f64) -> f64 {
        let integrand = |u: f64| {
            let p = self.model.psi(u);
            if p <= 0.0 {
                return f64::NAN;
            }
            self.model.phi(u) / p
        };
        quad::integrate_adaptive_budget(integrand, lo, hi, 1e-7, 40).value
    }

    fn ensure_up(&self, n: usize) {
        while self.up.borrow().len() < n {
            let k = self.up.borrow().len() as i32;
            let seg = self.segment(2f64.powi(k), 2f64.powi(k + 1));
            let prev = if k == 0 {
                0.0
            } else {
                self.up.borrow()[(k - 1) as usize]
            };
            self.up.borrow_mut().push(prev + seg);
        }
    }

    fn ensure_down(&self, n: usize) {
        while self.down.borrow().len() < n {
            let k = self.down.borrow().len() as i32;
            let seg = self.segment(2f64.powi(-(k + 1)), 2f64.powi(-k));
            let prev = if k == 0 {
                0.0
            } else {
                self.down.borrow()[(k - 1) as usize]
            };
            self.down.borrow_mut().push(prev - seg);
        }
    }

    fn j_at(&self, z: f64) -> f64 {
        if z == PROBE_ANCHOR {
            return 0.0;
        }
        if z > PROBE_ANCHOR {
            // bracket [2^i, 2^{i+1}]
            let i = z.log2().floor() as usize;
            self.ensure_up(i + 1);
            let up = self.up.borrow();
            let lo_j = if i == 0 { 0.0 } else { up[i - 1] };
            let hi_j = up[i];
            let frac = z.log2() - i as f64;
            lo_j + (hi_j - lo_j) * frac
        } else {
            // bracket [2^{-k}, 2^{-k+1}]
            let k = (-z.log2()).ceil().max(1.0) as usize;
            self.ensure_down(k);
            let down = self.down.borrow();
            let lo_j = down[k - 1];
            let hi_j = if k == 1 { 0.0 } else { down[k - 2] };
            let frac = z.log2() + k as f64;
            lo_j + (hi_j - lo_j) * frac
        }
    }
}

/// Numerical recurrence test: does `integral_0 exp(J)/psi` diverge at 0?
fn probe_recurrence(model: &CbiModel, evidence: &mut Vec<String>) -> Result<Recurrence> {
    let cache = JCache::new(model);
    let h = |z: f64| {
        if z <= 0.0 {
            return 0.0;
        }
        let p = model.psi(z);
        if p <= 0.0 {
            return f64::NAN;
        }
        let j = cache.j_at(z);
        if j > 700.0 {
            return f64::INFINITY;
        }
        j.exp() / p
    };
    match quad::divergence_probe(h, 0.0, ProbeSide::FromAbove, PROBE_WINDOWS) {
        ProbeVerdict::Diverges => {
            evidence.push("numerical probe: the invariant density is non-integrable at 0, recurrent".into());
            Ok(positive_or_null_probe(model, evidence))
        }
        ProbeVerdict::ConvergesTo { .. } => {
            evidence.push("numerical probe: the invariant density is integrable at 0, transient".into());
            Ok(Recurrence::Transient)
        }
        ProbeVerdict::Inconclusive => {
            evidence.push("numerical probe at 0 was inconclusive".into());
            Ok(Recurrence::Undetermined {
                note: "the endpoint divergence probe did not reach a verdict".into(),
            })
        }
    }
}

fn classify_polarity(model: &CbiModel, evidence: &mut Vec<String>) -> Result<Polarity> {
    let drift = model.effective_drift();
    if drift.is_finite() {
        evidence.push(format!(
            "effective drift {drift:.6} is finite: paths have bounded variation and \
             cannot reach the lower boundary point"
        ));
        return Ok(Polarity::Polar);
    }
    evidence.push("effective drift is infinite".into());

    let pt = model.psi.large_q_power();
    let ft = if model.phi.is_zero() {
        None
    } else {
        model.phi.large_q_power(&model.psi)
    };

    if let Some(pt) = pt {
        if model.phi.is_zero() {
            evidence.push(format!(
                "tail powers: psi ~ {:.6} z^{:.6}, no immigration",
                pt.coeff, pt.exponent
            ));
            return if pt.exponent > 1.0 {
                evidence.push("psi tail exponent exceeds 1: boundary point attainable".into());
                Ok(Polarity::NotPolar)
            } else {
                evidence.push("psi tail is at most linear: boundary point polar".into());
                Ok(Polarity::Polar)
            };
        }
        if let Some(ft) = ft {
            evidence.push(format!(
                "tail powers: psi ~ {:.6} z^{:.6}, phi ~ {:.6} z^{:.6}",
                pt.coeff, pt.exponent, ft.coeff, ft.exponent
            ));
            let gap = ft.exponent + 1.0 - pt.exponent;
            return if gap > 0.0 {
                evidence.push("phi tail dominates: exp(J) outgrows every power, polar".into());
                Ok(Polarity::Polar)
            } else if gap == 0.0 {
                let kappa = ft.coeff / pt.coeff;
                let edge = pt.exponent - 1.0;
                evidence.push(format!(
                    "balanced tails: compare kappa = {kappa:.6} against psi exponent - 1 = {edge:.6}"
                ));
                if kappa >= edge {
                    evidence.push("kappa >= edge: boundary point polar".into());
                    Ok(Polarity::Polar)
                } else {
                    evidence.push("kappa < edge: boundary point attainable".into());
                    Ok(Polarity::NotPolar)
                }
            } else {
                evidence.push(format!(
                    "phi tail is negligible; psi exponent {:.6} > 1 makes the boundary attainable",
                    pt.exponent
                ));
                Ok(Polarity::NotPolar)
            };
        }
    }
    probe_polarity(model, evidence)
}

/// Numerical polarity test: does `integral^inf exp(J)/psi` converge? The
/// substitution w = anchor/z maps the tail to a left-endpoint probe at 0.
fn probe_polarity(model: &CbiModel, evidence: &mut Vec<String>) -> Result<Polarity> {
    let cache = JCache::new(model);
    let h = |w: f64| {
        if w <= 0.0 {
            return 0.0;
        }
        let z = PROBE_ANCHOR / w;
        let p = model.psi(z);
        if p <= 0.0 {
            return f64::NAN;
        }
        let j = cache.j_at(z);
        if j > 700.0 {
            return f64::INFINITY;
        }
        j.exp() / p * PROBE_ANCHOR / (w * w)
    };
    match quad::divergence_probe(h, 0.0, ProbeSide::FromAbove, PROBE_WINDOWS) {
        ProbeVerdict::Diverges => {
            evidence.push("numerical probe: the boundary integral diverges, polar".into());
            Ok(Polarity::Polar)
        }
        ProbeVerdict::ConvergesTo { .. } => {
            evidence.push("numerical probe: the boundary integral converges, attainable".into());
            Ok(Polarity::NotPolar)
        }
        ProbeVerdict::Inconclusive => Err(CbiError::numeric(
            "polarity probe did not reach a verdict for this mechanism pair",
        )),
    }
}
