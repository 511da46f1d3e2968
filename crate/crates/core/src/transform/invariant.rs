//! Construction and evaluation of the invariant function
//!
//! ```text
//! f(x) = integral_q^inf e^{-xz} g(z) dz,    g(z) = exp(J(z)) / (psi(z) - mu),
//! J(z) = integral_theta^z (phi(u) + lambda) / (psi(u) - mu) du,
//! ```
//!
//! with `q` the largest root of `psi = mu`. The profile classifies the
//! behaviour of `g` at the left endpoint once and reuses that analysis for
//! every evaluation:
//!
//! * `psi'(q) > 0`: `g(z) ~ C (z-q)^{rho-1}` with
//!   `rho = (phi(q)+lambda)/psi'(q)`. For `rho > 0` the integral converges
//!   (power-law endpoint); `rho = 0` means `f` diverges at `q` for every
//!   argument, but the two-point ratio still has the limit `e^{-(x-a)q}`.
//! * `psi'(q) = 0` (only at `q = mu = 0`, critical branching): with
//!   `lambda > 0` the integrand vanishes faster than any power at 0; with
//!   `lambda = 0` the local powers of `phi` and `psi` decide between a
//!   power-law endpoint, essential vanishing, and ratio-limit divergence.
//!
//! `J` is evaluated through a cached ladder of anchor integrals. Near `q`
//! the singular part `j_sing * ln((z-q)/(theta-q))` is split off so the
//! remainder integrand stays integrable, and all magnitudes are assembled
//! in log space: the integrand is `exp(W)` with
//! `W(z) = -xz + J(z) - ln(psi(z) - mu)`, which survives far smaller
//! `z - q` than `g` itself would in linear space.

use std::cell::RefCell;

use crate::error::{CbiError, Result};
use crate::mechanism::CbiModel;
use crate::quad;

/// Behaviour of `g` at the lower endpoint `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum EndpointKind {
    /// `g(z) ~ C (z-q)^{int_rho - 1}`; `j_sing` is the coefficient of the
    /// `1/(u-q)` singularity split off from `J'`.
    PowerLaw { j_sing: f64, int_rho: f64 },
    /// `g` vanishes faster than any power as `z -> q` (critical branching).
    Essential,
    /// `f` diverges at the endpoint for every argument; ratios tend to
    /// `e^{-(x-a)q}`.
    RatioLimit,
}

// Below this offset from q the regularized remainder of J' is treated as
// zero; its true contribution is O(dz^s) for some s > 0 and the direct
// formula is pure rounding noise there.
const R_FLOOR_FRACTION: f64 = 1e-60;
// Relative tolerance for the cached anchor integrals of J. These are
// exponent-level quantities, so errors pass through as relative errors of
// the final value; the budget is deliberately small because segments close
// to the endpoint are noise-limited and would burn any budget without
// tightening the estimate.
const LADDER_TOL: f64 = 1e-10;
const LADDER_BUDGET: usize = 48;
const MAX_UP_ANCHORS: usize = 1080;

pub(crate) struct InvariantFn<'m> {
    model: &'m CbiModel,
    pub(crate) lambda: f64,
    /// Largest root of `psi = mu`; left endpoint of the integration range.
    /// All endpoint arithmetic treats this computed root as exact, so the
    /// instance effectively works with `mu = psi(q)`.
    pub(crate) q: f64,
    /// `psi'(q)`.
    dpsi_q: f64,
    /// Anchor of `J`; any value `> q` gives the same ratios.
    theta: f64,
    pub(crate) kind: EndpointKind,
    /// Lower boundary of the state space, `b / effective drift`.
    pub(crate) boundary_v: f64,
    /// Local power of `psi` at 0 (used for log-space fallbacks at a
    /// critical endpoint).
    psi_small: Option<crate::mechanism::PowerTerm>,
    tol: f64,
    // Cached values of the remainder R at geometric anchors.
    // up_r[k] = R(theta * 2^k); down_r[j] = R(q + (theta - q) * 2^-j).
    up_r: RefCell<Vec<f64>>,
    down_r: RefCell<Vec<f64>>,
}

impl<'m> InvariantFn<'m> {
    pub(crate) fn new(model: &'m CbiModel, lambda: f64, mu: f64, tol: f64) -> Result<Self> {
        Self::with_anchor(model, lambda, mu, tol, None)
    }

    /// Build the profile with an explicit anchor. Exists so callers can
    /// confirm that ratios do not depend on the anchor choice.
    pub(crate) fn with_anchor(
        model: &'m CbiModel,
        lambda: f64,
        mu: f64,
        tol: f64,
        anchor: Option<f64>,
    ) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(CbiError::domain("lambda must be finite and nonnegative"));
        }
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(CbiError::domain("mu must be finite and nonnegative"));
        }
        if !(tol > 0.0) || tol >= 0.1 {
            return Err(CbiError::domain("tolerance must lie in (0, 0.1)"));
        }
        let q = model.root(mu)?;
        let theta = match anchor {
            None => q + 1.0,
            Some(t) => {
                if !(t > q) || !t.is_finite() {
                    return Err(CbiError::domain(format!(
                        "anchor must be finite and exceed the root {q}"
                    )));
                }
                t
            }
        };
        let dpsi_q = model.psi_prime(q);
        let phi_q = model.phi(q);
        let psi_small = model.psi.small_q_power();

        let kind = if dpsi_q > 0.0 {
            let rho = (phi_q + lambda) / dpsi_q;
            if rho > 0.0 {
                EndpointKind::PowerLaw {
                    j_sing: rho,
                    int_rho: rho,
                }
            } else {
                EndpointKind::RatioLimit
            }
        } else {
            // Critical endpoint: q = 0, mu = 0, psi'(0) = 0.
            if lambda > 0.0 {
                EndpointKind::Essential
            } else if model.phi.is_zero() {
                EndpointKind::RatioLimit
            } else {
                let pt = psi_small.ok_or_else(|| {
                    CbiError::unsupported(
                        "critical general-triplet branching has no local power expansion; \
                         the zero-rate transform needs one",
                    )
                })?;
                match model.phi.small_q_power(&model.psi) {
                    Some(ft) => {
                        let p = ft.exponent - pt.exponent;
                        if p > -1.0 {
                            EndpointKind::RatioLimit
                        } else if p == -1.0 {
                            let c = ft.coeff / pt.coeff;
                            let int_rho = c - (pt.exponent - 1.0);
                            if int_rho > 0.0 {
                                EndpointKind::PowerLaw { j_sing: c, int_rho }
                            } else {
                                EndpointKind::RatioLimit
                            }
                        } else {
                            EndpointKind::Essential
                        }
                    }
                    None => {
                        if matches!(
                            model.phi,
                            crate::mechanism::ImmigrationMechanism::LogTail
                        ) {
                            // phi vanishes slower than any power but
                            // phi/psi still diverges at 0 fast enough for
                            // exp(J) to vanish essentially.
                            EndpointKind::Essential
                        } else {
                            return Err(CbiError::unsupported(
                                "immigration mechanism has no local power expansion at 0",
                            ));
                        }
                    }
                }
            }
        };

        Ok(InvariantFn {
            model,
            lambda,
            q,
            dpsi_q,
            theta,
            kind,
            boundary_v: model.lower_boundary(),
            psi_small,
            tol,
            up_r: RefCell::new(vec![0.0]),
            down_r: RefCell::new(vec![0.0]),
        })
    }

    fn delta_cap(&self) -> f64 {
        self.theta - self.q
    }

    /// `psi(q + dz) - mu` guarded against cancellation noise. `q` is this
    /// instance's root of `psi = mu`, and the difference is taken against
    /// `psi(q)` rather than `mu` so that `dz = 0` is a root exactly; the
    /// root's own rounding residue would otherwise pollute the singularity
    /// subtraction at small offsets. Convexity gives the exact lower bound
    /// `psi'(q) * dz`; anything far below it is rounding, so the
    /// first-order model takes over there.
    fn psi_minus_mu(&self, dz: f64) -> f64 {
        let b = self.model.psi.psi_diff(self.q, dz);
        let floor = self.dpsi_q * dz;
        if b < 0.5 * floor || b <= 0.0 {
            if self.dpsi_q > 0.0 {
                floor
            } else if let Some(t) = self.psi_small {
                t.coeff * dz.powf(t.exponent)
            } else {
                b.max(f64::MIN_POSITIVE)
            }
        } else {
            b
        }
    }

    /// `ln(psi(q + dz) - mu)` in a form that survives dz far below the
    /// underflow point of `psi` itself.
    fn ln_psi_minus_mu(&self, dz: f64) -> f64 {
        let b = self.model.psi.psi_diff(self.q, dz);
        let floor = self.dpsi_q * dz;
        if b >= 0.5 * floor && b > 1e-290 {
            b.ln()
        } else if self.dpsi_q > 0.0 {
            self.dpsi_q.ln() + dz.ln()
        } else if let Some(t) = self.psi_small {
            t.coeff.ln() + t.exponent * dz.ln()
        } else {
            b.max(f64::MIN_POSITIVE).ln()
        }
    }

    /// Integrand of the remainder part of `J` at offset `dz = u - q`.
    /// For a power-law endpoint the `j_sing/(u-q)` singularity is removed;
    /// otherwise this is the raw integrand of `J'`.
    fn r_at(&self, dz: f64) -> f64 {
        if dz <= 0.0 {
            return 0.0;
        }
        let u = self.q + dz;
        let raw = (self.model.phi(u) + self.lambda) / self.psi_minus_mu(dz);
        match self.kind {
            EndpointKind::PowerLaw { j_sing, .. } => {
                if dz < self.delta_cap() * R_FLOOR_FRACTION {
                    0.0
                } else {
                    raw - j_sing / dz
                }
            }
            _ => raw,
        }
    }

    /// Ladder segments live in the exponent, so their relative error
    /// passes straight through to the value; follow the instance
    /// tolerance below the default budget, floored where segment
    /// integrands are rounding-noise limited.
    fn ladder_tol(&self) -> f64 {
        (0.1 * self.tol).clamp(1e-13, LADDER_TOL)
    }

    fn ladder_segment(&self, lo: f64, hi: f64) -> f64 {
        let r = quad::integrate_adaptive_budget(
            |dz| self.r_at(dz),
            lo,
            hi,
            self.ladder_tol(),
            LADDER_BUDGET,
        );
        r.value
    }

    /// Remainder `R(z) = J(z) - j_sing * ln((z-q)/(theta-q))` (power-law
    /// endpoints) or `J(z)` itself (essential endpoints), via the anchor
    /// ladder. Neither ladder cache is held while integrating, so the
    /// integrand closures stay free to borrow `self`.
    fn r_value(&self, dz: f64) -> f64 {
        let cap = self.delta_cap();
        if dz >= cap {
            // Upward ladder: anchors at theta * 2^k.
            let z = self.q + dz;
            let mut k = 0usize;
            let mut lo = self.theta;
            while lo * 2.0 <= z && k < MAX_UP_ANCHORS {
                k += 1;
                lo *= 2.0;
            }
            loop {
                let len = self.up_r.borrow().len();
                if len > k {
                    break;
                }
                let a = self.theta * 2f64.powi((len - 1) as i32);
                let prev = self.up_r.borrow()[len - 1];
                let seg = self.ladder_segment(a - self.q, 2.0 * a - self.q);
                self.up_r.borrow_mut().push(prev + seg);
            }
            let base = self.up_r.borrow()[k];
            base + self.ladder_segment(lo - self.q, dz.max(lo - self.q))
        } else {
            // Downward ladder: anchors at offsets cap * 2^-j.
            let mut j = 0usize;
            let mut hi = cap;
            while hi * 0.5 >= dz && j < 220 {
                j += 1;
                hi *= 0.5;
            }
            loop {
                let len = self.down_r.borrow().len();
                if len > j {
                    break;
                }
                let upper = cap * 0.5f64.powi((len - 1) as i32);
                let prev = self.down_r.borrow()[len - 1];
                let seg = self.ladder_segment(0.5 * upper, upper);
                self.down_r.borrow_mut().push(prev - seg);
            }
            let base = self.down_r.borrow()[j];
            base - self.ladder_segment(dz.min(hi), hi)
        }
    }

    /// `J(q + dz)`.
    fn j_at(&self, dz: f64) -> f64 {
        match self.kind {
            EndpointKind::PowerLaw { j_sing, .. } => {
                j_sing * (dz / self.delta_cap()).ln() + self.r_value(dz)
            }
            _ => self.r_value(dz),
        }
    }

    /// `W(q + dz) = -x(q + dz) + J - ln(psi - mu)`, the log of the
    /// integrand of `f(x)`.
    fn w_at(&self, x: f64, dz: f64) -> f64 {
        -x * (self.q + dz) + self.j_at(dz) - self.ln_psi_minus_mu(dz)
    }

    /// Power of the integrand tail at `z -> inf` when `x` sits exactly on
    /// the lower boundary: the integrand decays like `z^{-(rho_w + 1)}`.
    /// `NEG_INFINITY` and nonpositive values both mean the tail diverges.
    fn boundary_tail_exponent(&self) -> Result<f64> {
        let pt = self.model.psi.large_q_power().ok_or_else(|| {
            CbiError::unsupported(
                "no large-argument power expansion of the branching mechanism; \
                 cannot evaluate the invariant function at the lower boundary",
            )
        })?;
        let kappa = if self.model.phi.is_zero() {
            0.0
        } else {
            let ft = self.model.phi.large_q_power(&self.model.psi).ok_or_else(|| {
                CbiError::unsupported(
                    "no large-argument power expansion of the immigration mechanism",
                )
            })?;
            if ft.exponent + 1.0 < pt.exponent {
                0.0
            } else if ft.exponent + 1.0 == pt.exponent {
                ft.coeff / pt.coeff
            } else {
                // exp(J) outgrows every power; the tail integral diverges.
                return Ok(f64::NEG_INFINITY);
            }
        };
        let kappa = kappa
            + if pt.exponent == 1.0 {
                self.lambda / pt.coeff
            } else {
                0.0
            };
        Ok(pt.exponent - kappa - 1.0)
    }

    /// Tail integral over `[theta, inf)` when `x` equals the lower
    /// boundary, where no exponential decay is left and the tail is a pure
    /// power. Returns `INFINITY` when it diverges.
    fn boundary_tail(&self, x: f64, tol: f64) -> Result<(f64, f64)> {
        let rho_w = self.boundary_tail_exponent()?;
        if rho_w <= 0.0 {
            return Ok((f64::INFINITY, 0.0));
        }
        let theta = self.theta;
        let f = |w: f64| -> f64 {
            if w <= 0.0 {
                return 0.0;
            }
            let z = theta / w;
            (self.w_at(x, z - self.q)).exp() * theta / (w * w)
        };
        let r = quad::integrate_power_singular(f, 0.0, 1.0, rho_w, tol);
        if r.status == quad::QuadStatus::Diverged {
            return Err(CbiError::numeric(
                "tail integral of the invariant function failed to converge",
            ));
        }
        Ok((r.value, r.abs_error))
    }

    /// Evaluate `F_k(x) = integral z^k e^{-xz} g(z) dz` for `k = 0, 1, 2`.
    /// `k = 0` is the invariant function itself; the higher moments feed
    /// the generator residual check. Returns `(value, abs_err)`; the value
    /// is `INFINITY` when `x` sits on a boundary whose tail diverges.
    pub(crate) fn eval_weighted(&self, x: f64, k: u32) -> Result<(f64, f64)> {
        if matches!(self.kind, EndpointKind::RatioLimit) {
            return Err(CbiError::numeric(
                "invariant function diverges pointwise; only ratios are defined",
            ));
        }
        if !x.is_finite() || x < self.boundary_v {
            return Err(CbiError::domain(format!(
                "argument {x} lies below the lower boundary {}",
                self.boundary_v
            )));
        }
        let at_boundary = x == self.boundary_v;
        if at_boundary && k > 0 {
            return Err(CbiError::unsupported(
                "weighted moments are not available on the lower boundary",
            ));
        }
        let kf = k as f64;
        let tol_piece = self.tol * 0.4;

        // Left piece over [q, theta].
        let (near_v, near_e) = match self.kind {
            EndpointKind::PowerLaw { int_rho, .. } => {
                let rho_eff = if self.q == 0.0 { int_rho + kf } else { int_rho };
                let h = |dz: f64| -> f64 {
                    if dz <= 0.0 {
                        return 0.0;
                    }
                    let wln = if k == 0 { 0.0 } else { kf * (self.q + dz).ln() };
                    (self.w_at(x, dz) + wln).exp()
                };
                let r = quad::integrate_power_singular(h, 0.0, self.delta_cap(), rho_eff, tol_piece);
                if r.status == quad::QuadStatus::Diverged {
                    return Err(CbiError::numeric(
                        "endpoint integral of the invariant function failed to converge",
                    ));
                }
                (r.value, r.abs_error)
            }
            EndpointKind::Essential => self.essential_near(x, k, tol_piece)?,
            EndpointKind::RatioLimit => unreachable!(),
        };

        // Right piece over [theta, inf).
        let (tail_v, tail_e) = if at_boundary {
            let (v, e) = self.boundary_tail(x, tol_piece)?;
            if v.is_infinite() {
                return Ok((f64::INFINITY, 0.0));
            }
            (v, e)
        } else {
            let rate = 0.5 * (x - self.boundary_v);
            let h = |z: f64| -> f64 {
                let wln = if k == 0 { 0.0 } else { kf * z.ln() };
                (self.w_at(x, z - self.q) + wln).exp()
            };
            let r = quad::integrate_decaying_tail(h, self.theta, rate, tol_piece);
            if r.status == quad::QuadStatus::Diverged {
                return Err(CbiError::numeric(
                    "tail integral of the invariant function failed to converge",
                ));
            }
            (r.value, r.abs_error)
        };

        let value = near_v + tail_v;
        // Anchor-ladder segments carry a small relative slop of their own.
        let err = near_e + tail_e + self.ladder_tol() * value.abs();
        Ok((value, err))
    }

    /// Near piece for an essentially vanishing endpoint: pick a cutoff
    /// `delta` with a certified bound on the discarded mass, then
    /// integrate `[delta, theta]` adaptively. Critical endpoints have
    /// `q = 0`, so offsets and absolute positions coincide.
    fn essential_near(&self, x: f64, k: u32, tol: f64) -> Result<(f64, f64)> {
        let kf = k as f64;
        let cap = self.delta_cap();
        let h = |z: f64| -> f64 {
            if z <= 0.0 {
                return 0.0;
            }
            let wln = if k == 0 { 0.0 } else { kf * z.ln() };
            (self.w_at(x, z) + wln).exp()
        };
        // Coarse scale so the cutoff criterion has something to compare to.
        let coarse = quad::integrate_adaptive_budget(&h, 0.5 * cap, cap, 1e-3, 80);
        let scale = coarse.value.abs().max(1e-300);

        let mut delta = 0.5 * cap;
        let mut bound = f64::INFINITY;
        for _ in 0..700 {
            bound = if self.lambda > 0.0 {
                // integral_0^delta e^{-xz} g dz <= exp(J(delta)) / lambda,
                // because (exp(J))' = (phi + lambda) g >= lambda g.
                let j = self.j_at(delta);
                if j < -700.0 {
                    0.0
                } else {
                    j.exp() / self.lambda
                }
            } else {
                // g is increasing near 0 here (phi dominates psi' in the
                // p < -1 regime), so the discarded mass is at most
                // delta * g(delta).
                let w = self.w_at(x, delta);
                let w_half = self.w_at(x, 0.5 * delta);
                if w_half >= w {
                    // Not yet in the monotone regime; keep shrinking.
                    delta *= 0.5;
                    continue;
                }
                if w < -700.0 {
                    0.0
                } else {
                    delta * w.exp()
                }
            };
            if bound <= 0.25 * tol * scale {
                break;
            }
            delta *= 0.5;
        }
        if !(bound <= 0.25 * tol * scale) {
            return Err(CbiError::numeric(
                "could not certify the endpoint cutoff of an essentially vanishing integrand",
            ));
        }
        let r = quad::integrate_adaptive(&h, delta, cap, tol);
        if r.status == quad::QuadStatus::Diverged {
            return Err(CbiError::numeric(
                "endpoint integral of the invariant function failed to converge",
            ));
        }
        Ok((r.value, r.abs_error + bound))
    }

    /// The transform ratio `f(x)/f(a)`, `x > a >= v`. Handles the
    /// ratio-limit endpoint and evaluation on the lower boundary.
    pub(crate) fn ratio(&self, x: f64, a: f64) -> Result<(f64, f64)> {
        if !(x > a) {
            return Err(CbiError::domain(format!(
                "ratio needs x > a, got x = {x}, a = {a}"
            )));
        }
        if a < self.boundary_v {
            return Err(CbiError::domain(format!(
                "level {a} lies below the lower boundary {}",
                self.boundary_v
            )));
        }
        match self.kind {
            EndpointKind::RatioLimit => {
                if a == self.boundary_v {
                    // Both arguments diverge identically at the left
                    // endpoint, but a boundary argument can add a tail
                    // divergence that wins and sends the ratio to 0.
                    let rho_w = self.boundary_tail_exponent()?;
                    if rho_w <= 0.0 {
                        return Ok((0.0, 0.0));
                    }
                }
                let e = (-(x - a) * self.q).exp();
                Ok((e, 1e-12 * e))
            }
            _ => {
                let (fa, ea) = self.eval_weighted(a, 0)?;
                if fa.is_infinite() {
                    return Ok((0.0, 0.0));
                }
                if fa <= 0.0 {
                    return Err(CbiError::numeric(
                        "invariant function evaluated to a nonpositive value",
                    ));
                }
                let (fx, ex) = self.eval_weighted(x, 0)?;
                let ratio = fx / fa;
                let err = (ex + ratio * ea) / fa;
                Ok((ratio, err))
            }
        }
    }
}
