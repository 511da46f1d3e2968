//! The user-facing transform operations. Each one is a ratio of the
//! invariant function built in [`super::invariant`] at a specific
//! `(lambda, mu)` pair.
//!
//! Common domain rules: levels satisfy `x > a >= v` where `v` is the lower
//! boundary of the state space, rates are finite and nonnegative, and the
//! tolerance is a relative target in `(0, 0.1)`. Passing `a` exactly equal
//! to `v` asks for passage to the boundary point itself, which is answered
//! through the tail behaviour of the invariant function (the probability
//! is 0 when that tail diverges).

use crate::error::{CbiError, Result};
use crate::mechanism::{CbiModel, Criticality};
use crate::transform::invariant::InvariantFn;
use crate::transform::TransformValue;

fn check_levels(model: &CbiModel, x: f64, a: f64) -> Result<()> {
    if !x.is_finite() || !a.is_finite() {
        return Err(CbiError::domain("levels must be finite"));
    }
    if !(x > a) {
        return Err(CbiError::domain(format!(
            "the starting level must exceed the target level, got x = {x}, a = {a}"
        )));
    }
    let v = model.lower_boundary();
    if a < v {
        return Err(CbiError::domain(format!(
            "target level {a} lies below the lower boundary {v}"
        )));
    }
    Ok(())
}

fn clamped(value: f64, abs_err: f64) -> TransformValue {
    TransformValue {
        value: value.clamp(0.0, 1.0),
        abs_err,
    }
}

/// `E_x[e^{-lambda * T_a}; T_a < inf]` for the first passage time `T_a`
/// below the level `a`.
pub fn hitting_time_laplace(
    model: &CbiModel,
    x: f64,
    a: f64,
    lambda: f64,
    tol: f64,
) -> Result<TransformValue> {
    check_levels(model, x, a)?;
    let inv = InvariantFn::new(model, lambda, 0.0, tol)?;
    let (value, abs_err) = inv.ratio(x, a)?;
    Ok(clamped(value, abs_err))
}

/// `E_x[e^{-lambda T_a - mu * integral_0^{T_a} X_s ds}; T_a < inf]`, the
/// joint transform of the passage time and the population integral
/// accumulated on the way down.
pub fn joint_laplace(
    model: &CbiModel,
    x: f64,
    a: f64,
    lambda: f64,
    mu: f64,
    tol: f64,
) -> Result<TransformValue> {
    check_levels(model, x, a)?;
    let inv = InvariantFn::new(model, lambda, mu, tol)?;
    let (value, abs_err) = inv.ratio(x, a)?;
    Ok(clamped(value, abs_err))
}

/// `E_x[e^{-mu * integral_0^{T_a} X_s ds}; T_a < inf]`: the transform of
/// the total population accumulated before passage below `a`.
pub fn total_population_laplace(
    model: &CbiModel,
    x: f64,
    a: f64,
    mu: f64,
    tol: f64,
) -> Result<TransformValue> {
    joint_laplace(model, x, a, 0.0, mu, tol)
}

/// `P_x(inf_t X_t <= a)`: the law of the running minimum over the whole
/// lifetime. Equals 1 for every `a` when the process is recurrent.
pub fn minimum_cdf(model: &CbiModel, x: f64, a: f64, tol: f64) -> Result<TransformValue> {
    joint_laplace(model, x, a, 0.0, 0.0, tol)
}

/// Passage probability of a supercritical pure branching process in
/// closed form, `e^{-(x-a) q}` with `q` the positive root of `psi = 0`.
/// Only defined without immigration; with immigration (or without
/// supercriticality) the generic machinery applies instead.
pub fn supercritical_cb_hit_probability(model: &CbiModel, x: f64, a: f64) -> Result<TransformValue> {
    check_levels(model, x, a)?;
    if !model.phi.is_zero() {
        return Err(CbiError::domain(
            "closed-form passage probability requires a pure branching process",
        ));
    }
    if model.criticality() != Criticality::Supercritical {
        return Err(CbiError::domain(
            "closed-form passage probability requires a supercritical mechanism",
        ));
    }
    let q = model.root(0.0)?;
    let value = (-(x - a) * q).exp();
    Ok(TransformValue {
        value,
        abs_err: 1e-13 * value,
    })
}

/// The raw invariant-function ratio at arbitrary `(lambda, mu)`, with an
/// optional anchor override for the inner profile. Ratios are anchor-free
/// by construction; exposing the anchor lets callers verify that.
pub fn invariant_ratio(
    model: &CbiModel,
    x: f64,
    a: f64,
    lambda: f64,
    mu: f64,
    tol: f64,
    anchor: Option<f64>,
) -> Result<TransformValue> {
    check_levels(model, x, a)?;
    let inv = InvariantFn::with_anchor(model, lambda, mu, tol, anchor)?;
    let (value, abs_err) = inv.ratio(x, a)?;
    Ok(TransformValue { value, abs_err })
}

/// The weighted integrals `F_k(x) = integral z^k e^{-xz} g(z) dz` for
/// `k = 0, 1, 2`, where `g` is the invariant density. `F_0` is the
/// invariant function; `F_1 = -F_0'` and `F_2 = F_0''`, so the triple lets
/// a caller check the defining differential property of `F_0` under the
/// process generator without any numerical differentiation.
pub fn weighted_exponential_moments(
    model: &CbiModel,
    x: f64,
    lambda: f64,
    mu: f64,
    tol: f64,
) -> Result<[TransformValue; 3]> {
    if !x.is_finite() || x <= model.lower_boundary() {
        return Err(CbiError::domain(
            "evaluation point must lie strictly above the lower boundary",
        ));
    }
    let inv = InvariantFn::new(model, lambda, mu, tol)?;
    let mut out = [TransformValue {
        value: 0.0,
        abs_err: 0.0,
    }; 3];
    for (k, slot) in out.iter_mut().enumerate() {
        let (value, abs_err) = inv.eval_weighted(x, k as u32)?;
        *slot = TransformValue { value, abs_err };
    }
    Ok(out)
}
