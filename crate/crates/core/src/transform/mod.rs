//! Laplace transforms of passage functionals.
//!
//! Everything here is a ratio `f(x)/f(a)` of one explicitly constructed
//! invariant function
//!
//! ```text
//! f(x) = integral_q^inf e^{-xz} exp(J(z)) / (psi(z) - mu) dz,
//! J(z) = integral_theta^z (phi(u) + lambda) / (psi(u) - mu) du,
//! ```
//!
//! where `q` is the largest root of `psi = mu`. Different `(lambda, mu)`
//! pairs give the Laplace transform of the first passage time below a
//! level, the joint passage/occupation transform, the transform of the
//! populaton integral up to passage, and (at `lambda = mu = 0`) the law of
//! the running minimum. The anchor `theta` rescales `f` by a constant, so
//! ratios never see it; both evaluations of a ratio share one profile and
//! the cancellation is exact by construction.
//!
//! The marginal law at a fixed time comes from the semigroup flow instead;
//! see [`marginal_laplace`].

mod flow;
mod invariant;
mod ops;

pub use flow::{flow_map, marginal_laplace};
pub use ops::{
    hitting_time_laplace, invariant_ratio, joint_laplace, minimum_cdf,
    supercritical_cb_hit_probability, total_population_laplace, weighted_exponential_moments,
};

/// A computed transform value with its accumulated numerical error bound.
#[derive(Debug, Clone, Copy)]
pub struct TransformValue {
    pub value: f64,
    pub abs_err: f64,
}
