//! Exponential decay rates of profile tails.
//!
//! Near `rho_end` a profile behaves like `rho_end -/+ C e^{-lambda |x|}`. The
//! continuous rate solves `int_0^h e^{-lambda s} w(s) ds = 1/beta`; the discrete
//! rate solves `b sum_k w_k e^{-k a lambda} = a lambda / (1 - e^{-a lambda})`
//! with spacing `a = ell / rho_end`. Both are zeros of [`characteristic`],
//! which reduces to the continuous equation at `a = 0`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Kernel, ModelConfig, VelocityLaw};
use crate::roots::{bisect, expand_upper, ROOT_TOL};
use crate::scalar::Real;

/// Doubling cap for the upper bracket search.
pub const MAX_DOUBLINGS: usize = 1024;
/// Below this `|a lambda|` the right-hand side uses its Taylor series.
pub const SERIES_CUTOFF: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Tail towards `+inf`, endpoint `rho_plus`.
    PlusInfinity,
    /// Tail towards `-inf`, endpoint `rho_minus`.
    MinusInfinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateResult<T> {
    /// Positive decay rate.
    pub lambda: T,
    pub bracket: (T, T),
    pub lower_bound: T,
    pub side: Side,
    pub residual: T,
    /// Car spacing `ell / rho_end`, zero for the continuous rate.
    pub a: T,
    /// `-rho v'(rho) / (v(rho) - sigma)` at the endpoint.
    pub b: T,
}

/// Linearised weights `w_k = int_{k a}^{(k+1) a} w` for all `k a < h`.
pub fn linearized_weights<T: Real>(kernel: &Kernel<T>, a: T) -> Vec<T> {
    let h = kernel.h();
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let lo = a * T::from_usize_lossy(k);
        if lo >= h {
            break;
        }
        out.push(kernel.integral(lo, lo + a));
        k += 1;
    }
    out
}

/// `x / (1 - e^{-x})`, equal to one at `x = 0`.
pub fn right_side<T: Real>(x: T) -> T {
    if x.abs() < T::lit(SERIES_CUTOFF) {
        T::one() + x / T::lit(2.0) + x * x / T::lit(12.0)
    } else {
        x / -(-x).exp_m1()
    }
}

/// Evaluates `H(a, lambda)`.
///
/// For `a > 0` this is `b sum_k w_k e^{-k a lambda} - a lambda / (1 - e^{-a lambda})`
/// using the precomputed `weights`; for `a = 0` it is `b L(lambda) - 1` with `L` the
/// Laplace transform of the kernel. A negative `lambda` describes the tail at `-inf`.
pub fn characteristic<T: Real>(kernel: &Kernel<T>, weights: &[T], a: T, b: T, lambda: T) -> T {
    if a == T::zero() {
        return b * kernel.laplace(lambda) - T::one();
    }
    let x = a * lambda;
    let mut lhs = T::zero();
    for (k, &w) in weights.iter().enumerate() {
        lhs = lhs + w * (-x * T::from_usize_lossy(k)).exp();
    }
    b * lhs - right_side(x)
}

/// Shared evaluator for a fixed spacing: owns the linearised weights.
#[derive(Debug, Clone)]
pub struct CharacteristicFn<'k, T> {
    kernel: &'k Kernel<T>,
    weights: Vec<T>,
    pub a: T,
    pub b: T,
}

impl<'k, T: Real> CharacteristicFn<'k, T> {
    pub fn new(kernel: &'k Kernel<T>, a: T, b: T) -> Self {
        let weights = if a > T::zero() { linearized_weights(kernel, a) } else { Vec::new() };
        Self { kernel, weights, a, b }
    }

    pub fn eval(&self, lambda: T) -> T {
        characteristic(self.kernel, &self.weights, self.a, self.b, lambda)
    }

    /// Continuous form `int e^{-lambda s} w - 1/b`.
    pub fn g(&self, lambda: T) -> T {
        self.kernel.laplace(lambda) - T::one() / self.b
    }
}

fn endpoint_beta<T: Real>(config: &ModelConfig<T>, rho_end: T, side: Side) -> Result<T> {
    if !(rho_end > T::zero() && rho_end < T::one()) {
        return Err(Error::Domain(format!("endpoint density {} outside (0, 1)", rho_end)));
    }
    if config.kernel.is_symmetric() {
        return Err(Error::Domain("one-sided rate equations need a one-sided kernel".into()));
    }
    let b = config.beta(rho_end);
    let ok = match side {
        Side::PlusInfinity => b > T::one(),
        Side::MinusInfinity => b < T::one() && b > T::zero(),
    };
    if !ok {
        return Err(Error::NoRoot(format!(
            "beta = {} at rho = {}: the tail on this side is not exponential",
            b, rho_end
        )));
    }
    Ok(b)
}

fn solve<T: Real>(f: impl Fn(T) -> T, lower_bound: T, side: Side, a: T, b: T) -> Result<RateResult<T>> {
    // on the minus side we solve for mu = -lambda > 0
    let sign = match side {
        Side::PlusInfinity => T::one(),
        Side::MinusInfinity => -T::one(),
    };
    let g = |mu: T| f(sign * mu);
    let lo = lower_bound.max(T::zero());
    let (blo, bhi) = expand_upper(&g, lo, lo + T::one(), MAX_DOUBLINGS)?;
    let tol = T::lit(ROOT_TOL).max(T::epsilon() * bhi * T::lit(4.0));
    let lambda = bisect(&g, blo, bhi, tol)?;
    Ok(RateResult { lambda, bracket: (blo, bhi), lower_bound, side, residual: g(lambda).abs(), a, b })
}

/// Continuous decay rate `lambda_+` or `lambda_-`.
pub fn continuous_rate<T: Real>(config: &ModelConfig<T>, rho_end: T, side: Side) -> Result<RateResult<T>> {
    let b = endpoint_beta(config, rho_end, side)?;
    let h = config.h();
    let lower_bound = match side {
        Side::PlusInfinity => b.ln() / h,
        Side::MinusInfinity => (T::one() / b).ln() / h,
    };
    let eval = CharacteristicFn::new(&config.kernel, T::zero(), b);
    solve(|l| eval.g(l), lower_bound, side, T::zero(), b)
}

/// Discrete decay rate of the particle profile at car length `config.ell`.
pub fn discrete_rate<T: Real>(config: &ModelConfig<T>, rho_end: T, side: Side) -> Result<RateResult<T>> {
    let b = endpoint_beta(config, rho_end, side)?;
    let h = config.h();
    let a = config.ell / rho_end;
    let lower_bound = match side {
        Side::PlusInfinity => (b - T::one()) / (b * h + a),
        Side::MinusInfinity => (T::one() / b).ln() / (h + a),
    };
    let eval = CharacteristicFn::new(&config.kernel, a, b);
    solve(|l| eval.eval(l), lower_bound, side, a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetricDiagnosis<T> {
    pub beta: T,
    pub has_positive_root: bool,
    pub root: Option<T>,
}

/// Positive roots of `int_{-h}^{h} e^{-lambda s} w(s) ds = 1/beta` for an even kernel.
///
/// The left side equals `int_0^h 2 cosh(lambda s) w(s) ds`, which is even in
/// `lambda` and increases from one, so a positive root exists exactly when `beta < 1`.
pub fn symmetric_rate_check<T: Real>(
    kernel: &Kernel<T>,
    velocity: &VelocityLaw<T>,
    rho_end: T,
    sigma: T,
) -> Result<SymmetricDiagnosis<T>> {
    if !kernel.is_symmetric() {
        return Err(Error::Domain("symmetric rate check needs a symmetric kernel".into()));
    }
    let beta = -rho_end * velocity.dv(rho_end) / (velocity.v(rho_end) - sigma);
    if !(beta > T::zero() && beta < T::one()) {
        return Ok(SymmetricDiagnosis { beta, has_positive_root: false, root: None });
    }
    let g = |l: T| kernel.laplace(l) - T::one() / beta;
    let (lo, hi) = expand_upper(g, T::zero(), T::one(), MAX_DOUBLINGS)?;
    let tol = T::lit(ROOT_TOL).max(T::epsilon() * hi * T::lit(4.0));
    let root = bisect(g, lo, hi, tol)?;
    Ok(SymmetricDiagnosis { beta, has_positive_root: true, root: Some(root) })
}
