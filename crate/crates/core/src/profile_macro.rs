//! Stationary and travelling profiles `Q` of the nonlocal conservation laws.
//!
//! The profile is built by marching backwards from seed data on `[x0, inf)`.
//! Each new node solves `Q_{i-1} (V_{i-1} - sigma) = Q_i (V_i - sigma)`, where
//! `V` is `v(A(Q))` or `A(v(Q))` evaluated with the exact-moment [`Stencil`] of
//! the piecewise linear reconstruction.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{EndpointPair, ModelConfig, ModelVariant};
use crate::profile::{NonlocalAverage, Profile, ProfileKind, ProfileMeta, Stencil};
use crate::rates::{continuous_rate, Side};
use crate::roots::{bisect, expand_upper, ROOT_TOL};
use crate::scalar::Real;

pub const NEWTON_MAX_ITER: usize = 50;
/// Coarsest admissible grid relative to the horizon.
pub const MAX_DX_FRACTION: f64 = 1.0 / 16.0;
pub const DEFAULT_DX_FRACTION: f64 = 1.0 / 64.0;
/// Default domains reach `DOMAIN_DECAY` e-folds into each tail.
pub const DOMAIN_DECAY: f64 = 12.0;

/// Initial data on `[x0, inf)`.
#[derive(Clone)]
pub enum Seed<T> {
    /// `rho_plus - e^{-lambda x}`
    Exponential { rho_plus: T, lambda: T },
    Constant(T),
    Custom { limit: T, f: Arc<dyn Fn(T) -> T + Send + Sync> },
}

impl<T: std::fmt::Debug> std::fmt::Debug for Seed<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Exponential { rho_plus, lambda } => {
                f.debug_struct("Exponential").field("rho_plus", rho_plus).field("lambda", lambda).finish()
            }
            Self::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            Self::Custom { limit, .. } => f.debug_struct("Custom").field("limit", limit).finish_non_exhaustive(),
        }
    }
}

impl<T: Real> Seed<T> {
    pub fn eval(&self, x: T) -> T {
        match self {
            Self::Exponential { rho_plus, lambda } => *rho_plus - (-*lambda * x).exp(),
            Self::Constant(c) => *c,
            Self::Custom { f, .. } => f(x),
        }
    }

    pub fn derivative(&self, x: T) -> Option<T> {
        match self {
            Self::Exponential { lambda, .. } => Some(*lambda * (-*lambda * x).exp()),
            Self::Constant(_) => Some(T::zero()),
            Self::Custom { .. } => None,
        }
    }

    pub fn limit(&self) -> T {
        match self {
            Self::Exponential { rho_plus, .. } => *rho_plus,
            Self::Constant(c) => *c,
            Self::Custom { limit, .. } => *limit,
        }
    }

    pub fn rate(&self) -> T {
        match self {
            Self::Exponential { lambda, .. } => *lambda,
            _ => T::zero(),
        }
    }
}

/// Frame velocity at node `j` of `vals` (and of `vels = v(vals)`).
fn node_velocity<T: Real>(config: &ModelConfig<T>, stencil: &Stencil<T>, vals: &[T], vels: &[T], j: usize) -> T {
    match config.variant {
        ModelVariant::DensityAveraged => config.velocity.v(stencil.apply(vals, j)) - config.sigma,
        ModelVariant::VelocityAveraged => stencil.apply(vels, j) - config.sigma,
    }
}

/// Backward marching from the seed at `x0` down to `x_min` on spacing `dx`.
///
/// The returned grid also holds the seed samples on `[x0, x0 + h]` that the
/// last averages consume.
pub fn solve_ivp_backward<T: Real>(
    config: &ModelConfig<T>,
    seed: &Seed<T>,
    x0: T,
    x_min: T,
    dx: T,
) -> Result<Profile<T>> {
    solve_ivp_backward_keep(config, seed, x0, x_min, dx, x0)
}

/// As [`solve_ivp_backward`], with seed samples stored up to at least `x_keep + h`.
pub fn solve_ivp_backward_keep<T: Real>(
    config: &ModelConfig<T>,
    seed: &Seed<T>,
    x0: T,
    x_min: T,
    dx: T,
    x_keep: T,
) -> Result<Profile<T>> {
    let h = config.h();
    if !(dx > T::zero()) || dx > h * T::lit(MAX_DX_FRACTION) * (T::one() + T::lit(1e-12)) {
        return Err(Error::StepSize(format!("dx = {} must lie in (0, h/16]", dx)));
    }
    if !(x_min < x0) {
        return Err(Error::Domain(format!("x_min = {} must lie left of the seed point {}", x_min, x0)));
    }
    let stencil = Stencil::new(&config.kernel, dx)?;
    let reach = stencil.reach();
    let n_back = ((x0 - x_min) / dx).ceil().to_usize().unwrap_or(0).max(1);
    let extra = ((x_keep - x0) / dx).ceil().to_usize().unwrap_or(0);
    let len = n_back + reach + extra + 1;
    let x_start = x0 - dx * T::from_usize_lossy(n_back);
    let v = &config.velocity;

    let mut vals = vec![T::zero(); len];
    let mut vels = vec![T::zero(); len];
    for j in n_back..len {
        let q = seed.eval(x_start + dx * T::from_usize_lossy(j));
        if !(q > T::zero() && q < T::one()) {
            return Err(Error::Positivity { x: (x_start + dx * T::from_usize_lossy(j)).as_f64(), value: q.as_f64() });
        }
        if j > n_back && q < vals[j - 1] {
            return Err(Error::Domain("seed must be nondecreasing".into()));
        }
        vals[j] = q;
        vels[j] = v.v(q);
    }
    let flux = vals[n_back] * node_velocity(config, &stencil, &vals, &vels, n_back);
    if !(flux > T::zero()) {
        return Err(Error::Domain("seed carries no positive frame flux".into()));
    }

    let c0 = stencil.coeffs()[0];
    let sigma = config.sigma;
    let tiny = T::epsilon() * T::lit(4.0);
    for j in (0..n_back).rev() {
        let upper = vals[j + 1];
        let rest = match config.variant {
            ModelVariant::DensityAveraged => stencil.apply_with(|k| if k == 0 { T::zero() } else { vals[j + k] }),
            ModelVariant::VelocityAveraged => stencil.apply_with(|k| if k == 0 { T::zero() } else { vels[j + k] }),
        };
        // frame velocity and its derivative in the unknown
        let vel = |q: T| -> (T, T) {
            match config.variant {
                ModelVariant::DensityAveraged => {
                    let a = c0 * q + rest;
                    (v.v(a) - sigma, v.dv(a) * c0)
                }
                ModelVariant::VelocityAveraged => (c0 * v.v(q) + rest - sigma, c0 * v.dv(q)),
            }
        };
        let g = |q: T| q * vel(q).0 - flux;
        let x = x_start + dx * T::from_usize_lossy(j);

        let mut q = upper;
        let mut solved = false;
        for _ in 0..NEWTON_MAX_ITER {
            let (vq, dvq) = vel(q);
            let gq = q * vq - flux;
            let dg = vq + q * dvq;
            if !(dg > T::zero()) {
                return Err(Error::StepSize(format!(
                    "Newton derivative {} is not positive at x = {}; refine dx",
                    dg, x
                )));
            }
            let step = gq / dg;
            let next = q - step;
            if !(next > T::zero() && next <= upper * (T::one() + tiny)) {
                break;
            }
            q = next;
            if step.abs() <= tiny * q || gq == T::zero() {
                solved = true;
                break;
            }
        }
        if !solved {
            q = bisect(g, T::zero(), upper, T::lit(1e-15).max(tiny * upper)).map_err(|e| Error::NonlinearSolve {
                x: x.as_f64(),
                reason: e.to_string(),
            })?;
        }
        let q = q.min(upper);
        vals[j] = q;
        vels[j] = v.v(q);
    }

    let rho_plus = seed.limit();
    let rho_hat = config.stagnation_point()?;
    let frame_flux = |r: T| config.frame_flux(r) - flux;
    let rho_minus = if frame_flux(rho_hat) > T::zero() {
        bisect(frame_flux, T::zero(), rho_hat, T::lit(1e-14))?
    } else {
        rho_hat
    };
    let meta = ProfileMeta {
        kind: ProfileKind::Macro,
        variant: config.variant,
        sigma,
        ell: None,
        fbar: flux,
        kappa: config.kernel.sup_norm(),
        lipschitz_v: config.velocity.inverse_lipschitz(rho_minus, rho_plus.max(rho_minus)),
        seed_x: x0,
        seed_rate: seed.rate(),
        outer_iterations: 0,
    };
    Profile::new(x_start, dx, vals, None, (rho_minus, rho_hat, rho_plus), meta)
}

/// Controls for the limiting procedure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticOptions<T> {
    /// Stop when successive normalised profiles differ by at most this much.
    pub tol: T,
    pub max_iter: usize,
    /// Allowed gap between the tails at the domain edges and the endpoints.
    pub endpoint_tol: T,
    /// The first seed point is placed where `rho_plus - seed` is this small.
    /// Further right the profile is the seed itself.
    pub seed_deficit: T,
}

impl<T: Real> Default for AsymptoticOptions<T> {
    fn default() -> Self {
        // the deficit has to stay well above rounding level of the scalar type
        let seed_deficit = T::lit(1e-8).max(T::epsilon() * T::lit(256.0));
        Self { tol: T::lit(1e-7), max_iter: 64, endpoint_tol: T::lit(1e-4), seed_deficit }
    }
}

/// Outer loop shared by the macroscopic and discrete limiting procedures.
///
/// `solve(x_seed, x_low)` returns a profile seeded at `x_seed` that reaches down
/// to `x_low`. Each result is shifted so its stagnation crossing sits at zero.
pub(crate) fn limit_profiles<T: Real>(
    domain: (T, T),
    step: T,
    first_seed: T,
    opts: &AsymptoticOptions<T>,
    rho: (T, T),
    keep_right: T,
    mut solve: impl FnMut(T, T) -> Result<Profile<T>>,
) -> Result<Profile<T>> {
    let (x_min, x_max) = domain;
    let mut margin = T::one() + step * T::lit(2.0);
    let mut prev: Option<Profile<T>> = None;
    let mut last_change = T::infinity();
    for n in 0..opts.max_iter {
        let x_seed = first_seed + step * T::from_usize_lossy(n);
        let mut attempt = 0;
        let normalised = loop {
            let p = solve(x_seed, x_min - margin)?;
            let c = p.anchor()?;
            let shortfall = p.x_start() - c - (x_min - p.dx());
            if shortfall <= T::zero() {
                break p.shifted(-c);
            }
            attempt += 1;
            if attempt > 8 {
                return Err(Error::Domain("normalised profile does not reach the left domain edge".into()));
            }
            margin = margin + shortfall + step;
        };
        if let Some(p) = &prev {
            last_change = normalised.sup_distance(p, T::zero(), x_min, x_max);
            if last_change <= opts.tol {
                let mut out = normalised.restricted(x_min, keep_right);
                out.meta.outer_iterations = n + 1;
                check_edges(&out, domain, rho, opts.endpoint_tol)?;
                return Ok(out);
            }
        }
        prev = Some(normalised);
    }
    Err(Error::NotConverged { iterations: opts.max_iter, last_change: last_change.as_f64() })
}

fn check_edges<T: Real>(p: &Profile<T>, domain: (T, T), rho: (T, T), tol: T) -> Result<()> {
    let left = p.eval(domain.0);
    let right = p.eval(domain.1);
    if (left - rho.0).abs() > tol {
        return Err(Error::EndpointMismatch { edge: "left", expected: rho.0.as_f64(), got: left.as_f64() });
    }
    if (right - rho.1).abs() > tol {
        return Err(Error::EndpointMismatch { edge: "right", expected: rho.1.as_f64(), got: right.as_f64() });
    }
    Ok(())
}

/// `[-12 / lambda_-, 12 / lambda_+]` from the continuous rates.
pub fn default_q_domain<T: Real>(config: &ModelConfig<T>, pair: &EndpointPair<T>) -> Result<(T, T)> {
    let lp = continuous_rate(config, pair.rho_plus, Side::PlusInfinity)?.lambda;
    let lm = continuous_rate(config, pair.rho_minus, Side::MinusInfinity)?.lambda;
    let d = T::lit(DOMAIN_DECAY);
    Ok((-d / lm, d / lp))
}

/// Decay rate `mu` of the grid scheme linearised at `rho_plus`:
/// `b sum_k c_k e^{-k mu dx} = 1` with the stencil weights `c_k`.
///
/// It tends to the continuous rate as `dx -> 0`. Seeding with it makes the
/// seed an exact tail mode of the discrete equations, so successive outer
/// iterates do not drift against each other on coarse grids.
pub fn grid_rate<T: Real>(config: &ModelConfig<T>, rho_plus: T, dx: T) -> Result<T> {
    let b = config.beta(rho_plus);
    if !(b > T::one()) {
        return Err(Error::NoRoot(format!("beta = {} <= 1 at rho = {}", b, rho_plus)));
    }
    let stencil = Stencil::new(&config.kernel, dx)?;
    let g = |mu: T| {
        let r = (-mu * dx).exp();
        let mut e = T::one();
        let mut acc = T::zero();
        for &c in stencil.coeffs() {
            acc = acc + c * e;
            e = e * r;
        }
        b * acc - T::one()
    };
    let start = continuous_rate(config, rho_plus, Side::PlusInfinity)?.lambda;
    let (lo, hi) = expand_upper(g, T::zero(), start + T::one(), 1024)?;
    bisect(g, lo, hi, T::lit(ROOT_TOL).max(T::epsilon() * T::lit(4.0) * hi))
}

/// Two-sided profile joining `rho_minus` to `rho_plus`, normalised so that
/// `Q(0) = rho_hat`.
pub fn solve_asymptotic<T: Real>(
    config: &ModelConfig<T>,
    pair: &EndpointPair<T>,
    domain: (T, T),
    dx: T,
) -> Result<Profile<T>> {
    solve_asymptotic_with(config, pair, domain, dx, &AsymptoticOptions::default())
}

pub fn solve_asymptotic_with<T: Real>(
    config: &ModelConfig<T>,
    pair: &EndpointPair<T>,
    domain: (T, T),
    dx: T,
    opts: &AsymptoticOptions<T>,
) -> Result<Profile<T>> {
    if !(domain.0 < T::zero() && domain.1 > T::zero()) {
        return Err(Error::Domain("the domain must contain the anchor x = 0".into()));
    }
    let lambda = grid_rate(config, pair.rho_plus, dx)?;
    let seed = Seed::Exponential { rho_plus: pair.rho_plus, lambda };
    let first = first_seed_point(lambda, opts);
    let step = outer_step(config.h(), lambda, dx);
    limit_profiles(domain, step, first, opts, (pair.rho_minus, pair.rho_plus), domain.1 + step, |xs, xl| {
        solve_ivp_backward_keep(config, &seed, xs, xl, dx, domain.1 + step)
    })
}

/// Seed location for the first outer iterate.
///
/// Later iterates move right by [`outer_step`], and the deficit shrinks by
/// `e^{-lambda step}` each time; starting further out would soon leave nothing
/// above rounding level.
pub(crate) fn first_seed_point<T: Real>(lambda: T, opts: &AsymptoticOptions<T>) -> T {
    (T::one() / opts.seed_deficit).ln() / lambda
}

/// Seed shift between outer iterates: `min(h, 1 / lambda)` in whole grid cells.
/// A full horizon on a steep tail (`lambda h` above about 12) would push the
/// deficit below rounding level within two iterates.
pub(crate) fn outer_step<T: Real>(h: T, lambda: T, dx: T) -> T {
    whole_cells(h.min(T::one() / lambda), dx)
}

/// `h` rounded to a whole number of grid cells, so successive seeds share a lattice.
pub(crate) fn whole_cells<T: Real>(h: T, dx: T) -> T {
    dx * (h / dx).round().max(T::one())
}

/// `(x, |Q (V - sigma) - fbar|)` at every node whose averaging window lies in the grid.
pub fn flux_residuals<T: Real>(profile: &Profile<T>, config: &ModelConfig<T>, fbar: T) -> Vec<(T, T)> {
    let avg = NonlocalAverage::from_config(profile, config);
    let limit = profile.x_end() - config.h();
    profile
        .points()
        .filter(|(x, _)| *x <= limit)
        .map(|(x, q)| (x, (q * avg.frame_velocity(x, config.sigma) - fbar).abs()))
        .collect()
}

/// Largest flux residual over nodes in `[lo, hi]`.
pub fn max_flux_residual<T: Real>(profile: &Profile<T>, config: &ModelConfig<T>, fbar: T, lo: T, hi: T) -> T {
    flux_residuals(profile, config, fbar)
        .into_iter()
        .filter(|(x, _)| *x >= lo && *x <= hi)
        .fold(T::zero(), |m, (_, r)| m.max(r))
}

/// One sweep of the fixed-point map `Q <- fbar / (V(Q) - sigma)`.
///
/// Nodes whose averaging window leaves the grid are kept. Returns the new
/// profile and the sup-norm change; at a discrete solution the change is at
/// rounding level.
pub fn picard_step<T: Real>(profile: &Profile<T>, config: &ModelConfig<T>) -> Result<(Profile<T>, T)> {
    let stencil = Stencil::new(&config.kernel, profile.dx())?;
    let vals = profile.values();
    let vels: Vec<T> = vals.iter().map(|&q| config.velocity.v(q)).collect();
    let fbar = profile.meta.fbar;
    let mut next = vals.to_vec();
    let mut change = T::zero();
    for j in 0..vals.len().saturating_sub(stencil.reach()) {
        let q = fbar / node_velocity(config, &stencil, vals, &vels, j);
        change = change.max((q - vals[j]).abs());
        next[j] = q;
    }
    let p = Profile::new(
        profile.x_start(),
        profile.dx(),
        next,
        None,
        (profile.rho_minus, profile.rho_hat, profile.rho_plus),
        profile.meta.clone(),
    )?;
    Ok((p, change))
}

/// Least-squares decay rate of the tail deficit over nodes where it lies in
/// `[top / 10, top]`: `rho_plus - Q` on the right, `Q - rho_minus` on the left.
pub fn tail_rate<T: Real>(profile: &Profile<T>, side: Side, top: T) -> Option<T> {
    let bottom = top / T::lit(10.0);
    let pts: Vec<(T, T)> = profile
        .points()
        .filter_map(|(x, q)| {
            let d = match side {
                Side::PlusInfinity => profile.rho_plus - q,
                Side::MinusInfinity => q - profile.rho_minus,
            };
            (d >= bottom && d <= top).then(|| (x, d.ln()))
        })
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = T::from_usize_lossy(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    Some(match side {
        Side::PlusInfinity => -slope,
        Side::MinusInfinity => slope,
    })
}
