//! Follow-the-leaders simulation of a finite platoon.
//!
//! Car `i` moves with `v(sum_k w_{i,k} rho_{i+k})` (or the velocity-averaged
//! analogue), where `rho_i = ell / (z_{i+1} - z_i)`. Cars beyond the head of
//! the platoon are virtual and keep the spacing `ell / rho_plus`. Speeds are
//! in the lab frame; `sigma` plays no role here.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelVariant};
use crate::profile::Profile;
use crate::roots::bisect;
use crate::scalar::Real;

/// Cars per platoon above which speeds are evaluated in parallel.
const PARALLEL_CARS: usize = 512;
/// Step halvings tried before giving up.
pub const MAX_HALVINGS: u32 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct CarState<T> {
    pub t: T,
    /// Strictly increasing positions.
    pub z: Vec<T>,
    /// `(rho_minus, rho_plus)`; `rho_plus` sets the spacing of virtual leaders.
    pub boundary_rho: (T, T),
}

impl<T: Real> CarState<T> {
    pub fn new(t: T, z: Vec<T>, boundary_rho: (T, T), ell: T) -> Result<Self> {
        if z.len() < 2 {
            return Err(Error::InvalidConfig("a platoon needs at least two cars".into()));
        }
        let (_, rp) = boundary_rho;
        if !(rp > T::zero() && rp <= T::one()) {
            return Err(Error::InvalidConfig(format!("rho_plus = {} must lie in (0, 1]", rp)));
        }
        let s = Self { t, z, boundary_rho };
        if let Some(i) = s.spacing_violation(ell) {
            return Err(Error::InvalidConfig(format!("cars {} and {} are closer than ell", i, i + 1)));
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Densities `ell / (z_{i+1} - z_i)` of the `n - 1` real gaps.
    pub fn rho(&self, ell: T) -> Vec<T> {
        self.z.windows(2).map(|w| ell / (w[1] - w[0])).collect()
    }

    /// First index whose gap is shorter than `ell`, if any.
    pub fn spacing_violation(&self, ell: T) -> Option<usize> {
        let slack = ell * T::lit(1e-12);
        self.z.windows(2).position(|w| !(w[1] - w[0] >= ell - slack))
    }

    /// Total headway `z_{n-1} - z_0`.
    pub fn headway(&self) -> T {
        self.z[self.z.len() - 1] - self.z[0]
    }
}

fn speed_at<T: Real>(z: &[T], i: usize, rho_plus: T, config: &ModelConfig<T>) -> T {
    let n = z.len();
    let h = config.h();
    let gap = config.ell / rho_plus;
    let pos = |j: usize| if j < n { z[j] } else { z[n - 1] + gap * T::from_usize_lossy(j + 1 - n) };
    let zi = z[i];
    let mut acc = T::zero();
    let mut j = i;
    let mut y = zi;
    while y - zi < h {
        let next = pos(j + 1);
        let r = config.ell / (next - y);
        let w = config.kernel.integral(y - zi, next - zi);
        acc = acc
            + w * match config.variant {
                ModelVariant::DensityAveraged => r,
                ModelVariant::VelocityAveraged => config.velocity.v(r),
            };
        y = next;
        j += 1;
    }
    match config.variant {
        ModelVariant::DensityAveraged => config.velocity.v(acc),
        ModelVariant::VelocityAveraged => acc,
    }
}

/// Speed of car `i`.
pub fn car_speed<T: Real>(state: &CarState<T>, i: usize, config: &ModelConfig<T>) -> T {
    speed_at(&state.z, i, state.boundary_rho.1, config)
}

/// Speeds of all cars.
pub fn car_speeds<T: Real>(z: &[T], rho_plus: T, config: &ModelConfig<T>) -> Vec<T> {
    if z.len() >= PARALLEL_CARS {
        (0..z.len()).into_par_iter().map(|i| speed_at(z, i, rho_plus, config)).collect()
    } else {
        (0..z.len()).map(|i| speed_at(z, i, rho_plus, config)).collect()
    }
}

fn rk4<T: Real>(z: &[T], dt: T, rho_plus: T, config: &ModelConfig<T>) -> Vec<T> {
    let axpy = |a: T, k: &[T]| -> Vec<T> { z.iter().zip(k).map(|(&zi, &ki)| zi + a * ki).collect() };
    let half = dt * T::lit(0.5);
    let k1 = car_speeds(z, rho_plus, config);
    let k2 = car_speeds(&axpy(half, &k1), rho_plus, config);
    let k3 = car_speeds(&axpy(half, &k2), rho_plus, config);
    let k4 = car_speeds(&axpy(dt, &k3), rho_plus, config);
    let sixth = dt / T::lit(6.0);
    (0..z.len())
        .map(|i| z[i] + sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]))
        .collect()
}

/// Largest admissible step, `ell / (4 v(0))`.
pub fn max_dt<T: Real>(config: &ModelConfig<T>) -> T {
    config.ell * T::lit(0.25) / config.velocity.v(T::zero())
}

/// Default step `0.1 ell`.
pub fn default_dt<T: Real>(config: &ModelConfig<T>) -> T {
    config.ell * T::lit(0.1)
}

/// Advance by `dt` with classical RK4. A step that breaks the minimum
/// spacing is redone as two half steps, down to `dt / 2^10`.
pub fn step<T: Real>(state: &CarState<T>, dt: T, config: &ModelConfig<T>) -> Result<CarState<T>> {
    if !(dt > T::zero()) || dt > max_dt(config) * (T::one() + T::lit(1e-12)) {
        return Err(Error::StepSize(format!("dt = {} outside (0, {}]", dt, max_dt(config))));
    }
    let z = advance(&state.z, state.t, dt, state.boundary_rho.1, config, 0)?;
    Ok(CarState { t: state.t + dt, z, boundary_rho: state.boundary_rho })
}

fn advance<T: Real>(z: &[T], t: T, dt: T, rho_plus: T, config: &ModelConfig<T>, depth: u32) -> Result<Vec<T>> {
    let next = rk4(z, dt, rho_plus, config);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t: t.as_f64() });
    }
    let slack = config.ell * T::lit(1e-12);
    let ok = next.windows(2).all(|w| w[1] - w[0] >= config.ell - slack);
    if ok {
        return Ok(next);
    }
    if depth >= MAX_HALVINGS {
        let i = next.windows(2).position(|w| w[1] - w[0] < config.ell - slack).unwrap_or(0);
        return Err(Error::Integration {
            t: t.as_f64(),
            reason: format!("spacing between cars {} and {} fell below ell after {} halvings", i, i + 1, depth),
        });
    }
    let half = dt * T::lit(0.5);
    let mid = advance(z, t, half, rho_plus, config, depth + 1)?;
    advance(&mid, t + half, half, rho_plus, config, depth + 1)
}

/// Run to each of the sorted `times`, returning one snapshot per entry.
/// Steps are `dt` except the last one before a snapshot, which is shortened.
pub fn simulate<T: Real>(
    state: &CarState<T>,
    config: &ModelConfig<T>,
    dt: T,
    times: &[T],
) -> Result<Vec<CarState<T>>> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("snapshot times must be sorted".into()));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut cur = state.clone();
    for &target in times {
        if target < cur.t {
            return Err(Error::InvalidConfig(format!("snapshot time {} precedes the state time {}", target, cur.t)));
        }
        loop {
            let remaining = target - cur.t;
            if remaining <= dt * T::lit(1e-9) {
                break;
            }
            let h = if remaining < dt * T::lit(1.000_001) { remaining } else { dt };
            cur = step(&cur, h, config)?;
            if remaining == h {
                cur.t = target;
            }
        }
        out.push(cur.clone());
    }
    Ok(out)
}

/// Three-branch oscillatory density: `0.2` left of `-0.3`, `0.8` right of
/// `0.3`, `0.5 - 0.3 sin(5 pi x)` in between.
pub fn oscillatory_density<T: Real>(x: T) -> T {
    let edge = T::lit(0.3);
    if x <= -edge {
        T::lit(0.2)
    } else if x >= edge {
        T::lit(0.8)
    } else {
        T::lit(0.5) - T::lit(0.3) * (T::lit(5.0 * std::f64::consts::PI) * x).sin()
    }
}

/// Right edge of the oscillatory platoon.
pub const OSCILLATORY_HEAD: f64 = 1.5;

/// Number of cars needed for the oscillatory platoon to reach back to `-1.5`.
pub fn oscillatory_car_count<T: Real>(ell: T) -> usize {
    let mut z = T::lit(OSCILLATORY_HEAD);
    let mut n = 1;
    while z > -T::lit(OSCILLATORY_HEAD) {
        z = follower_of(z, ell, oscillatory_density).unwrap_or(z - ell / T::lit(0.2));
        n += 1;
    }
    n
}

fn follower_of<T: Real>(target: T, ell: T, rho: impl Fn(T) -> T) -> Result<T> {
    let g = |y: T| y + ell / rho(y) - target;
    let lo = target - ell / T::lit(0.2) - ell;
    let hi = target - ell * T::lit(0.5);
    let tol = T::lit(1e-15).max(T::epsilon() * T::lit(8.0)) * (T::one() + target.abs());
    bisect(g, lo, hi, tol).map_err(|_| Error::Follower(target.as_f64()))
}

/// Platoon of `n_cars` built right to left from `z = 1.5`, each car placed so
/// that its gap to the leader is `ell / rho(z_i)`.
pub fn oscillatory_ic<T: Real>(config: &ModelConfig<T>, n_cars: usize) -> Result<CarState<T>> {
    let ell = config.ell;
    if ell > T::lit(0.1) {
        return Err(Error::InvalidConfig(format!("ell = {} too long for the oscillatory platoon", ell)));
    }
    let mut z = Vec::with_capacity(n_cars);
    let mut cur = T::lit(OSCILLATORY_HEAD);
    z.push(cur);
    while z.len() < n_cars {
        cur = follower_of(cur, ell, oscillatory_density)?;
        z.push(cur);
    }
    if cur > -T::lit(OSCILLATORY_HEAD) {
        return Err(Error::InvalidConfig(format!(
            "{} cars reach only z = {}; need {}",
            n_cars,
            cur,
            oscillatory_car_count(ell)
        )));
    }
    z.reverse();
    CarState::new(T::zero(), z, (T::lit(0.2), T::lit(0.8)), ell)
}

/// Per-car values `phi_i = P(P^{-1}(rho_i) - z_i)` against a reference profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiDiagnostic<T> {
    /// `None` for cars whose density lies outside the usable range.
    pub values: Vec<Option<T>>,
    /// Number of flagged cars.
    pub excluded: usize,
    /// `max - min` over the unflagged cars.
    pub range: T,
}

/// Phi values of every gap. Cars with `rho_i` outside
/// `(min P + margin, max P - margin)` are flagged and left out of the range.
pub fn phi_diagnostic<T: Real>(state: &CarState<T>, reference: &Profile<T>, ell: T, margin: T) -> PhiDiagnostic<T> {
    let lo = reference.values()[0] + margin;
    let hi = reference.values()[reference.len() - 1] - margin;
    let rho = state.rho(ell);
    let values: Vec<Option<T>> = rho
        .iter()
        .zip(&state.z)
        .map(|(&r, &z)| {
            if !(r > lo && r < hi) {
                return None;
            }
            reference.inverse(r).ok().map(|x| reference.eval_smooth(x - z))
        })
        .collect();
    let excluded = values.iter().filter(|v| v.is_none()).count();
    let mut min = T::infinity();
    let mut max = T::neg_infinity();
    for v in values.iter().flatten() {
        min = min.min(*v);
        max = max.max(*v);
    }
    let range = if max >= min { max - min } else { T::zero() };
    PhiDiagnostic { values, excluded, range }
}
