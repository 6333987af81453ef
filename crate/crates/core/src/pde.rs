//! Finite volume integration of the nonlocal conservation laws
//! `rho_t + (rho v(A(rho)))_x = 0` and `rho_t + (rho A(v(rho)))_x = 0`
//! on a truncated domain with constant ghost states.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ftls::oscillatory_density;
use crate::model::{ModelConfig, ModelVariant};
use crate::profile::{Profile, Stencil};
use crate::roots::golden_min;
use crate::scalar::Real;

/// Cells above which the velocity field is computed in parallel.
const PARALLEL_CELLS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Donor cell `F_{j+1/2} = rho_j V_j`.
    #[default]
    Upwind,
    LaxFriedrichs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState<T> {
    pub t: T,
    pub x_start: T,
    pub dx: T,
    pub rho: Vec<T>,
    /// Ghost values `(rho_minus, rho_plus)` beyond either end.
    pub boundary: (T, T),
}

impl<T: Real> FieldState<T> {
    /// Cells `x_j = lo + j dx` covering `[lo, hi]`, filled from `f`.
    pub fn from_fn(domain: (T, T), dx: T, boundary: (T, T), f: impl Fn(T) -> T) -> Result<Self> {
        let (lo, hi) = domain;
        if !(hi > lo) || !(dx > T::zero()) {
            return Err(Error::Domain(format!("bad grid [{}, {}] with dx = {}", lo, hi, dx)));
        }
        let n = ((hi - lo) / dx - T::lit(1e-9)).ceil().to_usize().unwrap_or(1) + 1;
        let rho = (0..n).map(|j| f(lo + dx * T::from_usize_lossy(j))).collect();
        Ok(Self { t: T::zero(), x_start: lo, dx, rho, boundary })
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn x(&self, j: usize) -> T {
        self.x_start + self.dx * T::from_usize_lossy(j)
    }

    pub fn mass(&self) -> T {
        self.rho.iter().fold(T::zero(), |a, &r| a + r) * self.dx
    }

    pub fn total_variation(&self) -> T {
        self.rho.windows(2).fold(T::zero(), |a, w| a + (w[1] - w[0]).abs())
    }

    /// Value at cell `j`, ghost states outside.
    fn ghost(&self, j: isize) -> T {
        if j < 0 {
            self.boundary.0
        } else if j as usize >= self.rho.len() {
            self.boundary.1
        } else {
            self.rho[j as usize]
        }
    }
}

/// `V_j` at every cell plus the two ghost cells: index `0` is the left ghost,
/// index `n + 1` the right one.
pub fn nonlocal_velocity_field<T: Real>(state: &FieldState<T>, config: &ModelConfig<T>) -> Result<Vec<T>> {
    let stencil = Stencil::new(&config.kernel, state.dx)?;
    let n = state.len() as isize;
    let v = &config.velocity;
    let cell = |j: isize| -> T {
        let a = stencil.apply_with(|k| {
            let r = state.ghost(j + k as isize);
            match config.variant {
                ModelVariant::DensityAveraged => r,
                ModelVariant::VelocityAveraged => v.v(r),
            }
        });
        match config.variant {
            ModelVariant::DensityAveraged => v.v(a),
            ModelVariant::VelocityAveraged => a,
        }
    };
    Ok(if state.len() >= PARALLEL_CELLS {
        (-1..=n).into_par_iter().map(cell).collect()
    } else {
        (-1..=n).map(cell).collect()
    })
}

/// Largest stable step, `0.5 dx / max(1, max |V|)`.
pub fn cfl_limit<T: Real>(dx: T, velocity: &[T]) -> T {
    let vmax = velocity.iter().fold(T::one(), |m, &v| m.max(v.abs()));
    T::lit(0.5) * dx / vmax
}

/// Interface fluxes `F_{j-1/2}` for `j = 0..=n`.
pub fn numerical_fluxes<T: Real>(state: &FieldState<T>, dt: T, config: &ModelConfig<T>, scheme: Scheme) -> Result<Vec<T>> {
    let vel = nonlocal_velocity_field(state, config)?;
    let limit = cfl_limit(state.dx, &vel);
    if !(dt > T::zero()) || dt > limit * (T::one() + T::lit(1e-12)) {
        return Err(Error::Cfl { dt: dt.as_f64(), limit: limit.as_f64() });
    }
    let n = state.len();
    let lam = state.dx / dt;
    // cell j has velocity vel[j + 1]
    let fluxes = (0..=n)
        .map(|i| {
            let l = i as isize - 1;
            let (rl, rr) = (state.ghost(l), state.ghost(l + 1));
            let (vl, vr) = (vel[i], vel[i + 1]);
            match scheme {
                Scheme::Upwind => rl * vl,
                Scheme::LaxFriedrichs => T::lit(0.5) * (rl * vl + rr * vr) - T::lit(0.5) * lam * (rr - rl),
            }
        })
        .collect();
    Ok(fluxes)
}

/// One conservative step.
pub fn pde_step<T: Real>(state: &FieldState<T>, dt: T, config: &ModelConfig<T>, scheme: Scheme) -> Result<FieldState<T>> {
    let f = numerical_fluxes(state, dt, config, scheme)?;
    let r = dt / state.dx;
    let rho: Vec<T> = state.rho.iter().enumerate().map(|(j, &q)| q - r * (f[j + 1] - f[j])).collect();
    if rho.iter().any(|q| !q.is_finite()) {
        return Err(Error::NonFinite { t: (state.t + dt).as_f64() });
    }
    Ok(FieldState { t: state.t + dt, x_start: state.x_start, dx: state.dx, rho, boundary: state.boundary })
}

/// Default step: 80% of the CFL bound for speeds up to one.
pub fn default_dt<T: Real>(dx: T) -> T {
    T::lit(0.4) * dx
}

/// Run to each of the sorted `times`, returning one snapshot per entry.
pub fn simulate_field<T: Real>(
    state: &FieldState<T>,
    config: &ModelConfig<T>,
    scheme: Scheme,
    dt: T,
    times: &[T],
) -> Result<Vec<FieldState<T>>> {
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
            cur = pde_step(&cur, h, config, scheme)?;
            if remaining == h {
                cur.t = target;
            }
        }
        out.push(cur.clone());
    }
    Ok(out)
}

/// Oscillatory three-branch initial datum on `[lo, hi]`.
pub fn oscillatory_field_ic<T: Real>(domain: (T, T), dx: T) -> Result<FieldState<T>> {
    if domain.0 > -T::one() || domain.1 < T::one() {
        return Err(Error::Domain("the oscillatory datum needs a grid spanning [-1, 1]".into()));
    }
    FieldState::from_fn(domain, dx, (T::lit(0.2), T::lit(0.8)), oscillatory_density)
}

/// Default grid `[-2, 3]`.
pub fn default_domain<T: Real>() -> (T, T) {
    (T::lit(-2.0), T::lit(3.0))
}

/// `max_j |rho_j - Q(x_j - c)|` over cells in `window`.
pub fn sup_distance_to<T: Real>(state: &FieldState<T>, q: &Profile<T>, c: T, window: (T, T)) -> T {
    (0..state.len())
        .filter(|&j| state.x(j) >= window.0 && state.x(j) <= window.1)
        .fold(T::zero(), |m, j| m.max((state.rho[j] - q.eval(state.x(j) - c)).abs()))
}

/// Shift `c` minimising the sup distance to `Q(x - c)` over `window`: a scan
/// of `[-radius, radius]` in steps of `dx`, then golden section around the best.
pub fn align_to_profile<T: Real>(state: &FieldState<T>, q: &Profile<T>, window: (T, T), radius: T) -> (T, T) {
    let obj = |c: T| sup_distance_to(state, q, c, window);
    let steps = (radius / state.dx).ceil().to_usize().unwrap_or(0);
    let mut best = (T::zero(), obj(T::zero()));
    for k in 0..=2 * steps {
        let c = -radius + state.dx * T::from_usize_lossy(k);
        let e = obj(c);
        if e < best.1 {
            best = (c, e);
        }
    }
    let (c, e) = golden_min(obj, best.0 - state.dx, best.0 + state.dx, state.dx * T::lit(1e-4));
    if e < best.1 {
        (c, e)
    } else {
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Converging,
    Diverging,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstabilityReport<T> {
    pub times: Vec<T>,
    pub tv: Vec<T>,
    /// Distance to the best shifted reference, when one was given.
    pub sup_dist: Vec<Option<T>>,
    pub shifts: Vec<Option<T>>,
    pub classification: Trend,
}

/// Total variation per snapshot and, with a reference `Q`, the aligned sup
/// distance over `window`. Converging when the last total variation does not
/// exceed the first.
pub fn instability_metric<T: Real>(
    snapshots: &[FieldState<T>],
    reference: Option<&Profile<T>>,
    window: (T, T),
) -> Result<InstabilityReport<T>> {
    if snapshots.len() < 2 {
        return Err(Error::InvalidConfig("need at least two snapshots".into()));
    }
    let tv: Vec<T> = snapshots.iter().map(|s| s.total_variation()).collect();
    let (shifts, sup_dist) = snapshots
        .iter()
        .map(|s| match reference {
            Some(q) => {
                let (c, e) = align_to_profile(s, q, window, T::lit(0.5));
                (Some(c), Some(e))
            }
            None => (None, None),
        })
        .unzip();
    let classification = if tv[tv.len() - 1] <= tv[0] { Trend::Converging } else { Trend::Diverging };
    Ok(InstabilityReport { times: snapshots.iter().map(|s| s.t).collect(), tv, sup_dist, shifts, classification })
}
