//! Discrete profiles `P` of the follow-the-leaders models.
//!
//! `P` solves the delay equation
//! `P'(x) = -P^2 / (ell (V(x) - sigma)) [V(L(x)) - V(x)]`, with leader map
//! `L(x) = x + ell / P(x)` and `V = v(A^P)` or `A^P(v(P))`. All delayed
//! arguments lie at least `ell` to the right, so the equation is integrated
//! backwards with classical RK4; delayed values come from cubic Hermite
//! interpolation of the nodes already computed, or from the seed itself.

use crate::error::{Error, Result};
use crate::model::{EndpointPair, ModelConfig, ModelVariant};
use crate::profile::{Profile, ProfileKind, ProfileMeta};
use crate::profile_macro::{first_seed_point, limit_profiles, outer_step, AsymptoticOptions, Seed, DOMAIN_DECAY};
use crate::rates::{discrete_rate, Side};
use crate::roots::bisect;
use crate::scalar::Real;

/// Default RK4 steps per car length.
pub const DEFAULT_STEPS_PER_CAR: usize = 16;
/// Fewest admissible RK4 steps per car length.
pub const MIN_STEPS_PER_CAR: usize = 8;

const GL8_NODES: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GL8_WEIGHTS: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

/// Leader position `x + ell / P(x)`.
pub fn leader_op<T: Real>(p: &Profile<T>, ell: T, x: T) -> T {
    x + ell / p.eval_smooth(x)
}

/// Frame velocities `(V(x) - sigma, V(L(x)) - sigma)` given `P(x) = p_x` and
/// a lookup for `P` at leader positions.
fn chain_velocities<T: Real>(
    config: &ModelConfig<T>,
    x: T,
    p_x: T,
    lookup: &mut dyn FnMut(T) -> Result<T>,
) -> Result<(T, T)> {
    let h = config.h();
    let ell = config.ell;
    let mut ys = Vec::with_capacity(2 * config.m() + 8);
    let mut ps = Vec::with_capacity(2 * config.m() + 8);
    ys.push(x);
    ps.push(p_x);
    loop {
        let y = *ys.last().unwrap() + ell / *ps.last().unwrap();
        ys.push(y);
        if ys.len() > 2 && y - ys[1] >= h {
            break;
        }
        let q = lookup(y)?;
        if !(q > T::zero()) {
            return Err(Error::Positivity { x: y.as_f64(), value: q.as_f64() });
        }
        ps.push(q);
    }
    let v = &config.velocity;
    let average = |b: usize| {
        let mut acc = T::zero();
        let mut k = b;
        while ys[k] - ys[b] < h {
            let w = config.kernel.integral(ys[k] - ys[b], ys[k + 1] - ys[b]);
            acc = acc
                + w * match config.variant {
                    ModelVariant::DensityAveraged => ps[k],
                    ModelVariant::VelocityAveraged => v.v(ps[k]),
                };
            k += 1;
        }
        match config.variant {
            ModelVariant::DensityAveraged => v.v(acc) - config.sigma,
            ModelVariant::VelocityAveraged => acc - config.sigma,
        }
    };
    Ok((average(0), average(1)))
}

/// `P'(x)` from the delay equation.
fn rhs<T: Real>(config: &ModelConfig<T>, x: T, p: T, lookup: &mut dyn FnMut(T) -> Result<T>) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::Positivity { x: x.as_f64(), value: p.as_f64() });
    }
    let (v0, v1) = chain_velocities(config, x, p, lookup)?;
    if !(v0 > T::zero()) {
        return Err(Error::Domain(format!("frame velocity {} is not positive at x = {}", v0, x)));
    }
    Ok(-p * p / (config.ell * v0) * (v1 - v0))
}

/// The averaged quantity `A^P(x)`, or `A^P(v(P))(x)` for the velocity-averaged variant.
pub fn discrete_average<T: Real>(p: &Profile<T>, config: &ModelConfig<T>, x: T) -> T {
    let h = config.h();
    let mut y = x;
    let mut q = p.eval_smooth(x);
    let mut acc = T::zero();
    while y - x < h {
        let next = y + config.ell / q;
        let w = config.kernel.integral(y - x, next - x);
        acc = acc
            + w * match config.variant {
                ModelVariant::DensityAveraged => q,
                ModelVariant::VelocityAveraged => config.velocity.v(q),
            };
        y = next;
        q = p.eval_smooth(y);
    }
    acc
}

/// Frame velocity `V(x) - sigma` seen by a car at `x` on the profile.
pub fn profile_velocity<T: Real>(p: &Profile<T>, config: &ModelConfig<T>, x: T) -> T {
    let a = discrete_average(p, config, x);
    match config.variant {
        ModelVariant::DensityAveraged => config.velocity.v(a) - config.sigma,
        ModelVariant::VelocityAveraged => a - config.sigma,
    }
}

/// `int_a^b f` with eight-point Gauss-Legendre on each piece between `a`, the
/// grid points inside `(a, b)`, and `b`.
fn gauss_piecewise<T: Real>(a: T, b: T, grid: (T, T), f: &mut dyn FnMut(T) -> Result<T>) -> Result<T> {
    let (x_start, dx) = grid;
    let mut cuts = vec![a];
    let mut k = ((a - x_start) / dx).floor() + T::one();
    loop {
        let g = x_start + k * dx;
        if g >= b {
            break;
        }
        if g > a {
            cuts.push(g);
        }
        k = k + T::one();
    }
    cuts.push(b);
    let mut total = T::zero();
    for seg in cuts.windows(2) {
        let mid = (seg[0] + seg[1]) * T::lit(0.5);
        let half = (seg[1] - seg[0]) * T::lit(0.5);
        for (&n, &w) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
            let d = half * T::lit(n);
            total = total + T::lit(w) * half * (f(mid - d)? + f(mid + d)?);
        }
    }
    Ok(total)
}

/// Crossing time `int_x^{L(x)} dz / (V(z) - sigma)` under a lookup for `P`.
fn crossing_time<T: Real>(
    config: &ModelConfig<T>,
    x: T,
    grid: (T, T),
    lookup: &mut dyn FnMut(T) -> Result<T>,
) -> Result<T> {
    let px = lookup(x)?;
    let end = x + config.ell / px;
    let mut integrand = |z: T| -> Result<T> {
        let pz = lookup(z)?;
        let (v0, _) = chain_velocities(config, z, pz, lookup)?;
        Ok(T::one() / v0)
    };
    gauss_piecewise(x, end, grid, &mut integrand)
}

/// `|int_x^{L(x)} dz / (V(z) - sigma) - ell / fbar|`.
pub fn periodicity_residual<T: Real>(p: &Profile<T>, config: &ModelConfig<T>, fbar: T, x: T) -> Result<T> {
    let hi = p.x_end();
    let mut lookup = |y: T| -> Result<T> {
        if y > hi {
            return Err(Error::DelayOutOfRange { x: y.as_f64(), lo: p.x_start().as_f64(), hi: hi.as_f64() });
        }
        Ok(p.eval_smooth(y))
    };
    let t = crossing_time(config, x, (p.x_start(), p.dx()), &mut lookup)?;
    Ok((t - config.ell / fbar).abs())
}

/// Backward RK4 solve of the delay equation from the seed at `x0` down to
/// `x_min`, with `steps_per_car` steps per car length. Seed samples with exact
/// slopes are stored up to `x_keep`.
pub fn solve_p_ivp<T: Real>(
    config: &ModelConfig<T>,
    seed: &Seed<T>,
    x0: T,
    x_min: T,
    steps_per_car: usize,
    x_keep: T,
) -> Result<Profile<T>> {
    if steps_per_car < MIN_STEPS_PER_CAR {
        return Err(Error::StepSize(format!("need at least {} steps per car length", MIN_STEPS_PER_CAR)));
    }
    if config.kernel.is_symmetric() {
        return Err(Error::Domain("profile solvers need a one-sided kernel".into()));
    }
    if !(x_min < x0) {
        return Err(Error::Domain(format!("x_min = {} must lie left of the seed point {}", x_min, x0)));
    }
    let dx = config.ell / T::from_usize_lossy(steps_per_car);
    let n_back = ((x0 - x_min) / dx).ceil().to_usize().unwrap_or(1).max(1);
    let psi0 = seed.eval(x0);
    if !(psi0 > T::zero() && psi0 < T::one()) {
        return Err(Error::Positivity { x: x0.as_f64(), value: psi0.as_f64() });
    }

    // nodes x0 - n dx, in order of decreasing x
    let mut vals: Vec<T> = Vec::with_capacity(n_back + 1);
    let mut ders: Vec<T> = Vec::with_capacity(n_back + 1);
    vals.push(psi0);

    for n in 0..=n_back {
        let xn = x0 - dx * T::from_usize_lossy(n);
        let pn = vals[n];
        let done = n;
        let mut lookup = |y: T| -> Result<T> {
            if y >= x0 {
                return Ok(seed.eval(y));
            }
            let u = (x0 - y) / dx;
            let i = u.floor().to_usize().unwrap_or(0);
            if i + 1 > done {
                return Err(Error::DelayOutOfRange {
                    x: y.as_f64(),
                    lo: (x0 - dx * T::from_usize_lossy(done)).as_f64(),
                    hi: x0.as_f64(),
                });
            }
            // node i is the right end, node i + 1 the left end
            let t = T::one() - (u - T::from_usize_lossy(i));
            Ok(hermite(vals[i + 1], vals[i], ders[i + 1] * dx, ders[i] * dx, t))
        };
        let k1 = rhs(config, xn, pn, &mut lookup)?;
        if n == n_back {
            ders.push(k1);
            break;
        }
        let half = dx * T::lit(0.5);
        let k2 = rhs(config, xn - half, pn - half * k1, &mut lookup)?;
        let k3 = rhs(config, xn - half, pn - half * k2, &mut lookup)?;
        let k4 = rhs(config, xn - dx, pn - dx * k3, &mut lookup)?;
        let next = pn - dx / T::lit(6.0) * (k1 + T::lit(2.0) * (k2 + k3) + k4);
        if !(next > T::zero() && next < T::one()) {
            return Err(Error::Positivity { x: (xn - dx).as_f64(), value: next.as_f64() });
        }
        ders.push(k1);
        vals.push(next);
    }

    // crossing time at the seed point fixes the flux carried by the solution
    let grid = (x0, dx);
    let mut seed_lookup = |y: T| -> Result<T> { Ok(seed.eval(y)) };
    let tp0 = crossing_time(config, x0, grid, &mut seed_lookup)?;
    let fbar = config.ell / tp0;

    // assemble ascending arrays, then append seed samples
    let mut values: Vec<T> = vals.iter().rev().copied().collect();
    let mut slopes: Vec<T> = ders.iter().rev().copied().collect();
    let x_start = x0 - dx * T::from_usize_lossy(n_back);
    let extra = ((x_keep - x0) / dx).ceil().to_usize().unwrap_or(0);
    for j in 1..=extra {
        let x = x0 + dx * T::from_usize_lossy(j);
        values.push(seed.eval(x));
        slopes.push(seed.derivative(x).unwrap_or_else(|| {
            let e = dx * T::lit(1e-3);
            (seed.eval(x + e) - seed.eval(x - e)) / (e + e)
        }));
    }

    let rho_plus = seed.limit();
    let rho_hat = config.stagnation_point()?;
    let g = |r: T| config.frame_flux(r) - fbar;
    let rho_minus = if g(rho_hat) > T::zero() { bisect(g, T::zero(), rho_hat, T::lit(1e-14))? } else { rho_hat };
    let meta = ProfileMeta {
        kind: ProfileKind::Micro,
        variant: config.variant,
        sigma: config.sigma,
        ell: Some(config.ell),
        fbar,
        kappa: config.kernel.sup_norm(),
        lipschitz_v: config.velocity.inverse_lipschitz(rho_minus, rho_plus.max(rho_minus)),
        seed_x: x0,
        seed_rate: seed.rate(),
        outer_iterations: 0,
    };
    Profile::new(x_start, dx, values, Some(slopes), (rho_minus, rho_hat, rho_plus), meta)
}

fn hermite<T: Real>(y0: T, y1: T, m0: T, m1: T, t: T) -> T {
    let t2 = t * t;
    let t3 = t2 * t;
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    y0 * (two * t3 - three * t2 + T::one()) + m0 * (t3 - two * t2 + t) + y1 * (three * t2 - two * t3) + m1 * (t3 - t2)
}

/// `[-12 / lambda_-^ell, 12 / lambda_+^ell]` from the discrete rates.
pub fn default_p_domain<T: Real>(config: &ModelConfig<T>, pair: &EndpointPair<T>) -> Result<(T, T)> {
    let lp = discrete_rate(config, pair.rho_plus, Side::PlusInfinity)?.lambda;
    let lm = discrete_rate(config, pair.rho_minus, Side::MinusInfinity)?.lambda;
    let d = T::lit(DOMAIN_DECAY);
    Ok((-d / lm, d / lp))
}

/// Two-sided discrete profile, normalised so that `P(0) = rho_hat`.
pub fn solve_p_asymptotic<T: Real>(
    config: &ModelConfig<T>,
    pair: &EndpointPair<T>,
    domain: (T, T),
    steps_per_car: usize,
) -> Result<Profile<T>> {
    solve_p_asymptotic_with(config, pair, domain, steps_per_car, &AsymptoticOptions::default())
}

pub fn solve_p_asymptotic_with<T: Real>(
    config: &ModelConfig<T>,
    pair: &EndpointPair<T>,
    domain: (T, T),
    steps_per_car: usize,
    opts: &AsymptoticOptions<T>,
) -> Result<Profile<T>> {
    if !(domain.0 < T::zero() && domain.1 > T::zero()) {
        return Err(Error::Domain("the domain must contain the anchor x = 0".into()));
    }
    let lambda = discrete_rate(config, pair.rho_plus, Side::PlusInfinity)?.lambda;
    let seed = Seed::Exponential { rho_plus: pair.rho_plus, lambda };
    let dx = config.ell / T::from_usize_lossy(steps_per_car);
    let step = outer_step(config.h(), lambda, dx);
    let first = first_seed_point(lambda, opts);
    // room for one crossing plus a full averaging window beyond the domain
    let reach = config.h() + T::lit(4.0) * config.ell / pair.rho_plus;
    let keep = domain.1 + step + reach;
    limit_profiles(domain, step, first, opts, (pair.rho_minus, pair.rho_plus), keep, |xs, xl| {
        solve_p_ivp(config, &seed, xs, xl, steps_per_car, xs.max(keep) + reach)
    })
}

/// Car positions generated by a profile: `z_{i+1} = z_i + ell / P(z_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CarDistribution<T> {
    pub positions: Vec<T>,
}

/// Positions `z_0 = z0` with `count_left` followers and `count_right` leaders,
/// in increasing order. All cars must lie on the stored profile.
pub fn generate_cars<T: Real>(
    p: &Profile<T>,
    ell: T,
    z0: T,
    count_left: usize,
    count_right: usize,
) -> Result<CarDistribution<T>> {
    let mut right = Vec::with_capacity(count_right);
    let mut z = z0;
    for _ in 0..count_right {
        z = leader_op(p, ell, z);
        right.push(z);
    }
    let lowest = p.values().iter().fold(p.rho_minus, |m, &v| m.min(v));
    let mut left = Vec::with_capacity(count_left);
    let mut z = z0;
    for _ in 0..count_left {
        let target = z;
        let g = |y: T| leader_op(p, ell, y) - target;
        let lo = target - ell / lowest - ell;
        let hi = target - ell * T::lit(0.5);
        let tol = T::lit(1e-14).max(T::epsilon() * T::lit(8.0)) * (T::one() + target.abs());
        z = bisect(g, lo, hi, tol).map_err(|_| Error::Follower(target.as_f64()))?;
        left.push(z);
    }
    let mut positions: Vec<T> = left.into_iter().rev().collect();
    positions.push(z0);
    positions.extend(right);
    let (first, last) = (positions[0], positions[positions.len() - 1]);
    if first < p.x_start() || last > p.x_end() {
        return Err(Error::Domain(format!(
            "cars span [{}, {}] beyond the stored profile [{}, {}]",
            first,
            last,
            p.x_start(),
            p.x_end()
        )));
    }
    Ok(CarDistribution { positions })
}
