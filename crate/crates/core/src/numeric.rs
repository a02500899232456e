//! Numerical primitives: stable exponential helpers, quadrature wrappers,
//! bracketing root search and convex minimisation.

use crate::error::{Error, Result};

/// `expm1(x) / x`, continuous at 0.
#[inline]
pub fn exprel(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        1.0 + x * (0.5 + x * (1.0 / 6.0 + x / 24.0))
    } else {
        x.exp_m1() / x
    }
}

/// `e^x - 1 - x` without cancellation near 0.
#[inline]
pub fn expm1_minus_x(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        x2 * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x * (1.0 / 120.0 + x / 720.0))))
    } else {
        x.exp_m1() - x
    }
}

/// `cos(pi x)` exact at half-integers and integers.
pub fn cospi(x: f64) -> f64 {
    let r = x.rem_euclid(2.0);
    if r == 0.5 || r == 1.5 {
        return 0.0;
    }
    if r == 0.0 {
        return 1.0;
    }
    if r == 1.0 {
        return -1.0;
    }
    (std::f64::consts::PI * r).cos()
}

const QUAD_TOL: f64 = 1e-12;
const QUAD_ACCEPT: f64 = 1e-8;
const QUAD_MAX_LEVEL: u32 = 9;
const FRAC_PI_2: f64 = std::f64::consts::FRAC_PI_2;

#[inline]
fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

/// Refines a symmetric double-exponential rule level by level. `term(t)`
/// returns the weighted contribution of the node pair at abscissa `t >= 0`,
/// or `None` once the nodes have left the representable range.
fn refine<T: Fn(f64) -> Option<f64>>(centre: f64, term: T, what: &str) -> Result<f64> {
    let sweep = |h: f64, step: usize, first: usize| {
        let mut acc = 0.0;
        let mut k = first;
        while let Some(v) = term(k as f64 * h) {
            acc += v;
            k += step;
        }
        acc
    };
    let mut h = 1.0;
    let mut sum = centre + sweep(h, 1, 1);
    let mut estimate = h * sum;
    for _ in 0..QUAD_MAX_LEVEL {
        h *= 0.5;
        sum += sweep(h, 2, 1);
        let next = h * sum;
        let delta = (next - estimate).abs();
        estimate = next;
        if !estimate.is_finite() {
            break;
        }
        if delta <= QUAD_TOL * estimate.abs().max(1.0) {
            return Ok(estimate);
        }
        if h < 1.0 / 64.0 && delta > QUAD_ACCEPT * estimate.abs().max(1.0) * 1e6 {
            // not converging at all: divergent or wildly oscillating integrand
            break;
        }
    }
    Err(Error::Quadrature(format!("{what}: no convergence (estimate {estimate})")))
}

/// Integral over a finite interval by tanh-sinh quadrature. Nodes are placed
/// at exact offsets from the endpoints, so integrable endpoint singularities
/// are resolved down to the smallest representable distance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a).map(|v| -v);
    }
    let half = 0.5 * (b - a);
    let mid = a + half;
    let centre = half * FRAC_PI_2 * finite_or_zero(f(mid));
    let term = |t: f64| {
        let u = FRAC_PI_2 * t.sinh();
        let e = (2.0 * u).exp();
        if !e.is_finite() {
            return None;
        }
        let d = 2.0 * half / (e + 1.0);
        if d == 0.0 {
            return None;
        }
        let sech = 2.0 / (u.exp() + (-u).exp());
        let w = half * FRAC_PI_2 * t.cosh() * sech * sech;
        if w < 1e-300 {
            return None;
        }
        Some(w * (finite_or_zero(f(a + d)) + finite_or_zero(f(b - d))))
    };
    refine(centre, term, "finite interval")
}

/// Integral over `[a, +inf)` by exp-sinh quadrature.
pub fn integrate_to_inf<F: Fn(f64) -> f64>(f: F, a: f64) -> Result<f64> {
    let centre = FRAC_PI_2 * finite_or_zero(f(a + 1.0));
    let term = |t: f64| {
        if t == 0.0 {
            return Some(0.0);
        }
        let s = FRAC_PI_2 * t.sinh();
        let (far, near) = (s.exp(), (-s).exp());
        if !far.is_finite() || near == 0.0 {
            return None;
        }
        let c = FRAC_PI_2 * t.cosh();
        let hi = c * far * finite_or_zero(f(a + far));
        let lo = c * near * finite_or_zero(f(a + near));
        if hi == 0.0 && lo.abs() < 1e-300 && t > 1.0 {
            return None;
        }
        Some(hi + lo)
    };
    refine(centre, term, "upper tail")
}

/// Integral over `(-inf, b]`.
pub fn integrate_from_neg_inf<F: Fn(f64) -> f64>(f: F, b: f64) -> Result<f64> {
    integrate_to_inf(|y| f(-y), -b)
}

/// Bisection on a sign-changing bracket; stops when the bracket is narrower
/// than `tol` or stops shrinking in floating point.
pub fn bisect<F: Fn(f64) -> Result<f64>>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::InvalidParameter(format!(
            "bracket [{lo}, {hi}] does not change sign"
        )));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section search for the minimiser of a unimodal function on `[a, b]`.
pub fn golden_min<F: Fn(f64) -> Result<f64>>(f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}
