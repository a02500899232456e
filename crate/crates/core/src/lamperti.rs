//! Lamperti time change, exponential functionals of the spine and the
//! density of `I`.

use rayon::prelude::*;
use serde::Serialize;

use crate::cumulant::CumulantModel;
use crate::error::{Error, Result};
use crate::levy::{LevyTriplet, PathDriver, PathGrid};
use crate::numeric::exprel;
use crate::seed::{derive_seed, tag};
use crate::stats::{quantile, MeanSe};

/// Stop rule and discretisation for clock integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockOptions {
    /// Integration stops once `e^{-alpha xi} < stop_cutoff * (I + 1)`.
    pub stop_cutoff: f64,
    /// ...and at least this much process time has elapsed.
    pub min_horizon: f64,
    pub max_step: f64,
    /// Process-time budget before the first extension.
    pub initial_horizon: f64,
    /// Number of times the budget may double before giving up.
    pub max_doublings: u32,
}

impl Default for ClockOptions {
    fn default() -> Self {
        ClockOptions { stop_cutoff: 1e-10, min_horizon: 1.0, max_step: 0.02, initial_horizon: 64.0, max_doublings: 8 }
    }
}

impl ClockOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.stop_cutoff > 0.0 && self.stop_cutoff < 1.0) {
            return Err(Error::InvalidParameter(format!("stop_cutoff must lie in (0, 1), got {}", self.stop_cutoff)));
        }
        if !(self.min_horizon >= 0.0 && self.max_step > 0.0 && self.initial_horizon > 0.0) {
            return Err(Error::InvalidParameter("clock horizons and step must be positive".into()));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn should_stop(&self, integrand: f64, accumulated: f64, elapsed: f64) -> bool {
        elapsed >= self.min_horizon && integrand < self.stop_cutoff * (accumulated + 1.0)
    }
}

/// `int_a^b e^{c xi}` for `xi` linear between `(t_a, xi_a)` and `(t_b, xi_b)`.
#[inline]
pub fn segment_clock(c: f64, t_a: f64, xi_a: f64, t_b: f64, xi_b: f64) -> f64 {
    let h = t_b - t_a;
    if h <= 0.0 {
        return 0.0;
    }
    h * (c * xi_a).exp() * exprel(c * (xi_b - xi_a))
}

/// Inverts `segment_clock` in its upper limit: the elapsed process time `u`
/// such that the clock has advanced by `r` since `t_a`.
#[inline]
fn segment_clock_inverse(c: f64, h: f64, xi_a: f64, xi_b: f64, r: f64) -> f64 {
    let g = c * (xi_b - xi_a) / h;
    let base = r * (-c * xi_a).exp();
    if (g * h).abs() < 1e-12 {
        base
    } else {
        (g * base).ln_1p() / g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Absorption {
    At(f64),
    NotYetAbsorbed,
}

/// Positive self-similar Markov path obtained from a Lévy path.
///
/// Real times are `origin^{-alpha}` times the unit clock and sizes are
/// `origin * e^{xi}`, so paths built from the same `xi` for different
/// origins are exact rescalings of each other.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PssmpPath {
    pub times: Vec<f64>,
    pub sizes: Vec<f64>,
    pub absorption: Absorption,
    pub alpha: f64,
    pub origin: f64,
    /// Process time of `xi` at each node.
    pub xi_times: Vec<f64>,
    /// Unit clock `int_0^s e^{-alpha xi}` at each node.
    pub clock: Vec<f64>,
    xi_values: Vec<f64>,
}

impl PssmpPath {
    fn scale(&self) -> f64 {
        self.origin.powf(-self.alpha)
    }

    /// Process time `s` with `origin^{-alpha} clock(s) = t`.
    pub fn time_change_inverse(&self, t: f64) -> f64 {
        let target = t / self.scale();
        let k = self.clock.partition_point(|&c| c <= target);
        if k == 0 {
            return 0.0;
        }
        if k == self.clock.len() {
            return *self.xi_times.last().expect("nonempty path");
        }
        let a = k - 1;
        let h = self.xi_times[k] - self.xi_times[a];
        if h == 0.0 {
            return self.xi_times[a];
        }
        let u = segment_clock_inverse(-self.alpha, h, self.xi_values[a], self.xi_values[k], target - self.clock[a]);
        self.xi_times[a] + u.clamp(0.0, h)
    }

    /// Size at real time `t`; zero after absorption.
    pub fn size_at(&self, t: f64) -> f64 {
        if let Absorption::At(z) = self.absorption {
            if t >= z {
                return 0.0;
            }
        }
        let s = self.time_change_inverse(t);
        let k = self.xi_times.partition_point(|&x| x <= s);
        let a = k.saturating_sub(1);
        let xi = if k < self.xi_times.len() && self.xi_times[k] > self.xi_times[a] {
            let w = (s - self.xi_times[a]) / (self.xi_times[k] - self.xi_times[a]);
            self.xi_values[a] + w * (self.xi_values[k] - self.xi_values[a])
        } else {
            self.xi_values[a]
        };
        self.origin * xi.exp()
    }
}

/// Lamperti transform of `xi` started from `x0`, covering real times up
/// to `horizon` (which may be infinite). Pre-jump nodes are dropped so the
/// returned grid is càdlàg with strictly increasing times.
pub fn lamperti_transform(xi: &PathGrid, alpha: f64, x0: f64, horizon: f64, opts: &ClockOptions) -> Result<PssmpPath> {
    if !(alpha < 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be negative, got {alpha}")));
    }
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(Error::InvalidParameter(format!("x0 must be positive, got {x0}")));
    }
    if !(horizon >= 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be >= 0, got {horizon}")));
    }
    if xi.is_empty() {
        return Err(Error::PathTooShort("empty path".into()));
    }
    let c = -alpha;
    let scale = x0.powf(c);
    let mut out = PssmpPath {
        times: vec![0.0],
        sizes: vec![x0 * xi.values[0].exp()],
        absorption: Absorption::NotYetAbsorbed,
        alpha,
        origin: x0,
        xi_times: vec![xi.times[0]],
        clock: vec![0.0],
        xi_values: vec![xi.values[0]],
    };
    if horizon == 0.0 {
        return Ok(out);
    }
    let mut acc = 0.0;
    for i in 1..xi.len() {
        acc += segment_clock(c, xi.times[i - 1], xi.values[i - 1], xi.times[i], xi.values[i]);
        let t = scale * acc;
        if t > horizon {
            // cut the last segment at the horizon
            let a = i - 1;
            let h = xi.times[i] - xi.times[a];
            let prev_clock = *out.clock.last().expect("nonempty");
            let u = segment_clock_inverse(c, h, xi.values[a], xi.values[i], horizon / scale - prev_clock).clamp(0.0, h);
            let v = xi.values[a] + (xi.values[i] - xi.values[a]) * (u / h);
            push_node(&mut out, horizon, x0 * v.exp(), xi.times[a] + u, horizon / scale, v);
            return Ok(out);
        }
        push_node(&mut out, t, x0 * xi.values[i].exp(), xi.times[i], acc, xi.values[i]);
        let integrand = (c * xi.values[i]).exp();
        if opts.should_stop(integrand, acc, xi.times[i]) {
            out.absorption = Absorption::At(t);
            return Ok(out);
        }
    }
    if horizon.is_finite() && scale * acc >= horizon {
        return Ok(out);
    }
    Err(Error::PathTooShort(format!(
        "clock reached {} before the horizon {horizon} and the integrand is still above the cutoff",
        scale * acc
    )))
}

fn push_node(p: &mut PssmpPath, t: f64, x: f64, s: f64, clock: f64, v: f64) {
    if p.xi_times.last() == Some(&s) {
        // post-jump value replaces the pre-jump one
        let last = p.times.len() - 1;
        p.sizes[last] = x;
        p.xi_values[last] = v;
        return;
    }
    p.times.push(t);
    p.sizes.push(x);
    p.xi_times.push(s);
    p.clock.push(clock);
    p.xi_values.push(v);
}

/// `I = int_0^inf e^{-alpha eta}` accumulated along a finite path until the
/// stop rule triggers.
pub fn absorption_time(eta: &PathGrid, alpha: f64, opts: &ClockOptions) -> Result<f64> {
    if !(alpha < 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be negative, got {alpha}")));
    }
    let c = -alpha;
    let mut acc = 0.0;
    for i in 1..eta.len() {
        acc += segment_clock(c, eta.times[i - 1], eta.values[i - 1], eta.times[i], eta.values[i]);
        if opts.should_stop((c * eta.values[i]).exp(), acc, eta.times[i]) {
            return Ok(acc);
        }
    }
    Err(Error::PathTooShort(format!("integrand still above the cutoff at t = {}", eta.horizon())))
}

/// Sampler for the exponential functional of a Lévy process: the law of
/// the absorption time of a size-1 cell along the spine.
#[derive(Debug, Clone)]
pub struct SpineLaw {
    driver: PathDriver,
    alpha: f64,
    options: ClockOptions,
}

impl SpineLaw {
    pub fn new(triplet: &LevyTriplet, alpha: f64, options: ClockOptions) -> Result<SpineLaw> {
        if !(alpha < 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be negative, got {alpha}")));
        }
        options.validate()?;
        triplet.validate_process()?;
        Ok(SpineLaw { driver: PathDriver::new(triplet, options.max_step)?, alpha, options })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// One draw of `I`; streams the path and stops by the clock rule, or
    /// fails once the doubled process-time budget is exhausted.
    pub fn sample(&self, seed: u64) -> Result<f64> {
        self.sample_capped(seed, f64::INFINITY).map(|v| v.expect("uncapped draw"))
    }

    /// Same draw as `sample`, abandoned (returning `None`) as soon as the
    /// running integral exceeds `cap`.
    pub fn sample_capped(&self, seed: u64, cap: f64) -> Result<Option<f64>> {
        let c = -self.alpha;
        let mut sampler = self.driver.sampler(seed);
        let mut prev = sampler.next_node();
        let mut acc = 0.0;
        let mut budget = self.options.initial_horizon;
        let mut doublings = 0;
        loop {
            let node = sampler.next_node();
            acc += segment_clock(c, prev.time, prev.value, node.time, node.value);
            if acc > cap {
                return Ok(None);
            }
            if self.options.should_stop((c * node.value).exp(), acc, node.time) {
                return Ok(Some(acc));
            }
            if node.time > budget {
                if doublings == self.options.max_doublings {
                    return Err(Error::PathTooShort(format!(
                        "exponential functional not settled after process time {budget}"
                    )));
                }
                doublings += 1;
                budget *= 2.0;
            }
            prev = node;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpFunctionalSamples {
    pub values: Vec<f64>,
    pub model: String,
    pub count: usize,
}

/// `n` independent draws of `I`, in parallel, deterministic given `seed`.
pub fn sample_exp_functional(spine: &LevyTriplet, alpha: f64, n: usize, seed: u64, opts: &ClockOptions) -> Result<ExpFunctionalSamples> {
    let law = SpineLaw::new(spine, alpha, *opts)?;
    let values = (0..n)
        .into_par_iter()
        .map(|i| law.sample(derive_seed(seed, &[tag::EXP_FUNCTIONAL, i as u64])))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ExpFunctionalSamples {
        model: format!("spine(b={}, s2={}, alpha={alpha})", spine.drift, spine.gaussian_var),
        count: values.len(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// Kernel width on the log scale.
    pub bandwidth: f64,
}

impl DensityEstimate {
    /// Trapezoid integral of the estimate over its grid.
    pub fn total_mass(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, k)| 0.5 * (x[1] - x[0]) * (k[0] + k[1]))
            .sum()
    }
}

pub const MIN_DENSITY_SAMPLES: usize = 1000;
const DENSITY_GRID: usize = 1024;

/// Gaussian-kernel estimate of the density of `I`, built on `log I` and
/// mapped back through the Jacobian. The default bandwidth is Silverman's
/// rule on the log sample.
pub fn estimate_density_k(samples: &ExpFunctionalSamples, bandwidth: Option<f64>) -> Result<DensityEstimate> {
    let n = samples.values.len();
    if n < MIN_DENSITY_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_DENSITY_SAMPLES, got: n });
    }
    if samples.values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter("samples of I must be finite and positive".into()));
    }
    let z: Vec<f64> = samples.values.iter().map(|v| v.ln()).collect();
    let stats = MeanSe::of(&z);
    let sd = stats.se * (n as f64).sqrt();
    let iqr = quantile(&z, 0.75) - quantile(&z, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = match bandwidth {
        Some(b) if b > 0.0 => b,
        Some(b) => return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {b}"))),
        None => 0.9 * spread * (n as f64).powf(-0.2),
    };
    let (zmin, zmax) = z.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if zmax - zmin <= 1e-12 * zmax.abs().max(1.0) || !(h > 0.0) {
        return Err(Error::InsufficientVariation);
    }
    let lo = zmin - 4.0 * h;
    let hi = zmax + 4.0 * h;
    let dz = (hi - lo) / (DENSITY_GRID - 1) as f64;
    // linear binning, then a direct convolution on the grid
    let mut bins = vec![0.0; DENSITY_GRID];
    for &v in &z {
        let pos = (v - lo) / dz;
        let k = (pos.floor() as usize).min(DENSITY_GRID - 2);
        let w = pos - k as f64;
        bins[k] += 1.0 - w;
        bins[k + 1] += w;
    }
    let reach = ((6.0 * h / dz).ceil() as usize).min(DENSITY_GRID - 1);
    let kernel: Vec<f64> = (0..=reach)
        .map(|j| {
            let u = j as f64 * dz / h;
            (-0.5 * u * u).exp()
        })
        .collect();
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let mut grid = Vec::with_capacity(DENSITY_GRID);
    let mut density = Vec::with_capacity(DENSITY_GRID);
    for i in 0..DENSITY_GRID {
        let lo_j = i.saturating_sub(reach);
        let hi_j = (i + reach).min(DENSITY_GRID - 1);
        let f_z: f64 = (lo_j..=hi_j).map(|j| bins[j] * kernel[i.abs_diff(j)]).sum::<f64>() * norm;
        let x = (lo + i as f64 * dz).exp();
        grid.push(x);
        density.push(f_z / x);
    }
    Ok(DensityEstimate { grid, density, bandwidth: h })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    LowPower,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InverseMomentReport {
    pub estimate: f64,
    pub standard_error: f64,
    pub reference: f64,
    pub z_score: f64,
    pub samples: usize,
    pub verdict: Verdict,
}

/// Compares the sample mean of `1 / I` with `alpha kappa'(omega_-)`.
pub fn inverse_moment_check(samples: &ExpFunctionalSamples, model: &CumulantModel) -> InverseMomentReport {
    let inv: Vec<f64> = samples.values.iter().map(|v| 1.0 / v).collect();
    let m = MeanSe::of(&inv);
    let reference = model.inverse_moment();
    let z = m.z_score(reference);
    let verdict = if inv.len() < MIN_DENSITY_SAMPLES {
        Verdict::LowPower
    } else if z.abs() < 3.0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    InverseMomentReport { estimate: m.mean, standard_error: m.se, reference, z_score: z, samples: inv.len(), verdict }
}
