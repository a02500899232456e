//! Regularity of the area measure: Frostman energies, correlation dimension,
//! and the characteristic function of the height difference of two leaves.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::area::{tag_leaf, AreaBuilder, AreaProfile, LeafResidual};
use crate::cellsystem::CellEngine;
use crate::cumulant::{CumulantModel, Regime, RegimeReport};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, tag};
use crate::stats::{linear_fit, MeanSe};

/// Gaps below this are clamped in energy sums.
pub const GAP_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeafSample {
    lifetimes: Vec<f64>,
    weights: Vec<f64>,
    normalized: bool,
}

impl LeafSample {
    pub fn new(lifetimes: Vec<f64>, weights: Vec<f64>) -> Result<LeafSample> {
        if lifetimes.len() != weights.len() {
            return Err(Error::InvalidParameter("one weight per lifetime".into()));
        }
        if lifetimes.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidParameter("lifetimes must be finite and >= 0".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidParameter("weights must be finite and > 0".into()));
        }
        Ok(LeafSample { lifetimes, weights, normalized: false })
    }

    /// Equal weights `1/n`.
    pub fn uniform(lifetimes: Vec<f64>) -> Result<LeafSample> {
        let n = lifetimes.len();
        let mut s = LeafSample::new(lifetimes, vec![1.0; n])?;
        s.normalize();
        Ok(s)
    }

    /// The atoms of one profile weighted by mass; atoms beyond the
    /// profile's cap are dropped.
    pub fn from_profile(profile: &AreaProfile) -> Result<LeafSample> {
        let (t, w) = profile.atoms().iter().filter(|a| a.t.is_finite()).map(|a| (a.t, a.mass)).unzip();
        let mut s = LeafSample::new(t, w)?;
        s.normalize();
        Ok(s)
    }

    pub fn normalize(&mut self) {
        let total: f64 = self.weights.iter().sum();
        if total > 0.0 {
            self.weights.iter_mut().for_each(|w| *w /= total);
        }
        self.normalized = true;
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.lifetimes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lifetimes.is_empty()
    }

    pub fn lifetimes(&self) -> &[f64] {
        &self.lifetimes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// First `n` points, renormalized.
    pub fn prefix(&self, n: usize) -> LeafSample {
        let n = n.min(self.len());
        let mut s = LeafSample { lifetimes: self.lifetimes[..n].to_vec(), weights: self.weights[..n].to_vec(), normalized: false };
        s.normalize();
        s
    }

    fn sorted(&self) -> (Vec<f64>, Vec<f64>) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.lifetimes[a].total_cmp(&self.lifetimes[b]));
        (idx.iter().map(|&i| self.lifetimes[i]).collect(), idx.iter().map(|&i| self.weights[i]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Energy {
    pub b: f64,
    pub value: f64,
    /// Pairs whose gap was raised to the clamp.
    pub clamped: u64,
}

/// `sum_{i != j} w_i w_j / |t_i - t_j|^b` with gaps clamped below `clamp`.
pub fn b_energy_clamped(sample: &LeafSample, b: f64, clamp: f64) -> Result<Energy> {
    if !(b > 0.0 && b <= 1.0) {
        return Err(Error::InvalidParameter(format!("b must lie in (0, 1], got {b}")));
    }
    if sample.len() < 100 {
        return Err(Error::InsufficientSamples { needed: 100, got: sample.len() });
    }
    let t = &sample.lifetimes;
    let w = &sample.weights;
    if t.iter().all(|&x| x == t[0]) {
        return Err(Error::Degenerate("all lifetimes are equal".into()));
    }
    // rows in parallel, reduced in row order
    let rows: Vec<(f64, u64)> = (0..t.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            let mut clamped = 0;
            for j in 0..t.len() {
                if j == i {
                    continue;
                }
                let mut gap = (t[i] - t[j]).abs();
                if gap < clamp {
                    gap = clamp;
                    clamped += 1;
                }
                acc += w[j] / gap.powf(b);
            }
            (w[i] * acc, clamped)
        })
        .collect();
    let value = rows.iter().map(|r| r.0).sum();
    let clamped = rows.iter().map(|r| r.1).sum::<u64>() / 2;
    Ok(Energy { b, value, clamped })
}

pub fn b_energy(sample: &LeafSample, b: f64) -> Result<Energy> {
    b_energy_clamped(sample, b, GAP_CLAMP)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyRow {
    pub b: f64,
    /// Energy of the first half of the sample.
    pub half: Energy,
    pub full: Energy,
    pub relative_change: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub n_half: usize,
    pub n_full: usize,
    pub tolerance: f64,
    pub rows: Vec<EnergyRow>,
}

/// Energies on the first `n/2` and on all `n` points; a change beyond 25%
/// counts as blow-up. The sample should be in random order.
pub fn energy_stability(sample: &LeafSample, b_grid: &[f64]) -> Result<EnergyReport> {
    let half = sample.prefix(sample.len() / 2);
    let mut full = sample.clone();
    full.normalize();
    let tolerance = 0.25;
    let rows = b_grid
        .iter()
        .map(|&b| {
            let h = b_energy(&half, b)?;
            let f = b_energy(&full, b)?;
            let relative_change = (f.value - h.value).abs() / h.value;
            Ok(EnergyRow { b, half: h, full: f, relative_change, stable: relative_change <= tolerance })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnergyReport { n_half: half.len(), n_full: full.len(), tolerance, rows })
}

/// `C(r) = sum_{i != j} w_i w_j 1{|t_i - t_j| < r}` on a grid of radii.
pub fn correlation_integral(sample: &LeafSample, r_grid: &[f64]) -> Vec<f64> {
    let (t, w) = sample.sorted();
    let mut prefix = Vec::with_capacity(t.len() + 1);
    prefix.push(0.0);
    for x in &w {
        prefix.push(prefix.last().unwrap() + x);
    }
    r_grid
        .iter()
        .map(|&r| {
            let mut acc = 0.0;
            let mut lo = 0;
            let mut hi = 0;
            for i in 0..t.len() {
                while t[lo] <= t[i] - r {
                    lo += 1;
                }
                while hi < t.len() && t[hi] < t[i] + r {
                    hi += 1;
                }
                if hi - lo > 1 {
                    acc += w[i] * (prefix[hi] - prefix[lo] - w[i]).max(0.0);
                }
            }
            acc
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionEstimate {
    /// Fitted slope clamped to `[0, 1]`.
    pub slope: f64,
    pub raw_slope: f64,
    pub slope_se: f64,
    pub window: (f64, f64),
    pub r_grid: Vec<f64>,
    pub c_hat: Vec<f64>,
    /// `omega_- / (-alpha)` when the theory identifies the dimension.
    pub reference: Option<f64>,
}

/// Middle decade (in log scale) of a radius grid.
pub fn middle_decade(r_grid: &[f64]) -> (f64, f64) {
    let lo = r_grid.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = r_grid.iter().fold(0.0f64, |a, &b| a.max(b));
    let c = (lo * hi).sqrt();
    let h = 10f64.sqrt();
    (c / h, c * h)
}

fn check_r_grid(r_grid: &[f64]) -> Result<()> {
    if r_grid.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidParameter("radii must be positive".into()));
    }
    let lo = r_grid.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = r_grid.iter().fold(0.0f64, |a, &b| a.max(b));
    if r_grid.len() < 3 || hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(Error::InsufficientSpread("radius grid must span at least two decades".into()));
    }
    Ok(())
}

/// Log-log slope of an averaged correlation integral over `window`
/// (default: the middle decade).
pub fn fit_dimension(r_grid: &[f64], c_hat: &[f64], window: Option<(f64, f64)>) -> Result<DimensionEstimate> {
    check_r_grid(r_grid)?;
    let window = window.unwrap_or_else(|| middle_decade(r_grid));
    let tol = 1e-12;
    let (x, y): (Vec<f64>, Vec<f64>) = r_grid
        .iter()
        .zip(c_hat)
        .filter(|(r, c)| **r >= window.0 * (1.0 - tol) && **r <= window.1 * (1.0 + tol) && **c > 0.0)
        .map(|(r, c)| (r.ln(), c.ln()))
        .unzip();
    let fit = linear_fit(&x, &y).ok_or_else(|| Error::InsufficientSpread("fewer than two usable radii in the window".into()))?;
    Ok(DimensionEstimate {
        slope: fit.slope.clamp(0.0, 1.0),
        raw_slope: fit.slope,
        slope_se: fit.slope_se,
        window,
        r_grid: r_grid.to_vec(),
        c_hat: c_hat.to_vec(),
        reference: None,
    })
}

pub fn correlation_dimension(sample: &LeafSample, r_grid: &[f64]) -> Result<DimensionEstimate> {
    if sample.len() < 1000 {
        return Err(Error::InsufficientSamples { needed: 1000, got: sample.len() });
    }
    check_r_grid(r_grid)?;
    let mut s = sample.clone();
    s.normalize();
    fit_dimension(r_grid, &correlation_integral(&s, r_grid), None)
}

/// Correlation integral averaged over independent samples (one per system).
pub fn pooled_correlation_dimension(samples: &[LeafSample], r_grid: &[f64], window: Option<(f64, f64)>) -> Result<DimensionEstimate> {
    let total: usize = samples.iter().map(|s| s.len()).sum();
    if total < 1000 {
        return Err(Error::InsufficientSamples { needed: 1000, got: total });
    }
    check_r_grid(r_grid)?;
    let per: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| {
            let mut s = s.clone();
            s.normalize();
            correlation_integral(&s, r_grid)
        })
        .collect();
    let mut c_hat = vec![0.0; r_grid.len()];
    for row in &per {
        for (a, b) in c_hat.iter_mut().zip(row) {
            *a += b;
        }
    }
    c_hat.iter_mut().for_each(|c| *c /= samples.len() as f64);
    fit_dimension(r_grid, &c_hat, window)
}

/// Attaches `omega_- / (-alpha)` when the regime identifies it.
pub fn with_reference(mut est: DimensionEstimate, regime: &RegimeReport) -> DimensionEstimate {
    est.reference = match regime.regime {
        Regime::SingularDimKnown => regime.predicted_dimension,
        _ => None,
    };
    est
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FourierRow {
    pub theta: f64,
    pub re: f64,
    pub im: f64,
    pub re_se: f64,
    pub im_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FourierReport {
    pub n_pairs: usize,
    pub rows: Vec<FourierRow>,
    /// `Re` at the largest `theta` divided by `Re` at `theta = 0` (which is 1).
    pub tail_ratio: f64,
}

/// Empirical characteristic function of the differences on a `theta` grid.
pub fn fourier_pair_diagnostic(deltas: &[f64], theta_grid: &[f64]) -> Result<FourierReport> {
    if deltas.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: deltas.len() });
    }
    let rows: Vec<FourierRow> = theta_grid
        .iter()
        .map(|&theta| {
            let (c, s): (Vec<f64>, Vec<f64>) = deltas.iter().map(|d| ((theta * d).cos(), (theta * d).sin())).unzip();
            let (mc, ms) = (MeanSe::of(&c), MeanSe::of(&s));
            FourierRow { theta, re: mc.mean, im: ms.mean, re_se: mc.se, im_se: ms.se }
        })
        .collect();
    let zero = rows.iter().find(|r| r.theta == 0.0).map_or(1.0, |r| r.re);
    let tail = rows
        .iter()
        .max_by(|a, b| a.theta.total_cmp(&b.theta))
        .map_or(0.0, |r| r.re);
    Ok(FourierReport { n_pairs: deltas.len(), rows, tail_ratio: tail / zero })
}

/// `zeta_sigma - zeta_sigma'` for two independent tagged leaves of each of
/// `n_pairs` independent unit-root systems.
pub fn sample_leaf_pairs(engine: &Arc<CellEngine>, builder: &AreaBuilder, n_pairs: usize, seed: u64) -> Result<Vec<f64>> {
    (0..n_pairs)
        .into_par_iter()
        .map(|i| {
            let i = i as u64;
            let sys = engine.build(&[1.0], derive_seed(seed, &[tag::REPLICA, i]))?;
            let a = tag_leaf(&sys, LeafResidual::Fresh(builder), derive_seed(seed, &[tag::TAG_LEAF, i, 0]))?;
            let b = tag_leaf(&sys, LeafResidual::Fresh(builder), derive_seed(seed, &[tag::TAG_LEAF, i, 1]))?;
            Ok(a.lifetime - b.lifetime)
        })
        .collect()
}

/// `n` leaves of one system, tagged independently with fresh residuals.
pub fn sample_system_leaves(engine: &Arc<CellEngine>, builder: &AreaBuilder, n: usize, seed: u64) -> Result<LeafSample> {
    let sys = engine.build(&[1.0], derive_seed(seed, &[tag::REPLICA]))?;
    let t = (0..n)
        .into_par_iter()
        .map(|k| tag_leaf(&sys, LeafResidual::Fresh(builder), derive_seed(seed, &[tag::TAG_LEAF, k as u64])).map(|l| l.lifetime))
        .collect::<Result<Vec<f64>>>()?;
    LeafSample::uniform(t)
}

/// Empirical evidence gathered upstream, each part optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RegimeEvidence {
    /// Log-log slope of `M(t, .)` at interior times.
    pub m_slopes: Vec<f64>,
    /// Log-log slope of `N(t, .)` over the smallest decade of the window.
    pub n_small_slopes: Vec<f64>,
    pub correlation: Option<DimensionEstimate>,
    pub energy: Option<EnergyReport>,
    pub fourier_tail: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeVerdict {
    pub prediction: RegimeReport,
    pub evidence: RegimeEvidence,
    /// `N` still growing as `eps` decreases (slopes below `-N_STABLE`).
    pub n_diverges: Option<bool>,
    /// `N` flat over the smallest decade (|slope| < `N_STABLE`).
    pub n_stabilizes: Option<bool>,
    /// Whether every supplied piece of evidence points the predicted way.
    pub consistent: Option<bool>,
}

/// Threshold on the `N` slope separating growth from stabilization.
pub const N_STABLE: f64 = 0.05;

pub fn regime_report(model: &CumulantModel, evidence: RegimeEvidence) -> Result<RegimeVerdict> {
    let prediction = model.regime()?;
    let ns = &evidence.n_small_slopes;
    let (n_diverges, n_stabilizes) = if ns.is_empty() {
        (None, None)
    } else {
        (Some(ns.iter().all(|s| *s < -N_STABLE)), Some(ns.iter().all(|s| s.abs() < N_STABLE)))
    };
    let mut checks = Vec::new();
    let ac = prediction.regime == Regime::AbsolutelyContinuous;
    if ac {
        if let Some(d) = n_diverges {
            checks.push(d);
        }
        let target = -prediction.alpha;
        checks.extend(evidence.m_slopes.iter().map(|s| (s - target).abs() <= 0.1));
    } else {
        if let Some(s) = n_stabilizes {
            checks.push(s);
        }
        if let (Some(c), Some(d)) = (&evidence.correlation, prediction.predicted_dimension) {
            checks.push((c.raw_slope - d).abs() <= 0.15);
        }
    }
    let consistent = (!checks.is_empty()).then(|| checks.iter().all(|&c| c));
    Ok(RegimeVerdict { prediction, evidence, n_diverges, n_stabilizes, consistent })
}
