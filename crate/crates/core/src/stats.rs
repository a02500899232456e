//! Small statistical helpers shared by the estimators and the checks.

use serde::Serialize;

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> MeanSe {
        let n = values.len();
        if n == 0 {
            return MeanSe { mean: f64::NAN, se: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return MeanSe { mean, se: f64::NAN, n };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        MeanSe { mean, se: (var / n as f64).sqrt(), n }
    }

    /// (mean - target) / se.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target) / self.se
    }
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let wa = vec![1.0; a.len()];
    let wb = vec![1.0; b.len()];
    ks_weighted(a, &wa, b, &wb)
}

/// Kolmogorov-Smirnov distance between two weighted empirical laws.
pub fn ks_weighted(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64]) -> f64 {
    assert_eq!(a.len(), wa.len());
    assert_eq!(b.len(), wb.len());
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let sort = |x: &[f64], w: &[f64]| {
        let mut v: Vec<(f64, f64)> = x.iter().copied().zip(w.iter().copied()).collect();
        v.sort_by(|p, q| p.0.total_cmp(&q.0));
        v
    };
    let sa = sort(a, wa);
    let sb = sort(b, wb);
    let ta: f64 = wa.iter().sum();
    let tb: f64 = wb.iter().sum();
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut d: f64 = 0.0;
    while i < sa.len() || j < sb.len() {
        let x = match (sa.get(i), sb.get(j)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            (None, None) => unreachable!(),
        };
        while i < sa.len() && sa[i].0 <= x {
            fa += sa[i].1;
            i += 1;
        }
        while j < sb.len() && sb[j].0 <= x {
            fb += sb[j].1;
            j += 1;
        }
        d = d.max((fa / ta - fb / tb).abs());
    }
    d
}

/// Ordinary least squares fit y = intercept + slope * x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub points: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some(LinearFit { slope, intercept, slope_se, points: n })
}

/// Linear-interpolated quantile of an unsorted sample (type 7).
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Weighted quantile of atoms (location, weight); `p` in [0, 1].
pub fn weighted_quantile(atoms: &[(f64, f64)], p: f64) -> f64 {
    let mut v = atoms.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = v.iter().map(|a| a.1).sum();
    let mut acc = 0.0;
    for (x, w) in &v {
        acc += w;
        if acc >= p * total {
            return *x;
        }
    }
    v.last().map(|a| a.0).unwrap_or(f64::NAN)
}

/// `n` points spaced evenly in log from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_se_matches_hand_values() {
        let m = MeanSe::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ks_of_identical_and_disjoint_samples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&a, &[10.0, 11.0]), 1.0);
        assert!((ks_two_sample(&[1.0, 2.0], &[2.0, 3.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weighted_ks_reduces_to_plain_with_unit_weights() {
        let a = [0.3, 0.1, 0.7, 0.9];
        let b = [0.2, 0.8, 0.5];
        let d1 = ks_two_sample(&a, &b);
        let d2 = ks_weighted(&a, &[2.0; 4], &b, &[5.0; 3]);
        assert!((d1 - d2).abs() < 1e-15);
    }

    #[test]
    fn linear_fit_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-14);
    }

    #[test]
    fn quantiles() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert_eq!(weighted_quantile(&[(1.0, 1.0), (2.0, 3.0)], 0.5), 2.0);
        let g = log_space(1e-3, 1.0, 4);
        assert!((g[1] - 1e-2).abs() < 1e-15);
    }
}
