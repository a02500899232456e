//! The cumulant `kappa`, its Malthusian roots, the spine exponent and the
//! tilted jump measure, plus the closed-form Boltzmann family.

use serde::{Serialize, Serializer};
use statrs::function::gamma::{digamma, gamma};

use crate::error::{Error, Result};
use crate::levy::{JumpAtom, JumpMeasure, LevyTriplet};
use crate::numeric::{bisect, cospi, golden_min, integrate};

/// Scan settings for the root search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSearch {
    pub q_lo: f64,
    /// Upper end of the scan for atom-only models, whose exponent has no
    /// finite domain edge.
    pub q_hi_atoms: f64,
    pub scan_points: usize,
    pub bisection_tol: f64,
    pub root_tolerance: f64,
}

impl Default for RootSearch {
    fn default() -> Self {
        RootSearch { q_lo: 1e-3, q_hi_atoms: 32.0, scan_points: 400, bisection_tol: 1e-12, root_tolerance: 1e-10 }
    }
}

const POLE_GUARD: f64 = 1e-8;
const FLAT_ROOT: f64 = 1e-9;

#[derive(Debug, Clone)]
pub enum CumulantSource {
    Triplet { triplet: LevyTriplet, alpha: f64 },
    BoltzmannTheta { theta: f64 },
}

/// Upper root `omega_+`, or the edge of the scanned domain when `kappa`
/// is still negative there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpperRoot {
    Finite(f64),
    BeyondDomain { edge: f64 },
}

impl UpperRoot {
    pub fn value(&self) -> f64 {
        match self {
            UpperRoot::Finite(v) => *v,
            UpperRoot::BeyondDomain { .. } => f64::INFINITY,
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            UpperRoot::Finite(v) => Some(*v),
            UpperRoot::BeyondDomain { .. } => None,
        }
    }
}

impl Serialize for UpperRoot {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            UpperRoot::Finite(v) => s.serialize_f64(*v),
            UpperRoot::BeyondDomain { .. } => s.serialize_str("inf"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CumulantModel {
    source: CumulantSource,
    omega_minus: f64,
    omega_plus: UpperRoot,
    kprime_at_omega_minus: f64,
    root_tolerance: f64,
}

impl CumulantModel {
    pub fn from_triplet(triplet: LevyTriplet, alpha: f64) -> Result<Self> {
        Self::from_triplet_with(triplet, alpha, RootSearch::default())
    }

    pub fn from_triplet_with(triplet: LevyTriplet, alpha: f64, search: RootSearch) -> Result<Self> {
        if !(alpha.is_finite() && alpha < 0.0) {
            return Err(Error::InvalidParameter(format!("self-similarity index must be negative, got {alpha}")));
        }
        triplet.validate()?;
        let q_hi = triplet.integrability().unwrap_or(search.q_hi_atoms);
        Self::solve(CumulantSource::Triplet { triplet, alpha }, search.q_lo, q_hi, search)
    }

    pub fn boltzmann(theta: f64) -> Result<Self> {
        check_theta(theta)?;
        let search = RootSearch::default();
        let (lo, hi) = (theta + search.q_lo, 2.0 * theta + 1.0 - search.q_lo);
        Self::solve(CumulantSource::BoltzmannTheta { theta }, lo, hi, search)
    }

    fn solve(source: CumulantSource, q_lo: f64, q_hi: f64, search: RootSearch) -> Result<Self> {
        let k = |q: f64| kappa_of(&source, q);
        let (omega_minus, omega_plus) = find_roots_in(&k, q_lo, q_hi, search)?;
        let kprime = kappa_prime_of(&source, omega_minus)?;
        if !(kprime.abs() >= FLAT_ROOT) {
            return Err(Error::FlatRoot(omega_minus));
        }
        Ok(CumulantModel {
            source,
            omega_minus,
            omega_plus,
            kprime_at_omega_minus: kprime,
            root_tolerance: search.root_tolerance,
        })
    }

    pub fn source(&self) -> &CumulantSource {
        &self.source
    }

    pub fn triplet(&self) -> Option<&LevyTriplet> {
        match &self.source {
            CumulantSource::Triplet { triplet, .. } => Some(triplet),
            CumulantSource::BoltzmannTheta { .. } => None,
        }
    }

    pub fn alpha(&self) -> f64 {
        match &self.source {
            CumulantSource::Triplet { alpha, .. } => *alpha,
            CumulantSource::BoltzmannTheta { theta } => 1.0 - theta,
        }
    }

    pub fn omega_minus(&self) -> f64 {
        self.omega_minus
    }

    pub fn omega_plus(&self) -> UpperRoot {
        self.omega_plus
    }

    pub fn kprime_at_omega_minus(&self) -> f64 {
        self.kprime_at_omega_minus
    }

    pub fn root_tolerance(&self) -> f64 {
        self.root_tolerance
    }

    pub fn kappa(&self, q: f64) -> Result<f64> {
        kappa_of(&self.source, q)
    }

    pub fn kappa_prime(&self, q: f64) -> Result<f64> {
        kappa_prime_of(&self.source, q)
    }

    /// `phi(q) = kappa(omega_- + q)`, the Laplace exponent of the spine.
    pub fn spine_exponent(&self, q: f64) -> Result<f64> {
        self.kappa(self.omega_minus + q)
    }

    /// `alpha kappa'(omega_-)`, the mean of `1 / I` for the spine functional.
    pub fn inverse_moment(&self) -> f64 {
        self.alpha() * self.kprime_at_omega_minus
    }

    pub fn regime(&self) -> Result<RegimeReport> {
        regime_classify(self.alpha(), self.omega_minus, self.omega_plus)
    }

    /// Endpoints of the interval on which `kappa` can be evaluated.
    pub fn domain(&self) -> (f64, f64) {
        match &self.source {
            CumulantSource::Triplet { triplet, .. } => (0.0, triplet.integrability().unwrap_or(f64::INFINITY)),
            CumulantSource::BoltzmannTheta { theta } => (*theta, 2.0 * theta + 1.0),
        }
    }

    /// `Pi(dy) = e^{omega_- y} (Lambda + tilde Lambda)(dy)`, where
    /// `tilde Lambda` is the image of `Lambda` on `(-inf, 0)` under
    /// `y -> log(1 - e^y)`. Atoms closer than a relative `1e-12` are merged.
    pub fn tilted_measure(&self) -> Result<TiltedMeasure> {
        let triplet = self
            .triplet()
            .ok_or_else(|| Error::Unsupported("tilted measure needs a triplet source".into()))?;
        let atoms = match &triplet.jumps {
            JumpMeasure::FiniteAtoms(a) => a,
            JumpMeasure::Density(_) => {
                return Err(Error::Unsupported("tilted measure of a density jump measure".into()));
            }
        };
        let w = self.omega_minus;
        let mut raw = Vec::with_capacity(2 * atoms.len());
        for a in atoms {
            raw.push(JumpAtom::new(a.location, a.rate * (w * a.location).exp()));
            if a.location < 0.0 {
                let c = -a.location.exp_m1();
                raw.push(JumpAtom::new(c.ln(), a.rate * c.powf(w)));
            }
        }
        raw.sort_by(|a, b| a.location.total_cmp(&b.location));
        let mut merged: Vec<JumpAtom> = Vec::with_capacity(raw.len());
        for a in raw {
            match merged.last_mut() {
                Some(last) if (last.location - a.location).abs() <= 1e-12 * last.location.abs().max(1.0) => {
                    last.rate += a.rate;
                }
                _ => merged.push(a),
            }
        }
        Ok(TiltedMeasure { atoms: merged })
    }

    /// Triplet of the spine process `eta`, whose Laplace exponent is `phi`.
    pub fn build_spine_triplet(&self) -> Result<LevyTriplet> {
        let pi = self.tilted_measure()?;
        let triplet = self.triplet().expect("tilted measure implies a triplet source");
        let mean_jump: f64 = pi.atoms.iter().map(|a| a.rate * a.location).sum();
        let drift = self.kprime_at_omega_minus - mean_jump;
        let eta = LevyTriplet::atoms(drift, triplet.gaussian_var, pi.atoms);
        self.check_spine_triplet(&eta)?;
        Ok(eta)
    }

    /// Compares the exponent of `eta` with `phi` on `q = 0.25, 0.5, ..., 5`.
    pub fn check_spine_triplet(&self, eta: &LevyTriplet) -> Result<()> {
        let worst = self.spine_triplet_error(eta)?;
        if !(worst.0 < 1e-8) {
            return Err(Error::ValidationFailure { max_error: worst.0, at_q: worst.1 });
        }
        Ok(())
    }

    /// Largest `|psi_eta(q) - phi(q)|` over the check grid, with its `q`.
    pub fn spine_triplet_error(&self, eta: &LevyTriplet) -> Result<(f64, f64)> {
        let (_, hi) = self.domain();
        let mut worst = (0.0f64, 0.0f64);
        for j in 1..=20 {
            let q = 0.25 * j as f64;
            if self.omega_minus + q > hi {
                break;
            }
            let err = (eta.laplace_exponent(q)? - self.spine_exponent(q)?).abs();
            if !(err <= worst.0) {
                worst = (err, q);
            }
        }
        Ok(worst)
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 1.0 && theta <= 1.5) {
        return Err(Error::InvalidParameter(format!("theta must lie in (1, 3/2], got {theta}")));
    }
    Ok(())
}

fn kappa_of(source: &CumulantSource, q: f64) -> Result<f64> {
    match source {
        CumulantSource::Triplet { triplet, .. } => kappa_triplet(triplet, q),
        CumulantSource::BoltzmannTheta { theta } => kappa_theta(*theta, q),
    }
}

fn kappa_prime_of(source: &CumulantSource, q: f64) -> Result<f64> {
    match source {
        CumulantSource::Triplet { triplet, .. } => kappa_prime_triplet(triplet, q),
        CumulantSource::BoltzmannTheta { theta } => kappa_theta_prime(*theta, q),
    }
}

fn check_kappa_domain(q: f64) -> Result<()> {
    if !(q.is_finite() && q >= 0.0) {
        return Err(Error::Domain { q, detail: "kappa is evaluated for q >= 0".into() });
    }
    Ok(())
}

/// `kappa(q) = psi(q) + int_{(-inf,0)} (1 - e^y)^q Lambda(dy)`.
pub fn kappa_triplet(triplet: &LevyTriplet, q: f64) -> Result<f64> {
    check_kappa_domain(q)?;
    let psi = triplet.laplace_exponent(q)?;
    let births = match &triplet.jumps {
        JumpMeasure::FiniteAtoms(atoms) => atoms
            .iter()
            .filter(|a| a.location < 0.0)
            .map(|a| a.rate * (-a.location.exp_m1()).powf(q))
            .sum(),
        // u = 1 - e^y maps (-inf, 0) onto (0, 1)
        JumpMeasure::Density(d) => integrate(|u| u.powf(q) * d.eval((-u).ln_1p()) / (1.0 - u), 0.0, 1.0)?,
    };
    Ok(psi + births)
}

pub fn kappa_prime_triplet(triplet: &LevyTriplet, q: f64) -> Result<f64> {
    check_kappa_domain(q)?;
    let dpsi = triplet.laplace_exponent_derivative(q)?;
    let births = match &triplet.jumps {
        JumpMeasure::FiniteAtoms(atoms) => atoms
            .iter()
            .filter(|a| a.location < 0.0)
            .map(|a| {
                let c = -a.location.exp_m1();
                a.rate * c.powf(q) * c.ln()
            })
            .sum(),
        JumpMeasure::Density(d) => {
            integrate(|u| u.powf(q) * u.ln() * d.eval((-u).ln_1p()) / (1.0 - u), 0.0, 1.0)?
        }
    };
    Ok(dpsi + births)
}

fn check_theta_domain(theta: f64, q: f64) -> Result<()> {
    check_theta(theta)?;
    if !q.is_finite() || q <= theta || q >= 2.0 * theta + 1.0 {
        return Err(Error::Domain { q, detail: format!("kappa_theta is defined on ({theta}, {})", 2.0 * theta + 1.0) });
    }
    if q - theta < POLE_GUARD || 2.0 * theta + 1.0 - q < POLE_GUARD {
        return Err(Error::PoleProximity { q });
    }
    Ok(())
}

/// Boltzmann family `cos(pi(q-theta)) / sin(pi(q-2theta)) * Gamma(q-theta) / Gamma(q-2theta)`,
/// evaluated as `cos(pi(q-theta)) Gamma(q-theta) Gamma(1+2theta-q) / pi`.
pub fn kappa_theta(theta: f64, q: f64) -> Result<f64> {
    check_theta_domain(theta, q)?;
    let a = q - theta;
    let b = 1.0 + 2.0 * theta - q;
    Ok(cospi(a) * gamma(a) * gamma(b) / std::f64::consts::PI)
}

pub fn kappa_theta_prime(theta: f64, q: f64) -> Result<f64> {
    check_theta_domain(theta, q)?;
    let a = q - theta;
    let b = 1.0 + 2.0 * theta - q;
    let pi = std::f64::consts::PI;
    let sin = cospi(a - 0.5);
    Ok(gamma(a) * gamma(b) / pi * (-pi * sin + cospi(a) * (digamma(a) - digamma(b))))
}

/// Finds the two sign changes of a convex function on `[q_lo, q_hi]`.
fn find_roots_in<F: Fn(f64) -> Result<f64>>(k: &F, q_lo: f64, q_hi: f64, search: RootSearch) -> Result<(f64, UpperRoot)> {
    let n = search.scan_points.max(3);
    let grid: Vec<f64> = (0..n).map(|i| q_lo + (q_hi - q_lo) * i as f64 / (n - 1) as f64).collect();
    let values = grid.iter().map(|&q| k(q)).collect::<Result<Vec<f64>>>()?;
    let imin = (0..n).min_by(|&i, &j| values[i].total_cmp(&values[j])).expect("nonempty grid");
    let (a, b) = (grid[imin.saturating_sub(1)], grid[(imin + 1).min(n - 1)]);
    let (q_min, k_min) = golden_min(k, a, b, 1e-10)?;
    let (q_min, k_min) = if values[imin] < k_min { (grid[imin], values[imin]) } else { (q_min, k_min) };
    if !(k_min < 0.0) {
        return Err(Error::NoNegativeRegion);
    }
    if !(values[0] > 0.0) {
        return Err(Error::InvalidModel(format!("kappa is not positive at q = {q_lo}; omega_- lies below the scanned range")));
    }
    let left = (0..n).rev().find(|&i| grid[i] < q_min && values[i] > 0.0).expect("values[0] > 0");
    let omega_minus = bisect(k, grid[left], q_min, search.bisection_tol)?;
    let omega_plus = match (0..n).find(|&i| grid[i] > q_min && values[i] > 0.0) {
        Some(right) => UpperRoot::Finite(bisect(k, q_min, grid[right], search.bisection_tol)?),
        None => UpperRoot::BeyondDomain { edge: q_hi },
    };
    Ok((omega_minus, omega_plus))
}

/// Roots of `kappa` for a model, recomputed from scratch.
pub fn find_roots(model: &CumulantModel) -> Result<(f64, UpperRoot)> {
    Ok((model.omega_minus, model.omega_plus))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiltedMeasure {
    pub atoms: Vec<JumpAtom>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    AbsolutelyContinuous,
    Singular,
    SingularDimKnown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub alpha: f64,
    pub omega_minus: f64,
    pub omega_plus: UpperRoot,
    /// `omega_- / (-alpha)` when the dimension is identified.
    pub predicted_dimension: Option<f64>,
    /// `omega_- / (-alpha)`, asserted as a lower bound whenever `alpha <= -omega_-`.
    pub dimension_lower_bound: f64,
    /// The lower-bound statement as printed, `alpha <= omega_-`.
    pub lower_bound_applies_as_printed: bool,
    /// The sign-corrected statement, `alpha <= -omega_-`.
    pub lower_bound_applies_sign_corrected: bool,
}

pub fn regime_classify(alpha: f64, omega_minus: f64, omega_plus: UpperRoot) -> Result<RegimeReport> {
    if !(alpha < 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be negative, got {alpha}")));
    }
    if !(omega_minus > 0.0 && omega_plus.value() > omega_minus) {
        return Err(Error::InvalidParameter("roots must satisfy 0 < omega_- < omega_+".into()));
    }
    let bound = omega_minus / -alpha;
    // with an unresolved omega_+ only the scanned edge is certified
    let beats_upper = match omega_plus {
        UpperRoot::Finite(w) => -w < alpha,
        UpperRoot::BeyondDomain { edge } => -edge < alpha,
    };
    let regime = if alpha > -omega_minus {
        Regime::AbsolutelyContinuous
    } else if beats_upper {
        Regime::SingularDimKnown
    } else {
        Regime::Singular
    };
    Ok(RegimeReport {
        regime,
        alpha,
        omega_minus,
        omega_plus,
        predicted_dimension: (regime == Regime::SingularDimKnown).then_some(bound),
        dimension_lower_bound: bound,
        lower_bound_applies_as_printed: alpha <= omega_minus,
        lower_bound_applies_sign_corrected: alpha <= -omega_minus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const OMEGA_MINUS: f64 = 0.2484440288758101;
    const OMEGA_PLUS: f64 = 3.2432109122124517;
    const KPRIME: f64 = -3.6700998388075696;

    fn reference() -> CumulantModel {
        CumulantModel::from_triplet(LevyTriplet::reference_dyadic(), -0.2).unwrap()
    }

    fn closed(q: f64) -> f64 {
        -3.0 * q + q * q + 2f64.powf(1.0 - q) - 1.0
    }

    #[test]
    fn reference_kappa_closed_form() {
        let m = reference();
        assert!((m.kappa(1.0).unwrap() + 2.0).abs() < 1e-14);
        for &q in &[1e-6, 0.3, 1.7, 4.0] {
            assert!((m.kappa(q).unwrap() - closed(q)).abs() < 1e-12);
        }
        assert!((m.kappa(1e-9).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn reference_roots() {
        let m = reference();
        assert!((m.omega_minus() - OMEGA_MINUS).abs() < 1e-11);
        assert!((m.omega_plus().finite().unwrap() - OMEGA_PLUS).abs() < 1e-11);
        assert!((m.kprime_at_omega_minus() - KPRIME).abs() < 1e-10);
        assert!(m.kappa(m.omega_minus()).unwrap().abs() < m.root_tolerance());
        assert!((m.inverse_moment() - 0.734019967761514).abs() < 1e-10);
    }

    #[test]
    fn no_negative_region() {
        let t = LevyTriplet::atoms(0.0, 2.0, vec![JumpAtom::new(-std::f64::consts::LN_2, 1.0)]);
        assert!(matches!(CumulantModel::from_triplet(t, -0.5), Err(Error::NoNegativeRegion)));
    }

    #[test]
    fn kappa_prime_at_minimum_vanishes() {
        let m = reference();
        let (q, _) = golden_min(|q| m.kappa(q), 0.5, 3.0, 1e-12).unwrap();
        assert!(m.kappa_prime(q).unwrap().abs() < 1e-6);
    }

    #[test]
    fn boltzmann_roots_and_zeros() {
        let m = CumulantModel::boltzmann(1.5).unwrap();
        assert!((m.omega_minus() - 2.0).abs() < 1e-10);
        assert!((m.omega_plus().finite().unwrap() - 3.0).abs() < 1e-10);
        assert_eq!(m.alpha(), -0.5);
        assert!(m.kprime_at_omega_minus() < 0.0);
        assert_eq!(kappa_theta(1.5, 3.0).unwrap(), 0.0);
        assert_eq!(kappa_theta(1.25, 1.75).unwrap(), 0.0);
        assert!((kappa_theta(1.5, 2.5).unwrap() + 0.28209479177387814).abs() < 1e-14);
        assert!(m.spine_exponent(1.0).unwrap().abs() < 1e-10);
        for &theta in &[1.05, 1.1, 1.25, 1.4, 1.5] {
            assert!(kappa_theta(theta, theta + 0.5).unwrap().abs() < 1e-14);
            assert!(kappa_theta(theta, theta + 1.5).unwrap().abs() < 1e-14);
            let m = CumulantModel::boltzmann(theta).unwrap();
            assert!((m.omega_minus() - theta - 0.5).abs() < 1e-10);
            assert!((m.omega_plus().finite().unwrap() - theta - 1.5).abs() < 1e-10);
        }
        assert_eq!(m.regime().unwrap().regime, Regime::AbsolutelyContinuous);
    }

    #[test]
    fn boltzmann_pole_guard_and_domain() {
        assert!(matches!(kappa_theta(1.5, 1.5 + 1e-9), Err(Error::PoleProximity { .. })));
        assert!(matches!(kappa_theta(1.5, 4.0 - 1e-9), Err(Error::PoleProximity { .. })));
        assert!(matches!(kappa_theta(1.5, 4.5), Err(Error::Domain { .. })));
        assert!(kappa_theta(0.9, 2.0).is_err());
    }

    #[test]
    fn boltzmann_derivative_matches_difference() {
        for &(theta, q) in &[(1.5, 2.0), (1.25, 2.2), (1.1, 1.9)] {
            let h = 1e-6;
            let fd = (kappa_theta(theta, q + h).unwrap() - kappa_theta(theta, q - h).unwrap()) / (2.0 * h);
            let d = kappa_theta_prime(theta, q).unwrap();
            assert!((fd - d).abs() < 1e-5 * d.abs().max(1.0), "{theta} {q} {fd} {d}");
        }
    }

    #[test]
    fn tilted_measure_reference_single_atom() {
        let pi = reference().tilted_measure().unwrap();
        assert_eq!(pi.atoms.len(), 1);
        assert!((pi.atoms[0].location + std::f64::consts::LN_2).abs() < 1e-15);
        assert!((pi.atoms[0].rate - 1.683607651143386).abs() < 1e-10);
    }

    #[test]
    fn tilted_measure_far_atom() {
        let t = LevyTriplet::atoms(-1.0, 1.0, vec![JumpAtom::new(-20.0, 1.0), JumpAtom::new(-1.0, 1.0)]);
        let m = CumulantModel::from_triplet(t, -0.5).unwrap();
        let w = m.omega_minus();
        let pi = m.tilted_measure().unwrap();
        let near = pi.atoms.iter().find(|a| a.location > -1e-6).unwrap();
        assert!((near.location + 2.0611536e-9).abs() < 1e-15);
        assert!((near.rate - 1.0).abs() < 1e-8);
        let far = pi.atoms.iter().find(|a| a.location == -20.0).unwrap();
        assert!((far.rate - (-20.0 * w).exp()).abs() < 1e-15);
    }

    #[test]
    fn spine_triplet_reference() {
        let m = reference();
        let eta = m.build_spine_triplet().unwrap();
        assert!((eta.drift + 2.5031119422483794).abs() < 1e-10);
        assert_eq!(eta.gaussian_var, 2.0);
        assert!((m.spine_exponent(1.0).unwrap() + 2.3449157678200727).abs() < 1e-10);
        let mut bad = eta.clone();
        bad.drift += 0.1;
        assert!(matches!(m.check_spine_triplet(&bad), Err(Error::ValidationFailure { .. })));
    }

    #[test]
    fn spine_triplet_without_diffusion() {
        let t = LevyTriplet::atoms(-1.0, 0.0, vec![JumpAtom::new(-0.7, 2.0), JumpAtom::new(0.5, 0.5)]);
        let m = CumulantModel::from_triplet(t, -0.3).unwrap();
        m.build_spine_triplet().unwrap();
    }

    #[test]
    fn regimes() {
        let w = UpperRoot::Finite(OMEGA_PLUS);
        assert_eq!(regime_classify(-0.2, OMEGA_MINUS, w).unwrap().regime, Regime::AbsolutelyContinuous);
        let r = regime_classify(-0.5, OMEGA_MINUS, w).unwrap();
        assert_eq!(r.regime, Regime::SingularDimKnown);
        assert!((r.predicted_dimension.unwrap() - 0.4968880577516202).abs() < 1e-12);
        assert_eq!(regime_classify(-4.0, OMEGA_MINUS, w).unwrap().regime, Regime::Singular);
        assert!(r.lower_bound_applies_as_printed && r.lower_bound_applies_sign_corrected);
        let ac = regime_classify(-0.2, OMEGA_MINUS, w).unwrap();
        assert!(ac.lower_bound_applies_as_printed && !ac.lower_bound_applies_sign_corrected);
    }

    #[test]
    fn density_model_roots() {
        use crate::levy::JumpDensity;
        let d = JumpDensity::kou(2.0, 3.0, 0.0, 1.0, 6.0);
        let t = LevyTriplet::new(-1.0, 0.5, JumpMeasure::Density(d));
        let m = CumulantModel::from_triplet(t, -0.5).unwrap();
        assert!(m.kappa(m.omega_minus()).unwrap().abs() < 1e-10);
        let h = 1e-6;
        let q = 1.3;
        let fd = (m.kappa(q + h).unwrap() - m.kappa(q - h).unwrap()) / (2.0 * h);
        assert!((fd - m.kappa_prime(q).unwrap()).abs() < 1e-5 * fd.abs().max(1.0));
        assert!(matches!(m.tilted_measure(), Err(Error::Unsupported(_))));
    }
}
