use growfrag::cumulant::{kappa_theta, CumulantModel, Regime, UpperRoot};
use growfrag::levy::{JumpAtom, LevyTriplet};
use growfrag::Error;

// Frozen from an independent dense-grid scan + bisection of the closed form
// kappa(q) = -3q + q^2 + 2^{1-q} - 1 (tolerance 1e-13).
const OMEGA_MINUS: f64 = 0.2484440288758101;
const OMEGA_PLUS: f64 = 3.2432109122124517;
const KPRIME_OMEGA_MINUS: f64 = -3.6700998388075696;

fn reference(alpha: f64) -> CumulantModel {
    CumulantModel::from_triplet(LevyTriplet::reference_dyadic(), alpha).unwrap()
}

fn closed(q: f64) -> f64 {
    -3.0 * q + q * q + 2f64.powf(1.0 - q) - 1.0
}

fn grid_scan_roots() -> Vec<f64> {
    let n = 200_000;
    let (lo, hi) = (1e-6, 10.0);
    let h = (hi - lo) / n as f64;
    let mut roots = Vec::new();
    for i in 0..n {
        let (mut a, mut b) = (lo + h * i as f64, lo + h * (i + 1) as f64);
        if closed(a).signum() == closed(b).signum() {
            continue;
        }
        let sa = closed(a).signum();
        while b - a > 1e-15 {
            let m = 0.5 * (a + b);
            if closed(m).signum() == sa {
                a = m;
            } else {
                b = m;
            }
        }
        roots.push(0.5 * (a + b));
    }
    roots
}

#[test]
fn frozen_roots_match_the_grid_scan() {
    let r = grid_scan_roots();
    assert_eq!(r.len(), 2);
    assert!((r[0] - OMEGA_MINUS).abs() < 1e-13);
    assert!((r[1] - OMEGA_PLUS).abs() < 1e-13);
}

#[test]
fn reference_roots_and_slope() {
    let m = reference(-0.2);
    assert!((m.omega_minus() - OMEGA_MINUS).abs() < 1e-10);
    assert!((m.omega_plus().value() - OMEGA_PLUS).abs() < 1e-10);
    assert!((m.kprime_at_omega_minus() - KPRIME_OMEGA_MINUS).abs() < 1e-8);
    assert!((m.inverse_moment() - 0.734019967761514).abs() < 1e-8);
    assert!((reference(-0.5).inverse_moment() - 1.8350499194037848).abs() < 1e-8);
}

#[test]
fn reference_exponent_values() {
    let t = LevyTriplet::reference_dyadic();
    assert!((t.laplace_exponent(1.0).unwrap() + 2.5).abs() < 1e-14);
    assert_eq!(t.laplace_exponent(0.0).unwrap(), 0.0);
    assert!((t.laplace_exponent_derivative(0.0).unwrap() + 3.0 + 2f64.ln()).abs() < 1e-14);
    let m = reference(-0.2);
    assert!((m.kappa(1.0).unwrap() + 2.0).abs() < 1e-14);
    assert!((m.kappa(1e-9).unwrap() - 1.0).abs() < 1e-7);
    for q in [0.1, 0.7, 1.3, 2.9] {
        let kp = -3.0 + 2.0 * q - 2.0 * 2f64.ln() * 2f64.powf(-q);
        assert!((m.kappa_prime(q).unwrap() - kp).abs() < 1e-12);
    }
}

#[test]
fn spine_exponent_is_the_shifted_cumulant() {
    let m = reference(-0.2);
    let v = m.spine_exponent(1.0).unwrap();
    assert!((v - closed(1.0 + OMEGA_MINUS)).abs() < 1e-9);
    assert!((v + 2.345).abs() < 1e-3);
    assert_eq!(m.spine_exponent(0.0).unwrap(), m.kappa(m.omega_minus()).unwrap());
}

#[test]
fn tilted_measure_and_spine_triplet() {
    let m = reference(-0.2);
    let pi = m.tilted_measure().unwrap();
    assert_eq!(pi.atoms.len(), 1);
    assert!((pi.atoms[0].location + 2f64.ln()).abs() < 1e-15);
    assert!((pi.atoms[0].rate - 1.6836076511436544).abs() < 1e-10);
    let eta = m.build_spine_triplet().unwrap();
    assert!((eta.drift + 2.5031119422488395).abs() < 1e-9);
    assert_eq!(eta.gaussian_var, 2.0);
    assert!(m.spine_triplet_error(&eta).unwrap().0 < 1e-10);
    let mut bad = eta.clone();
    bad.drift += 0.1;
    assert!(matches!(m.check_spine_triplet(&bad), Err(Error::ValidationFailure { .. })));
}

#[test]
fn drift_plus_atom_spine() {
    let t = LevyTriplet::atoms(1.0, 0.0, vec![JumpAtom::new(-(2f64.ln()), 5.0)]);
    let m = CumulantModel::from_triplet(t, -0.3).unwrap();
    let eta = m.build_spine_triplet().unwrap();
    m.check_spine_triplet(&eta).unwrap();
}

#[test]
fn boltzmann_values() {
    assert!(kappa_theta(1.5, 2.0).unwrap().abs() < 1e-14);
    assert!(kappa_theta(1.5, 3.0).unwrap().abs() < 1e-14);
    assert!(kappa_theta(1.25, 1.75).unwrap().abs() < 1e-14);
    assert!(kappa_theta(1.5, 2.5).unwrap() < 0.0);
    let m = CumulantModel::boltzmann(1.5).unwrap();
    assert!((m.omega_minus() - 2.0).abs() < 1e-9);
    assert!((m.omega_plus().value() - 3.0).abs() < 1e-9);
    assert!(m.kappa_prime(2.0).unwrap() < 0.0);
    assert!(m.spine_exponent(1.0).unwrap().abs() < 1e-9);
    for theta in [1.05, 1.1, 1.25, 1.4, 1.5] {
        assert!(kappa_theta(theta, theta + 0.5).unwrap().abs() < 1e-14);
        assert!(kappa_theta(theta, theta + 1.5).unwrap().abs() < 1e-14);
    }
}

#[test]
fn regimes() {
    assert_eq!(reference(-0.2).regime().unwrap().regime, Regime::AbsolutelyContinuous);
    let s = reference(-0.5).regime().unwrap();
    assert_eq!(s.regime, Regime::SingularDimKnown);
    assert!((s.predicted_dimension.unwrap() - 0.4968880577516202).abs() < 1e-9);
    assert_eq!(CumulantModel::boltzmann(1.5).unwrap().regime().unwrap().regime, Regime::AbsolutelyContinuous);
}

#[test]
fn no_negative_region() {
    let t = LevyTriplet::atoms(0.0, 2.0, vec![JumpAtom::new(-(2f64.ln()), 1.0)]);
    assert!(matches!(CumulantModel::from_triplet(t, -0.2), Err(Error::NoNegativeRegion)));
}

#[test]
fn upper_root_reported_as_finite() {
    assert!(matches!(reference(-0.2).omega_plus(), UpperRoot::Finite(_)));
}
