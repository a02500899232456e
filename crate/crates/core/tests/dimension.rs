use growfrag::area::{AreaBuilder, AreaMode};
use growfrag::cellsystem::{CellEngine, TruncationPolicy};
use growfrag::cumulant::{CumulantModel, Regime};
use growfrag::dimension::{
    b_energy, correlation_dimension, energy_stability, fourier_pair_diagnostic, regime_report, sample_leaf_pairs,
    sample_system_leaves, DimensionEstimate, LeafSample, RegimeEvidence,
};
use growfrag::levy::LevyTriplet;
use growfrag::stats::log_space;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(alpha: f64) -> CumulantModel {
    CumulantModel::from_triplet(LevyTriplet::reference_dyadic(), alpha).unwrap()
}

fn uniform_points(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

#[test]
fn energy_near_b_zero_counts_off_diagonal_pairs() {
    let s = LeafSample::uniform(uniform_points(500, 1)).unwrap();
    let off: f64 = 1.0 - s.weights().iter().map(|w| w * w).sum::<f64>();
    let e = b_energy(&s, 1e-9).unwrap();
    assert!((e.value - off).abs() < 1e-6, "{} vs {off}", e.value);
}

#[test]
fn uniform_points_have_dimension_one() {
    let s = LeafSample::uniform(uniform_points(5000, 2)).unwrap();
    let d = correlation_dimension(&s, &log_space(1e-4, 1e-1, 13)).unwrap();
    assert!((d.raw_slope - 1.0).abs() < 0.05, "{d:?}");
}

#[test]
fn a_point_mass_has_dimension_zero() {
    let s = LeafSample::uniform(vec![0.5; 2000]).unwrap();
    let d = correlation_dimension(&s, &log_space(1e-4, 1e-1, 13)).unwrap();
    assert!(d.raw_slope.abs() < 1e-12);
    assert!(b_energy(&s, 0.5).is_err());
}

#[test]
fn fourier_imaginary_part_is_centred() {
    let e = CellEngine::new(model(-0.2), TruncationPolicy::default()).unwrap();
    let b = AreaBuilder::new(&e, AreaMode::SpineExtend).unwrap();
    let deltas = sample_leaf_pairs(&e, &b, 2000, 4).unwrap();
    let r = fourier_pair_diagnostic(&deltas, &[0.0, 1.0, 5.0, 20.0]).unwrap();
    assert_eq!(r.rows[0].re, 1.0);
    for row in &r.rows[1..] {
        assert!(row.im.abs() < 3.0 * row.im_se + 1e-12, "{row:?}");
    }
}

#[test]
fn singular_fourier_tail_is_heavier() {
    let tail = |alpha: f64| {
        let e = CellEngine::new(model(alpha), TruncationPolicy::default()).unwrap();
        let b = AreaBuilder::new(&e, AreaMode::SpineExtend).unwrap();
        let deltas = sample_leaf_pairs(&e, &b, 3000, 5).unwrap();
        fourier_pair_diagnostic(&deltas, &[0.0, 200.0]).unwrap().tail_ratio.abs()
    };
    let (ac, sing) = (tail(-0.2), tail(-0.5));
    assert!(ac < sing, "{ac} vs {sing}");
}

#[test]
fn singular_energy_below_dimension_is_stable() {
    let e = CellEngine::new(model(-0.5), TruncationPolicy::default()).unwrap();
    let b = AreaBuilder::new(&e, AreaMode::SpineExtend).unwrap();
    let s = sample_system_leaves(&e, &b, 4000, 6).unwrap();
    let r = energy_stability(&s, &[0.3]).unwrap();
    assert!(r.rows[0].stable, "{r:?}");
}

fn estimate(raw_slope: f64) -> DimensionEstimate {
    DimensionEstimate {
        slope: raw_slope.clamp(0.0, 1.0),
        raw_slope,
        slope_se: 0.01,
        window: (1e-3, 1e-2),
        r_grid: vec![],
        c_hat: vec![],
        reference: None,
    }
}

#[test]
fn regime_verdicts() {
    let v = regime_report(&model(-0.2), RegimeEvidence { m_slopes: vec![0.21, 0.18], n_small_slopes: vec![-0.3], ..Default::default() })
        .unwrap();
    assert_eq!(v.prediction.regime, Regime::AbsolutelyContinuous);
    assert_eq!(v.n_diverges, Some(true));
    assert_eq!(v.consistent, Some(true));

    let v = regime_report(
        &model(-0.5),
        RegimeEvidence { n_small_slopes: vec![0.0, 0.01], correlation: Some(estimate(0.45)), ..Default::default() },
    )
    .unwrap();
    assert_eq!(v.n_stabilizes, Some(true));
    assert_eq!(v.consistent, Some(true));

    let v = regime_report(&model(-0.5), RegimeEvidence { correlation: Some(estimate(0.9)), ..Default::default() }).unwrap();
    assert_eq!(v.consistent, Some(false));

    let v = regime_report(&CumulantModel::boltzmann(1.5).unwrap(), RegimeEvidence::default()).unwrap();
    assert_eq!(v.prediction.regime, Regime::AbsolutelyContinuous);
    assert_eq!(v.consistent, None);
}
