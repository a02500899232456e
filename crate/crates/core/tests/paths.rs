use growfrag::cumulant::CumulantModel;
use growfrag::lamperti::{
    absorption_time, estimate_density_k, inverse_moment_check, lamperti_transform, sample_exp_functional, ClockOptions, SpineLaw,
    Verdict,
};
use growfrag::levy::{sample_path, JumpAtom, LevyTriplet, PathGrid};
use growfrag::stats::MeanSe;

fn opts(cutoff: f64) -> ClockOptions {
    ClockOptions { stop_cutoff: cutoff, ..Default::default() }
}

#[test]
fn poisson_superposition_count() {
    let t = LevyTriplet::atoms(0.0, 0.0, vec![JumpAtom::new(-0.5, 2.0), JumpAtom::new(-1.0, 3.0)]);
    let counts: Vec<f64> = (0..10_000).map(|s| sample_path(&t, 10.0, 1.0, s).unwrap().jump_marks.len() as f64).collect();
    let m = MeanSe::of(&counts);
    assert!(m.z_score(50.0).abs() < 3.0, "{m:?}");
}

#[test]
fn laplace_exponent_by_monte_carlo() {
    let t = LevyTriplet::reference_dyadic();
    for q in [0.5, 1.0] {
        let v: Vec<f64> = (0..100_000)
            .map(|s| {
                let p = sample_path(&t, 1.0, 0.5, s).unwrap();
                (q * p.values.last().unwrap()).exp()
            })
            .collect();
        let m = MeanSe::of(&v);
        let target = t.laplace_exponent(q).unwrap().exp();
        assert!(m.z_score(target).abs() < 3.0, "q={q}: {m:?} vs {target}");
    }
}

#[test]
fn same_seed_same_path() {
    let t = LevyTriplet::reference_dyadic();
    assert_eq!(sample_path(&t, 5.0, 0.01, 3).unwrap(), sample_path(&t, 5.0, 0.01, 3).unwrap());
}

#[test]
fn exponential_functional_closed_forms() {
    let drift = PathGrid::from_points(vec![0.0, 40.0], vec![0.0, -80.0]).unwrap();
    let i = absorption_time(&drift, -1.0, &opts(1e-12)).unwrap();
    assert!((i - 0.5).abs() < 1e-9);

    let jump = PathGrid::from_points(vec![0.0, 1.0, 1.0, 40.0], vec![0.0, -1.0, -2.0, -41.0]).unwrap();
    let i = absorption_time(&jump, -1.0, &opts(1e-12)).unwrap();
    let e = std::f64::consts::E;
    assert!((i - (1.0 - 1.0 / e + 1.0 / (e * e))).abs() < 1e-9);

    let unit = PathGrid::from_points(vec![0.0, 60.0], vec![0.0, -60.0]).unwrap();
    assert!((absorption_time(&unit, -1.0, &opts(1e-12)).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn clock_round_trip() {
    let t = LevyTriplet::reference_dyadic();
    let xi = sample_path(&t, 20.0, 0.01, 11).unwrap();
    let p = lamperti_transform(&xi, -0.4, 1.0, f64::INFINITY, &ClockOptions::default()).unwrap();
    assert!(p.times.windows(2).all(|w| w[1] > w[0]));
    for k in (0..p.times.len()).step_by(7) {
        assert!((p.time_change_inverse(p.times[k]) - p.xi_times[k]).abs() < 1e-10);
    }
}

#[test]
fn pure_drift_spine_is_degenerate() {
    let law = SpineLaw::new(&LevyTriplet::atoms(-2.0, 0.0, vec![]), -1.0, opts(1e-12)).unwrap();
    for s in 0..5 {
        assert!((law.sample(s).unwrap() - 0.5).abs() < 1e-9);
    }
}

#[test]
fn spine_samples_are_reproducible() {
    let m = CumulantModel::from_triplet(LevyTriplet::reference_dyadic(), -0.2).unwrap();
    let eta = m.build_spine_triplet().unwrap();
    let a = sample_exp_functional(&eta, -0.2, 200, 5, &ClockOptions::default()).unwrap();
    let b = sample_exp_functional(&eta, -0.2, 200, 5, &ClockOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn inverse_moment_in_the_singular_case() {
    let m = CumulantModel::from_triplet(LevyTriplet::reference_dyadic(), -0.5).unwrap();
    let eta = m.build_spine_triplet().unwrap();
    let s = sample_exp_functional(&eta, -0.5, 100_000, 21, &ClockOptions::default()).unwrap();
    let r = inverse_moment_check(&s, &m);
    assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
    assert!((r.reference - 1.835).abs() < 1e-3);
}

#[test]
fn density_vanishes_near_zero() {
    let m = CumulantModel::from_triplet(LevyTriplet::reference_dyadic(), -0.2).unwrap();
    let eta = m.build_spine_triplet().unwrap();
    let s = sample_exp_functional(&eta, -0.2, 100_000, 22, &ClockOptions::default()).unwrap();
    let d = estimate_density_k(&s, None).unwrap();
    assert!((d.total_mass() - 1.0).abs() < 0.02);
    let peak = d.density.iter().cloned().fold(0.0, f64::max);
    // the grid spans less than a decade, so look at its lowest tenth
    let tenth = d.grid.len() / 10;
    let bottom = d.density[..tenth].iter().cloned().fold(0.0, f64::max);
    assert!(bottom < 0.5 * peak, "{bottom} vs {peak}");
}
