use std::sync::Arc;

use growfrag::area::{
    branching_identity_check, profile_estimate, small_time_check, tag_leaf, AreaBuilder, AreaMode, FragmentStats, LeafResidual,
};
use growfrag::cellsystem::{CellEngine, TruncationPolicy};
use growfrag::cumulant::CumulantModel;
use growfrag::lamperti::{sample_exp_functional, ClockOptions, Verdict};
use growfrag::levy::LevyTriplet;
use growfrag::stats::{ks_weighted, MeanSe};

const OMEGA_MINUS: f64 = 0.2484440288758101;

fn model(alpha: f64) -> CumulantModel {
    CumulantModel::from_triplet(LevyTriplet::reference_dyadic(), alpha).unwrap()
}

fn engine(alpha: f64, policy: TruncationPolicy) -> Arc<CellEngine> {
    CellEngine::new(model(alpha), policy).unwrap()
}

#[test]
fn single_fragment_statistics() {
    let s = FragmentStats::from_fragments(&[0.0], &[0.25, 1.0], &[vec![0.5]], OMEGA_MINUS).unwrap();
    assert_eq!(s.m[0], vec![0.0, 0.5f64.powf(OMEGA_MINUS)]);
    assert_eq!(s.n[0], vec![1.0, 0.0]);
}

#[test]
fn empty_fragment_list_gives_zero_estimates() {
    let s = FragmentStats::from_fragments(&[5.0], &[1e-4, 1e-3, 1e-2], &[vec![]], OMEGA_MINUS).unwrap();
    let est = profile_estimate(&s, &model(-0.2), 1e-6, (0.0, 10.0)).unwrap();
    assert_eq!(est.rows[0].a_hat_m, 0.0);
    assert_eq!(est.rows[0].a_hat_n, 0.0);
    assert!(est.converges);
    let singular = profile_estimate(&s, &model(-0.5), 1e-6, (0.0, 10.0)).unwrap();
    assert!(!singular.converges);
}

#[test]
fn single_absorbed_root_in_freeze_mode() {
    // pure drift -1 at alpha = -1: no children, absorbed at time 1
    let e = CellEngine::from_process(&LevyTriplet::atoms(-1.0, 0.0, vec![]), -1.0, 0.5, TruncationPolicy::default()).unwrap();
    let s = e.build(&[1.0], 0).unwrap();
    // without a cumulant model there is no spine law
    assert!(AreaBuilder::new(&e, AreaMode::SpineExtend).is_err());
    let p = growfrag::area::area_profile(&s, AreaMode::Freeze, 0).unwrap();
    assert_eq!(p.atoms().len(), 1);
    assert!((p.atoms()[0].t - 1.0).abs() < 1e-6);
    let a = p.atoms()[0];
    assert_eq!(a.kind, growfrag::area::AtomKind::Residual);
    assert_eq!(a.mass, a.size.powf(e.omega_minus()));
    assert!(a.size < 1e-6);
}

#[test]
fn frozen_root_children_carry_the_law_of_i() {
    // with G = 0 every area atom is a residual I* of its lineage; the pooled
    // mass-weighted atom law is the law of I
    let e = engine(-0.2, TruncationPolicy { generation_cap: 0, ..Default::default() });
    let b = AreaBuilder::new(&e, AreaMode::SpineExtend).unwrap();
    let (mut t, mut w) = (Vec::new(), Vec::new());
    for i in 0..2000 {
        let s = e.build(&[1.0], i).unwrap();
        let p = b.profile(&s, 10_000 + i).unwrap();
        for a in p.atoms() {
            t.push(a.t);
            w.push(a.mass);
        }
    }
    let eta = model(-0.2).build_spine_triplet().unwrap();
    let direct = sample_exp_functional(&eta, -0.2, 4000, 77, &ClockOptions::default()).unwrap();
    let ks = ks_weighted(&t, &w, &direct.values, &vec![1.0; direct.values.len()]);
    assert!(ks < 0.05, "ks = {ks}");
}

#[test]
fn total_area_has_mean_one() {
    let e = engine(-0.2, TruncationPolicy::default());
    let b = AreaBuilder::new(&e, AreaMode::Freeze).unwrap();
    let totals: Vec<f64> = (0..1000).map(|i| b.profile(&e.build(&[1.0], 500 + i).unwrap(), i).unwrap().total()).collect();
    let m = MeanSe::of(&totals);
    assert!(m.z_score(1.0).abs() < 3.0, "{m:?}");
}

#[test]
fn tagged_branch_frequency_matches_mass() {
    let e = engine(-0.2, TruncationPolicy::default());
    let s = (0..50).map(|i| e.build(&[1.0], i).unwrap()).find(|s| s.records()[0].children.len() >= 2).unwrap();
    let masses = s.subtree_masses();
    let first = s.records()[0].children[0].record;
    let share = masses[first] / masses[0];
    let b = AreaBuilder::new(&e, AreaMode::SpineExtend).unwrap();
    let n = 10_000;
    let hits = (0..n)
        .filter(|&k| tag_leaf(&s, LeafResidual::Fresh(&b), k).unwrap().records.get(1) == Some(&first))
        .count() as f64;
    let se = (share * (1.0 - share) / n as f64).sqrt();
    assert!((hits / n as f64 - share).abs() < 3.0 * se, "{} vs {share}", hits / n as f64);
}

#[test]
fn tagged_leaf_resamples_the_profile() {
    let e = engine(-0.2, TruncationPolicy::default());
    let s = e.build(&[1.0], 31).unwrap();
    let b = AreaBuilder::new(&e, AreaMode::SpineExtend).unwrap();
    let p = b.profile(&s, 8).unwrap();
    let leaves: Vec<f64> = (0..5000).map(|k| tag_leaf(&s, LeafResidual::Profile(&p), k).unwrap().lifetime).collect();
    let (t, w): (Vec<f64>, Vec<f64>) = p.atoms().iter().map(|a| (a.t, a.mass)).unzip();
    let ks = ks_weighted(&leaves, &vec![1.0; leaves.len()], &t, &w);
    assert!(ks < 0.03, "ks = {ks}");
}

#[test]
fn branching_identity_edge_cases() {
    let e = engine(-0.2, TruncationPolicy::default());
    let b = AreaBuilder::new(&e, AreaMode::SpineExtend).unwrap();
    let r = branching_identity_check(&e, &b, 0.7, 0.0, 50, 1).unwrap();
    assert_eq!(r.ks, 0.0);
    assert_eq!(r.lhs_mean.mean, 0.0);
    assert_eq!(r.rhs_mean.mean, 0.0);
    let r = branching_identity_check(&e, &b, 0.0, 1.5, 500, 2).unwrap();
    assert!(r.ks < 0.1, "{r:?}");
}

#[test]
fn small_time_policy_and_saturation() {
    let e = engine(-0.2, TruncationPolicy::default());
    let b = AreaBuilder::new(&e, AreaMode::SpineExtend).unwrap();
    let r = small_time_check(&e, &b, &[0.4, 0.2], 10, 1).unwrap();
    assert_eq!(r.verdict, Verdict::LowPower);
    let r = small_time_check(&e, &b, &[100.0, 50.0], 200, 2).unwrap();
    let total = r.rows[0].mean_area.mean;
    assert_eq!(r.rows[1].mean_area.mean, total);
    assert!(r.rows[0].ratio < r.rows[1].ratio);
    assert!((r.rows[0].ratio - total / 100.0).abs() < 1e-15);
}
