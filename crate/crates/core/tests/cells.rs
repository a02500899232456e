use std::sync::Arc;

use growfrag::cellsystem::{parse_tree_export, CellEngine, CellStatus, TruncationPolicy};
use growfrag::cumulant::CumulantModel;
use growfrag::levy::LevyTriplet;

fn engine(alpha: f64, policy: TruncationPolicy) -> Arc<CellEngine> {
    CellEngine::new(CumulantModel::from_triplet(LevyTriplet::reference_dyadic(), alpha).unwrap(), policy).unwrap()
}

#[test]
fn doubling_the_root() {
    let e1 = engine(-0.2, TruncationPolicy { size_floor: 1e-3, ..Default::default() });
    let e2 = engine(-0.2, TruncationPolicy { size_floor: 2e-3, ..Default::default() });
    let a = e1.build(&[1.0], 17).unwrap();
    let b = e2.build(&[2.0], 17).unwrap();
    let k = 2f64.powf(0.2);
    assert_eq!(a.records().len(), b.records().len());
    for (x, y) in a.records().iter().zip(b.records()) {
        assert_eq!(x.label, y.label);
        assert_eq!(y.initial_size, 2.0 * x.initial_size);
        assert_eq!(y.death_age, k * x.death_age);
        assert_eq!(y.birth_time, k * x.birth_time);
    }
}

#[test]
fn first_generation_is_halved() {
    let e = engine(-0.2, TruncationPolicy { generation_cap: 3, ..Default::default() });
    let s = e.build(&[1.0], 5).unwrap();
    let root = &s.records()[0];
    let walk = s.branching_walk(1).unwrap();
    let mut expected: Vec<f64> = root
        .children
        .iter()
        .map(|c| {
            // the pre-jump node is the first one at the jump age
            let mut pre = f64::NAN;
            s.replay(0, &mut |age, size| {
                if age == c.age && pre.is_nan() {
                    pre = size;
                }
                age <= c.age
            })
            .unwrap();
            pre.ln() - 2f64.ln()
        })
        .collect();
    expected.sort_by(f64::total_cmp);
    assert_eq!(walk.log_sizes.len(), expected.len());
    for (a, b) in walk.log_sizes.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    let again = e.build(&[1.0], 5).unwrap();
    assert_eq!(again.records(), s.records());
}

#[test]
fn martingale_at_generation_zero() {
    let e = engine(-0.2, TruncationPolicy::default());
    let s = e.build(&[2.0], 1).unwrap();
    let m = s.intrinsic_martingale(0).unwrap();
    assert!((m - 2f64.powf(0.2484440288758101)).abs() < 1e-12);
    assert!((m - 1.188).abs() < 1e-3);
    let f = s.fragments_at(1e-300).unwrap();
    assert_eq!(f, vec![2.0]);
}

#[test]
fn zero_generation_cap() {
    let e = engine(-0.2, TruncationPolicy { generation_cap: 0, ..Default::default() });
    let s = e.build(&[1.0], 2).unwrap();
    assert!(s.records().iter().all(|r| r.generation() == 0 || r.status.is_frozen()));
    assert!(s.records().iter().filter(|r| r.generation() == 0).count() == 1);
}

#[test]
fn export_is_byte_identical_and_parses() {
    let e = engine(-0.2, TruncationPolicy::default());
    let a = e.build(&[1.0, 0.5], 9).unwrap().export_tree();
    let b = e.build(&[1.0, 0.5], 9).unwrap().export_tree();
    assert_eq!(a, b);
    let rows = parse_tree_export(&a).unwrap();
    assert_eq!(rows.iter().filter(|r| r.parent.is_none()).count(), 2);
    for r in rows.iter().filter(|r| r.status == CellStatus::Absorbed) {
        assert!(r.end_height() >= r.attach_height());
    }
}

#[test]
fn budget_growth_keeps_cells() {
    let small = engine(-0.2, TruncationPolicy { cell_budget: 10, ..Default::default() }).build(&[1.0], 3).unwrap();
    let big = engine(-0.2, TruncationPolicy::default()).build(&[1.0], 3).unwrap();
    for r in small.records().iter().filter(|r| !r.status.is_frozen()) {
        assert_eq!(big.record(r.root, &r.label), Some(r));
    }
}
