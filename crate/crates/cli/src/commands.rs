use growfrag::area::{fragment_stats, profile_estimate, AreaBuilder, AreaProfile, FragmentStats};
use growfrag::cellsystem::CellEngine;
use growfrag::checks::{run_criterion, CRITERIA};
use growfrag::config::RunConfig;
use growfrag::cumulant::{CumulantModel, Regime, UpperRoot};
use growfrag::dimension::{
    energy_stability, fourier_pair_diagnostic, pooled_correlation_dimension, regime_report, sample_leaf_pairs,
    sample_system_leaves, with_reference, LeafSample, RegimeEvidence,
};
use growfrag::lamperti::{estimate_density_k, inverse_moment_check, sample_exp_functional, Verdict};
use growfrag::seed::derive_seed;
use growfrag::stats::weighted_quantile;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::output::{num, OutDir};
use crate::CliError;

// stream domains of the command-level seeds
const SYSTEM: u64 = 1;
const RESIDUAL: u64 = 2;
const ENERGY: u64 = 3;
const PAIRS: u64 = 4;

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::AbsolutelyContinuous => "AC",
        Regime::Singular => "singular",
        Regime::SingularDimKnown => "singular (dimension known)",
    }
}

fn kappa_grid(model: &CumulantModel, points: usize) -> Vec<f64> {
    let (lo, hi) = model.domain();
    let hi = if hi.is_finite() {
        hi
    } else {
        match model.omega_plus() {
            UpperRoot::Finite(w) => w + 1.0,
            UpperRoot::BeyondDomain { edge } => edge,
        }
    };
    // interior points only: the endpoints may be singular
    (0..points).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / points as f64).collect()
}

pub fn kappa(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let model = cfg.model.build()?;
    let regime = model.regime()?;
    let wp = model.omega_plus();
    println!("omega_minus = {}", model.omega_minus());
    match wp {
        UpperRoot::Finite(v) => println!("omega_plus = {v}"),
        UpperRoot::BeyondDomain { edge } => println!("omega_plus = none below {edge}"),
    }
    println!("kappa_prime(omega_minus) = {}", model.kprime_at_omega_minus());
    println!("regime = {}", regime_name(regime.regime));
    let mut rows = Vec::new();
    for q in kappa_grid(&model, 200) {
        rows.push(vec![num(q), num(model.kappa(q)?), num(model.kappa_prime(q)?)]);
    }
    out.write_csv("kappa_grid.csv", &["q", "kappa", "kappa_prime"], rows)?;
    let summary = json!({
        "omega_minus": model.omega_minus(),
        "omega_plus": wp,
        "kappa_prime_at_omega_minus": model.kprime_at_omega_minus(),
        "inverse_moment": model.inverse_moment(),
        "regime": regime,
    });
    out.write_json("kappa.json", &summary)?;
    out.finish("kappa", cfg, None, summary)
}

pub fn simulate(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let engine = CellEngine::new(cfg.model.build()?, cfg.policy)?;
    let system = engine.build(&cfg.simulate.roots, cfg.seed)?;
    out.write_text("tree.tsv", &system.export_tree())?;
    let cap = system.policy().generation_cap as usize + 1;
    let martingale: Vec<Value> = (0..=3.min(cap))
        .map(|n| system.intrinsic_martingale(n).map(|m| json!({"generation": n, "value": m})))
        .collect::<Result<_, _>>()?;
    let summary = json!({
        "stats": system.stats(),
        "total_mass": system.total_mass(),
        "intrinsic_martingale": martingale,
    });
    out.write_json("simulate.json", &summary)?;
    println!("{} cells, {} simulated", system.stats().records, system.stats().simulated);
    out.finish("simulate", cfg, None, summary)
}

pub fn spine(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let model = cfg.model.build()?;
    let eta = model.build_spine_triplet()?;
    let samples = sample_exp_functional(&eta, model.alpha(), cfg.spine.samples, cfg.seed, &cfg.policy.clock)?;
    out.write_csv("spine_samples.csv", &["I"], samples.values.iter().map(|v| vec![num(*v)]))?;
    let density = estimate_density_k(&samples, cfg.spine.bandwidth)?;
    out.write_csv(
        "spine_density.csv",
        &["x", "k_hat"],
        density.grid.iter().zip(&density.density).map(|(x, k)| vec![num(*x), num(*k)]),
    )?;
    let report = inverse_moment_check(&samples, &model);
    println!(
        "mean(1/I) = {} +- {}, reference {} (z = {:.3})",
        report.estimate, report.standard_error, report.reference, report.z_score
    );
    let summary = json!({
        "inverse_moment": report,
        "bandwidth": density.bandwidth,
        "density_mass": density.total_mass(),
        "spine_drift": eta.drift,
        "spine_gaussian_var": eta.gaussian_var,
    });
    out.write_json("spine_report.json", &summary)?;
    out.finish("spine", cfg, Some(report.verdict != Verdict::Fail), summary)
}

/// Systems of the profile and dimension commands, with their area profiles.
fn replicas<T: Send>(
    cfg: &RunConfig,
    n: usize,
    cap: Option<f64>,
    each: impl Fn(&growfrag::cellsystem::CellSystem, AreaProfile) -> growfrag::Result<T> + Sync,
) -> Result<(Vec<T>, AreaBuilder), CliError> {
    let engine = CellEngine::new(cfg.model.build()?, cfg.policy)?;
    let builder = AreaBuilder::new(&engine, cfg.profile.mode)?;
    let items = (0..n)
        .into_par_iter()
        .map(|i| {
            let i = i as u64;
            let sys = engine.build(&cfg.simulate.roots, derive_seed(cfg.seed, &[SYSTEM, i]))?;
            let rs = derive_seed(cfg.seed, &[RESIDUAL, i]);
            let prof = match cap {
                Some(c) => builder.profile_capped(&sys, rs, c)?,
                None => builder.profile(&sys, rs)?,
            };
            each(&sys, prof)
        })
        .collect::<growfrag::Result<Vec<T>>>()?;
    Ok((items, builder))
}

pub fn profile(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let model = cfg.model.build()?;
    let p = &cfg.profile;
    let eps = cfg.eps_grid()?;
    let t_grid = p.t_grid.clone();
    let a_grid = if p.a_grid.is_empty() { t_grid.clone() } else { p.a_grid.clone() };
    let (items, _) = replicas(cfg, p.replicas, None, |sys, prof| {
        let stats = fragment_stats(sys, &t_grid, &eps, Some(&prof))?;
        let atoms: Vec<(f64, f64)> = prof.atoms().iter().map(|a| (a.t, a.mass)).collect();
        Ok((stats, atoms, prof.eval_grid(&a_grid)))
    })?;
    let mut stats = Vec::with_capacity(items.len());
    let mut pooled = Vec::new();
    let mut atom_rows = Vec::new();
    let mut area = vec![0.0; a_grid.len()];
    for (r, (s, atoms, a)) in items.into_iter().enumerate() {
        stats.push(s);
        for (t, m) in &atoms {
            atom_rows.push(vec![r.to_string(), num(*t), num(*m)]);
        }
        pooled.extend(atoms);
        for (acc, v) in area.iter_mut().zip(a) {
            *acc += v;
        }
    }
    let n = stats.len() as f64;
    area.iter_mut().for_each(|a| *a /= n);
    let mean = FragmentStats::average(&stats)?;
    let interior = (weighted_quantile(&pooled, p.interior[0]), weighted_quantile(&pooled, p.interior[1]));
    let est = profile_estimate(&mean, &model, cfg.policy.size_floor, interior)?;

    out.write_csv("atoms.csv", &["replica", "t", "mass"], atom_rows)?;
    out.write_csv("area.csv", &["t", "A"], a_grid.iter().zip(&area).map(|(t, a)| vec![num(*t), num(*a)]))?;
    let mut frag_rows = Vec::new();
    for (i, t) in mean.t_grid.iter().enumerate() {
        for (j, e) in mean.eps_grid.iter().enumerate() {
            frag_rows.push(vec![num(*t), num(*e), num(mean.m[i][j]), num(mean.n[i][j])]);
        }
    }
    out.write_csv("fragments.csv", &["t", "eps", "M", "N"], frag_rows)?;
    let opt = |x: Option<f64>| x.map_or(String::new(), num);
    out.write_csv(
        "profile.csv",
        &["t", "a_hat_M", "a_hat_N", "slope", "slope_N", "ratio", "interior"],
        est.rows.iter().map(|r| {
            vec![num(r.t), num(r.a_hat_m), num(r.a_hat_n), opt(r.slope_m), opt(r.slope_n), opt(r.ratio), r.interior.to_string()]
        }),
    )?;

    let alpha = model.alpha();
    let n_target = -(model.omega_minus() + alpha);
    let flags: Vec<Value> = est
        .rows
        .iter()
        .filter(|r| r.interior)
        .map(|r| {
            json!({
                "t": r.t,
                "slope_ok": r.slope_m.map(|s| (s + alpha).abs() <= 0.1),
                "ratio_ok": r.ratio.map(|q| (q - 1.0).abs() <= 0.2),
                "n_slope_ok": r.slope_n.map(|s| (s - n_target).abs() <= 0.15),
            })
        })
        .collect();
    let passed = est.converges
        && !flags.is_empty()
        && flags.iter().all(|f| ["slope_ok", "ratio_ok", "n_slope_ok"].iter().all(|k| f[k] == json!(true)));
    if !est.converges {
        eprintln!("warning: alpha <= -omega_-; the profile estimators do not converge");
    }
    let summary = json!({
        "converges": est.converges,
        "interior": [interior.0, interior.1],
        "replicas": stats.len(),
        "rows": est.rows,
        "checks": flags,
    });
    out.write_json("profile.json", &summary)?;
    println!("profile: {} replicas, interior [{:.3}, {:.3}], passed = {passed}", stats.len(), interior.0, interior.1);
    out.finish("profile", cfg, Some(passed), summary)
}

pub fn dimension(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let model = cfg.model.build()?;
    let d = &cfg.dimension;
    let eps = cfg.eps_grid()?;
    let t_grid = d.t_grid.clone();
    let (items, builder) = replicas(cfg, d.replicas, None, |sys, prof| {
        let stats = fragment_stats(sys, &t_grid, &eps, Some(&prof))?;
        Ok((stats, LeafSample::from_profile(&prof)?))
    })?;
    let (stats, samples): (Vec<_>, Vec<_>) = items.into_iter().unzip();
    let mean = FragmentStats::average(&stats)?;
    let est = profile_estimate(&mean, &model, cfg.policy.size_floor, (0.0, f64::INFINITY))?;

    let r_grid = d.r_grid.values()?;
    let regime = model.regime()?;
    let corr = with_reference(pooled_correlation_dimension(&samples, &r_grid, d.window.map(|w| (w[0], w[1])))?, &regime);
    out.write_csv("correlation.csv", &["r", "C_hat"], corr.r_grid.iter().zip(&corr.c_hat).map(|(r, c)| vec![num(*r), num(*c)]))?;

    let engine = CellEngine::new(model.clone(), cfg.policy)?;
    let leaves = sample_system_leaves(&engine, &builder, d.energy_points, derive_seed(cfg.seed, &[ENERGY]))?;
    let energy = energy_stability(&leaves, &d.b_grid)?;
    out.write_csv(
        "energy.csv",
        &["b", "I_hat", "stability"],
        energy.rows.iter().map(|r| vec![num(r.b), num(r.full.value), num(r.relative_change)]),
    )?;

    let deltas = sample_leaf_pairs(&engine, &builder, d.n_pairs, derive_seed(cfg.seed, &[PAIRS]))?;
    let fourier = fourier_pair_diagnostic(&deltas, &d.theta_grid)?;
    out.write_csv("fourier.csv", &["theta", "re", "im"], fourier.rows.iter().map(|r| vec![num(r.theta), num(r.re), num(r.im)]))?;

    let evidence = RegimeEvidence {
        m_slopes: est.rows.iter().filter_map(|r| r.slope_m).collect(),
        n_small_slopes: est.rows.iter().filter_map(|r| r.slope_n_small).collect(),
        correlation: Some(corr.clone()),
        energy: Some(energy),
        fourier_tail: Some(fourier.tail_ratio),
    };
    let verdict = regime_report(&model, evidence)?;
    println!(
        "regime {}: correlation slope {:.4} (reference {}), consistent = {:?}",
        regime_name(verdict.prediction.regime),
        corr.raw_slope,
        corr.reference.map_or("none".to_string(), |r| format!("{r:.4}")),
        verdict.consistent
    );
    let summary = serde_json::to_value(&verdict).expect("verdict serializes");
    out.write_json("dimension.json", &summary)?;
    out.finish("dimension", cfg, verdict.consistent, summary)
}

pub fn check_all(cfg: &RunConfig, out: &OutDir, only: &[u32]) -> Result<(), CliError> {
    let ids: Vec<u32> = if only.is_empty() { CRITERIA.to_vec() } else { only.to_vec() };
    let mut results = Vec::new();
    for id in ids {
        let r = run_criterion(id, &cfg.checks, cfg.seed);
        println!("{}", r.line());
        results.push(r);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let rows: Vec<Value> = results
        .iter()
        .map(|r| {
            json!({
                "id": r.id,
                "name": r.name,
                "measured": r.measured,
                "target": r.target,
                "tolerance": r.tolerance,
                "passed": r.passed,
                "detail": r.detail,
                "seconds": r.seconds,
            })
        })
        .collect();
    out.finish("check-all", cfg, Some(failed == 0), json!({ "criteria": rows }))?;
    if failed > 0 {
        return Err(CliError::Acceptance(failed));
    }
    Ok(())
}
