//! Intrinsic area profile `A(t)`, fragment statistics and area-tagged leaves.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cellsystem::{CellEngine, CellSystem, UlamLabel};
use crate::cumulant::CumulantModel;
use crate::error::{Error, Result};
use crate::lamperti::{SpineLaw, Verdict};
use crate::seed::{derive_seed, rng_from_seed, tag};
use crate::stats::{ks_two_sample, linear_fit, weighted_quantile, MeanSe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaMode {
    /// Atoms sit where the simulated lineage stops.
    Freeze,
    /// Atoms are pushed right by an independent residual lifetime `x^{-alpha} I`.
    SpineExtend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomKind {
    /// A frozen child of size `x`, mass `x^{omega_-}`.
    Frozen,
    /// What is left of a simulated cell when it stops, mass `final_size^{omega_-}`.
    Residual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AreaAtom {
    /// Leaf-height proxy; `+inf` when beyond the cap the profile was built with.
    pub t: f64,
    pub mass: f64,
    pub record: usize,
    pub kind: AtomKind,
    /// Height at which the lineage stopped (the Freeze location).
    pub base: f64,
    /// Initial size of a frozen child, final size of a residual.
    pub size: f64,
}

#[derive(Debug, Clone)]
pub struct AreaProfile {
    atoms: Vec<AreaAtom>,
    cumulative: Vec<f64>,
    total: f64,
    mode: AreaMode,
    cap: f64,
    atom_of: Vec<Option<usize>>,
}

impl AreaProfile {
    fn from_atoms(mut atoms: Vec<AreaAtom>, records: usize, mode: AreaMode, cap: f64) -> AreaProfile {
        atoms.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.record.cmp(&b.record)));
        let mut cumulative = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for a in &atoms {
            acc += a.mass;
            cumulative.push(acc);
        }
        let mut atom_of = vec![None; records];
        for (i, a) in atoms.iter().enumerate() {
            atom_of[a.record] = Some(i);
        }
        AreaProfile { atoms, cumulative, total: acc, mode, cap, atom_of }
    }

    pub fn atoms(&self) -> &[AreaAtom] {
        &self.atoms
    }

    /// `A(inf)`, the truncated estimate of the terminal intrinsic martingale.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn mode(&self) -> AreaMode {
        self.mode
    }

    /// Largest `t` at which `eval` is exact.
    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn atom_of(&self, record: usize) -> Option<&AreaAtom> {
        self.atom_of.get(record).copied().flatten().map(|i| &self.atoms[i])
    }

    /// `A(t)`: mass of the atoms with location `<= t`.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.atoms.partition_point(|a| a.t <= t);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    pub fn eval_grid(&self, ts: &[f64]) -> Vec<f64> {
        ts.iter().map(|&t| self.eval(t)).collect()
    }

    /// Mass-weighted quantile of the atom locations.
    pub fn quantile(&self, p: f64) -> f64 {
        let pairs: Vec<(f64, f64)> = self.atoms.iter().map(|a| (a.t, a.mass)).collect();
        weighted_quantile(&pairs, p)
    }
}

/// Turns cell systems into area profiles. Holds the spine law used for
/// residual lifetimes in `SpineExtend` mode.
#[derive(Debug, Clone)]
pub struct AreaBuilder {
    mode: AreaMode,
    spine: Option<Arc<SpineLaw>>,
    alpha: f64,
    omega_minus: f64,
}

impl AreaBuilder {
    /// Derives the spine law from the engine's cumulant model when the mode needs it.
    pub fn new(engine: &CellEngine, mode: AreaMode) -> Result<AreaBuilder> {
        let spine = match mode {
            AreaMode::Freeze => None,
            AreaMode::SpineExtend => {
                let model = engine
                    .model()
                    .ok_or_else(|| Error::Unsupported("SpineExtend needs a spine triplet; the engine has no cumulant model".into()))?;
                let eta = model.build_spine_triplet()?;
                Some(Arc::new(SpineLaw::new(&eta, engine.alpha(), engine.policy().clock)?))
            }
        };
        Ok(AreaBuilder { mode, spine, alpha: engine.alpha(), omega_minus: engine.omega_minus() })
    }

    pub fn with_spine(engine: &CellEngine, spine: SpineLaw) -> AreaBuilder {
        AreaBuilder {
            mode: AreaMode::SpineExtend,
            spine: Some(Arc::new(spine)),
            alpha: engine.alpha(),
            omega_minus: engine.omega_minus(),
        }
    }

    pub fn mode(&self) -> AreaMode {
        self.mode
    }

    pub fn spine(&self) -> Option<&SpineLaw> {
        self.spine.as_deref()
    }

    pub fn profile(&self, system: &CellSystem, seed: u64) -> Result<AreaProfile> {
        self.profile_capped(system, seed, f64::INFINITY)
    }

    /// Profile whose atom locations are only resolved up to `cap`; atoms
    /// beyond it are placed at `+inf`. Residual draws for atoms whose
    /// lineage stopped past `cap` are skipped, and the others are abandoned
    /// as soon as they overshoot, so the result agrees with `profile` on
    /// `[0, cap]`.
    pub fn profile_capped(&self, system: &CellSystem, seed: u64, cap: f64) -> Result<AreaProfile> {
        let w = self.omega_minus;
        let recs = system.records();
        let atoms = (0..recs.len())
            .into_par_iter()
            .filter_map(|i| {
                let r = &recs[i];
                let (kind, size, base) = if r.status.is_frozen() {
                    (AtomKind::Frozen, r.initial_size, r.birth_time)
                } else {
                    (AtomKind::Residual, r.final_size, r.death_time())
                };
                let mass = size.powf(w);
                if !(mass > 0.0) {
                    return None;
                }
                let t = match self.locate(system, seed, i, size, base, cap) {
                    Ok(t) => t,
                    Err(e) => return Some(Err(e)),
                };
                Some(Ok(AreaAtom { t, mass, record: i, kind, base, size }))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AreaProfile::from_atoms(atoms, recs.len(), self.mode, cap))
    }

    fn locate(&self, system: &CellSystem, seed: u64, record: usize, size: f64, base: f64, cap: f64) -> Result<f64> {
        if base > cap {
            return Ok(f64::INFINITY);
        }
        match (self.mode, &self.spine) {
            (AreaMode::Freeze, _) => Ok(base),
            (AreaMode::SpineExtend, Some(spine)) => {
                let scale = size.powf(-self.alpha);
                let s = system.label_seed(seed, tag::RESIDUAL, record);
                Ok(match spine.sample_capped(s, (cap - base) / scale)? {
                    Some(i) => base + scale * i,
                    None => f64::INFINITY,
                })
            }
            (AreaMode::SpineExtend, None) => Err(Error::Unsupported("SpineExtend without a spine law".into())),
        }
    }

    /// Fresh residual lifetime for a lineage of the given size.
    fn fresh_residual(&self, size: f64, seed: u64) -> Result<f64> {
        match (self.mode, &self.spine) {
            (AreaMode::SpineExtend, Some(spine)) => Ok(size.powf(-self.alpha) * spine.sample(seed)?),
            _ => Ok(0.0),
        }
    }
}

/// Convenience wrapper building a one-off `AreaBuilder`.
pub fn area_profile(system: &CellSystem, mode: AreaMode, seed: u64) -> Result<AreaProfile> {
    AreaBuilder::new(system.engine(), mode)?.profile(system, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FragmentStats {
    pub t_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    /// `m[i][j] = M(t_i, eps_j)`
    pub m: Vec<Vec<f64>>,
    /// `n[i][j] = N(t_i, eps_j)`
    pub n: Vec<Vec<f64>>,
    /// `sum_k X_k(t_i)^{omega_-}`
    pub total: Vec<f64>,
    /// Largest fragment at `t_i` (averaged over replicas after `average`).
    pub max_fragment: Vec<f64>,
    pub fragment_count: Vec<f64>,
    pub replicas: usize,
}

impl FragmentStats {
    /// Statistics of explicit fragment lists, one per time.
    pub fn from_fragments(t_grid: &[f64], eps_grid: &[f64], fragments: &[Vec<f64>], omega_minus: f64) -> Result<FragmentStats> {
        if t_grid.is_empty() || eps_grid.is_empty() {
            return Err(Error::InvalidParameter("t and eps grids must be nonempty".into()));
        }
        if fragments.len() != t_grid.len() {
            return Err(Error::InvalidParameter("one fragment list per time is required".into()));
        }
        let mut m = Vec::with_capacity(t_grid.len());
        let mut n = Vec::with_capacity(t_grid.len());
        let mut total = Vec::with_capacity(t_grid.len());
        let mut max_fragment = Vec::with_capacity(t_grid.len());
        let mut fragment_count = Vec::with_capacity(t_grid.len());
        for frags in fragments {
            let mut sorted = frags.clone();
            sorted.sort_by(f64::total_cmp);
            let powers: Vec<f64> = sorted.iter().map(|x| x.powf(omega_minus)).collect();
            let mut prefix = Vec::with_capacity(powers.len() + 1);
            prefix.push(0.0);
            for p in &powers {
                prefix.push(prefix.last().unwrap() + p);
            }
            let all = *prefix.last().unwrap();
            let (mut mrow, mut nrow) = (Vec::new(), Vec::new());
            for &eps in eps_grid {
                let k = sorted.partition_point(|&x| x <= eps);
                mrow.push(prefix[k]);
                nrow.push((sorted.len() - k) as f64);
            }
            m.push(mrow);
            n.push(nrow);
            total.push(all);
            max_fragment.push(sorted.last().copied().unwrap_or(0.0));
            fragment_count.push(sorted.len() as f64);
        }
        Ok(FragmentStats {
            t_grid: t_grid.to_vec(),
            eps_grid: eps_grid.to_vec(),
            m,
            n,
            total,
            max_fragment,
            fragment_count,
            replicas: 1,
        })
    }

    /// Replica average of statistics computed on identical grids.
    pub fn average(all: &[FragmentStats]) -> Result<FragmentStats> {
        let first = all.first().ok_or_else(|| Error::InvalidParameter("nothing to average".into()))?;
        if all.iter().any(|s| s.t_grid != first.t_grid || s.eps_grid != first.eps_grid) {
            return Err(Error::InvalidParameter("grids differ between replicas".into()));
        }
        let reps: usize = all.iter().map(|s| s.replicas).sum();
        let mean_rows = |get: &dyn Fn(&FragmentStats) -> &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            let mut acc = vec![vec![0.0; first.eps_grid.len()]; first.t_grid.len()];
            for s in all {
                for (a, row) in acc.iter_mut().zip(get(s)) {
                    for (x, y) in a.iter_mut().zip(row) {
                        *x += y * s.replicas as f64;
                    }
                }
            }
            acc.iter_mut().flatten().for_each(|x| *x /= reps as f64);
            acc
        };
        let mean_vec = |get: &dyn Fn(&FragmentStats) -> &Vec<f64>| -> Vec<f64> {
            let mut acc = vec![0.0; first.t_grid.len()];
            for s in all {
                for (x, y) in acc.iter_mut().zip(get(s)) {
                    *x += y * s.replicas as f64;
                }
            }
            acc.iter_mut().for_each(|x| *x /= reps as f64);
            acc
        };
        Ok(FragmentStats {
            t_grid: first.t_grid.clone(),
            eps_grid: first.eps_grid.clone(),
            m: mean_rows(&|s| &s.m),
            n: mean_rows(&|s| &s.n),
            total: mean_vec(&|s| &s.total),
            max_fragment: mean_vec(&|s| &s.max_fragment),
            fragment_count: mean_vec(&|s| &s.fragment_count),
            replicas: reps,
        })
    }
}

/// `M` and `N` from the fragments alive at each `t`. With a `SpineExtend`
/// profile, frozen lineages whose atom lies beyond `t` count as one fragment
/// of their birth size.
pub fn fragment_stats(system: &CellSystem, t_grid: &[f64], eps_grid: &[f64], proxies: Option<&AreaProfile>) -> Result<FragmentStats> {
    if t_grid.is_empty() || eps_grid.is_empty() {
        return Err(Error::InvalidParameter("t and eps grids must be nonempty".into()));
    }
    let mut frags = system.fragments_at_times(t_grid)?;
    if let Some(p) = proxies.filter(|p| p.mode() == AreaMode::SpineExtend) {
        if let Some(&t) = t_grid.iter().find(|&&t| t > p.cap()) {
            return Err(Error::HorizonExceeded { t, horizon: p.cap() });
        }
        for a in p.atoms().iter().filter(|a| a.kind == AtomKind::Frozen) {
            for (k, &t) in t_grid.iter().enumerate() {
                if a.base <= t && t < a.t {
                    frags[k].push(a.size);
                }
            }
        }
    }
    FragmentStats::from_fragments(t_grid, eps_grid, &frags, system.engine().omega_minus())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub t: f64,
    pub interior: bool,
    /// Fitting window `[10 eps_cut, eps_max / 10]` clipped to the grid.
    pub window: Option<(f64, f64)>,
    pub slope_m: Option<f64>,
    pub slope_m_se: Option<f64>,
    pub slope_n: Option<f64>,
    /// `N` slope over the smallest decade of the window.
    pub slope_n_small: Option<f64>,
    /// Mean of `eps^alpha M(t, eps)` over the window.
    pub plateau: f64,
    /// `alpha kappa'(omega_-)` times the plateau.
    pub a_hat_m: f64,
    /// From the leading coefficient `c` of the window fit
    /// `N = c eps^{-(omega_- + alpha)} + d`.
    pub a_hat_n: f64,
    /// `a_hat_n / a_hat_m`.
    pub ratio: Option<f64>,
    /// Both estimators evaluated at the smallest window `eps` only.
    pub a_hat_m_raw: f64,
    pub a_hat_n_raw: f64,
    pub ratio_raw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileEstimate {
    pub alpha: f64,
    pub omega_minus: f64,
    /// False when `alpha <= -omega_-`: the estimators then have no limit.
    pub converges: bool,
    pub rows: Vec<ProfileRow>,
}

/// Applies the small-fragment limit theorems to (replica-averaged)
/// statistics. `interior` is the `t`-range regarded as interior, usually
/// the 10% and 90% quantiles of the atom locations.
pub fn profile_estimate(stats: &FragmentStats, model: &CumulantModel, eps_cut: f64, interior: (f64, f64)) -> Result<ProfileEstimate> {
    let (alpha, w) = (model.alpha(), model.omega_minus());
    let kp = model.kprime_at_omega_minus();
    let converges = alpha > -w;
    let mut rows = Vec::with_capacity(stats.t_grid.len());
    for (i, &t) in stats.t_grid.iter().enumerate() {
        let is_interior = interior.0 <= t && t <= interior.1;
        let (lo, hi) = (10.0 * eps_cut * (1.0 - 1e-9), stats.max_fragment[i] / 10.0);
        let idx: Vec<usize> = (0..stats.eps_grid.len())
            .filter(|&j| {
                let e = stats.eps_grid[j];
                lo <= e && e <= hi && stats.m[i][j] > 0.0
            })
            .collect();
        if stats.fragment_count[i] == 0.0 || idx.is_empty() {
            rows.push(ProfileRow {
                t,
                interior: is_interior,
                window: None,
                slope_m: None,
                slope_m_se: None,
                slope_n: None,
                slope_n_small: None,
                plateau: 0.0,
                a_hat_m: 0.0,
                a_hat_n: 0.0,
                ratio: None,
                a_hat_m_raw: 0.0,
                a_hat_n_raw: 0.0,
                ratio_raw: None,
            });
            continue;
        }
        let le: Vec<f64> = idx.iter().map(|&j| stats.eps_grid[j].ln()).collect();
        let lm: Vec<f64> = idx.iter().map(|&j| stats.m[i][j].ln()).collect();
        let fit_m = linear_fit(&le, &lm);
        // N is defined (and flat in the singular regime) where M vanishes
        let nidx: Vec<usize> = (0..stats.eps_grid.len())
            .filter(|&j| {
                let e = stats.eps_grid[j];
                lo <= e && e <= hi && stats.n[i][j] > 0.0
            })
            .collect();
        let fit_n = linear_fit(
            &nidx.iter().map(|&j| stats.eps_grid[j].ln()).collect::<Vec<_>>(),
            &nidx.iter().map(|&j| stats.n[i][j].ln()).collect::<Vec<_>>(),
        );
        let small: Vec<usize> = nidx.iter().copied().filter(|&j| stats.eps_grid[j] <= 10.0 * lo * (1.0 + 1e-9)).collect();
        let fit_small = linear_fit(
            &small.iter().map(|&j| stats.eps_grid[j].ln()).collect::<Vec<_>>(),
            &small.iter().map(|&j| stats.n[i][j].ln()).collect::<Vec<_>>(),
        );
        let plateau = idx.iter().map(|&j| stats.eps_grid[j].powf(alpha) * stats.m[i][j]).sum::<f64>() / idx.len() as f64;
        let j0 = idx[0];
        let e0 = stats.eps_grid[j0];
        let a_hat_m_raw = alpha * kp * e0.powf(alpha) * stats.m[i][j0];
        let a_hat_n_raw = (w + alpha) * kp.abs() * e0.powf(w + alpha) * stats.n[i][j0];
        let a_hat_m = alpha * kp * plateau;
        // N carries an additive constant that fades only like eps^{omega_- + alpha}
        let lead = linear_fit(
            &idx.iter().map(|&j| stats.eps_grid[j].powf(-(w + alpha))).collect::<Vec<_>>(),
            &idx.iter().map(|&j| stats.n[i][j]).collect::<Vec<_>>(),
        );
        let a_hat_n = lead.map_or(a_hat_n_raw, |f| (w + alpha) * kp.abs() * f.slope);
        rows.push(ProfileRow {
            t,
            interior: is_interior,
            window: Some((e0, stats.eps_grid[*idx.last().unwrap()])),
            slope_m: fit_m.as_ref().map(|f| f.slope),
            slope_m_se: fit_m.as_ref().map(|f| f.slope_se),
            slope_n: fit_n.map(|f| f.slope),
            slope_n_small: fit_small.map(|f| f.slope),
            plateau,
            a_hat_m,
            a_hat_n,
            ratio: (a_hat_m > 0.0).then(|| a_hat_n / a_hat_m),
            a_hat_m_raw,
            a_hat_n_raw,
            ratio_raw: (a_hat_m_raw > 0.0).then(|| a_hat_n_raw / a_hat_m_raw),
        });
    }
    Ok(ProfileEstimate { alpha, omega_minus: w, converges, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaggedLeaf {
    pub root: usize,
    pub label: UlamLabel,
    /// Records visited from the root down to the terminal cell.
    pub records: Vec<usize>,
    /// Time spent in each visited cell before moving on (the terminal cell
    /// contributes its death age when the leaf is its residual, 0 when it is frozen).
    pub segments: Vec<f64>,
    /// Residual lifetime beyond the simulated tree.
    pub residual: f64,
    pub lifetime: f64,
    pub terminal: AtomKind,
    /// `(height, size)` at the start of each visited cell, then at the terminal point.
    pub spine: Vec<(f64, f64)>,
}

/// Where the residual lifetime of the tagged leaf comes from.
#[derive(Debug, Clone, Copy)]
pub enum LeafResidual<'a> {
    /// Reuse the atom locations of this profile.
    Profile(&'a AreaProfile),
    /// Draw a fresh residual (none in Freeze mode).
    Fresh(&'a AreaBuilder),
}

/// Descends from the roots, choosing at each cell between its own residual
/// atom and its children's subtrees in proportion to their area mass.
pub fn tag_leaf(system: &CellSystem, residual: LeafResidual<'_>, seed: u64) -> Result<TaggedLeaf> {
    let recs = system.records();
    let masses: Vec<f64> = match residual {
        LeafResidual::Profile(p) => {
            // masses as carried by the profile, so zero-mass atoms are never picked
            let mut m = vec![0.0; recs.len()];
            for i in (0..recs.len()).rev() {
                let own = p.atom_of(i).map_or(0.0, |a| a.mass);
                m[i] = own + recs[i].children.iter().map(|c| m[c.record]).sum::<f64>();
            }
            m
        }
        LeafResidual::Fresh(_) => system.subtree_masses(),
    };
    let mut rng = rng_from_seed(derive_seed(seed, &[tag::TAG_LEAF]));
    let roots: Vec<usize> = (0..recs.len()).filter(|&i| recs[i].parent.is_none()).collect();
    let root_mass: f64 = roots.iter().map(|&i| masses[i]).sum();
    if !(root_mass > 0.0) {
        return Err(Error::Degenerate("system carries no area mass".into()));
    }
    let mut u = rng.random::<f64>() * root_mass;
    let mut cur = *roots.last().unwrap();
    for &i in &roots {
        if u < masses[i] {
            cur = i;
            break;
        }
        u -= masses[i];
    }
    let w = system.engine().omega_minus();
    let mut visited = Vec::new();
    let mut segments = Vec::new();
    let mut spine = Vec::new();
    loop {
        let r = &recs[cur];
        visited.push(cur);
        spine.push((r.birth_time, r.initial_size));
        if r.status.is_frozen() {
            segments.push(0.0);
            break;
        }
        let own = match residual {
            LeafResidual::Profile(p) => p.atom_of(cur).map_or(0.0, |a| a.mass),
            LeafResidual::Fresh(_) => r.final_size.powf(w),
        };
        let mut u = rng.random::<f64>() * masses[cur];
        let next = if u < own || r.children.is_empty() {
            None
        } else {
            u -= own;
            let mut pick = r.children.last().unwrap();
            for c in &r.children {
                if u < masses[c.record] {
                    pick = c;
                    break;
                }
                u -= masses[c.record];
            }
            Some(*pick)
        };
        match next {
            Some(c) => {
                segments.push(c.age);
                cur = c.record;
            }
            None => {
                segments.push(r.death_age);
                break;
            }
        }
    }
    let r = &recs[cur];
    let (terminal, base, size) = if r.status.is_frozen() {
        (AtomKind::Frozen, r.birth_time, r.initial_size)
    } else {
        (AtomKind::Residual, r.death_time(), r.final_size)
    };
    spine.push((base, size));
    let extra = match residual {
        LeafResidual::Profile(p) => {
            let a = p.atom_of(cur).expect("chosen atoms carry mass");
            if !a.t.is_finite() {
                return Err(Error::HorizonExceeded { t: a.t, horizon: p.cap() });
            }
            a.t - a.base
        }
        LeafResidual::Fresh(b) => b.fresh_residual(size, derive_seed(seed, &[tag::RESIDUAL]))?,
    };
    let lifetime = segments.iter().sum::<f64>() + extra;
    Ok(TaggedLeaf {
        root: r.root,
        label: r.label.clone(),
        records: visited,
        segments,
        residual: extra,
        lifetime,
        terminal,
        spine,
    })
}

/// Lifetimes of `n` area-tagged leaves under the size-biased law: systems
/// from a pool of `pool` unit-root systems are picked in proportion to their
/// total mass, then a leaf is tagged with a fresh residual.
pub fn tagged_leaf_lifetimes(engine: &Arc<CellEngine>, builder: &AreaBuilder, n: usize, pool: usize, seed: u64) -> Result<Vec<f64>> {
    if pool == 0 || n == 0 {
        return Err(Error::InvalidParameter("pool and sample sizes must be positive".into()));
    }
    let systems = (0..pool)
        .into_par_iter()
        .map(|i| engine.build(&[1.0], derive_seed(seed, &[tag::REPLICA, i as u64])))
        .collect::<Result<Vec<_>>>()?;
    let mut cum = Vec::with_capacity(pool);
    let mut acc = 0.0;
    for s in &systems {
        acc += s.total_mass();
        cum.push(acc);
    }
    let mut rng = rng_from_seed(derive_seed(seed, &[tag::SUBSAMPLE]));
    let picks: Vec<usize> = (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cum.partition_point(|&c| c <= u).min(pool - 1)
        })
        .collect();
    picks
        .par_iter()
        .enumerate()
        .map(|(k, &i)| {
            tag_leaf(&systems[i], LeafResidual::Fresh(builder), derive_seed(seed, &[tag::TAG_LEAF, k as u64])).map(|l| l.lifetime)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchingReport {
    pub t: f64,
    pub s: f64,
    pub n_rep: usize,
    pub ks: f64,
    pub threshold: f64,
    pub passed: bool,
    pub lhs_mean: MeanSe,
    pub rhs_mean: MeanSe,
}

/// Compares `A(t+s) - A(t)` with the right side assembled from the
/// fragments alive at `t` and fresh unit profiles:
/// `sum_i X_i^{omega_-} A_i(s X_i^alpha)` plus the atoms in `(t, t+s]` of
/// lineages that had already stopped by `t`.
pub fn branching_identity_check(engine: &Arc<CellEngine>, builder: &AreaBuilder, t: f64, s: f64, n_rep: usize, seed: u64) -> Result<BranchingReport> {
    if !(t >= 0.0 && s >= 0.0) || n_rep == 0 {
        return Err(Error::InvalidParameter("t, s must be >= 0 and n_rep positive".into()));
    }
    let (alpha, w) = (engine.alpha(), engine.omega_minus());
    let pairs = (0..n_rep)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let i = i as u64;
            let sys = engine.build(&[1.0], derive_seed(seed, &[tag::REPLICA, i, 0]))?;
            let prof = builder.profile_capped(&sys, derive_seed(seed, &[tag::RESIDUAL, i, 0]), t + s)?;
            let lhs = prof.eval(t + s) - prof.eval(t);

            let base = engine.build(&[1.0], derive_seed(seed, &[tag::REPLICA, i, 1]))?;
            let bprof = builder.profile_capped(&base, derive_seed(seed, &[tag::RESIDUAL, i, 1]), t + s)?;
            let recs = base.records();
            let mut rhs: f64 = bprof
                .atoms()
                .iter()
                .filter(|a| {
                    let r = &recs[a.record];
                    let stopped = r.status.is_frozen() || r.death_time() <= t;
                    r.birth_time <= t && stopped && t < a.t && a.t <= t + s
                })
                .map(|a| a.mass)
                .sum();
            let frags = if s > 0.0 { base.fragments_at(t)? } else { Vec::new() };
            for (j, x) in frags.iter().enumerate() {
                let j = j as u64;
                let fresh = engine.build(&[1.0], derive_seed(seed, &[tag::REPLICA, i, 2, j]))?;
                let horizon = s * x.powf(alpha);
                let fp = builder.profile_capped(&fresh, derive_seed(seed, &[tag::RESIDUAL, i, 2, j]), horizon)?;
                rhs += x.powf(w) * fp.eval(horizon);
            }
            Ok((lhs, rhs))
        })
        .collect::<Result<Vec<_>>>()?;
    let (lhs, rhs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let ks = ks_two_sample(&lhs, &rhs);
    let threshold = 0.08;
    Ok(BranchingReport {
        t,
        s,
        n_rep,
        ks,
        threshold,
        passed: ks < threshold,
        lhs_mean: MeanSe::of(&lhs),
        rhs_mean: MeanSe::of(&rhs),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallTimeRow {
    pub eps: f64,
    pub mean_area: MeanSe,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallTimeReport {
    pub rows: Vec<SmallTimeRow>,
    /// Ratio strictly decreasing as `eps` decreases.
    pub decreasing: bool,
    pub verdict: Verdict,
}

/// Monte Carlo `E A(eps) / eps` over unit-root systems.
pub fn small_time_check(engine: &Arc<CellEngine>, builder: &AreaBuilder, eps_grid: &[f64], n_rep: usize, seed: u64) -> Result<SmallTimeReport> {
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e > 0.0)) || n_rep == 0 {
        return Err(Error::InvalidParameter("positive eps grid and n_rep required".into()));
    }
    let cap = eps_grid.iter().fold(0.0f64, |a, &b| a.max(b));
    let values = (0..n_rep)
        .into_par_iter()
        .map(|i| {
            let i = i as u64;
            let sys = engine.build(&[1.0], derive_seed(seed, &[tag::REPLICA, i]))?;
            let p = builder.profile_capped(&sys, derive_seed(seed, &[tag::RESIDUAL, i]), cap)?;
            Ok(p.eval_grid(eps_grid))
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let mut rows: Vec<SmallTimeRow> = eps_grid
        .iter()
        .enumerate()
        .map(|(k, &eps)| {
            let col: Vec<f64> = values.iter().map(|v| v[k]).collect();
            let mean_area = MeanSe::of(&col);
            SmallTimeRow { eps, ratio: mean_area.mean / eps, mean_area }
        })
        .collect();
    rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let decreasing = rows.windows(2).all(|p| p[1].ratio < p[0].ratio);
    let verdict = if n_rep < 1000 {
        Verdict::LowPower
    } else if decreasing {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(SmallTimeReport { rows, decreasing, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellsystem::TruncationPolicy;
    use crate::levy::LevyTriplet;

    fn engine(alpha: f64, policy: TruncationPolicy) -> Arc<CellEngine> {
        let model = CumulantModel::from_triplet(LevyTriplet::reference_dyadic(), alpha).unwrap();
        CellEngine::new(model, policy).unwrap()
    }

    #[test]
    fn profile_is_monotone_and_totals_match() {
        let e = engine(-0.2, TruncationPolicy::default());
        let sys = e.build(&[1.0], 5).unwrap();
        for mode in [AreaMode::Freeze, AreaMode::SpineExtend] {
            let p = area_profile(&sys, mode, 9).unwrap();
            assert!((p.total() - sys.total_mass()).abs() < 1e-12 * p.total().max(1.0));
            let grid: Vec<f64> = (0..200).map(|k| k as f64 * 0.05).collect();
            let v = p.eval_grid(&grid);
            assert!(v.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(p.eval(-1.0), 0.0);
            assert!((p.eval(f64::INFINITY) - p.total()).abs() < 1e-12);
        }
    }

    #[test]
    fn spine_extend_dominates_freeze() {
        let e = engine(-0.2, TruncationPolicy::default());
        let sys = e.build(&[1.0], 6).unwrap();
        let f = area_profile(&sys, AreaMode::Freeze, 1).unwrap();
        let s = area_profile(&sys, AreaMode::SpineExtend, 1).unwrap();
        for k in 0..100 {
            let t = k as f64 * 0.05;
            assert!(f.eval(t) >= s.eval(t) - 1e-12);
        }
    }

    #[test]
    fn capped_profile_agrees_below_cap() {
        let e = engine(-0.2, TruncationPolicy::default());
        let b = AreaBuilder::new(&e, AreaMode::SpineExtend).unwrap();
        let sys = e.build(&[1.0], 7).unwrap();
        let full = b.profile(&sys, 3).unwrap();
        let cap = b.profile_capped(&sys, 3, 0.7).unwrap();
        for k in 0..=70 {
            let t = k as f64 * 0.01;
            assert_eq!(full.eval(t), cap.eval(t), "t={t} {:?}", full.atoms().iter().filter(|a| a.t <= t).count());
        }
        assert!((full.total() - cap.total()).abs() < 1e-12);
    }

    #[test]
    fn fragment_stats_by_hand() {
        let w = 0.3;
        let fs = FragmentStats::from_fragments(&[1.0], &[1.0, 0.25], &[vec![0.5]], w).unwrap();
        assert_eq!(fs.m[0], vec![0.5f64.powf(w), 0.0]);
        assert_eq!(fs.n[0], vec![0.0, 1.0]);
        let empty = FragmentStats::from_fragments(&[1.0], &[0.1], &[vec![]], w).unwrap();
        assert_eq!((empty.m[0][0], empty.n[0][0]), (0.0, 0.0));
    }

    #[test]
    fn tag_leaf_is_a_descent_ending_at_an_atom() {
        let e = engine(-0.2, TruncationPolicy::default());
        let b = AreaBuilder::new(&e, AreaMode::SpineExtend).unwrap();
        let sys = e.build(&[1.0], 8).unwrap();
        let p = b.profile(&sys, 2).unwrap();
        for seed in 0..50 {
            let leaf = tag_leaf(&sys, LeafResidual::Profile(&p), seed).unwrap();
            let recs = sys.records();
            for pair in leaf.records.windows(2) {
                assert_eq!(recs[pair[1]].parent, Some(pair[0]));
            }
            let atom = p.atom_of(*leaf.records.last().unwrap()).unwrap();
            assert!((leaf.lifetime - atom.t).abs() < 1e-9 * atom.t.max(1.0));
        }
    }
}
