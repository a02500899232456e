//! Cell systems: the Ulam-Harris genealogy of a growth-fragmentation,
//! simulated generation by generation under a truncation policy.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::cumulant::CumulantModel;
use crate::error::{Error, Result};
use crate::lamperti::{segment_clock, ClockOptions};
use crate::levy::{DriftSign, LevyTriplet, PathDriver};
use crate::seed::{derive_seed, tag};

/// Ulam-Harris label; the empty sequence is the ancestor (Eve) cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize)]
pub struct UlamLabel(pub Vec<u32>);

impl UlamLabel {
    pub fn eve() -> Self {
        UlamLabel(Vec::new())
    }

    pub fn generation(&self) -> usize {
        self.0.len()
    }

    pub fn child(&self, j: u32) -> Self {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.extend_from_slice(&self.0);
        v.push(j);
        UlamLabel(v)
    }

    pub fn parent(&self) -> Option<Self> {
        let (_, rest) = self.0.split_last()?;
        Some(UlamLabel(rest.to_vec()))
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "∅" {
            return Some(UlamLabel::eve());
        }
        s.split('.')
            .map(|p| p.parse::<u32>().ok().filter(|&j| j > 0 && !p.starts_with('+') && !p.starts_with('0')))
            .collect::<Option<Vec<u32>>>()
            .map(UlamLabel)
    }
}

impl fmt::Display for UlamLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("∅");
        }
        for (i, j) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{j}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum CellStatus {
    Absorbed,
    TruncatedSize,
    TruncatedGeneration,
    TruncatedTime,
    TruncatedBudget,
}

impl CellStatus {
    /// Frozen cells were born but never simulated.
    pub fn is_frozen(self) -> bool {
        matches!(self, CellStatus::TruncatedSize | CellStatus::TruncatedGeneration | CellStatus::TruncatedBudget)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Absorbed => "absorbed",
            CellStatus::TruncatedSize => "truncated_size",
            CellStatus::TruncatedGeneration => "truncated_generation",
            CellStatus::TruncatedTime => "truncated_time",
            CellStatus::TruncatedBudget => "truncated_budget",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "absorbed" => CellStatus::Absorbed,
            "truncated_size" => CellStatus::TruncatedSize,
            "truncated_generation" => CellStatus::TruncatedGeneration,
            "truncated_time" => CellStatus::TruncatedTime,
            "truncated_budget" => CellStatus::TruncatedBudget,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChildLink {
    /// Age of the parent at the birth.
    pub age: f64,
    pub size: f64,
    /// Index of the child's record in the system.
    pub record: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRecord {
    pub root: usize,
    pub label: UlamLabel,
    pub parent: Option<usize>,
    pub birth_time: f64,
    pub initial_size: f64,
    /// Age at absorption or truncation; zero for frozen cells.
    pub death_age: f64,
    /// Size when the path was stopped (the unsimulated remainder of the
    /// cell is represented by a residual of this size).
    pub final_size: f64,
    pub status: CellStatus,
    pub children: Vec<ChildLink>,
    unit_birth: f64,
    unit_size: f64,
}

impl CellRecord {
    pub fn generation(&self) -> usize {
        self.label.generation()
    }

    pub fn death_time(&self) -> f64 {
        self.birth_time + self.death_age
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationPolicy {
    /// Children smaller than this are frozen.
    pub size_floor: f64,
    pub generation_cap: u32,
    /// Real-time horizon; may be infinite.
    pub time_horizon: f64,
    /// Maximum number of simulated cells.
    pub cell_budget: usize,
    /// A cell path also requires `e^{omega_- xi} < mass_cutoff` before it stops.
    pub mass_cutoff: f64,
    pub clock: ClockOptions,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy {
            size_floor: 1e-4,
            generation_cap: 30,
            time_horizon: f64::INFINITY,
            cell_budget: 10_000_000,
            mass_cutoff: 1e-9,
            clock: ClockOptions::default(),
        }
    }
}

impl TruncationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.size_floor > 0.0 && self.size_floor.is_finite()) {
            return Err(Error::InvalidParameter(format!("size_floor must be positive, got {}", self.size_floor)));
        }
        if !(self.time_horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("time_horizon must be positive, got {}", self.time_horizon)));
        }
        if self.cell_budget == 0 {
            return Err(Error::InvalidParameter("cell_budget must be at least 1".into()));
        }
        if !(self.mass_cutoff > 0.0 && self.mass_cutoff < 1.0) {
            return Err(Error::InvalidParameter(format!("mass_cutoff must lie in (0, 1), got {}", self.mass_cutoff)));
        }
        self.clock.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SystemStats {
    pub records: usize,
    pub simulated: usize,
    pub absorbed: usize,
    pub truncated_size: usize,
    pub truncated_generation: usize,
    pub truncated_time: usize,
    pub truncated_budget: usize,
    pub max_generation: usize,
    pub budget_exhausted: bool,
    /// `sum x^{omega_-}` over frozen cells.
    pub frozen_mass: f64,
    /// `sum final_size^{omega_-}` over simulated cells.
    pub residual_mass: f64,
}

/// Model, policy and path driver shared by every system built from them.
#[derive(Debug)]
pub struct CellEngine {
    model: Option<CumulantModel>,
    alpha: f64,
    omega_minus: f64,
    policy: TruncationPolicy,
    driver: PathDriver,
}

struct CellRun {
    death_age: f64,
    final_size: f64,
    absorbed: bool,
    /// (age, unit age, child size relative to the root)
    births: Vec<(f64, f64, f64)>,
}

impl CellEngine {
    pub fn new(model: CumulantModel, policy: TruncationPolicy) -> Result<Arc<CellEngine>> {
        policy.validate()?;
        let triplet = model
            .triplet()
            .ok_or_else(|| Error::Unsupported("cell systems need a Lévy triplet".into()))?;
        if triplet.drift_sign()? != DriftSign::Negative {
            return Err(Error::InvalidModel("xi must drift to -inf for cells to be absorbed".into()));
        }
        let driver = PathDriver::new(triplet, policy.clock.max_step)?;
        let (alpha, omega_minus) = (model.alpha(), model.omega_minus());
        Ok(Arc::new(CellEngine { model: Some(model), alpha, omega_minus, policy, driver }))
    }

    /// Engine for an arbitrary driving process without a cumulant model,
    /// e.g. a pure drift; `omega_minus` only enters the mass stop rule and
    /// the martingale.
    pub fn from_process(triplet: &LevyTriplet, alpha: f64, omega_minus: f64, policy: TruncationPolicy) -> Result<Arc<CellEngine>> {
        policy.validate()?;
        triplet.validate_process()?;
        if !(alpha < 0.0) || !(omega_minus > 0.0) {
            return Err(Error::InvalidParameter("alpha must be negative and omega_minus positive".into()));
        }
        if triplet.drift_sign()? != DriftSign::Negative {
            return Err(Error::InvalidModel("xi must drift to -inf for cells to be absorbed".into()));
        }
        let driver = PathDriver::new(triplet, policy.clock.max_step)?;
        Ok(Arc::new(CellEngine { model: None, alpha, omega_minus, policy, driver }))
    }

    pub fn model(&self) -> Option<&CumulantModel> {
        self.model.as_ref()
    }

    pub fn policy(&self) -> &TruncationPolicy {
        &self.policy
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn omega_minus(&self) -> f64 {
        self.omega_minus
    }

    fn seed_for(master: u64, root: usize, label: &UlamLabel) -> u64 {
        let mut coords = Vec::with_capacity(label.0.len() + 2);
        coords.push(tag::CELL);
        coords.push(root as u64);
        coords.extend(label.0.iter().map(|&j| j as u64));
        derive_seed(master, &coords)
    }

    /// Runs one cell path. Sizes are carried relative to the root
    /// (`unit_size`) and multiplied by `root_size` on output; ages are
    /// `root_scale * (unit_size^{-alpha} * clock)` with `root_scale = root_size^{-alpha}`.
    /// Both keep a system from root `x` an exact rescaling of the one from root 1.
    /// Calls `visit(age, size)` on every node when given.
    fn run_cell(
        &self,
        unit_size: f64,
        root_size: f64,
        root_scale: f64,
        age_limit: f64,
        seed: u64,
        mut visit: Option<&mut dyn FnMut(f64, f64) -> bool>,
    ) -> Result<CellRun> {
        let c = -self.alpha();
        let w = self.omega_minus();
        let rel_scale = unit_size.powf(c);
        let size = |v: f64| root_size * (unit_size * v.exp());
        let opts = &self.policy.clock;
        let mut sampler = self.driver.sampler(seed);
        let mut prev = sampler.next_node();
        let mut clock = 0.0;
        let mut births = Vec::new();
        let mut budget = opts.initial_horizon;
        let mut doublings = 0;
        let mut prev_age = 0.0;
        loop {
            let node = sampler.next_node();
            clock += segment_clock(c, prev.time, prev.value, node.time, node.value);
            let unit_age = rel_scale * clock;
            let age = root_scale * unit_age;
            if age >= age_limit {
                return Ok(CellRun { death_age: age_limit, final_size: size(prev.value), absorbed: false, births });
            }
            if let Some(v) = visit.as_mut() {
                if !v(age, size(node.value)) {
                    return Ok(CellRun { death_age: prev_age, final_size: size(node.value), absorbed: false, births });
                }
            }
            if let Some(j) = node.jump {
                if j < 0.0 {
                    let before = unit_size * prev.value.exp();
                    let after = unit_size * node.value.exp();
                    births.push((age, unit_age, before - after));
                }
            }
            if opts.should_stop((c * node.value).exp(), clock, node.time) && (w * node.value).exp() < self.policy.mass_cutoff {
                return Ok(CellRun { death_age: age, final_size: size(node.value), absorbed: true, births });
            }
            if node.time > budget {
                if doublings == opts.max_doublings {
                    return Err(Error::PathTooShort(format!("cell path not settled after process time {budget}")));
                }
                doublings += 1;
                budget *= 2.0;
            }
            prev_age = age;
            prev = node;
        }
    }

    /// Builds a system from one or more root cells (sizes nonincreasing).
    pub fn build(self: &Arc<Self>, roots: &[f64], master_seed: u64) -> Result<CellSystem> {
        if roots.is_empty() {
            return Err(Error::InvalidParameter("at least one root size is required".into()));
        }
        if roots.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidParameter("root sizes must be positive and finite".into()));
        }
        if roots.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidParameter("root sizes must be nonincreasing".into()));
        }
        let p = &self.policy;
        let c = -self.alpha();
        let w = self.omega_minus();
        let root_scales: Vec<f64> = roots.iter().map(|x| x.powf(c)).collect();
        let mut records: Vec<CellRecord> = Vec::new();
        let mut frontier: Vec<usize> = Vec::new();
        let mut simulated = 0usize;
        let mut budget_exhausted = false;
        for (r, &x) in roots.iter().enumerate() {
            let status = if x < p.size_floor {
                Some(CellStatus::TruncatedSize)
            } else if simulated >= p.cell_budget {
                budget_exhausted = true;
                Some(CellStatus::TruncatedBudget)
            } else {
                simulated += 1;
                None
            };
            records.push(CellRecord {
                root: r,
                label: UlamLabel::eve(),
                parent: None,
                birth_time: 0.0,
                initial_size: x,
                death_age: 0.0,
                final_size: x,
                status: status.unwrap_or(CellStatus::Absorbed),
                children: Vec::new(),
                unit_birth: 0.0,
                unit_size: 1.0,
            });
            if status.is_none() {
                frontier.push(records.len() - 1);
            }
        }
        while !frontier.is_empty() {
            let runs: Vec<Result<CellRun>> = frontier
                .par_iter()
                .map(|&i| {
                    let rec = &records[i];
                    let root_size = roots[rec.root];
                    let limit = p.time_horizon - rec.birth_time;
                    let seed = Self::seed_for(master_seed, rec.root, &rec.label);
                    self.run_cell(rec.unit_size, root_size, root_scales[rec.root], limit, seed, None)
                })
                .collect();
            let mut next = Vec::new();
            for (&i, run) in frontier.iter().zip(runs) {
                let run = run?;
                let (root, generation, unit_birth) = (records[i].root, records[i].generation(), records[i].unit_birth);
                {
                    let rec = &mut records[i];
                    rec.death_age = run.death_age;
                    rec.final_size = run.final_size;
                    rec.status = if run.absorbed { CellStatus::Absorbed } else { CellStatus::TruncatedTime };
                }
                for (k, (age, unit_age, unit_size)) in run.births.into_iter().enumerate() {
                    let label = records[i].label.child(k as u32 + 1);
                    let child_unit_birth = unit_birth + unit_age;
                    let size = roots[root] * unit_size;
                    let status = if size < p.size_floor {
                        Some(CellStatus::TruncatedSize)
                    } else if generation + 1 > p.generation_cap as usize {
                        Some(CellStatus::TruncatedGeneration)
                    } else {
                        None
                    };
                    let idx = records.len();
                    records.push(CellRecord {
                        root,
                        label,
                        parent: Some(i),
                        birth_time: root_scales[root] * child_unit_birth,
                        initial_size: size,
                        death_age: 0.0,
                        final_size: size,
                        status: status.unwrap_or(CellStatus::Absorbed),
                        children: Vec::new(),
                        unit_birth: child_unit_birth,
                        unit_size,
                    });
                    records[i].children.push(ChildLink { age, size, record: idx });
                    if status.is_none() {
                        next.push(idx);
                    }
                }
            }
            // the budget is applied in label order within the generation
            next.sort_by(|&a, &b| (records[a].root, &records[a].label).cmp(&(records[b].root, &records[b].label)));
            let room = p.cell_budget.saturating_sub(simulated);
            if next.len() > room {
                budget_exhausted = true;
                for &i in &next[room..] {
                    records[i].status = CellStatus::TruncatedBudget;
                }
                next.truncate(room);
            }
            simulated += next.len();
            frontier = next;
        }
        let mut stats = SystemStats { records: records.len(), simulated, budget_exhausted, ..Default::default() };
        for rec in &records {
            stats.max_generation = stats.max_generation.max(rec.generation());
            match rec.status {
                CellStatus::Absorbed => stats.absorbed += 1,
                CellStatus::TruncatedSize => stats.truncated_size += 1,
                CellStatus::TruncatedGeneration => stats.truncated_generation += 1,
                CellStatus::TruncatedTime => stats.truncated_time += 1,
                CellStatus::TruncatedBudget => stats.truncated_budget += 1,
            }
            if rec.status.is_frozen() {
                stats.frozen_mass += rec.initial_size.powf(w);
            } else {
                stats.residual_mass += rec.final_size.powf(w);
            }
        }
        let index = records.iter().enumerate().map(|(i, r)| ((r.root, r.label.clone()), i)).collect();
        Ok(CellSystem { engine: Arc::clone(self), roots: roots.to_vec(), master_seed, records, index, stats })
    }

    /// One cell of size `x0` born at time 0, simulated in isolation.
    pub fn simulate_cell(&self, x0: f64, seed: u64) -> Result<CellRecord> {
        if !(x0 > 0.0 && x0.is_finite()) {
            return Err(Error::InvalidParameter(format!("x0 must be positive, got {x0}")));
        }
        let run = self.run_cell(1.0, x0, x0.powf(-self.alpha()), self.policy.time_horizon, seed, None)?;
        Ok(CellRecord {
            root: 0,
            label: UlamLabel::eve(),
            parent: None,
            birth_time: 0.0,
            initial_size: x0,
            death_age: run.death_age,
            final_size: run.final_size,
            status: if run.absorbed { CellStatus::Absorbed } else { CellStatus::TruncatedTime },
            children: run
                .births
                .iter()
                .enumerate()
                .map(|(k, &(age, _, unit))| ChildLink { age, size: x0 * unit, record: k + 1 })
                .collect(),
            unit_birth: 0.0,
            unit_size: 1.0,
        })
    }
}

/// A simulated genealogy. Cell paths are not stored; they are replayed
/// from the per-label seed when a snapshot needs them.
#[derive(Debug, Clone)]
pub struct CellSystem {
    engine: Arc<CellEngine>,
    roots: Vec<f64>,
    master_seed: u64,
    records: Vec<CellRecord>,
    index: HashMap<(usize, UlamLabel), usize>,
    stats: SystemStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationMultiset {
    pub generation: usize,
    /// Sorted log initial sizes.
    pub log_sizes: Vec<f64>,
}

impl CellSystem {
    pub fn engine(&self) -> &Arc<CellEngine> {
        &self.engine
    }

    pub fn records(&self) -> &[CellRecord] {
        &self.records
    }

    pub fn record(&self, root: usize, label: &UlamLabel) -> Option<&CellRecord> {
        self.index.get(&(root, label.clone())).map(|&i| &self.records[i])
    }

    pub fn roots(&self) -> &[f64] {
        &self.roots
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stats(&self) -> &SystemStats {
        &self.stats
    }

    pub fn policy(&self) -> &TruncationPolicy {
        &self.engine.policy
    }

    fn check_generation(&self, n: usize) -> Result<()> {
        let cap = self.engine.policy.generation_cap as usize + 1;
        if n > cap {
            return Err(Error::GenerationBeyondTruncation { requested: n, cap });
        }
        Ok(())
    }

    /// `{{ln chi_u(0) : |u| = n}}`, frozen cells included.
    pub fn branching_walk(&self, n: usize) -> Result<GenerationMultiset> {
        self.check_generation(n)?;
        let mut log_sizes: Vec<f64> =
            self.records.iter().filter(|r| r.generation() == n).map(|r| r.initial_size.ln()).collect();
        log_sizes.sort_by(f64::total_cmp);
        Ok(GenerationMultiset { generation: n, log_sizes })
    }

    /// `sum_{|u| = n} chi_u(0)^{omega_-}`. Lineages that stop before
    /// generation `n` (frozen cells and the residuals of simulated cells)
    /// enter with their own mass, which is the conditional mean of their
    /// unsimulated generation-`n` descendants.
    pub fn intrinsic_martingale(&self, n: usize) -> Result<f64> {
        self.check_generation(n)?;
        let w = self.engine.omega_minus();
        Ok(self
            .records
            .iter()
            .map(|r| {
                let g = r.generation();
                if g == n || (g < n && r.status.is_frozen()) {
                    r.initial_size.powf(w)
                } else if g < n {
                    r.final_size.powf(w)
                } else {
                    0.0
                }
            })
            .sum())
    }

    /// Replays the path of a simulated record, calling `visit(age, size)`
    /// at every node until it returns false.
    pub fn replay(&self, record: usize, visit: &mut dyn FnMut(f64, f64) -> bool) -> Result<()> {
        let rec = &self.records[record];
        if rec.status.is_frozen() {
            return Ok(());
        }
        let c = -self.engine.alpha();
        let root_size = self.roots[rec.root];
        let seed = CellEngine::seed_for(self.master_seed, rec.root, &rec.label);
        let limit = self.engine.policy.time_horizon - rec.birth_time;
        if visit(0.0, rec.initial_size) {
            self.engine.run_cell(rec.unit_size, root_size, root_size.powf(c), limit, seed, Some(visit))?;
        }
        Ok(())
    }

    /// Size of a simulated cell at the last path node with age `<= age`.
    pub fn size_at_age(&self, record: usize, age: f64) -> Result<f64> {
        let mut last = self.records[record].initial_size;
        self.replay(record, &mut |a, x| {
            if a > age {
                return false;
            }
            last = x;
            true
        })?;
        Ok(last)
    }

    /// Sizes of the simulated cells alive at time `t`, nonincreasing.
    /// Frozen subtrees contribute nothing here.
    pub fn fragments_at(&self, t: f64) -> Result<Vec<f64>> {
        let horizon = self.engine.policy.time_horizon;
        if !(t < horizon) {
            return Err(Error::HorizonExceeded { t, horizon });
        }
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("t must be >= 0, got {t}")));
        }
        let alive: Vec<usize> = (0..self.records.len())
            .filter(|&i| {
                let r = &self.records[i];
                !r.status.is_frozen() && r.birth_time <= t && t < r.death_time()
            })
            .collect();
        let mut sizes = alive
            .par_iter()
            .map(|&i| self.size_at_age(i, t - self.records[i].birth_time))
            .collect::<Result<Vec<f64>>>()?;
        sizes.sort_by(|a, b| b.total_cmp(a));
        Ok(sizes)
    }

    /// Fragment sizes at each of the given times with one replay per cell.
    pub fn fragments_at_times(&self, times: &[f64]) -> Result<Vec<Vec<f64>>> {
        let horizon = self.engine.policy.time_horizon;
        for &t in times {
            if !(t < horizon) {
                return Err(Error::HorizonExceeded { t, horizon });
            }
            if !(t >= 0.0) {
                return Err(Error::InvalidParameter(format!("t must be >= 0, got {t}")));
            }
        }
        let per_cell = (0..self.records.len())
            .into_par_iter()
            .filter(|&i| !self.records[i].status.is_frozen())
            .map(|i| {
                let r = &self.records[i];
                let ages: Vec<Option<f64>> = times
                    .iter()
                    .map(|&t| (r.birth_time <= t && t < r.death_time()).then_some(t - r.birth_time))
                    .collect();
                let mut sizes: Vec<Option<f64>> = vec![None; times.len()];
                let oldest = ages.iter().flatten().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                if oldest >= 0.0 {
                    self.replay(i, &mut |a, x| {
                        if a > oldest {
                            return false;
                        }
                        for (slot, age) in sizes.iter_mut().zip(&ages) {
                            if let Some(age) = age {
                                if a <= *age {
                                    *slot = Some(x);
                                }
                            }
                        }
                        true
                    })?;
                }
                Ok(sizes)
            })
            .collect::<Result<Vec<Vec<Option<f64>>>>>()?;
        let mut out = vec![Vec::new(); times.len()];
        for sizes in per_cell {
            for (k, s) in sizes.into_iter().enumerate() {
                if let Some(x) = s {
                    out[k].push(x);
                }
            }
        }
        for v in &mut out {
            v.sort_by(|a, b| b.total_cmp(a));
        }
        Ok(out)
    }

    /// Expected area carried by each record's subtree: frozen cells weigh
    /// `x^{omega_-}`, simulated cells their residual plus their children.
    pub fn subtree_masses(&self) -> Vec<f64> {
        let w = self.engine.omega_minus();
        let mut mass = vec![0.0; self.records.len()];
        // children always have larger indices than their parent
        for i in (0..self.records.len()).rev() {
            let r = &self.records[i];
            mass[i] = if r.status.is_frozen() {
                r.initial_size.powf(w)
            } else {
                r.final_size.powf(w) + r.children.iter().map(|c| mass[c.record]).sum::<f64>()
            };
        }
        mass
    }

    /// Sum of the root subtree masses: the truncated estimate of the
    /// terminal intrinsic martingale.
    pub fn total_mass(&self) -> f64 {
        let m = self.subtree_masses();
        self.records.iter().enumerate().filter(|(_, r)| r.parent.is_none()).map(|(i, _)| m[i]).sum()
    }

    pub(crate) fn label_seed(&self, master: u64, domain: u64, record: usize) -> u64 {
        let r = &self.records[record];
        let mut coords = Vec::with_capacity(r.label.0.len() + 2);
        coords.push(domain);
        coords.push(r.root as u64);
        coords.extend(r.label.0.iter().map(|&j| j as u64));
        derive_seed(master, &coords)
    }

    /// One line per cell:
    /// `label<TAB>parent<TAB>birth_time<TAB>initial_size<TAB>death_age<TAB>status`.
    /// Labels are written `root/u` with `∅` for the ancestor and `-` for no parent.
    pub fn export_tree(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let parent = match r.parent {
                Some(p) => format!("{}/{}", r.root, self.records[p].label),
                None => "-".to_string(),
            };
            out.push_str(&format!(
                "{}/{}\t{}\t{:?}\t{:?}\t{:?}\t{}\n",
                r.root,
                r.label,
                parent,
                r.birth_time,
                r.initial_size,
                r.death_age,
                r.status.as_str()
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportRow {
    pub root: usize,
    pub label: UlamLabel,
    pub parent: Option<UlamLabel>,
    pub birth_time: f64,
    pub initial_size: f64,
    pub death_age: f64,
    pub status: CellStatus,
}

impl ExportRow {
    /// Height of the attachment point of this branch.
    pub fn attach_height(&self) -> f64 {
        self.birth_time
    }

    pub fn end_height(&self) -> f64 {
        self.birth_time + self.death_age
    }
}

fn parse_cell_ref(s: &str) -> Option<(usize, UlamLabel)> {
    let (root, label) = s.split_once('/')?;
    if root.is_empty() || root.starts_with('+') || (root.len() > 1 && root.starts_with('0')) {
        return None;
    }
    Some((root.parse().ok()?, UlamLabel::parse(label)?))
}

fn parse_float(s: &str, what: &str, line: usize) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Parse { line, message: format!("bad {what} {s:?}") })
}

/// Parses the tree export format, checking that every parent precedes its
/// children and that the genealogy is consistent.
pub fn parse_tree_export(text: &str) -> Result<Vec<ExportRow>> {
    let mut rows: Vec<ExportRow> = Vec::new();
    let mut seen: HashMap<(usize, UlamLabel), usize> = HashMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::Parse { line, message: format!("expected 6 tab-separated fields, found {}", fields.len()) });
        }
        let (root, label) =
            parse_cell_ref(fields[0]).ok_or_else(|| Error::Parse { line, message: format!("bad label {:?}", fields[0]) })?;
        let parent = if fields[1] == "-" {
            if label.generation() != 0 {
                return Err(Error::Parse { line, message: "only ancestors may lack a parent".into() });
            }
            None
        } else {
            let (proot, plabel) = parse_cell_ref(fields[1])
                .ok_or_else(|| Error::Parse { line, message: format!("bad parent label {:?}", fields[1]) })?;
            if proot != root || label.parent().as_ref() != Some(&plabel) {
                return Err(Error::Parse { line, message: "parent label is not the label prefix".into() });
            }
            if !seen.contains_key(&(proot, plabel.clone())) {
                return Err(Error::Parse { line, message: "parent appears after its child".into() });
            }
            Some(plabel)
        };
        let birth_time = parse_float(fields[2], "birth time", line)?;
        let initial_size = parse_float(fields[3], "initial size", line)?;
        let death_age = parse_float(fields[4], "death age", line)?;
        if !(birth_time >= 0.0 && initial_size > 0.0 && death_age >= 0.0) || !initial_size.is_finite() {
            return Err(Error::Parse { line, message: "times must be >= 0 and sizes positive".into() });
        }
        let status =
            CellStatus::parse(fields[5]).ok_or_else(|| Error::Parse { line, message: format!("bad status {:?}", fields[5]) })?;
        if seen.insert((root, label.clone()), rows.len()).is_some() {
            return Err(Error::Parse { line, message: "duplicate label".into() });
        }
        rows.push(ExportRow { root, label, parent, birth_time, initial_size, death_age, status });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    
    fn reference_engine(alpha: f64, policy: TruncationPolicy) -> Arc<CellEngine> {
        let m = CumulantModel::from_triplet(LevyTriplet::reference_dyadic(), alpha).unwrap();
        CellEngine::new(m, policy).unwrap()
    }

    #[test]
    fn labels_roundtrip() {
        let l = UlamLabel(vec![3, 1, 12]);
        assert_eq!(l.to_string(), "3.1.12");
        assert_eq!(UlamLabel::parse("3.1.12"), Some(l.clone()));
        assert_eq!(UlamLabel::parse("∅"), Some(UlamLabel::eve()));
        assert_eq!(UlamLabel::parse("0"), None);
        assert_eq!(UlamLabel::parse("1..2"), None);
        assert_eq!(l.parent(), Some(UlamLabel(vec![3, 1])));
        assert_eq!(UlamLabel::eve().parent(), None);
    }

    #[test]
    fn children_are_half_the_pre_jump_size() {
        let e = reference_engine(-0.2, TruncationPolicy::default());
        let s = e.build(&[1.0], 5).unwrap();
        let mut checked = 0;
        for (i, r) in s.records().iter().enumerate() {
            for ch in &r.children {
                let before = s.size_at_age(i, ch.age - 1e-300).unwrap();
                // the pre-jump node shares the jump age
                let mut pre = None;
                let mut post = None;
                s.replay(i, &mut |a, x| {
                    if a == ch.age {
                        if pre.is_none() {
                            pre = Some(x);
                        } else {
                            post = Some(x);
                        }
                    }
                    a <= ch.age
                })
                .unwrap();
                let (pre, post) = (pre.unwrap(), post.unwrap());
                assert_eq!(pre - post, ch.size);
                assert!((ch.size - pre / 2.0).abs() <= 1e-13 * pre);
                assert!(before > 0.0);
                let child = &s.records()[ch.record];
                assert_eq!(child.parent, Some(i));
                assert_eq!(child.birth_time, r.birth_time + ch.age);
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn generation_cap_zero_freezes_children() {
        let p = TruncationPolicy { generation_cap: 0, ..Default::default() };
        let s = reference_engine(-0.2, p).build(&[1.0], 2).unwrap();
        assert_eq!(s.stats().simulated, 1);
        assert!(s.records()[1..].iter().all(|r| r.status.is_frozen()));
        assert!(s.branching_walk(1).is_ok());
        assert!(matches!(s.branching_walk(2), Err(Error::GenerationBeyondTruncation { .. })));
    }

    #[test]
    fn martingale_at_generation_zero() {
        let e = reference_engine(-0.2, TruncationPolicy::default());
        let s = e.build(&[2.0], 1).unwrap();
        let w = e.omega_minus();
        assert!((s.intrinsic_martingale(0).unwrap() - 2f64.powf(w)).abs() < 1e-15);
        assert!((s.intrinsic_martingale(0).unwrap() - 1.188).abs() < 1e-3);
        assert_eq!(s.branching_walk(0).unwrap().log_sizes, vec![2f64.ln()]);
    }

    #[test]
    fn pure_drift_cell() {
        let t = LevyTriplet::atoms(-2.0, 0.0, vec![]);
        let e = CellEngine::from_process(&t, -1.0, 1.0, TruncationPolicy::default()).unwrap();
        let c = e.simulate_cell(1.0, 3).unwrap();
        assert!(c.children.is_empty());
        assert_eq!(c.status, CellStatus::Absorbed);
        assert!((c.death_age - 0.5).abs() < 1e-9);
        let c = e.simulate_cell(4.0, 3).unwrap();
        assert!((c.death_age - 2.0).abs() < 1e-9);
        let s = e.build(&[1.0], 3).unwrap();
        assert!(s.branching_walk(1).unwrap().log_sizes.is_empty());
        assert_eq!(e.simulate_cell(1.0, 3).unwrap(), e.simulate_cell(1.0, 3).unwrap());
    }

    #[test]
    fn determinism_and_scaling() {
        let x0 = 0.37;
        let p1 = TruncationPolicy { size_floor: 1e-3, ..Default::default() };
        let p2 = TruncationPolicy { size_floor: x0 * 1e-3, ..Default::default() };
        let e1 = reference_engine(-0.2, p1);
        let e2 = reference_engine(-0.2, p2);
        let a = e1.build(&[1.0], 99).unwrap();
        let b = e1.build(&[1.0], 99).unwrap();
        assert_eq!(a.records(), b.records());
        let d = e2.build(&[x0], 99).unwrap();
        let k = x0.powf(0.2);
        assert_eq!(a.records().len(), d.records().len());
        for (x, y) in a.records().iter().zip(d.records()) {
            assert_eq!(x.label, y.label);
            assert_eq!(y.initial_size, x0 * x.initial_size);
            assert_eq!(y.final_size, x0 * x.final_size);
            assert_eq!(y.death_age, k * x.death_age);
            assert_eq!(y.birth_time, k * x.birth_time);
            assert_eq!(x.status, y.status);
        }
    }

    #[test]
    fn budget_extension_keeps_simulated_cells() {
        let small = TruncationPolicy { cell_budget: 3, ..Default::default() };
        let a = reference_engine(-0.2, small).build(&[1.0], 4).unwrap();
        let b = reference_engine(-0.2, TruncationPolicy::default()).build(&[1.0], 4).unwrap();
        assert!(a.stats().budget_exhausted || a.stats().simulated <= 3);
        for r in a.records().iter().filter(|r| !r.status.is_frozen()) {
            assert_eq!(b.record(r.root, &r.label).unwrap(), r);
        }
    }

    #[test]
    fn fragments_and_export() {
        let e = reference_engine(-0.2, TruncationPolicy::default());
        let s = e.build(&[1.0], 8).unwrap();
        assert_eq!(s.fragments_at(0.0).unwrap(), vec![1.0]);
        let last = s.records().iter().map(|r| r.death_time()).fold(0.0, f64::max);
        assert!(s.fragments_at(last + 1.0).unwrap().is_empty());
        let f = s.fragments_at(0.3).unwrap();
        assert!(f.windows(2).all(|w| w[0] >= w[1]));
        let text = s.export_tree();
        let rows = parse_tree_export(&text).unwrap();
        assert_eq!(rows.len(), s.records().len());
        for (row, rec) in rows.iter().zip(s.records()) {
            assert_eq!(row.birth_time, rec.birth_time);
            assert_eq!(row.initial_size, rec.initial_size);
            assert_eq!(row.death_age, rec.death_age);
        }
        assert!(parse_tree_export("0/1\t-\t0\t1\t1\tabsorbed\n").is_err());
        assert!(parse_tree_export("0/∅\t-\t0\t1\tx\tabsorbed\n").is_err());
    }
}
