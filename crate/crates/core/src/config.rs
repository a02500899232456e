//! Run configuration: a TOML document with one table per stage.
//!
//! Every key is optional; missing keys take the defaults below, unknown
//! keys are rejected. `RunConfig::to_toml` writes the fully resolved
//! configuration back out.

use serde::{Deserialize, Serialize};

use crate::area::AreaMode;
use crate::cellsystem::TruncationPolicy;
use crate::cumulant::CumulantModel;
use crate::error::{Error, Result};
use crate::levy::{JumpAtom, JumpDensity, JumpMeasure, LevyTriplet};
use crate::stats::log_space;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub out: Option<String>,
    pub model: ModelConfig,
    pub policy: TruncationPolicy,
    pub simulate: SimulateConfig,
    pub spine: SpineConfig,
    pub profile: ProfileConfig,
    pub dimension: DimensionConfig,
    pub checks: ChecksConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            threads: 0,
            out: None,
            model: ModelConfig::default(),
            policy: TruncationPolicy::default(),
            simulate: SimulateConfig::default(),
            spine: SpineConfig::default(),
            profile: ProfileConfig::default(),
            dimension: DimensionConfig::default(),
            checks: ChecksConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Triplet {
        alpha: f64,
        #[serde(default)]
        drift: f64,
        #[serde(default)]
        gaussian_var: f64,
        #[serde(default)]
        atoms: Vec<AtomConfig>,
        #[serde(default)]
        density: Option<DensityConfig>,
    },
    Boltzmann {
        theta: f64,
    },
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Triplet {
            alpha: -0.2,
            drift: -3.0,
            gaussian_var: 2.0,
            atoms: vec![AtomConfig { location: -std::f64::consts::LN_2, rate: 1.0 }],
            density: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub location: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityConfig {
    Kou { rate_neg: f64, decay_neg: f64, rate_pos: f64, decay_pos: f64, integrability: f64 },
    TemperedStable { c_neg: f64, g: f64, c_pos: f64, m: f64, index: f64, integrability: f64 },
}

impl ModelConfig {
    pub fn triplet(&self) -> Result<Option<LevyTriplet>> {
        match self {
            ModelConfig::Triplet { drift, gaussian_var, atoms, density, .. } => {
                let jumps = match (density, atoms.is_empty()) {
                    (Some(_), false) => return Err(Error::Config("give either atoms or a density, not both".into())),
                    (Some(d), true) => JumpMeasure::Density(match *d {
                        DensityConfig::Kou { rate_neg, decay_neg, rate_pos, decay_pos, integrability } => {
                            JumpDensity::kou(rate_neg, decay_neg, rate_pos, decay_pos, integrability)
                        }
                        DensityConfig::TemperedStable { c_neg, g, c_pos, m, index, integrability } => {
                            JumpDensity::tempered_stable(c_neg, g, c_pos, m, index, integrability)
                        }
                    }),
                    (None, _) => JumpMeasure::FiniteAtoms(atoms.iter().map(|a| JumpAtom::new(a.location, a.rate)).collect()),
                };
                Ok(Some(LevyTriplet::new(*drift, *gaussian_var, jumps)))
            }
            ModelConfig::Boltzmann { .. } => Ok(None),
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            ModelConfig::Triplet { alpha, .. } => *alpha,
            ModelConfig::Boltzmann { theta } => 1.0 - theta,
        }
    }

    pub fn build(&self) -> Result<CumulantModel> {
        match self {
            ModelConfig::Triplet { alpha, .. } => CumulantModel::from_triplet(self.triplet()?.expect("triplet family"), *alpha),
            ModelConfig::Boltzmann { theta } => CumulantModel::boltzmann(*theta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub roots: Vec<f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { roots: vec![1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpineConfig {
    pub samples: usize,
    pub bandwidth: Option<f64>,
}

impl Default for SpineConfig {
    fn default() -> Self {
        SpineConfig { samples: 100_000, bandwidth: None }
    }
}

/// `points` log-spaced values from `min` to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl LogGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.min > 0.0 && self.max > self.min && self.max.is_finite()) || self.points < 2 {
            return Err(Error::Config(format!("bad log grid {self:?}")));
        }
        Ok(log_space(self.min, self.max, self.points))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub mode: AreaMode,
    pub replicas: usize,
    pub t_grid: Vec<f64>,
    /// Spans `[size_floor, 1]` when absent.
    pub eps_grid: Option<LogGrid>,
    pub eps_points: usize,
    /// Mass quantiles of the atom locations bounding the interior times.
    pub interior: [f64; 2],
    /// Grid on which `A(t)` is written out.
    pub a_grid: Vec<f64>,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            mode: AreaMode::SpineExtend,
            replicas: 100,
            t_grid: vec![0.8, 1.0, 1.2, 1.4, 1.6],
            eps_grid: None,
            eps_points: 31,
            interior: [0.1, 0.9],
            a_grid: (0..=60).map(|k| k as f64 * 0.05).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimensionConfig {
    pub replicas: usize,
    pub r_grid: LogGrid,
    /// Fit window; the middle decade of `r_grid` when absent.
    pub window: Option<[f64; 2]>,
    pub b_grid: Vec<f64>,
    /// Leaves of one system used for the energy (halved for stability).
    pub energy_points: usize,
    pub theta_grid: Vec<f64>,
    pub n_pairs: usize,
    pub t_grid: Vec<f64>,
}

impl Default for DimensionConfig {
    fn default() -> Self {
        DimensionConfig {
            replicas: 50,
            r_grid: LogGrid { min: 1e-6, max: 1e-2, points: 17 },
            window: None,
            b_grid: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            energy_points: 4000,
            theta_grid: vec![0.0, 1.0, 5.0, 10.0, 25.0, 50.0, 100.0, 200.0],
            n_pairs: 4000,
            t_grid: vec![0.3, 0.4, 0.5, 0.6],
        }
    }
}

/// Parameters of the acceptance suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksConfig {
    pub boltzmann_thetas: Vec<f64>,
    pub oracle_points: usize,
    pub ac_alpha: f64,
    pub singular_alpha: f64,
    pub martingale_systems: usize,
    pub martingale_generations: Vec<usize>,
    pub spine_samples: usize,
    pub tagged_leaves: usize,
    pub tagged_pool: usize,
    pub scaling_x0: f64,
    /// Size floor of the systems behind the profile and dimension criteria.
    pub deep_size_floor: f64,
    pub profile_replicas: usize,
    pub profile_t_grid: Vec<f64>,
    pub dimension_replicas: usize,
    pub dimension_r_grid: LogGrid,
    pub dimension_t_grid: Vec<f64>,
    pub small_time_eps: Vec<f64>,
    pub small_time_replicas: usize,
    pub branching_t: f64,
    pub branching_s: f64,
    pub branching_replicas: usize,
    pub synthetic_points: usize,
    pub synthetic_r_grid: LogGrid,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        ChecksConfig {
            boltzmann_thetas: vec![1.05, 1.1, 1.25, 1.4, 1.5],
            oracle_points: 1_000_000,
            ac_alpha: -0.2,
            singular_alpha: -0.5,
            martingale_systems: 1000,
            martingale_generations: vec![1, 2, 3],
            spine_samples: 100_000,
            tagged_leaves: 2000,
            tagged_pool: 10_000,
            scaling_x0: 0.37,
            deep_size_floor: 1e-11,
            profile_replicas: 100,
            profile_t_grid: vec![0.8, 1.0, 1.2, 1.4, 1.6],
            dimension_replicas: 50,
            dimension_r_grid: LogGrid { min: 1e-6, max: 1e-2, points: 17 },
            dimension_t_grid: vec![0.3, 0.4, 0.5, 0.6],
            small_time_eps: vec![0.4, 0.2, 0.1, 0.05],
            small_time_replicas: 1000,
            branching_t: 0.2,
            branching_s: 0.3,
            branching_replicas: 2000,
            synthetic_points: 4000,
            synthetic_r_grid: LogGrid { min: 1e-4, max: 1.0, points: 21 },
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::Parse { line, message: e.message().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Checks that do not need a model solve.
    pub fn validate(&self) -> Result<()> {
        self.policy.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.model.alpha() < 0.0) {
            return Err(Error::Config(format!("alpha must be negative, got {}", self.model.alpha())));
        }
        let roots = &self.simulate.roots;
        if roots.is_empty() || roots.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::Config("simulate.roots must be positive".into()));
        }
        let p = &self.profile;
        if p.replicas == 0 || p.t_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || p.t_grid.is_empty() {
            return Err(Error::Config("profile needs replicas > 0 and a nonempty t_grid of times >= 0".into()));
        }
        if !(0.0 <= p.interior[0] && p.interior[0] < p.interior[1] && p.interior[1] <= 1.0) {
            return Err(Error::Config("profile.interior must be increasing quantiles in [0, 1]".into()));
        }
        if let Some(g) = &p.eps_grid {
            g.values()?;
        }
        let d = &self.dimension;
        d.r_grid.values()?;
        if d.b_grid.iter().any(|b| !(*b > 0.0 && *b <= 1.0)) {
            return Err(Error::Config("dimension.b_grid values must lie in (0, 1]".into()));
        }
        if d.replicas == 0 || d.n_pairs < 2 || d.energy_points < 200 {
            return Err(Error::Config("dimension needs replicas > 0, n_pairs >= 2, energy_points >= 200".into()));
        }
        let c = &self.checks;
        c.dimension_r_grid.values()?;
        c.synthetic_r_grid.values()?;
        if !(c.ac_alpha < 0.0 && c.singular_alpha < 0.0 && c.scaling_x0 > 0.0 && c.deep_size_floor > 0.0) {
            return Err(Error::Config("checks: alphas must be negative, scaling_x0 and deep_size_floor positive".into()));
        }
        Ok(())
    }

    pub fn eps_grid(&self) -> Result<Vec<f64>> {
        match &self.profile.eps_grid {
            Some(g) => g.values(),
            None => LogGrid { min: self.policy.size_floor, max: 1.0, points: self.profile.eps_points }.values(),
        }
    }
}
