//! Lévy triplets, their Laplace exponents and jump-adapted path sampling.
//!
//! Two jump-measure representations are supported. `FiniteAtoms` uses the
//! uncompensated exponent `b q + s2 q^2 / 2 + sum rate (e^{q y} - 1)`, which
//! keeps finite-activity models in closed form. `Density` uses the usual
//! truncation-compensated exponent with compensation on `|y| < 1`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{expm1_minus_x, integrate, integrate_from_neg_inf, integrate_to_inf};
use crate::seed::{rng_from_seed, SimRng};

/// Default small-jump threshold for density jump measures.
pub const DEFAULT_SMALL_JUMP_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpAtom {
    pub location: f64,
    pub rate: f64,
}

impl JumpAtom {
    pub fn new(location: f64, rate: f64) -> Self {
        JumpAtom { location, rate }
    }
}

type DensityFn = dyn Fn(f64) -> f64 + Send + Sync;

/// A Lévy density `y -> lambda(y)` together with the declared exponential
/// integrability `p` of its upper tail and the threshold below which jumps
/// are replaced by a matched Gaussian during simulation.
#[derive(Clone)]
pub struct JumpDensity {
    name: String,
    density: Arc<DensityFn>,
    integrability: f64,
    small_jump_threshold: f64,
    tables: Arc<OnceLock<std::result::Result<Arc<DensityTables>, Error>>>,
}

impl fmt::Debug for JumpDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JumpDensity")
            .field("name", &self.name)
            .field("integrability", &self.integrability)
            .field("small_jump_threshold", &self.small_jump_threshold)
            .finish()
    }
}

impl JumpDensity {
    pub fn new<F>(name: impl Into<String>, density: F, integrability: f64, small_jump_threshold: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        JumpDensity {
            name: name.into(),
            density: Arc::new(density),
            integrability,
            small_jump_threshold,
            tables: Arc::new(OnceLock::new()),
        }
    }

    /// Double-exponential (Kou) density: `rate_neg * decay_neg * e^{decay_neg y}`
    /// on `y < 0` and `rate_pos * decay_pos * e^{-decay_pos y}` on `y > 0`.
    pub fn kou(rate_neg: f64, decay_neg: f64, rate_pos: f64, decay_pos: f64, integrability: f64) -> Self {
        let name = format!("kou(rate_neg={rate_neg}, decay_neg={decay_neg}, rate_pos={rate_pos}, decay_pos={decay_pos})");
        JumpDensity::new(
            name,
            move |y| {
                if y < 0.0 {
                    rate_neg * decay_neg * (decay_neg * y).exp()
                } else if y > 0.0 {
                    rate_pos * decay_pos * (-decay_pos * y).exp()
                } else {
                    0.0
                }
            },
            integrability,
            DEFAULT_SMALL_JUMP_THRESHOLD,
        )
    }

    /// Tempered-stable (CGMY-type) density `c e^{-g|y|} / |y|^{1+index}` on
    /// the negative half-line and `c_pos e^{-m y} / y^{1+index}` on the positive one.
    pub fn tempered_stable(c_neg: f64, g: f64, c_pos: f64, m: f64, index: f64, integrability: f64) -> Self {
        let name = format!("tempered_stable(c_neg={c_neg}, g={g}, c_pos={c_pos}, m={m}, index={index})");
        JumpDensity::new(
            name,
            move |y| {
                if y < 0.0 {
                    c_neg * (g * y).exp() / (-y).powf(1.0 + index)
                } else if y > 0.0 {
                    c_pos * (-m * y).exp() / y.powf(1.0 + index)
                } else {
                    0.0
                }
            },
            integrability,
            DEFAULT_SMALL_JUMP_THRESHOLD,
        )
    }

    pub fn with_small_jump_threshold(mut self, delta: f64) -> Self {
        self.small_jump_threshold = delta;
        self.tables = Arc::new(OnceLock::new());
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn integrability(&self) -> f64 {
        self.integrability
    }

    pub fn small_jump_threshold(&self) -> f64 {
        self.small_jump_threshold
    }

    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        (self.density)(y)
    }

    /// Mass of `(-inf, 0)`; may be infinite for infinite-activity densities.
    fn negative_mass(&self) -> Result<f64> {
        let far = integrate_from_neg_inf(|y| self.eval(y), -1.0)?;
        let near = integrate(|y| self.eval(y), -1.0, 0.0).unwrap_or(f64::INFINITY);
        Ok(far + near)
    }

    fn tables(&self) -> Result<Arc<DensityTables>> {
        self.tables
            .get_or_init(|| DensityTables::build(self).map(Arc::new))
            .clone()
    }
}

#[derive(Debug, Clone)]
pub enum JumpMeasure {
    FiniteAtoms(Vec<JumpAtom>),
    Density(JumpDensity),
}

impl JumpMeasure {
    pub fn none() -> Self {
        JumpMeasure::FiniteAtoms(Vec::new())
    }
}

/// Characteristics `(b, sigma^2, Lambda)` of a Lévy process.
#[derive(Debug, Clone)]
pub struct LevyTriplet {
    pub drift: f64,
    pub gaussian_var: f64,
    pub jumps: JumpMeasure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftSign {
    Negative,
    Zero,
    Positive,
}

impl LevyTriplet {
    pub fn new(drift: f64, gaussian_var: f64, jumps: JumpMeasure) -> Self {
        LevyTriplet { drift, gaussian_var, jumps }
    }

    pub fn atoms(drift: f64, gaussian_var: f64, atoms: Vec<JumpAtom>) -> Self {
        LevyTriplet::new(drift, gaussian_var, JumpMeasure::FiniteAtoms(atoms))
    }

    /// The built-in test model: `b = -3`, `sigma^2 = 2`, one atom at `-ln 2`
    /// with unit rate. Every jump halves the size, so each child is born
    /// with half of its parent's current size.
    pub fn reference_dyadic() -> Self {
        LevyTriplet::atoms(-3.0, 2.0, vec![JumpAtom::new(-std::f64::consts::LN_2, 1.0)])
    }

    /// Upper end of the domain of the Laplace exponent, when finite.
    pub fn integrability(&self) -> Option<f64> {
        match &self.jumps {
            JumpMeasure::FiniteAtoms(_) => None,
            JumpMeasure::Density(d) => Some(d.integrability),
        }
    }

    /// Checks that the triplet defines a Lévy process: finite parameters,
    /// positive rates, and for densities an integrable tail and small-jump part.
    pub fn validate_process(&self) -> Result<()> {
        if !self.drift.is_finite() {
            return Err(Error::InvalidModel("drift must be finite".into()));
        }
        if !(self.gaussian_var.is_finite() && self.gaussian_var >= 0.0) {
            return Err(Error::InvalidModel("gaussian variance must be finite and >= 0".into()));
        }
        match &self.jumps {
            JumpMeasure::FiniteAtoms(atoms) => {
                for a in atoms {
                    if !(a.location.is_finite() && a.location != 0.0) {
                        return Err(Error::InvalidModel(format!("atom location {} must be finite and nonzero", a.location)));
                    }
                    if !(a.rate.is_finite() && a.rate > 0.0) {
                        return Err(Error::InvalidModel(format!("atom rate {} must be finite and positive", a.rate)));
                    }
                }
            }
            JumpMeasure::Density(d) => {
                if !(d.integrability.is_finite() && d.integrability > 0.0) {
                    return Err(Error::InvalidModel("declared integrability p must be positive".into()));
                }
                if !(d.small_jump_threshold > 0.0 && d.small_jump_threshold < 1.0) {
                    return Err(Error::InvalidModel("small-jump threshold must lie in (0, 1)".into()));
                }
                let p = d.integrability;
                integrate_to_inf(|y| (p * y).exp() * d.eval(y), 1.0).map_err(|_| {
                    Error::InvalidModel(format!("upper tail is not integrable against e^(p y) with p = {p}"))
                })?;
                integrate_from_neg_inf(|y| d.eval(y), -1.0)
                    .map_err(|_| Error::InvalidModel("lower tail of the density is not integrable".into()))?;
                integrate(|y| y * y * d.eval(y), -1.0, 0.0)
                    .and_then(|a| integrate(|y| y * y * d.eval(y), 0.0, 1.0).map(|b| a + b))
                    .map_err(|_| Error::InvalidModel("density does not integrate y^2 near 0".into()))?;
            }
        }
        Ok(())
    }

    /// Checks the standing assumptions on a cell process: a valid Lévy
    /// process with a nontrivial negative jump part (cells need children)
    /// whose paths are not monotonically decreasing.
    pub fn validate(&self) -> Result<()> {
        self.validate_process()?;
        let (negative_mass, has_positive) = match &self.jumps {
            JumpMeasure::FiniteAtoms(atoms) => {
                let neg: f64 = atoms.iter().filter(|a| a.location < 0.0).map(|a| a.rate).sum();
                (neg, atoms.iter().any(|a| a.location > 0.0))
            }
            JumpMeasure::Density(d) => {
                let neg = d.negative_mass().unwrap_or(0.0);
                let pos = integrate_to_inf(|y| d.eval(y), 1.0).unwrap_or(0.0)
                    + integrate(|y| d.eval(y), 0.0, 1.0).unwrap_or(f64::INFINITY);
                (neg, pos > 0.0)
            }
        };
        if !(negative_mass > 0.0) {
            return Err(Error::InvalidModel("jump measure puts no mass on (-inf, 0): cells would have no children".into()));
        }
        if self.gaussian_var == 0.0 && !has_positive && self.bounded_variation_drift()? <= 0.0 {
            return Err(Error::InvalidModel(
                "process is the negative of a subordinator (pure fragmentation); not supported".into(),
            ));
        }
        Ok(())
    }

    /// Drift in the bounded-variation representation, or +inf for
    /// infinite-variation densities.
    fn bounded_variation_drift(&self) -> Result<f64> {
        match &self.jumps {
            JumpMeasure::FiniteAtoms(_) => Ok(self.drift),
            JumpMeasure::Density(d) => match integrate(|y| -y * d.eval(y), -1.0, 0.0) {
                Ok(v) if v.is_finite() => Ok(self.drift + v),
                _ => Ok(f64::INFINITY),
            },
        }
    }

    fn check_domain(&self, q: f64) -> Result<()> {
        if !q.is_finite() {
            return Err(Error::Domain { q, detail: "q must be finite".into() });
        }
        if let JumpMeasure::Density(d) = &self.jumps {
            if q < 0.0 || q > d.integrability {
                return Err(Error::Domain {
                    q,
                    detail: format!("density exponent is evaluated on [0, {}]", d.integrability),
                });
            }
        }
        Ok(())
    }

    /// `psi(q) = log E exp(q xi(1))`.
    pub fn laplace_exponent(&self, q: f64) -> Result<f64> {
        self.check_domain(q)?;
        if q == 0.0 {
            return Ok(0.0);
        }
        let gauss = self.drift * q + 0.5 * self.gaussian_var * q * q;
        let jump = match &self.jumps {
            JumpMeasure::FiniteAtoms(atoms) => atoms.iter().map(|a| a.rate * (q * a.location).exp_m1()).sum(),
            JumpMeasure::Density(d) => {
                let f = |y: f64| d.eval(y);
                let lower = integrate_from_neg_inf(|y| (q * y).exp_m1() * f(y), -1.0)?;
                let small_neg = integrate(|y| expm1_minus_x(q * y) * f(y), -1.0, 0.0)?;
                let small_pos = integrate(|y| expm1_minus_x(q * y) * f(y), 0.0, 1.0)?;
                let upper = integrate_to_inf(|y| (q * y).exp_m1() * f(y), 1.0)?;
                lower + small_neg + small_pos + upper
            }
        };
        Ok(gauss + jump)
    }

    /// `psi'(q)`.
    pub fn laplace_exponent_derivative(&self, q: f64) -> Result<f64> {
        self.check_domain(q)?;
        let gauss = self.drift + self.gaussian_var * q;
        let jump = match &self.jumps {
            JumpMeasure::FiniteAtoms(atoms) => atoms.iter().map(|a| a.rate * a.location * (q * a.location).exp()).sum(),
            JumpMeasure::Density(d) => {
                let f = |y: f64| d.eval(y);
                let lower = integrate_from_neg_inf(|y| y * (q * y).exp() * f(y), -1.0)?;
                let small_neg = integrate(|y| y * (q * y).exp_m1() * f(y), -1.0, 0.0)?;
                let small_pos = integrate(|y| y * (q * y).exp_m1() * f(y), 0.0, 1.0)?;
                let upper = integrate_to_inf(|y| y * (q * y).exp() * f(y), 1.0)?;
                lower + small_neg + small_pos + upper
            }
        };
        Ok(gauss + jump)
    }

    /// Sign of `psi'(0+)`; `Negative` means `xi -> -inf` so the associated
    /// self-similar process is absorbed at 0.
    pub fn drift_sign(&self) -> Result<DriftSign> {
        let slope = self.laplace_exponent_derivative(0.0)?;
        let scale = self.drift.abs().max(1.0);
        Ok(if slope.abs() <= 1e-12 * scale {
            DriftSign::Zero
        } else if slope < 0.0 {
            DriftSign::Negative
        } else {
            DriftSign::Positive
        })
    }
}

/// A sampled path on a jump-adapted grid. Jump epochs appear twice (pre- and
/// post-jump value at the same time), and each jump mark equals the stored
/// value discontinuity bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathGrid {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `(index of the post-jump node, signed jump size)`.
    pub jump_marks: Vec<(usize, f64)>,
}

impl PathGrid {
    pub fn from_nodes(nodes: &[PathNode]) -> Result<PathGrid> {
        let first = nodes.first().ok_or_else(|| Error::InvalidParameter("empty path".into()))?;
        if first.time != 0.0 {
            return Err(Error::InvalidParameter("paths start at time 0".into()));
        }
        let mut grid = PathGrid { times: Vec::with_capacity(nodes.len()), values: Vec::with_capacity(nodes.len()), jump_marks: Vec::new() };
        for (i, n) in nodes.iter().enumerate() {
            if i > 0 && n.time < nodes[i - 1].time {
                return Err(Error::InvalidParameter("path times must be nondecreasing".into()));
            }
            if let Some(j) = n.jump {
                if i == 0 || nodes[i - 1].time != n.time || n.value - nodes[i - 1].value != j {
                    return Err(Error::InvalidParameter(format!("jump mark at node {i} does not match the path")));
                }
                grid.jump_marks.push((i, j));
            }
            grid.times.push(n.time);
            grid.values.push(n.value);
        }
        Ok(grid)
    }

    /// Builds a path from node times and values; a repeated time marks a jump.
    pub fn from_points(times: Vec<f64>, values: Vec<f64>) -> Result<PathGrid> {
        if times.len() != values.len() {
            return Err(Error::InvalidParameter("times and values differ in length".into()));
        }
        let nodes: Vec<PathNode> = times
            .iter()
            .zip(&values)
            .enumerate()
            .map(|(i, (&t, &v))| {
                let jump = (i > 0 && times[i - 1] == t).then(|| v - values[i - 1]);
                PathNode { time: t, value: v, jump }
            })
            .collect();
        PathGrid::from_nodes(&nodes)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = PathNode> + '_ {
        let mut marks = self.jump_marks.iter().peekable();
        (0..self.times.len()).map(move |i| {
            let jump = match marks.peek() {
                Some(&&(idx, size)) if idx == i => {
                    marks.next();
                    Some(size)
                }
                _ => None,
            };
            PathNode { time: self.times[i], value: self.values[i], jump }
        })
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathNode {
    pub time: f64,
    pub value: f64,
    /// Signed jump size when this node is the post-jump value of a jump.
    pub jump: Option<f64>,
}

/// Inverse-CDF tables for the `|y| >= delta` part of a density, plus the
/// drift and variance corrections of the small-jump Gaussian approximation.
#[derive(Debug)]
struct DensityTables {
    rate: f64,
    cum: Vec<f64>,
    locations: Vec<f64>,
    compensating_drift: f64,
    small_jump_var: f64,
}

impl DensityTables {
    const CELLS: usize = 1024;

    fn build(d: &JumpDensity) -> Result<DensityTables> {
        let delta = d.small_jump_threshold;
        let mut locations = Vec::new();
        let mut cum = Vec::new();
        let mut acc = 0.0;
        for side in [-1.0f64, 1.0] {
            let g = |u: f64| d.eval(side * u);
            let total = integrate_to_inf(g, delta)?;
            if total <= 0.0 {
                continue;
            }
            let mut reach = 1.0f64.max(2.0 * delta);
            while integrate_to_inf(g, reach)? > 1e-14 * total && reach < 1e6 {
                reach *= 2.0;
            }
            let grid = crate::stats::log_space(delta, reach, Self::CELLS + 1);
            let mut side_nodes: Vec<(f64, f64)> = Vec::with_capacity(grid.len());
            let mut side_acc = 0.0;
            side_nodes.push((grid[0], 0.0));
            for w in grid.windows(2) {
                side_acc += integrate(g, w[0], w[1])?;
                side_nodes.push((w[1], side_acc));
            }
            if side < 0.0 {
                // store in increasing location order: far negative first
                let n = side_nodes.len();
                let top = side_nodes[n - 1].1;
                for k in (0..n).rev() {
                    locations.push(-side_nodes[k].0);
                    cum.push(acc + (top - side_nodes[k].1));
                }
                acc += top;
            } else {
                for (u, c) in side_nodes {
                    locations.push(u);
                    cum.push(acc + c);
                }
                acc += side_acc;
            }
        }
        let compensating_drift = integrate(|y| y * d.eval(y), -1.0, -delta)? + integrate(|y| y * d.eval(y), delta, 1.0)?;
        let small_jump_var = integrate(|y| y * y * d.eval(y), -delta, 0.0)? + integrate(|y| y * y * d.eval(y), 0.0, delta)?;
        Ok(DensityTables { rate: acc, cum, locations, compensating_drift, small_jump_var })
    }

    fn sample(&self, rng: &mut SimRng) -> f64 {
        let target = rng.random::<f64>() * self.rate;
        let k = self.cum.partition_point(|&c| c < target).clamp(1, self.cum.len() - 1);
        let (c0, c1) = (self.cum[k - 1], self.cum[k]);
        let (y0, y1) = (self.locations[k - 1], self.locations[k]);
        if c1 > c0 && (y0 < 0.0) == (y1 < 0.0) {
            y0 + (y1 - y0) * (target - c0) / (c1 - c0)
        } else {
            y1
        }
    }
}

#[derive(Debug, Clone)]
enum JumpSource {
    Atoms { cum: Vec<f64>, locations: Vec<f64>, rate: f64 },
    Table(Arc<DensityTables>),
}

impl JumpSource {
    fn rate(&self) -> f64 {
        match self {
            JumpSource::Atoms { rate, .. } => *rate,
            JumpSource::Table(t) => t.rate,
        }
    }

    fn sample(&self, rng: &mut SimRng) -> f64 {
        match self {
            JumpSource::Atoms { cum, locations, rate } => {
                if locations.len() == 1 {
                    return locations[0];
                }
                let u = rng.random::<f64>() * rate;
                let k = cum.partition_point(|&c| c <= u).min(locations.len() - 1);
                locations[k]
            }
            JumpSource::Table(t) => t.sample(rng),
        }
    }
}

/// Immutable simulation parameters for one triplet and mesh; cheap to share
/// between threads and to spawn seeded samplers from.
#[derive(Debug, Clone)]
pub struct PathDriver {
    drift: f64,
    vol: f64,
    jumps: JumpSource,
    max_step: f64,
}

impl PathDriver {
    pub fn new(triplet: &LevyTriplet, max_step: f64) -> Result<PathDriver> {
        if !(max_step.is_finite() && max_step > 0.0) {
            return Err(Error::InvalidParameter(format!("max_step must be positive, got {max_step}")));
        }
        let (drift, var, jumps) = match &triplet.jumps {
            JumpMeasure::FiniteAtoms(atoms) => {
                let mut cum = Vec::with_capacity(atoms.len());
                let mut acc = 0.0;
                for a in atoms {
                    acc += a.rate;
                    cum.push(acc);
                }
                let locations = atoms.iter().map(|a| a.location).collect();
                (triplet.drift, triplet.gaussian_var, JumpSource::Atoms { cum, locations, rate: acc })
            }
            JumpMeasure::Density(d) => {
                let t = d.tables()?;
                (triplet.drift - t.compensating_drift, triplet.gaussian_var + t.small_jump_var, JumpSource::Table(t))
            }
        };
        Ok(PathDriver { drift, vol: var.sqrt(), jumps, max_step })
    }

    pub fn max_step(&self) -> f64 {
        self.max_step
    }

    pub fn sampler(&self, seed: u64) -> PathSampler<'_> {
        let mut rng = rng_from_seed(seed);
        let rate = self.jumps.rate();
        let next_jump = if rate > 0.0 { rng.sample::<f64, _>(Exp1) / rate } else { f64::INFINITY };
        PathSampler { driver: self, rng, t: 0.0, w: 0.0, mesh_index: 0, next_jump, pending: None, started: false }
    }
}

/// Streaming, unbounded path generator. Nodes are emitted in time order and
/// the random stream is consumed in the same order, so any prefix of the
/// stream is independent of how far the path is eventually extended.
pub struct PathSampler<'a> {
    driver: &'a PathDriver,
    rng: SimRng,
    t: f64,
    w: f64,
    mesh_index: u64,
    next_jump: f64,
    pending: Option<PathNode>,
    started: bool,
}

impl PathSampler<'_> {
    #[inline]
    fn value(&self) -> f64 {
        self.driver.drift * self.t + self.w
    }

    #[inline]
    fn diffuse_to(&mut self, t_new: f64) {
        let dt = t_new - self.t;
        if self.driver.vol > 0.0 && dt > 0.0 {
            let z: f64 = self.rng.sample(StandardNormal);
            self.w += self.driver.vol * dt.sqrt() * z;
        }
        self.t = t_new;
    }

    /// Next node, never beyond `cap`; returns `None` once `cap` has been emitted.
    pub fn next_node_capped(&mut self, cap: f64) -> Option<PathNode> {
        if !self.started {
            self.started = true;
            return Some(PathNode { time: 0.0, value: 0.0, jump: None });
        }
        if let Some(node) = self.pending.take() {
            return Some(node);
        }
        if self.t >= cap {
            return None;
        }
        let next_mesh = (self.mesh_index + 1) as f64 * self.driver.max_step;
        if self.next_jump <= next_mesh && self.next_jump <= cap {
            let tj = self.next_jump;
            self.diffuse_to(tj);
            let before = self.value();
            let y = self.driver.jumps.sample(&mut self.rng);
            self.w += y;
            let after = self.value();
            self.pending = Some(PathNode { time: tj, value: after, jump: Some(after - before) });
            let rate = self.driver.jumps.rate();
            self.next_jump = tj + self.rng.sample::<f64, _>(Exp1) / rate;
            if next_mesh == tj {
                self.mesh_index += 1;
            }
            return Some(PathNode { time: tj, value: before, jump: None });
        }
        if next_mesh <= cap {
            self.mesh_index += 1;
            self.diffuse_to(next_mesh);
        } else {
            self.diffuse_to(cap);
        }
        Some(PathNode { time: self.t, value: self.value(), jump: None })
    }

    pub fn next_node(&mut self) -> PathNode {
        self.next_node_capped(f64::INFINITY).expect("unbounded sampler always yields")
    }
}

/// Samples `xi` on `[0, horizon]` with a jump-adapted grid of mesh at most
/// `max_step`. Deterministic given the seed.
pub fn sample_path(triplet: &LevyTriplet, horizon: f64, max_step: f64, seed: u64) -> Result<PathGrid> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    let driver = PathDriver::new(triplet, max_step)?;
    let mut sampler = driver.sampler(seed);
    let mut nodes = Vec::new();
    while let Some(n) = sampler.next_node_capped(horizon) {
        nodes.push(n);
    }
    PathGrid::from_nodes(&nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn reference_exponent_closed_form() {
        let t = LevyTriplet::reference_dyadic();
        assert!((t.laplace_exponent(1.0).unwrap() + 2.5).abs() < 1e-14);
        assert_eq!(t.laplace_exponent(0.0).unwrap(), 0.0);
        let g = LevyTriplet::atoms(0.0, 2.0, vec![]);
        assert_eq!(g.laplace_exponent(1.0).unwrap(), 1.0);
    }

    #[test]
    fn drift_signs() {
        let t = LevyTriplet::reference_dyadic();
        assert_eq!(t.drift_sign().unwrap(), DriftSign::Negative);
        assert!((t.laplace_exponent_derivative(0.0).unwrap() + 3.0 + LN_2).abs() < 1e-14);
        assert_eq!(LevyTriplet::atoms(0.0, 2.0, vec![]).drift_sign().unwrap(), DriftSign::Zero);
        let up = LevyTriplet::atoms(1.0, 0.0, vec![JumpAtom::new(1.0, 1.0)]);
        assert_eq!(up.drift_sign().unwrap(), DriftSign::Positive);
    }

    #[test]
    fn validation_rejects_bad_models() {
        assert!(LevyTriplet::reference_dyadic().validate().is_ok());
        assert!(LevyTriplet::atoms(0.0, 2.0, vec![]).validate().is_err());
        assert!(LevyTriplet::atoms(0.0, -1.0, vec![JumpAtom::new(-1.0, 1.0)]).validate().is_err());
        // negative of a compound Poisson subordinator
        let sub = LevyTriplet::atoms(-1.0, 0.0, vec![JumpAtom::new(-1.0, 1.0)]);
        assert!(matches!(sub.validate(), Err(Error::InvalidModel(_))));
        let grow = LevyTriplet::atoms(0.5, 0.0, vec![JumpAtom::new(-1.0, 1.0)]);
        assert!(grow.validate().is_ok());
    }

    #[test]
    fn pure_drift_path_is_a_line() {
        let t = LevyTriplet::atoms(-3.0, 0.0, vec![]);
        let p = sample_path(&t, 1.0, 0.01, 1).unwrap();
        assert!(p.jump_marks.is_empty());
        assert_eq!(p.times[0], 0.0);
        assert_eq!(*p.times.last().unwrap(), 1.0);
        for (t, v) in p.times.iter().zip(&p.values) {
            assert!((v + 3.0 * t).abs() < 1e-12);
        }
        assert_eq!(*p.values.last().unwrap(), -3.0);
    }

    #[test]
    fn sampling_is_deterministic_and_marks_are_exact() {
        let t = LevyTriplet::reference_dyadic();
        let a = sample_path(&t, 5.0, 0.01, 42).unwrap();
        let b = sample_path(&t, 5.0, 0.01, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_path(&t, 5.0, 0.01, 43).unwrap();
        assert_ne!(a, c);
        for &(i, j) in &a.jump_marks {
            assert_eq!(a.times[i], a.times[i - 1]);
            assert_eq!(a.values[i] - a.values[i - 1], j);
            assert!(j < 0.0);
        }
        assert!(a.times.windows(2).all(|w| w[0] <= w[1]));
        assert!(a.times.windows(2).all(|w| w[1] - w[0] <= 0.01 + 1e-15));
    }

    #[test]
    fn streaming_prefix_is_stable() {
        let t = LevyTriplet::reference_dyadic();
        let d = PathDriver::new(&t, 0.05).unwrap();
        let mut s1 = d.sampler(9);
        let mut s2 = d.sampler(9);
        let short: Vec<PathNode> = (0..200).map(|_| s1.next_node()).collect();
        let long: Vec<PathNode> = (0..400).map(|_| s2.next_node()).collect();
        assert_eq!(&long[..200], &short[..]);
    }

    #[test]
    fn kou_density_matches_closed_form_exponent() {
        // psi for Kou in compensated form: closed form minus the compensator term
        let (ln, bn, lp, bp) = (1.5, 3.0, 0.5, 6.0);
        let d = JumpDensity::kou(ln, bn, lp, bp, 5.0);
        let t = LevyTriplet::new(-1.0, 0.3, JumpMeasure::Density(d.clone()));
        t.validate().unwrap();
        let q = 1.7;
        let comp = integrate(|y| y * d.eval(y), -1.0, 0.0).unwrap() + integrate(|y| y * d.eval(y), 0.0, 1.0).unwrap();
        let closed = -q + 0.15 * q * q + ln * (bn / (bn + q) - 1.0) + lp * (bp / (bp - q) - 1.0) - q * comp;
        assert!((t.laplace_exponent(q).unwrap() - closed).abs() < 1e-9);
        assert!(matches!(t.laplace_exponent(5.5), Err(Error::Domain { .. })));
    }
}
