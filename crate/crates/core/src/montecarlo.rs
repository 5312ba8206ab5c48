//! Seeded path simulation, exit-time and supremum estimators.
//!
//! Every batch of paths draws from its own ChaCha8 substream, derived from
//! `(seed, stratum, batch)`; batches are reduced in index order so results do
//! not depend on the thread count.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::OpenSet1D;
use crate::levy::{LevyModel, ModelKind};
use crate::special::{erfc, stable_constant};

/// Paths per batch (one substream each).
const BATCH: usize = 256;
/// Most nested step levels a survival run tracks.
pub const MAX_LEVELS: usize = 4;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A reproducible random substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream labelled by `tag`; distinct tags give distinct streams.
    pub fn derive(&self, tag: u64) -> Self {
        Self { seed: self.seed, stream_id: splitmix64(self.stream_id ^ splitmix64(tag.wrapping_add(1))) }
    }
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
    pub streams: u64,
}

impl McEstimate {
    /// A value known without sampling error.
    pub fn exact(mean: f64) -> Self {
        Self { mean, stderr: 0.0, n: 0, seed: 0, streams: 0 }
    }

    pub fn scaled(self, k: f64) -> Self {
        Self { mean: self.mean * k, stderr: self.stderr * k.abs(), ..self }
    }

    pub fn shifted(self, c: f64) -> Self {
        Self { mean: self.mean + c, ..self }
    }

    /// `|self - other| ≤ k·(σ₁² + σ₂²)^{1/2}` (plus an absolute slack).
    pub fn agrees_with(&self, value: f64, stderr: f64, k: f64, slack: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr.hypot(stderr) + slack
    }
}

/// Running first and second moments.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sumsq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sumsq += x * x;
    }

    pub fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sumsq += o.sumsq;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sumsq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }

    fn estimate(&self, stream: RngStream, streams: u64) -> McEstimate {
        McEstimate { mean: self.mean(), stderr: self.stderr(), n: self.n, seed: stream.seed, streams }
    }
}

/// One draw from the symmetric α-stable law with `E e^{iξX} = e^{-t|ξ|^α}`
/// (Chambers–Mallows–Stuck). α = 2 is the Gaussian with variance `2t`.
pub fn sample_stable_increment<R: Rng + ?Sized>(alpha: f64, t: f64, rng: &mut R) -> f64 {
    if alpha == 2.0 {
        let z: f64 = StandardNormal.sample(rng);
        return (2.0 * t).sqrt() * z;
    }
    let v = PI * (rng.random::<f64>() - 0.5);
    if alpha == 1.0 {
        return t * v.tan();
    }
    let w: f64 = Exp1.sample(rng);
    let x = (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha);
    t.powf(1.0 / alpha) * x
}

/// Positive β-stable variable with `E e^{-λS} = e^{-λ^β}` (Kanter).
fn sample_positive_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    let v: f64 = rng.random::<f64>();
    let w: f64 = Exp1.sample(rng);
    let a = (beta * PI * v).sin() / (PI * v).sin().powf(1.0 / beta);
    let b = ((1.0 - beta) * PI * v).sin() / w;
    a * b.powf((1.0 - beta) / beta)
}

/// Jump magnitudes above the compound-Poisson cutoff.
#[derive(Debug, Clone)]
enum JumpSizes {
    /// Density ∝ y^{-1-α} on (ε, 1).
    TruncatedPower { alpha: f64, eps: f64 },
    /// Tabulated two-sided tail `T(r) = ν(|y| > r)`, log-log interpolated,
    /// with a power tail past the last node.
    Table { log_r: Vec<f64>, log_tail: Vec<f64>, alpha: f64 },
}

impl JumpSizes {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let mag = match self {
            JumpSizes::TruncatedPower { alpha, eps } => {
                let lo = eps.powf(-alpha);
                (lo - u * (lo - 1.0)).powf(-1.0 / alpha)
            }
            JumpSizes::Table { log_r, log_tail, alpha } => {
                // Target tail value T = u·T(ε); T decreases along the table.
                let target = log_tail[0] + (1.0 - u).max(1e-300).ln();
                let last = *log_tail.last().unwrap_or(&target);
                if target < last {
                    (log_r.last().copied().unwrap_or(0.0) + (last - target) / alpha).exp()
                } else {
                    let j = log_tail.partition_point(|&v| v > target).clamp(1, log_tail.len() - 1);
                    let (t0, t1) = (log_tail[j - 1], log_tail[j]);
                    let w = if t0 > t1 { (t0 - target) / (t0 - t1) } else { 0.0 };
                    (log_r[j - 1] + w * (log_r[j] - log_r[j - 1])).exp()
                }
            }
        };
        sign * mag
    }
}

/// How increments are produced and how exits are monitored.
#[derive(Debug, Clone)]
enum Dynamics {
    Gaussian,
    Stable { alpha: f64 },
    /// Brownian motion time-changed by a tempered (α/2)-stable subordinator.
    Relativistic { beta: f64, theta: f64 },
    /// Jumps above `eps` exactly (exit checked after each jump), smaller
    /// jumps replaced by a Gaussian of matching variance.
    Compound { rate: f64, small_var: f64, jumps: JumpSizes },
    Drift { gamma: f64 },
}

impl Dynamics {
    fn new(model: &LevyModel, horizon: f64) -> Result<Self> {
        Ok(match model.kind() {
            ModelKind::Brownian => Dynamics::Gaussian,
            ModelKind::Stable { alpha } => Dynamics::Stable { alpha },
            ModelKind::Relativistic { alpha, mass } => {
                Dynamics::Relativistic { beta: 0.5 * alpha, theta: mass.powf(2.0 / alpha) }
            }
            ModelKind::Drift { gamma } => Dynamics::Drift { gamma },
            ModelKind::Truncated { alpha } => {
                let c = stable_constant(1, alpha);
                // About JUMPS_PER_PATH jumps above ε over the horizon.
                let eps = (0.5 * alpha * JUMPS_PER_PATH / (c * horizon) + 1.0).powf(-1.0 / alpha).min(0.5);
                let rate = 2.0 * c * (eps.powf(-alpha) - 1.0) / alpha;
                let small_var = 2.0 * model.jump_moment(2, 0.0, eps);
                Dynamics::Compound { rate, small_var, jumps: JumpSizes::TruncatedPower { alpha, eps } }
            }
            ModelKind::LogPerturbed { alpha, .. } => {
                let target = JUMPS_PER_PATH / horizon;
                let (mut lo, mut hi) = (1e-300f64.ln(), 50.0f64);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if model.tail_mass(mid.exp()) > target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-6 {
                        break;
                    }
                }
                let eps = hi.exp();
                let nodes = 400;
                let top = (eps * 1e12).max(1e6);
                let step = (top / eps).ln() / nodes as f64;
                let log_r: Vec<f64> = (0..=nodes).map(|k| eps.ln() + k as f64 * step).collect();
                let mut tail = vec![0.0; nodes + 1];
                tail[nodes] = model.tail_mass(top);
                for k in (0..nodes).rev() {
                    tail[k] = tail[k + 1] + 2.0 * model.jump_moment(0, log_r[k].exp(), log_r[k + 1].exp());
                }
                if tail[0] <= 0.0 || !tail[0].is_finite() {
                    return Err(Error::Numerical(format!("{model}: jump table has no mass above {eps:e}")));
                }
                let log_tail = tail.iter().map(|v| v.max(1e-300).ln()).collect();
                let small_var = 2.0 * model.jump_moment(2, 0.0, eps);
                Dynamics::Compound { rate: tail[0], small_var, jumps: JumpSizes::Table { log_r, log_tail, alpha } }
            }
        })
    }

    fn continuous(&self) -> bool {
        matches!(self, Dynamics::Gaussian | Dynamics::Drift { .. })
    }

    fn jump_resolved(&self) -> bool {
        matches!(self, Dynamics::Compound { .. })
    }

    /// Exact increment over a time span `dt` (compound models: in law).
    fn draw<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> f64 {
        match self {
            Dynamics::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                (2.0 * dt).sqrt() * z
            }
            Dynamics::Stable { alpha } => sample_stable_increment(*alpha, dt, rng),
            Dynamics::Relativistic { beta, theta } => {
                let u = sample_tempered_subordinator(*beta, *theta, dt, rng);
                let z: f64 = StandardNormal.sample(rng);
                (2.0 * u).sqrt() * z
            }
            Dynamics::Compound { rate, small_var, jumps } => {
                let z: f64 = StandardNormal.sample(rng);
                let mut x = (small_var * dt).sqrt() * z;
                let k = poisson(rate * dt, rng);
                for _ in 0..k {
                    x += jumps.sample(rng);
                }
                x
            }
            Dynamics::Drift { gamma } => gamma * dt,
        }
    }

    /// Advances a compound path by `dt`, checking `outside` after every
    /// jump. Returns the new position and whether an exit was seen.
    fn walk_compound<R: Rng + ?Sized, F: Fn(f64) -> bool>(&self, x: f64, dt: f64, rng: &mut R, outside: &F) -> (f64, bool) {
        let Dynamics::Compound { rate, small_var, jumps } = self else {
            let y = x + self.draw(dt, rng);
            return (y, outside(y));
        };
        let k = poisson(rate * dt, rng);
        if k == 0 {
            let z: f64 = StandardNormal.sample(rng);
            let y = x + (small_var * dt).sqrt() * z;
            return (y, outside(y));
        }
        let mut times: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * dt).collect();
        times.sort_by(|a, b| a.total_cmp(b));
        let mut pos = x;
        let mut last = 0.0;
        let mut exited = false;
        for &s in &times {
            let z: f64 = StandardNormal.sample(rng);
            pos += (small_var * (s - last)).sqrt() * z + jumps.sample(rng);
            last = s;
            exited |= outside(pos);
        }
        let z: f64 = StandardNormal.sample(rng);
        pos += (small_var * (dt - last)).sqrt() * z;
        exited |= outside(pos);
        (pos, exited)
    }
}

const JUMPS_PER_PATH: f64 = 256.0;
const COMPOUND_STEPS: usize = 32;

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    match Poisson::new(mean) {
        Ok(p) => p.sample(rng) as u64,
        Err(_) => 0,
    }
}

/// `U_dt` with `E e^{-λU} = e^{-dt((λ+θ)^β - θ^β)}`: a positive β-stable
/// draw accepted with probability `e^{-θS}`; long spans are split so the
/// acceptance rate stays above `e^{-1}`.
fn sample_tempered_subordinator<R: Rng + ?Sized>(beta: f64, theta: f64, dt: f64, rng: &mut R) -> f64 {
    let mass = theta.powf(beta);
    let pieces = (dt * mass).ceil().max(1.0) as usize;
    let h = dt / pieces as f64;
    let scale = h.powf(1.0 / beta);
    let mut total = 0.0;
    for _ in 0..pieces {
        loop {
            let s = scale * sample_positive_stable(beta, rng);
            if rng.random::<f64>() < (-theta * s).exp() {
                total += s;
                break;
            }
        }
    }
    total
}

/// Exact draws of `X_dt` for a fixed span.
#[derive(Debug, Clone)]
pub struct IncrementSampler {
    dynamics: Dynamics,
    dt: f64,
}

impl IncrementSampler {
    pub fn new(model: &LevyModel, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("increment span must be positive, got {dt}")));
        }
        Ok(Self { dynamics: Dynamics::new(model, dt)?, dt })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.dynamics.draw(self.dt, rng)
    }
}

/// A path start and horizon for one model.
#[derive(Debug, Clone)]
pub struct PathSpec {
    pub model: LevyModel,
    pub horizon: f64,
    pub steps: usize,
    pub start: f64,
}

impl PathSpec {
    pub fn new(model: &LevyModel, horizon: f64, steps: usize, start: f64) -> Result<Self> {
        if !(horizon > 0.0) || steps == 0 {
            return Err(Error::Domain(format!("path needs t > 0 and n ≥ 1, got t = {horizon}, n = {steps}")));
        }
        Ok(Self { model: model.clone(), horizon, steps, start })
    }
}

/// Result of one simulated exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExitOutcome {
    pub exited: bool,
    /// Dyadic bucket `j`: exit time in `(t 2^{-j-1}, t 2^{-j}]`.
    pub exit_bucket: Option<u32>,
}

fn bucket(k: usize, n: usize) -> u32 {
    // exit at time kδ = t k/n.
    let ratio = n as f64 / k as f64;
    ratio.log2().floor().max(0.0) as u32
}

/// Region a path must stay in: the whole set for jump processes, the
/// starting component for continuous ones.
#[derive(Debug, Clone, Copy)]
enum Region<'a> {
    Set(&'a OpenSet1D),
    Component(f64, f64),
}

impl Region<'_> {
    fn outside(&self, x: f64) -> bool {
        match *self {
            Region::Set(s) => !s.contains(x),
            Region::Component(a, b) => !(x > a && x < b),
        }
    }
}

fn region_for<'a>(dynamics: &Dynamics, set: &'a OpenSet1D, x0: f64) -> Region<'a> {
    if dynamics.continuous() {
        let i = set.component_of(x0).expect("start inside the set");
        let (a, b) = set.intervals()[i];
        Region::Component(a, b)
    } else {
        Region::Set(set)
    }
}

/// `P(no crossing of a or b)` for a variance-2 Brownian bridge between `x`
/// and `y` over a step `dt` (single-barrier product).
fn bridge_survival(a: f64, b: f64, x: f64, y: f64, dt: f64) -> f64 {
    let low = 1.0 - (-(x - a) * (y - a) / dt).exp();
    let high = 1.0 - (-(b - x) * (b - y) / dt).exp();
    (low * high).clamp(0.0, 1.0)
}

/// One grid walk from `spec.start`; for Brownian motion a crossing between
/// grid points is accepted with the bridge probability.
pub fn simulate_exit<R: Rng + ?Sized>(spec: &PathSpec, set: &OpenSet1D, rng: &mut R) -> Result<ExitOutcome> {
    if !set.contains(spec.start) {
        return Err(Error::OutsideSet(spec.start));
    }
    let dynamics = Dynamics::new(&spec.model, spec.horizon)?;
    let region = region_for(&dynamics, set, spec.start);
    let n = spec.steps;
    let dt = spec.horizon / n as f64;
    let mut x = spec.start;
    for k in 1..=n {
        let (y, hit) = if dynamics.jump_resolved() {
            dynamics.walk_compound(x, dt, rng, &|p| region.outside(p))
        } else {
            let y = x + dynamics.draw(dt, rng);
            (y, region.outside(y))
        };
        let crossed = hit
            || match (&dynamics, region) {
                (Dynamics::Gaussian, Region::Component(a, b)) => rng.random::<f64>() >= bridge_survival(a, b, x, y, dt),
                _ => false,
            };
        if crossed {
            return Ok(ExitOutcome { exited: true, exit_bucket: Some(bucket(k, n)) });
        }
        x = y;
    }
    Ok(ExitOutcome { exited: false, exit_bucket: None })
}

/// Budget and bias controls for [`survival_probability`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SurvivalConfig {
    /// Total paths over all strata.
    pub paths: usize,
    /// Steps of the finest grid.
    pub steps: usize,
    /// Nested grids `steps / 4^j`, `j < levels`, sharing random numbers.
    pub levels: usize,
    /// Brownian bridge weights between grid points.
    pub bridge: bool,
    /// Allocate paths for the exit-and-return part (the quantity left to
    /// sample once the heat-content deficit is known exactly).
    pub control_variate: bool,
}

impl Default for SurvivalConfig {
    fn default() -> Self {
        Self { paths: 100_000, steps: 4096, levels: 3, bridge: true, control_variate: true }
    }
}

/// Richardson exponent of the grid-monitoring bias, `n^{-θ}`.
///
/// Spitzer's identity gives the discrete maximum of a stable walk exactly:
/// `E max_{k≤n} S_{k/n} = E X₁⁺ (α + ζ(1-1/α) n^{-1/α} + n^{-1}/2 + …)`,
/// so the leading exponent is `min(1/α, 1)`.
pub fn grid_bias_exponent(model: &LevyModel) -> f64 {
    match model.kind() {
        ModelKind::Brownian => 0.5,
        ModelKind::Drift { .. } => 1.0,
        _ => model.rv_index().map_or(1.0, |a| (1.0 / a).min(1.0)),
    }
}

/// Equal-distance band of starting points.
#[derive(Debug, Clone, Serialize)]
pub struct Stratum {
    /// Distance-to-boundary band `[lo, hi)`.
    pub lo: f64,
    pub hi: f64,
    pub pieces: Vec<(f64, f64)>,
    pub measure: f64,
}

impl Stratum {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut u = rng.random::<f64>() * self.measure;
        for &(a, b) in &self.pieces {
            let len = b - a;
            if u < len {
                return (a + u).clamp(a, b);
            }
            u -= len;
        }
        let (a, b) = *self.pieces.last().expect("non-empty stratum");
        0.5 * (a + b)
    }
}

/// Geometric distance bands `[0, ℓ/8), [ℓ/8, ℓ/4), …` up to the half
/// length of the longest component.
pub fn distance_strata(set: &OpenSet1D, scale: f64) -> Vec<Stratum> {
    let half = set.intervals().iter().map(|&(a, b)| 0.5 * (b - a)).fold(0.0, f64::max);
    let mut edges = vec![0.0];
    let mut d = scale / 8.0;
    while d < half {
        edges.push(d);
        d *= 2.0;
    }
    edges.push(half);
    let mut out = Vec::new();
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mut pieces = Vec::new();
        for &(a, b) in set.intervals() {
            let h = 0.5 * (b - a);
            if lo >= h {
                continue;
            }
            let top = hi.min(h);
            pieces.push((a + lo, a + top));
            pieces.push((b - top, b - lo));
        }
        pieces.retain(|&(a, b)| b > a);
        let measure: f64 = pieces.iter().map(|&(a, b)| b - a).sum();
        if measure > 0.0 {
            out.push(Stratum { lo, hi, pieces, measure });
        }
    }
    out
}

/// Per-stratum summary.
#[derive(Debug, Clone, Serialize)]
pub struct StratumReport {
    pub lo: f64,
    pub hi: f64,
    pub measure: f64,
    pub paths: u64,
    /// Survival probability on the finest grid.
    pub survival: f64,
    pub stderr: f64,
    /// Exit-and-return frequency on the finest grid.
    pub returned: f64,
    pub returned_stderr: f64,
}

/// Output of [`survival_probability`].
#[derive(Debug, Clone, Serialize)]
pub struct SurvivalEstimate {
    pub t: f64,
    pub measure: f64,
    pub steps: Vec<usize>,
    pub theta: f64,
    /// `|Ω| - Q` per grid, coarse to fine.
    pub deficit_by_level: Vec<McEstimate>,
    /// `∫ E[1{exit} - 1{X_t ∉ Ω}]` per grid: the exit-and-return part.
    pub return_by_level: Vec<McEstimate>,
    /// Richardson-extrapolated `|Ω| - Q` (finest grid alone if one level).
    pub deficit: McEstimate,
    /// Richardson-extrapolated return part.
    pub return_part: McEstimate,
    /// `∫ P_x(X_t ∉ Ω) dx`, the heat-content deficit from the same paths.
    pub terminal: McEstimate,
    pub strata: Vec<StratumReport>,
}

impl SurvivalEstimate {
    /// `Q_Ω(t)`.
    pub fn survival(&self) -> McEstimate {
        self.deficit.scaled(-1.0).shifted(self.measure)
    }

    /// `Q_Ω(t)` on the finest grid, without extrapolation.
    pub fn survival_finest(&self) -> McEstimate {
        self.deficit_by_level.last().expect("at least one level").scaled(-1.0).shifted(self.measure)
    }

    /// Difference of the extrapolated values from the two coarser and the
    /// two finer grids, and its standard error; `None` with fewer than three
    /// levels.
    pub fn richardson_spread(&self) -> Option<(f64, f64)> {
        richardson_spread(&self.deficit_by_level, &self.steps, self.theta)
    }
}

fn richardson_spread(levels: &[McEstimate], steps: &[usize], theta: f64) -> Option<(f64, f64)> {
    if levels.len() < 3 {
        return None;
    }
    let n = levels.len();
    let ex = |c: &McEstimate, f: &McEstimate, nc: usize, nf: usize| {
        let q = (nf as f64 / nc as f64).powf(theta);
        (q * f.mean - c.mean) / (q - 1.0)
    };
    let a = ex(&levels[n - 3], &levels[n - 2], steps[n - 3], steps[n - 2]);
    let b = ex(&levels[n - 2], &levels[n - 1], steps[n - 2], steps[n - 1]);
    Some((b - a, levels[n - 1].stderr * 3.0))
}

/// Per-path tallies for one stratum.
#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    exit: [Moments; MAX_LEVELS],
    ret: [Moments; MAX_LEVELS],
    rich: Moments,
    rich_ret: Moments,
    terminal: Moments,
}

impl Tally {
    fn merge(&mut self, o: &Tally) {
        for j in 0..MAX_LEVELS {
            self.exit[j].merge(&o.exit[j]);
            self.ret[j].merge(&o.ret[j]);
        }
        self.rich.merge(&o.rich);
        self.rich_ret.merge(&o.rich_ret);
        self.terminal.merge(&o.terminal);
    }
}

/// Rough exit probability from distance `d`, used only for allocation.
fn exit_proxy(model: &LevyModel, t: f64, d: f64) -> f64 {
    match model.kind() {
        ModelKind::Brownian => erfc(d / (2.0 * t.sqrt())),
        ModelKind::Drift { gamma } => {
            if d < gamma.abs() * t {
                1.0
            } else {
                0.0
            }
        }
        _ => (t * model.psi(1.0 / d)).min(1.0),
    }
}

/// Neyman allocation of `total` paths, at least `floor` per stratum.
fn allocate(weights: &[f64], total: usize, floor: usize) -> Vec<usize> {
    let k = weights.len();
    let base = floor.min(total / k.max(1)).max(if total >= 2 * k { 2 } else { 0 });
    let spare = total.saturating_sub(base * k);
    let sum: f64 = weights.iter().sum();
    weights
        .iter()
        .map(|&w| base + if sum > 0.0 { (spare as f64 * w / sum).round() as usize } else { spare / k })
        .collect()
}

/// `Q_Ω(t) = ∫_Ω P_x(τ_Ω > t) dx` by stratified grid walks.
///
/// Starting points are stratified by distance to `∂Ω`; paths are allotted
/// by a Neyman rule on the exit-and-return indicator, which carries the
/// variance once `|Ω| - H_Ω(t)` is known exactly. Nested coarser grids reuse
/// the fine increments and feed a Richardson step with exponent
/// [`grid_bias_exponent`].
pub fn survival_probability(
    model: &LevyModel,
    set: &OpenSet1D,
    t: f64,
    config: &SurvivalConfig,
    stream: RngStream,
) -> Result<SurvivalEstimate> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    if config.paths < 2 || config.steps == 0 || config.levels == 0 || config.levels > MAX_LEVELS {
        return Err(Error::Domain(format!("invalid Monte-Carlo budget {config:?}")));
    }
    let measure = set.measure();
    let dynamics = Dynamics::new(model, t.max(f64::MIN_POSITIVE))?;
    let single = dynamics.continuous() || dynamics.jump_resolved();
    let levels = if single { 1 } else { config.levels };
    let stride0 = 4usize.pow(levels as u32 - 1);
    // Compound paths are checked after every jump; the grid only samples
    // the small Gaussian remainder.
    let requested = if dynamics.jump_resolved() { config.steps.min(COMPOUND_STEPS) } else { config.steps };
    let fine = requested.max(stride0).div_ceil(stride0) * stride0;
    let strides: Vec<usize> = (0..levels).map(|j| 4usize.pow((levels - 1 - j) as u32)).collect();
    let steps: Vec<usize> = strides.iter().map(|s| fine / s).collect();
    let theta = grid_bias_exponent(model);

    if t == 0.0 {
        let zero = McEstimate::exact(0.0);
        return Ok(SurvivalEstimate {
            t,
            measure,
            steps,
            theta,
            deficit_by_level: vec![zero; levels],
            return_by_level: vec![zero; levels],
            deficit: zero,
            return_part: zero,
            terminal: zero,
            strata: Vec::new(),
        });
    }

    let scale = match model.kind() {
        ModelKind::Drift { gamma } => gamma.abs() * t,
        _ => 1.0 / model.psi_inverse(1.0 / t),
    };
    let strata = distance_strata(set, scale.max(1e-300));
    let gaussian = dynamics.continuous();
    let drift = matches!(dynamics, Dynamics::Drift { .. });
    let proxy: Vec<f64> = strata
        .iter()
        .map(|s| {
            let d = if s.lo == 0.0 { s.hi / 2.0 } else { (s.lo * s.hi).sqrt() };
            let p = exit_proxy(model, t, d).min(0.5);
            let pz = if gaussian || !config.control_variate { p } else { p * p };
            if drift {
                1.0
            } else {
                (pz * (1.0 - pz)).sqrt().max(1e-12)
            }
        })
        .collect();

    let q = (steps[levels - 1] as f64 / steps.get(levels.wrapping_sub(2)).copied().unwrap_or(1) as f64).powf(theta);
    let bridge = config.bridge && matches!(dynamics, Dynamics::Gaussian);
    let mut streams = 0u64;
    let mut run = |alloc: &[usize], phase: u64| -> Vec<Tally> {
        let mut jobs = Vec::new();
        for (si, &n) in alloc.iter().enumerate() {
            for b in 0..n.div_ceil(BATCH) {
                jobs.push((si, b, BATCH.min(n - b * BATCH)));
            }
        }
        streams += jobs.len() as u64;
        let results: Vec<(usize, Tally)> = jobs
            .par_iter()
            .map(|&(si, b, count)| {
                let mut rng = stream.derive((phase << 62) | ((si as u64) << 32) | b as u64).rng();
                let mut tally = Tally::default();
                let mut exits = [0.0f64; MAX_LEVELS];
                for _ in 0..count {
                    let x0 = strata[si].sample(&mut rng);
                    let terminal = walk(&dynamics, set, x0, t, fine, &strides, bridge, &mut rng, &mut exits);
                    let o = if terminal { 1.0 } else { 0.0 };
                    for j in 0..levels {
                        tally.exit[j].push(exits[j]);
                        tally.ret[j].push(exits[j] - o);
                    }
                    let r = if levels >= 2 { (q * exits[levels - 1] - exits[levels - 2]) / (q - 1.0) } else { exits[0] };
                    tally.rich.push(r);
                    tally.rich_ret.push(r - o);
                    tally.terminal.push(o);
                }
                (si, tally)
            })
            .collect();
        let mut per = vec![Tally::default(); strata.len()];
        for (si, ta) in &results {
            per[*si].merge(ta);
        }
        per
    };

    // Pilot on the proxy allocation, then Neyman on the measured spread.
    let pilot_paths = (config.paths / 5).max(2 * strata.len());
    let floor = (pilot_paths / (4 * strata.len())).max(8);
    let weights: Vec<f64> = strata.iter().zip(&proxy).map(|(s, p)| s.measure * p).collect();
    let mut per = run(&allocate(&weights, pilot_paths, floor), 0);
    let rest = config.paths.saturating_sub(pilot_paths);
    if rest > 0 {
        let weights: Vec<f64> = strata
            .iter()
            .zip(&per)
            .zip(&proxy)
            .map(|((s, ta), p)| {
                let m = if config.control_variate { ta.rich_ret } else { ta.rich };
                s.measure * m.variance().sqrt().max(*p)
            })
            .collect();
        let extra = run(&allocate(&weights, rest, 0), 1);
        for (a, b) in per.iter_mut().zip(&extra) {
            a.merge(b);
        }
    }

    let combine = |pick: &dyn Fn(&Tally) -> Moments| -> McEstimate {
        let mut mean = 0.0;
        let mut var = 0.0;
        let mut n = 0;
        for (s, tally) in strata.iter().zip(&per) {
            let m = pick(tally);
            mean += s.measure * m.mean();
            var += (s.measure * m.stderr()).powi(2);
            n += m.n;
        }
        McEstimate { mean, stderr: var.sqrt(), n, seed: stream.seed, streams }
    };
    let deficit_by_level = (0..levels).map(|j| combine(&|ta: &Tally| ta.exit[j])).collect::<Vec<_>>();
    let return_by_level = (0..levels).map(|j| combine(&|ta: &Tally| ta.ret[j])).collect::<Vec<_>>();
    let deficit = combine(&|ta: &Tally| ta.rich);
    let return_part = combine(&|ta: &Tally| ta.rich_ret);
    let terminal = combine(&|ta: &Tally| ta.terminal);
    let reports = strata
        .iter()
        .zip(&per)
        .map(|(s, ta)| {
            let m = ta.exit[levels - 1];
            let r = ta.ret[levels - 1];
            StratumReport {
                lo: s.lo,
                hi: s.hi,
                measure: s.measure,
                paths: m.n,
                survival: 1.0 - m.mean(),
                stderr: m.stderr(),
                returned: r.mean(),
                returned_stderr: r.stderr(),
            }
        })
        .collect();
    Ok(SurvivalEstimate {
        t,
        measure,
        steps,
        theta,
        deficit_by_level,
        return_by_level,
        deficit,
        return_part,
        terminal,
        strata: reports,
    })
}

/// Walks one path on the finest grid, filling `exits[j]` with the exit
/// weight seen on the grid with stride `strides[j]`. Returns whether
/// `X_t ∉ Ω`.
#[allow(clippy::too_many_arguments)]
fn walk<R: Rng + ?Sized>(
    dynamics: &Dynamics,
    set: &OpenSet1D,
    x0: f64,
    t: f64,
    fine: usize,
    strides: &[usize],
    bridge: bool,
    rng: &mut R,
    exits: &mut [f64; MAX_LEVELS],
) -> bool {
    let levels = strides.len();
    exits[..levels].fill(0.0);
    let region = region_for(dynamics, set, x0);
    if let Dynamics::Drift { gamma } = dynamics {
        let y = x0 + gamma * t;
        exits[..levels].fill(if region.outside(y) { 1.0 } else { 0.0 });
        return !set.contains(y);
    }
    let dt = t / fine as f64;
    let mut x = x0;
    let mut survive = 1.0;
    let coarsest = 0;
    for k in 1..=fine {
        let (y, hit) = if dynamics.jump_resolved() {
            dynamics.walk_compound(x, dt, rng, &|p| region.outside(p))
        } else {
            let y = x + dynamics.draw(dt, rng);
            (y, region.outside(y))
        };
        if bridge && !hit {
            if let Region::Component(a, b) = region {
                survive *= bridge_survival(a, b, x, y, dt);
            }
        }
        x = y;
        if hit {
            for j in 0..levels {
                if exits[j] < 1.0 && (levels == 1 || k % strides[j] == 0) {
                    exits[j] = 1.0;
                }
            }
        }
        if exits[coarsest] == 1.0 {
            // Every finer grid has exited too; jump to the terminal point.
            let rest = t - k as f64 * dt;
            if rest > 0.0 {
                x += dynamics.draw(rest, rng);
            }
            return !set.contains(x);
        }
    }
    if bridge {
        exits[0] = 1.0 - survive;
    }
    !set.contains(x)
}

/// `P(sup_{s≤t} |X_s| > r)` from the grid maximum (a lower bound on the
/// continuous-time value).
pub fn sup_tail(model: &LevyModel, t: f64, r: f64, paths: usize, steps: usize, stream: RngStream) -> Result<McEstimate> {
    if !(r > 0.0 && t > 0.0) || paths < 2 || steps == 0 {
        return Err(Error::Domain("sup tail needs r > 0, t > 0 and a positive budget".into()));
    }
    let dynamics = Dynamics::new(model, t)?;
    let dt = t / steps as f64;
    let batches = paths.div_ceil(BATCH);
    let parts: Vec<Moments> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream.derive(b as u64).rng();
            let mut m = Moments::default();
            for _ in 0..BATCH.min(paths - b * BATCH) {
                let mut x = 0.0;
                let mut hit = false;
                let outside = |p: f64| p.abs() > r;
                for _ in 0..steps {
                    let (y, h) = if dynamics.jump_resolved() {
                        dynamics.walk_compound(x, dt, &mut rng, &outside)
                    } else {
                        let y = x + dynamics.draw(dt, &mut rng);
                        (y, outside(y))
                    };
                    x = y;
                    if h {
                        hit = true;
                        break;
                    }
                }
                m.push(if hit { 1.0 } else { 0.0 });
            }
            m
        })
        .collect();
    let mut total = Moments::default();
    for p in &parts {
        total.merge(p);
    }
    Ok(total.estimate(stream, batches as u64))
}

/// Grid maxima of a stable path over `[0, 1]` on nested grids.
#[derive(Debug, Clone, Serialize)]
pub struct SupSample {
    pub steps: Vec<usize>,
    /// `E[max_grid - X₁⁺]` per grid.
    pub centred: Vec<McEstimate>,
    /// Richardson combination of the two finest grids.
    pub richardson: McEstimate,
}

/// Samples `max_{k} S_{k/n}` on grids `n = steps / 4^j`, recording the
/// control-variate form `max - X₁⁺`.
pub fn stable_sup_levels(alpha: f64, steps: usize, levels: usize, theta: f64, paths: usize, stream: RngStream) -> Result<SupSample> {
    if !(alpha > 0.0 && alpha <= 2.0) || levels == 0 || levels > MAX_LEVELS || paths < 2 {
        return Err(Error::Domain("invalid supremum sampling request".into()));
    }
    let stride0 = 4usize.pow(levels as u32 - 1);
    let fine = steps.max(stride0).div_ceil(stride0) * stride0;
    let strides: Vec<usize> = (0..levels).map(|j| 4usize.pow((levels - 1 - j) as u32)).collect();
    let grid: Vec<usize> = strides.iter().map(|s| fine / s).collect();
    let q = if levels >= 2 { (grid[levels - 1] as f64 / grid[levels - 2] as f64).powf(theta) } else { 1.0 };
    let dt = 1.0 / fine as f64;
    let batches = paths.div_ceil(BATCH);
    let parts: Vec<([Moments; MAX_LEVELS], Moments)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream.derive(b as u64).rng();
            let mut acc = [Moments::default(); MAX_LEVELS];
            let mut rich = Moments::default();
            let mut maxes = [0.0f64; MAX_LEVELS];
            for _ in 0..BATCH.min(paths - b * BATCH) {
                maxes[..levels].fill(0.0);
                let mut x = 0.0;
                for k in 1..=fine {
                    x += sample_stable_increment(alpha, dt, &mut rng);
                    for j in 0..levels {
                        if k % strides[j] == 0 && x > maxes[j] {
                            maxes[j] = x;
                        }
                    }
                }
                let plus = x.max(0.0);
                for j in 0..levels {
                    acc[j].push(maxes[j] - plus);
                }
                let r = if levels >= 2 { (q * maxes[levels - 1] - maxes[levels - 2]) / (q - 1.0) } else { maxes[0] };
                rich.push(r - plus);
            }
            (acc, rich)
        })
        .collect();
    let mut acc = [Moments::default(); MAX_LEVELS];
    let mut rich = Moments::default();
    for (a, r) in &parts {
        for j in 0..levels {
            acc[j].merge(&a[j]);
        }
        rich.merge(r);
    }
    let streams = batches as u64;
    Ok(SupSample {
        steps: grid,
        centred: (0..levels).map(|j| acc[j].estimate(stream, streams)).collect(),
        richardson: rich.estimate(stream, streams),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_reproduce_and_differ() {
        let s = RngStream::new(7, 3);
        let mut r = s.rng();
        let a: Vec<u64> = (0..4).map(|_| r.random::<u64>()).collect();
        let mut r = s.rng();
        let b: Vec<u64> = (0..4).map(|_| r.random::<u64>()).collect();
        assert_eq!(a, b);
        let mut r2 = s.derive(1).rng();
        assert_ne!(b[0], r2.random::<u64>());
    }

    #[test]
    fn gaussian_variance_convention() {
        let mut rng = RngStream::new(1, 0).rng();
        let mut m = Moments::default();
        for _ in 0..200_000 {
            let x = sample_stable_increment(2.0, 1.0, &mut rng);
            m.push(x * x);
        }
        assert!((m.mean() - 2.0).abs() < 4.0 * m.stderr(), "{}", m.mean());
    }

    #[test]
    fn cauchy_median() {
        let mut rng = RngStream::new(2, 0).rng();
        let mut v: Vec<f64> = (0..100_001).map(|_| sample_stable_increment(1.0, 2.0, &mut rng).abs()).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        assert!((v[50_000] - 2.0).abs() < 0.03, "{}", v[50_000]);
    }

    #[test]
    fn relativistic_characteristic_function() {
        let m = LevyModel::relativistic(1.5, 1.0).unwrap();
        let d = Dynamics::new(&m, 1.0).unwrap();
        let mut rng = RngStream::new(3, 0).rng();
        for &(t, xi) in &[(1.0, 1.0), (0.1, 5.0)] {
            let mut acc = Moments::default();
            for _ in 0..100_000 {
                acc.push((xi * d.draw(t, &mut rng)).cos());
            }
            let exact = (-t * m.psi(xi)).exp();
            assert!((acc.mean() - exact).abs() < 4.0 * acc.stderr(), "t={t} ξ={xi}: {} vs {exact}", acc.mean());
        }
    }

    #[test]
    fn compound_characteristic_function() {
        for m in [LevyModel::truncated(0.5).unwrap(), LevyModel::logperturbed(0.5, 1.0).unwrap()] {
            let d = Dynamics::new(&m, 1e-2).unwrap();
            let mut rng = RngStream::new(4, 0).rng();
            let (t, xi) = (1e-2, 100.0);
            let mut acc = Moments::default();
            for _ in 0..100_000 {
                acc.push((xi * d.draw(t, &mut rng)).cos());
            }
            let exact = (-t * m.psi(xi)).exp();
            assert!((acc.mean() - exact).abs() < 4.0 * acc.stderr() + 1e-3, "{m}: {} vs {exact}", acc.mean());
        }
    }

    #[test]
    fn drift_exits_deterministically() {
        let set = OpenSet1D::interval(0.0, 1.0).unwrap();
        let spec = PathSpec::new(&LevyModel::drift(2.0).unwrap(), 0.5, 8, 0.5).unwrap();
        let mut rng = RngStream::new(5, 0).rng();
        assert!(simulate_exit(&spec, &set, &mut rng).unwrap().exited);
        let spec = PathSpec::new(&LevyModel::drift(2.0).unwrap(), 0.2, 8, 0.5).unwrap();
        assert!(!simulate_exit(&spec, &set, &mut rng).unwrap().exited);
        let bad = PathSpec::new(&LevyModel::brownian(), 0.2, 8, 1.5).unwrap();
        assert!(simulate_exit(&bad, &set, &mut rng).is_err());
    }

    #[test]
    fn strata_cover_the_set() {
        let set: OpenSet1D = "(0,1)|(2,2.5)".parse().unwrap();
        let st = distance_strata(&set, 1e-3);
        let total: f64 = st.iter().map(|s| s.measure).sum();
        assert!((total - 1.5).abs() < 1e-12);
    }

    #[test]
    fn zero_time_is_full_measure() {
        let set: OpenSet1D = "(0,1)".parse().unwrap();
        let e = survival_probability(&LevyModel::cauchy(), &set, 0.0, &SurvivalConfig::default(), RngStream::new(1, 0)).unwrap();
        assert_eq!(e.survival().mean, 1.0);
    }

    #[test]
    fn drift_deficit_matches() {
        let set: OpenSet1D = "(-1,0)|(0,1)".parse().unwrap();
        let cfg = SurvivalConfig { paths: 4000, steps: 16, levels: 1, bridge: false, control_variate: false };
        for &(g, t) in &[(1.0, 0.3), (-2.0, 0.1), (3.0, 1.0)] {
            let e = survival_probability(&LevyModel::drift(g).unwrap(), &set, t, &cfg, RngStream::new(9, 0)).unwrap();
            let exact = (2.0 * f64::abs(g) * t).min(2.0);
            assert!((e.deficit.mean - exact).abs() < 4.0 * e.deficit.stderr + 1e-9, "{g} {t}: {:?}", e.deficit);
        }
    }
}
