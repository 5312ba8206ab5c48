//! Heat content `H_Ω(t)` and spectral heat content `Q_Ω(t)` estimators.
//!
//! The heat-content deficit is `|Ω| - H_Ω(t) = E f_Ω(X_t)`. Writing the
//! deficiency as a signed sum over endpoint pairs,
//! `f_Ω(y) = -Σ_{p<q} s_p s_q min(|y|, |x_p - x_q|)`, reduces it to
//! `m(D) = E min(|X_t|, D)`, which is evaluated in the rescaled variable
//! `Y = ψ^{-1}(1/t) X_t` by
//! `∫_0^Δ P(|Y| > ρ) dρ = (2/π) ∫_0^∞ (1 - cos ηΔ)(1 - e^{-ψ_t(η)}) η^{-2} dη`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::OpenSet1D;
use crate::hitting::HittingEngine;
use crate::levy::{total_variation_gap, LevyModel, ModelKind};
use crate::montecarlo::{self, McEstimate, Moments, RngStream, SurvivalConfig, SurvivalEstimate};
use crate::quad::{self, Tolerance};
use crate::special::erfc;

/// Beyond this rescaled distance the one-jump tail formula takes over.
const FOURIER_REACH: f64 = 1e5;

/// `|Ω| - H_Ω(t)` by quadrature.
pub fn heat_deficit(model: &LevyModel, set: &OpenSet1D, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    if let ModelKind::Drift { gamma } = model.kind() {
        return Ok(set.deficiency(gamma * t));
    }
    let kernel = MinMoment::new(model, t)?;
    let ends = set.endpoints();
    // Collect s_p s_q per distinct distance.
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for p in 0..ends.len() {
        for q in p + 1..ends.len() {
            let d = (ends[q].0 - ends[p].0).abs();
            if d > 0.0 {
                pairs.push((d, ends[p].1 * ends[q].1));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let d = pairs[i].0;
        let mut w = 0.0;
        while i < pairs.len() && pairs[i].0 == d {
            w += pairs[i].1;
            i += 1;
        }
        if w != 0.0 {
            total -= w * kernel.eval(d)?;
        }
    }
    Ok(total.clamp(0.0, set.measure()))
}

/// `H_Ω(t)` by quadrature.
pub fn heat_content(model: &LevyModel, set: &OpenSet1D, t: f64) -> Result<f64> {
    Ok(set.measure() - heat_deficit(model, set, t)?)
}

/// `D ↦ E min(|X_t|, D)` for one model and time.
struct MinMoment<'a> {
    model: &'a LevyModel,
    t: f64,
    kappa: f64,
    /// `∫(ν_S - ν)` against the stable reference, when finite.
    removed_mass: f64,
}

impl<'a> MinMoment<'a> {
    fn new(model: &'a LevyModel, t: f64) -> Result<Self> {
        let kappa = model.psi_inverse(1.0 / t);
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::Numerical(format!("{model}: ψ⁻¹(1/t) unavailable at t = {t}")));
        }
        let removed_mass = model
            .stable_reference()
            .map(|s| total_variation_gap(&s, model))
            .filter(|g| g.finite)
            .map_or(0.0, |g| g.first_excess - g.second_excess);
        Ok(Self { model, t, kappa, removed_mass })
    }

    fn eval(&self, d: f64) -> Result<f64> {
        let t = self.t;
        match self.model.kind() {
            ModelKind::Brownian => {
                let s = (2.0 * t).sqrt();
                Ok(s * (2.0 / PI).sqrt() * -(-d * d / (2.0 * s * s)).exp_m1() + d * erfc(d / (s * 2f64.sqrt())))
            }
            ModelKind::Stable { alpha } if alpha == 1.0 => Ok(t * cauchy_min_moment(d / t)),
            _ => self.generic(d),
        }
    }

    fn psi_t(&self, eta: f64) -> f64 {
        self.t * self.model.psi_fast(self.kappa * eta)
    }

    /// `∫_0^Δ P(|Y| > ρ) dρ` for the rescaled variable.
    fn fourier_integral(&self, delta: f64) -> Result<f64> {
        let h = |eta: f64| -> f64 {
            if eta == 0.0 {
                return 0.0;
            }
            -(-self.psi_t(eta)).exp_m1() / (eta * eta)
        };
        let tol = Tolerance::new(1e-14, 1e-11);
        let period = 2.0 * PI / delta;
        let eta0 = 4.0 * period;
        let head_pts: Vec<f64> = (0..=16).map(|k| eta0 * k as f64 / 16.0).collect();
        let head = quad::integrate_points(|e: f64| 2.0 * (0.5 * delta * e).sin().powi(2) * h(e), &head_pts, &tol).value;
        // h is smooth past η₀; split at the knee η = 1 and integrate the
        // power tail.
        let knee = 1.0f64.max(eta0);
        let mut mid_pts = vec![eta0];
        let mut p = eta0;
        while p < knee {
            p = (p * 4.0).min(knee);
            mid_pts.push(p);
        }
        let mid = if mid_pts.len() >= 2 { quad::integrate_points(h, &mid_pts, &tol).value } else { 0.0 };
        let plain = mid + quad::integrate_tail(h, knee, &tol).value;
        let osc = quad::oscillatory_tail(h, delta, eta0, &tol);
        if !osc.converged {
            return Err(Error::Numerical(format!("cosine tail did not converge at Δ = {delta:e}")));
        }
        Ok(2.0 / PI * (head + plain - osc.value))
    }

    fn generic(&self, d: f64) -> Result<f64> {
        let delta = self.kappa * d;
        if delta <= FOURIER_REACH {
            return Ok(self.fourier_integral(delta)? / self.kappa);
        }
        let rho1 = FOURIER_REACH;
        let r1 = rho1 / self.kappa;
        let near = self.fourier_integral(rho1)?;
        let m = self.model;
        let one_jump = |lo: f64, hi: f64| -> f64 {
            // ∫_lo^hi ν(|y| > r) dr
            2.0 * (m.jump_moment(1, lo, hi) - lo * m.jump_moment(0, lo, hi) + (hi - lo) * m.jump_moment(0, hi, f64::INFINITY))
        };
        // Beyond the reach P(|X_t| > r) ≈ t(1 + mt) ν(|y| > r) + c t² r^{-2α}:
        // the stable two-jump term plus the first-order effect of the mass m
        // removed from the stable reference.
        let single = self.t * (1.0 + self.removed_mass * self.t);
        let jump_part = single * one_jump(r1, d);
        // Remainder averaged over [ρ₁/2, ρ₁] and continued as ρ^{-2α}.
        let half = self.fourier_integral(0.5 * rho1)?;
        let a2 = 2.0 * m.rv_index().unwrap_or(1.0);
        // Mean of (ρ/ρ₁)^{-2α} over [ρ₁/2, ρ₁].
        let mean_shape = if (a2 - 1.0).abs() < 1e-9 { 2.0 * 2f64.ln() } else { 2.0 * (1.0 - 2f64.powf(a2 - 1.0)) / (1.0 - a2) };
        let rem1 = (near - half - self.kappa * single * one_jump(0.5 * r1, r1)) / (0.5 * rho1) / mean_shape;
        let ratio = delta / rho1;
        let rem_int = if (a2 - 1.0).abs() < 1e-9 { rem1 * rho1 * ratio.ln() } else { rem1 * rho1 * (1.0 - ratio.powf(1.0 - a2)) / (a2 - 1.0) };
        Ok((near + rem_int) / self.kappa + jump_part)
    }
}

/// `∫_0^x (1 - (2/π) arctan ρ) dρ = (2/π)(x arctan(1/x) + ln √(1+x²))`.
fn cauchy_min_moment(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    (2.0 / PI) * (x * (1.0 / x).atan() + x.hypot(1.0).ln())
}

/// `|Ω| - H_Ω(t)` by Monte Carlo: mean of `f_Ω(X_t)` over `n` single
/// increments.
pub fn heat_deficit_mc(model: &LevyModel, set: &OpenSet1D, t: f64, n: usize, stream: RngStream) -> Result<McEstimate> {
    if n < 2 || !(t > 0.0) {
        return Err(Error::Domain("heat Monte Carlo needs t > 0 and n ≥ 2".into()));
    }
    let sampler = montecarlo::IncrementSampler::new(model, t)?;
    let batches = n.div_ceil(4096);
    let parts: Vec<Moments> = {
        use rayon::prelude::*;
        (0..batches)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream.derive(b as u64).rng();
                let mut m = Moments::default();
                for _ in 0..4096.min(n - b * 4096) {
                    m.push(set.deficiency(sampler.sample(&mut rng)));
                }
                m
            })
            .collect()
    };
    let mut total = Moments::default();
    for p in &parts {
        total.merge(p);
    }
    Ok(McEstimate { mean: total.mean(), stderr: total.stderr(), n: total.n, seed: stream.seed, streams: batches as u64 })
}

/// Spectral heat content estimate.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralEstimate {
    pub t: f64,
    /// `|Ω| - Q_Ω(t)`.
    pub deficit: McEstimate,
    /// `Q_Ω(t)`.
    pub q: McEstimate,
    /// Quadrature `|Ω| - H_Ω(t)` used as the control, if available.
    pub heat_deficit: Option<f64>,
    pub survival: SurvivalEstimate,
}

/// `Q_Ω(t)` by grid Monte Carlo, Richardson over nested grids.
///
/// With `control` set the estimate is `(|Ω| - H)_quad + ∫ E[1{exit} - 1{X_t∉Ω}]`,
/// which only samples the exit-and-return paths.
pub fn spectral_heat_content(
    model: &LevyModel,
    set: &OpenSet1D,
    t: f64,
    config: &SurvivalConfig,
    stream: RngStream,
) -> Result<SpectralEstimate> {
    let survival = montecarlo::survival_probability(model, set, t, config, stream)?;
    let heat = if config.control_variate && t > 0.0 { heat_deficit(model, set, t).ok() } else { None };
    let deficit = match heat {
        Some(h) => survival.return_part.shifted(h),
        None => survival.deficit,
    };
    let measure = set.measure();
    Ok(SpectralEstimate { t, deficit, q: deficit.scaled(-1.0).shifted(measure), heat_deficit: heat, survival })
}

/// Hybrid deficit for index α ∈ (1, 2] with adjacent boundary points.
#[derive(Debug, Clone, Serialize)]
pub struct HybridEstimate {
    pub t: f64,
    /// Grid Monte Carlo deficit on the augmented set.
    pub augmented: SpectralEstimate,
    /// `2B ∫_0^ε P(T_y ≤ t) dy`.
    pub hitting_term: f64,
    pub eps: f64,
    pub adjacent: usize,
    /// Sum of the two.
    pub deficit: McEstimate,
}

/// `|Ω| - Q_Ω(t) ≈ (|Ω̃| - Q_Ω̃(t)) + 2B ∫_0^ε P(T_y ≤ t) dy`: point hitting is
/// invisible to grid walks, so adjacent points are handled by the hitting
/// engine.
pub fn hybrid_spectral_deficit(
    model: &LevyModel,
    set: &OpenSet1D,
    t: f64,
    config: &SurvivalConfig,
    stream: RngStream,
    engine: Option<&HittingEngine>,
) -> Result<HybridEstimate> {
    let top = set.augment();
    let augmented = spectral_heat_content(model, &top.augmented, t, config, stream)?;
    let eps = 0.5 * set.min_component_length();
    let (hitting_term, adjacent) = if top.b == 0 {
        (0.0, 0)
    } else {
        let owned;
        let engine = match engine {
            Some(e) => e,
            None => {
                owned = HittingEngine::new(model)?;
                &owned
            }
        };
        let kappa = model.psi_inverse(1.0 / t);
        (2.0 * top.b as f64 * engine.scaled_hitting_integral(eps, t)? / kappa, top.b)
    };
    let deficit = augmented.deficit.shifted(hitting_term);
    Ok(HybridEstimate { t, augmented, hitting_term, eps, adjacent, deficit })
}

/// Scaled deficits on a decreasing time grid.
#[derive(Debug, Clone, Serialize)]
pub struct DeficitSeries {
    pub t: Vec<f64>,
    pub value: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Name of the scaling applied to the raw deficit.
    pub scaling: String,
}

impl DeficitSeries {
    pub fn new(scaling: &str) -> Self {
        Self { t: Vec::new(), value: Vec::new(), stderr: Vec::new(), scaling: scaling.to_string() }
    }

    pub fn push(&mut self, t: f64, value: f64, stderr: f64) -> Result<()> {
        if !(t > 0.0) || self.t.last().is_some_and(|&last| t >= last) {
            return Err(Error::Domain(format!("series times must be positive and strictly decreasing, got {t}")));
        }
        self.t.push(t);
        self.value.push(value);
        self.stderr.push(stderr);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Correction term in the small-time fit `v(t) = L + c·φ(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Basis {
    /// `φ = t^θ`.
    Power(f64),
    /// `φ = 1 / ln(1/t)`.
    InverseLog,
}

impl Basis {
    fn phi(&self, t: f64) -> f64 {
        match *self {
            Basis::Power(theta) => t.powf(theta),
            Basis::InverseLog => 1.0 / (1.0 / t).ln(),
        }
    }
}

/// Result of [`limit_extrapolate`].
#[derive(Debug, Clone, Serialize)]
pub struct Extrapolation {
    pub limit: f64,
    /// Fit standard error, inflated by `(χ²/dof)^{1/2}` when above one.
    pub uncertainty: f64,
    pub slope: f64,
    pub basis: Basis,
    pub chi2_per_dof: f64,
    /// Limit and exponent with θ fitted as well (power basis only).
    pub free_limit: Option<f64>,
    pub free_theta: Option<f64>,
    /// Successive values move against the fitted trend by more than
    /// three combined standard errors.
    pub non_monotone: bool,
}

fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64, f64, f64) {
    // y = a + b x; returns (a, b, var(a), chi2)
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    let b = (sw * sxy - sx * sy) / det;
    let a = (sy - b * sx) / sw;
    let var_a = sxx / det;
    let chi2 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * (y - a - b * x).powi(2)).sum();
    (a, b, var_a, chi2)
}

/// Weighted least-squares fit of `v(t) = L + c·φ(t)`.
pub fn limit_extrapolate(series: &DeficitSeries, basis: Basis) -> Result<Extrapolation> {
    let n = series.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!("extrapolation needs at least 4 points, got {n}")));
    }
    let scale = series.value.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let w: Vec<f64> = series.stderr.iter().map(|s| 1.0 / s.max(1e-9 * scale).powi(2)).collect();
    let fit = |b: Basis| {
        let x: Vec<f64> = series.t.iter().map(|&t| b.phi(t)).collect();
        weighted_line(&x, &series.value, &w)
    };
    let (limit, slope, var_l, chi2) = fit(basis);
    let dof = (n - 2) as f64;
    let chi2_per_dof = chi2 / dof;
    let uncertainty = var_l.sqrt() * chi2_per_dof.max(1.0).sqrt();

    let (free_limit, free_theta) = match basis {
        Basis::Power(_) => {
            let mut best = (f64::INFINITY, 0.0, 0.0);
            let mut theta = 0.05;
            while theta <= 2.0 + 1e-12 {
                let (l, _, _, c2) = fit(Basis::Power(theta));
                if c2 < best.0 {
                    best = (c2, l, theta);
                }
                theta += 0.01;
            }
            (Some(best.1), Some(best.2))
        }
        Basis::InverseLog => (None, None),
    };

    // Values should move monotonically towards L as t decreases.
    let sign = if slope >= 0.0 { -1.0 } else { 1.0 };
    let non_monotone = series.value.windows(2).zip(series.stderr.windows(2)).any(|(v, s)| {
        let step = sign * (v[1] - v[0]);
        step < -3.0 * s[0].hypot(s[1]) - 1e-12 * scale
    });
    Ok(Extrapolation { limit, uncertainty, slope, basis, chi2_per_dof, free_limit, free_theta, non_monotone })
}

/// Geometric grid from `t_max` down to `t_min`, `per_decade` points per
/// decade, strictly decreasing.
pub fn time_grid(t_min: f64, t_max: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && t_min < t_max) || per_decade == 0 {
        return Err(Error::Domain(format!("time grid needs 0 < t_min < t_max, got [{t_min}, {t_max}]")));
    }
    let decades = (t_max / t_min).log10();
    let n = (decades * per_decade as f64).round().max(1.0) as usize;
    Ok((0..=n).map(|k| t_max * (t_min / t_max).powf(k as f64 / n as f64)).collect())
}
