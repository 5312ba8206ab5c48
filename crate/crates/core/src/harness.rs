//! Small-time limit predictions and verification campaigns.
//!
//! Each catalog model falls on one route: bounded variation (limit `Per_X(Ω)`
//! under `t`), regular variation of index α ∈ (1, 2] (limit
//! `2A E[sup S^{(α)}] + 2B C₁(α)` under `1/ψ^{-1}(1/t)`), or the Cauchy route
//! (limit `2A/π` under `t ln(1/t)`).

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::OpenSet1D;
use crate::heat::{self, Basis, DeficitSeries, Extrapolation};
use crate::hitting::{self, HittingEngine};
use crate::levy::{total_variation_gap, LevyModel, ModelKind, VariationClass, VariationGap};
use crate::montecarlo::{McEstimate, RngStream, SurvivalConfig};
use crate::perimeter::{self, Finiteness, SetFamily};
use crate::special::gamma;

/// Declared relative tolerances, one per route and quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub heat: f64,
    pub bounded_variation: f64,
    pub regular_variation: f64,
    pub brownian: f64,
    pub cauchy: f64,
}

pub const TOLERANCES: Tolerances =
    Tolerances { heat: 0.02, bounded_variation: 0.05, regular_variation: 0.05, brownian: 0.02, cauchy: 0.10 };

/// Stream id reserved for the supremum estimate inside predictions.
pub const SUP_STREAM: u64 = 0x5e_u64 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "route", rename_all = "kebab-case")]
pub enum Route {
    BoundedVariation,
    RegularVariation { alpha: f64 },
    Cauchy,
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Route::BoundedVariation => write!(f, "bounded-variation"),
            Route::RegularVariation { alpha } => write!(f, "regular-variation(alpha={alpha})"),
            Route::Cauchy => write!(f, "cauchy"),
        }
    }
}

/// Normalisation of the raw deficit.
#[derive(Debug, Clone, PartialEq)]
pub enum Scaling {
    /// Divide by `t`.
    Linear,
    /// Multiply by `ψ^{-1}(1/t)` of the reference model.
    PsiInverse(LevyModel),
    /// Divide by `t ln(1/t)`.
    LogLinear,
}

impl Scaling {
    /// Factor turning a raw deficit at `t` into the scaled one.
    pub fn factor(&self, t: f64) -> f64 {
        match self {
            Scaling::Linear => 1.0 / t,
            Scaling::PsiInverse(m) => m.psi_inverse(1.0 / t),
            Scaling::LogLinear => 1.0 / (t * (1.0 / t).ln()),
        }
    }
}

impl fmt::Display for Scaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scaling::Linear => write!(f, "t"),
            Scaling::PsiInverse(m) => write!(f, "1/psi_inverse(1/t) [{m}]"),
            Scaling::LogLinear => write!(f, "t ln(1/t)"),
        }
    }
}

impl Serialize for Scaling {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Heat,
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicted {
    Finite { value: f64, uncertainty: f64 },
    Infinite,
}

/// Constants entering a prediction.
#[derive(Debug, Clone, Default, Serialize)]
pub struct LimitTerms {
    /// Components of the augmented set.
    pub a: usize,
    /// Adjacent boundary points.
    pub b: usize,
    pub expected_sup: Option<McEstimate>,
    pub c1: Option<f64>,
    pub perimeter: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremTarget {
    pub route: Route,
    /// Stable index of the model.
    pub alpha: f64,
    pub quantity: Quantity,
    pub scaling: Scaling,
    pub predicted: Predicted,
    pub terms: LimitTerms,
    pub notes: Vec<String>,
}

impl TheoremTarget {
    pub fn value(&self) -> Option<f64> {
        match self.predicted {
            Predicted::Finite { value, .. } => Some(value),
            Predicted::Infinite => None,
        }
    }

    pub fn uncertainty(&self) -> f64 {
        match self.predicted {
            Predicted::Finite { uncertainty, .. } => uncertainty,
            Predicted::Infinite => f64::INFINITY,
        }
    }

    /// Declared relative tolerance for this target.
    pub fn declared_tolerance(&self) -> f64 {
        match (self.quantity, self.route) {
            (_, Route::Cauchy) => TOLERANCES.cauchy,
            (Quantity::Heat, _) => TOLERANCES.heat,
            (Quantity::Spectral, Route::BoundedVariation) => TOLERANCES.bounded_variation,
            (Quantity::Spectral, Route::RegularVariation { alpha }) if alpha == 2.0 => TOLERANCES.brownian,
            (Quantity::Spectral, Route::RegularVariation { .. }) => TOLERANCES.regular_variation,
        }
    }

    /// Correction basis for the small-time fit.
    pub fn basis(&self) -> Basis {
        match self.route {
            Route::BoundedVariation => Basis::Power((1.0 / self.alpha - 1.0).clamp(0.1, 1.0)),
            Route::RegularVariation { alpha } => Basis::Power(1.0 - 1.0 / alpha),
            Route::Cauchy => Basis::InverseLog,
        }
    }
}

/// Which route a model takes.
pub fn route_of(model: &LevyModel) -> Result<Route> {
    if let ModelKind::Drift { gamma } = model.kind() {
        return Err(Error::Unsupported(format!(
            "drift({gamma}) has bounded variation with nonzero drift; \
             the small-time limits fail for it (see the pure-drift counterexample)"
        )));
    }
    let alpha = model.rv_index().ok_or_else(|| Error::Unsupported(format!("{model} has no index of regular variation")))?;
    match model.variation_class() {
        VariationClass::Bounded => Ok(Route::BoundedVariation),
        VariationClass::Unbounded if alpha > 1.0 => Ok(Route::RegularVariation { alpha }),
        VariationClass::Unbounded => match model.kind() {
            ModelKind::Stable { .. } | ModelKind::Relativistic { .. } | ModelKind::Truncated { .. } => Ok(Route::Cauchy),
            _ => Err(Error::Unsupported(format!(
                "{model} is not a finite-variation perturbation of the Cauchy process; no small-time limit is available"
            ))),
        },
    }
}

fn scaling_for(model: &LevyModel, route: Route) -> Scaling {
    match route {
        Route::BoundedVariation => Scaling::Linear,
        Route::RegularVariation { .. } => Scaling::PsiInverse(model.clone()),
        Route::Cauchy => Scaling::LogLinear,
    }
}

/// Normalisation of the deficit for the model's route.
pub fn scaling_of(model: &LevyModel) -> Result<Scaling> {
    Ok(scaling_for(model, route_of(model)?))
}

/// Options for [`predict_limit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictOptions {
    pub quantity: Quantity,
    /// The set is a truncation of this infinite family.
    pub family: Option<SetFamily>,
    /// Paths for `E[sup S^{(α)}]` when α < 2.
    pub sup_paths: usize,
    pub seed: u64,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self { quantity: Quantity::Spectral, family: None, sup_paths: 20_000, seed: 1 }
    }
}

/// `E[sup_{s≤1} S^{(α)}_s]`: exact `2/√π` for α = 2, Monte Carlo otherwise.
pub fn expected_sup(alpha: f64, paths: usize, seed: u64) -> Result<McEstimate> {
    if alpha == 2.0 {
        return Ok(McEstimate::exact(2.0 / PI.sqrt()));
    }
    Ok(hitting::expected_sup_stable(alpha, paths, RngStream::new(seed, SUP_STREAM))?.value)
}

/// Predicted small-time limit of the scaled deficit.
pub fn predict_limit(model: &LevyModel, set: &OpenSet1D, options: &PredictOptions) -> Result<TheoremTarget> {
    let route = route_of(model)?;
    let top = set.augment();
    let (a, b) = (top.augmented.len(), top.b);
    let mut terms = LimitTerms { a, b, ..Default::default() };
    let mut notes = Vec::new();
    let quantity = options.quantity;

    let infinite = match (route, options.family) {
        (_, None) => false,
        (Route::BoundedVariation, Some(family)) => {
            // Small jumps of every bounded-variation catalog model are
            // stable-like, so the component-sum test decides.
            let report = perimeter::finiteness_criterion(set, model.alpha().unwrap_or(0.5).min(0.999), Some(family))?;
            notes.push(format!("component sum {:.6} + tail {:.3e}", report.partial_sum, report.tail_estimate));
            report.verdict == Finiteness::Infinite
        }
        (_, Some(_)) => {
            notes.push("infinitely many components".into());
            true
        }
    };

    let scaling = scaling_for(model, route);
    let predicted = if infinite {
        Predicted::Infinite
    } else {
        match route {
            Route::BoundedVariation => {
                let per = perimeter::perimeter(model, set)?;
                terms.perimeter = Some(per.value);
                if per.diverging {
                    Predicted::Infinite
                } else {
                    Predicted::Finite { value: per.value, uncertainty: per.quadrature_error }
                }
            }
            Route::RegularVariation { alpha } => match quantity {
                Quantity::Heat => {
                    notes.push("heat deficit: A E|S_1|".into());
                    Predicted::Finite { value: 2.0 * a as f64 * gamma(1.0 - 1.0 / alpha) / PI, uncertainty: 0.0 }
                }
                Quantity::Spectral => {
                    let sup = expected_sup(alpha, options.sup_paths, options.seed)?;
                    let c1 = hitting::c1_constant(alpha)?;
                    terms.expected_sup = Some(sup);
                    terms.c1 = Some(c1);
                    let value = 2.0 * a as f64 * sup.mean + 2.0 * b as f64 * c1;
                    Predicted::Finite { value, uncertainty: 2.0 * a as f64 * sup.stderr }
                }
            },
            Route::Cauchy => Predicted::Finite { value: 2.0 * a as f64 / PI, uncertainty: 0.0 },
        }
    };
    Ok(TheoremTarget { route, quantity, scaling, predicted, terms, notes, alpha: model.alpha().unwrap_or(f64::NAN) })
}

/// Budget and grid for [`verify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub quantity: Quantity,
    pub t_min: f64,
    pub t_max: f64,
    pub per_decade: usize,
    /// Paths per grid time.
    pub paths: usize,
    pub steps: usize,
    pub levels: usize,
    pub sup_paths: usize,
    pub seed: u64,
    /// Wall-clock budget; later grid times are skipped once exceeded.
    pub max_seconds: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            quantity: Quantity::Spectral,
            t_min: 1e-6,
            t_max: 1e-3,
            per_decade: 2,
            paths: 20_000,
            steps: 1024,
            levels: 3,
            sup_paths: 20_000,
            seed: 1,
            max_seconds: None,
        }
    }
}

impl VerifyOptions {
    fn survival_config(&self) -> SurvivalConfig {
        SurvivalConfig { paths: self.paths, steps: self.steps, levels: self.levels, bridge: true, control_variate: true }
    }

    fn predict_options(&self) -> PredictOptions {
        PredictOptions { quantity: self.quantity, family: None, sup_paths: self.sup_paths, seed: self.seed }
    }
}

/// One grid time of a campaign.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesRow {
    pub t: f64,
    /// `|Ω| - Q` or `|Ω| - H`.
    pub deficit: f64,
    pub stderr: f64,
    pub scaled: f64,
    pub scaled_stderr: f64,
    /// Quadrature heat content `H_Ω(t)`.
    pub heat: f64,
    /// `Q_Ω(t)` (spectral campaigns only).
    pub survival: Option<f64>,
    /// Hitting-integral share of the deficit.
    pub hitting_term: f64,
    /// `0 ≤ Q ≤ H ≤ |Ω|` within two standard errors.
    pub ordered: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub model: LevyModel,
    pub set: String,
    pub target: TheoremTarget,
    pub rows: Vec<SeriesRow>,
    pub extrapolation: Option<Extrapolation>,
    pub estimate: Option<f64>,
    /// Fit and target uncertainties in quadrature.
    pub combined_uncertainty: f64,
    pub declared_tolerance: f64,
    /// `max(declared · |target|, 3 · combined)`.
    pub tolerance: f64,
    pub ordered: bool,
    /// The wall-clock budget ran out before the grid was finished.
    pub partial: bool,
    pub pass: bool,
}

fn series_of(rows: &[SeriesRow], scaling: &Scaling) -> Result<DeficitSeries> {
    let mut series = DeficitSeries::new(&scaling.to_string());
    for r in rows {
        series.push(r.t, r.scaled, r.scaled_stderr)?;
    }
    Ok(series)
}

/// Deficit at one time: spectral by grid Monte Carlo (hybrid when adjacent
/// points carry a hitting term), heat by quadrature.
fn campaign_row(
    model: &LevyModel,
    set: &OpenSet1D,
    target: &TheoremTarget,
    t: f64,
    config: &SurvivalConfig,
    stream: RngStream,
    engine: Option<&HittingEngine>,
) -> Result<SeriesRow> {
    let measure = set.measure();
    let heat_deficit = heat::heat_deficit(model, set, t)?;
    let heat = measure - heat_deficit;
    let k = target.scaling.factor(t);
    let (deficit, stderr, hitting_term) = match target.quantity {
        Quantity::Heat => (heat_deficit, 1e-9 * heat_deficit.abs(), 0.0),
        Quantity::Spectral => {
            let (d, hit) = spectral_deficit(model, set, t, config, stream, engine)?;
            (d.mean, d.stderr, hit)
        }
    };
    let survival = (target.quantity == Quantity::Spectral).then_some(measure - deficit);
    let slack = 2.0 * stderr;
    let ordered = heat <= measure + 1e-12
        && survival.is_none_or(|q| q >= -slack && q <= heat + slack);
    Ok(SeriesRow { t, deficit, stderr, scaled: deficit * k, scaled_stderr: stderr * k, heat, survival, hitting_term, ordered })
}

/// `|Ω| - Q_Ω(t)` with the hitting term added when an engine is supplied.
pub fn spectral_deficit(
    model: &LevyModel,
    set: &OpenSet1D,
    t: f64,
    config: &SurvivalConfig,
    stream: RngStream,
    engine: Option<&HittingEngine>,
) -> Result<(McEstimate, f64)> {
    match engine {
        Some(engine) => {
            let h = heat::hybrid_spectral_deficit(model, set, t, config, stream, Some(engine))?;
            Ok((h.deficit, h.hitting_term))
        }
        None => Ok((heat::spectral_heat_content(model, set, t, config, stream)?.deficit, 0.0)),
    }
}

/// A hitting engine when the route and set need the adjacent-point term.
pub fn hybrid_engine(model: &LevyModel, set: &OpenSet1D, route: Route, quantity: Quantity) -> Result<Option<HittingEngine>> {
    match route {
        Route::RegularVariation { .. } if set.augment().b > 0 && quantity == Quantity::Spectral => {
            Ok(Some(HittingEngine::new(model)?))
        }
        _ => Ok(None),
    }
}

/// Runs a campaign over the time grid and compares the extrapolated limit
/// with the prediction.
pub fn verify(model: &LevyModel, set: &OpenSet1D, options: &VerifyOptions) -> Result<VerifyReport> {
    let target = predict_limit(model, set, &options.predict_options())?;
    let value = target
        .value()
        .ok_or_else(|| Error::Unsupported(format!("the predicted limit for {model} on {set} is infinite")))?;
    let grid = heat::time_grid(options.t_min, options.t_max, options.per_decade)?;
    let config = options.survival_config();
    let engine = hybrid_engine(model, set, target.route, options.quantity)?;
    let start = Instant::now();
    let mut rows = Vec::with_capacity(grid.len());
    let mut partial = false;
    for (k, &t) in grid.iter().enumerate() {
        if options.max_seconds.is_some_and(|s| start.elapsed().as_secs_f64() > s) {
            partial = true;
            break;
        }
        let stream = RngStream::new(options.seed, k as u64);
        rows.push(campaign_row(model, set, &target, t, &config, stream, engine.as_ref())?);
    }
    let extrapolation = if rows.len() >= 4 {
        Some(heat::limit_extrapolate(&series_of(&rows, &target.scaling)?, target.basis())?)
    } else {
        partial = true;
        None
    };
    let declared_tolerance = target.declared_tolerance();
    let combined_uncertainty = extrapolation.as_ref().map_or(f64::INFINITY, |e| e.uncertainty.hypot(target.uncertainty()));
    let tolerance = (declared_tolerance * value.abs()).max(3.0 * combined_uncertainty);
    let ordered = rows.iter().all(|r| r.ordered);
    let estimate = extrapolation.as_ref().map(|e| e.limit);
    let pass = !partial && ordered && estimate.is_some_and(|l| (l - value).abs() <= tolerance);
    Ok(VerifyReport {
        model: model.clone(),
        set: set.to_string(),
        target,
        rows,
        extrapolation,
        estimate,
        combined_uncertainty,
        declared_tolerance,
        tolerance,
        ordered,
        partial,
        pass,
    })
}

/// One grid time of a perturbation check.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeRow {
    pub t: f64,
    pub deficit_x: McEstimate,
    pub deficit_y: McEstimate,
    /// `e^{-m₂t}(D^X - (e^{m₁t} - 1)|Ω|)`.
    pub lower: f64,
    /// `e^{m₁t} D^X + (e^{m₂t} - 1)|Ω|`.
    pub upper: f64,
    pub scaled_x: f64,
    pub scaled_y: f64,
    /// Both envelopes hold within two combined standard errors.
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationReport {
    pub model_x: LevyModel,
    pub model_y: LevyModel,
    pub set: String,
    pub gap: VariationGap,
    pub scaling: Scaling,
    pub rows: Vec<EnvelopeRow>,
    pub target_x: TheoremTarget,
    pub target_y: TheoremTarget,
    pub limit_x: Extrapolation,
    pub limit_y: Extrapolation,
    /// Each limit against its own prediction (bounded variation) or the two
    /// limits against each other (otherwise).
    pub limits_agree: bool,
    pub tolerance: f64,
    pub envelopes_hold: bool,
    pub pass: bool,
}

/// Envelope bounds on `D^Y = |Ω| - Q^Y` from `D^X`, where
/// `m₁ = ∫(ν_X - ν_Y)^+` and `m₂ = ∫(ν_Y - ν_X)^+`.
pub fn envelope(gap: &VariationGap, measure: f64, t: f64, deficit_x: f64) -> (f64, f64) {
    let (m1, m2) = (gap.first_excess, gap.second_excess);
    let lower = (-m2 * t).exp() * (deficit_x - (m1 * t).exp_m1() * measure);
    let upper = (m1 * t).exp() * deficit_x + (m2 * t).exp_m1() * measure;
    (lower, upper)
}

/// Checks the perturbation envelopes on `t_grid` and compares the small-time
/// limits. `model_x` is the unperturbed model whose scaling both share.
pub fn perturbation_envelope(
    model_x: &LevyModel,
    model_y: &LevyModel,
    set: &OpenSet1D,
    t_grid: &[f64],
    options: &VerifyOptions,
) -> Result<PerturbationReport> {
    let gap = total_variation_gap(model_x, model_y);
    if !gap.finite {
        return Err(Error::Domain(format!("{model_x} and {model_y} differ by a Lévy measure of infinite total variation")));
    }
    let predict = options.predict_options();
    let target_x = predict_limit(model_x, set, &predict)?;
    let target_y = predict_limit(model_y, set, &predict)?;
    let scaling = target_x.scaling.clone();
    let measure = set.measure();
    let config = options.survival_config();
    let engine_x = hybrid_engine(model_x, set, target_x.route, Quantity::Spectral)?;
    let engine_y = hybrid_engine(model_y, set, target_y.route, Quantity::Spectral)?;
    let mut rows = Vec::with_capacity(t_grid.len());
    for (k, &t) in t_grid.iter().enumerate() {
        let (dx, _) = spectral_deficit(model_x, set, t, &config, RngStream::new(options.seed, k as u64), engine_x.as_ref())?;
        let (dy, _) =
            spectral_deficit(model_y, set, t, &config, RngStream::new(options.seed, (1 << 20) + k as u64), engine_y.as_ref())?;
        let (lower, upper) = envelope(&gap, measure, t, dx.mean);
        let slack = |factor: f64| 2.0 * dy.stderr.hypot(factor * dx.stderr);
        let holds = dy.mean >= lower - slack((-gap.second_excess * t).exp())
            && dy.mean <= upper + slack((gap.first_excess * t).exp());
        let f = scaling.factor(t);
        rows.push(EnvelopeRow { t, deficit_x: dx, deficit_y: dy, lower, upper, scaled_x: dx.mean * f, scaled_y: dy.mean * f, holds });
    }
    let series = |pick: fn(&EnvelopeRow) -> McEstimate| -> Result<DeficitSeries> {
        let mut s = DeficitSeries::new(&scaling.to_string());
        for r in &rows {
            let e = pick(r);
            let f = scaling.factor(r.t);
            s.push(r.t, e.mean * f, e.stderr * f)?;
        }
        Ok(s)
    };
    let basis = target_x.basis();
    let limit_x = heat::limit_extrapolate(&series(|r| r.deficit_x)?, basis)?;
    let limit_y = heat::limit_extrapolate(&series(|r| r.deficit_y)?, basis)?;
    let declared = target_x.declared_tolerance();
    let (limits_agree, tolerance) = match target_x.route {
        Route::BoundedVariation => {
            let check = |l: &Extrapolation, t: &TheoremTarget| {
                let v = t.value().unwrap_or(f64::NAN);
                let tol = (declared * v.abs()).max(3.0 * l.uncertainty.hypot(t.uncertainty()));
                ((l.limit - v).abs() <= tol, tol)
            };
            let (ok_x, tol_x) = check(&limit_x, &target_x);
            let (ok_y, tol_y) = check(&limit_y, &target_y);
            (ok_x && ok_y, tol_x.max(tol_y))
        }
        _ => {
            let mid = 0.5 * (limit_x.limit + limit_y.limit);
            let tol = (declared * mid.abs()).max(3.0 * limit_x.uncertainty.hypot(limit_y.uncertainty));
            ((limit_x.limit - limit_y.limit).abs() <= tol, tol)
        }
    };
    let envelopes_hold = rows.iter().all(|r| r.holds);
    Ok(PerturbationReport {
        model_x: model_x.clone(),
        model_y: model_y.clone(),
        set: set.to_string(),
        gap,
        scaling,
        rows,
        target_x,
        target_y,
        limit_x,
        limit_y,
        limits_agree,
        tolerance,
        envelopes_hold,
        pass: limits_agree && envelopes_hold,
    })
}
