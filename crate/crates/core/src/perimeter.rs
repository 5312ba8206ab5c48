//! Lévy perimeter `Per_X(Ω) = ∫_Ω ν(Ω^c - x) dx = ∫ f_Ω(y) ν(dy)`.
//!
//! `f_Ω` is piecewise linear with breakpoints at endpoint differences, so each
//! cell reduces to the moments `∫ν` and `∫yν` of the Lévy density. For stable
//! and truncated stable models there is also a pairwise closed form,
//! `Σ_i Per(I_i) - Σ_{i≠j} W(I_i, I_j)`, which scales to thousands of
//! intervals.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::OpenSet1D;
use crate::levy::{LevyModel, ModelKind};
use crate::special::stable_constant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PerimeterMethod {
    Cells,
    Pairwise,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerimeterResult {
    /// `+∞` when diverging.
    pub value: f64,
    pub diverging: bool,
    /// `(δ, 2∫_δ^∞ f_Ω ν)` for δ = 1, 0.1, …, 1e-150.
    pub inner_cutoff_trace: Vec<(f64, f64)>,
    /// Gap between `value` and the smallest-cutoff trace entry.
    pub quadrature_error: f64,
    pub method: PerimeterMethod,
}

/// Slope of the trace against `ln(1/δ)` over its last decade above which the
/// integral is declared divergent.
pub const DIVERGENCE_SLOPE: f64 = 1e-3;

const TRACE_DECADES: i32 = 150;

fn check_model(model: &LevyModel) -> Result<()> {
    if !model.is_symmetric() {
        return Err(Error::Unsupported(format!("{model} has an asymmetric Lévy measure")));
    }
    Ok(())
}

/// `Per_X(Ω)` with cutoff trace and divergence flag.
pub fn perimeter(model: &LevyModel, set: &OpenSet1D) -> Result<PerimeterResult> {
    check_model(model)?;
    if !model.has_jumps() {
        return Ok(PerimeterResult {
            value: 0.0,
            diverging: false,
            inner_cutoff_trace: (0..=TRACE_DECADES).map(|k| (10f64.powi(-k), 0.0)).collect(),
            quadrature_error: 0.0,
            method: PerimeterMethod::Cells,
        });
    }
    if closed_form_g(model).is_some() && set.len() > 64 {
        return pairwise_result(model, set);
    }
    cells_result(model, set)
}

struct Cell {
    lo: f64,
    hi: f64,
    /// f(y) = intercept + slope·y on the cell.
    intercept: f64,
    slope: f64,
}

fn deficiency_cells(set: &OpenSet1D) -> (f64, Vec<Cell>, f64) {
    let bp = set.deficiency_breakpoints();
    let mut cells = Vec::with_capacity(bp.len());
    let f: Vec<f64> = bp.iter().map(|&d| set.deficiency(d)).collect();
    let s0 = f[0] / bp[0];
    for k in 0..bp.len() - 1 {
        let slope = (f[k + 1] - f[k]) / (bp[k + 1] - bp[k]);
        cells.push(Cell { lo: bp[k], hi: bp[k + 1], intercept: f[k] - slope * bp[k], slope });
    }
    (s0, cells, bp[0])
}

fn cell_integral(model: &LevyModel, c: &Cell, from: f64) -> f64 {
    let lo = c.lo.max(from);
    if lo >= c.hi {
        return 0.0;
    }
    let mut v = 0.0;
    if c.intercept != 0.0 {
        v += c.intercept * model.jump_moment(0, lo, c.hi);
    }
    if c.slope != 0.0 {
        v += c.slope * model.jump_moment(1, lo, c.hi);
    }
    v
}

fn cells_result(model: &LevyModel, set: &OpenSet1D) -> Result<PerimeterResult> {
    let (s0, cells, d1) = deficiency_cells(set);
    let measure = set.measure();
    let dlast = cells.last().map_or(d1, |c| c.hi);
    let far = measure * model.jump_moment(0, dlast, f64::INFINITY);
    let above = |delta: f64| -> f64 {
        let mut v = if delta <= dlast { far } else { measure * model.jump_moment(0, delta, f64::INFINITY) };
        for c in &cells {
            v += cell_integral(model, c, delta);
        }
        if delta < d1 {
            v += s0 * model.jump_moment(1, delta, d1);
        }
        2.0 * v
    };
    let trace: Vec<(f64, f64)> = (0..=TRACE_DECADES).map(|k| {
        let d = 10f64.powi(-k);
        (d, above(d))
    }).collect();
    let diverging = trace_diverges(&trace);
    let value = if diverging {
        f64::INFINITY
    } else {
        let near = model.jump_moment(1, 0.0, d1);
        if near.is_finite() {
            above(d1) + 2.0 * s0 * near
        } else {
            f64::INFINITY
        }
    };
    let quadrature_error = if value.is_finite() { (value - trace.last().unwrap().1).abs() } else { f64::INFINITY };
    Ok(PerimeterResult { value, diverging: diverging || !value.is_finite(), inner_cutoff_trace: trace, quadrature_error, method: PerimeterMethod::Cells })
}

fn trace_diverges(trace: &[(f64, f64)]) -> bool {
    let n = trace.len();
    let (d0, v0) = trace[n - 2];
    let (d1, v1) = trace[n - 1];
    if !v1.is_finite() {
        return true;
    }
    let slope = (v1 - v0) / (d0 / d1).ln();
    slope > DIVERGENCE_SLOPE
}

/// `G` with `G'' = ν` on `(0, ∞)` and `G(0) = 0`, with `G'(∞)`; available in
/// closed form for stable and truncated stable densities with α < 1.
fn closed_form_g(model: &LevyModel) -> Option<(impl Fn(f64) -> f64, f64)> {
    let (alpha, truncated) = match model.kind() {
        ModelKind::Stable { alpha } => (alpha, false),
        ModelKind::Truncated { alpha } => (alpha, true),
        _ => return None,
    };
    if alpha >= 1.0 {
        return None;
    }
    let c = stable_constant(1, alpha);
    let k = c / (alpha * (1.0 - alpha));
    let g = move |z: f64| {
        if truncated && z > 1.0 {
            // linear continuation: G(1) + G'(1)(z - 1), G'(1) = -c/α
            -k - (c / alpha) * (z - 1.0)
        } else {
            -k * z.powf(1.0 - alpha)
        }
    };
    let slope_at_infinity = if truncated { -c / alpha } else { 0.0 };
    Some((g, slope_at_infinity))
}

/// `Per_X((a, a + L))`.
pub fn interval_perimeter(model: &LevyModel, length: f64) -> f64 {
    2.0 * (model.jump_moment(1, 0.0, length) + length * model.jump_moment(0, length, f64::INFINITY))
}

/// Pairwise closed form for stable or truncated stable models with α < 1.
pub fn perimeter_pairwise(model: &LevyModel, set: &OpenSet1D) -> Option<f64> {
    let (g, g_inf) = closed_form_g(model)?;
    let iv = set.intervals();
    let nu = |z: f64| model.levy_density(z);
    let mut single = 0.0;
    for &(a, b) in iv {
        // Per(I) = 2(L G'(∞) - G(L)) by parts.
        single += 2.0 * ((b - a) * g_inf - g(b - a));
    }
    let mut cross = 0.0;
    for i in 0..iv.len() {
        let (ai, bi) = iv[i];
        for &(aj, bj) in &iv[i + 1..] {
            let gap = aj - bi;
            let (li, lj) = (bi - ai, bj - aj);
            let w = if gap > 1e3 * li.max(lj) {
                // Far apart: midpoint rule, relative error O((L/gap)²).
                li * lj * nu(0.5 * (aj + bj) - 0.5 * (ai + bi))
            } else {
                g(bj - ai) - g(bj - bi) - g(aj - ai) + g(gap)
            };
            cross += w;
        }
    }
    Some(single - 2.0 * cross)
}

fn pairwise_result(model: &LevyModel, set: &OpenSet1D) -> Result<PerimeterResult> {
    let value = perimeter_pairwise(model, set).expect("closed form available");
    // Below the smallest endpoint difference f_Ω(y) = A·y exactly.
    let tops = set.augment();
    let slope = tops.a as f64;
    let dmin = min_endpoint_gap(set);
    let trace = (0..=TRACE_DECADES)
        .map(|k| 10f64.powi(-k))
        .filter(|&d| d < dmin)
        .map(|d| (d, value - 2.0 * slope * model.jump_moment(1, 0.0, d)))
        .collect::<Vec<_>>();
    let err = trace.last().map_or(0.0, |&(_, v)| (value - v).abs());
    Ok(PerimeterResult { value, diverging: false, inner_cutoff_trace: trace, quadrature_error: err, method: PerimeterMethod::Pairwise })
}

fn min_endpoint_gap(set: &OpenSet1D) -> f64 {
    let mut e: Vec<f64> = set.endpoints().into_iter().map(|(x, _)| x).collect();
    e.sort_by(f64::total_cmp);
    e.dedup();
    e.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// Named infinite families, truncated to `N` components on demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SetFamily {
    /// `∪ (n, n + n^{-b})`
    PowerHoles { b: f64 },
    /// `∪ (n, n + 1/(n (1 + ln n)^b))`
    LogHoles { b: f64 },
}

impl SetFamily {
    pub fn truncate(&self, n: usize) -> Result<OpenSet1D> {
        match *self {
            SetFamily::PowerHoles { b } => OpenSet1D::family_power_holes(b, n),
            SetFamily::LogHoles { b } => OpenSet1D::family_log_holes(b, n),
        }
    }

    pub fn component_length(&self, n: usize) -> f64 {
        let k = n as f64;
        match *self {
            SetFamily::PowerHoles { b } => k.powf(-b),
            SetFamily::LogHoles { b } => 1.0 / (k * (1.0 + k.ln()).powf(b)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Finiteness {
    Finite,
    Infinite,
}

#[derive(Debug, Clone, Serialize)]
pub struct FinitenessReport {
    /// `Σ_{i ≤ N} |Ω_i|^{1-α}`.
    pub partial_sum: f64,
    /// Estimate of `Σ_{i > N} |Ω_i|^{1-α}` (infinite for divergent families).
    pub tail_estimate: f64,
    pub verdict: Finiteness,
}

/// `Σ_i |Ω_i|^{1-α}`, the sufficient condition for a finite α-stable
/// perimeter, with a tail estimate when the set is a truncated family.
pub fn finiteness_criterion(set: &OpenSet1D, alpha: f64, family: Option<SetFamily>) -> Result<FinitenessReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("finiteness criterion needs α ∈ (0,1), got {alpha}")));
    }
    let p = 1.0 - alpha;
    let partial_sum: f64 = set.intervals().iter().map(|&(a, b)| (b - a).powf(p)).sum();
    let n = set.len() as f64;
    let (tail_estimate, verdict) = match family {
        None => (0.0, Finiteness::Finite),
        Some(SetFamily::PowerHoles { b }) => {
            let q = b * p;
            if q > 1.0 {
                ((n + 0.5).powf(1.0 - q) / (q - 1.0), Finiteness::Finite)
            } else {
                (f64::INFINITY, Finiteness::Infinite)
            }
        }
        // (n (1 + ln n)^b)^{-(1-α)} is not summable for α ∈ (0,1).
        Some(SetFamily::LogHoles { .. }) => (f64::INFINITY, Finiteness::Infinite),
    };
    Ok(FinitenessReport { partial_sum, tail_estimate, verdict })
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyTraceRow {
    pub n: usize,
    pub perimeter: f64,
    /// `perimeter` plus the summed single-interval perimeters of the
    /// components beyond `n`.
    pub tail_corrected: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyTrace {
    pub rows: Vec<FamilyTraceRow>,
    /// Least-squares slope of `ln Per_N` against `ln N`.
    pub log_slope: f64,
    /// Largest change of the tail-corrected sequence between consecutive rows.
    pub cauchy_gap: f64,
    pub verdict: Finiteness,
}

/// Perimeters of `family` truncated at each `N`, with a convergence verdict.
///
/// For a finite limit the tail `Σ_{n>N} Per(I_n)` is estimated by the
/// midpoint rule `∫_{N+1/2}^∞ Per(I_x) dx`, which is exact to O(N^{-2}) relative.
pub fn family_trace(model: &LevyModel, family: SetFamily, ns: &[usize]) -> Result<FamilyTrace> {
    if ns.len() < 2 {
        return Err(Error::InsufficientData("family trace needs at least two truncation levels".into()));
    }
    let alpha = model.alpha().ok_or_else(|| Error::Unsupported(format!("{model} has no jumps")))?;
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let set = family.truncate(n)?;
        let per = perimeter(model, &set)?;
        let tail = family_perimeter_tail(model, family, alpha, n);
        rows.push(FamilyTraceRow { n, perimeter: per.value, tail_corrected: per.value + tail });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.perimeter.ln()).collect();
    let log_slope = least_squares_slope(&xs, &ys);
    let cauchy_gap = rows.windows(2).map(|w| (w[1].tail_corrected - w[0].tail_corrected).abs()).fold(0.0, f64::max);
    let finite = alpha < 1.0 && finiteness_criterion(&family.truncate(1)?, alpha, Some(family))?.verdict == Finiteness::Finite;
    let verdict = if finite { Finiteness::Finite } else { Finiteness::Infinite };
    Ok(FamilyTrace { rows, log_slope, cauchy_gap, verdict })
}

fn family_perimeter_tail(model: &LevyModel, family: SetFamily, alpha: f64, n: usize) -> f64 {
    let SetFamily::PowerHoles { b } = family else {
        return f64::INFINITY;
    };
    if alpha >= 1.0 {
        return f64::INFINITY;
    }
    // Per(I_n) = K n^{-b(1-α)} for small components of a stable-like model.
    let k = interval_perimeter(model, 1e-6) / 1e-6f64.powf(1.0 - alpha);
    let q = b * (1.0 - alpha);
    if q <= 1.0 {
        return f64::INFINITY;
    }
    k * (n as f64 + 0.5).powf(1.0 - q) / (q - 1.0)
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundCheck {
    /// `min_y f_Ω(y) ln^b(1/y)` over the tested grid.
    pub fitted_constant: f64,
    pub holds: bool,
    /// Grid points outside `(0, 1/4)` that were skipped.
    pub skipped: Vec<f64>,
}

/// Checks `f_Ω(y) ≥ c ln^{-b}(1/y)` for the log-holes family on a grid of
/// `y ∈ (0, 1/4)` by evaluating `f_Ω` exactly.
pub fn log_lower_bound_check(b: f64, n: usize, ys: &[f64]) -> Result<LowerBoundCheck> {
    let set = OpenSet1D::family_log_holes(b, n)?;
    let mut skipped = Vec::new();
    let mut c = f64::INFINITY;
    for &y in ys {
        if !(y > 0.0 && y < 0.25) {
            skipped.push(y);
            continue;
        }
        let v = set.deficiency(y) * (1.0 / y).ln().powf(b);
        c = c.min(v);
    }
    let holds = c.is_finite() && c > 0.0;
    Ok(LowerBoundCheck { fitted_constant: if c.is_finite() { c } else { 0.0 }, holds, skipped })
}
