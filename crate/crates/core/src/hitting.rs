//! Point hitting for processes with `∫ 1/(1+ψ) < ∞`.
//!
//! For a symmetric process the Laplace transform of the first hitting time of
//! `y` is `E e^{-λT_y} = u_λ(y)/u_λ(0)` with resolvent density
//! `u_λ(x) = (1/π) ∫_0^∞ cos(xξ)/(λ+ψ(ξ)) dξ`, hence
//! `∫_0^∞ e^{-λt} P(T_y ≤ t) dt = u_λ(y) / (λ u_λ(0))`. The CDF comes from a
//! fixed Talbot inversion.
//!
//! The engine works with the rescaled process `κ X_{ts}`, `κ = ψ^{-1}(1/t)`,
//! so the inversion always happens at time 1, where the contour nodes are of
//! moderate size.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::laplace::Talbot;
use crate::levy::{LevyModel, ModelKind};
use crate::montecarlo::{self, McEstimate, RngStream};
use crate::quad::{self, OscOptions, Tolerance};
use crate::special::gamma;

#[derive(Debug, Clone, Copy)]
enum Resolvent {
    /// `u_s(x) = e^{-√s|x|} / (2√s)`.
    Brownian,
    /// Contour rotation onto the imaginary axis.
    Stable { alpha: f64 },
    /// Oscillatory quadrature on the real axis.
    Generic,
}

/// Hitting-time machinery for one model.
#[derive(Debug, Clone)]
pub struct HittingEngine {
    model: LevyModel,
    alpha: f64,
    talbot: Talbot,
    tolerance: f64,
    resolvent: Resolvent,
}

impl HittingEngine {
    /// Accepts models whose exponent is regularly varying with index in
    /// (1, 2]; single points are polar otherwise.
    pub fn new(model: &LevyModel) -> Result<Self> {
        let alpha = model
            .rv_index()
            .ok_or_else(|| Error::Unsupported(format!("{model}: no regular variation index")))?;
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(Error::Unsupported(format!("{model}: points are polar for index {alpha} ≤ 1")));
        }
        if !model.is_symmetric() {
            return Err(Error::Unsupported(format!("{model} is not symmetric")));
        }
        let resolvent = match model.kind() {
            ModelKind::Brownian => Resolvent::Brownian,
            ModelKind::Stable { alpha } => Resolvent::Stable { alpha },
            _ => Resolvent::Generic,
        };
        let order = Talbot::calibrate(1e-10).order;
        Ok(Self { model: model.clone(), alpha, talbot: Talbot::new(order), tolerance: 1e-6, resolvent })
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn inversion_order(&self) -> usize {
        self.talbot.order()
    }

    /// `u_λ(x)` for real `λ > 0`.
    pub fn resolvent_density(&self, lambda: f64, x: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!("resolvent needs λ > 0, got {lambda}")));
        }
        let s = Complex64::new(lambda, 0.0);
        let v = match self.resolvent {
            Resolvent::Brownian => brownian_resolvent(s, x).re,
            Resolvent::Stable { alpha } if x == 0.0 => stable_resolvent_at_zero(alpha, s).re,
            _ => {
                let psi = |xi: f64| self.model.psi_fast(xi);
                generic_resolvent(&psi, s, x, self.knee(1.0, lambda))?.re
            }
        };
        Ok(v)
    }

    /// Frequency beyond which `ψ_scaled` dominates `|s|` by a wide margin.
    fn knee(&self, kappa: f64, s_abs: f64) -> f64 {
        // ψ_t(ξ) = t ψ(κ ξ) with t = 1/ψ(κ): solve ψ(κ ξ) = 50 |s| ψ(κ).
        let target = 50.0 * s_abs.max(1.0) * self.model.psi(kappa);
        self.model.psi_inverse(target) / kappa
    }

    /// Resolvent of the process rescaled to time `t`, at complex `s`.
    fn scaled_resolvent(&self, kappa: f64, s: Complex64, x: f64) -> Result<Complex64> {
        match self.resolvent {
            Resolvent::Brownian => Ok(brownian_resolvent(s, x)),
            Resolvent::Stable { alpha } => Ok(if x == 0.0 { stable_resolvent_at_zero(alpha, s) } else { stable_resolvent(alpha, s, x) }),
            Resolvent::Generic => {
                let scale = 1.0 / self.model.psi(kappa);
                let psi = |xi: f64| scale * self.model.psi_fast(kappa * xi);
                generic_resolvent(&psi, s, x, self.knee(kappa, s.norm()))
            }
        }
    }

    /// `P(T_y ≤ t)`.
    pub fn hitting_cdf(&self, y: f64, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("hitting time horizon must be positive, got {t}")));
        }
        if y == 0.0 {
            return Ok(1.0);
        }
        let kappa = self.model.psi_inverse(1.0 / t);
        self.scaled_cdf(kappa, kappa * y.abs())
    }

    /// `P(T_u ≤ 1)` for the process rescaled by `κ`.
    fn scaled_cdf(&self, kappa: f64, u: f64) -> Result<f64> {
        if u == 0.0 {
            return Ok(1.0);
        }
        let mut failure = None;
        let v = self.talbot.invert(
            |s| match (self.scaled_resolvent(kappa, s, u), self.scaled_resolvent(kappa, s, 0.0)) {
                (Ok(num), Ok(den)) => num / (den * s),
                (Err(e), _) | (_, Err(e)) => {
                    failure = Some(e);
                    Complex64::new(0.0, 0.0)
                }
            },
            1.0,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        if !(v > -self.tolerance && v < 1.0 + self.tolerance) || !v.is_finite() {
            return Err(Error::Numerical(format!(
                "Laplace inversion gave P(T_u ≤ 1) = {v} at u = {u} (order {})",
                self.talbot.order()
            )));
        }
        Ok(v.clamp(0.0, 1.0))
    }

    /// `ψ^{-1}(1/t) ∫_0^ε P(T_y ≤ t) dy`.
    pub fn scaled_hitting_integral(&self, eps: f64, t: f64) -> Result<f64> {
        if !(eps > 0.0 && t > 0.0) {
            return Err(Error::Domain("scaled hitting integral needs ε > 0 and t > 0".into()));
        }
        let kappa = self.model.psi_inverse(1.0 / t);
        self.integrate_scaled_cdf(kappa, kappa * eps)
    }

    /// `∫_0^U P(T_u ≤ 1) du` for the process rescaled by `κ`, `U` possibly
    /// infinite (then a power-law tail is fitted past the last panel).
    fn integrate_scaled_cdf(&self, kappa: f64, upper: f64) -> Result<f64> {
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let g = |u: f64| -> f64 {
            match self.scaled_cdf(kappa, u) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            }
        };
        let tol = Tolerance::new(1e-9, 1e-8);
        // Near 0, 1 - P behaves like u^{α-1}; u = v² smooths the cusp.
        let first = upper.min(1.0);
        let head = quad::integrate(|v: f64| 2.0 * v * g(v * v), 0.0, first.sqrt(), &tol).value;
        let mut total = head;
        let mut lo = first;
        let mut last_panel = (0.0, 0.0, 0.0);
        while lo < upper {
            let hi = (2.0 * lo).min(upper);
            let r = quad::integrate(g, lo, hi, &tol).value;
            total += r;
            last_panel = (lo, hi, r);
            if upper.is_infinite() && lo > 64.0 && r < 1e-9 * total {
                break;
            }
            lo = hi;
            if upper.is_infinite() && lo > 1e9 {
                break;
            }
        }
        if upper.is_infinite() {
            // P(T_u ≤ 1) ~ K u^{-α} far out; add ∫_{hi}^∞ K u^{-α} du.
            let (_, hi, _) = last_panel;
            let k = g(hi) * hi.powf(self.alpha);
            total += k * hi.powf(1.0 - self.alpha) / (self.alpha - 1.0);
        }
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(total)
    }

    /// `∫_0^∞ P(T_u ≤ 1) du` for the model's own rescaled process. For a
    /// stable engine this is `C₁(α)`.
    pub fn hitting_integral_to_infinity(&self) -> Result<f64> {
        self.integrate_scaled_cdf(1.0, f64::INFINITY)
    }
}

/// `C₁(α) = ∫_0^∞ P(T_u ≤ 1) du = α sin(π/α) / (2 Γ(1 + 1/α))` for the
/// α-stable process, α ∈ (1, 2].
///
/// Derivation: `∫_0^∞ u_λ(y) dy = 1/(2λ)`, so the Laplace transform of
/// `t ↦ ∫ P(T_u ≤ t) du` equals `1/(2λ² u_λ(0))`, and
/// `u_λ(0) = λ^{1/α-1} / (α sin(π/α))`; invert and use self-similarity.
pub fn c1_constant(alpha: f64) -> Result<f64> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::Domain(format!("C₁ is defined for α ∈ (1, 2], got {alpha}")));
    }
    Ok(alpha * (PI / alpha).sin() / (2.0 * gamma(1.0 + 1.0 / alpha)))
}

/// Closed form and numerical check of `C₁(α)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct C1Validation {
    pub closed_form: f64,
    pub numeric: f64,
    pub relative_gap: f64,
}

/// Integrates the inverted hitting CDF and compares with [`c1_constant`].
pub fn c1_cross_validate(alpha: f64) -> Result<C1Validation> {
    let closed_form = c1_constant(alpha)?;
    let engine = HittingEngine::new(&LevyModel::stable(alpha)?)?;
    let numeric = engine.hitting_integral_to_infinity()?;
    Ok(C1Validation { closed_form, numeric, relative_gap: (numeric / closed_form - 1.0).abs() })
}

/// Monte-Carlo estimate of `E[sup_{s≤1} S_s]` for the α-stable process.
#[derive(Debug, Clone, Serialize)]
pub struct SupEstimate {
    pub alpha: f64,
    /// Richardson-extrapolated value with the `X₁⁺` control.
    pub value: McEstimate,
    pub steps: Vec<usize>,
    /// Grid maxima per level (control added back).
    pub by_level: Vec<McEstimate>,
    pub theta: f64,
}

/// Smallest budget accepted by [`expected_sup_stable`].
pub const MIN_SUP_PATHS: usize = 1000;

/// Grid steps used by [`expected_sup_stable`].
pub const SUP_STEPS: [usize; 3] = [1 << 10, 1 << 12, 1 << 14];

/// `E[sup_{s≤1} S^{(α)}_s]` from grid maxima on `n ∈ {2^10, 2^12, 2^14}`,
/// Richardson in `n^{-1/α}`, with `max - X₁⁺` sampled and
/// `E X₁⁺ = Γ(1 - 1/α)/π` added back.
pub fn expected_sup_stable(alpha: f64, paths: usize, stream: RngStream) -> Result<SupEstimate> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::Domain(format!("expected supremum is tabulated for α ∈ (1, 2], got {alpha}")));
    }
    if paths < MIN_SUP_PATHS {
        return Err(Error::InsufficientData(format!(
            "{paths} paths cannot resolve the supremum below 1% stderr; need at least {MIN_SUP_PATHS}"
        )));
    }
    // Deterministic in its arguments, and the finest grid is costly.
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize, RngStream), SupEstimate>>> = OnceLock::new();
    let key = (alpha.to_bits(), paths, stream);
    let cache = CACHE.get_or_init(Default::default);
    if let Some(hit) = cache.lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    let theta = 1.0 / alpha;
    let sample = montecarlo::stable_sup_levels(alpha, SUP_STEPS[2], SUP_STEPS.len(), theta, paths, stream)?;
    let plus = gamma(1.0 - 1.0 / alpha) / PI;
    let estimate = SupEstimate {
        alpha,
        value: sample.richardson.shifted(plus),
        steps: sample.steps,
        by_level: sample.centred.iter().map(|e| e.shifted(plus)).collect(),
        theta,
    };
    cache.lock().unwrap().insert(key, estimate.clone());
    Ok(estimate)
}

impl SupEstimate {
    /// Distance between the extrapolated value and the finest raw grid.
    pub fn extrapolation_spread(&self) -> f64 {
        self.by_level.last().map_or(0.0, |f| (self.value.mean - f.mean).abs())
    }
}

fn brownian_resolvent(s: Complex64, x: f64) -> Complex64 {
    let r = s.sqrt();
    (-r * x.abs()).exp() / (r * 2.0)
}

/// `u_s(0) = s^{1/α-1} / (α sin(π/α))`.
fn stable_resolvent_at_zero(alpha: f64, s: Complex64) -> Complex64 {
    s.powf(1.0 / alpha - 1.0) / (alpha * (PI / alpha).sin())
}

/// `u_s(x)` for the α-stable exponent, `x ≠ 0`, by rotating the Fourier
/// integral onto the imaginary axis (and collecting the residue of the only
/// pole in the right half plane, if it was crossed).
fn stable_resolvent(alpha: f64, s: Complex64, x: f64) -> Complex64 {
    let x = x.abs();
    let i = Complex64::new(0.0, 1.0);
    let rot_up = Complex64::from_polar(1.0, 0.5 * PI * alpha);
    let rot_down = rot_up.conj();
    let scale = s.norm().powf(1.0 / alpha);
    let tol = Tolerance::new(1e-15, 1e-12);
    let laplace = |rot: Complex64| -> Complex64 {
        let f = |eta: f64| Complex64::new((-x * eta).exp(), 0.0) / (s + rot * eta.powf(alpha));
        let mut pts = vec![0.0, 0.25 * scale, 0.5 * scale, scale, 2.0 * scale, 4.0 * scale];
        let cut = 4.0 * scale;
        let xr = 1.0 / x;
        if xr < cut {
            pts.insert(pts.partition_point(|&p| p < xr), xr);
        }
        let head = quad::integrate_points(f, &pts, &tol).value;
        head + quad::integrate_tail(f, cut, &tol).value
    };
    let up = i * laplace(rot_up);
    let down = -i * laplace(rot_down);
    let mut total = up + down;
    // Pole ξ^α = -s with |arg ξ| < π/2.
    let arg_neg = (-s).arg();
    let phi = arg_neg / alpha;
    if phi.abs() < 0.5 * PI {
        let xp = Complex64::from_polar(scale, phi);
        let res = |e: Complex64| e / (xp.powf(alpha - 1.0) * alpha);
        if phi > 0.0 {
            total += i * 2.0 * PI * res((i * x * xp).exp());
        } else {
            total -= i * 2.0 * PI * res((-i * x * xp).exp());
        }
    }
    total * 0.5 / PI
}

/// `u_s(x) = (1/π) ∫_0^∞ cos(xξ)/(s + ψ(ξ)) dξ` on the real axis.
fn generic_resolvent<P: Fn(f64) -> f64>(psi: &P, s: Complex64, x: f64, knee: f64) -> Result<Complex64> {
    let g = |xi: f64| Complex64::new(1.0, 0.0) / (s + psi(xi));
    let mut opts = OscOptions::new(knee.max(1.0));
    opts.tol = Tolerance::new(1e-13, 1e-11);
    let r = quad::cosine_transform(g, x, &opts)
        .ok_or_else(|| Error::Numerical(format!("resolvent at x = {x} needs too many oscillation panels")))?;
    Ok(r.value / PI)
}
