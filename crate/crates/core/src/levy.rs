//! Catalog of symmetric one-dimensional Lévy models.
//!
//! Conventions: `E exp(iξX_t) = exp(-t ψ(ξ))`, with `ψ(ξ) = ξ²` for Brownian
//! motion (so `Var X_t = 2t`) and `ψ(ξ) = |ξ|^α` for the α-stable family,
//! whose Lévy density is `c(1,α) |x|^{-1-α}`.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};
use crate::special::{bessel_k, gamma, stable_constant};

/// Parameters of each catalog family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelKind {
    Brownian,
    Stable { alpha: f64 },
    Relativistic { alpha: f64, mass: f64 },
    Truncated { alpha: f64 },
    LogPerturbed { alpha: f64, beta: f64 },
    Drift { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariationClass {
    Bounded,
    Unbounded,
}

/// A catalog model. Clones share the lazily built exponent table.
#[derive(Clone)]
pub struct LevyModel {
    kind: ModelKind,
    table: Arc<OnceLock<PsiTable>>,
}

impl PartialEq for LevyModel {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl fmt::Debug for LevyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LevyModel({self})")
    }
}

fn check_alpha(alpha: f64, hi_inclusive: bool) -> Result<()> {
    let ok = alpha > 0.0 && (alpha < 2.0 || (hi_inclusive && alpha == 2.0));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("alpha = {alpha} outside the admissible range")))
    }
}

impl LevyModel {
    pub fn new(kind: ModelKind) -> Result<Self> {
        let kind = match kind {
            ModelKind::Stable { alpha } => {
                check_alpha(alpha, true)?;
                if alpha == 2.0 {
                    ModelKind::Brownian
                } else {
                    kind
                }
            }
            ModelKind::Relativistic { alpha, mass } => {
                check_alpha(alpha, false)?;
                if !(mass > 0.0 && mass.is_finite()) {
                    return Err(Error::InvalidModel(format!("relativistic mass must be positive, got {mass}")));
                }
                kind
            }
            ModelKind::Truncated { alpha } => {
                check_alpha(alpha, false)?;
                kind
            }
            ModelKind::LogPerturbed { alpha, beta } => {
                check_alpha(alpha, false)?;
                if !beta.is_finite() {
                    return Err(Error::InvalidModel("beta must be finite".into()));
                }
                kind
            }
            ModelKind::Drift { gamma } => {
                if !gamma.is_finite() {
                    return Err(Error::InvalidModel("gamma must be finite".into()));
                }
                kind
            }
            ModelKind::Brownian => kind,
        };
        Ok(Self { kind, table: Arc::new(OnceLock::new()) })
    }

    pub fn brownian() -> Self {
        Self::new(ModelKind::Brownian).unwrap()
    }

    pub fn stable(alpha: f64) -> Result<Self> {
        Self::new(ModelKind::Stable { alpha })
    }

    pub fn cauchy() -> Self {
        Self::new(ModelKind::Stable { alpha: 1.0 }).unwrap()
    }

    pub fn relativistic(alpha: f64, mass: f64) -> Result<Self> {
        Self::new(ModelKind::Relativistic { alpha, mass })
    }

    pub fn truncated(alpha: f64) -> Result<Self> {
        Self::new(ModelKind::Truncated { alpha })
    }

    pub fn logperturbed(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(ModelKind::LogPerturbed { alpha, beta })
    }

    pub fn drift(gamma: f64) -> Result<Self> {
        Self::new(ModelKind::Drift { gamma })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// The stable index underlying the family (2 for Brownian motion).
    pub fn alpha(&self) -> Option<f64> {
        match self.kind {
            ModelKind::Brownian => Some(2.0),
            ModelKind::Stable { alpha }
            | ModelKind::Relativistic { alpha, .. }
            | ModelKind::Truncated { alpha }
            | ModelKind::LogPerturbed { alpha, .. } => Some(alpha),
            ModelKind::Drift { .. } => None,
        }
    }

    /// Index of regular variation of ψ at infinity.
    pub fn rv_index(&self) -> Option<f64> {
        self.alpha()
    }

    pub fn is_cauchy(&self) -> bool {
        matches!(self.kind, ModelKind::Stable { alpha } if alpha == 1.0)
    }

    pub fn is_stable(&self) -> bool {
        matches!(self.kind, ModelKind::Stable { .. } | ModelKind::Brownian)
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(self.kind, ModelKind::Drift { gamma } if gamma != 0.0)
    }

    /// Gaussian coefficient: the variance rate σ² with `Var X_t = σ² t`.
    pub fn gaussian_coeff(&self) -> f64 {
        match self.kind {
            ModelKind::Brownian => 2.0,
            _ => 0.0,
        }
    }

    /// Whether the process has paths with jumps.
    pub fn has_jumps(&self) -> bool {
        !matches!(self.kind, ModelKind::Brownian | ModelKind::Drift { .. })
    }

    /// `c(1, α)` of the underlying stable density, zero without jumps.
    pub fn stable_constant(&self) -> f64 {
        match (self.kind, self.has_jumps()) {
            (_, false) => 0.0,
            _ => stable_constant(1, self.alpha().unwrap()),
        }
    }

    /// The stable model this one perturbs, if any.
    pub fn stable_reference(&self) -> Option<LevyModel> {
        match self.kind {
            ModelKind::Relativistic { alpha, .. } | ModelKind::Truncated { alpha } | ModelKind::LogPerturbed { alpha, .. } => {
                LevyModel::stable(alpha).ok()
            }
            _ => None,
        }
    }

    /// Lévy density `ν(x)` for `x ≠ 0`.
    pub fn levy_density(&self, x: f64) -> f64 {
        let y = x.abs();
        if y == 0.0 {
            return if self.has_jumps() { f64::INFINITY } else { 0.0 };
        }
        match self.kind {
            ModelKind::Brownian | ModelKind::Drift { .. } => 0.0,
            ModelKind::Stable { alpha } => stable_constant(1, alpha) * y.powf(-1.0 - alpha),
            ModelKind::Truncated { alpha } => {
                if y <= 1.0 {
                    stable_constant(1, alpha) * y.powf(-1.0 - alpha)
                } else {
                    0.0
                }
            }
            ModelKind::LogPerturbed { alpha, beta } => {
                stable_constant(1, alpha) * (2.0 + 1.0 / y).ln().powf(beta) * y.powf(-1.0 - alpha)
            }
            ModelKind::Relativistic { alpha, mass } => relativistic_density(alpha, mass, y),
        }
    }

    /// Characteristic exponent ψ(ξ). For the drift model this returns the
    /// real part, which is zero.
    pub fn psi(&self, xi: f64) -> f64 {
        let x = xi.abs();
        if x == 0.0 {
            return 0.0;
        }
        match self.kind {
            ModelKind::Brownian => x * x,
            ModelKind::Stable { alpha } => x.powf(alpha),
            ModelKind::Relativistic { alpha, mass } => {
                let m2 = mass.powf(2.0 / alpha);
                // (x² + m2)^{α/2} - m, written to keep relative accuracy for small x.
                let r = x * x / m2;
                mass * (0.5 * alpha * r.ln_1p()).exp_m1()
            }
            ModelKind::Truncated { alpha } => truncated_psi(alpha, x),
            ModelKind::LogPerturbed { alpha, beta } => logperturbed_psi(alpha, beta, x),
            ModelKind::Drift { .. } => 0.0,
        }
    }

    fn needs_table(&self) -> bool {
        matches!(self.kind, ModelKind::LogPerturbed { .. })
    }

    /// ψ for inner loops: closed forms where available, otherwise a cubic
    /// Hermite table in log-log coordinates (relative accuracy ~1e-9).
    pub fn psi_fast(&self, xi: f64) -> f64 {
        if !self.needs_table() {
            return self.psi(xi);
        }
        let x = xi.abs();
        if x == 0.0 {
            return 0.0;
        }
        self.table.get_or_init(|| PsiTable::build(|u| self.psi(u))).eval(x)
    }

    /// Checks that ψ is nondecreasing on a log grid of `[1e-6, 1e8]`.
    pub fn monotonicity_audit(&self) -> bool {
        let mut prev = 0.0;
        for k in 0..=280 {
            let xi = 10f64.powf(-6.0 + k as f64 * 0.05);
            let v = self.psi(xi);
            if v < prev * (1.0 - 1e-12) {
                return false;
            }
            prev = v;
        }
        true
    }

    /// `ψ*(s) = sup_{|ξ| ≤ s} ψ(ξ)`; equals ψ for every catalog model.
    pub fn psi_star(&self, s: f64) -> f64 {
        self.psi(s)
    }

    /// Generalised inverse `inf{s ≥ 0 : ψ*(s) ≥ u}`.
    pub fn psi_inverse(&self, u: f64) -> f64 {
        assert!(u >= 0.0, "psi_inverse needs u ≥ 0");
        if u == 0.0 {
            return 0.0;
        }
        match self.kind {
            ModelKind::Brownian => u.sqrt(),
            ModelKind::Stable { alpha } => u.powf(1.0 / alpha),
            ModelKind::Relativistic { alpha, mass } => {
                let m2 = mass.powf(2.0 / alpha);
                // ((u+m)^{2/α} - m^{2/α})^{1/2}, via expm1 for small u
                (m2 * ((2.0 / alpha) * (u / mass).ln_1p()).exp_m1()).sqrt()
            }
            ModelKind::Drift { .. } => f64::INFINITY,
            _ => self.invert_numerically(u),
        }
    }

    fn invert_numerically(&self, u: f64) -> f64 {
        // ψ is increasing; bracket in log scale, then bisect.
        let mut lo = 1.0f64;
        let mut hi = 1.0f64;
        while self.psi(lo) >= u {
            lo *= 0.25;
            if lo < 1e-300 {
                return 0.0;
            }
        }
        while self.psi(hi) < u {
            hi *= 4.0;
            if hi > 1e300 {
                return f64::INFINITY;
            }
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if self.psi(mid) >= u {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi / lo - 1.0 < 1e-14 {
                break;
            }
        }
        hi
    }

    /// `∫_lo^hi y^k ν(y) dy` over positive `y` (one side of the symmetric
    /// measure). `lo = 0` and `hi = ∞` are allowed where the integral exists.
    pub fn jump_moment(&self, k: i32, lo: f64, hi: f64) -> f64 {
        assert!(0.0 <= lo && lo <= hi);
        if lo == hi || !self.has_jumps() {
            return 0.0;
        }
        match self.kind {
            ModelKind::Stable { alpha } => power_moment(stable_constant(1, alpha), alpha, k, lo, hi),
            ModelKind::Truncated { alpha } => {
                let hi = hi.min(1.0);
                if lo >= hi {
                    0.0
                } else {
                    power_moment(stable_constant(1, alpha), alpha, k, lo, hi)
                }
            }
            _ => self.numeric_moment(k, lo, hi),
        }
    }

    fn numeric_moment(&self, k: i32, lo: f64, hi: f64) -> f64 {
        let f = |y: f64| y.powi(k) * self.levy_density(y);
        let tol = Tolerance::new(1e-300, 1e-11);
        let mut total = 0.0;
        let mid_lo = if lo == 0.0 { hi.min(1.0) } else { lo };
        if lo == 0.0 {
            let r = quad::integrate_to_zero(f, mid_lo, &tol);
            if !r.converged {
                return f64::INFINITY;
            }
            total += r.value;
        }
        if hi.is_infinite() {
            let split = mid_lo.max(1.0);
            if split > mid_lo {
                total += quad::integrate_points(f, &log_points(mid_lo, split), &tol).value;
            }
            let r = quad::integrate_tail(f, split, &tol);
            if !r.converged {
                return f64::INFINITY;
            }
            total += r.value;
        } else if hi > mid_lo {
            total += quad::integrate_points(f, &log_points(mid_lo, hi), &tol).value;
        }
        total
    }

    /// Two-sided tail mass `ν(|y| > r)`.
    pub fn tail_mass(&self, r: f64) -> f64 {
        2.0 * self.jump_moment(0, r, f64::INFINITY)
    }

    /// Pruitt's `h(r) = σ² r^{-2} + ∫ min(1, y²/r²) ν(dy)`.
    pub fn pruitt_h(&self, r: f64) -> f64 {
        assert!(r > 0.0);
        let gauss = self.gaussian_coeff() / (r * r);
        let drift = match self.kind {
            ModelKind::Drift { gamma } => gamma.abs() / r,
            _ => 0.0,
        };
        if !self.has_jumps() {
            return gauss + drift;
        }
        if let ModelKind::Stable { alpha } = self.kind {
            let c = stable_constant(1, alpha);
            return 2.0 * c * r.powf(-alpha) * (1.0 / (2.0 - alpha) + 1.0 / alpha);
        }
        let inner = self.jump_moment(2, 0.0, r) / (r * r);
        let outer = self.jump_moment(0, r, f64::INFINITY);
        gauss + drift + 2.0 * (inner + outer)
    }

    /// Bounded or unbounded variation.
    pub fn variation_class(&self) -> VariationClass {
        let bounded = match self.kind {
            ModelKind::Brownian => false,
            ModelKind::Drift { .. } => true,
            ModelKind::Stable { alpha } | ModelKind::Relativistic { alpha, .. } | ModelKind::Truncated { alpha } => alpha < 1.0,
            ModelKind::LogPerturbed { alpha, beta } => alpha < 1.0 || (alpha == 1.0 && beta < -1.0),
        };
        if bounded {
            VariationClass::Bounded
        } else {
            VariationClass::Unbounded
        }
    }

    /// `∫_{|y| ≤ 1} |y| ν(dy)` evaluated numerically; `None` when the
    /// integral diverges.
    pub fn small_jump_first_moment(&self) -> Option<f64> {
        if !self.has_jumps() {
            return Some(0.0);
        }
        let f = |y: f64| y * self.levy_density(y);
        let r = quad::integrate_to_zero(f, 1.0, &Tolerance::new(1e-300, 1e-9));
        r.converged.then_some(2.0 * r.value)
    }

    /// Drift in the bounded-variation form `ψ(ξ) = iγ₀ξ + ∫(1 - e^{iξy}) ν(dy)`.
    pub fn drift_gamma0(&self) -> Option<f64> {
        match (self.variation_class(), self.kind) {
            (VariationClass::Unbounded, _) => None,
            (_, ModelKind::Drift { gamma }) => Some(-gamma),
            _ => Some(0.0),
        }
    }
}

/// Scaling of the heat-content deficit by the stable index alone:
/// `t^{1/α}` for α ∈ (1,2], `t ln(1/t)` at α = 1, `t` for α ∈ (0,1).
pub fn scaling_function(alpha: f64) -> Result<impl Fn(f64) -> f64> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::Domain(format!("alpha = {alpha} outside (0, 2]")));
    }
    Ok(move |t: f64| {
        if alpha > 1.0 {
            t.powf(1.0 / alpha)
        } else if alpha == 1.0 {
            t * (1.0 / t).ln()
        } else {
            t
        }
    })
}

fn power_moment(c: f64, alpha: f64, k: i32, lo: f64, hi: f64) -> f64 {
    let p = k as f64 - alpha;
    if p == 0.0 {
        return c * (hi / lo).ln();
    }
    let h = if hi.is_infinite() {
        if p > 0.0 {
            return f64::INFINITY;
        }
        0.0
    } else {
        hi.powf(p)
    };
    let l = if lo == 0.0 {
        if p < 0.0 {
            return f64::INFINITY;
        }
        0.0
    } else {
        lo.powf(p)
    };
    c * (h - l) / p
}

fn log_points(lo: f64, hi: f64) -> Vec<f64> {
    let mut pts = vec![lo];
    let mut x = lo * 4.0;
    while x < hi {
        pts.push(x);
        x *= 4.0;
    }
    pts.push(hi);
    pts
}

/// Relativistic stable density: subordination of Brownian motion by a
/// tempered (α/2)-stable subordinator with tempering `θ = m^{2/α}`.
fn relativistic_density(alpha: f64, mass: f64, y: f64) -> f64 {
    let beta = 0.5 * alpha;
    let theta = mass.powf(2.0 / alpha);
    let order = 0.5 * (1.0 + alpha);
    let z = y * theta.sqrt();
    let pref = beta / (gamma(1.0 - beta) * std::f64::consts::PI.sqrt());
    let k = bessel_k(order, z);
    pref * (y * y / (4.0 * theta)).powf(-0.5 * order) * k
}

/// `ν_stable(y) - ν_relativistic(y)` without cancellation:
/// `(β/Γ(1-β)) ∫_0^∞ (4πu)^{-1/2} e^{-y²/4u} u^{-1-β} (1 - e^{-θu}) du`.
pub(crate) fn relativistic_deficit_density(alpha: f64, mass: f64, y: f64) -> f64 {
    let beta = 0.5 * alpha;
    let theta = mass.powf(2.0 / alpha);
    let pref = beta / (gamma(1.0 - beta) * (4.0 * std::f64::consts::PI).sqrt());
    let f = |u: f64| u.powf(-1.5 - beta) * (-y * y / (4.0 * u)).exp() * -(-theta * u).exp_m1();
    let split = (0.25 * y * y).max(1e-300);
    let tol = Tolerance::new(1e-300, 1e-12);
    let a = quad::integrate_to_zero(f, split, &tol).value;
    let b = quad::integrate_tail(f, split, &tol).value;
    pref * (a + b)
}

fn truncated_psi(alpha: f64, x: f64) -> f64 {
    let c = stable_constant(1, alpha);
    if x <= 1.5 {
        // 2c Σ (-1)^{k+1} x^{2k} / ((2k)! (2k - α))
        let x2 = x * x;
        let mut term = 1.0; // x^{2k}/(2k)! for k = 0
        let mut sum = 0.0;
        for k in 1..60 {
            let kk = 2 * k;
            term *= x2 / ((kk - 1) as f64 * kk as f64);
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let add = sign * term / (kk as f64 - alpha);
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        return 2.0 * c * sum;
    }
    x.powf(alpha) - 2.0 * c / alpha + 2.0 * c * power_cosine_tail(alpha, x)
}

/// `∫_1^∞ cos(xy) y^{-1-α} dy = Re[e^{ix} K(-ix)]` where `K` is the
/// continued fraction of `e^{z} z^{α} Γ(-α, z)`; converges for `x ≳ 1`.
fn power_cosine_tail(alpha: f64, x: f64) -> f64 {
    use num_complex::Complex64 as C;
    let z = C::new(0.0, -x);
    let a = -alpha;
    // Modified Lentz for 1/(z+1-a- 1(1-a)/(z+3-a- 2(2-a)/(z+5-a- ...)))
    let tiny = C::new(1e-300, 0.0);
    let mut b = z + (1.0 - a);
    let mut cc = C::new(1e300, 0.0);
    let mut d = C::new(1.0, 0.0) / b;
    let mut h = d;
    for i in 1..5000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = b + d * an;
        if d.norm() < 1e-300 {
            d = tiny;
        }
        cc = b + C::new(an, 0.0) / cc;
        if cc.norm() < 1e-300 {
            cc = tiny;
        }
        d = d.inv();
        let del = d * cc;
        h *= del;
        if (del - 1.0).norm() < 1e-16 {
            break;
        }
    }
    (C::new(0.0, x).exp() * h).re
}

fn logperturbed_psi(alpha: f64, beta: f64, x: f64) -> f64 {
    let c = stable_constant(1, alpha);
    let nu = |y: f64| (2.0 + 1.0 / y).ln().powf(beta) * y.powf(-1.0 - alpha);
    let split = 1.0 / x;
    let tol = Tolerance::new(1e-300, 1e-12);
    let near = quad::integrate_to_zero(
        |y: f64| {
            let s = (0.5 * x * y).sin();
            2.0 * s * s * nu(y)
        },
        split,
        &tol,
    )
    .value;
    let mass = quad::integrate_tail(nu, split, &tol).value;
    let osc = quad::oscillatory_tail(nu, x, split, &Tolerance::new(1e-300, 1e-12)).value;
    2.0 * c * (near + mass - osc)
}

/// ψ tabulated as cubic Hermite in `(ln ξ, ln ψ)` with power-law extension
/// beyond the table.
#[derive(Debug, Clone)]
pub struct PsiTable {
    u0: f64,
    h: f64,
    lp: Vec<f64>,
    slope: Vec<f64>,
}

impl PsiTable {
    const LO: f64 = -9.0;
    const HI: f64 = 13.0;
    const PER_DECADE: usize = 48;

    pub fn build<F: Fn(f64) -> f64>(psi: F) -> Self {
        let n = ((Self::HI - Self::LO) as usize) * Self::PER_DECADE + 1;
        let u0 = Self::LO * std::f64::consts::LN_10;
        let h = std::f64::consts::LN_10 / Self::PER_DECADE as f64;
        // Two guard points on each side for the derivative stencil.
        let vals: Vec<f64> = (0..n + 4).map(|i| psi((u0 + (i as f64 - 2.0) * h).exp()).ln()).collect();
        let mut lp = Vec::with_capacity(n);
        let mut slope = Vec::with_capacity(n);
        for i in 2..n + 2 {
            lp.push(vals[i]);
            let d = (vals[i - 2] - 8.0 * vals[i - 1] + 8.0 * vals[i + 1] - vals[i + 2]) / (12.0 * h);
            slope.push(d);
        }
        Self { u0, h, lp, slope }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = x.ln();
        let n = self.lp.len();
        let pos = (u - self.u0) / self.h;
        if pos <= 0.0 {
            return (self.lp[0] + self.slope[0] * (u - self.u0)).exp();
        }
        if pos >= (n - 1) as f64 {
            let ul = self.u0 + (n - 1) as f64 * self.h;
            return (self.lp[n - 1] + self.slope[n - 1] * (u - ul)).exp();
        }
        let i = pos.floor() as usize;
        let s = pos - i as f64;
        let (p0, p1) = (self.lp[i], self.lp[i + 1]);
        let (m0, m1) = (self.slope[i] * self.h, self.slope[i + 1] * self.h);
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * p0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * p1 + (s3 - s2) * m1;
        v.exp()
    }
}

/// Result of a total-variation comparison of two Lévy densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariationGap {
    /// `∫ |ν₁ - ν₂|`.
    pub total: f64,
    /// `∫ (ν₁ - ν₂)^+`.
    pub first_excess: f64,
    /// `∫ (ν₂ - ν₁)^+`.
    pub second_excess: f64,
    /// False when the integral diverges (reported as `+∞`).
    pub finite: bool,
}

/// `ν₁(y) - ν₂(y)` for `y > 0`, computed without cancellation for the
/// catalog's perturbation pairs.
pub fn density_difference(m1: &LevyModel, m2: &LevyModel, y: f64) -> f64 {
    use ModelKind::*;
    match (m1.kind, m2.kind) {
        (a, b) if a == b => 0.0,
        (Relativistic { alpha, mass }, Stable { alpha: a2 }) if alpha == a2 => -relativistic_deficit_density(alpha, mass, y),
        (Stable { alpha: a2 }, Relativistic { alpha, mass }) if alpha == a2 => relativistic_deficit_density(alpha, mass, y),
        (Truncated { alpha }, Stable { alpha: a2 }) if alpha == a2 => {
            if y > 1.0 {
                -m2.levy_density(y)
            } else {
                0.0
            }
        }
        (Stable { alpha: a2 }, Truncated { alpha }) if alpha == a2 => {
            if y > 1.0 {
                m1.levy_density(y)
            } else {
                0.0
            }
        }
        (LogPerturbed { alpha, beta }, Stable { alpha: a2 }) if alpha == a2 => {
            m2.levy_density(y) * ((2.0 + 1.0 / y).ln().powf(beta) - 1.0)
        }
        (Stable { alpha: a2 }, LogPerturbed { alpha, beta }) if alpha == a2 => {
            m1.levy_density(y) * (1.0 - (2.0 + 1.0 / y).ln().powf(beta))
        }
        _ => m1.levy_density(y) - m2.levy_density(y),
    }
}

/// `∫ |ν₁ - ν₂|` and its Hahn–Jordan parts.
pub fn total_variation_gap(m1: &LevyModel, m2: &LevyModel) -> VariationGap {
    let diff = |y: f64| density_difference(m1, m2, y);
    // Sign changes on a log grid become integration breakpoints.
    let mut breaks = vec![1.0];
    let grid: Vec<f64> = (0..=240).map(|k| 10f64.powf(-6.0 + k as f64 * 0.05)).collect();
    let mut prev = diff(grid[0]);
    for w in grid.windows(2) {
        let cur = diff(w[1]);
        if prev != 0.0 && cur != 0.0 && prev.signum() != cur.signum() {
            let (mut lo, mut hi) = (w[0], w[1]);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if diff(mid).signum() == prev.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            breaks.push(0.5 * (lo + hi));
        }
        if cur != 0.0 {
            prev = cur;
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let tol = Tolerance::new(1e-300, 1e-10);
    let mut pos = 0.0;
    let mut neg = 0.0;
    let mut finite = true;
    let mut add = |v: f64| {
        if v > 0.0 {
            pos += v;
        } else {
            neg -= v;
        }
    };
    let lo = breaks[0];
    let r = quad::integrate_to_zero(diff, lo, &tol);
    finite &= r.converged;
    add(r.value);
    for w in breaks.windows(2) {
        add(quad::integrate_points(diff, &log_points(w[0], w[1]), &tol).value);
    }
    let r = quad::integrate_tail(diff, *breaks.last().unwrap(), &tol);
    finite &= r.converged;
    add(r.value);
    if !finite {
        return VariationGap { total: f64::INFINITY, first_excess: f64::NAN, second_excess: f64::NAN, finite: false };
    }
    VariationGap { total: 2.0 * (pos + neg), first_excess: 2.0 * pos, second_excess: 2.0 * neg, finite: true }
}

impl fmt::Display for LevyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ModelKind::Brownian => write!(f, "brownian"),
            ModelKind::Stable { alpha } if alpha == 1.0 => write!(f, "cauchy"),
            ModelKind::Stable { alpha } => write!(f, "stable:alpha={alpha}"),
            ModelKind::Relativistic { alpha, mass } => write!(f, "relativistic:alpha={alpha},m={mass}"),
            ModelKind::Truncated { alpha } => write!(f, "truncated:alpha={alpha}"),
            ModelKind::LogPerturbed { alpha, beta } => write!(f, "logperturbed:alpha={alpha},beta={beta}"),
            ModelKind::Drift { gamma } => write!(f, "drift:gamma={gamma}"),
        }
    }
}

impl FromStr for LevyModel {
    type Err = Error;

    /// Parses literals such as `stable:alpha=1.5` or `relativistic:alpha=1.5,m=2`.
    fn from_str(s: &str) -> Result<Self> {
        let perr = |d: String| Error::Parse { what: "model", detail: d };
        let s = s.trim();
        let (family, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut params = std::collections::BTreeMap::new();
        for kv in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| perr(format!("expected key=value, got {kv:?}")))?;
            let v: f64 = v.trim().parse().map_err(|e| perr(format!("{k}: {e}")))?;
            params.insert(k.trim().to_ascii_lowercase(), v);
        }
        let mut take = |key: &str| params.remove(key).ok_or_else(|| perr(format!("{family} needs parameter {key}")));
        let kind = match family.to_ascii_lowercase().as_str() {
            "brownian" => ModelKind::Brownian,
            "cauchy" => ModelKind::Stable { alpha: 1.0 },
            "stable" => ModelKind::Stable { alpha: take("alpha")? },
            "relativistic" => {
                let alpha = take("alpha")?;
                let mass = take("m").or_else(|_| take("mass"))?;
                ModelKind::Relativistic { alpha, mass }
            }
            "truncated" => ModelKind::Truncated { alpha: take("alpha")? },
            "logperturbed" => ModelKind::LogPerturbed { alpha: take("alpha")?, beta: take("beta")? },
            "drift" => ModelKind::Drift { gamma: take("gamma")? },
            other => return Err(perr(format!("unknown family {other:?}"))),
        };
        if let Some(k) = params.keys().next() {
            return Err(perr(format!("unexpected parameter {k:?}")));
        }
        LevyModel::new(kind)
    }
}

impl Serialize for LevyModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for LevyModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_examples() {
        let s = LevyModel::stable(1.5).unwrap();
        assert!((s.psi(2.0) - 2f64.powf(1.5)).abs() < 1e-14);
        assert_eq!(LevyModel::relativistic(1.0, 1.0).unwrap().psi(0.0), 0.0);
        assert_eq!(LevyModel::stable(2.0).unwrap(), LevyModel::brownian());
    }

    #[test]
    fn relativistic_psi_matches_formula() {
        let m = LevyModel::relativistic(1.5, 2.0).unwrap();
        let xi: f64 = 1.3;
        let direct = (xi * xi + 2f64.powf(4.0 / 3.0)).powf(0.75) - 2.0;
        assert!((m.psi(xi) - direct).abs() < 1e-13);
    }

    #[test]
    fn inverse_examples() {
        assert!((LevyModel::brownian().psi_inverse(4.0) - 2.0).abs() < 1e-15);
        let m = LevyModel::relativistic(1.5, 2.0).unwrap();
        let exact = (7f64.powf(4.0 / 3.0) - 2f64.powf(4.0 / 3.0)).sqrt();
        assert!((m.psi_inverse(5.0) - exact).abs() < 1e-12);
        assert!((m.psi(m.psi_inverse(5.0)) - 5.0).abs() < 1e-10);
    }

    #[test]
    fn truncated_series_and_oscillatory_branches_agree() {
        let m = LevyModel::truncated(0.5).unwrap();
        let below = truncated_psi(0.5, 1.5);
        let c = stable_constant(1, 0.5);
        let above = 1.5f64.powf(0.5) - 2.0 * c / 0.5 + 2.0 * c * power_cosine_tail(0.5, 1.5);
        assert!((below - above).abs() < 1e-11, "{below} vs {above}");
        for &x in &[1.5, 3.0, 17.0, 400.0] {
            let g = |y: f64| y.powf(-1.5);
            let quad = quad::oscillatory_tail(g, x, 1.0, &Tolerance::new(1e-16, 1e-13)).value;
            assert!((power_cosine_tail(0.5, x) - quad).abs() < 1e-11, "x={x}");
        }
        assert!(m.psi(3.0) > 0.0);
    }

    #[test]
    fn table_tracks_exact_psi() {
        for m in [LevyModel::logperturbed(1.5, 1.0).unwrap(), LevyModel::logperturbed(0.5, -1.0).unwrap()] {
            for k in 0..40 {
                let xi = 10f64.powf(-7.0 + 0.37 * k as f64);
                let rel = m.psi_fast(xi) / m.psi(xi) - 1.0;
                assert!(rel.abs() < 1e-7, "{m}: xi={xi} rel={rel}");
            }
        }
    }

    #[test]
    fn pruitt_examples() {
        let c = LevyModel::cauchy();
        assert!((c.pruitt_h(1.0) - 4.0 / std::f64::consts::PI).abs() < 1e-13);
        assert!((LevyModel::brownian().pruitt_h(2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gap_examples() {
        let s = LevyModel::stable(1.5).unwrap();
        let r = LevyModel::relativistic(1.5, 1.0).unwrap();
        let g = total_variation_gap(&r, &s);
        assert!((g.total - 1.0).abs() < 1e-6, "{g:?}");
        assert!(g.first_excess.abs() < 1e-12 && (g.second_excess - 1.0).abs() < 1e-6);
        let t = LevyModel::truncated(0.5).unwrap();
        let s5 = LevyModel::stable(0.5).unwrap();
        let g = total_variation_gap(&t, &s5);
        assert!((g.total - 2.0 * stable_constant(1, 0.5) / 0.5).abs() < 1e-8);
        assert_eq!(total_variation_gap(&s, &s).total, 0.0);
        let l = LevyModel::logperturbed(1.5, 1.0).unwrap();
        assert!(!total_variation_gap(&l, &s).finite);
    }

    #[test]
    fn relativistic_density_consistency() {
        for &y in &[1e-3, 0.1, 0.7, 2.0, 6.0] {
            let direct = LevyModel::relativistic(1.5, 1.0).unwrap().levy_density(y);
            let via_gap = stable_constant(1, 1.5) * y.powf(-2.5) - relativistic_deficit_density(1.5, 1.0, y);
            assert!((direct / via_gap - 1.0).abs() < 1e-8, "y={y}: {direct} vs {via_gap}");
        }
    }

    #[test]
    fn parse_roundtrip() {
        for lit in ["stable:alpha=1.5", "relativistic:alpha=1.5,m=2", "truncated:alpha=0.5", "logperturbed:alpha=1.5,beta=1", "brownian", "cauchy", "drift:gamma=2"] {
            let m: LevyModel = lit.parse().unwrap();
            assert_eq!(m.to_string(), lit);
        }
        assert!("stable:alpha=3".parse::<LevyModel>().is_err());
        assert!("stable".parse::<LevyModel>().is_err());
        assert!("stable:alpha=1,beta=2".parse::<LevyModel>().is_err());
    }

    #[test]
    fn variation_classes() {
        assert_eq!(LevyModel::stable(0.5).unwrap().variation_class(), VariationClass::Bounded);
        assert_eq!(LevyModel::stable(1.5).unwrap().variation_class(), VariationClass::Unbounded);
        let t = LevyModel::truncated(0.7).unwrap();
        assert_eq!(t.variation_class(), VariationClass::Bounded);
        assert!(t.small_jump_first_moment().is_some());
        assert!(LevyModel::stable(1.5).unwrap().small_jump_first_moment().is_none());
        assert_eq!(LevyModel::drift(2.0).unwrap().drift_gamma0(), Some(-2.0));
    }

    #[test]
    fn scaling_examples() {
        let f = scaling_function(2.0).unwrap();
        assert!((f(1e-4) - 1e-2).abs() < 1e-16);
        let f = scaling_function(1.0).unwrap();
        let e1 = (-1f64).exp();
        assert!((f(e1) - e1).abs() < 1e-15);
        assert_eq!(scaling_function(0.5).unwrap()(1e-3), 1e-3);
        assert!(scaling_function(2.5).is_err());
    }
}
