//! Numerical quadrature.
//!
//! * Globally adaptive Gauss–Kronrod (7/15) for finite intervals, generic over
//!   real and complex integrands.
//! * Geometric panelling for power-law tails on `[a, ∞)`.
//! * Fourier cosine transforms `∫_0^∞ cos(xξ) g(ξ) dξ`: Kronrod panels aligned
//!   with the zeros of the cosine, and a Wynn epsilon accelerated tail.

use std::collections::BinaryHeap;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

/// Field of integrand values: `f64` or `Complex64`.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
    + Div<Self, Output = Self>
    + Send
    + Sync
{
    fn zero() -> Self;
    fn modulus(self) -> f64;
    fn recip(self) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn recip(self) -> Self {
        1.0 / self
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn recip(self) -> Self {
        self.inv()
    }
}

/// Absolute and relative error targets.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel, max_intervals: 2000 }
    }

    pub fn with_max_intervals(mut self, n: usize) -> Self {
        self.max_intervals = n;
        self
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value)
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-12, 1e-10)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod panel; returns (estimate, error estimate).
pub fn gk15<T: Scalar, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> (T, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k = k + s * WGK[j];
        if j % 2 == 1 {
            g = g + s * WG[j / 2];
        }
    }
    let k = k * h;
    let g = g * h;
    (k, (k - g).modulus())
}

struct Segment<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Segment<T> {}
impl<T> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive integration over `[a, b]`.
pub fn integrate<T: Scalar, F: Fn(f64) -> T>(f: F, a: f64, b: f64, tol: &Tolerance) -> QuadResult<T> {
    integrate_points(f, &[a, b], tol)
}

/// Adaptive integration over `[p_0, p_last]` with the interior points taken
/// as initial subdivision boundaries (kinks, singularities, panel edges).
pub fn integrate_points<T: Scalar, F: Fn(f64) -> T>(f: F, points: &[f64], tol: &Tolerance) -> QuadResult<T> {
    assert!(points.len() >= 2);
    let mut heap = BinaryHeap::new();
    let mut total = T::zero();
    let mut total_err = 0.0;
    let mut evals = 0;
    for w in points.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (v, e) = gk15(&f, w[0], w[1]);
        evals += 15;
        total = total + v;
        total_err += e;
        heap.push(Segment { a: w[0], b: w[1], value: v, error: e });
    }
    let mut converged = total_err <= tol.target(total.modulus());
    while !converged && heap.len() < tol.max_intervals {
        let seg = match heap.pop() {
            Some(s) => s,
            None => break,
        };
        let m = 0.5 * (seg.a + seg.b);
        if m <= seg.a || m >= seg.b {
            // Interval can no longer be split in floating point.
            heap.push(seg);
            break;
        }
        let (v1, e1) = gk15(&f, seg.a, m);
        let (v2, e2) = gk15(&f, m, seg.b);
        evals += 30;
        total = total - seg.value + v1 + v2;
        total_err += e1 + e2 - seg.error;
        heap.push(Segment { a: seg.a, b: m, value: v1, error: e1 });
        heap.push(Segment { a: m, b: seg.b, value: v2, error: e2 });
        converged = total_err <= tol.target(total.modulus());
    }
    // Re-sum to shed accumulated cancellation from the running updates.
    let mut value = T::zero();
    let mut error = 0.0;
    for s in heap.iter() {
        value = value + s.value;
        error += s.error;
    }
    QuadResult { value, error, evaluations: evals, converged: converged || error <= tol.target(value.modulus()) }
}

/// `∫_a^∞ f` for `a > 0` and integrands with at least power-law decay.
///
/// The range is cut into geometric panels `[a 2^k, a 2^(k+1)]`; integration
/// stops once several consecutive panels are negligible against the running
/// total.
pub fn integrate_tail<T: Scalar, F: Fn(f64) -> T>(f: F, a: f64, tol: &Tolerance) -> QuadResult<T> {
    assert!(a > 0.0, "integrate_tail needs a > 0");
    let mut total = T::zero();
    let mut err = 0.0;
    let mut evals = 0;
    let mut lo = a;
    let mut prev: Option<f64> = None;
    let panel_tol = Tolerance { abs: tol.abs * 0.05, rel: tol.rel * 0.1, max_intervals: 200 };
    for _ in 0..4000 {
        let hi = lo * 2.0;
        // log substitution: ξ = e^u
        let g = |u: f64| {
            let x = u.exp();
            f(x) * x
        };
        let r = integrate(g, lo.ln(), hi.ln(), &panel_tol);
        evals += r.evaluations;
        total = total + r.value;
        err += r.error;
        let m = r.value.modulus();
        if let Some(p) = prev {
            let ratio = if p > 0.0 { m / p } else { 0.0 };
            if m <= 0.1 * tol.target(total.modulus()) && ratio < 0.97 {
                // Geometric remainder of the panel sequence.
                let rest = m * ratio / (1.0 - ratio);
                return QuadResult { value: total, error: err + rest, evaluations: evals, converged: true };
            }
        }
        prev = Some(m);
        lo = hi;
        if !lo.is_finite() {
            break;
        }
    }
    QuadResult { value: total, error: err, evaluations: evals, converged: false }
}

/// `∫_0^b f` for integrands with an integrable singularity at 0.
///
/// Geometric panels `[b 2^-(k+1), b 2^-k]` are summed until the panel
/// contributions become negligible. `converged = false` signals divergence
/// (panels stop shrinking before the range reaches the smallest normal float).
pub fn integrate_to_zero<T: Scalar, F: Fn(f64) -> T>(f: F, b: f64, tol: &Tolerance) -> QuadResult<T> {
    assert!(b > 0.0, "integrate_to_zero needs b > 0");
    let mut total = T::zero();
    let mut err = 0.0;
    let mut evals = 0;
    let mut hi = b;
    let mut prev: Option<f64> = None;
    let panel_tol = Tolerance { abs: tol.abs * 0.05, rel: tol.rel * 0.1, max_intervals: 200 };
    while hi > 1e-300 {
        let lo = hi * 0.5;
        let g = |u: f64| {
            let x = u.exp();
            f(x) * x
        };
        let r = integrate(g, lo.ln(), hi.ln(), &panel_tol);
        evals += r.evaluations;
        total = total + r.value;
        err += r.error;
        let m = r.value.modulus();
        if let Some(p) = prev {
            let ratio = if p > 0.0 { m / p } else { 0.0 };
            if m <= 0.1 * tol.target(total.modulus()) && ratio < 0.97 {
                let rest = m * ratio / (1.0 - ratio);
                return QuadResult { value: total, error: err + rest, evaluations: evals, converged: true };
            }
        }
        prev = Some(m);
        hi = lo;
    }
    QuadResult { value: total, error: err, evaluations: evals, converged: false }
}

/// `∫_lo^∞ cos(xξ) g(ξ) dξ` for `x > 0` and `g` smooth and decaying on
/// `[lo, ∞)`: zero-aligned half-period panels with Wynn acceleration.
pub fn oscillatory_tail<T: Scalar, G: Fn(f64) -> T>(g: G, x: f64, lo: f64, tol: &Tolerance) -> QuadResult<T> {
    let x = x.abs();
    assert!(x > 0.0, "oscillatory_tail needs x > 0");
    let half = std::f64::consts::PI / x;
    let f = |xi: f64| g(xi) * (x * xi).cos();
    // First zero of cos(xξ) at or beyond lo.
    let k0 = (lo / half - 0.5).ceil().max(0.0);
    let first_zero = ((k0 + 0.5) * half).max(lo);
    let mut head = integrate(&f, lo, first_zero, tol);
    if first_zero <= lo {
        head.value = T::zero();
        head.error = 0.0;
    }
    let mut partial = Vec::with_capacity(64);
    let mut s = T::zero();
    let mut evals = head.evaluations;
    let mut a = first_zero;
    let mut est = T::zero();
    let mut last_est: Option<T> = None;
    let mut change = f64::INFINITY;
    for i in 0..400 {
        let (v, _) = gk15(&f, a, a + half);
        evals += 15;
        s = s + v;
        partial.push(s);
        a += half;
        if i >= 4 {
            est = wynn_epsilon(&partial).0;
            if let Some(p) = last_est {
                change = (est - p).modulus();
                if change <= tol.target((head.value + est).modulus().max(1e-300)) {
                    break;
                }
            }
            last_est = Some(est);
            if partial.len() > 40 {
                partial.drain(0..partial.len() - 40);
            }
        }
    }
    let converged = head.converged && change <= 10.0 * tol.target((head.value + est).modulus().max(1e-300));
    QuadResult { value: head.value + est, error: head.error + change, evaluations: evals, converged }
}

/// Wynn's epsilon algorithm applied to a sequence of partial sums; returns
/// the final accelerated estimate and the change between the last two
/// estimates.
pub fn wynn_epsilon<T: Scalar>(seq: &[T]) -> (T, f64) {
    let n = seq.len();
    if n < 3 {
        let last = *seq.last().expect("non-empty sequence");
        let prev = if n == 2 { seq[0] } else { last };
        return (last, (last - prev).modulus());
    }
    // e[k] holds column k of the epsilon table for the current diagonal.
    let mut prev_col: Vec<T> = vec![T::zero(); n + 1];
    let mut cur_col: Vec<T> = seq.to_vec();
    let mut best = *seq.last().unwrap();
    let mut best_prev = seq[n - 2];
    let mut k = 0;
    while cur_col.len() > 1 {
        let mut next = Vec::with_capacity(cur_col.len() - 1);
        let mut degenerate = false;
        for j in 0..cur_col.len() - 1 {
            let d = cur_col[j + 1] - cur_col[j];
            if d.modulus() < 1e-300 {
                degenerate = true;
                break;
            }
            let base = if k == 0 { T::zero() } else { prev_col[j + 1] };
            next.push(base + d.recip());
        }
        if degenerate {
            break;
        }
        k += 1;
        prev_col = cur_col;
        cur_col = next;
        if k % 2 == 0 && !cur_col.is_empty() {
            let m = cur_col.len();
            best = cur_col[m - 1];
            best_prev = if m >= 2 { cur_col[m - 2] } else { prev_col[prev_col.len() - 2] };
        }
    }
    (best, (best - best_prev).modulus())
}

/// Options for [`cosine_transform`].
#[derive(Debug, Clone, Copy)]
pub struct OscOptions {
    /// Beyond this frequency the integrand is smooth and slowly varying.
    pub knee: f64,
    pub tol: Tolerance,
    /// Cap on the number of half-period panels before the tail starts.
    pub max_panels: usize,
}

impl OscOptions {
    pub fn new(knee: f64) -> Self {
        Self { knee, tol: Tolerance::new(1e-13, 1e-11), max_panels: 400_000 }
    }
}

/// `∫_0^∞ cos(xξ) g(ξ) dξ` for `g` decaying at infinity.
///
/// For `x = 0` the result is the plain integral of `g`, which must then be
/// integrable. Returns `None` if more than `max_panels` panels would be
/// needed before the tail.
pub fn cosine_transform<T: Scalar, G: Fn(f64) -> T>(g: G, x: f64, opts: &OscOptions) -> Option<QuadResult<T>> {
    let x = x.abs();
    let knee = opts.knee.max(1e-300);
    if x == 0.0 {
        let head = integrate(&g, 0.0, knee, &opts.tol);
        let tail = integrate_tail(&g, knee, &opts.tol);
        return Some(QuadResult {
            value: head.value + tail.value,
            error: head.error + tail.error,
            evaluations: head.evaluations + tail.evaluations,
            converged: head.converged && tail.converged,
        });
    }
    let half = std::f64::consts::PI / x;
    // Zeros of cos(xξ) sit at (k + 1/2) π / x.
    let k0 = (knee / half - 0.5).ceil().max(0.0);
    let first_zero = (k0 + 0.5) * half;
    let n_panels = (k0 as usize) + 1;
    if n_panels > opts.max_panels {
        return None;
    }
    let f = |xi: f64| g(xi) * (x * xi).cos();
    let mut pts = Vec::with_capacity(n_panels + 1);
    pts.push(0.0);
    for k in 0..n_panels {
        pts.push((k as f64 + 0.5) * half);
    }
    debug_assert!((pts[pts.len() - 1] - first_zero).abs() <= 1e-9 * first_zero.max(1.0));
    let head_tol = Tolerance { max_intervals: opts.tol.max_intervals.max(4 * n_panels + 64), ..opts.tol };
    let head = integrate_points(&f, &pts, &head_tol);
    let tail_tol = Tolerance { abs: opts.tol.abs.max(opts.tol.rel * head.value.modulus()), ..opts.tol };
    let tail = oscillatory_tail(&g, x, first_zero, &tail_tol);
    Some(QuadResult {
        value: head.value + tail.value,
        error: head.error + tail.error,
        evaluations: head.evaluations + tail.evaluations,
        converged: head.converged && tail.converged,
    })
}
