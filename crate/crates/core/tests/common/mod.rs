//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's quadrature or special functions.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite 20-point Gauss–Legendre over `panels` equal panels.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let rule = gauss_legendre(20);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for &(x, w) in &rule {
            total += w * f(mid + 0.5 * h * x);
        }
    }
    0.5 * h * total
}

/// Γ(x) by the Lanczos approximation (g = 7, nine terms), with reflection.
pub fn gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// Complementary error function from its continued fraction / series,
/// accurate to about 1e-14.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.0 {
        // erf series
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        while term.abs() > 1e-17 * sum.abs() {
            k += 1.0;
            term *= -x * x / k;
            sum += term / (2.0 * k + 1.0);
        }
        1.0 - 2.0 / PI.sqrt() * sum
    } else {
        // Lentz continued fraction for erfc.
        let mut f = x;
        let mut c = x;
        let mut d = 0.0;
        for n in 1..300 {
            let an = n as f64 / 2.0;
            d = x + an * d;
            d = 1.0 / d;
            c = x + an / c;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x * x).exp() / (f * PI.sqrt())
    }
}

/// `(0,1)` survival `Q(t)` of Brownian motion with variance `2t`, from the
/// Dirichlet eigenfunction series.
pub fn brownian_unit_survival(t: f64) -> f64 {
    let mut q = 0.0;
    let mut k = 1.0;
    while k < 2e5 {
        let kp = k * PI;
        q += 8.0 / (kp * kp) * (-kp * kp * t).exp();
        k += 2.0;
    }
    q
}

/// `c(1, α)` from the defining display with the Lanczos gamma.
pub fn stable_constant(alpha: f64) -> f64 {
    alpha * 2f64.powf(alpha - 1.0) * gamma((1.0 + alpha) / 2.0) / (PI.sqrt() * gamma(1.0 - alpha / 2.0))
}

/// Brute-force covariogram on a grid of cell width `h`.
pub fn grid_covariogram(intervals: &[(f64, f64)], y: f64, h: f64) -> f64 {
    let inside = |x: f64| intervals.iter().any(|&(a, b)| x > a && x < b);
    let lo = intervals.first().unwrap().0;
    let hi = intervals.last().unwrap().1;
    let n = ((hi - lo) / h).ceil() as usize;
    (0..n).filter(|&i| {
        let x = lo + (i as f64 + 0.5) * h;
        inside(x) && inside(x - y)
    })
    .count() as f64
        * h
}
