mod common;

use std::f64::consts::PI;

use levyheat::heat::{self, heat_deficit, heat_deficit_mc, hybrid_spectral_deficit, limit_extrapolate, Basis, DeficitSeries};
use levyheat::montecarlo::{RngStream, SurvivalConfig};
use levyheat::{LevyModel, OpenSet1D};

fn set(s: &str) -> OpenSet1D {
    s.parse().unwrap()
}

/// `E min(|X_t|, 1)` for the ½-stable process. Scaling gives
/// `t² E min(|X₁|, t^{-2})`; below 1 the moment `C` is a damped Fourier
/// integral, above 1 the convergent tail series of `P(|X₁| > ρ)` integrates
/// term by term.
fn half_stable_unit_deficit(t: f64) -> f64 {
    // C = 1 - (2/π) ∫ (1 - cos ξ) ξ^{-2} e^{-√ξ} dξ, with ξ = u².
    let damped = common::integrate(
        |u: f64| {
            if u == 0.0 {
                return 0.0;
            }
            let x = u * u;
            (1.0 - x.cos()) / (x * x) * (-u).exp() * 2.0 * u
        },
        0.0,
        60.0,
        4000,
    );
    let c = 1.0 - 2.0 / PI * damped;
    let mut series = 0.0;
    for k in 1..40 {
        let kf = k as f64;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let coeff = sign * common::gamma(kf / 2.0) / common::gamma(kf + 1.0) * (kf * PI / 4.0).sin();
        let integral = if k == 2 { t * t * (1.0 / (t * t)).ln() } else { (t.powf(kf) - t * t) / (1.0 - kf / 2.0) };
        series += coeff * integral;
    }
    t * t * c + 2.0 / PI * series
}

/// `E f_Ω(X_t)` against an explicit density, with panels fine enough for the
/// kinks of `f_Ω`.
fn density_oracle(s: &OpenSet1D, density: impl Fn(f64) -> f64, reach: f64) -> f64 {
    common::integrate(|y| s.deficiency(y) * density(y), -reach, reach, 4000)
}

/// Cauchy version through `y = t tan θ`, which maps the heavy tail to a
/// finite interval; `f_Ω` is even and linear between endpoint distances, so
/// each such piece gets its own panels.
fn cauchy_oracle(s: &OpenSet1D, t: f64) -> f64 {
    let ends: Vec<f64> = s.intervals().iter().flat_map(|&(a, b)| [a, b]).collect();
    let mut cuts: Vec<f64> = ends.iter().flat_map(|p| ends.iter().map(move |q| (p - q).abs())).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let theta: Vec<f64> = cuts.iter().map(|d| (d / t).atan()).chain([PI / 2.0]).collect();
    2.0 * theta.windows(2).map(|w| common::integrate(|th: f64| s.deficiency(t * th.tan()) / PI, w[0], w[1], 50)).sum::<f64>()
}

#[test]
fn half_stable_interval() {
    let m = LevyModel::stable(0.5).unwrap();
    for &t in &[1e-3, 1e-2, 0.1, 0.5] {
        let oracle = half_stable_unit_deficit(t);
        let ours = heat_deficit(&m, &set("(0,1)"), t).unwrap();
        assert!((ours / oracle - 1.0).abs() < 1e-6, "t={t}: {ours} vs {oracle}");
    }
}

#[test]
fn cauchy_interval_closed_form() {
    let m = LevyModel::cauchy();
    for &t in &[1e-5f64, 1e-2, 0.3, 4.0] {
        for &d in &[0.1f64, 1.0, 3.0] {
            let closed = d - 2.0 / PI * (d * (d / t).atan() - 0.5 * t * (1.0 + d * d / (t * t)).ln());
            let ours = heat_deficit(&m, &OpenSet1D::interval(0.0, d).unwrap(), t).unwrap();
            assert!((ours - closed).abs() < 1e-8 * closed.max(1e-3), "t={t} D={d}: {ours} vs {closed}");
        }
    }
}

#[test]
fn brownian_interval_against_erfc() {
    let m = LevyModel::brownian();
    for &t in &[1e-6f64, 1e-3, 0.2] {
        let oracle = common::integrate(|r: f64| common::erfc(r / (2.0 * t.sqrt())), 0.0, 1.0, 200);
        let ours = heat_deficit(&m, &set("(0,1)"), t).unwrap();
        assert!((ours / oracle - 1.0).abs() < 1e-8, "t={t}");
    }
}

#[test]
fn unions_against_the_density() {
    let sets = ["(0,1)|(1.5,2)", "(-1,0)|(0,0.3)|(2,4)", "(0,0.1)|(0.2,0.3)|(0.4,0.5)"];
    for lit in sets {
        let s = set(lit);
        for &t in &[1e-3f64, 0.05] {
            let sd = (2.0 * t).sqrt();
            let gauss = density_oracle(&s, |y| (-y * y / (4.0 * t)).exp() / (sd * (2.0 * PI).sqrt()), 12.0 * sd);
            let ours = heat_deficit(&LevyModel::brownian(), &s, t).unwrap();
            assert!((ours / gauss - 1.0).abs() < 1e-7, "{lit} t={t}: {ours} vs {gauss}");

            let cauchy = cauchy_oracle(&s, t);
            let ours = heat_deficit(&LevyModel::cauchy(), &s, t).unwrap();
            assert!((ours / cauchy - 1.0).abs() < 1e-5, "{lit} t={t}: {ours} vs {cauchy}");
        }
    }
}

#[test]
fn monte_carlo_agrees_with_quadrature() {
    let s = set("(0,1)|(1,2)|(3,3.5)");
    let models = ["stable:alpha=1.5", "stable:alpha=0.5", "relativistic:alpha=1,m=1", "truncated:alpha=1.5", "logperturbed:alpha=1.5,beta=1"];
    for (k, lit) in models.iter().enumerate() {
        let m: LevyModel = lit.parse().unwrap();
        let t = 1e-2;
        let quad = heat_deficit(&m, &s, t).unwrap();
        let mc = heat_deficit_mc(&m, &s, t, 100_000, RngStream::new(17, k as u64)).unwrap();
        assert!(mc.agrees_with(quad, 0.0, 4.0, 1e-3 * quad), "{lit}: {mc:?} vs {quad}");
    }
}

#[test]
fn survival_never_exceeds_heat_content() {
    let s = set("(0,1)|(1.5,2.5)");
    let cfg = SurvivalConfig { paths: 8000, steps: 256, levels: 3, bridge: true, control_variate: false };
    for (k, lit) in ["stable:alpha=1.5", "cauchy", "stable:alpha=0.5", "brownian"].iter().enumerate() {
        let m: LevyModel = lit.parse().unwrap();
        let t = 1e-2;
        let h = heat_deficit(&m, &s, t).unwrap();
        let q = heat::spectral_heat_content(&m, &s, t, &cfg, RngStream::new(30, k as u64)).unwrap();
        assert!(q.deficit.mean >= h - 3.0 * q.deficit.stderr, "{lit}: {:?} < {h}", q.deficit);
        assert!(q.survival.terminal.agrees_with(h, 0.0, 4.0, 0.0), "{lit}: {:?} vs {h}", q.survival.terminal);
    }
}

#[test]
fn null_sets_do_not_change_heat_content() {
    for lit in ["cauchy", "stable:alpha=1.5", "brownian", "stable:alpha=0.5"] {
        let m: LevyModel = lit.parse().unwrap();
        for &t in &[1e-4, 1e-2] {
            let a = heat_deficit(&m, &set("(-1,0)|(0,1)"), t).unwrap();
            let b = heat_deficit(&m, &set("(-1,1)"), t).unwrap();
            assert!((a - b).abs() < 1e-10 * b, "{lit} t={t}");
        }
    }
    // Points are polar for the Cauchy process, so the survival deficit is
    // unchanged as well.
    let cfg = SurvivalConfig { paths: 20_000, steps: 256, levels: 3, bridge: true, control_variate: true };
    let m = LevyModel::cauchy();
    let a = heat::spectral_heat_content(&m, &set("(-1,0)|(0,1)"), 1e-3, &cfg, RngStream::new(8, 0)).unwrap();
    let b = heat::spectral_heat_content(&m, &set("(-1,1)"), 1e-3, &cfg, RngStream::new(8, 1)).unwrap();
    assert!(a.deficit.agrees_with(b.deficit.mean, b.deficit.stderr, 4.0, 0.0), "{:?} vs {:?}", a.deficit, b.deficit);
}

#[test]
fn brownian_adjacent_point_hybrid() {
    // Brownian paths cannot pass 1 without hitting it: two separate unit
    // intervals.
    let t = 1e-3;
    let exact = 2.0 * (1.0 - common::brownian_unit_survival(t));
    let cfg = SurvivalConfig { paths: 20_000, steps: 256, levels: 1, bridge: true, control_variate: true };
    let h = hybrid_spectral_deficit(&LevyModel::brownian(), &set("(0,1)|(1,2)"), t, &cfg, RngStream::new(2, 0), None).unwrap();
    assert_eq!(h.adjacent, 1);
    assert!(h.deficit.agrees_with(exact, 0.0, 3.0, 0.01 * exact), "{:?} vs {exact}", h.deficit);
    let scaled = exact / t.sqrt();
    assert!((scaled / (8.0 / PI.sqrt()) - 1.0).abs() < 0.02);
}

#[test]
fn extrapolation_recovers_synthetic_limits() {
    let grid = heat::time_grid(1e-6, 1e-2, 2).unwrap();
    assert_eq!(grid.len(), 9);
    assert!((grid[0] - 1e-2).abs() < 1e-15 && (grid[8] / 1e-6 - 1.0).abs() < 1e-12);
    assert!(grid.windows(2).all(|w| w[1] < w[0]));

    let mut s = DeficitSeries::new("t");
    for &t in &grid {
        s.push(t, 1.25 - 3.0 * t.powf(0.5), 1e-4).unwrap();
    }
    let e = limit_extrapolate(&s, Basis::Power(0.5)).unwrap();
    assert!((e.limit - 1.25).abs() < 1e-9 && (e.slope + 3.0).abs() < 1e-6 && !e.non_monotone);
    assert!((e.free_theta.unwrap() - 0.5).abs() < 0.011);

    let mut s = DeficitSeries::new("t ln(1/t)");
    for &t in &grid {
        s.push(t, 0.6366 + 0.4 / (1.0 / t).ln(), 1e-4).unwrap();
    }
    assert!((limit_extrapolate(&s, Basis::InverseLog).unwrap().limit - 0.6366).abs() < 1e-9);

    let mut zigzag = DeficitSeries::new("t");
    for (k, &t) in grid.iter().enumerate() {
        zigzag.push(t, 1.0 + if k % 2 == 0 { 0.1 } else { -0.1 }, 1e-3).unwrap();
    }
    assert!(limit_extrapolate(&zigzag, Basis::Power(1.0)).unwrap().non_monotone);

    let mut short = DeficitSeries::new("t");
    for &t in &grid[..3] {
        short.push(t, 1.0, 1e-3).unwrap();
    }
    assert!(limit_extrapolate(&short, Basis::Power(1.0)).is_err());
}
