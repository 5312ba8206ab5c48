mod common;

use std::f64::consts::PI;

use levyheat::hitting;
use levyheat::montecarlo::{
    sample_stable_increment, simulate_exit, stable_sup_levels, sup_tail, survival_probability, Moments, PathSpec, RngStream,
    SurvivalConfig,
};
use levyheat::{LevyModel, OpenSet1D};

fn set(s: &str) -> OpenSet1D {
    s.parse().unwrap()
}

fn draws(alpha: f64, t: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed, 0).rng();
    (0..n).map(|_| sample_stable_increment(alpha, t, &mut rng)).collect()
}

#[test]
fn chambers_mallows_stuck_laws() {
    let n = 200_000;
    // E cos X = e^{-t} at ξ = 1.
    let mut m = Moments::default();
    for x in draws(1.5, 1.0, n, 1) {
        m.push(x.cos());
    }
    assert!((m.mean() - (-1f64).exp()).abs() < 4.0 * m.stderr(), "{} ± {}", m.mean(), m.stderr());

    // Cauchy with scale t: median of |X| is t.
    let mut abs: Vec<f64> = draws(1.0, 2.0, n, 2).into_iter().map(f64::abs).collect();
    abs.sort_by(f64::total_cmp);
    assert!((abs[n / 2] / 2.0 - 1.0).abs() < 0.02, "{}", abs[n / 2]);

    // α = 2 carries variance 2t.
    let mut m = Moments::default();
    for x in draws(2.0, 1.0, n, 3) {
        m.push(x * x);
    }
    assert!((m.mean() - 2.0).abs() < 4.0 * m.stderr());
}

fn brownian_config(paths: usize, steps: usize, bridge: bool) -> SurvivalConfig {
    SurvivalConfig { paths, steps, levels: 1, bridge, control_variate: true }
}

#[test]
fn brownian_bridge_removes_monitoring_bias() {
    let bm = LevyModel::brownian();
    let s = set("(0,1)");
    let t = 1e-2;
    let exact = 1.0 - common::brownian_unit_survival(t);
    let bridged = survival_probability(&bm, &s, t, &brownian_config(40_000, 256, true), RngStream::new(5, 0)).unwrap();
    assert!(bridged.deficit.agrees_with(exact, 0.0, 3.0, 0.0), "{:?} vs {exact}", bridged.deficit);
    let coarse = survival_probability(&bm, &s, t, &brownian_config(40_000, 256, false), RngStream::new(5, 1)).unwrap();
    assert!(coarse.deficit.mean < exact - 5.0 * coarse.deficit.stderr, "{:?} vs {exact}", coarse.deficit);
    let fine = survival_probability(&bm, &s, t, &brownian_config(40_000, 4096, false), RngStream::new(5, 2)).unwrap();
    assert!(fine.deficit.mean > coarse.deficit.mean && fine.deficit.mean < exact + 3.0 * fine.deficit.stderr);
}

#[test]
fn brownian_survival_at_small_time() {
    let t = 1e-4;
    let exact = 1.0 - common::brownian_unit_survival(t);
    let e = survival_probability(&LevyModel::brownian(), &set("(0,1)"), t, &brownian_config(40_000, 256, true), RngStream::new(9, 0)).unwrap();
    assert!(e.deficit.agrees_with(exact, 0.0, 3.0, 0.0), "{:?} vs {exact}", e.deficit);
}

/// For small `t`, `P(sup_{s≤t} |X_s| > 1) ~ t ν(|x| > 1) = t · 2c/α`.
#[test]
fn sup_tail_follows_the_tail_mass() {
    for (lit, alpha) in [("stable:alpha=1.5", 1.5), ("cauchy", 1.0)] {
        let m: LevyModel = lit.parse().unwrap();
        let expect = 2.0 * common::stable_constant(alpha) / alpha;
        for (k, &t) in [1e-2, 1e-3].iter().enumerate() {
            let p = sup_tail(&m, t, 1.0, 200_000, 64, RngStream::new(21, k as u64)).unwrap();
            let fitted = p.mean / t;
            assert!((fitted / expect - 1.0).abs() < 0.3, "{lit} t={t}: {fitted} vs {expect}");
        }
    }
}

/// Spitzer: `E max_{0≤k≤n} S_{k/n} = Σ_k E S_{k/n}^+ / k = E X₁⁺ n^{-1/α} Σ_k k^{1/α-1}`.
#[test]
fn grid_maxima_match_spitzer() {
    for &alpha in &[1.2f64, 1.5, 1.8, 2.0] {
        let plus = common::gamma(1.0 - 1.0 / alpha) / PI;
        let s = stable_sup_levels(alpha, 1024, 2, 1.0 / alpha, 20_000, RngStream::new(4, 0)).unwrap();
        for (n, est) in s.steps.iter().zip(&s.centred) {
            let spitzer = plus * (*n as f64).powf(-1.0 / alpha) * (1..=*n).map(|k| (k as f64).powf(1.0 / alpha - 1.0)).sum::<f64>();
            assert!(est.shifted(plus).agrees_with(spitzer, 0.0, 4.0, 0.0), "α={alpha} n={n}: {est:?} vs {spitzer}");
        }
        // The continuous-time limit αE X₁⁺ bounds C₁ from above, with
        // equality for Brownian motion.
        let sup = alpha * plus;
        let c1 = hitting::c1_constant(alpha).unwrap();
        assert!(c1 <= sup * (1.0 + 1e-12), "α={alpha}: {c1} > {sup}");
        assert!(s.richardson.shifted(plus).agrees_with(sup, 0.0, 4.0, 0.02 * sup), "α={alpha}: {:?} vs {sup}", s.richardson);
    }
    assert!((hitting::c1_constant(2.0).unwrap() - 2.0 / PI.sqrt()).abs() < 1e-14);
}

#[test]
fn drift_exits_deterministically() {
    let d = LevyModel::drift(1.0).unwrap();
    let s = set("(0,1)");
    let mut rng = RngStream::new(1, 0).rng();
    let before = simulate_exit(&PathSpec::new(&d, 0.49, 1000, 0.5).unwrap(), &s, &mut rng).unwrap();
    assert!(!before.exited);
    let after = simulate_exit(&PathSpec::new(&d, 1.0, 1000, 0.5).unwrap(), &s, &mut rng).unwrap();
    assert_eq!((after.exited, after.exit_bucket), (true, Some(1)));

    // Through the adjacent point, both halves lose mass at rate γ.
    let gamma = 2.0;
    let d = LevyModel::drift(gamma).unwrap();
    for &t in &[0.05, 0.2, 1.5] {
        let cfg = SurvivalConfig { paths: 4000, steps: 512, levels: 1, bridge: false, control_variate: false };
        let e = survival_probability(&d, &set("(-1,0)|(0,1)"), t, &cfg, RngStream::new(3, 0)).unwrap();
        let expect = (2.0 * gamma * t).min(2.0);
        assert!(e.deficit.agrees_with(expect, 0.0, 4.0, 0.01 * expect), "t={t}: {:?} vs {expect}", e.deficit);
    }
}

#[test]
fn runs_reproduce_and_refinement_is_monotone() {
    let m = LevyModel::stable(1.5).unwrap();
    let s = set("(0,1)|(1,2)");
    let cfg = SurvivalConfig { paths: 4000, steps: 256, levels: 3, bridge: true, control_variate: true };
    let a = survival_probability(&m, &s, 1e-3, &cfg, RngStream::new(12, 0)).unwrap();
    let b = survival_probability(&m, &s, 1e-3, &cfg, RngStream::new(12, 0)).unwrap();
    assert_eq!(a.deficit.mean.to_bits(), b.deficit.mean.to_bits());
    assert_eq!(a.deficit.stderr.to_bits(), b.deficit.stderr.to_bits());
    let c = survival_probability(&m, &s, 1e-3, &cfg, RngStream::new(12, 1)).unwrap();
    assert_ne!(a.deficit.mean, c.deficit.mean);
    // Nested grids share increments, so a finer grid sees every coarse exit.
    let levels: Vec<f64> = a.deficit_by_level.iter().map(|e| e.mean).collect();
    assert!(levels.windows(2).all(|w| w[1] >= w[0]), "{levels:?}");
    assert!(a.terminal.mean <= levels[0] + 1e-12);
}
