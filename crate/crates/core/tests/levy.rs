mod common;

use std::f64::consts::PI;

use levyheat::levy::{density_difference, total_variation_gap};
use levyheat::special::stable_constant;
use levyheat::{LevyModel, VariationClass};

fn catalog() -> Vec<LevyModel> {
    [
        "brownian",
        "stable:alpha=0.5",
        "cauchy",
        "stable:alpha=1.5",
        "relativistic:alpha=1,m=1",
        "relativistic:alpha=1.5,m=2",
        "truncated:alpha=0.5",
        "truncated:alpha=1",
        "truncated:alpha=1.5",
        "logperturbed:alpha=1.5,beta=1",
    ]
    .iter()
    .map(|s| s.parse().unwrap())
    .collect()
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

#[test]
fn psi_is_even_nonnegative_and_nondecreasing() {
    for m in catalog() {
        assert_eq!(m.psi(0.0), 0.0);
        let mut prev = 0.0;
        for xi in log_grid(1e-4, 1e6, 60) {
            let v = m.psi(xi);
            assert_eq!(v, m.psi(-xi), "{m}");
            assert!(v >= prev * (1.0 - 1e-12), "{m} at {xi}");
            prev = v;
        }
        assert!(m.monotonicity_audit(), "{m}");
    }
}

#[test]
fn inverse_round_trip() {
    for m in catalog() {
        for u in log_grid(1e-3, 1e9, 40) {
            let s = m.psi_inverse(u);
            assert!((m.psi_star(s) / u - 1.0).abs() < 1e-8, "{m} u={u}: {}", m.psi_star(s));
        }
    }
}

#[test]
fn relativistic_inverse_closed_form() {
    let m = LevyModel::relativistic(1.5, 2.0).unwrap();
    let expect = (7f64.powf(4.0 / 3.0) - 2f64.powf(4.0 / 3.0)).sqrt();
    assert!((m.psi_inverse(5.0) / expect - 1.0).abs() < 1e-10);
}

/// Inverting `ψ(ξ) ~ ξ^α ln^β ξ` gives `ψ^{-1}(s) ~ α^{β/α} s^{1/α} ln^{-β/α}(s)`;
/// the constant `α^{β/α}` comes from `ln ψ^{-1}(s) ~ ln(s)/α`.
#[test]
fn logperturbed_inverse_asymptotics() {
    let (alpha, beta) = (1.5f64, 1.0f64);
    let m = LevyModel::logperturbed(alpha, beta).unwrap();
    let k = alpha.powf(beta / alpha);
    let ratio = |s: f64| m.psi_inverse(s) * s.powf(-1.0 / alpha) * s.ln().powf(beta / alpha);
    assert!((ratio(1e8) / k - 1.0).abs() < 0.15, "{}", ratio(1e8));
    // Without the constant the ratio settles near α^{β/α}, not 1.
    let (r8, r16) = (ratio(1e8), ratio(1e16));
    assert!((r16 - k).abs() < (r8 - k).abs(), "{r8} {r16}");
    assert!((r16 - 1.0).abs() > 0.2);
}

#[test]
fn truncated_psi_against_direct_quadrature() {
    // ψ(ξ) = 2c ∫_0^1 (1 - cos ξy) y^{-1-α} dy, with y = u^4 to tame the origin.
    let alpha = 0.5;
    let xi = 3.0;
    let c = common::stable_constant(alpha);
    let oracle = 2.0
        * c
        * common::integrate(
            |u: f64| {
                if u == 0.0 {
                    return 0.0;
                }
                let y = u.powi(4);
                (1.0 - (xi * y).cos()) * y.powf(-1.0 - alpha) * 4.0 * u.powi(3)
            },
            0.0,
            1.0,
            200,
        );
    let m = LevyModel::truncated(alpha).unwrap();
    assert!((m.psi(xi) / oracle - 1.0).abs() < 1e-6, "{} vs {oracle}", m.psi(xi));
}

#[test]
fn stable_constant_against_lanczos() {
    for &a in &[0.1, 0.5, 0.9, 1.0, 1.3, 1.5, 1.9] {
        let ours = stable_constant(1, a);
        let oracle = common::stable_constant(a);
        assert!((ours / oracle - 1.0).abs() < 1e-12, "α={a}: {ours} vs {oracle}");
    }
    assert!((stable_constant(1, 1.0) - 1.0 / PI).abs() < 1e-15);
}

#[test]
fn pruitt_h_closed_form_and_comparability() {
    for &a in &[0.5f64, 1.0, 1.5] {
        let m = LevyModel::stable(a).unwrap();
        for &r in &[0.01f64, 1.0, 30.0] {
            let expect = 2.0 * common::stable_constant(a) * r.powf(-a) * (1.0 / (2.0 - a) + 1.0 / a);
            assert!((m.pruitt_h(r) / expect - 1.0).abs() < 1e-8, "α={a} r={r}");
        }
    }
    assert!((LevyModel::cauchy().pruitt_h(1.0) - 4.0 / PI).abs() < 1e-9);
    for m in catalog() {
        for r in log_grid(1e-4, 1e4, 33) {
            let h = m.pruitt_h(r);
            let p = m.psi_star(1.0 / r);
            assert!(0.5 * p <= h && h <= 24.0 * p, "{m} r={r}: h={h}, psi*={p}");
        }
    }
}

#[test]
fn perturbed_densities_are_dominated() {
    let pairs = [
        ("truncated:alpha=0.5", "stable:alpha=0.5"),
        ("truncated:alpha=1.5", "stable:alpha=1.5"),
        ("relativistic:alpha=1,m=1", "cauchy"),
        ("relativistic:alpha=1.5,m=2", "stable:alpha=1.5"),
    ];
    for (p, s) in pairs {
        let (p, s): (LevyModel, LevyModel) = (p.parse().unwrap(), s.parse().unwrap());
        for x in log_grid(1e-3, 0.999, 30) {
            let (a, b) = (p.levy_density(x), s.levy_density(x));
            assert!(a > 0.0 && a <= b * (1.0 + 1e-12), "{p} at {x}: {a} vs {b}");
            assert_eq!(p.levy_density(-x), a);
        }
        assert!(density_difference(&s, &p, 0.5) >= 0.0);
    }
}

#[test]
fn total_variation_gaps() {
    for &(a, mass) in &[(1.0f64, 1.0f64), (1.5, 2.0), (0.5, 0.3)] {
        let r = LevyModel::relativistic(a, mass).unwrap();
        let s = LevyModel::stable(a).unwrap();
        let g = total_variation_gap(&r, &s);
        assert!(g.finite);
        assert!((g.total / mass - 1.0).abs() < 1e-6, "α={a} m={mass}: {}", g.total);
    }
    for &a in &[0.5f64, 1.0, 1.5] {
        let g = total_variation_gap(&LevyModel::stable(a).unwrap(), &LevyModel::truncated(a).unwrap());
        let expect = 2.0 * common::stable_constant(a) / a;
        assert!((g.total / expect - 1.0).abs() < 1e-8);
        assert!((g.first_excess / expect - 1.0).abs() < 1e-8 && g.second_excess == 0.0);
    }
    let g = total_variation_gap(&LevyModel::stable(1.5).unwrap(), &LevyModel::stable(0.5).unwrap());
    assert!(!g.finite);
}

#[test]
fn variation_and_drift() {
    let cases = [
        ("stable:alpha=0.5", VariationClass::Bounded),
        ("truncated:alpha=0.7", VariationClass::Bounded),
        ("logperturbed:alpha=1,beta=-2", VariationClass::Bounded),
        ("cauchy", VariationClass::Unbounded),
        ("stable:alpha=1.5", VariationClass::Unbounded),
        ("brownian", VariationClass::Unbounded),
    ];
    for (lit, class) in cases {
        let m: LevyModel = lit.parse().unwrap();
        assert_eq!(m.variation_class(), class, "{lit}");
        if class == VariationClass::Bounded {
            assert_eq!(m.drift_gamma0(), Some(0.0));
        }
    }
    assert_eq!(LevyModel::drift(2.0).unwrap().drift_gamma0(), Some(-2.0));
}

#[test]
fn model_literals() {
    for m in catalog() {
        assert_eq!(m.to_string().parse::<LevyModel>().unwrap(), m);
    }
    for bad in ["stable", "stable:alpha=3", "relativistic:alpha=1", "levy:alpha=1", "stable:alpha=1.5,beta=2"] {
        assert!(bad.parse::<LevyModel>().is_err(), "{bad}");
    }
}
