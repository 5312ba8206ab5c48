mod common;

use levyheat::OpenSet1D;
use proptest::prelude::*;

fn set(s: &str) -> OpenSet1D {
    s.parse().unwrap()
}

/// Unions of 1..=8 intervals; roughly a third of the gaps are zero so that
/// touching neighbours are common.
fn unions() -> impl Strategy<Value = OpenSet1D> {
    (-3.0..3.0f64, prop::collection::vec((0.05..2.0f64, 0usize..3, 0.1..1.5f64), 1..=8)).prop_map(|(start, parts)| {
        let mut x = start;
        let mut iv = Vec::new();
        for (len, touch, gap) in parts {
            iv.push((x, x + len));
            x += len + if touch == 0 { 0.0 } else { gap };
        }
        OpenSet1D::from_intervals(iv).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariogram_is_even_and_bounded(s in unions(), y in -6.0..6.0f64) {
        let g = s.covariogram(y);
        prop_assert_eq!(g, s.covariogram(-y));
        prop_assert!(g >= 0.0 && g <= s.covariogram(0.0));
        prop_assert!((s.covariogram(0.0) - s.measure()).abs() < 1e-12);
    }

    #[test]
    fn covariogram_triangle_inequality(s in unions(), x in -6.0..6.0f64, y in -6.0..6.0f64) {
        let lhs = (s.covariogram(x) - s.covariogram(y)).abs();
        let rhs = s.covariogram(0.0) - s.covariogram(x - y);
        prop_assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
    }

    #[test]
    fn deficiency_is_lipschitz(s in unions(), y in -3.0..3.0f64) {
        let n = s.len() as f64;
        prop_assert!(s.deficiency(y) <= 2.0 * n * y.abs() + 1e-12);
        prop_assert!(s.deficiency(y) >= 0.0);
    }

    #[test]
    fn covariogram_matches_grid_oracle(s in unions(), y in -4.0..4.0f64) {
        let h = 1e-4;
        let oracle = common::grid_covariogram(s.intervals(), y, h);
        prop_assert!((s.covariogram(y) - oracle).abs() <= 2.0 * h * s.len() as f64 + 1e-12);
    }

    #[test]
    fn augment_counts_and_idempotence(s in unions()) {
        let top = s.augment();
        prop_assert!(top.a >= 1);
        prop_assert_eq!(top.a + top.b, s.len());
        prop_assert_eq!(top.augmented.augment().b, 0);
        prop_assert!((top.augmented.measure() - s.measure()).abs() < 1e-12);
        let right_ends: Vec<f64> = s.intervals().iter().map(|iv| iv.1).collect();
        for p in &top.adjacent_points {
            prop_assert!(right_ends.contains(p));
        }
        prop_assert_eq!(s.directional_variation(), 2.0 * top.a as f64);
    }

    #[test]
    fn text_and_json_round_trip(s in unions()) {
        let back: OpenSet1D = s.to_string().parse().unwrap();
        prop_assert_eq!(&back, &s);
        let v: Vec<[f64; 2]> = s.clone().into();
        prop_assert_eq!(OpenSet1D::try_from(v).unwrap(), s);
    }
}

#[test]
fn two_components_against_oracle() {
    let s = set("(0,1)|(2,3)");
    assert_eq!(s.covariogram(2.0), 1.0);
    assert!((s.deficiency(1.5) - 1.5).abs() < 1e-15);
    assert!((common::grid_covariogram(s.intervals(), 1.5, 1e-4) - 0.5).abs() < 4e-4);
}

#[test]
fn adjacent_points_are_invisible_to_variation() {
    assert_eq!(set("(-1,0)|(0,1)").directional_variation(), 2.0);
    assert_eq!(set("(0,1)|(2,3)").directional_variation(), 4.0);
    let top = set("(-1,0)|(0,1)").augment();
    assert_eq!((top.a, top.b, top.adjacent_points), (1, 1, vec![0.0]));
    assert_eq!(top.augmented, set("(-1,1)"));
}

#[test]
fn margins_and_collar_partition_the_set() {
    let s = set("(0,1)|(1,3)|(5,5.5)");
    for &eps in &[0.05, 0.2, 0.3] {
        let collar = s.collar(eps).measure();
        let inner = s.inner_margin(eps).map_or(0.0, |m| m.measure());
        assert!((collar + inner - s.measure()).abs() < 1e-12, "eps = {eps}");
    }
    assert!(s.distance_to_boundary(4.0).is_err());
    assert!((s.distance_to_boundary(0.9).unwrap() - 0.1).abs() < 1e-15);
}

#[test]
fn families_reject_small_exponents() {
    assert!(OpenSet1D::family_power_holes(1.0, 5).is_err());
    assert!(OpenSet1D::family_log_holes(0.5, 5).is_err());
    let s = OpenSet1D::family_log_holes(2.0, 3).unwrap();
    let d3 = 1.0 / (3.0 * (1.0 + 3f64.ln()).powi(2));
    assert!((s.intervals()[2].1 - 3.0 - d3).abs() < 1e-15);
}

#[test]
fn malformed_literals_are_rejected() {
    for bad in ["", "(1,0)", "(0,1)|(0.5,2)", "[0,1]", "(0;1)", "(0,inf)"] {
        assert!(bad.parse::<OpenSet1D>().is_err(), "{bad:?}");
    }
    let from_json: OpenSet1D = serde_json::from_str("[[0,1],[1,2]]").unwrap();
    assert_eq!(from_json, set("(0,1)|(1,2)"));
}
