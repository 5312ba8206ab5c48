//! Cheap identity and degenerate-case checks across every module.

use std::f64::consts::E;

use levyheat::geometry::OpenSet1D;
use levyheat::harness::envelope;
use levyheat::heat::{self, Basis, DeficitSeries};
use levyheat::hitting::{c1_constant, HittingEngine};
use levyheat::levy::{scaling_function, total_variation_gap, LevyModel, VariationClass};
use levyheat::montecarlo::{self, Moments, PathSpec, RngStream, SurvivalConfig};
use levyheat::perimeter::{finiteness_criterion, log_lower_bound_check};
use levyheat::Result;

type Check = (&'static str, fn() -> Result<bool>);

fn set(s: &str) -> OpenSet1D {
    s.parse().expect("literal set")
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn small_budget() -> SurvivalConfig {
    SurvivalConfig { paths: 4000, steps: 256, levels: 2, bridge: true, control_variate: false }
}

const CHECKS: &[Check] = &[
    ("geometry: |(0,1)| = 1", || Ok(set("(0,1)").measure() == 1.0)),
    ("geometry: |(0,1)|(2,3.5)| = 2.5", || Ok(set("(0,1)|(2,3.5)").measure() == 2.5)),
    ("geometry: (0,1)|(2,3) has A=2, B=0", || {
        let t = set("(0,1)|(2,3)").augment();
        Ok(t.a == 2 && t.b == 0 && t.augmented == set("(0,1)|(2,3)"))
    }),
    ("geometry: (0,1)|(1,2)|(2,3) augments to (0,3), B=2", || {
        let t = set("(0,1)|(1,2)|(2,3)").augment();
        Ok(t.a == 1 && t.b == 2 && t.augmented == set("(0,3)"))
    }),
    ("geometry: covariogram of (0,1) at 0.5", || Ok(close(set("(0,1)").covariogram(0.5), 0.5, 1e-15))),
    ("geometry: covariogram at 0 is the measure", || Ok(set("(0,1)|(2,3.5)").covariogram(0.0) == 2.5)),
    ("geometry: deficiency of (0,1) at 0.25", || Ok(close(set("(0,1)").deficiency(0.25), 0.25, 1e-15))),
    ("geometry: deficiency saturates at the measure", || Ok(set("(0,1)").deficiency(5.0) == 1.0)),
    ("geometry: distance to boundary at 0.3", || Ok(close(set("(0,1)").distance_to_boundary(0.3)?, 0.3, 1e-15))),
    ("geometry: inner margin 0.4 of (0,1)", || {
        let m = set("(0,1)").inner_margin(0.4);
        Ok(m.is_some_and(|m| m.len() == 1 && close(m.intervals()[0].0, 0.4, 1e-15) && close(m.intervals()[0].1, 0.6, 1e-15)))
    }),
    ("geometry: inner margin 0.6 of (0,1) is empty", || Ok(set("(0,1)").inner_margin(0.6).is_none())),
    ("geometry: directional variation of (0,1)", || Ok(set("(0,1)").directional_variation() == 2.0)),
    ("geometry: power holes b=3, N=2", || Ok(OpenSet1D::family_power_holes(3.0, 2)? == set("(1,2)|(2,2.125)"))),
    ("geometry: log holes b=2, N=1", || Ok(OpenSet1D::family_log_holes(2.0, 1)? == set("(1,2)"))),
    ("geometry: power holes b=2, N=3", || {
        let s = OpenSet1D::family_power_holes(2.0, 3)?;
        let iv = s.intervals();
        Ok(iv.len() == 3 && iv[1] == (2.0, 2.25) && close(iv[2].1, 3.0 + 1.0 / 9.0, 1e-15))
    }),
    ("levy: relativistic psi(0) = 0", || Ok(LevyModel::relativistic(1.0, 1.0)?.psi(0.0) == 0.0)),
    ("levy: stable(2) psi inverse of 4", || Ok(close(LevyModel::stable(2.0)?.psi_inverse(4.0), 2.0, 1e-12))),
    ("levy: Brownian Pruitt function at r=2", || Ok(close(LevyModel::brownian().pruitt_h(2.0), 0.5, 1e-12))),
    ("levy: gap of a model with itself", || {
        let m = LevyModel::stable(1.5)?;
        Ok(total_variation_gap(&m, &m).total == 0.0)
    }),
    ("levy: scaling at alpha=1, t=1/e", || Ok(close(scaling_function(1.0)?(E.recip()), E.recip(), 1e-14))),
    ("levy: stable(1.5) has unbounded variation", || {
        Ok(LevyModel::stable(1.5)?.variation_class() == VariationClass::Unbounded)
    }),
    ("perimeter: component sum of one interval", || {
        let r = finiteness_criterion(&set("(0,2)"), 0.5, None)?;
        Ok(close(r.partial_sum, 2f64.powf(0.5), 1e-14))
    }),
    ("perimeter: lower bound check skips y outside (0,1/4)", || {
        let r = log_lower_bound_check(2.0, 10, &[0.3])?;
        Ok(r.skipped == [0.3])
    }),
    ("hitting: resolvent density decays far out", || {
        let e = HittingEngine::new(&LevyModel::brownian())?;
        Ok(e.resolvent_density(1.0, 50.0)?.abs() < 1e-8)
    }),
    ("hitting: hitting probability at y=0", || {
        let e = HittingEngine::new(&LevyModel::stable(1.5)?)?;
        Ok(e.hitting_cdf(0.0, 0.1)? == 1.0)
    }),
    ("hitting: C1 vanishes as alpha -> 1", || Ok(c1_constant(1.0 + 1e-6)? < 1e-5)),
    ("hitting: grid maxima nondecreasing in n", || {
        let s = montecarlo::stable_sup_levels(1.5, 1024, 3, 1.0 / 1.5, 2000, RngStream::new(1, 0))?;
        let mut by: Vec<(usize, f64)> = s.steps.iter().copied().zip(s.centred.iter().map(|e| e.mean)).collect();
        by.sort_by_key(|p| p.0);
        Ok(by.windows(2).all(|w| w[1].1 >= w[0].1))
    }),
    ("montecarlo: E X_1^2 = 2 for alpha=2", || {
        let mut rng = RngStream::new(1, 1).rng();
        let mut m = Moments::default();
        for _ in 0..200_000 {
            let x = montecarlo::sample_stable_increment(2.0, 1.0, &mut rng);
            m.push(x * x);
        }
        Ok((m.mean() - 2.0).abs() <= 3.0 * m.stderr())
    }),
    ("montecarlo: Brownian exit from (0,1) is rare at small t", || {
        let spec = PathSpec::new(&LevyModel::brownian(), 1e-4, 64, 0.5)?;
        let s = set("(0,1)");
        let mut rng = RngStream::new(1, 2).rng();
        let mut exits = 0;
        for _ in 0..2000 {
            exits += montecarlo::simulate_exit(&spec, &s, &mut rng)?.exited as usize;
        }
        Ok(exits == 0)
    }),
    ("montecarlo: survival at t=0 is the measure", || {
        let s = set("(0,1)|(2,3.5)");
        let e = montecarlo::survival_probability(&LevyModel::cauchy(), &s, 0.0, &small_budget(), RngStream::new(1, 3))?;
        Ok(e.survival().mean == 2.5)
    }),
    ("montecarlo: Brownian sup tail at tiny r", || {
        let e = montecarlo::sup_tail(&LevyModel::brownian(), 1.0, 1e-4, 2000, 64, RngStream::new(1, 4))?;
        Ok(e.mean > 0.99)
    }),
    ("heat: H -> |Omega| as t -> 0", || {
        Ok(close(heat::heat_content(&LevyModel::stable(1.5)?, &set("(0,1)|(2,3)"), 1e-12)?, 2.0, 1e-6))
    }),
    ("heat: spectral heat content at t=0", || {
        let s = set("(0,1)");
        let e = heat::spectral_heat_content(&LevyModel::brownian(), &s, 0.0, &small_budget(), RngStream::new(1, 5))?;
        Ok(e.q.mean == 1.0)
    }),
    ("heat: hybrid deficit without adjacent points is the plain deficit", || {
        let (m, s, t) = (LevyModel::stable(1.5)?, set("(0,1)"), 1e-3);
        let stream = RngStream::new(1, 6);
        let h = heat::hybrid_spectral_deficit(&m, &s, t, &small_budget(), stream, None)?;
        let p = heat::spectral_heat_content(&m, &s, t, &small_budget(), stream)?;
        Ok(h.hitting_term == 0.0 && h.deficit.mean == p.deficit.mean)
    }),
    ("heat: extrapolation of 3 + t^0.5", || {
        let mut series = DeficitSeries::new("synthetic");
        for t in heat::time_grid(1e-6, 1e-2, 3)? {
            series.push(t, 3.0 + t.sqrt(), 1e-6)?;
        }
        Ok((heat::limit_extrapolate(&series, Basis::Power(0.5))?.limit - 3.0).abs() < 1e-3)
    }),
    ("harness: identical models give a tight envelope", || {
        let m = LevyModel::stable(0.5)?;
        let gap = total_variation_gap(&m, &m);
        let d = 0.37;
        let (lo, hi) = envelope(&gap, 1.0, 1e-3, d);
        Ok(lo == d && hi == d)
    }),
];

/// Runs every check, returning one line per check and the failure count.
pub fn run() -> (String, usize) {
    let mut out = String::new();
    let mut failed = 0;
    for (name, check) in CHECKS {
        let (status, detail) = match check() {
            Ok(true) => ("pass", String::new()),
            Ok(false) => ("FAIL", String::new()),
            Err(e) => ("FAIL", format!(" ({e})")),
        };
        if status != "pass" {
            failed += 1;
        }
        out.push_str(&format!("{status} {name}{detail}\n"));
    }
    out.push_str(&format!("{} of {} checks passed\n", CHECKS.len() - failed, CHECKS.len()));
    (out, failed)
}
