//! Finite unions of open intervals in R.
//!
//! Touching intervals such as `(0,1)|(1,2)` are kept as given. The merged
//! representation and the list of shared endpoints come from [`OpenSet1D::augment`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `Ω = ∪ (a_i, b_i)` with `a_1 < b_1 ≤ a_2 < b_2 ≤ …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct OpenSet1D {
    intervals: Vec<(f64, f64)>,
}

/// Augmented set and adjacency data.
#[derive(Debug, Clone, PartialEq)]
pub struct SetTopology {
    /// Components of Ω̃: touching neighbours merged.
    pub augmented: OpenSet1D,
    /// Shared endpoints `b_j = a_{j+1}`.
    pub adjacent_points: Vec<f64>,
    /// Number of components of Ω̃.
    pub a: usize,
    /// Number of shared endpoints.
    pub b: usize,
}

impl OpenSet1D {
    /// Builds a set from intervals in any order. Touching is allowed,
    /// overlap is not.
    pub fn from_intervals(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidSet("no intervals".into()));
        }
        for &(a, b) in &intervals {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidSet(format!("endpoint of ({a},{b}) is not finite")));
            }
            if a >= b {
                return Err(Error::InvalidSet(format!("empty or reversed interval ({a},{b})")));
            }
        }
        intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
        for w in intervals.windows(2) {
            if w[0].1 > w[1].0 {
                return Err(Error::InvalidSet(format!(
                    "intervals ({},{}) and ({},{}) overlap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(Self { intervals })
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::from_intervals(vec![(a, b)])
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// `|Ω|`.
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|&(a, b)| b - a).sum()
    }

    pub fn min_component_length(&self) -> f64 {
        self.intervals.iter().map(|&(a, b)| b - a).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.component_of(x).is_some()
    }

    /// Index of the interval containing `x`.
    pub fn component_of(&self, x: f64) -> Option<usize> {
        let i = self.intervals.partition_point(|&(a, _)| a < x);
        if i == 0 {
            return None;
        }
        let (a, b) = self.intervals[i - 1];
        (x > a && x < b).then_some(i - 1)
    }

    /// Merges touching neighbours.
    pub fn augment(&self) -> SetTopology {
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(self.intervals.len());
        let mut adjacent = Vec::new();
        for &(a, b) in &self.intervals {
            match merged.last_mut() {
                Some(last) if last.1 == a => {
                    adjacent.push(a);
                    last.1 = b;
                }
                _ => merged.push((a, b)),
            }
        }
        let a = merged.len();
        let b = adjacent.len();
        SetTopology { augmented: OpenSet1D { intervals: merged }, adjacent_points: adjacent, a, b }
    }

    /// `g_Ω(y) = |Ω ∩ (Ω + y)|`, exact for every `y` and symmetric bit for bit.
    pub fn covariogram(&self, y: f64) -> f64 {
        let y = y.abs();
        if y == 0.0 {
            return self.measure();
        }
        let iv = &self.intervals;
        let mut total = 0.0;
        for &(aj, bj) in iv {
            // Shifted interval (aj + y, bj + y) meets (ai, bi) iff ai < bj + y and bi > aj + y.
            let lo = aj + y;
            let hi = bj + y;
            let start = iv.partition_point(|&(_, bi)| bi <= lo);
            for &(ai, bi) in &iv[start..] {
                if ai >= hi {
                    break;
                }
                let w = bi.min(hi) - ai.max(lo);
                if w > 0.0 {
                    total += w;
                }
            }
        }
        total
    }

    /// `f_Ω(y) = g_Ω(0) - g_Ω(y)`.
    pub fn deficiency(&self, y: f64) -> f64 {
        (self.measure() - self.covariogram(y)).max(0.0)
    }

    /// Sorted, distinct positive differences of endpoints. `f_Ω` is linear
    /// between consecutive entries and constant (= |Ω|) beyond the last.
    pub fn deficiency_breakpoints(&self) -> Vec<f64> {
        let ends = self.endpoints();
        let mut d = Vec::with_capacity(ends.len() * ends.len() / 2);
        for (i, &(x, _)) in ends.iter().enumerate() {
            for &(z, _) in &ends[i + 1..] {
                let v = (z - x).abs();
                if v > 0.0 {
                    d.push(v);
                }
            }
        }
        d.sort_by(f64::total_cmp);
        d.dedup();
        d
    }

    /// Endpoints with orientation sign: `+1` for right ends, `-1` for left ends.
    pub fn endpoints(&self) -> Vec<(f64, f64)> {
        let mut e = Vec::with_capacity(2 * self.intervals.len());
        for &(a, b) in &self.intervals {
            e.push((a, -1.0));
            e.push((b, 1.0));
        }
        e
    }

    /// `δ_Ω(x)`, distance from `x ∈ Ω` to the boundary.
    pub fn distance_to_boundary(&self, x: f64) -> Result<f64> {
        let i = self.component_of(x).ok_or(Error::OutsideSet(x))?;
        let (a, b) = self.intervals[i];
        Ok((x - a).min(b - x))
    }

    /// `Ω ∖ Ω_ε = {x ∈ Ω : δ_Ω(x) ≥ ε}` as an open set, `None` if empty.
    ///
    /// Note the naming: `Ω_ε` is the collar of width ε, and this is its
    /// complement in Ω.
    pub fn inner_margin(&self, eps: f64) -> Option<OpenSet1D> {
        let iv: Vec<_> = self
            .intervals
            .iter()
            .filter_map(|&(a, b)| {
                let (lo, hi) = (a + eps, b - eps);
                (lo < hi).then_some((lo, hi))
            })
            .collect();
        (!iv.is_empty()).then_some(OpenSet1D { intervals: iv })
    }

    /// The collar `Ω_ε = {x ∈ Ω : δ_Ω(x) < ε}`.
    pub fn collar(&self, eps: f64) -> OpenSet1D {
        let mut iv = Vec::new();
        for &(a, b) in &self.intervals {
            if b - a <= 2.0 * eps {
                iv.push((a, b));
            } else {
                iv.push((a, a + eps));
                iv.push((b - eps, b));
            }
        }
        OpenSet1D { intervals: iv }
    }

    /// Total variation of the a.e. representative of `1_Ω`: `2A`.
    pub fn directional_variation(&self) -> f64 {
        2.0 * self.augment().a as f64
    }

    /// `∪_{n=1}^{N} (n, n + n^{-b})`.
    pub fn family_power_holes(b: f64, n: usize) -> Result<Self> {
        if !(b > 1.0) {
            return Err(Error::Domain(format!("power-holes family needs b > 1, got {b}")));
        }
        if n == 0 {
            return Err(Error::Domain("family needs N ≥ 1".into()));
        }
        let iv = (1..=n)
            .map(|k| {
                let k = k as f64;
                (k, k + k.powf(-b))
            })
            .collect();
        Self::from_intervals(iv)
    }

    /// `∪_{n=1}^{N} (n, n + d_n)` with `d_n = 1/(n (1 + ln n)^b)`.
    pub fn family_log_holes(b: f64, n: usize) -> Result<Self> {
        if !(b > 1.0) {
            return Err(Error::Domain(format!("log-holes family needs b > 1, got {b}")));
        }
        if n == 0 {
            return Err(Error::Domain("family needs N ≥ 1".into()));
        }
        let iv = (1..=n)
            .map(|k| {
                let kf = k as f64;
                (kf, kf + 1.0 / (kf * (1.0 + kf.ln()).powf(b)))
            })
            .collect();
        Self::from_intervals(iv)
    }
}

impl TryFrom<Vec<[f64; 2]>> for OpenSet1D {
    type Error = Error;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        Self::from_intervals(v.into_iter().map(|[a, b]| (a, b)).collect())
    }
}

impl From<OpenSet1D> for Vec<[f64; 2]> {
    fn from(s: OpenSet1D) -> Self {
        s.intervals.into_iter().map(|(a, b)| [a, b]).collect()
    }
}

impl FromStr for OpenSet1D {
    type Err = Error;

    /// Parses `"(a1,b1)|(a2,b2)|..."`.
    fn from_str(s: &str) -> Result<Self> {
        let parse_err = |detail: String| Error::Parse { what: "set", detail };
        let mut iv = Vec::new();
        for piece in s.split(['|', '∪']) {
            let p = piece.trim();
            if p.is_empty() {
                continue;
            }
            let inner = p
                .strip_prefix('(')
                .and_then(|q| q.strip_suffix(')'))
                .ok_or_else(|| parse_err(format!("expected (a,b), got {p:?}")))?;
            let (a, b) = inner.split_once(',').ok_or_else(|| parse_err(format!("missing comma in {p:?}")))?;
            let a: f64 = a.trim().parse().map_err(|e| parse_err(format!("{a:?}: {e}")))?;
            let b: f64 = b.trim().parse().map_err(|e| parse_err(format!("{b:?}: {e}")))?;
            iv.push((a, b));
        }
        Self::from_intervals(iv)
    }
}

impl fmt::Display for OpenSet1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (a, b)) in self.intervals.iter().enumerate() {
            if i > 0 {
                write!(f, "|")?;
            }
            write!(f, "({a},{b})")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(s: &str) -> OpenSet1D {
        s.parse().unwrap()
    }

    #[test]
    fn measure_examples() {
        assert_eq!(set("(0,1)").measure(), 1.0);
        assert_eq!(set("(-1,0)|(0,1)").measure(), 2.0);
        assert_eq!(set("(0,1)|(2,3.5)").measure(), 2.5);
    }

    #[test]
    fn augment_examples() {
        let t = set("(-1,0)|(0,1)").augment();
        assert_eq!(t.augmented, set("(-1,1)"));
        assert_eq!((t.a, t.b), (1, 1));
        assert_eq!(t.adjacent_points, vec![0.0]);
        let t = set("(0,1)|(2,3)").augment();
        assert_eq!((t.a, t.b), (2, 0));
        let t = set("(0,1)|(1,2)|(2,3)").augment();
        assert_eq!(t.augmented, set("(0,3)"));
        assert_eq!((t.a, t.b), (1, 2));
        assert_eq!(t.augmented.augment().b, 0);
    }

    #[test]
    fn covariogram_examples() {
        assert_eq!(set("(0,1)").covariogram(0.5), 0.5);
        assert!((set("(0,1)|(2,3)").covariogram(2.0) - 1.0).abs() < 1e-15);
        assert!((set("(0,1)").deficiency(0.25) - 0.25).abs() < 1e-15);
        assert_eq!(set("(0,1)").deficiency(5.0), 1.0);
        // (0,1)|(2,3) shifted by 1.5: (1.5,2.5)|(3.5,4.5) meets (2,3) in (2,2.5).
        assert!((set("(0,1)|(2,3)").deficiency(1.5) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn margins_and_distance() {
        let s = set("(0,1)");
        assert!((s.distance_to_boundary(0.3).unwrap() - 0.3).abs() < 1e-15);
        assert!(s.distance_to_boundary(1.3).is_err());
        let m = s.inner_margin(0.4).unwrap();
        assert!((m.intervals()[0].0 - 0.4).abs() < 1e-15 && (m.intervals()[0].1 - 0.6).abs() < 1e-15);
        assert!(s.inner_margin(0.6).is_none());
        assert!((s.collar(0.1).measure() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn variation_counts_augmented_components() {
        assert_eq!(set("(0,1)").directional_variation(), 2.0);
        assert_eq!(set("(-1,0)|(0,1)").directional_variation(), 2.0);
        assert_eq!(set("(0,1)|(2,3)").directional_variation(), 4.0);
    }

    #[test]
    fn families() {
        let p = OpenSet1D::family_power_holes(3.0, 2).unwrap();
        assert_eq!(p.intervals(), &[(1.0, 2.0), (2.0, 2.125)]);
        let p = OpenSet1D::family_power_holes(2.0, 3).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p.intervals()[2].1 - (3.0 + 1.0 / 9.0)).abs() < 1e-15);
        let l = OpenSet1D::family_log_holes(2.0, 1).unwrap();
        assert_eq!(l.intervals(), &[(1.0, 2.0)]);
        assert!(OpenSet1D::family_power_holes(1.0, 3).is_err());
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!("(0,1)|(0.5,2)".parse::<OpenSet1D>().is_err());
        assert!("(1,0)".parse::<OpenSet1D>().is_err());
        assert!("0,1".parse::<OpenSet1D>().is_err());
        assert!("".parse::<OpenSet1D>().is_err());
    }

    #[test]
    fn breakpoints_make_deficiency_linear() {
        let s = set("(0,1)|(1.5,2)|(3,3.25)");
        let bp = s.deficiency_breakpoints();
        let mut prev = 0.0;
        for &d in &bp {
            let mid = 0.5 * (prev + d);
            let lin = 0.5 * (s.deficiency(prev) + s.deficiency(d));
            assert!((s.deficiency(mid) - lin).abs() < 1e-12);
            prev = d;
        }
        assert!((s.deficiency(*bp.last().unwrap()) - s.measure()).abs() < 1e-12);
    }
}
