//! Compact sets as finite point clouds, optionally convexified.
//!
//! Distances to hull sets are computed by a min-norm-point solve on the
//! translated vertex list, with closed forms for intervals.

use crate::error::{Error, Result};
use crate::linalg::{dist, dot, lex_cmp, min_norm_point, sub};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactSet {
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub hull: bool,
}

impl CompactSet {
    pub fn new(points: Vec<Vec<f64>>, hull: bool) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptySet)?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidInput("points must have positive dimension".into()));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite coordinate".into()));
            }
        }
        Ok(Self { points, hull })
    }

    pub fn point(p: Vec<f64>) -> Self {
        Self { points: vec![p], hull: false }
    }

    pub fn hull_of(points: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(points, true)
    }

    /// Closed interval `[lo, hi]` in one dimension.
    pub fn interval(lo: f64, hi: f64) -> Self {
        let (a, b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        if a == b {
            Self::point(vec![a])
        } else {
            Self { points: vec![vec![a], vec![b]], hull: true }
        }
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Convex as represented: a hull, or a single point.
    pub fn is_convex(&self) -> bool {
        self.hull || self.points.len() == 1
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::EmptySet);
        }
        if self.dim() != d {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: d });
        }
        Ok(())
    }

    fn bounds_1d(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &self.points {
            lo = lo.min(p[0]);
            hi = hi.max(p[0]);
        }
        (lo, hi)
    }

    /// Nearest point of the set to `x`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        if !self.is_convex() {
            let mut best = 0;
            let mut bd = f64::INFINITY;
            for (i, p) in self.points.iter().enumerate() {
                let d = dist(p, x);
                if d < bd {
                    bd = d;
                    best = i;
                }
            }
            return Ok(self.points[best].clone());
        }
        if self.points.len() == 1 {
            return Ok(self.points[0].clone());
        }
        if self.dim() == 1 {
            let (lo, hi) = self.bounds_1d();
            return Ok(vec![x[0].clamp(lo, hi)]);
        }
        let shifted: Vec<Vec<f64>> = self.points.iter().map(|p| sub(p, x)).collect();
        let (y, _) = min_norm_point(&shifted);
        Ok(y.iter().zip(x).map(|(a, b)| a + b).collect())
    }

    /// Membership up to `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool> {
        Ok(distance_to_set(x, self)? <= tol)
    }

    /// Smallest box containing the set.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for p in &self.points {
            for i in 0..d {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        (lo, hi)
    }

    /// Largest distance between two points of the set.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in &self.points {
            for b in &self.points {
                d = d.max(dist(a, b));
            }
        }
        d
    }

    /// Largest norm of a point of the set.
    pub fn radius(&self) -> f64 {
        self.points.iter().map(|p| dot(p, p).sqrt()).fold(0.0, f64::max)
    }
}

/// Euclidean distance from `x` to `a`.
pub fn distance_to_set(x: &[f64], a: &CompactSet) -> Result<f64> {
    a.check_dim(x.len())?;
    if a.is_convex() && a.points.len() > 1 && a.dim() == 1 {
        let (lo, hi) = a.bounds_1d();
        return Ok(if x[0] < lo {
            lo - x[0]
        } else if x[0] > hi {
            x[0] - hi
        } else {
            0.0
        });
    }
    if !a.is_convex() || a.points.len() == 1 {
        return Ok(a.points.iter().map(|p| dist(p, x)).fold(f64::INFINITY, f64::min));
    }
    let y = a.project(x)?;
    Ok(dist(&y, x))
}

/// sup over `a` of the distance to `b`.
fn excess(a: &CompactSet, b: &CompactSet) -> Result<f64> {
    if a.is_convex() && a.points.len() > 1 && !b.is_convex() {
        if a.dim() == 1 {
            return Ok(excess_interval_over_points(a, b));
        }
        return Err(Error::Unsupported(
            "Hausdorff distance from a hull to a nonconvex point list in dimension > 1".into(),
        ));
    }
    let mut e: f64 = 0.0;
    for p in &a.points {
        e = e.max(distance_to_set(p, b)?);
    }
    Ok(e)
}

/// sup over [lo,hi] of the distance to a finite point set on the line.
fn excess_interval_over_points(a: &CompactSet, b: &CompactSet) -> f64 {
    let (lo, hi) = a.bounds_1d();
    let mut pts: Vec<f64> = b.points.iter().map(|p| p[0]).collect();
    pts.sort_by(f64::total_cmp);
    let d = |y: f64| pts.iter().map(|p| (p - y).abs()).fold(f64::INFINITY, f64::min);
    let mut e = d(lo).max(d(hi));
    for w in pts.windows(2) {
        let m = 0.5 * (w[0] + w[1]);
        if m > lo && m < hi {
            e = e.max(d(m));
        }
    }
    e
}

/// Hausdorff distance `max(sup_A d_B, sup_B d_A)`.
pub fn hausdorff_distance(a: &CompactSet, b: &CompactSet) -> Result<f64> {
    b.check_dim(a.dim())?;
    if a.dim() == 1 && a.is_convex() && b.is_convex() {
        let (al, ah) = a.bounds_1d();
        let (bl, bh) = b.bounds_1d();
        return Ok((al - bl).abs().max((ah - bh).abs()));
    }
    Ok(excess(a, b)?.max(excess(b, a)?))
}

/// `max_{v in A} p.v` with the lexicographically smallest maximizer.
pub fn support_function(a: &CompactSet, p: &[f64]) -> Result<(f64, Vec<f64>)> {
    a.check_dim(p.len())?;
    let mut best = f64::NEG_INFINITY;
    let mut arg = &a.points[0];
    for v in &a.points {
        let s = dot(p, v);
        if s > best || (s == best && lex_cmp(v, arg) == std::cmp::Ordering::Less) {
            best = s;
            arg = v;
        }
    }
    Ok((best, arg.clone()))
}

/// Points of the set attaining the support value within `tol`.
pub fn support_face(a: &CompactSet, p: &[f64], tol: f64) -> Result<Vec<Vec<f64>>> {
    let (s, _) = support_function(a, p)?;
    Ok(a
        .points
        .iter()
        .filter(|v| dot(p, v) >= s - tol)
        .cloned()
        .collect())
}
