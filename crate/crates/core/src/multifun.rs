//! Time-dependent multifunctions with a locality tube around a reference arc,
//! one-sided time limits and endpoint modification.

use crate::error::{Error, Result};
use crate::linalg::{dist, norm};
use crate::setvalued::{hausdorff_distance, CompactSet};
use serde::{Deserialize, Serialize};
use std::sync::Arc as Shared;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interp {
    Linear,
    ConstantLeft,
}

/// Time grid plus values with an interpolation rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub interp: Interp,
}

impl Arc {
    pub fn new(grid: Vec<f64>, values: Vec<Vec<f64>>, interp: Interp) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::InvalidInput("arc needs at least two grid points".into()));
        }
        if grid.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "arc grid has {} points but {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("arc grid must be strictly increasing".into()));
        }
        let d = values[0].len();
        for v in &values {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
        }
        Ok(Self { grid, values, interp })
    }

    /// Samples `f` on a uniform grid of `n` cells.
    pub fn sample(s: f64, t: f64, n: usize, interp: Interp, f: impl Fn(f64) -> Vec<f64>) -> Self {
        let grid = uniform_grid(s, t, n);
        let values = grid.iter().map(|&t| f(t)).collect();
        Self { grid, values, interp }
    }

    pub fn constant(s: f64, t: f64, v: Vec<f64>) -> Self {
        Self { grid: vec![s, t], values: vec![v.clone(), v], interp: Interp::Linear }
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn end(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn cells(&self) -> usize {
        self.grid.len() - 1
    }

    /// Index k of the cell `[t_k, t_{k+1})` holding `t`; the last cell is closed.
    pub fn cell_index(&self, t: f64) -> usize {
        let n = self.cells();
        if t <= self.grid[0] {
            return 0;
        }
        if t >= self.grid[n] {
            return n - 1;
        }
        self.grid.partition_point(|&g| g <= t) - 1
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let n = self.cells();
        if t >= self.grid[n] {
            return self.values[n].clone();
        }
        if t <= self.grid[0] {
            return self.values[0].clone();
        }
        let k = self.cell_index(t);
        match self.interp {
            Interp::ConstantLeft => self.values[k].clone(),
            Interp::Linear => {
                let w = (t - self.grid[k]) / (self.grid[k + 1] - self.grid[k]);
                self.values[k]
                    .iter()
                    .zip(&self.values[k + 1])
                    .map(|(a, b)| a + w * (b - a))
                    .collect()
            }
        }
    }

    /// Slope on cell k (zero for piecewise-constant arcs).
    pub fn derivative(&self, k: usize) -> Vec<f64> {
        match self.interp {
            Interp::ConstantLeft => vec![0.0; self.dim()],
            Interp::Linear => {
                let h = self.grid[k + 1] - self.grid[k];
                self.values[k]
                    .iter()
                    .zip(&self.values[k + 1])
                    .map(|(a, b)| (b - a) / h)
                    .collect()
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| norm(v)).fold(0.0, f64::max)
    }

    /// Sup distance between two arcs, sampled at the union of both grids.
    pub fn sup_dist(&self, other: &Arc) -> f64 {
        let mut d: f64 = 0.0;
        for &t in self.grid.iter().chain(&other.grid) {
            d = d.max(dist(&self.eval(t), &other.eval(t)));
        }
        d
    }
}

pub fn uniform_grid(s: f64, t: f64, n: usize) -> Vec<f64> {
    let h = (t - s) / n as f64;
    (0..=n)
        .map(|k| if k == n { t } else { s + k as f64 * h })
        .collect()
}

/// Scalar functions of time usable in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarFn {
    Const { value: f64 },
    /// Coefficients in increasing degree.
    Poly { coeffs: Vec<f64> },
    /// `before` for t < at, `after` for t >= at.
    Step { at: f64, before: f64, after: f64 },
    /// `amp * sin(2 pi freq t + phase)`
    Sin { amp: f64, freq: f64, #[serde(default)] phase: f64 },
    /// `hi` on the first half of each period, `lo` on the second.
    Square { period: f64, lo: f64, hi: f64 },
    Sum { terms: Vec<ScalarFn> },
}

impl ScalarFn {
    pub fn constant(value: f64) -> Self {
        ScalarFn::Const { value }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ScalarFn::Const { value } => *value,
            ScalarFn::Poly { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c),
            ScalarFn::Step { at, before, after } => {
                if t >= *at {
                    *after
                } else {
                    *before
                }
            }
            ScalarFn::Sin { amp, freq, phase } => {
                amp * (2.0 * std::f64::consts::PI * freq * t + phase).sin()
            }
            ScalarFn::Square { period, lo, hi } => {
                let frac = (t / period).rem_euclid(1.0);
                if frac < 0.5 {
                    *hi
                } else {
                    *lo
                }
            }
            ScalarFn::Sum { terms } => terms.iter().map(|f| f.eval(t)).sum(),
        }
    }
}

pub type Oracle = Shared<dyn Fn(f64, &[f64], Option<&[f64]>) -> CompactSet + Send + Sync>;

#[derive(Clone)]
pub struct Locality {
    pub radius: f64,
    pub reference: Shared<Arc>,
}

/// `(t, x, a) -> F(t, x, a)` on `[S, T]`, with (H2)-type constants.
#[derive(Clone)]
pub struct Multifunction {
    oracle: Oracle,
    pub dim: usize,
    pub horizon: (f64, f64),
    pub param_set: Option<CompactSet>,
    pub lip_x: f64,
    pub bound: f64,
    pub locality: Option<Locality>,
}

impl std::fmt::Debug for Multifunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Multifunction")
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .field("param_set", &self.param_set)
            .field("lip_x", &self.lip_x)
            .field("bound", &self.bound)
            .field("locality_radius", &self.locality.as_ref().map(|l| l.radius))
            .finish()
    }
}

impl Multifunction {
    pub fn from_fn(
        dim: usize,
        horizon: (f64, f64),
        f: impl Fn(f64, &[f64], Option<&[f64]>) -> CompactSet + Send + Sync + 'static,
    ) -> Self {
        Self {
            oracle: Shared::new(f),
            dim,
            horizon,
            param_set: None,
            lip_x: 0.0,
            bound: f64::INFINITY,
            locality: None,
        }
    }

    /// `F(t) = [lo(t), hi(t)]` in one dimension.
    pub fn interval(lo: ScalarFn, hi: ScalarFn, horizon: (f64, f64)) -> Self {
        let mut c: f64 = 0.0;
        for t in uniform_grid(horizon.0, horizon.1, 256) {
            c = c.max(lo.eval(t).abs()).max(hi.eval(t).abs());
        }
        let mut m = Self::from_fn(1, horizon, move |t, _, _| {
            CompactSet::interval(lo.eval(t), hi.eval(t))
        });
        m.bound = c;
        m
    }

    /// `F(t) = radius(t) B`. Exact interval in 1-D, inscribed regular polygon
    /// with `sides` vertices in 2-D.
    pub fn ball(radius: ScalarFn, dim: usize, sides: usize, horizon: (f64, f64)) -> Result<Self> {
        if dim == 0 || dim > 2 {
            return Err(Error::Unsupported(format!("ball family in dimension {dim}")));
        }
        if dim == 2 && sides < 3 {
            return Err(Error::InvalidInput("polygon needs at least 3 sides".into()));
        }
        let mut c: f64 = 0.0;
        for t in uniform_grid(horizon.0, horizon.1, 256) {
            c = c.max(radius.eval(t).abs());
        }
        let mut m = Self::from_fn(dim, horizon, move |t, _, _| {
            let r = radius.eval(t).abs();
            if dim == 1 {
                CompactSet::interval(-r, r)
            } else {
                polygon(r, sides)
            }
        });
        m.bound = c;
        Ok(m)
    }

    /// Left-constant table: `sets[k]` on `[times[k], times[k+1])`, the last
    /// entry from `times[last]` onward.
    pub fn polytope_table(times: Vec<f64>, sets: Vec<CompactSet>, horizon: (f64, f64)) -> Result<Self> {
        if times.is_empty() || times.len() != sets.len() {
            return Err(Error::InvalidInput("polytope table needs one set per time".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("polytope table times must increase".into()));
        }
        let dim = sets[0].dim();
        if let Some(s) = sets.iter().find(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: s.dim() });
        }
        let bound = sets.iter().map(|s| s.radius()).fold(0.0, f64::max);
        let mut m = Self::from_fn(dim, horizon, move |t, _, _| {
            let k = times.partition_point(|&s| s <= t).saturating_sub(1);
            sets[k].clone()
        });
        m.bound = bound;
        Ok(m)
    }

    /// `F(t) = {f(t)}`.
    pub fn single_valued(horizon: (f64, f64), f: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        let dim = f(horizon.0).len();
        Self::from_fn(dim, horizon, move |t, _, _| CompactSet::point(f(t)))
    }

    pub fn with_params(mut self, a: CompactSet) -> Self {
        self.param_set = Some(a);
        self
    }

    pub fn with_lipschitz(mut self, k: f64) -> Self {
        self.lip_x = k;
        self
    }

    pub fn with_bound(mut self, c: f64) -> Self {
        self.bound = c;
        self
    }

    pub fn with_locality(mut self, radius: f64, reference: Arc) -> Self {
        self.locality = Some(Locality { radius, reference: Shared::new(reference) });
        self
    }

    pub fn without_locality(mut self) -> Self {
        self.locality = None;
        self
    }

    /// Reference state at time t (the origin when no tube is declared).
    pub fn reference_at(&self, t: f64) -> Vec<f64> {
        match &self.locality {
            Some(l) => l.reference.eval(t),
            None => vec![0.0; self.dim],
        }
    }

    pub fn radius(&self) -> f64 {
        self.locality.as_ref().map_or(f64::INFINITY, |l| l.radius)
    }

    /// Parameter samples: the points of A, or a single `None`.
    pub fn param_samples(&self) -> Vec<Option<Vec<f64>>> {
        match &self.param_set {
            None => vec![None],
            Some(a) => a.points.iter().cloned().map(Some).collect(),
        }
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        let (s, e) = self.horizon;
        if !(t >= s && t <= e) {
            return Err(Error::OutsideHorizon { t, start: s, end: e });
        }
        Ok(())
    }

    pub fn check_tube(&self, t: f64, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if let Some(l) = &self.locality {
            let d = dist(x, &l.reference.eval(t));
            if d > l.radius + 1e-9 {
                return Err(Error::TubeViolation { t, distance: d, radius: l.radius });
            }
        }
        Ok(())
    }

    /// Checked evaluation: horizon, dimension and locality tube.
    pub fn eval(&self, t: f64, x: &[f64], a: Option<&[f64]>) -> Result<CompactSet> {
        self.check_time(t)?;
        self.check_tube(t, x)?;
        Ok((self.oracle)(t, x, a))
    }

    /// Raw oracle call without any checks.
    pub fn eval_unchecked(&self, t: f64, x: &[f64], a: Option<&[f64]>) -> CompactSet {
        (self.oracle)(t, x, a)
    }

    /// Same constants and tube, different oracle.
    pub fn with_oracle(
        &self,
        f: impl Fn(f64, &[f64], Option<&[f64]>) -> CompactSet + Send + Sync + 'static,
    ) -> Self {
        let mut m = self.clone();
        m.oracle = Shared::new(f);
        m
    }
}

/// Regular `sides`-gon of circumradius r, vertex 0 on the positive x axis.
pub fn polygon(r: f64, sides: usize) -> CompactSet {
    if r == 0.0 {
        return CompactSet::point(vec![0.0, 0.0]);
    }
    let pts = (0..sides)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / sides as f64;
            vec![r * th.cos(), r * th.sin()]
        })
        .collect();
    CompactSet { points: pts, hull: true }
}

/// Deterministic samples of `center + r B`, boundary-heavy.
pub fn ball_samples(center: &[f64], r: f64, m: usize) -> Vec<Vec<f64>> {
    let n = center.len();
    if r == 0.0 || m == 0 {
        return vec![center.to_vec()];
    }
    let shift = |d: &[f64]| -> Vec<f64> { center.iter().zip(d).map(|(c, v)| c + r * v).collect() };
    match n {
        1 => (0..=m)
            .map(|k| vec![center[0] - r + 2.0 * r * k as f64 / m as f64])
            .collect(),
        2 => {
            let mut out = vec![center.to_vec()];
            for k in 0..m {
                let th = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                out.push(shift(&[th.cos(), th.sin()]));
            }
            out
        }
        3 => {
            let mut out = vec![center.to_vec()];
            for i in 0..3 {
                for s in [-1.0, 1.0] {
                    let mut e = [0.0; 3];
                    e[i] = s;
                    out.push(shift(&e));
                }
            }
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            for k in 0..m {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / m as f64;
                let rho = (1.0 - z * z).sqrt();
                let th = golden * k as f64;
                out.push(shift(&[rho * th.cos(), rho * th.sin(), z]));
            }
            out
        }
        _ => {
            let mut out = vec![center.to_vec()];
            for i in 0..n {
                for s in [-1.0, 1.0] {
                    let mut e = vec![0.0; n];
                    e[i] = s;
                    out.push(shift(&e));
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitOptions {
    pub tol_limit: f64,
    pub max_refine: usize,
    /// First probe offset; defaults to 1e-3 of the horizon length.
    pub h0: Option<f64>,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self { tol_limit: 1e-6, max_refine: 40, h0: None }
    }
}

fn probe_times(f: &Multifunction, t: f64, side: Side, opts: &LimitOptions) -> Result<Vec<f64>> {
    let (s, e) = f.horizon;
    let ok = match side {
        Side::Left => t > s && t <= e,
        Side::Right => t >= s && t < e,
    };
    if !ok {
        return Err(Error::OutsideHorizon { t, start: s, end: e });
    }
    let room = match side {
        Side::Left => t - s,
        Side::Right => e - t,
    };
    let h0 = opts.h0.unwrap_or(1e-3 * (e - s)).min(0.5 * room);
    let sign = if side == Side::Left { -1.0 } else { 1.0 };
    let mut out = Vec::with_capacity(opts.max_refine + 1);
    let mut h = h0;
    for _ in 0..=opts.max_refine {
        let p = t + sign * h;
        if p == t {
            break;
        }
        out.push(p);
        h *= 0.5;
    }
    Ok(out)
}

/// `lim_{s -> t±} F(s, x, a)` by geometric probing. Returns the first
/// iterate whose Hausdorff gap to its predecessor is below `tol_limit`.
pub fn one_sided_limit(
    f: &Multifunction,
    t: f64,
    side: Side,
    x: &[f64],
    a: Option<&[f64]>,
    opts: &LimitOptions,
) -> Result<CompactSet> {
    f.check_tube(t, x)?;
    let probes = probe_times(f, t, side, opts)?;
    let mut gaps = Vec::new();
    let mut prev = f.eval_unchecked(probes[0], x, a);
    for &p in &probes[1..] {
        let cur = f.eval_unchecked(p, x, a);
        let g = hausdorff_distance(&prev, &cur)?;
        gaps.push(g);
        if g < opts.tol_limit {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::LimitNotCertified { t, gaps })
}

/// Like [`one_sided_limit`] but returns the last probe instead of failing.
pub fn one_sided_limit_best_effort(
    f: &Multifunction,
    t: f64,
    side: Side,
    x: &[f64],
    a: Option<&[f64]>,
    opts: &LimitOptions,
) -> Result<CompactSet> {
    match one_sided_limit(f, t, side, x, a, opts) {
        Err(Error::LimitNotCertified { .. }) => {
            let probes = probe_times(f, t, side, opts)?;
            Ok(f.eval_unchecked(*probes.last().unwrap(), x, a))
        }
        r => r,
    }
}

/// F̃: F(S⁺, ·) at t = S, F(T⁻, ·) at t = T, F elsewhere.
///
/// Certification of both limits is verified on ball samples around the
/// reference state and every parameter sample before the map is returned.
pub fn endpoint_modify(f: &Multifunction, opts: &LimitOptions) -> Result<Multifunction> {
    let (s, e) = f.horizon;
    let r = if f.radius().is_finite() { f.radius() } else { 0.0 };
    for (t, side) in [(s, Side::Right), (e, Side::Left)] {
        for y in ball_samples(&f.reference_at(t), r, 8) {
            for a in f.param_samples() {
                one_sided_limit(f, t, side, &y, a.as_deref(), opts)?;
            }
        }
    }
    let inner = f.clone();
    let o = *opts;
    Ok(f.with_oracle(move |t, x, a| {
        let side = if t == s {
            Some(Side::Right)
        } else if t == e {
            Some(Side::Left)
        } else {
            None
        };
        match side {
            Some(side) => one_sided_limit_best_effort(&inner, t, side, x, a, &o)
                .unwrap_or_else(|_| inner.eval_unchecked(t, x, a)),
            None => inner.eval_unchecked(t, x, a),
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_half() -> Multifunction {
        Multifunction::single_valued((0.0, 1.0), |t| vec![if t < 0.5 { 0.0 } else { 1.0 }])
    }

    #[test]
    fn arc_linear_and_constant() {
        let a = Arc::new(vec![0.0, 1.0, 2.0], vec![vec![0.0], vec![2.0], vec![2.0]], Interp::Linear).unwrap();
        assert_eq!(a.eval(0.5), vec![1.0]);
        assert_eq!(a.derivative(0), vec![2.0]);
        let c = Arc { interp: Interp::ConstantLeft, ..a.clone() };
        assert_eq!(c.eval(0.99), vec![0.0]);
        assert_eq!(c.eval(1.0), vec![2.0]);
        assert_eq!(c.eval(2.0), vec![2.0]);
        assert!(Arc::new(vec![0.0, 0.0], vec![vec![0.0], vec![0.0]], Interp::Linear).is_err());
    }

    #[test]
    fn scalar_fns() {
        assert_eq!(ScalarFn::Poly { coeffs: vec![1.0, 0.0, 2.0] }.eval(3.0), 19.0);
        let st = ScalarFn::Step { at: 0.5, before: 0.0, after: 1.0 };
        assert_eq!(st.eval(0.5), 1.0);
        assert_eq!(st.eval(0.49), 0.0);
        let sq = ScalarFn::Square { period: 0.5, lo: -1.0, hi: 1.0 };
        assert_eq!(sq.eval(0.1), 1.0);
        assert_eq!(sq.eval(0.3), -1.0);
        assert_eq!(sq.eval(0.5), 1.0);
    }

    #[test]
    fn limit_of_constant_map() {
        let f = Multifunction::interval(ScalarFn::constant(-1.0), ScalarFn::constant(1.0), (0.0, 1.0));
        let l = one_sided_limit(&f, 0.3, Side::Left, &[0.0], None, &LimitOptions::default()).unwrap();
        assert_eq!(l, CompactSet::interval(-1.0, 1.0));
    }

    #[test]
    fn limits_of_step() {
        let f = step_half();
        let o = LimitOptions::default();
        let l = one_sided_limit(&f, 0.5, Side::Left, &[0.0], None, &o).unwrap();
        let r = one_sided_limit(&f, 0.5, Side::Right, &[0.0], None, &o).unwrap();
        assert_eq!(l.points, vec![vec![0.0]]);
        assert_eq!(r.points, vec![vec![1.0]]);
    }

    #[test]
    fn limit_of_growing_segment() {
        let f = Multifunction::interval(ScalarFn::constant(0.0), ScalarFn::Poly { coeffs: vec![0.0, 1.0] }, (0.0, 1.0));
        let o = LimitOptions::default();
        let l = one_sided_limit(&f, 1.0, Side::Left, &[0.0], None, &o).unwrap();
        let d = hausdorff_distance(&l, &CompactSet::interval(0.0, 1.0)).unwrap();
        assert!(d < o.tol_limit, "{d}");
    }

    #[test]
    fn limit_not_certified_for_oscillation() {
        // sin(1/(1-t)) has no left limit at 1
        let f = Multifunction::single_valued((0.0, 1.0), |t| vec![(1.0 / (1.0 - t)).sin()]);
        let o = LimitOptions { max_refine: 10, ..Default::default() };
        let e = one_sided_limit(&f, 1.0, Side::Left, &[0.0], None, &o).unwrap_err();
        assert!(matches!(e, Error::LimitNotCertified { ref gaps, .. } if gaps.len() == 10));
    }

    #[test]
    fn limit_side_outside_horizon() {
        let f = step_half();
        let o = LimitOptions::default();
        assert!(one_sided_limit(&f, 0.0, Side::Left, &[0.0], None, &o).is_err());
        assert!(one_sided_limit(&f, 1.0, Side::Right, &[0.0], None, &o).is_err());
    }

    #[test]
    fn tube_violation_is_error() {
        let f = step_half().with_locality(0.1, Arc::constant(0.0, 1.0, vec![0.0]));
        assert!(f.eval(0.2, &[0.05], None).is_ok());
        assert!(matches!(f.eval(0.2, &[0.5], None), Err(Error::TubeViolation { .. })));
        assert!(matches!(f.eval(1.5, &[0.0], None), Err(Error::OutsideHorizon { .. })));
    }

    #[test]
    fn endpoint_modify_continuous_is_identity() {
        let f = Multifunction::interval(ScalarFn::constant(0.0), ScalarFn::Poly { coeffs: vec![1.0, 1.0] }, (0.0, 1.0));
        let g = endpoint_modify(&f, &LimitOptions::default()).unwrap();
        for t in [0.0, 0.25, 0.7, 1.0] {
            let d = hausdorff_distance(&f.eval(t, &[0.0], None).unwrap(), &g.eval(t, &[0.0], None).unwrap()).unwrap();
            assert!(d < 1e-6);
        }
    }

    #[test]
    fn endpoint_modify_removes_jump_at_start() {
        let f = Multifunction::single_valued((0.0, 1.0), |t| vec![if t == 0.0 { 0.0 } else { 1.0 }]);
        let g = endpoint_modify(&f, &LimitOptions::default()).unwrap();
        assert_eq!(g.eval(0.0, &[0.0], None).unwrap().points, vec![vec![1.0]]);
        assert_eq!(g.eval(0.5, &[0.0], None).unwrap().points, vec![vec![1.0]]);
    }

    #[test]
    fn ball_sampling_shapes() {
        assert_eq!(ball_samples(&[0.0], 1.0, 4).len(), 5);
        assert_eq!(ball_samples(&[0.0, 0.0], 1.0, 16).len(), 17);
        for p in ball_samples(&[1.0, 1.0, 1.0], 0.5, 20) {
            assert!(dist(&p, &[1.0, 1.0, 1.0]) <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn polytope_table_is_left_constant() {
        let f = Multifunction::polytope_table(
            vec![0.0, 0.5],
            vec![CompactSet::interval(-1.0, 1.0), CompactSet::interval(-1.0, 2.0)],
            (0.0, 1.0),
        )
        .unwrap();
        assert_eq!(f.eval(0.49, &[0.0], None).unwrap(), CompactSet::interval(-1.0, 1.0));
        assert_eq!(f.eval(0.5, &[0.0], None).unwrap(), CompactSet::interval(-1.0, 2.0));
        assert_eq!(f.bound, 2.0);
    }
}
