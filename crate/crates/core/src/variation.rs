//! Cumulative variation of a multifunction along its reference arc.
//!
//! `eta^delta_eps(t)` is the sup over partitions of `[S, t]` with mesh at most
//! eps of the summed tube-local Hausdorff gaps. It is approximated from below
//! by dyadic refinement; every reported value is attained by an explicit
//! partition (up to the tube sampling).

use crate::error::{Error, Result};
use crate::multifun::{
    ball_samples, one_sided_limit_best_effort, uniform_grid, Arc, Interp, LimitOptions,
    Multifunction, Side,
};
use crate::linalg::lex_cmp;
use crate::setvalued::{distance_to_set, hausdorff_distance, CompactSet};
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub times: Vec<f64>,
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidPartition("need at least two points".into()));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPartition(format!("not strictly increasing at index {}", i + 1)));
        }
        Ok(Self { times })
    }

    pub fn uniform(s: f64, t: f64, n: usize) -> Result<Self> {
        if n == 0 || !(t > s) {
            return Err(Error::InvalidPartition(format!("uniform partition of [{s}, {t}] with {n} cells")));
        }
        Ok(Self { times: uniform_grid(s, t, n) })
    }

    pub fn cells(&self) -> usize {
        self.times.len() - 1
    }

    pub fn diam(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    fn check_within(&self, f: &Multifunction) -> Result<()> {
        let (s, e) = f.horizon;
        for &t in [self.times[0], *self.times.last().unwrap()].iter() {
            if t < s || t > e {
                return Err(Error::OutsideHorizon { t, start: s, end: e });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationOptions {
    /// Reference-arc samples per cell.
    pub n_tube: usize,
    /// Ball directions around each reference sample.
    pub m_ball: usize,
    pub tol_eta: f64,
    /// Estimate right limits at knots (needed for normalization).
    pub right_limits: bool,
    pub limit: LimitOptions,
}

impl Default for VariationOptions {
    fn default() -> Self {
        Self {
            n_tube: 8,
            m_ball: 16,
            tol_eta: 1e-6,
            right_limits: true,
            limit: LimitOptions::default(),
        }
    }
}

fn check_delta(f: &Multifunction, delta: f64) -> Result<()> {
    if !(delta >= 0.0) || delta > f.radius() {
        return Err(Error::InvalidInput(format!(
            "delta {delta} must lie in [0, {}]",
            f.radius()
        )));
    }
    Ok(())
}

fn dedup(mut pts: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    pts.sort_by(|a, b| lex_cmp(a, b));
    pts.dedup();
    pts
}

/// Tube samples for the cell `[t0, t1]`.
fn cell_samples(f: &Multifunction, t0: f64, t1: f64, delta: f64, opts: &VariationOptions) -> Vec<Vec<f64>> {
    let n = opts.n_tube.max(2);
    let mut pts = Vec::new();
    for i in 0..n {
        let s = t0 + (t1 - t0) * i as f64 / (n - 1) as f64;
        pts.extend(ball_samples(&f.reference_at(s), delta, opts.m_ball));
    }
    dedup(pts)
}

/// sup over tube samples and parameters of `d_H(F(t1,y,a), F(t0,y,a))`.
pub fn cell_term(f: &Multifunction, t0: f64, t1: f64, delta: f64, opts: &VariationOptions) -> Result<f64> {
    cell_term_with(f, t0, t1, delta, opts, &f.param_samples())
}

fn cell_term_with(
    f: &Multifunction,
    t0: f64,
    t1: f64,
    delta: f64,
    opts: &VariationOptions,
    params: &[Option<Vec<f64>>],
) -> Result<f64> {
    let mut best: f64 = 0.0;
    for y in cell_samples(f, t0, t1, delta, opts) {
        for a in params {
            let a = a.as_deref();
            let d = hausdorff_distance(&f.eval_unchecked(t1, &y, a), &f.eval_unchecked(t0, &y, a))?;
            best = best.max(d);
        }
    }
    Ok(best)
}

fn terms_with(
    f: &Multifunction,
    p: &Partition,
    delta: f64,
    opts: &VariationOptions,
    params: &[Option<Vec<f64>>],
) -> Result<Vec<f64>> {
    p.check_within(f)?;
    check_delta(f, delta)?;
    let terms: Vec<Result<f64>> = p
        .times
        .par_windows(2)
        .map(|w| cell_term_with(f, w[0], w[1], delta, opts, params))
        .collect();
    let terms: Vec<f64> = terms.into_iter().collect::<Result<_>>()?;
    if let Some(i) = terms.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::NotMonotone { index: i + 1 });
    }
    Ok(terms)
}

/// Per-cell terms of `I^delta(T)`, in cell order.
pub fn cell_terms(f: &Multifunction, p: &Partition, delta: f64, opts: &VariationOptions) -> Result<Vec<f64>> {
    terms_with(f, p, delta, opts, &f.param_samples())
}

/// `I^delta(T)`; cells run in parallel, the sum is taken in index order.
pub fn partition_sum(f: &Multifunction, p: &Partition, delta: f64, opts: &VariationOptions) -> Result<f64> {
    Ok(cell_terms(f, p, delta, opts)?.iter().sum())
}

/// Monotone staircase on a knot grid.
///
/// `values[k]` is the value at `knots[k]`; on the open cell after knot k the
/// staircase takes `right_values[k]`, a lower bound for the right limit.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeVariation {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub right_values: Vec<f64>,
    pub delta: f64,
    pub eps: f64,
    pub level: usize,
    pub refined: bool,
    pub normalized: bool,
}

impl CumulativeVariation {
    /// Staircase with no jump information beyond the knot values.
    pub fn from_values(knots: Vec<f64>, values: Vec<f64>) -> Self {
        Self {
            right_values: values.clone(),
            knots,
            values,
            delta: 0.0,
            eps: f64::INFINITY,
            level: 0,
            refined: false,
            normalized: false,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.knots.len() - 1;
        if t <= self.knots[0] {
            return self.values[0];
        }
        if t >= self.knots[n] {
            return self.values[n];
        }
        let k = self.knots.partition_point(|&s| s <= t) - 1;
        if self.knots[k] == t {
            self.values[k]
        } else {
            self.right_values[k]
        }
    }

    /// Right limit at t (t itself at T).
    pub fn eval_right(&self, t: f64) -> f64 {
        let n = self.knots.len() - 1;
        if t >= self.knots[n] {
            return self.values[n];
        }
        if t < self.knots[0] {
            return self.values[0];
        }
        let k = self.knots.partition_point(|&s| s <= t) - 1;
        self.right_values[k]
    }

    pub fn increment(&self, s: f64, t: f64) -> f64 {
        self.eval(t) - self.eval(s)
    }

    pub fn total(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Right-continuous representative on the open interior, endpoints kept.
    pub fn normalize(&self) -> Self {
        let mut out = self.clone();
        let n = out.knots.len() - 1;
        for k in 1..n {
            out.values[k] = out.right_values[k];
        }
        out.normalized = true;
        out
    }

    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0])
            && self.values.iter().zip(&self.right_values).all(|(v, r)| r >= v)
    }

    /// Scaled copy (used for `K' eta` style bounds).
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out.right_values.iter_mut().for_each(|v| *v *= c);
        out
    }
}

fn prefix(terms: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(terms.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for t in terms {
        acc += t;
        out.push(acc);
    }
    out
}

/// Prefix sums of the cell terms on a given partition.
pub fn staircase_on_partition(
    f: &Multifunction,
    p: &Partition,
    delta: f64,
    opts: &VariationOptions,
) -> Result<CumulativeVariation> {
    let terms = cell_terms(f, p, delta, opts)?;
    let mut cv = CumulativeVariation::from_values(p.times.clone(), prefix(&terms));
    cv.delta = delta;
    cv.eps = p.diam();
    Ok(cv)
}

/// sup over ball samples at `xbar(t)` and parameters of `d_H(F(t), F(t⁺))`.
pub fn right_jump(f: &Multifunction, t: f64, delta: f64, h0: f64, opts: &VariationOptions) -> Result<f64> {
    let lim = LimitOptions { h0: Some(h0), ..opts.limit };
    let mut best: f64 = 0.0;
    for y in dedup(ball_samples(&f.reference_at(t), delta, opts.m_ball)) {
        for a in f.param_samples() {
            let a = a.as_deref();
            let l = one_sided_limit_best_effort(f, t, Side::Right, &y, a, &lim)?;
            best = best.max(hausdorff_distance(&f.eval_unchecked(t, &y, a), &l)?);
        }
    }
    Ok(best)
}

/// Dyadic lower approximation of `t -> eta^delta_eps(t)`.
///
/// Level l uses `N0 * 2^l` uniform cells with `N0 = ceil((T-S)/eps)`. The
/// value at each finest knot is the max over the levels sharing that knot,
/// made monotone by a running max.
pub fn cumulative_variation(
    f: &Multifunction,
    delta: f64,
    eps: f64,
    levels: usize,
    opts: &VariationOptions,
) -> Result<CumulativeVariation> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    check_delta(f, delta)?;
    let levels = levels.max(1);
    let (s, e) = f.horizon;
    let n0 = ((e - s) / eps).ceil().max(1.0) as usize;
    let finest = n0 << (levels - 1);
    let knots = uniform_grid(s, e, finest);
    let mut values = vec![0.0; finest + 1];
    let mut sums: Vec<Vec<f64>> = Vec::with_capacity(levels);
    for l in 0..levels {
        let n = n0 << l;
        let stride = 1 << (levels - 1 - l);
        let p = Partition { times: (0..=n).map(|k| knots[k * stride]).collect() };
        let sum = prefix(&cell_terms(f, &p, delta, opts)?);
        for (k, v) in sum.iter().enumerate() {
            let j = k * stride;
            values[j] = f64::max(values[j], *v);
        }
        sums.push(sum);
    }
    for k in 1..=finest {
        values[k] = values[k].max(values[k - 1]);
    }
    let refined = levels >= 2 && {
        let a = &sums[levels - 2];
        let b = &sums[levels - 1];
        a.iter().enumerate().all(|(k, v)| (b[2 * k] - v).abs() < opts.tol_eta)
    };

    let mut right_values = values.clone();
    if opts.right_limits {
        let h0 = 0.25 * (e - s) / finest as f64;
        let jumps: Vec<Result<f64>> = knots[..finest]
            .par_iter()
            .map(|&t| right_jump(f, t, delta, h0, opts))
            .collect();
        let jumps: Vec<f64> = jumps.into_iter().collect::<Result<_>>()?;
        for k in 0..finest {
            right_values[k] = values[k] + jumps[k];
            if right_values[k] > values[k + 1] {
                values[k + 1] = right_values[k];
            }
        }
        right_values[finest] = values[finest];
    }
    let cv = CumulativeVariation {
        knots,
        values,
        right_values,
        delta,
        eps,
        level: levels - 1,
        refined,
        normalized: false,
    };
    if let Some(i) = cv.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NotMonotone { index: i });
    }
    Ok(cv)
}

/// `2 v_n - v_{n-1}` for a sequence computed at halving step sizes.
pub fn extrapolate_halving(seq: &[f64]) -> Option<f64> {
    match seq {
        [] => None,
        [v] => Some(*v),
        [.., a, b] => Some(2.0 * b - a),
    }
}

/// `eta^delta_eps(T)` along a user-supplied sequence of `(delta, eps)` pairs.
pub fn limit_sequence(
    f: &Multifunction,
    pairs: &[(f64, f64)],
    levels: usize,
    opts: &VariationOptions,
) -> Result<Vec<f64>> {
    let o = VariationOptions { right_limits: false, ..*opts };
    pairs
        .iter()
        .map(|&(d, e)| Ok(cumulative_variation(f, d, e, levels, &o)?.total()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestrictionReport {
    pub grid: Vec<f64>,
    pub increments_a: Vec<f64>,
    pub increments_a1: Vec<f64>,
    /// min over grid pairs s < t of `(eta_A(t)-eta_A(s)) - (eta_A1(t)-eta_A1(s))`.
    pub margin: f64,
}

impl RestrictionReport {
    pub fn pass(&self, tol: f64) -> bool {
        self.margin >= -tol
    }
}

/// Compares the staircases for parameter sets `A1 ⊆ A` on a partition.
pub fn restriction_compare(
    f: &Multifunction,
    a1: &CompactSet,
    a: &CompactSet,
    grid: &Partition,
    delta: f64,
    opts: &VariationOptions,
) -> Result<RestrictionReport> {
    for p in &a1.points {
        if distance_to_set(p, a)? > 1e-12 {
            return Err(Error::NotSubset { point: p.clone() });
        }
    }
    if a1.hull && !a.is_convex() && a1.diameter() > 0.0 {
        return Err(Error::NotSubset { point: a1.points[0].clone() });
    }
    let p1: Vec<Option<Vec<f64>>> = a1.points.iter().cloned().map(Some).collect();
    // A's own points plus those of A1: A1 ⊆ A, so this is still a sample of A.
    let mut pa: Vec<Option<Vec<f64>>> = a.points.iter().cloned().map(Some).collect();
    pa.extend(p1.iter().cloned());
    let ta = terms_with(f, grid, delta, opts, &pa)?;
    let t1 = terms_with(f, grid, delta, opts, &p1)?;
    let sa = prefix(&ta);
    let s1 = prefix(&t1);
    let n = grid.times.len();
    let mut margin = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            margin = margin.min((sa[j] - sa[i]) - (s1[j] - s1[i]));
        }
    }
    Ok(RestrictionReport { grid: grid.times.clone(), increments_a: ta, increments_a1: t1, margin })
}

/// Piecewise-constant interpolant of grid jumps and its eta-reparametrization.
#[derive(Debug, Clone)]
pub struct Interpolant {
    /// `m_k` on `[t_k, t_{k+1})`, `m_N = m_{N-1}` at T.
    pub m: Arc,
    pub eta: CumulativeVariation,
}

impl Interpolant {
    pub fn m(&self, t: f64) -> f64 {
        self.m.eval(t)[0]
    }

    /// The reparametrized interpolant; 0/0 cells take the left value.
    pub fn m_tilde(&self, t: f64) -> f64 {
        let g = &self.m.grid;
        let n = g.len() - 1;
        if t >= g[n] {
            return self.m.values[n][0];
        }
        let k = self.m.cell_index(t);
        let mk = self.m.values[k][0];
        let mk1 = self.m.values[k + 1][0];
        let den = self.eta.eval(g[k + 1]) - self.eta.eval(g[k]);
        if den == 0.0 {
            return mk;
        }
        mk + (mk1 - mk) * (self.eta.eval(t) - self.eta.eval(g[k])) / den
    }
}

/// Builds `m_i` and `m~_i` from jumps `d_1..d_{N-1}` at interior grid points.
///
/// The jumps are cumulative: `m_k = m0 + d_1 + ... + d_k`. Each must satisfy
/// `|d_j| <= eta(t_j) - eta(t_{j-1})` (up to 1e-12).
pub fn interpolant(eta: &CumulativeVariation, grid: &Partition, jumps: &[f64], m0: f64) -> Result<Interpolant> {
    let n = grid.cells();
    if n < 2 || jumps.len() != n - 1 {
        return Err(Error::InvalidInput(format!(
            "expected {} jumps for {} cells",
            n.saturating_sub(1),
            n
        )));
    }
    let t = &grid.times;
    let bad: Vec<usize> = (1..n)
        .filter(|&j| jumps[j - 1].abs() > eta.eval(t[j]) - eta.eval(t[j - 1]) + 1e-12)
        .collect();
    if !bad.is_empty() {
        return Err(Error::JumpBoundViolation { indices: bad });
    }
    let mut m = Vec::with_capacity(n + 1);
    m.push(vec![m0]);
    for j in 1..n {
        let prev = m[j - 1][0];
        m.push(vec![prev + jumps[j - 1]]);
    }
    m.push(m[n - 1].clone());
    Ok(Interpolant {
        m: Arc { grid: t.clone(), values: m, interp: Interp::ConstantLeft },
        eta: eta.clone(),
    })
}
