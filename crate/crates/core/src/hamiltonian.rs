//! `H_lambda(t,x,p) = max_{v in F(t,x)} [p.v - lambda L(t,x,v)]`, its trace
//! along a reference arc and costate, and the bounded-variation verdict.

use crate::error::Result;
use crate::linalg::{axpy, dot, lex_cmp, norm, sub};
use crate::multifun::{Arc, LimitOptions, Multifunction};
use crate::setvalued::{support_face, support_function, CompactSet};
use crate::trajectory::Integrand;
use crate::variation::{staircase_on_partition, CumulativeVariation, Partition, VariationOptions};
use std::cmp::Ordering;

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Maximizer of a concave-ish function on `[a, b]` by golden-section search.
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

fn better(val: f64, v: &[f64], best: f64, arg: &[f64]) -> bool {
    val > best || (val == best && lex_cmp(v, arg) == Ordering::Less)
}

/// Maximizes `p.v - lambda cost(v)` over a compact set. Vertices always; for
/// hull sets and a nonlinear cost also golden-section along edges (1-D) or
/// Frank-Wolfe (dimension >= 2).
pub fn eval_h_set(
    set: &CompactSet,
    p: &[f64],
    lambda: f64,
    cost: Option<&dyn Fn(&[f64]) -> f64>,
) -> Result<(f64, Vec<f64>)> {
    let cost = match cost {
        Some(c) if lambda != 0.0 => c,
        _ => {
            let (s, v) = support_function(set, p)?;
            let c0 = match cost {
                Some(c) => lambda * c(&v),
                None => 0.0,
            };
            return Ok((s - c0, v));
        }
    };
    let phi = |v: &[f64]| dot(p, v) - lambda * cost(v);
    let mut best = f64::NEG_INFINITY;
    let mut arg = set.points[0].clone();
    for v in &set.points {
        let val = phi(v);
        if better(val, v, best, &arg) {
            best = val;
            arg = v.clone();
        }
    }
    if !set.hull || set.points.len() == 1 {
        return Ok((best, arg));
    }
    let dim = set.dim();
    if dim == 1 {
        let (lo, hi) = set.bounding_box();
        let (v, val) = golden_max(|s| phi(&[s]), lo[0], hi[0], 1e-12 * (1.0 + hi[0].abs().max(lo[0].abs())));
        if val > best {
            best = val;
            arg = vec![v];
        }
        return Ok((best, arg));
    }
    // Frank-Wolfe from the best vertex, exact line search by golden section.
    let mut x = arg.clone();
    let mut fx = best;
    for _ in 0..200 {
        let g = fd_grad(&phi, &x);
        let (_, s) = support_function(set, &g)?;
        let d = sub(&s, &x);
        if dot(&g, &d) <= 1e-14 * (1.0 + norm(&g)) {
            break;
        }
        let (theta, val) = golden_max(|th| phi(&axpy(&x, th, &d)), 0.0, 1.0, 1e-12);
        if val <= fx {
            break;
        }
        x = axpy(&x, theta, &d);
        fx = val;
    }
    if fx > best {
        best = fx;
        arg = x;
    }
    Ok((best, arg))
}

fn fd_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-7 * x[i].abs().max(1.0);
            y[i] = x[i] + h;
            let a = f(&y);
            y[i] = x[i] - h;
            let b = f(&y);
            y[i] = x[i];
            (a - b) / (2.0 * h)
        })
        .collect()
}

fn cost_fn<'a>(l: Option<&'a Integrand>, t: f64, x: &'a [f64]) -> Option<Box<dyn Fn(&[f64]) -> f64 + 'a>> {
    match l {
        Some(l) if !l.is_zero => Some(Box::new(move |v: &[f64]| l.value(t, x, v))),
        _ => None,
    }
}

/// Checked `H_lambda(t, x, p)` with an attaining velocity.
pub fn eval_h(
    f: &Multifunction,
    l: Option<&Integrand>,
    lambda: f64,
    t: f64,
    x: &[f64],
    p: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let set = f.eval(t, x, None)?;
    let c = cost_fn(l, t, x);
    eval_h_set(&set, p, lambda, c.as_deref())
}

/// `H_lambda` without horizon or tube checks (probing, finite differences).
pub fn eval_h_unchecked(
    f: &Multifunction,
    l: Option<&Integrand>,
    lambda: f64,
    t: f64,
    x: &[f64],
    p: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let set = f.eval_unchecked(t, x, None);
    let c = cost_fn(l, t, x);
    eval_h_set(&set, p, lambda, c.as_deref())
}

/// Central finite-difference `grad_x H_lambda`.
pub fn grad_x_h(
    f: &Multifunction,
    l: Option<&Integrand>,
    lambda: f64,
    t: f64,
    x: &[f64],
    p: &[f64],
) -> Result<Vec<f64>> {
    let mut y = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        y[i] = x[i] + h;
        let a = eval_h_unchecked(f, l, lambda, t, &y, p)?.0;
        y[i] = x[i] - h;
        let b = eval_h_unchecked(f, l, lambda, t, &y, p)?.0;
        y[i] = x[i];
        g[i] = (a - b) / (2.0 * h);
    }
    Ok(g)
}

/// Velocities attaining `H_lambda` (the p-part of its subdifferential): the
/// support face when L vanishes, the single maximizer otherwise.
pub fn h_face(
    f: &Multifunction,
    l: Option<&Integrand>,
    lambda: f64,
    t: f64,
    x: &[f64],
    p: &[f64],
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    let set = f.eval_unchecked(t, x, None);
    match cost_fn(l, t, x) {
        Some(c) if lambda != 0.0 => {
            // The face is convex; the maximizer plus every near-optimal vertex
            // spans a subset of it (all of it when the objective is affine).
            let (h, v) = eval_h_set(&set, p, lambda, Some(&*c))?;
            let mut face = vec![v];
            for w in &set.points {
                if dot(p, w) - lambda * c(w) >= h - tol && !face.contains(w) {
                    face.push(w.clone());
                }
            }
            Ok(face)
        }
        _ => support_face(&set, p, tol),
    }
}

/// Costate access used by trace and condition checks.
pub trait CostatePath {
    fn q_at(&self, t: f64) -> Vec<f64>;
    fn p_at(&self, t: f64) -> Vec<f64>;
    fn q_sup_norm(&self) -> f64;
}

/// A continuous costate with `q = p`.
impl CostatePath for Arc {
    fn q_at(&self, t: f64) -> Vec<f64> {
        self.eval(t)
    }

    fn p_at(&self, t: f64) -> Vec<f64> {
        self.eval(t)
    }

    fn q_sup_norm(&self) -> f64 {
        self.sup_norm()
    }
}

#[derive(Debug, Clone)]
pub struct HamiltonianTrace {
    /// Knots and cell midpoints of the reference grid.
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub variation: CumulativeVariation,
    /// Probed `(r(S+), r(T-))`.
    pub endpoint_limits: (f64, f64),
    pub endpoint_certified: (bool, bool),
}

impl HamiltonianTrace {
    pub fn total_variation(&self) -> f64 {
        self.variation.total()
    }

    /// Largest `|r(t_{k+1}) - r(t_k)| / (t_{k+1} - t_k)` over the grid.
    pub fn max_slope(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, r)| (r[1] - r[0]).abs() / (t[1] - t[0]))
            .fold(0.0, f64::max)
    }
}

fn probe_limit(eval: impl Fn(f64) -> Result<f64>, t: f64, sign: f64, h0: f64, opts: &LimitOptions) -> Result<(f64, bool)> {
    let mut h = h0;
    let mut prev = eval(t + sign * h)?;
    for _ in 0..opts.max_refine {
        h *= 0.5;
        let p = t + sign * h;
        if p == t {
            break;
        }
        let cur = eval(p)?;
        if (cur - prev).abs() < opts.tol_limit {
            return Ok((cur, true));
        }
        prev = cur;
    }
    Ok((prev, false))
}

/// `r(t) = H_lambda(t, xbar(t), q(t))` at knots and midpoints of `xbar`.
pub fn trace(
    f: &Multifunction,
    l: Option<&Integrand>,
    lambda: f64,
    xbar: &Arc,
    q: &dyn CostatePath,
    opts: &LimitOptions,
) -> Result<HamiltonianTrace> {
    let mut grid = Vec::with_capacity(2 * xbar.grid.len());
    for k in 0..xbar.cells() {
        grid.push(xbar.grid[k]);
        grid.push(0.5 * (xbar.grid[k] + xbar.grid[k + 1]));
    }
    grid.push(xbar.end());
    let values: Vec<f64> = grid
        .iter()
        .map(|&t| Ok(eval_h(f, l, lambda, t, &xbar.eval(t), &q.q_at(t))?.0))
        .collect::<Result<_>>()?;

    let lookup_grid = grid.clone();
    let lookup_vals = values.clone();
    let single = Multifunction::single_valued(f.horizon, move |t| {
        let k = lookup_grid.partition_point(|&s| s < t).min(lookup_grid.len() - 1);
        vec![lookup_vals[k]]
    });
    let vo = VariationOptions { right_limits: false, ..Default::default() };
    let variation = staircase_on_partition(&single, &Partition::new(grid.clone())?, 0.0, &vo)?;

    let (s, e) = f.horizon;
    let h0 = opts.h0.unwrap_or(1e-3 * (e - s)).min(0.5 * (xbar.grid[1] - xbar.grid[0]));
    let xs = xbar.eval(s);
    let ps = q.p_at(s);
    let (rs, cs) = probe_limit(|t| Ok(eval_h_unchecked(f, l, lambda, t, &xs, &ps)?.0), s, 1.0, h0, opts)?;
    let n = xbar.cells();
    let h1 = opts.h0.unwrap_or(1e-3 * (e - s)).min(0.5 * (xbar.grid[n] - xbar.grid[n - 1]));
    let xe = xbar.eval(e);
    let qe = q.q_at(e);
    let (re, ce) = probe_limit(|t| Ok(eval_h_unchecked(f, l, lambda, t, &xe, &qe)?.0), e, -1.0, h1, opts)?;
    Ok(HamiltonianTrace { grid, values, variation, endpoint_limits: (rs, re), endpoint_certified: (cs, ce) })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BvReport {
    /// min over interior pairs s < t of `bound - |r(t) - r(s)|`.
    pub min_margin: f64,
    pub worst_pair: Option<(f64, f64)>,
    pub pairs: usize,
    /// Margin between consecutive grid points (first entry has no predecessor).
    pub consecutive_margins: Vec<Option<f64>>,
    /// `|r(S+) - r(first interior point)|`, `|r(T-) - r(last interior point)|`.
    pub endpoint_gaps: (f64, f64),
    pub pass: bool,
}

/// Checks `|r(t)-r(s)| <= |q| (etaF*(t)-etaF*(s)) + lambda (etaL*(t)-etaL*(s))`
/// on all pairs of trace points strictly inside the horizon.
pub fn bv_verdict(
    tr: &HamiltonianTrace,
    eta_f: &CumulativeVariation,
    eta_l: Option<&CumulativeVariation>,
    q_inf: f64,
    lambda: f64,
    bv_tol: f64,
) -> BvReport {
    let bound = |t: f64| q_inf * eta_f.eval(t) + lambda * eta_l.map_or(0.0, |e| e.eval(t));
    let n = tr.grid.len();
    let b: Vec<f64> = tr.grid.iter().map(|&t| bound(t)).collect();
    let mut min_margin = f64::INFINITY;
    let mut worst = None;
    let mut pairs = 0;
    for i in 1..n - 1 {
        for j in i + 1..n - 1 {
            let m = (b[j] - b[i]) - (tr.values[j] - tr.values[i]).abs();
            pairs += 1;
            if m < min_margin {
                min_margin = m;
                worst = Some((tr.grid[i], tr.grid[j]));
            }
        }
    }
    let mut consecutive_margins = vec![None];
    for k in 1..n {
        consecutive_margins.push(Some((b[k] - b[k - 1]) - (tr.values[k] - tr.values[k - 1]).abs()));
    }
    let endpoint_gaps = (
        (tr.endpoint_limits.0 - tr.values[1]).abs(),
        (tr.endpoint_limits.1 - tr.values[n - 2]).abs(),
    );
    if pairs == 0 {
        min_margin = 0.0;
    }
    BvReport {
        min_margin,
        worst_pair: worst,
        pairs,
        consecutive_margins,
        endpoint_gaps,
        pass: min_margin >= -bv_tol,
    }
}

pub const BV_TOL_SOLVER: f64 = 1e-3;
pub const BV_TOL_ANALYTIC: f64 = 1e-8;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multifun::{Interp, ScalarFn};
    use crate::variation::cumulative_variation;

    #[test]
    fn h_of_ball_is_norm() {
        let f = Multifunction::ball(ScalarFn::constant(2.0), 1, 0, (0.0, 1.0)).unwrap();
        assert_eq!(eval_h(&f, None, 1.0, 0.3, &[0.0], &[-1.5]).unwrap().0, 3.0);
        assert_eq!(eval_h(&f, None, 1.0, 0.3, &[0.0], &[0.0]).unwrap().0, 0.0);
    }

    #[test]
    fn h_with_quadratic_cost() {
        let f = Multifunction::interval(ScalarFn::constant(-1.0), ScalarFn::constant(1.0), (0.0, 1.0));
        let l = Integrand::new(|_, _, v| 0.5 * v[0] * v[0]);
        let (h, v) = eval_h(&f, Some(&l), 1.0, 0.0, &[0.0], &[0.3]).unwrap();
        assert!((h - 0.045).abs() < 1e-14);
        // the objective is flat at the top, so the argmax is only good to ~sqrt(eps)
        assert!((v[0] - 0.3).abs() < 1e-7);
    }

    #[test]
    fn h_frank_wolfe_in_square() {
        let sq = CompactSet::hull_of(vec![vec![-1.0, -1.0], vec![1.0, -1.0], vec![1.0, 1.0], vec![-1.0, 1.0]]).unwrap();
        let c = |v: &[f64]| 0.5 * dot(v, v);
        let (h, v) = eval_h_set(&sq, &[0.3, -0.4], 1.0, Some(&c)).unwrap();
        assert!((h - 0.125).abs() < 1e-9, "{h}");
        assert!((v[0] - 0.3).abs() < 1e-4 && (v[1] + 0.4).abs() < 1e-4);
    }

    #[test]
    fn trace_of_autonomous_problem_is_constant() {
        let f = Multifunction::interval(ScalarFn::constant(-1.0), ScalarFn::constant(1.0), (0.0, 1.0));
        let xbar = Arc::sample(0.0, 1.0, 16, Interp::Linear, |t| vec![t]);
        let q = Arc::constant(0.0, 1.0, vec![0.7]);
        let tr = trace(&f, None, 1.0, &xbar, &q, &LimitOptions::default()).unwrap();
        assert!(tr.total_variation() < 1e-15);
        assert!((tr.endpoint_limits.0 - 0.7).abs() < 1e-15);
    }

    #[test]
    fn trace_scales_with_costate() {
        let f = Multifunction::ball(ScalarFn::Poly { coeffs: vec![1.0, 1.0] }, 1, 0, (0.0, 1.0)).unwrap();
        let xbar = Arc::sample(0.0, 1.0, 8, Interp::Linear, |t| vec![t]);
        let a = trace(&f, None, 1.0, &xbar, &Arc::constant(0.0, 1.0, vec![1.0]), &LimitOptions::default()).unwrap();
        let b = trace(&f, None, 1.0, &xbar, &Arc::constant(0.0, 1.0, vec![2.5]), &LimitOptions::default()).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((2.5 * x - y).abs() < 1e-14);
        }
        assert!(a.max_slope() <= 1.0 + 1e-12);
    }

    #[test]
    fn jump_example_is_tight() {
        let f = Multifunction::interval(
            ScalarFn::constant(-1.0),
            ScalarFn::Step { at: 0.5, before: 1.0, after: 2.0 },
            (0.0, 1.0),
        );
        let xbar = Arc::sample(0.0, 1.0, 16, Interp::Linear, |t| vec![if t <= 0.5 { t } else { 2.0 * t - 0.5 }]);
        let q = Arc::constant(0.0, 1.0, vec![1.0]);
        let tr = trace(&f, None, 1.0, &xbar, &q, &LimitOptions::default()).unwrap();
        let eta = cumulative_variation(&f, 0.0, 1.0 / 16.0, 2, &VariationOptions::default()).unwrap().normalize();
        let rep = bv_verdict(&tr, &eta, None, 1.0, 1.0, BV_TOL_ANALYTIC);
        assert!(rep.pass);
        assert!(rep.min_margin.abs() < 1e-12);
    }

    #[test]
    fn constant_trace_margins_are_bounds() {
        let f = Multifunction::interval(ScalarFn::constant(-1.0), ScalarFn::constant(1.0), (0.0, 1.0));
        let xbar = Arc::sample(0.0, 1.0, 4, Interp::Linear, |t| vec![t]);
        let tr = trace(&f, None, 1.0, &xbar, &Arc::constant(0.0, 1.0, vec![1.0]), &LimitOptions::default()).unwrap();
        let eta = CumulativeVariation::from_values(vec![0.0, 1.0], vec![0.0, 0.0]);
        let rep = bv_verdict(&tr, &eta, None, 1.0, 1.0, 0.0);
        assert_eq!(rep.min_margin, 0.0);
        assert!(rep.pass);
    }
}
