//! Fixed-endpoint problems `minimize int L(t, x, x')` with integrands of
//! bounded variation in time: hypothesis checks and a quantitative
//! certificate that a candidate minimizer is Lipschitz.

use crate::error::{Error, Result};
use crate::hamiltonian::eval_h_set;
use crate::linalg::{add, dot, norm, scale, sub};
use crate::multifun::{ball_samples, Arc, Interp, Multifunction};
use crate::setvalued::CompactSet;
use crate::trajectory::Integrand;
use crate::variation::{cumulative_variation, CumulativeVariation, VariationOptions};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc as Shared;

type ThetaFn = Shared<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct VariationalProblem {
    pub l: Integrand,
    /// Superlinear minorant `theta` with `L >= theta(|v|) - alpha |x|`.
    pub theta: ThetaFn,
    pub alpha: f64,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub horizon: (f64, f64),
    /// Bound K on the variation sums.
    pub k_bv: f64,
    /// Declared `(D, k_D)` Lipschitz constants on D-balls.
    pub k_d: Vec<(f64, f64)>,
    /// Tube radius around the candidate.
    pub delta: f64,
    /// Mesh of the coarsest partition for the variation sums.
    pub eps: f64,
}

impl std::fmt::Debug for VariationalProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VariationalProblem")
            .field("x0", &self.x0)
            .field("x1", &self.x1)
            .field("horizon", &self.horizon)
            .field("k_bv", &self.k_bv)
            .field("delta", &self.delta)
            .finish()
    }
}

impl VariationalProblem {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// Midpoint-rule action of an arc.
    pub fn action(&self, x: &Arc) -> f64 {
        (0..x.cells())
            .map(|k| {
                let (t0, t1) = (x.grid[k], x.grid[k + 1]);
                let h = t1 - t0;
                let xm = scale(&add(&x.values[k], &x.values[k + 1]), 0.5);
                let v = scale(&sub(&x.values[k + 1], &x.values[k]), 1.0 / h);
                h * self.l.value(0.5 * (t0 + t1), &xm, &v)
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChordWitness {
    pub t: f64,
    pub x: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub s: f64,
    /// `L(t,x,s v1 + (1-s) v2) - s L(v1) - (1-s) L(v2) > 0`
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorantWitness {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// `theta(|v|) - alpha |x| - L(t,x,v) > 0`
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub convexity: Option<ChordWitness>,
    pub theta_superlinear: bool,
    pub theta_convex: bool,
    pub minorant: Option<MinorantWitness>,
    /// `(D, measured Lipschitz constant, declared)`
    pub k_d: Vec<(f64, f64, Option<f64>)>,
    pub v_cap: f64,
    pub bv_sum: f64,
    pub bv_refined: bool,
    pub pass_he: bool,
    pub pass_hr: bool,
    pub pass_bv: bool,
}

impl HypothesisReport {
    pub fn pass(&self) -> bool {
        self.pass_he && self.pass_hr && self.pass_bv
    }
}

const PROBE_J: i32 = 20;

fn sample_times(xbar: &Arc, m: usize) -> Vec<f64> {
    let (s, e) = (xbar.start(), xbar.end());
    (0..=m).map(|i| s + (e - s) * i as f64 / m as f64).collect()
}

/// `theta(r)/r` increasing on `r = 2^j`, `j = 0..=20`, and midpoint convex
/// on those probes.
fn theta_checks(theta: &ThetaFn) -> (bool, bool) {
    let rs: Vec<f64> = (0..=PROBE_J).map(|j| 2f64.powi(j)).collect();
    let ratios: Vec<f64> = rs.iter().map(|&r| theta(r) / r).collect();
    let superlinear = ratios.windows(2).all(|w| w[1] > w[0]);
    let mut convex = true;
    for w in rs.windows(2) {
        let m = 0.5 * (w[0] + w[1]);
        convex &= theta(m) <= 0.5 * (theta(w[0]) + theta(w[1])) + 1e-12 * theta(w[1]).abs().max(1.0);
    }
    convex &= theta(0.0) >= 0.0;
    (superlinear, convex)
}

/// Velocity cap: smallest probe radius beyond which the minorant exceeds the
/// candidate's mean cost, and at least the candidate's largest slope.
pub fn velocity_cap(v: &VariationalProblem, xbar: &Arc) -> f64 {
    let mean = v.action(xbar) / (v.horizon.1 - v.horizon.0);
    let xmax = xbar.sup_norm() + v.delta;
    let threshold = |r: f64| (v.theta)(r) - v.alpha * xmax > mean;
    let mut hi = 1.0;
    let mut k = 0;
    while !threshold(hi) && k < 60 {
        hi *= 2.0;
        k += 1;
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if threshold(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi.max(sup_slope(xbar))
}

/// Estimate of `ess sup |x'|`: the larger of the biggest chord slope and the
/// biggest second-order nodal derivative (one-sided three-point at the ends).
/// Chord slopes sit at cell midpoints and see endpoint maxima only to first
/// order; the nodal estimate does not underrate velocity corners because
/// the chord term is kept.
pub fn sup_slope(x: &Arc) -> f64 {
    let chords = (0..x.cells()).map(|k| norm(&x.derivative(k))).fold(0.0, f64::max);
    let n = x.cells();
    if n < 2 {
        return chords;
    }
    let g = &x.grid;
    let v = &x.values;
    let uniform = |k: usize| ((g[k + 1] - g[k]) - (g[k] - g[k - 1])).abs() <= 1e-12 * (g[n] - g[0]);
    let mut nodal: f64 = 0.0;
    for k in 1..n {
        if uniform(k) {
            nodal = nodal.max(norm(&scale(&sub(&v[k + 1], &v[k - 1]), 0.5 / (g[k + 1] - g[k]))));
        }
    }
    if uniform(1) {
        let h = g[1] - g[0];
        let d: Vec<f64> = (0..x.dim()).map(|i| (-3.0 * v[0][i] + 4.0 * v[1][i] - v[2][i]) / (2.0 * h)).collect();
        nodal = nodal.max(norm(&d));
    }
    if uniform(n - 1) {
        let h = g[n] - g[n - 1];
        let d: Vec<f64> = (0..x.dim()).map(|i| (3.0 * v[n][i] - 4.0 * v[n - 1][i] + v[n - 2][i]) / (2.0 * h)).collect();
        nodal = nodal.max(norm(&d));
    }
    chords.max(nodal)
}

/// `t -> {L(t, x, v)}` as a single-valued multifunction with v as parameter.
fn integrand_map(v: &VariationalProblem, xbar: &Arc, cap: f64, m_ball: usize) -> Result<Multifunction> {
    let l = v.l.clone();
    let params = CompactSet::new(ball_samples(&vec![0.0; v.dim()], cap, m_ball), false)?;
    Ok(Multifunction::from_fn(1, v.horizon, move |t, x, a| {
        let w = a.map(|a| a.to_vec()).unwrap_or_else(|| vec![0.0; x.len()]);
        CompactSet::point(vec![l.value(t, x, &w)])
    })
    .with_params(params)
    .with_locality(v.delta, xbar.clone()))
}

/// Cumulative variation of L along the candidate over the velocity cap.
pub fn integrand_variation(v: &VariationalProblem, xbar: &Arc, cap: f64, levels: usize) -> Result<CumulativeVariation> {
    let opts = VariationOptions::default();
    let map = integrand_map(v, xbar, cap, opts.m_ball)?;
    cumulative_variation(&map, v.delta, v.eps, levels, &opts)
}

pub fn check_hypotheses(v: &VariationalProblem, xbar: &Arc) -> Result<HypothesisReport> {
    if xbar.dim() != v.dim() {
        return Err(Error::DimensionMismatch { expected: v.dim(), got: xbar.dim() });
    }
    let n = v.dim();
    let cap = velocity_cap(v, xbar);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let times = sample_times(xbar, 16);
    let rand_ball = |rng: &mut ChaCha8Rng, r: f64| -> Vec<f64> {
        loop {
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            if norm(&p) <= 1.0 {
                return scale(&p, r);
            }
        }
    };

    // convexity in v by random chords
    let mut convexity: Option<ChordWitness> = None;
    'chords: for &t in &times {
        let c = xbar.eval(t);
        for _ in 0..64 {
            let x = add(&c, &rand_ball(&mut rng, v.delta));
            let r = 2.0 * cap * rng.gen_range(0.01..=1.0f64);
            let v1 = rand_ball(&mut rng, r);
            let v2 = rand_ball(&mut rng, r);
            for s in [0.25, 0.5, 0.75] {
                let w: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| s * a + (1.0 - s) * b).collect();
                let lhs = v.l.value(t, &x, &w);
                let rhs = s * v.l.value(t, &x, &v1) + (1.0 - s) * v.l.value(t, &x, &v2);
                let gap = lhs - rhs;
                if gap > 1e-10 * (1.0 + rhs.abs()) {
                    convexity = Some(ChordWitness { t, x, v1, v2, s, gap });
                    break 'chords;
                }
            }
        }
    }

    let (theta_superlinear, theta_convex) = theta_checks(&v.theta);

    // minorant on a cloud of radii 2^j
    let mut minorant: Option<MinorantWitness> = None;
    'cloud: for &t in &times {
        let c = xbar.eval(t);
        for x in ball_samples(&c, v.delta, 8) {
            for j in -2..=10 {
                let r = 2f64.powi(j);
                for w in ball_samples(&vec![0.0; n], r, 8).into_iter().filter(|w| norm(w) > 0.0) {
                    let gap = (v.theta)(norm(&w)) - v.alpha * norm(&x) - v.l.value(t, &x, &w);
                    if gap > 1e-10 * (1.0 + gap.abs()) {
                        minorant = Some(MinorantWitness { t, x, v: w, gap });
                        break 'cloud;
                    }
                }
            }
        }
    }

    // local Lipschitz constants by finite differences on (x, v) in D-balls
    let mut radii: Vec<f64> = v.k_d.iter().map(|&(d, _)| d).collect();
    if radii.is_empty() {
        radii.push(xbar.sup_norm().max(cap) + v.delta);
    }
    let mut k_d = Vec::new();
    let mut pass_hr = true;
    for d in radii {
        let mut best: f64 = 0.0;
        for &t in &times {
            for _ in 0..32 {
                let x = rand_ball(&mut rng, d);
                let w = rand_ball(&mut rng, d);
                let g = [v.l.grad_x(t, &x, &w), v.l.grad_v(t, &x, &w)].concat();
                best = best.max(norm(&g));
            }
        }
        let declared = v.k_d.iter().find(|&&(dd, _)| dd == d).map(|&(_, k)| k);
        if let Some(k) = declared {
            pass_hr &= best <= k * (1.0 + 1e-6);
        }
        pass_hr &= best.is_finite();
        k_d.push((d, best, declared));
    }

    let eta = integrand_variation(v, xbar, cap, 3)?;
    let bv_sum = eta.total();
    Ok(HypothesisReport {
        pass_he: convexity.is_none() && theta_superlinear && theta_convex && minorant.is_none(),
        convexity,
        theta_superlinear,
        theta_convex,
        minorant,
        k_d,
        v_cap: cap,
        bv_sum,
        bv_refined: eta.refined,
        pass_hr,
        pass_bv: bv_sum <= v.k_bv + 1e-9,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveVarOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for SolveVarOptions {
    fn default() -> Self {
        Self { max_iter: 60, grad_tol: 1e-12 }
    }
}

/// Gradient of the midpoint action with respect to the interior nodes.
fn action_gradient(v: &VariationalProblem, grid: &[f64], xs: &[Vec<f64>]) -> Vec<f64> {
    let n = v.dim();
    let cells = grid.len() - 1;
    let mut g = vec![0.0; (cells + 1) * n];
    for k in 0..cells {
        let h = grid[k + 1] - grid[k];
        let tm = 0.5 * (grid[k] + grid[k + 1]);
        let xm = scale(&add(&xs[k], &xs[k + 1]), 0.5);
        let w = scale(&sub(&xs[k + 1], &xs[k]), 1.0 / h);
        let gx = v.l.grad_x(tm, &xm, &w);
        let gv = v.l.grad_v(tm, &xm, &w);
        for i in 0..n {
            g[k * n + i] += 0.5 * h * gx[i] - gv[i];
            g[(k + 1) * n + i] += 0.5 * h * gx[i] + gv[i];
        }
    }
    g[n..cells * n].to_vec()
}

/// Minimizes the midpoint action on a uniform grid by damped Newton steps
/// (Hessian by differencing the gradient), starting from the chord.
pub fn solve_variational(v: &VariationalProblem, cells: usize, opts: &SolveVarOptions) -> Result<Arc> {
    let n = v.dim();
    if v.x1.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.x1.len() });
    }
    let (s, e) = v.horizon;
    let mut x = Arc::sample(s, e, cells, Interp::Linear, |t| {
        let w = (t - s) / (e - s);
        v.x0.iter().zip(&v.x1).map(|(a, b)| a + w * (b - a)).collect()
    });
    let m = (cells - 1) * n;
    for _ in 0..opts.max_iter {
        let g = action_gradient(v, &x.grid, &x.values);
        let gn = g.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        if gn <= opts.grad_tol {
            break;
        }
        let mut hess = DMatrix::<f64>::zeros(m, m);
        for c in 0..m {
            let (k, i) = (c / n + 1, c % n);
            let d = 1e-6 * x.values[k][i].abs().max(1.0);
            let mut xp = x.values.clone();
            xp[k][i] += d;
            let gp = action_gradient(v, &x.grid, &xp);
            xp[k][i] -= 2.0 * d;
            let gm = action_gradient(v, &x.grid, &xp);
            for r in 0..m {
                hess[(r, c)] = (gp[r] - gm[r]) / (2.0 * d);
            }
        }
        let hs = 0.5 * (&hess + hess.transpose());
        let rhs = -DVector::from_vec(g.clone());
        let step = match hs.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => hs.lu().solve(&rhs).ok_or_else(|| Error::InvalidInput("singular Hessian".into()))?,
        };
        let f0 = v.action(&x);
        let mut a = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut y = x.clone();
            for c in 0..m {
                y.values[c / n + 1][c % n] += a * step[c];
            }
            if v.action(&y) <= f0 + 1e-14 * (1.0 + f0.abs()) {
                x = y;
                accepted = true;
                break;
            }
            a *= 0.5;
        }
        if !accepted || step.amax() * a < 1e-15 {
            break;
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateOptions {
    pub levels: [usize; 3],
    /// Stationarity tolerance for the discrete Euler residual.
    pub ce_tol: f64,
    /// Slack for the dual bounds and the trace jumps.
    pub bound_tol: f64,
    pub drift_tol: f64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self { levels: [64, 128, 256], ce_tol: 1e-6, bound_tol: 1e-6, drift_tol: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceJump {
    pub t: f64,
    pub jump: f64,
    pub eta_increment: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzCertificate {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    #[serde(rename = "K")]
    pub k_bv: f64,
    #[serde(rename = "V_cap")]
    pub v_cap: f64,
    pub sup_slope: f64,
    pub level_slopes: Vec<(usize, f64)>,
    pub slope_drift: f64,
    /// `min_t (k3 + r(t) - |p(t)|)`
    pub local_bound_margin: f64,
    /// `k2 + k3 + K - max_t |p(t)|`
    pub chain_margin: f64,
    pub euler_residual: f64,
    /// Largest gain of `p.v - L` over `p.x' - L` for random `|v| <= 10 V_cap`.
    pub weierstrass_gap: f64,
    pub worst_jump: Option<TraceJump>,
    pub hypotheses: HypothesisReport,
    pub verdict: bool,
}

/// Quantitative version of the Lipschitz argument for a candidate
/// minimizer: `p = grad_v L` along the candidate, `r = H(t, x, p)` with H over
/// `V_cap B`, the local bound `|p| <= k3 + r`, the chain bound
/// `|p| <= k2 + k3 + K`, trace jumps against the variation of L, and the
/// largest slope of discrete minimizers on refined grids.
pub fn lipschitz_certificate(v: &VariationalProblem, xbar: &Arc, opts: &CertificateOptions) -> Result<LipschitzCertificate> {
    let hyp = check_hypotheses(v, xbar)?;
    let cap = hyp.v_cap;
    let cells = xbar.cells();
    let (s, e) = v.horizon;
    let n = v.dim();

    // p, r at cell midpoints
    let vball = if n == 1 {
        CompactSet::interval(-cap, cap)
    } else {
        CompactSet::hull_of(ball_samples(&vec![0.0; n], cap, 64))?
    };
    let mut mids = Vec::with_capacity(cells);
    let mut ps = Vec::with_capacity(cells);
    let mut rs = Vec::with_capacity(cells);
    let mut gxs = Vec::with_capacity(cells);
    let mut wgap: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
    for k in 0..cells {
        let tm = 0.5 * (xbar.grid[k] + xbar.grid[k + 1]);
        let xm = xbar.eval(tm);
        let w = xbar.derivative(k);
        let p = v.l.grad_v(tm, &xm, &w);
        let cost = |u: &[f64]| v.l.value(tm, &xm, u);
        let (r, _) = eval_h_set(&vball, &p, 1.0, Some(&cost))?;
        let here = dot(&p, &w) - v.l.value(tm, &xm, &w);
        for _ in 0..16 {
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0 * cap..=10.0 * cap)).collect();
            wgap = wgap.max(dot(&p, &u) - v.l.value(tm, &xm, &u) - here);
        }
        gxs.push(v.l.grad_x(tm, &xm, &w));
        mids.push(tm);
        ps.push(p);
        rs.push(r);
    }

    let k3 = {
        let unit = ball_samples(&vec![0.0; n], 1.0, 32);
        let mut best = f64::NEG_INFINITY;
        for t in xbar.grid.iter().copied().chain(mids.iter().copied()) {
            let x = xbar.eval(t);
            for u in &unit {
                best = best.max(v.l.value(t, &x, u));
            }
        }
        best
    };
    let t1 = s + 0.25 * (e - s);
    let early: Vec<usize> = (0..cells).filter(|&k| mids[k] <= t1).collect();
    let k1 = early.iter().map(|&k| norm(&ps[k])).fold(0.0, f64::max);
    let k2 = early.iter().map(|&k| rs[k].abs()).fold(0.0, f64::max);
    let local_bound_margin = (0..cells).map(|k| k3 + rs[k] - norm(&ps[k])).fold(f64::INFINITY, f64::min);
    let pmax = ps.iter().map(|p| norm(p)).fold(0.0, f64::max);
    let chain_margin = k2 + k3 + v.k_bv - pmax;

    // discrete Euler equation across each interior knot
    let euler_residual = (1..cells)
        .map(|k| {
            let h = xbar.grid[k + 1] - xbar.grid[k];
            let hp = xbar.grid[k] - xbar.grid[k - 1];
            let lhs = sub(&ps[k], &ps[k - 1]);
            let rhs = add(&scale(&gxs[k - 1], 0.5 * hp), &scale(&gxs[k], 0.5 * h));
            norm(&sub(&lhs, &rhs))
        })
        .fold(0.0, f64::max);

    // trace jumps between neighbouring midpoints against the variation of L
    let eta = integrand_variation(v, xbar, cap, 1)?;
    let mut worst_jump: Option<TraceJump> = None;
    for k in 1..cells {
        let jump = rs[k] - rs[k - 1];
        let inc = eta.increment(mids[k - 1], mids[k]);
        let margin = inc - jump.abs();
        if worst_jump.as_ref().map_or(true, |w| margin < w.margin) {
            worst_jump = Some(TraceJump { t: xbar.grid[k], jump, eta_increment: inc, margin });
        }
    }

    let mut level_slopes = Vec::new();
    for &lv in &opts.levels {
        let x = solve_variational(v, lv, &SolveVarOptions::default())?;
        level_slopes.push((lv, sup_slope(&x)));
    }
    let slope_drift = level_slopes
        .windows(2)
        .map(|w| (w[1].1 - w[0].1).abs() / w[1].1.abs().max(1e-300))
        .fold(0.0, f64::max);

    if euler_residual > opts.ce_tol {
        return Err(Error::EulerResidual { residual: euler_residual, tol: opts.ce_tol });
    }
    let verdict = hyp.pass()
        && local_bound_margin >= -opts.bound_tol
        && chain_margin >= -opts.bound_tol
        && worst_jump.as_ref().map_or(true, |w| w.margin >= -opts.bound_tol)
        && wgap <= opts.bound_tol
        && slope_drift < opts.drift_tol;
    Ok(LipschitzCertificate {
        k1,
        k2,
        k3,
        k_bv: v.k_bv,
        v_cap: cap,
        sup_slope: sup_slope(xbar),
        level_slopes,
        slope_drift,
        local_bound_margin,
        chain_margin,
        euler_residual,
        weierstrass_gap: wgap.max(0.0),
        worst_jump,
        hypotheses: hyp,
        verdict,
    })
}

/// `L = v^2/2 + [t >= 1/2] x^2` on `[0, 1]`, `x(0) = x(1) = 1`.
///
/// The (BV) constant is the largest jump of L over the tube,
/// `(max|x| + delta)^2` with `max|x| = 1`.
pub fn step_potential(delta: f64) -> VariationalProblem {
    let chi = |t: f64| if t >= 0.5 { 1.0 } else { 0.0 };
    let l = Integrand::new(move |t, x: &[f64], v: &[f64]| 0.5 * v[0] * v[0] + chi(t) * x[0] * x[0])
        .with_grad_x(move |t, x, _| vec![2.0 * chi(t) * x[0]])
        .with_grad_v(|_, _, v| vec![v[0]]);
    VariationalProblem {
        l,
        theta: Shared::new(|r| 0.5 * r * r),
        alpha: 0.0,
        x0: vec![1.0],
        x1: vec![1.0],
        horizon: (0.0, 1.0),
        k_bv: (1.0 + delta).powi(2),
        k_d: vec![],
        delta,
        eps: 1.0 / 8.0,
    }
}

/// Exact minimizer of [`step_potential`]: linear on `[0, 1/2]`, then
/// `A cosh(w s) + B sinh(w s)` with `w = sqrt 2`, `s = t - 1/2`, matched in
/// value and slope at `t = 1/2`.
pub fn step_potential_solution(t: f64) -> f64 {
    let w = std::f64::consts::SQRT_2;
    let (c, sh) = ((w * 0.5).cosh(), (w * 0.5).sinh());
    let a = (1.0 - c) / (0.5 * c + sh / w);
    if t <= 0.5 {
        1.0 + a * t
    } else {
        let s = t - 0.5;
        (1.0 + 0.5 * a) * (w * s).cosh() + (a / w) * (w * s).sinh()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic() -> VariationalProblem {
        VariationalProblem {
            l: Integrand::new(|_, _, v: &[f64]| 0.5 * v[0] * v[0]).with_grad_x(|_, _, _| vec![0.0]).with_grad_v(|_, _, v| vec![v[0]]),
            theta: Shared::new(|r| 0.5 * r * r),
            alpha: 0.0,
            x0: vec![0.0],
            x1: vec![0.5],
            horizon: (0.0, 1.0),
            k_bv: 0.0,
            k_d: vec![],
            delta: 0.25,
            eps: 0.125,
        }
    }

    #[test]
    fn exact_solution_matches_boundary_data() {
        assert!((step_potential_solution(0.0) - 1.0).abs() < 1e-15);
        assert!((step_potential_solution(1.0) - 1.0).abs() < 1e-12);
        let d = 1e-6;
        let left = (step_potential_solution(0.5) - step_potential_solution(0.5 - d)) / d;
        let right = (step_potential_solution(0.5 + d) - step_potential_solution(0.5)) / d;
        assert!((left - right).abs() < 1e-5);
    }

    #[test]
    fn quadratic_straight_line() {
        let v = quadratic();
        let x = Arc::sample(0.0, 1.0, 32, Interp::Linear, |t| vec![0.5 * t]);
        let hyp = check_hypotheses(&v, &x).unwrap();
        assert!(hyp.pass(), "{hyp:?}");
        assert_eq!(hyp.bv_sum, 0.0);
        let cert = lipschitz_certificate(&v, &x, &CertificateOptions::default()).unwrap();
        assert!(cert.verdict, "{cert:?}");
        assert!((cert.k1 - 0.5).abs() < 1e-12);
        assert!(cert.local_bound_margin > 0.0);
    }

    #[test]
    fn non_superlinear_integrand_fails_with_witness() {
        let mut v = quadratic();
        v.l = Integrand::new(|_, _, v: &[f64]| -v[0].abs());
        let x = Arc::sample(0.0, 1.0, 16, Interp::Linear, |t| vec![0.5 * t]);
        let hyp = check_hypotheses(&v, &x).unwrap();
        assert!(!hyp.pass_he);
        assert!(hyp.minorant.is_some());
    }

    #[test]
    fn concave_integrand_gives_chord_witness() {
        let mut v = quadratic();
        v.l = Integrand::new(|_, _, v: &[f64]| (1.0 + v[0] * v[0]).sqrt().recip());
        let x = Arc::sample(0.0, 1.0, 16, Interp::Linear, |t| vec![0.5 * t]);
        let hyp = check_hypotheses(&v, &x).unwrap();
        let w = hyp.convexity.expect("witness");
        assert!(w.gap > 0.0);
    }

    #[test]
    fn step_variation_sum() {
        let delta = 0.1;
        let v = step_potential(delta);
        let x = Arc::sample(0.0, 1.0, 64, Interp::Linear, |t| vec![step_potential_solution(t)]);
        let hyp = check_hypotheses(&v, &x).unwrap();
        let xm = step_potential_solution(0.5);
        // the jump sits at t = 1/2 where the tube reaches |x| <= xm + delta
        assert!(hyp.bv_sum <= (1.0 + delta).powi(2) + 1e-9);
        assert!(hyp.bv_sum >= (xm + delta).powi(2) - 1e-9, "{} vs {}", hyp.bv_sum, (xm + delta).powi(2));
    }

    #[test]
    fn solver_recovers_step_solution() {
        let v = step_potential(0.1);
        let x = solve_variational(&v, 128, &SolveVarOptions::default()).unwrap();
        let err = x.grid.iter().zip(&x.values).map(|(t, y)| (y[0] - step_potential_solution(*t)).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn inflated_bound_still_certifies() {
        let mut v = step_potential(0.1);
        let x = solve_variational(&v, 128, &SolveVarOptions::default()).unwrap();
        let c = lipschitz_certificate(&v, &x, &CertificateOptions::default()).unwrap();
        assert!(c.verdict, "{c:?}");
        v.k_bv *= 10.0;
        let c10 = lipschitz_certificate(&v, &x, &CertificateOptions::default()).unwrap();
        assert!(c10.verdict);
        assert!(c10.chain_margin > c.chain_margin);
    }
}
