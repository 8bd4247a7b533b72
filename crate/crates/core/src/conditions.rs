//! Residual checks of the necessary conditions, the nondegeneracy test for
//! boundary-start problems and the degenerate multiplier.

use crate::error::{Error, Result};
use crate::hamiltonian::{eval_h_unchecked, grad_x_h, h_face, CostatePath};
use crate::linalg::{dist, dot, min_norm_point, scale, sub};
use crate::multifun::{one_sided_limit_best_effort, Arc, Interp, LimitOptions, Side};
use crate::trajectory::{EndpointShape, Problem};
use crate::transcription::{Atom, MultiplierSet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionTolerances {
    /// (i) passes when the norm exceeds this.
    pub nontriviality: f64,
    pub adjoint: f64,
    pub weierstrass: f64,
    pub transversality: f64,
    pub support: f64,
    /// Tolerance defining the support face of H in p.
    pub face: f64,
}

impl ConditionTolerances {
    pub const fn analytic() -> Self {
        Self { nontriviality: 1e-8, adjoint: 1e-10, weierstrass: 1e-10, transversality: 1e-10, support: 1e-10, face: 1e-9 }
    }

    /// For multipliers extracted from discrete solutions.
    pub const fn solver() -> Self {
        Self { nontriviality: 1e-8, adjoint: 1e-2, weierstrass: 1e-2, transversality: 1e-2, support: 1e-2, face: 1e-6 }
    }
}

impl Default for ConditionTolerances {
    fn default() -> Self {
        Self::solver()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub nontriviality: bool,
    pub adjoint: bool,
    pub weierstrass: bool,
    pub transversality: bool,
    pub support: bool,
    pub measure_support: bool,
}

/// Residuals are divided by `|p|_inf + lambda + |mu|` (when nonzero), so the
/// verdicts do not depend on the scaling of the multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub nontriviality: f64,
    pub adjoint: f64,
    pub adjoint_worst_t: f64,
    pub weierstrass: f64,
    pub weierstrass_worst_t: f64,
    pub transversality: f64,
    pub support: f64,
    pub measure_support: f64,
    pub tolerances: ConditionTolerances,
    pub verdicts: Verdicts,
}

impl ConditionReport {
    /// Conditions (i)-(iii).
    pub fn pass_first_three(&self) -> bool {
        self.verdicts.nontriviality && self.verdicts.adjoint && self.verdicts.weierstrass
    }

    pub fn pass(&self) -> bool {
        let v = &self.verdicts;
        self.pass_first_three() && v.transversality && v.support && v.measure_support
    }
}

fn same_grid(xbar: &Arc, m: &MultiplierSet) -> Result<()> {
    if xbar.grid.len() != m.p.grid.len() || xbar.grid.iter().zip(&m.p.grid).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::InvalidInput("arc and multipliers must share a grid".into()));
    }
    if xbar.dim() != m.p.dim() {
        return Err(Error::DimensionMismatch { expected: xbar.dim(), got: m.p.dim() });
    }
    Ok(())
}

fn integrand(p: &Problem) -> Option<&crate::trajectory::Integrand> {
    p.l.as_ref().filter(|l| !l.is_zero)
}

/// Velocity `(x_{k+1} - x_k) / (t_{k+1} - t_k)` on cell k.
fn slope(a: &Arc, k: usize) -> Vec<f64> {
    let h = a.grid[k + 1] - a.grid[k];
    scale(&sub(&a.values[k + 1], &a.values[k]), 1.0 / h)
}

/// Conditions (i)-(v) evaluated on the grid shared by `xbar` and `m`.
pub fn check_theorem1(p: &Problem, xbar: &Arc, m: &MultiplierSet, tol: &ConditionTolerances) -> Result<ConditionReport> {
    same_grid(xbar, m)?;
    let n = xbar.dim();
    let l = integrand(p);
    let value = m.scale_norm();
    let sc = if value > 0.0 { value } else { 1.0 };
    let cells = xbar.cells();
    let (s0, s1) = (xbar.start(), xbar.end());

    // (ii) and (iii) per cell midpoint
    let per_cell: Vec<Result<(f64, f64)>> = (0..cells)
        .into_par_iter()
        .map(|k| {
            let (t0, t1) = (xbar.grid[k], xbar.grid[k + 1]);
            let h = t1 - t0;
            let tm = 0.5 * (t0 + t1);
            let xm = xbar.eval(tm);
            let qm = m.q_at(tm);
            let v = slope(xbar, k);
            let pdot = slope(&m.p, k);

            // neighbouring times and the cell's knot states, so that one-sided
            // discretizations of the inclusion land inside the hull
            let mut pts: Vec<Vec<f64>> = Vec::new();
            for xs in [&xm, &xbar.values[k], &xbar.values[k + 1]] {
                for off in [0.0, -h, h, -2.0 * h, 2.0 * h] {
                    let s = (tm + off).clamp(s0, s1);
                    let g = grad_x_h(&p.f, l, m.lambda, s, xs, &qm)?;
                    for w in h_face(&p.f, l, m.lambda, s, xs, &qm, tol.face)? {
                        let mut pt: Vec<f64> = g.iter().map(|gi| gi / sc).collect();
                        pt.extend_from_slice(&w);
                        pts.push(pt);
                    }
                }
            }
            let mut target: Vec<f64> = pdot.iter().map(|d| -d / sc).collect();
            target.extend_from_slice(&v);
            let shifted: Vec<Vec<f64>> = pts.iter().map(|q| sub(q, &target)).collect();
            let (z, _) = min_norm_point(&shifted);
            let adj = crate::linalg::norm(&z);

            let (hmax, _) = eval_h_unchecked(&p.f, l, m.lambda, tm, &xm, &qm)?;
            let lv = l.map_or(0.0, |l| l.value(tm, &xm, &v));
            let w = (hmax - (dot(&qm, &v) - m.lambda * lv)).max(0.0) / sc;
            Ok((adj, w))
        })
        .collect();
    let per_cell: Vec<(f64, f64)> = per_cell.into_iter().collect::<Result<_>>()?;
    let mid = |k: usize| 0.5 * (xbar.grid[k] + xbar.grid[k + 1]);
    let (mut adjoint, mut adjoint_worst_t, mut weierstrass, mut weierstrass_worst_t) = (0.0, s0, 0.0, s0);
    for (k, &(a, w)) in per_cell.iter().enumerate() {
        if a > adjoint {
            adjoint = a;
            adjoint_worst_t = mid(k);
        }
        if w > weierstrass {
            weierstrass = w;
            weierstrass_worst_t = mid(k);
        }
    }
    let _ = n;

    // (iv)
    let x0 = xbar.eval(s0);
    let x1 = xbar.eval(s1);
    let (g0, g1) = p.g.gradient(&x0, &x1);
    let z0 = sub(&m.p_at(s0), &scale(&g0, m.lambda));
    let z1: Vec<f64> = m.q_at(s1).iter().zip(&g1).map(|(q, g)| -q - m.lambda * g).collect();
    let transversality = p.endpoints.normal_cone_residual(&x0, &x1, &z0, &z1) / sc;

    // (v)
    let (mut support, mut measure_support) = (0.0_f64, 0.0_f64);
    let charged: Vec<&Atom> = m.atoms.iter().filter(|a| a.mass > 0.0).collect();
    if !charged.is_empty() {
        let h = p.h.as_ref().ok_or_else(|| Error::ProblemShape("measure without a state constraint".into()))?;
        for a in charged {
            let x = xbar.eval(a.t);
            let active = h.active_gradients(&x, 1e-8);
            let shifted: Vec<Vec<f64>> = active.iter().map(|g| sub(g, &a.gamma)).collect();
            let (z, _) = min_norm_point(&shifted);
            support = support.max(crate::linalg::norm(&z));
            measure_support = measure_support.max((-h.value(&x)).max(0.0));
        }
    }

    let verdicts = Verdicts {
        nontriviality: value > tol.nontriviality,
        adjoint: adjoint <= tol.adjoint,
        weierstrass: weierstrass <= tol.weierstrass,
        transversality: transversality <= tol.transversality,
        support: support <= tol.support,
        measure_support: measure_support <= tol.support,
    };
    Ok(ConditionReport {
        nontriviality: value,
        adjoint,
        adjoint_worst_t,
        weierstrass,
        weierstrass_worst_t,
        transversality,
        support,
        measure_support,
        tolerances: *tol,
        verdicts,
    })
}

pub const ND_TOL: f64 = 1e-8;
pub const IP_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    /// `lambda + mu((S, T])`
    pub value: f64,
    /// `value / (|p|_inf + lambda + |mu|)`
    pub normalized_value: f64,
    pub nondegenerate: bool,
    /// `min grad h(x0) . v` over the right limit of `F(., x0)` at S.
    pub inward_margin: f64,
    pub inward_pointing: bool,
}

fn boundary_start_shape(p: &Problem) -> Result<(&crate::trajectory::StateConstraint, Vec<f64>)> {
    let x0 = match &p.endpoints.initial {
        EndpointShape::Point(c) => c.clone(),
        _ => return Err(Error::ProblemShape("fixed initial state required".into())),
    };
    if integrand(p).is_some() {
        return Err(Error::ProblemShape("endpoint cost only, no running cost".into()));
    }
    if !matches!(p.endpoints.terminal, EndpointShape::Free) {
        return Err(Error::ProblemShape("free terminal state required".into()));
    }
    let h = p.h.as_ref().ok_or_else(|| Error::ProblemShape("state constraint required".into()))?;
    Ok((h, x0))
}

pub fn check_nondegeneracy(p: &Problem, xbar: &Arc, m: &MultiplierSet) -> Result<NondegeneracyReport> {
    same_grid(xbar, m)?;
    let (h, x0) = boundary_start_shape(p)?;
    let value = m.lambda + m.mu_after_start();
    let sc = m.scale_norm();
    let normalized_value = if sc > 0.0 { value / sc } else { 0.0 };
    let g = h.gradient(&x0);
    let right = one_sided_limit_best_effort(&p.f, p.f.horizon.0, Side::Right, &x0, None, &LimitOptions::default())?;
    let inward_margin = right.points.iter().map(|v| dot(&g, v)).fold(f64::INFINITY, f64::min);
    Ok(NondegeneracyReport {
        value,
        normalized_value,
        nondegenerate: normalized_value > ND_TOL,
        inward_margin,
        inward_pointing: inward_margin < -IP_MARGIN,
    })
}

/// r per cell from the Hamiltonian at cell midpoints (ConstantLeft).
pub fn attach_trace(p: &Problem, xbar: &Arc, m: &mut MultiplierSet) -> Result<()> {
    same_grid(xbar, m)?;
    let l = integrand(p);
    let cells = xbar.cells();
    let mut r = Vec::with_capacity(cells + 1);
    for k in 0..cells {
        let tm = 0.5 * (xbar.grid[k] + xbar.grid[k + 1]);
        r.push(vec![eval_h_unchecked(&p.f, l, m.lambda, tm, &xbar.eval(tm), &m.q_at(tm))?.0]);
    }
    r.push(r[cells - 1].clone());
    m.r = Arc { grid: xbar.grid.clone(), values: r, interp: Interp::ConstantLeft };
    Ok(())
}

/// Multipliers given `p` on the arc grid, `lambda` and atoms; r attached.
pub fn assemble(p: &Problem, xbar: &Arc, pvals: Vec<Vec<f64>>, lambda: f64, atoms: Vec<Atom>) -> Result<MultiplierSet> {
    let mut m = MultiplierSet {
        p: Arc::new(xbar.grid.clone(), pvals, Interp::Linear)?,
        lambda,
        atoms,
        r: Arc { grid: xbar.grid.clone(), values: vec![], interp: Interp::ConstantLeft },
        normalization_residual: 0.0,
        kkt_residual: 0.0,
        stage: None,
    };
    attach_trace(p, xbar, &mut m)?;
    m.normalization_residual = (m.scale_norm() - 1.0).abs();
    Ok(m)
}

/// `p = -grad h(x(S))`, `lambda = 0`, a unit atom at S: satisfies (i)-(iii)
/// along every feasible arc that starts on the constraint boundary.
pub fn trivial_multiplier(p: &Problem, xbar: &Arc) -> Result<MultiplierSet> {
    let h = p.h.as_ref().ok_or_else(|| Error::ProblemShape("state constraint required".into()))?;
    let x0 = xbar.eval(xbar.start());
    let h0 = h.value(&x0);
    if h0.abs() > 1e-12 {
        return Err(Error::NotBoundaryStart { h0 });
    }
    let g = h.gradient(&x0);
    let pv = vec![scale(&g, -1.0); xbar.grid.len()];
    let atom = Atom { t: xbar.start(), mass: 1.0, gamma: g };
    assemble(p, xbar, pv, 0.0, vec![atom])
}

/// Largest distance between an atom's gradient vector and `grad h` along
/// `xbar`; zero without atoms.
pub fn gamma_gap(p: &Problem, xbar: &Arc, m: &MultiplierSet) -> f64 {
    match &p.h {
        None => 0.0,
        Some(h) => m.atoms.iter().map(|a| dist(&a.gamma, &h.gradient(&xbar.eval(a.t)))).fold(0.0, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multifun::{Multifunction, ScalarFn};
    use crate::trajectory::{EndpointCost, EndpointSet};
    use crate::transcription::{affine_constraint, run_pipeline, PenaltySchedule, PipelineOptions};

    fn linear(n: usize) -> (Problem, Arc) {
        let xbar = Arc::sample(0.0, 1.0, n, Interp::Linear, |t| vec![t]);
        let f = Multifunction::interval(ScalarFn::constant(-1.0), ScalarFn::constant(1.0), (0.0, 1.0))
            .with_locality(0.5, xbar.clone());
        (Problem::new(f, EndpointCost::linear(vec![0.0], vec![-1.0]), EndpointSet::fixed_initial(vec![0.0])), xbar)
    }

    fn boundary_start(n: usize) -> (Problem, Arc) {
        let (p, xbar) = linear(n);
        (p.with_constraint(affine_constraint(&[(vec![-1.0], 0.0)], 1.0)), xbar)
    }

    #[test]
    fn hand_adjoint_passes_exactly() {
        let (p, xbar) = linear(16);
        let m = assemble(&p, &xbar, vec![vec![1.0]; 17], 1.0, vec![]).unwrap().normalized();
        let rep = check_theorem1(&p, &xbar, &m, &ConditionTolerances::analytic()).unwrap();
        assert!(rep.pass(), "{rep:?}");
        assert_eq!(rep.weierstrass, 0.0);
    }

    #[test]
    fn zero_multipliers_fail_nontriviality() {
        let (p, xbar) = linear(8);
        let m = assemble(&p, &xbar, vec![vec![0.0]; 9], 0.0, vec![]).unwrap();
        let rep = check_theorem1(&p, &xbar, &m, &ConditionTolerances::analytic()).unwrap();
        assert_eq!(rep.nontriviality, 0.0);
        assert!(!rep.verdicts.nontriviality);
    }

    #[test]
    fn wrong_sign_costate_fails_weierstrass() {
        let (p, xbar) = linear(8);
        let m = assemble(&p, &xbar, vec![vec![-1.0]; 9], 1.0, vec![]).unwrap();
        let rep = check_theorem1(&p, &xbar, &m, &ConditionTolerances::analytic()).unwrap();
        assert!(!rep.verdicts.weierstrass);
        assert!(!rep.verdicts.transversality);
    }

    #[test]
    fn trivial_triple_passes_first_three_and_is_degenerate() {
        let (p, xbar) = boundary_start(16);
        let m = trivial_multiplier(&p, &xbar).unwrap();
        assert_eq!(m.p.values[0], vec![1.0]);
        assert_eq!(m.q_at(0.5), vec![0.0]);
        let rep = check_theorem1(&p, &xbar, &m, &ConditionTolerances::analytic()).unwrap();
        assert!(rep.pass_first_three(), "{rep:?}");
        let nd = check_nondegeneracy(&p, &xbar, &m).unwrap();
        assert_eq!(nd.value, 0.0);
        assert!(!nd.nondegenerate);
        assert!(nd.inward_pointing);
    }

    #[test]
    fn trivial_multiplier_needs_boundary_start() {
        let (p, xbar) = linear(8);
        let p = p.with_constraint(affine_constraint(&[(vec![-1.0], -0.5)], 1.0));
        assert!(matches!(trivial_multiplier(&p, &xbar), Err(Error::NotBoundaryStart { .. })));
    }

    #[test]
    fn nondegeneracy_needs_problem_shape() {
        let (p, xbar) = linear(8);
        let m = assemble(&p, &xbar, vec![vec![1.0]; 9], 1.0, vec![]).unwrap();
        assert!(matches!(check_nondegeneracy(&p, &xbar, &m), Err(Error::ProblemShape(_))));
    }

    #[test]
    fn positive_lambda_is_nondegenerate() {
        let (p, xbar) = boundary_start(8);
        let m = assemble(&p, &xbar, vec![vec![1.0]; 9], 0.5, vec![]).unwrap();
        assert!(check_nondegeneracy(&p, &xbar, &m).unwrap().nondegenerate);
    }

    #[test]
    fn verdicts_invariant_under_scaling() {
        let (p, _) = boundary_start(16);
        let sched = PenaltySchedule { cells: vec![16], weights: vec![160.0], beta: None };
        let run = &run_pipeline(&p, &sched, &PipelineOptions::default()).unwrap()[0];
        let view = run.stage.view_problem();
        let tol = ConditionTolerances::solver();
        let cases = [
            run.multipliers.clone(),
            trivial_multiplier(&view, &run.solution.x).unwrap_or_else(|_| run.multipliers.clone()),
            assemble(&view, &run.solution.x, vec![vec![-1.0]; 17], 1.0, vec![]).unwrap(),
        ];
        for m in &cases {
            let base = check_theorem1(&view, &run.solution.x, m, &tol).unwrap();
            for theta in [0.1, 10.0] {
                let r = check_theorem1(&view, &run.solution.x, &m.scaled(theta), &tol).unwrap();
                assert_eq!(r.verdicts, base.verdicts);
                assert!((r.weierstrass - base.weierstrass).abs() <= 1e-9 * (1.0 + base.weierstrass));
            }
        }
    }

    #[test]
    fn pipeline_multipliers_pass_on_boundary_start() {
        let (p, _) = boundary_start(32);
        let sched = PenaltySchedule { cells: vec![32], weights: vec![320.0], beta: None };
        let run = &run_pipeline(&p, &sched, &PipelineOptions::default()).unwrap()[0];
        let view = run.stage.view_problem();
        let rep = check_theorem1(&view, &run.solution.x, &run.multipliers, &ConditionTolerances::solver()).unwrap();
        assert!(rep.pass(), "{rep:?}");
        let nd = check_nondegeneracy(&p, &run.solution.x, &run.multipliers).unwrap();
        assert!(nd.inward_pointing);
        assert!(nd.value >= 1e-3);
    }
}
