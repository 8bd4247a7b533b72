//! Problem data, arc defects, Filippov-type corrections and feasibility.

use crate::error::{Error, Result};
use crate::linalg::{add, dist, dot, norm, scale, sub};
use crate::multifun::{Arc, Interp, Multifunction};
use crate::setvalued::distance_to_set;
use std::sync::Arc as Shared;

const FD_STEP: f64 = 1e-6;

fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut y = x.to_vec();
    for i in 0..x.len() {
        let h = FD_STEP * x[i].abs().max(1.0);
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

type ScalarOracle = Shared<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradOracle = Shared<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Scalar function of the state with an optional gradient oracle.
#[derive(Clone)]
pub struct SmoothFn {
    f: ScalarOracle,
    grad: Option<GradOracle>,
}

impl SmoothFn {
    pub fn new(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Shared::new(f), grad: None }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Shared::new(g));
        self
    }

    /// `c . x + b`
    pub fn affine(c: Vec<f64>, b: f64) -> Self {
        let c2 = c.clone();
        Self::new(move |x| dot(&c, x) + b).with_gradient(move |_| c2.clone())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn has_gradient(&self) -> bool {
        self.grad.is_some()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.grad {
            Some(g) => g(x),
            None => fd_gradient(&|y| (self.f)(y), x),
        }
    }
}

type EndpointOracle = Shared<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type EndpointGrad = Shared<dyn Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync>;

/// `g(x0, x1)`
#[derive(Clone)]
pub struct EndpointCost {
    f: EndpointOracle,
    grad: Option<EndpointGrad>,
}

impl EndpointCost {
    pub fn new(f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Shared::new(f), grad: None }
    }

    pub fn with_gradient(
        mut self,
        g: impl Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync + 'static,
    ) -> Self {
        self.grad = Some(Shared::new(g));
        self
    }

    /// `c0 . x0 + c1 . x1`
    pub fn linear(c0: Vec<f64>, c1: Vec<f64>) -> Self {
        let (d0, d1) = (c0.clone(), c1.clone());
        Self::new(move |x0, x1| dot(&c0, x0) + dot(&c1, x1)).with_gradient(move |_, _| (d0.clone(), d1.clone()))
    }

    pub fn zero() -> Self {
        Self::new(|_, _| 0.0).with_gradient(|x0, x1| (vec![0.0; x0.len()], vec![0.0; x1.len()]))
    }

    pub fn value(&self, x0: &[f64], x1: &[f64]) -> f64 {
        (self.f)(x0, x1)
    }

    pub fn gradient(&self, x0: &[f64], x1: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match &self.grad {
            Some(g) => g(x0, x1),
            None => (
                fd_gradient(&|y| (self.f)(y, x1), x0),
                fd_gradient(&|y| (self.f)(x0, y), x1),
            ),
        }
    }
}

type IntegrandOracle = Shared<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;
type IntegrandGrad = Shared<dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Running cost `L(t, x, v)`.
#[derive(Clone)]
pub struct Integrand {
    f: IntegrandOracle,
    grad_x: Option<IntegrandGrad>,
    grad_v: Option<IntegrandGrad>,
    /// Declared zero: lets callers skip the nonlinear Hamiltonian search.
    pub is_zero: bool,
}

impl Integrand {
    pub fn new(f: impl Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Shared::new(f), grad_x: None, grad_v: None, is_zero: false }
    }

    pub fn zero() -> Self {
        let mut l = Self::new(|_, _, _| 0.0)
            .with_grad_x(|_, x, _| vec![0.0; x.len()])
            .with_grad_v(|_, _, v| vec![0.0; v.len()]);
        l.is_zero = true;
        l
    }

    pub fn with_grad_x(mut self, g: impl Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad_x = Some(Shared::new(g));
        self
    }

    pub fn with_grad_v(mut self, g: impl Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad_v = Some(Shared::new(g));
        self
    }

    pub fn value(&self, t: f64, x: &[f64], v: &[f64]) -> f64 {
        (self.f)(t, x, v)
    }

    pub fn grad_x(&self, t: f64, x: &[f64], v: &[f64]) -> Vec<f64> {
        match &self.grad_x {
            Some(g) => g(t, x, v),
            None => fd_gradient(&|y| (self.f)(t, y, v), x),
        }
    }

    pub fn grad_v(&self, t: f64, x: &[f64], v: &[f64]) -> Vec<f64> {
        match &self.grad_v {
            Some(g) => g(t, x, v),
            None => fd_gradient(&|w| (self.f)(t, x, w), v),
        }
    }

    /// Same integrand with time mapped through `tau` (used for left sampling).
    pub fn retimed(&self, tau: impl Fn(f64) -> f64 + Send + Sync + Clone + 'static) -> Self {
        let f = self.f.clone();
        let t1 = tau.clone();
        let mut out = Self::new(move |t, x, v| f(t1(t), x, v));
        if let Some(g) = self.grad_x.clone() {
            let t2 = tau.clone();
            out = out.with_grad_x(move |t, x, v| g(t2(t), x, v));
        }
        if let Some(g) = self.grad_v.clone() {
            out = out.with_grad_v(move |t, x, v| g(tau(t), x, v));
        }
        out.is_zero = self.is_zero;
        out
    }

    /// `self + other`
    pub fn plus(&self, other: &Integrand) -> Self {
        let (a, b) = (self.clone(), other.clone());
        let (a2, b2) = (self.clone(), other.clone());
        let (a3, b3) = (self.clone(), other.clone());
        let mut out = Self::new(move |t, x, v| a.value(t, x, v) + b.value(t, x, v))
            .with_grad_x(move |t, x, v| add(&a2.grad_x(t, x, v), &b2.grad_x(t, x, v)))
            .with_grad_v(move |t, x, v| add(&a3.grad_v(t, x, v), &b3.grad_v(t, x, v)));
        out.is_zero = self.is_zero && other.is_zero;
        out
    }

    /// `|x - xref(t)|^2`, independent of v.
    pub fn tracking(xref: Arc) -> Self {
        let r1 = Shared::new(xref);
        let r2 = r1.clone();
        Self::new(move |t, x, _| {
            let d = sub(x, &r1.eval(t));
            dot(&d, &d)
        })
        .with_grad_x(move |t, x, _| scale(&sub(x, &r2.eval(t)), 2.0))
        .with_grad_v(|_, _, v| vec![0.0; v.len()])
    }
}

/// `h(x) = max_i h_i(x)` with smooth branches.
#[derive(Clone)]
pub struct StateConstraint {
    pub branches: Vec<SmoothFn>,
    /// Lipschitz constant k_h on the tube.
    pub lip: f64,
}

impl StateConstraint {
    pub fn smooth(h: SmoothFn, lip: f64) -> Self {
        Self { branches: vec![h], lip }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.branches.iter().map(|b| b.value(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    fn active_index(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut bv = f64::NEG_INFINITY;
        for (i, b) in self.branches.iter().enumerate() {
            let v = b.value(x);
            if v > bv {
                bv = v;
                best = i;
            }
        }
        best
    }

    /// Gradient of the first maximal branch.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.branches[self.active_index(x)].gradient(x)
    }

    /// Gradients of all branches within `tol` of the max.
    pub fn active_gradients(&self, x: &[f64], tol: f64) -> Vec<Vec<f64>> {
        let h = self.value(x);
        self.branches
            .iter()
            .filter(|b| b.value(x) >= h - tol)
            .map(|b| b.gradient(x))
            .collect()
    }

    /// `h - beta`
    pub fn shifted(&self, beta: f64) -> Self {
        Self {
            branches: self
                .branches
                .iter()
                .map(|b| {
                    let (f, g) = (b.clone(), b.clone());
                    SmoothFn::new(move |x| f.value(x) - beta).with_gradient(move |x| g.gradient(x))
                })
                .collect(),
            lip: self.lip,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EndpointShape {
    Free,
    Point(Vec<f64>),
    Ball { center: Vec<f64>, radius: f64 },
}

impl EndpointShape {
    fn residual(&self, x: &[f64]) -> f64 {
        match self {
            EndpointShape::Free => 0.0,
            EndpointShape::Point(c) => dist(x, c),
            EndpointShape::Ball { center, radius } => (dist(x, center) - radius).max(0.0),
        }
    }

    /// Distance of `zeta` to the normal cone at `x`.
    fn normal_residual(&self, x: &[f64], zeta: &[f64]) -> f64 {
        match self {
            EndpointShape::Free => norm(zeta),
            EndpointShape::Point(_) => 0.0,
            EndpointShape::Ball { center, radius } => {
                let d = sub(x, center);
                let nd = norm(&d);
                if *radius <= 1e-12 && nd <= 1e-9 {
                    return 0.0;
                }
                if nd < radius - 1e-9 || nd == 0.0 {
                    return norm(zeta);
                }
                let u = scale(&d, 1.0 / nd);
                let s = dot(zeta, &u).max(0.0);
                dist(zeta, &scale(&u, s))
            }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.residual(x) <= tol
    }
}

/// Endpoint constraint `C` as a product of per-endpoint shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointSet {
    pub initial: EndpointShape,
    pub terminal: EndpointShape,
}

impl EndpointSet {
    pub fn fixed_initial(x0: Vec<f64>) -> Self {
        Self { initial: EndpointShape::Point(x0), terminal: EndpointShape::Free }
    }

    pub fn fixed_both(x0: Vec<f64>, x1: Vec<f64>) -> Self {
        Self { initial: EndpointShape::Point(x0), terminal: EndpointShape::Point(x1) }
    }

    pub fn residual(&self, x0: &[f64], x1: &[f64]) -> f64 {
        self.initial.residual(x0).max(self.terminal.residual(x1))
    }

    /// Distance of `(zeta0, zeta1)` to the normal cone of C at `(x0, x1)`.
    pub fn normal_cone_residual(&self, x0: &[f64], x1: &[f64], zeta0: &[f64], zeta1: &[f64]) -> f64 {
        let a = self.initial.normal_residual(x0, zeta0);
        let b = self.terminal.normal_residual(x1, zeta1);
        (a * a + b * b).sqrt()
    }

    /// Terminal constraint enlarged by `sqrt(2) alpha`; a fixed initial
    /// point stays pinned.
    pub fn enlarged(&self, alpha: f64) -> Self {
        let r = std::f64::consts::SQRT_2 * alpha;
        let terminal = match &self.terminal {
            EndpointShape::Free => EndpointShape::Free,
            EndpointShape::Point(c) => EndpointShape::Ball { center: c.clone(), radius: r },
            EndpointShape::Ball { center, radius } => EndpointShape::Ball { center: center.clone(), radius: radius + r },
        };
        Self { initial: self.initial.clone(), terminal }
    }
}

/// `minimize g(x(S),x(T)) + int L` over F-trajectories with `h(x) <= 0`
/// and endpoints in C. The reference minimizer and tube come from `f`.
#[derive(Clone)]
pub struct Problem {
    pub f: Multifunction,
    pub l: Option<Integrand>,
    pub g: EndpointCost,
    pub h: Option<StateConstraint>,
    pub endpoints: EndpointSet,
}

impl Problem {
    pub fn new(f: Multifunction, g: EndpointCost, endpoints: EndpointSet) -> Self {
        Self { f, l: None, g, h: None, endpoints }
    }

    pub fn with_integrand(mut self, l: Integrand) -> Self {
        self.l = Some(l);
        self
    }

    pub fn with_constraint(mut self, h: StateConstraint) -> Self {
        self.h = Some(h);
        self
    }

    pub fn integrand(&self) -> Integrand {
        self.l.clone().unwrap_or_else(Integrand::zero)
    }

    pub fn reference(&self) -> Result<Arc> {
        self.f
            .locality
            .as_ref()
            .map(|l| (*l.reference).clone())
            .ok_or_else(|| Error::ProblemShape("multifunction has no reference arc".into()))
    }

    /// Cost of a piecewise-linear arc, midpoint quadrature for L.
    pub fn cost(&self, x: &Arc) -> f64 {
        let mut c = self.g.value(&x.values[0], x.values.last().unwrap());
        if let Some(l) = &self.l {
            for k in 0..x.cells() {
                let (a, b) = (x.grid[k], x.grid[k + 1]);
                let m = 0.5 * (a + b);
                c += (b - a) * l.value(m, &x.eval(m), &x.derivative(k));
            }
        }
        c
    }
}

/// `int d_{F(t,x(t))}(x'(t)) dt` by midpoint quadrature.
pub fn defect(f: &Multifunction, x: &Arc) -> Result<f64> {
    Ok(cell_defects(f, x, true)?.iter().zip(x.grid.windows(2)).map(|(d, w)| d * (w[1] - w[0])).sum())
}

fn cell_defects(f: &Multifunction, x: &Arc, checked: bool) -> Result<Vec<f64>> {
    if x.interp != Interp::Linear {
        return Err(Error::InvalidInput("defect needs a piecewise-linear arc".into()));
    }
    (0..x.cells())
        .map(|k| {
            let m = 0.5 * (x.grid[k] + x.grid[k + 1]);
            let xm = x.eval(m);
            let set = if checked { f.eval(m, &xm, None)? } else { f.eval_unchecked(m, &xm, None) };
            distance_to_set(&x.derivative(k), &set)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FilippovResult {
    pub z: Arc,
    /// Gronwall constant `exp(k (T - S))`.
    pub k_f: f64,
    pub defect: f64,
    /// `K_F (|x0 - x(S)| + defect)`
    pub bound: f64,
}

/// F-trajectory from `x0` tracking `x`: on each cell the velocity is the
/// projection of `x'` onto F at the cell midpoint, solved as a fixed point.
pub fn filippov_approximate(f: &Multifunction, x: &Arc, x0: &[f64]) -> Result<FilippovResult> {
    let dx = defect(f, x)?;
    let (s, e) = (x.start(), x.end());
    f.check_tube(s, x0).map_err(|_| Error::TubeExit { t: s })?;
    let mut z = vec![x0.to_vec()];
    for k in 0..x.cells() {
        let (a, b) = (x.grid[k], x.grid[k + 1]);
        let h = b - a;
        let m = 0.5 * (a + b);
        let target = x.derivative(k);
        let zk = z[k].clone();
        let mut w = target.clone();
        for _ in 0..100 {
            let zm: Vec<f64> = zk.iter().zip(&w).map(|(p, v)| p + 0.5 * h * v).collect();
            f.check_tube(m, &zm).map_err(|_| Error::TubeExit { t: m })?;
            let nw = f.eval_unchecked(m, &zm, None).project(&target)?;
            let change = dist(&nw, &w);
            w = nw;
            if change <= 1e-15 * (1.0 + norm(&w)) {
                break;
            }
        }
        let next: Vec<f64> = zk.iter().zip(&w).map(|(p, v)| p + h * v).collect();
        f.check_tube(b, &next).map_err(|_| Error::TubeExit { t: b })?;
        z.push(next);
    }
    let k_f = (f.lip_x * (e - s)).exp();
    let bound = k_f * (dist(x0, &x.values[0]) + dx);
    Ok(FilippovResult {
        z: Arc { grid: x.grid.clone(), values: z, interp: Interp::Linear },
        k_f,
        defect: dx,
        bound,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeasibilityReport {
    /// max of h over knots and cell midpoints (None without a constraint).
    pub max_h: Option<f64>,
    pub endpoint_residual: f64,
    pub max_defect: f64,
    pub feasible: bool,
}

pub const FEAS_TOL: f64 = 1e-7;

pub fn feasibility_report(p: &Problem, x: &Arc, feas_tol: f64) -> Result<FeasibilityReport> {
    let max_h = p.h.as_ref().map(|h| {
        let mut m = f64::NEG_INFINITY;
        for k in 0..x.cells() {
            let mid = 0.5 * (x.grid[k] + x.grid[k + 1]);
            m = m.max(h.value(&x.values[k])).max(h.value(&x.eval(mid)));
        }
        m.max(h.value(x.values.last().unwrap()))
    });
    let endpoint_residual = p.endpoints.residual(&x.values[0], x.values.last().unwrap());
    let max_defect = cell_defects(&p.f, x, false)?.into_iter().fold(0.0, f64::max);
    let feasible = max_h.map_or(true, |m| m <= feas_tol) && endpoint_residual <= feas_tol && max_defect <= feas_tol;
    Ok(FeasibilityReport { max_h, endpoint_residual, max_defect, feasible })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multifun::ScalarFn;
    use crate::setvalued::CompactSet;

    fn unit_interval() -> Multifunction {
        Multifunction::interval(ScalarFn::constant(-1.0), ScalarFn::constant(1.0), (0.0, 1.0))
    }

    #[test]
    fn defect_of_exact_trajectory_is_zero() {
        let x = Arc::sample(0.0, 1.0, 10, Interp::Linear, |t| vec![0.5 * t]);
        assert_eq!(defect(&unit_interval(), &x).unwrap(), 0.0);
    }

    #[test]
    fn defect_against_zero_map() {
        let f = Multifunction::single_valued((0.0, 1.0), |_| vec![0.0]);
        let x = Arc::sample(0.0, 1.0, 4, Interp::Linear, |t| vec![t]);
        assert!((defect(&f, &x).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn defect_against_left_sampled_ramp() {
        let n = 8;
        let h = 1.0 / n as f64;
        let f = Multifunction::single_valued((0.0, 1.0), move |t| {
            let j = ((t / h).floor() as usize).min(n - 1);
            vec![j as f64 * h]
        });
        let x = Arc::sample(0.0, 1.0, n, Interp::Linear, |t| vec![0.5 * t * t]);
        assert!((defect(&f, &x).unwrap() - 0.5 / n as f64).abs() < 1e-14);
    }

    #[test]
    fn filippov_projects_onto_interval() {
        let x = Arc::sample(0.0, 1.0, 5, Interp::Linear, |t| vec![2.0 * t]);
        let r = filippov_approximate(&unit_interval(), &x, &[0.0]).unwrap();
        for (t, z) in r.z.grid.iter().zip(&r.z.values) {
            assert!((z[0] - t).abs() < 1e-15);
        }
        assert!((r.z.sup_dist(&x) - 1.0).abs() < 1e-15);
        assert!(r.z.sup_dist(&x) <= r.bound + 1e-12);
    }

    #[test]
    fn filippov_keeps_trajectory() {
        let x = Arc::sample(0.0, 1.0, 7, Interp::Linear, |t| vec![-0.3 * t]);
        let r = filippov_approximate(&unit_interval(), &x, &[0.0]).unwrap();
        assert!(r.z.sup_dist(&x) < 1e-15);
    }

    #[test]
    fn filippov_on_step() {
        let f = Multifunction::single_valued((0.0, 1.0), |t| vec![if t < 0.5 { 0.0 } else { 1.0 }]);
        let x = Arc::sample(0.0, 1.0, 4, Interp::Linear, |_| vec![0.0]);
        let r = filippov_approximate(&f, &x, &[0.0]).unwrap();
        assert!((r.defect - 0.5).abs() < 1e-15);
        assert!((r.z.sup_dist(&x) - 0.5).abs() < 1e-15);
        assert!(r.z.sup_dist(&x) <= r.bound);
    }

    #[test]
    fn filippov_tube_exit() {
        let f = Multifunction::from_fn(1, (0.0, 1.0), |_, _, _| CompactSet::point(vec![1.0]))
            .with_locality(0.2, Arc::constant(0.0, 1.0, vec![0.0]));
        let x = Arc::sample(0.0, 1.0, 10, Interp::Linear, |_| vec![0.0]);
        assert!(matches!(filippov_approximate(&f, &x, &[0.0]), Err(Error::TubeExit { .. })));
    }

    #[test]
    fn feasibility_examples() {
        let p = Problem::new(unit_interval(), EndpointCost::zero(), EndpointSet::fixed_both(vec![0.2], vec![0.2]))
            .with_constraint(StateConstraint::smooth(SmoothFn::affine(vec![1.0], -1.0), 1.0));
        let x = Arc::constant(0.0, 1.0, vec![0.2]);
        let r = feasibility_report(&p, &x, FEAS_TOL).unwrap();
        assert!(r.feasible);
        assert_eq!(r.endpoint_residual, 0.0);
        assert_eq!(r.max_defect, 0.0);
        let bump = Arc::new(vec![0.0, 0.5, 1.0], vec![vec![0.2], vec![1.3], vec![0.2]], Interp::Linear).unwrap();
        let p2 = Problem { f: Multifunction::interval(ScalarFn::constant(-5.0), ScalarFn::constant(5.0), (0.0, 1.0)), ..p };
        let r = feasibility_report(&p2, &bump, FEAS_TOL).unwrap();
        assert!(!r.feasible);
        assert!((r.max_h.unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn normal_cones() {
        let c = EndpointSet { initial: EndpointShape::Point(vec![0.0]), terminal: EndpointShape::Ball { center: vec![1.0], radius: 0.5 } };
        assert_eq!(c.normal_cone_residual(&[0.0], &[1.5], &[7.0], &[2.0]), 0.0);
        assert_eq!(c.normal_cone_residual(&[0.0], &[1.5], &[7.0], &[-2.0]), 2.0);
        assert_eq!(c.normal_cone_residual(&[0.0], &[1.2], &[0.0], &[3.0]), 3.0);
        let e = EndpointSet::fixed_both(vec![0.0], vec![1.0]).enlarged(0.1);
        assert_eq!(e.initial, EndpointShape::Point(vec![0.0]));
        assert!(matches!(e.terminal, EndpointShape::Ball { radius, .. } if (radius - 0.1 * 2f64.sqrt()).abs() < 1e-15));
    }
}
