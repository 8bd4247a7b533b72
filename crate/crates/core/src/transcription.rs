//! Multistage penalized approximations: left-sampled velocity sets, the
//! penalized discrete problems, their solution by dynamic programming plus
//! local refinement, and discrete multipliers.

use crate::error::{Error, Result};
use crate::hamiltonian::{eval_h_set, golden_max, grad_x_h, CostatePath};
use crate::linalg::{add, dist, dot, lex_cmp, norm, scale, sub};
use crate::multifun::{ball_samples, uniform_grid, Arc, Interp, Multifunction};
use crate::setvalued::{distance_to_set, hausdorff_distance, CompactSet};
use crate::trajectory::{
    feasibility_report, filippov_approximate, EndpointSet, EndpointShape, FeasibilityReport, Integrand,
    Problem, StateConstraint, FEAS_TOL,
};
use crate::variation::{cell_term, VariationOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Velocity-inclusion tolerance for discrete transitions.
const VEL_TOL: f64 = 1e-11;
/// Half-width of the band where the penalty kink is considered active.
const KINK_BAND: f64 = 1e-8;
/// Smallest relative objective decrease accepted by a refinement move;
/// below it a move could only exploit the velocity tolerance.
const REFINE_GAIN: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule {
    pub cells: Vec<usize>,
    pub weights: Vec<f64>,
    /// Explicit relaxations; default `2 k_h alpha_i + 1/N_i`.
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
}

impl PenaltySchedule {
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::InvalidInput("penalty schedule is empty".into()));
        }
        if self.weights.len() != self.cells.len() {
            return Err(Error::InvalidInput("schedule needs one weight per cell count".into()));
        }
        if self.cells.iter().any(|&n| n < 2) {
            return Err(Error::InvalidInput("cell counts must be at least 2".into()));
        }
        if self.weights.iter().any(|&k| !(k > 0.0)) || self.weights.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("penalty weights must be positive and nondecreasing".into()));
        }
        if let Some(b) = &self.beta {
            if b.len() != self.cells.len() {
                return Err(Error::InvalidInput("schedule needs one beta per cell count".into()));
            }
            if b.iter().any(|&v| !(v > 0.0)) || b.windows(2).any(|w| w[1] > w[0]) {
                return Err(Error::InvalidInput("beta must be positive and nonincreasing".into()));
            }
        }
        Ok(())
    }
}

/// `F_j(x) = F(t_j, x)` on `[t_j, t_{j+1})`, the last cell closed.
#[derive(Debug, Clone)]
pub struct StageSets {
    pub grid: Vec<f64>,
    pub f: Multifunction,
}

impl StageSets {
    pub fn cells(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn step(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// Sampling time of cell j (clamped to the last cell).
    pub fn stage_time(&self, j: usize) -> f64 {
        self.grid[j.min(self.cells() - 1)]
    }

    pub fn set(&self, j: usize, x: &[f64]) -> CompactSet {
        self.f.eval_unchecked(self.stage_time(j), x, None)
    }

    fn cell_of(&self, t: f64) -> usize {
        let n = self.cells();
        if t >= self.grid[n - 1] {
            return n - 1;
        }
        self.grid.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// The left-sampled map as a multifunction (same tube and constants).
    pub fn multifunction(&self) -> Multifunction {
        let inner = self.f.clone();
        let grid = self.grid.clone();
        let me = self.clone();
        let _ = grid;
        self.f.with_oracle(move |t, x, a| inner.eval_unchecked(me.stage_time(me.cell_of(t)), x, a))
    }
}

pub fn left_sample(f: &Multifunction, n: usize) -> Result<StageSets> {
    if n < 2 {
        return Err(Error::InvalidInput("left sampling needs at least 2 cells".into()));
    }
    let (s, e) = f.horizon;
    Ok(StageSets { grid: uniform_grid(s, e, n), f: f.clone() })
}

/// Penalized discrete problem on a stage grid:
///
/// `J = G(x_0, x_N) + h sum_{j<N} [L_j(x_j,v_j) + |x_j - xref(t_j)|^2 + K (h(x_j) - beta)^+]`
///
/// with `x_{j+1} = x_j + h v_j`, `v_j in F_j(x_j)`, `|x_j - xref(t_j)| <= tube`
/// and endpoints in the enlarged endpoint set.
#[derive(Clone)]
pub struct StageProblem {
    pub sets: StageSets,
    pub problem: Problem,
    pub xref: Arc,
    pub k_pen: f64,
    pub beta: f64,
    pub alpha: f64,
    pub endpoints: EndpointSet,
    pub tube: f64,
}

impl StageProblem {
    pub fn new(problem: &Problem, sets: StageSets, k_pen: f64, beta: f64, alpha: f64) -> Result<Self> {
        let xref = problem.reference()?;
        let tube = 0.5 * problem.f.radius();
        Ok(Self {
            endpoints: problem.endpoints.enlarged(alpha),
            sets,
            problem: problem.clone(),
            xref,
            k_pen,
            beta,
            alpha,
            tube,
        })
    }

    pub fn cells(&self) -> usize {
        self.sets.cells()
    }

    pub fn step(&self) -> f64 {
        self.sets.step()
    }

    pub fn ref_state(&self, j: usize) -> Vec<f64> {
        self.xref.eval(self.sets.grid[j])
    }

    fn l_stage(&self, j: usize, x: &[f64], v: &[f64]) -> f64 {
        match &self.problem.l {
            Some(l) if !l.is_zero => l.value(self.sets.stage_time(j), x, v),
            _ => 0.0,
        }
    }

    fn penalty(&self, x: &[f64]) -> f64 {
        self.problem.h.as_ref().map_or(0.0, |h| self.k_pen * (h.value(x) - self.beta).max(0.0))
    }

    fn tracking(&self, j: usize, x: &[f64]) -> f64 {
        let d = sub(x, &self.ref_state(j));
        dot(&d, &d)
    }

    fn in_tube(&self, j: usize, x: &[f64]) -> bool {
        dist(x, &self.ref_state(j)) <= self.tube + 1e-12
    }

    /// Cost of cell j, infinite if the transition is not admissible.
    fn cell_cost(&self, j: usize, a: &[f64], b: &[f64]) -> f64 {
        let h = self.step();
        let v: Vec<f64> = b.iter().zip(a).map(|(y, x)| (y - x) / h).collect();
        match distance_to_set(&v, &self.sets.set(j, a)) {
            Ok(d) if d <= VEL_TOL * (1.0 + norm(&v)) => {}
            _ => return f64::INFINITY,
        }
        h * (self.l_stage(j, a, &v) + self.tracking(j, a) + self.penalty(a))
    }

    fn endpoint_cost(&self, x0: &[f64], x1: &[f64]) -> f64 {
        if !self.endpoints.initial.contains(x0, 1e-12) || !self.endpoints.terminal.contains(x1, 1e-12) {
            return f64::INFINITY;
        }
        self.problem.g.value(x0, x1)
    }

    /// Objective of a state sequence (infinite when infeasible).
    pub fn objective(&self, xs: &[Vec<f64>]) -> f64 {
        let n = self.cells();
        if xs.len() != n + 1 {
            return f64::INFINITY;
        }
        let mut c = self.endpoint_cost(&xs[0], &xs[n]);
        for j in 0..=n {
            if !self.in_tube(j, &xs[j]) {
                return f64::INFINITY;
            }
        }
        for j in 0..n {
            c += self.cell_cost(j, &xs[j], &xs[j + 1]);
        }
        c
    }

    /// Objective change terms touching states `lo..=hi` (cells lo-1..=hi).
    fn local_cost(&self, xs: &[Vec<f64>], lo: usize, hi: usize) -> f64 {
        let n = self.cells();
        let mut c = 0.0;
        for j in lo..=hi {
            if !self.in_tube(j, &xs[j]) {
                return f64::INFINITY;
            }
        }
        let first = lo.saturating_sub(1);
        let last = hi.min(n - 1);
        for j in first..=last {
            c += self.cell_cost(j, &xs[j], &xs[j + 1]);
        }
        if lo == 0 || hi == n {
            c += self.endpoint_cost(&xs[0], &xs[n]);
        }
        c
    }

    /// The discrete problem read as a continuous one: left-sampled F,
    /// `L_j + tracking` as running cost, constraint `h - beta`, enlarged
    /// endpoints. Multipliers from [`extract_multipliers`] are checked
    /// against this problem.
    pub fn view_problem(&self) -> Problem {
        let sets = self.sets.clone();
        let tau = move |t: f64| sets.stage_time(sets.cell_of(t));
        let l = self.problem.integrand().retimed(tau).plus(&Integrand::tracking(self.xref.clone()));
        Problem {
            f: self.sets.multifunction(),
            l: Some(l),
            g: self.problem.g.clone(),
            h: self.problem.h.as_ref().map(|h| h.shifted(self.beta)),
            endpoints: self.endpoints.clone(),
        }
    }

    /// Velocity scale used for the DP grid.
    fn velocity_scale(&self) -> f64 {
        if self.problem.f.bound.is_finite() && self.problem.f.bound > 0.0 {
            return self.problem.f.bound;
        }
        (0..self.cells())
            .map(|j| self.sets.set(j, &self.ref_state(j)).radius())
            .fold(0.0, f64::max)
            .max(1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Grid nodes per `h * c` of state (c the velocity bound).
    pub grid_refine: usize,
    pub max_states: usize,
    pub max_sweeps: usize,
    pub step_tol: f64,
    /// Longest interior block moved as a unit during refinement.
    pub max_block: usize,
    pub refine: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { grid_refine: 4, max_states: 200_000, max_sweeps: 50, step_tol: 1e-10, max_block: 8, refine: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    /// Forward enumeration of vertex-velocity sequences.
    Exact,
    /// DP on a state lattice around the reference arc, then refinement.
    Grid,
}

#[derive(Debug, Clone)]
pub struct StageSolution {
    pub x: Arc,
    pub cost: f64,
    pub mode: SolveMode,
    pub sweeps: usize,
}

/// Minimizes the penalized discrete problem.
pub fn solve_penalized(sp: &StageProblem, opts: &SolveOptions) -> Result<StageSolution> {
    let n = sp.cells();
    let x0_ref = sp.ref_state(0);
    let exact = !sp.sets.set(0, &x0_ref).hull;
    let (mut xs, mode) = if exact {
        (dp_exact(sp, opts)?, SolveMode::Exact)
    } else {
        (dp_grid(sp, opts)?, SolveMode::Grid)
    };
    let mut sweeps = 0;
    if mode == SolveMode::Grid && opts.refine {
        sweeps = refine(sp, &mut xs, opts);
    }
    let cost = sp.objective(&xs);
    if !cost.is_finite() {
        return Err(Error::GridExit { stage: n });
    }
    Ok(StageSolution {
        x: Arc { grid: sp.sets.grid.clone(), values: xs, interp: Interp::Linear },
        cost,
        mode,
        sweeps,
    })
}

fn initial_states(sp: &StageProblem, lattice: &[Vec<f64>]) -> Vec<Vec<f64>> {
    match &sp.endpoints.initial {
        EndpointShape::Point(c) => vec![c.clone()],
        shape => lattice.iter().filter(|x| shape.contains(x, 1e-12)).cloned().collect(),
    }
}

/// Forward reachable-set enumeration for point-list velocity sets.
fn dp_exact(sp: &StageProblem, opts: &SolveOptions) -> Result<Vec<Vec<f64>>> {
    let n = sp.cells();
    let h = sp.step();
    let x0 = match &sp.endpoints.initial {
        EndpointShape::Point(c) => c.clone(),
        _ => return Err(Error::ProblemShape("exact mode needs a fixed initial state".into())),
    };
    // states per stage: (x, cost-to-come, parent index)
    let mut layers: Vec<Vec<(Vec<f64>, f64, usize)>> = vec![vec![(x0, 0.0, 0)]];
    for j in 0..n {
        let prev = &layers[j];
        let mut next: Vec<(Vec<f64>, f64, usize)> = prev
            .par_iter()
            .enumerate()
            .flat_map_iter(|(ia, (a, ca, _))| {
                let set = sp.sets.set(j, a);
                let run = sp.tracking(j, a) + sp.penalty(a);
                set.points
                    .iter()
                    .filter_map(|v| {
                        let b: Vec<f64> = a.iter().zip(v).map(|(x, w)| x + h * w).collect();
                        if !sp.in_tube(j + 1, &b) {
                            return None;
                        }
                        Some((b, ca + h * (sp.l_stage(j, a, v) + run), ia))
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        next.sort_by(|p, q| lex_cmp(&p.0, &q.0).then(p.2.cmp(&q.2)));
        let mut merged: Vec<(Vec<f64>, f64, usize)> = Vec::with_capacity(next.len());
        for s in next {
            if let Some(last) = merged.last_mut() {
                if dist(&last.0, &s.0) <= 1e-12 {
                    if s.1 < last.1 || (s.1 == last.1 && s.2 < last.2) {
                        last.1 = s.1;
                        last.2 = s.2;
                    }
                    continue;
                }
            }
            merged.push(s);
        }
        if merged.is_empty() || merged.len() > opts.max_states {
            return Err(Error::GridExit { stage: j + 1 });
        }
        layers.push(merged);
    }
    let x0 = layers[0][0].0.clone();
    let mut best = None;
    let mut bc = f64::INFINITY;
    for (i, (b, c, _)) in layers[n].iter().enumerate() {
        let tot = c + sp.endpoint_cost(&x0, b);
        if tot < bc {
            bc = tot;
            best = Some(i);
        }
    }
    let mut i = best.ok_or(Error::GridExit { stage: n })?;
    let mut xs = vec![Vec::new(); n + 1];
    for j in (0..=n).rev() {
        xs[j] = layers[j][i].0.clone();
        i = layers[j][i].2;
    }
    Ok(xs)
}

struct Lattice {
    dim: usize,
    k: i64,
    step: f64,
}

impl Lattice {
    fn side(&self) -> usize {
        (2 * self.k + 1) as usize
    }

    fn offsets(&self) -> Vec<Vec<i64>> {
        let mut out = vec![vec![]];
        for _ in 0..self.dim {
            let mut nx = Vec::new();
            for o in &out {
                for i in -self.k..=self.k {
                    let mut p = o.clone();
                    p.push(i);
                    nx.push(p);
                }
            }
            out = nx;
        }
        out.retain(|o| {
            let r: f64 = o.iter().map(|&i| (i as f64 * self.step).powi(2)).sum::<f64>().sqrt();
            r <= self.k as f64 * self.step + 1e-12
        });
        out
    }

    fn flat(&self, idx: &[i64]) -> Option<usize> {
        let s = self.side() as i64;
        let mut f = 0i64;
        for &i in idx {
            if i < -self.k || i > self.k {
                return None;
            }
            f = f * s + (i + self.k);
        }
        Some(f as usize)
    }
}

/// Lattice DP around the reference arc for hull velocity sets.
fn dp_grid(sp: &StageProblem, opts: &SolveOptions) -> Result<Vec<Vec<f64>>> {
    let n = sp.cells();
    let h = sp.step();
    let dim = sp.problem.f.dim;
    if dim > 2 {
        return Err(Error::Unsupported("grid DP in dimension above 2".into()));
    }
    let c = sp.velocity_scale();
    // Rounding to the lattice can lose up to one step per stage, so the step
    // is also tied to tube / N; the state cap bounds it from below.
    let coarse = h * c / opts.grid_refine.max(1) as f64;
    let fine = sp.tube / (2.0 * n as f64);
    let per_dim = (opts.max_states as f64).powf(1.0 / dim as f64);
    let floor = 2.0 * sp.tube / (per_dim - 1.0).max(1.0);
    let step = coarse.min(fine).max(floor);
    let k = (sp.tube / step).floor() as i64;
    let lat = Lattice { dim, k, step };
    let offs = lat.offsets();
    let size = lat.side().pow(dim as u32);
    let refs: Vec<Vec<f64>> = (0..=n).map(|j| sp.ref_state(j)).collect();
    let node = |j: usize, o: &[i64]| -> Vec<f64> { refs[j].iter().zip(o).map(|(r, &i)| r + i as f64 * step).collect() };

    let lattice0: Vec<Vec<f64>> = offs.iter().map(|o| node(0, o)).collect();
    let starts = initial_states(sp, &lattice0);
    if starts.is_empty() {
        return Err(Error::InfeasibleStart("no admissible initial state in the tube".into()));
    }
    let terminal_extra: Option<Vec<f64>> = match &sp.endpoints.terminal {
        EndpointShape::Point(c) => Some(c.clone()),
        EndpointShape::Ball { center, .. } => Some(center.clone()),
        EndpointShape::Free => None,
    };

    let run = |x0: &Vec<f64>| -> Option<(f64, Vec<Vec<f64>>)> {
        // stage 0: single start node
        let mut costs: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        let mut parents: Vec<Vec<usize>> = Vec::with_capacity(n + 1);
        let mut nodes: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n + 1);
        nodes.push(vec![x0.clone()]);
        costs.push(vec![0.0]);
        parents.push(vec![0]);
        let mut index_of: Vec<Vec<Option<usize>>> = vec![vec![]];
        for j in 0..n {
            // lattice nodes at stage j+1 (plus the terminal center at N)
            let mut nx: Vec<Vec<f64>> = Vec::with_capacity(offs.len() + 1);
            let mut idx = vec![None; size];
            for o in &offs {
                idx[lat.flat(o).unwrap()] = Some(nx.len());
                nx.push(node(j + 1, o));
            }
            let extra = if j + 1 == n { terminal_extra.clone() } else { None };
            let extra_id = extra.map(|e| {
                nx.push(e);
                nx.len() - 1
            });
            let prev = &nodes[j];
            let prev_cost = &costs[j];
            let dref: Vec<f64> = sub(&refs[j + 1], &refs[j]);
            // candidate transitions from each source, computed in parallel
            let cand: Vec<Vec<(usize, f64)>> = prev
                .par_iter()
                .enumerate()
                .map(|(ia, a)| {
                    if !prev_cost[ia].is_finite() {
                        return vec![];
                    }
                    let set = sp.sets.set(j, a);
                    let run = sp.tracking(j, a) + sp.penalty(a);
                    let rel: Vec<f64> = sub(a, &refs[j]);
                    let mut lo = Vec::with_capacity(dim);
                    let mut hi = Vec::with_capacity(dim);
                    for d in 0..dim {
                        let base = (rel[d] - dref[d]) / step;
                        lo.push((base - h * c / step - 1e-9).ceil() as i64);
                        hi.push((base + h * c / step + 1e-9).floor() as i64);
                    }
                    let mut out = Vec::new();
                    let mut try_b = |ib: usize, b: &[f64]| {
                        let v: Vec<f64> = b.iter().zip(a).map(|(y, x)| (y - x) / h).collect();
                        if let Ok(d) = distance_to_set(&v, &set) {
                            if d <= VEL_TOL * (1.0 + norm(&v)) {
                                out.push((ib, prev_cost[ia] + h * (sp.l_stage(j, a, &v) + run)));
                            }
                        }
                    };
                    let mut cur = lo.clone();
                    'outer: loop {
                        if let Some(f) = lat.flat(&cur) {
                            if let Some(ib) = idx[f] {
                                try_b(ib, &nx[ib]);
                            }
                        }
                        for d in (0..dim).rev() {
                            if cur[d] < hi[d] {
                                cur[d] += 1;
                                for e in d + 1..dim {
                                    cur[e] = lo[e];
                                }
                                continue 'outer;
                            }
                        }
                        break;
                    }
                    if let Some(e) = extra_id {
                        try_b(e, &nx[e]);
                    }
                    out
                })
                .collect();
            let mut nc = vec![f64::INFINITY; nx.len()];
            let mut np = vec![usize::MAX; nx.len()];
            for (ia, list) in cand.iter().enumerate() {
                for &(ib, cst) in list {
                    if cst < nc[ib] {
                        nc[ib] = cst;
                        np[ib] = ia;
                    }
                }
            }
            for (ib, b) in nx.iter().enumerate() {
                if !sp.in_tube(j + 1, b) {
                    nc[ib] = f64::INFINITY;
                }
            }
            if nc.iter().all(|c| !c.is_finite()) {
                return None;
            }
            nodes.push(nx);
            costs.push(nc);
            parents.push(np);
            index_of.push(idx);
        }
        let mut best = None;
        let mut bc = f64::INFINITY;
        for (i, b) in nodes[n].iter().enumerate() {
            if !costs[n][i].is_finite() {
                continue;
            }
            let tot = costs[n][i] + sp.endpoint_cost(x0, b);
            if tot < bc {
                bc = tot;
                best = Some(i);
            }
        }
        let mut i = best?;
        let mut xs = vec![Vec::new(); n + 1];
        for j in (0..=n).rev() {
            xs[j] = nodes[j][i].clone();
            i = parents[j][i];
        }
        Some((bc, xs))
    };

    let results: Vec<Option<(f64, Vec<Vec<f64>>)>> = starts.par_iter().map(run).collect();
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for r in results.into_iter().flatten() {
        if best.as_ref().map_or(true, |b| r.0 < b.0) {
            best = Some(r);
        }
    }
    best.map(|b| b.1).ok_or(Error::GridExit { stage: n })
}

/// Coordinate descent over single states, short blocks, tails and heads.
/// Returns the number of sweeps performed.
fn refine(sp: &StageProblem, xs: &mut [Vec<f64>], opts: &SolveOptions) -> usize {
    let n = sp.cells();
    let dim = xs[0].len();
    let lo_state = if matches!(sp.endpoints.initial, EndpointShape::Point(_)) { 1 } else { 0 };
    let mut blocks: Vec<(usize, usize)> = Vec::new();
    for a in lo_state..=n {
        for len in 1..=opts.max_block {
            let b = a + len - 1;
            if b > n {
                break;
            }
            blocks.push((a, b));
        }
        if a + opts.max_block <= n {
            blocks.push((a, n));
        }
    }
    let span = 2.0 * sp.tube + 1.0;
    let mut sweeps = 0;
    for _ in 0..opts.max_sweeps {
        sweeps += 1;
        let mut max_step: f64 = 0.0;
        for &(a, b) in &blocks {
            for c in 0..dim {
                let base = sp.local_cost(xs, a, b);
                if !base.is_finite() {
                    continue;
                }
                let orig: Vec<f64> = (a..=b).map(|j| xs[j][c]).collect();
                let eval = |xs: &mut [Vec<f64>], s: f64| -> f64 {
                    for (k, j) in (a..=b).enumerate() {
                        xs[j][c] = orig[k] + s;
                    }
                    sp.local_cost(xs, a, b)
                };
                let extent = |xs: &mut [Vec<f64>], dir: f64| -> f64 {
                    if eval(xs, dir * span).is_finite() {
                        return span;
                    }
                    let (mut ok, mut bad) = (0.0, span);
                    for _ in 0..60 {
                        let mid = 0.5 * (ok + bad);
                        if eval(xs, dir * mid).is_finite() {
                            ok = mid;
                        } else {
                            bad = mid;
                        }
                    }
                    ok
                };
                let up = extent(xs, 1.0);
                let down = extent(xs, -1.0);
                let mut best_s = 0.0;
                let mut best_v = base;
                if up + down > 0.0 {
                    let (s, v) = {
                        let cell = std::cell::RefCell::new(&mut *xs);
                        golden_max(|s| -eval(&mut cell.borrow_mut(), s), -down, up, 1e-13)
                    };
                    let v = -v;
                    let lo_v = eval(xs, -down);
                    let hi_v = eval(xs, up);
                    for cand in [(s, v), (-down, lo_v), (up, hi_v)] {
                        if cand.1 < best_v - REFINE_GAIN * (1.0 + best_v.abs()) {
                            best_v = cand.1;
                            best_s = cand.0;
                        }
                    }
                }
                eval(xs, best_s);
                if best_s != 0.0 {
                    max_step = max_step.max(best_s.abs());
                }
            }
        }
        if max_step < opts.step_tol {
            break;
        }
    }
    sweeps
}

/// Point mass of the multiplier measure with its constraint gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub t: f64,
    pub mass: f64,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageInfo {
    pub cells: usize,
    pub k_pen: f64,
    pub beta: f64,
    pub alpha: f64,
}

/// `(p, lambda, mu, gamma)` with the derived costate q and trace r.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierSet {
    pub p: Arc,
    pub lambda: f64,
    pub atoms: Vec<Atom>,
    /// Per-cell values on `p.grid`.
    pub r: Arc,
    pub normalization_residual: f64,
    #[serde(default)]
    pub kkt_residual: f64,
    #[serde(default)]
    pub stage: Option<StageInfo>,
}

impl MultiplierSet {
    pub fn mu_total(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    /// `mu((S, T])`
    pub fn mu_after_start(&self) -> f64 {
        let s = self.p.start();
        self.atoms.iter().filter(|a| a.t > s).map(|a| a.mass).sum()
    }

    /// Mass per cell divided by the cell length.
    pub fn mu_density(&self) -> Vec<f64> {
        let g = &self.p.grid;
        let mut d = vec![0.0; g.len() - 1];
        for a in &self.atoms {
            let k = self.p.cell_index(a.t);
            d[k] += a.mass / (g[k + 1] - g[k]);
        }
        d
    }

    pub fn scale_norm(&self) -> f64 {
        self.p.sup_norm() + self.lambda + self.mu_total()
    }

    /// Multiplies `(p, lambda, mu)` and r by `theta`.
    pub fn scaled(&self, theta: f64) -> Self {
        let mut m = self.clone();
        m.p.values.iter_mut().for_each(|v| *v = scale(v, theta));
        m.r.values.iter_mut().for_each(|v| *v = scale(v, theta));
        m.lambda *= theta;
        m.atoms.iter_mut().for_each(|a| a.mass *= theta);
        m
    }

    /// Scaled so that `|p|_inf + lambda + |mu| = 1`.
    pub fn normalized(&self) -> Self {
        let s = self.scale_norm();
        if s == 0.0 {
            return self.clone();
        }
        let mut m = self.scaled(1.0 / s);
        m.normalization_residual = (m.scale_norm() - 1.0).abs();
        m
    }

    fn measure_term(&self, t: f64, closed: bool) -> Vec<f64> {
        let mut acc = vec![0.0; self.p.dim()];
        for a in &self.atoms {
            if a.t < t || (closed && a.t <= t) {
                acc = add(&acc, &scale(&a.gamma, a.mass));
            }
        }
        acc
    }
}

impl CostatePath for MultiplierSet {
    /// `p(t) + int_[S,t) gamma dmu` for t < T, closed interval at T.
    fn q_at(&self, t: f64) -> Vec<f64> {
        let closed = t >= self.p.end();
        add(&self.p.eval(t), &self.measure_term(t, closed))
    }

    fn p_at(&self, t: f64) -> Vec<f64> {
        self.p.eval(t)
    }

    fn q_sup_norm(&self) -> f64 {
        let mut m: f64 = 0.0;
        for (k, &t) in self.p.grid.iter().enumerate() {
            m = m.max(norm(&self.q_at(t)));
            let right = add(&self.p.values[k], &self.measure_term(t, true));
            m = m.max(norm(&right));
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktOptions {
    /// Largest admissible normalized Weierstrass residual.
    pub kkt_tol: f64,
}

impl Default for KktOptions {
    fn default() -> Self {
        Self { kkt_tol: 1e-2 }
    }
}

struct Backward {
    qd: Vec<Vec<f64>>,
    nu: Vec<f64>,
    weier: Vec<f64>,
}

/// Discrete stage Hamiltonian without tracking/penalty terms.
fn stage_h(sp: &StageProblem, j: usize, x: &[f64], q: &[f64], lambda: f64) -> Result<(f64, Vec<f64>)> {
    let set = sp.sets.set(j, x);
    match &sp.problem.l {
        Some(l) if !l.is_zero => {
            let t = sp.sets.stage_time(j);
            let c = |v: &[f64]| l.value(t, x, v);
            eval_h_set(&set, q, lambda, Some(&c))
        }
        _ => eval_h_set(&set, q, lambda, None),
    }
}

fn weierstrass(sp: &StageProblem, j: usize, xs: &[Vec<f64>], q: &[f64], lambda: f64) -> Result<f64> {
    let h = sp.step();
    let v: Vec<f64> = xs[j + 1].iter().zip(&xs[j]).map(|(b, a)| (b - a) / h).collect();
    let (hmax, _) = stage_h(sp, j, &xs[j], q, lambda)?;
    Ok((hmax - (dot(q, &v) - lambda * sp.l_stage(j, &xs[j], &v))).max(0.0))
}

fn backward(sp: &StageProblem, xs: &[Vec<f64>], q_n: Vec<f64>, lambda: f64) -> Result<Backward> {
    let n = sp.cells();
    let h = sp.step();
    let stage_f = sp.sets.multifunction();
    let l = sp.problem.l.clone();
    let mut qd = vec![Vec::new(); n + 1];
    qd[n] = q_n;
    let mut nu = vec![0.0; n];
    let mut weier = vec![0.0; n];
    weier[n - 1] = weierstrass(sp, n - 1, xs, &qd[n], lambda)?;
    for j in (0..n).rev() {
        let x = &xs[j];
        let t = sp.sets.stage_time(j);
        let gx = grad_x_h(&stage_f, l.as_ref().filter(|l| !l.is_zero), lambda, t, x, &qd[j + 1])?;
        let track = scale(&sub(x, &sp.ref_state(j)), 2.0 * lambda);
        let base: Vec<f64> = (0..x.len()).map(|i| qd[j + 1][i] + h * (gx[i] - track[i])).collect();
        let (nu_j, gh) = match &sp.problem.h {
            None => (0.0, vec![0.0; x.len()]),
            Some(hc) => {
                let e = hc.value(x) - sp.beta;
                let gh = hc.gradient(x);
                let nu = if e > KINK_BAND {
                    1.0
                } else if e < -KINK_BAND || j == 0 {
                    0.0
                } else {
                    let w = |nu: f64| -> f64 {
                        let q: Vec<f64> = (0..x.len()).map(|i| base[i] - lambda * h * sp.k_pen * nu * gh[i]).collect();
                        weierstrass(sp, j - 1, xs, &q, lambda).unwrap_or(f64::INFINITY)
                    };
                    let (v, fv) = golden_max(|s| -w(s), 0.0, 1.0, 1e-12);
                    let mut best = (v, -fv);
                    for cand in [0.0, 1.0] {
                        let wc = w(cand);
                        if wc < best.1 - 1e-15 {
                            best = (cand, wc);
                        }
                    }
                    // W is convex in nu; take the largest minimizer so the
                    // atom holds the arc on the constraint
                    let level = best.1 + 1e-12;
                    if w(1.0) <= level {
                        1.0
                    } else {
                        let (mut ok, mut bad) = (best.0, 1.0);
                        for _ in 0..60 {
                            let mid = 0.5 * (ok + bad);
                            if w(mid) <= level {
                                ok = mid;
                            } else {
                                bad = mid;
                            }
                        }
                        ok
                    }
                };
                (nu, gh)
            }
        };
        nu[j] = nu_j;
        qd[j] = (0..x.len()).map(|i| base[i] - lambda * h * sp.k_pen * nu_j * gh[i]).collect();
        if j > 0 {
            weier[j - 1] = weierstrass(sp, j - 1, xs, &qd[j], lambda)?;
        }
    }
    Ok(Backward { qd, nu, weier })
}

/// Discrete multipliers of a solved stage problem (normalized).
///
/// Costate by the discrete adjoint recursion from the terminal
/// transversality condition; penalty subgradients become atoms of mu at the
/// knots with `gamma = grad h`; `p = q - int_[S,t) gamma dmu`; r per cell is
/// the stage Hamiltonian (with tracking) at the cell midpoint.
pub fn extract_multipliers(sp: &StageProblem, x_opt: &Arc, opts: &KktOptions) -> Result<MultiplierSet> {
    let n = sp.cells();
    let h = sp.step();
    let xs = &x_opt.values;
    if xs.len() != n + 1 {
        return Err(Error::InvalidInput("arc is not on the stage grid".into()));
    }
    let lambda = 1.0;
    let (_, g1) = sp.problem.g.gradient(&xs[0], &xs[n]);
    let base_qn: Vec<f64> = scale(&g1, -lambda);

    // normal-cone term at the terminal point
    let active_dir: Option<Option<Vec<f64>>> = match &sp.endpoints.terminal {
        EndpointShape::Free => None,
        EndpointShape::Point(_) => Some(None),
        EndpointShape::Ball { center, radius } => {
            let d = sub(&xs[n], center);
            let nd = norm(&d);
            if nd >= radius - 1e-9 && nd > 1e-14 {
                Some(Some(scale(&d, 1.0 / nd)))
            } else if *radius <= 1e-14 || nd <= 1e-14 && *radius <= 1e-9 {
                Some(None)
            } else {
                None
            }
        }
    };
    let total_resid = |b: &Backward| b.weier.iter().cloned().fold(0.0, f64::max);
    let zbig = 10.0
        * (1.0
            + norm(&g1)
            + sp.k_pen * (sp.sets.grid[n] - sp.sets.grid[0]) * sp.problem.h.as_ref().map_or(0.0, |c| c.lip)
            + 2.0 * sp.tube * (sp.sets.grid[n] - sp.sets.grid[0]));
    let bw = match active_dir {
        None => backward(sp, xs, base_qn.clone(), lambda)?,
        Some(Some(u)) => {
            let f = |tau: f64| {
                backward(sp, xs, sub(&base_qn, &scale(&u, tau)), lambda).map_or(f64::INFINITY, |b| total_resid(&b))
            };
            let (tau, _) = golden_max(|s| -f(s), 0.0, zbig, 1e-12);
            let tau = if f(0.0) <= f(tau) { 0.0 } else { tau };
            backward(sp, xs, sub(&base_qn, &scale(&u, tau)), lambda)?
        }
        Some(None) => {
            let mut zeta = vec![0.0; base_qn.len()];
            for _ in 0..3 {
                for i in 0..zeta.len() {
                    let f = |s: f64| {
                        let mut z = zeta.clone();
                        z[i] = s;
                        backward(sp, xs, sub(&base_qn, &z), lambda).map_or(f64::INFINITY, |b| total_resid(&b))
                    };
                    let (s, _) = golden_max(|s| -f(s), -zbig, zbig, 1e-12);
                    if f(s) < f(zeta[i]) {
                        zeta[i] = s;
                    }
                }
            }
            backward(sp, xs, sub(&base_qn, &zeta), lambda)?
        }
    };

    let mut atoms = Vec::new();
    if let Some(hc) = &sp.problem.h {
        for j in 0..n {
            if bw.nu[j] > 0.0 {
                atoms.push(Atom { t: sp.sets.grid[j], mass: lambda * h * sp.k_pen * bw.nu[j], gamma: hc.gradient(&xs[j]) });
            }
        }
    }
    let mut acc = vec![0.0; xs[0].len()];
    let mut p = Vec::with_capacity(n + 1);
    let mut ai = 0;
    for j in 0..=n {
        // atoms strictly before t_j
        while ai < atoms.len() && atoms[ai].t < sp.sets.grid[j] {
            acc = add(&acc, &scale(&atoms[ai].gamma, atoms[ai].mass));
            ai += 1;
        }
        p.push(sub(&bw.qd[j], &acc));
    }
    let mut m = MultiplierSet {
        p: Arc { grid: sp.sets.grid.clone(), values: p, interp: Interp::Linear },
        lambda,
        atoms,
        r: Arc { grid: sp.sets.grid.clone(), values: vec![vec![0.0]; n + 1], interp: Interp::ConstantLeft },
        normalization_residual: 0.0,
        kkt_residual: 0.0,
        stage: Some(StageInfo { cells: n, k_pen: sp.k_pen, beta: sp.beta, alpha: sp.alpha }),
    };
    let mut r = Vec::with_capacity(n + 1);
    for j in 0..n {
        let tm = 0.5 * (sp.sets.grid[j] + sp.sets.grid[j + 1]);
        let xm = x_opt.eval(tm);
        let qm = m.q_at(tm);
        let (hv, _) = stage_h(sp, j, &xm, &qm, lambda)?;
        let d = sub(&xm, &sp.xref.eval(tm));
        r.push(vec![hv - lambda * dot(&d, &d)]);
    }
    r.push(r[n - 1].clone());
    m.r.values = r;
    let scale_n = m.scale_norm();
    let mut out = m.normalized();
    out.kkt_residual = total_resid(&bw) / scale_n;
    if out.kkt_residual > opts.kkt_tol {
        return Err(Error::NonStationary { residual: out.kkt_residual });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpCheck {
    pub t: f64,
    /// `H^j(x_j, q(t_j)) - H^{j-1}(x_j, q(t_j))`
    pub jump: f64,
    /// Lower estimates of the eta_F and eta_L increments over the cell ending at `t`.
    pub eta_f: f64,
    pub eta_l: f64,
    pub bound: f64,
    pub margin: f64,
}

/// Per interior knot: `|Delta_j| <= |q|_inf (eta_F increment) + lambda (eta_L increment)`.
///
/// The increments are bounded from below by the single-cell terms on
/// `[t_{j-1}, t_j]` at tube radius `max_j |x_j - xref(t_j)|`, sampled over
/// the tube and at `x_j` itself.
pub fn stage_jumps(sp: &StageProblem, x_opt: &Arc, m: &MultiplierSet, vopts: &VariationOptions) -> Result<Vec<JumpCheck>> {
    let n = sp.cells();
    let xs = &x_opt.values;
    let delta = (0..=n).map(|j| dist(&xs[j], &sp.ref_state(j))).fold(0.0, f64::max);
    let f = &sp.problem.f;
    let q_inf = m.q_sup_norm();
    let vb = sp.velocity_scale();
    let vsamples = ball_samples(&vec![0.0; f.dim], vb, vopts.m_ball);
    let checks: Vec<Result<JumpCheck>> = (1..n)
        .into_par_iter()
        .map(|j| {
            let t0 = sp.sets.grid[j - 1];
            let t1 = sp.sets.grid[j];
            let q = m.q_at(t1);
            let x = &xs[j];
            let jump = stage_h(sp, j, x, &q, m.lambda)?.0 - stage_h(sp, j - 1, x, &q, m.lambda)?.0;
            let df = cell_term(f, t0, t1, delta.min(f.radius()), vopts)?
                .max(hausdorff_distance(&f.eval_unchecked(t1, x, None), &f.eval_unchecked(t0, x, None))?);
            let dl = match &sp.problem.l {
                Some(l) if !l.is_zero => {
                    let mut pts = ball_samples(&sp.ref_state(j), delta, vopts.m_ball);
                    pts.push(x.clone());
                    let mut best: f64 = 0.0;
                    for y in &pts {
                        for v in &vsamples {
                            best = best.max((l.value(t1, y, v) - l.value(t0, y, v)).abs());
                        }
                    }
                    best
                }
                _ => 0.0,
            };
            let bound = q_inf * df + m.lambda * dl;
            Ok(JumpCheck { t: t1, jump, eta_f: df, eta_l: dl, bound, margin: bound - jump.abs() })
        })
        .collect();
    checks.into_iter().collect()
}

#[derive(Debug, Clone)]
pub struct StageRun {
    pub stage: StageProblem,
    pub solution: StageSolution,
    /// Stage objective of the Filippov comparison arc (None if inadmissible).
    pub comparison_cost: Option<f64>,
    pub multipliers: MultiplierSet,
    pub jumps: Vec<JumpCheck>,
    pub feasibility: FeasibilityReport,
}

impl std::fmt::Debug for StageProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StageProblem")
            .field("cells", &self.cells())
            .field("k_pen", &self.k_pen)
            .field("beta", &self.beta)
            .field("alpha", &self.alpha)
            .field("tube", &self.tube)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PipelineOptions {
    pub solve: SolveOptions,
    pub kkt: KktOptions,
    pub variation: VariationOptions,
}

/// Builds stage i of the schedule: left sampling, measured Filippov gap
/// alpha and relaxation beta.
pub fn build_stage(problem: &Problem, schedule: &PenaltySchedule, i: usize) -> Result<(StageProblem, Arc)> {
    let n = schedule.cells[i];
    let sets = left_sample(&problem.f, n)?;
    let xref = problem.reference()?;
    let xs = Arc::sample(xref.start(), xref.end(), n, Interp::Linear, |t| xref.eval(t));
    let stage_f = sets.multifunction();
    let z = filippov_approximate(&stage_f, &xs, &xref.eval(xref.start()))?;
    let alpha = z.z.sup_dist(&xs);
    let k_h = problem.h.as_ref().map_or(0.0, |h| h.lip);
    let beta = match &schedule.beta {
        Some(b) => b[i],
        None => 2.0 * k_h * alpha + 1.0 / n as f64,
    };
    if problem.h.is_some() && !(beta > 2.0 * k_h * alpha) {
        return Err(Error::InvalidInput(format!(
            "beta {beta} violates the coupling beta > 2 k_h alpha = {}",
            2.0 * k_h * alpha
        )));
    }
    Ok((StageProblem::new(problem, sets, schedule.weights[i], beta, alpha)?, z.z))
}

/// Runs left sampling, penalized solve and multiplier extraction for every
/// entry of the schedule.
pub fn run_pipeline(problem: &Problem, schedule: &PenaltySchedule, opts: &PipelineOptions) -> Result<Vec<StageRun>> {
    schedule.validate()?;
    let mut runs = Vec::with_capacity(schedule.cells.len());
    for i in 0..schedule.cells.len() {
        let (stage, z) = build_stage(problem, schedule, i)?;
        let solution = solve_penalized(&stage, &opts.solve)?;
        let comparison_cost = Some(stage.objective(&z.values)).filter(|c| c.is_finite());
        let multipliers = extract_multipliers(&stage, &solution.x, &opts.kkt)?;
        let jumps = stage_jumps(&stage, &solution.x, &multipliers, &opts.variation)?;
        let feasibility = feasibility_report(&stage.view_problem(), &solution.x, FEAS_TOL)?;
        runs.push(StageRun { stage, solution, comparison_cost, multipliers, jumps, feasibility });
    }
    Ok(runs)
}

/// Convenience: constraint `h` from a list of affine branches `c.x + b`.
pub fn affine_constraint(branches: &[(Vec<f64>, f64)], lip: f64) -> StateConstraint {
    StateConstraint {
        branches: branches.iter().map(|(c, b)| crate::trajectory::SmoothFn::affine(c.clone(), *b)).collect(),
        lip,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multifun::ScalarFn;
    use crate::trajectory::{EndpointCost, SmoothFn};

    fn linear_problem(xref: Arc) -> Problem {
        let f = Multifunction::interval(ScalarFn::constant(-1.0), ScalarFn::constant(1.0), (0.0, 1.0))
            .with_locality(0.5, xref);
        Problem::new(f, EndpointCost::linear(vec![0.0], vec![-1.0]), EndpointSet::fixed_initial(vec![0.0]))
    }

    #[test]
    fn schedule_validation() {
        let ok = PenaltySchedule { cells: vec![8, 16], weights: vec![10.0, 20.0], beta: None };
        assert!(ok.validate().is_ok());
        let empty = PenaltySchedule { cells: vec![], weights: vec![], beta: None };
        assert!(empty.validate().is_err());
        let dec = PenaltySchedule { cells: vec![8, 16], weights: vec![20.0, 10.0], beta: None };
        assert!(dec.validate().is_err());
    }

    #[test]
    fn left_sampling_of_ramp() {
        let f = Multifunction::single_valued((0.0, 1.0), |t| vec![t]);
        let s = left_sample(&f, 4).unwrap();
        let got: Vec<f64> = (0..4).map(|j| s.set(j, &[0.0]).points[0][0]).collect();
        assert_eq!(got, vec![0.0, 0.25, 0.5, 0.75]);
        let m = s.multifunction();
        assert_eq!(m.eval(1.0, &[0.0], None).unwrap().points[0][0], 0.75);
        assert_eq!(m.eval(0.3, &[0.0], None).unwrap().points[0][0], 0.25);
    }

    #[test]
    fn linear_objective_gives_bang_arc() {
        let xref = Arc::sample(0.0, 1.0, 16, Interp::Linear, |t| vec![t]);
        let p = linear_problem(xref);
        let sched = PenaltySchedule { cells: vec![16], weights: vec![100.0], beta: None };
        let (sp, _) = build_stage(&p, &sched, 0).unwrap();
        let sol = solve_penalized(&sp, &SolveOptions::default()).unwrap();
        for (t, x) in sol.x.grid.iter().zip(&sol.x.values) {
            assert!((x[0] - t).abs() < 1e-12);
        }
        let m = extract_multipliers(&sp, &sol.x, &KktOptions::default()).unwrap();
        assert!(m.atoms.is_empty());
        assert!((m.lambda - 0.5).abs() < 1e-12);
        for v in &m.p.values {
            assert!((v[0] - 0.5).abs() < 1e-9);
        }
        assert!(m.kkt_residual < 1e-12);
    }

    #[test]
    fn non_stationary_arc_is_rejected() {
        let xref = Arc::sample(0.0, 1.0, 8, Interp::Linear, |t| vec![t]);
        let p = linear_problem(xref);
        let sched = PenaltySchedule { cells: vec![8], weights: vec![100.0], beta: None };
        let (sp, _) = build_stage(&p, &sched, 0).unwrap();
        let bad = Arc::sample(0.0, 1.0, 8, Interp::Linear, |t| vec![-0.2 * t]);
        assert!(matches!(
            extract_multipliers(&sp, &bad, &KktOptions::default()),
            Err(Error::NonStationary { .. })
        ));
    }

    #[test]
    fn fixed_endpoints_interior_velocity() {
        let xref = Arc::sample(0.0, 1.0, 8, Interp::Linear, |t| vec![0.5 * t]);
        let f = Multifunction::interval(ScalarFn::constant(-1.0), ScalarFn::constant(1.0), (0.0, 1.0))
            .with_locality(0.5, xref);
        let p = Problem::new(f, EndpointCost::zero(), EndpointSet::fixed_both(vec![0.0], vec![0.5]));
        let sched = PenaltySchedule { cells: vec![8], weights: vec![10.0], beta: None };
        let (sp, _) = build_stage(&p, &sched, 0).unwrap();
        let sol = solve_penalized(&sp, &SolveOptions::default()).unwrap();
        assert!(sol.x.sup_dist(&Arc::sample(0.0, 1.0, 8, Interp::Linear, |t| vec![0.5 * t])) < 1e-9);
        let m = extract_multipliers(&sp, &sol.x, &KktOptions::default()).unwrap();
        let p0 = m.p.values[0][0];
        assert!(m.p.values.iter().all(|v| (v[0] - p0).abs() < 1e-9));
        assert!((m.scale_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_mode_matches_enumeration() {
        let xref = Arc::sample(0.0, 1.0, 6, Interp::Linear, |t| vec![0.7 * t]);
        let f = Multifunction::from_fn(1, (0.0, 1.0), |t, _, _| {
            CompactSet::new(vec![vec![-0.5 + t], vec![0.7]], false).unwrap()
        })
        .with_locality(2.0, xref);
        let p = Problem::new(f, EndpointCost::new(|_, x1| (x1[0] - 0.2).powi(2)), EndpointSet::fixed_initial(vec![0.0]))
            .with_constraint(StateConstraint::smooth(SmoothFn::affine(vec![1.0], -0.1), 1.0));
        let sched = PenaltySchedule { cells: vec![6], weights: vec![5.0], beta: Some(vec![0.05]) };
        let (sp, _) = build_stage(&p, &sched, 0).unwrap();
        let sol = solve_penalized(&sp, &SolveOptions::default()).unwrap();
        assert_eq!(sol.mode, SolveMode::Exact);
        let h = sp.step();
        let mut best = f64::INFINITY;
        for code in 0..(1u32 << 6) {
            let mut xs = vec![vec![0.0]];
            for j in 0..6 {
                let set = sp.sets.set(j, &xs[j]);
                let v = &set.points[((code >> j) & 1) as usize];
                let nx = xs[j][0] + h * v[0];
                xs.push(vec![nx]);
            }
            best = best.min(sp.objective(&xs));
        }
        assert!((sol.cost - best).abs() < 1e-9, "{} vs {}", sol.cost, best);
    }

    #[test]
    fn active_constraint_creates_atoms() {
        // go up as fast as possible but stay below 1/2
        let xref = Arc::sample(0.0, 1.0, 32, Interp::Linear, |t| vec![t.min(0.5)]);
        let f = Multifunction::interval(ScalarFn::constant(-1.0), ScalarFn::constant(1.0), (0.0, 1.0))
            .with_locality(0.5, xref);
        let p = Problem::new(f, EndpointCost::linear(vec![0.0], vec![-1.0]), EndpointSet::fixed_initial(vec![0.0]))
            .with_constraint(affine_constraint(&[(vec![1.0], -0.5)], 1.0));
        let sched = PenaltySchedule { cells: vec![32], weights: vec![320.0], beta: None };
        let runs = run_pipeline(&p, &sched, &PipelineOptions::default()).unwrap();
        let r = &runs[0];
        let beta = r.stage.beta;
        let hmax = r.solution.x.values[..32].iter().map(|x| x[0] - 0.5).fold(f64::NEG_INFINITY, f64::max);
        assert!(hmax <= beta + 1e-6, "{hmax} > {beta}");
        assert!(!r.multipliers.atoms.is_empty());
        for a in &r.multipliers.atoms {
            let j = r.solution.x.cell_index(a.t);
            assert!(r.solution.x.values[j][0] - 0.5 - beta >= -KINK_BAND);
        }
        assert!(r.jumps.iter().all(|j| j.margin >= -1e-6));
    }
}
