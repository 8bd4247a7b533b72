//! Run configuration: JSON with a versioned `schema` field.

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use varinc::calcvar::{step_potential, VariationalProblem};
use varinc::multifun::{Arc, Interp, Multifunction, ScalarFn};
use varinc::setvalued::CompactSet;
use varinc::trajectory::{EndpointCost, EndpointSet, EndpointShape, Integrand, Problem};
use varinc::transcription::{affine_constraint, build_stage, PenaltySchedule};

pub const SCHEMA: &str = "varinc/1";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    #[serde(default)]
    pub problem: Option<ProblemSpec>,
    #[serde(default)]
    pub schedule: Option<PenaltySchedule>,
    #[serde(default)]
    pub variation: Option<VariationSpec>,
    #[serde(default)]
    pub variational: Option<VariationalSpec>,
    /// Named overrides, merged with `--tol NAME=VAL`.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    /// Directory the config was read from; relative paths resolve against it.
    #[serde(skip)]
    pub base: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default = "unit_horizon")]
    pub horizon: [f64; 2],
    pub f: FSpec,
    #[serde(default)]
    pub reference: Option<ReferenceSpec>,
    pub cost: CostSpec,
    #[serde(default)]
    pub running: Option<RunningSpec>,
    #[serde(default)]
    pub constraint: Option<ConstraintSpec>,
    pub endpoints: EndpointsSpec,
}

fn unit_horizon() -> [f64; 2] {
    [0.0, 1.0]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FSpec {
    Interval {
        lo: ScalarFn,
        hi: ScalarFn,
    },
    Ball {
        radius: ScalarFn,
        #[serde(default = "one")]
        dim: usize,
        #[serde(default = "sixteen")]
        sides: usize,
    },
    PolytopeTable {
        times: Vec<f64>,
        sets: Vec<CompactSet>,
    },
    /// Only meaningful when embedding the library; rejected here.
    Callback {},
}

fn one() -> usize {
    1
}

fn sixteen() -> usize {
    16
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    /// Tube radius around the reference arc.
    pub radius: f64,
    pub arc: ArcSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ArcSpec {
    /// Arc CSV `(t, x_1..x_n)`, linear interpolation.
    Csv(String),
    /// One function of t per coordinate, sampled on `cells` uniform cells.
    Fns {
        components: Vec<ScalarFn>,
        #[serde(default = "default_arc_cells")]
        cells: usize,
    },
}

fn default_arc_cells() -> usize {
    256
}

/// `G(x0, x1) = initial . x0 + terminal . x1 + weight |x1 - target|^2`
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    #[serde(default)]
    pub terminal: Option<Vec<f64>>,
    #[serde(default)]
    pub target: Option<TargetSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub point: Vec<f64>,
    pub weight: f64,
}

/// `L(t, x, v) = velocity_weight |v|^2`
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunningSpec {
    pub velocity_weight: f64,
}

/// `h(x) = max_k (c_k . x + b_k)`
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub branches: Vec<BranchSpec>,
    pub lip: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub c: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointsSpec {
    pub initial: ShapeSpec,
    pub terminal: ShapeSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Free,
    Point(Vec<f64>),
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationSpec {
    #[serde(default = "zero_deltas")]
    pub deltas: Vec<f64>,
    pub eps: Vec<f64>,
    #[serde(default = "three")]
    pub levels: usize,
}

fn zero_deltas() -> Vec<f64> {
    vec![0.0]
}

fn three() -> usize {
    3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum VariationalSpec {
    /// Convex integrand with a potential jump of size `delta` at t = 1/2.
    StepPotential {
        delta: f64,
        #[serde(default = "default_var_cells")]
        cells: usize,
    },
}

fn default_var_cells() -> usize {
    256
}

impl VariationalSpec {
    pub fn build(&self) -> (VariationalProblem, usize) {
        match self {
            VariationalSpec::StepPotential { delta, cells } => (step_potential(*delta), *cells),
        }
    }
}

/// Parses a config string. serde_json errors carry line and column.
pub fn parse(text: &str, base: &Path) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path.is_empty() || path == "." {
            anyhow!("config parse error: {inner}")
        } else {
            anyhow!("config parse error: field `{path}`: {inner}")
        }
    })?;
    if cfg.schema != SCHEMA {
        bail!("config parse error: unsupported schema {:?} (expected {SCHEMA:?})", cfg.schema);
    }
    if let Some(p) = &cfg.problem {
        if matches!(p.f, FSpec::Callback {}) {
            bail!("config parse error: field `problem.f`: the callback family is only available through the library API");
        }
    }
    for (k, v) in &cfg.tolerances {
        if !(*v > 0.0) {
            bail!("config parse error: tolerance `{k}` must be positive, got {v}");
        }
    }
    cfg.base = base.to_path_buf();
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse(&text, &base).with_context(|| format!("in {}", path.display()))
}

impl RunConfig {
    pub fn problem_spec(&self) -> Result<&ProblemSpec> {
        self.problem.as_ref().ok_or_else(|| anyhow!("config parse error: missing field `problem`"))
    }

    pub fn schedule(&self) -> Result<&PenaltySchedule> {
        let s = self.schedule.as_ref().ok_or_else(|| anyhow!("config parse error: missing field `schedule`"))?;
        s.validate().map_err(|e| anyhow!("config parse error: field `schedule`: {e}"))?;
        Ok(s)
    }

    pub fn problem(&self) -> Result<Problem> {
        build_problem(self.problem_spec()?, &self.base)
    }

    /// Checks the coupling `beta > 2 k_h alpha` for every schedule entry.
    pub fn check_schedule(&self, p: &Problem) -> Result<()> {
        let s = self.schedule()?;
        for i in 0..s.cells.len() {
            build_stage(p, s, i).map_err(|e| anyhow!("config parse error: field `schedule`, entry {i}: {e}"))?;
        }
        Ok(())
    }
}

fn horizon(spec: &ProblemSpec) -> Result<(f64, f64)> {
    let [s, t] = spec.horizon;
    if !(t > s) {
        bail!("config parse error: field `problem.horizon` must satisfy S < T");
    }
    Ok((s, t))
}

pub fn build_multifunction(spec: &ProblemSpec, base: &Path) -> Result<Multifunction> {
    let hz = horizon(spec)?;
    let f = match &spec.f {
        FSpec::Interval { lo, hi } => Multifunction::interval(lo.clone(), hi.clone(), hz),
        FSpec::Ball { radius, dim, sides } => Multifunction::ball(radius.clone(), *dim, *sides, hz)?,
        FSpec::PolytopeTable { times, sets } => Multifunction::polytope_table(times.clone(), sets.clone(), hz)?,
        FSpec::Callback {} => bail!("callback multifunctions are not available from config files"),
    };
    Ok(match &spec.reference {
        Some(r) => f.with_locality(r.radius, load_arc_spec(&r.arc, hz, base)?),
        None => f,
    })
}

fn load_arc_spec(a: &ArcSpec, hz: (f64, f64), base: &Path) -> Result<Arc> {
    match a {
        ArcSpec::Csv(path) => crate::output::read_arc_csv(&base.join(path)),
        ArcSpec::Fns { components, cells } => {
            let comps = components.clone();
            Ok(Arc::sample(hz.0, hz.1, *cells, Interp::Linear, move |t| comps.iter().map(|c| c.eval(t)).collect()))
        }
    }
}

fn shape(s: &ShapeSpec) -> EndpointShape {
    match s {
        ShapeSpec::Free => EndpointShape::Free,
        ShapeSpec::Point(p) => EndpointShape::Point(p.clone()),
        ShapeSpec::Ball { center, radius } => EndpointShape::Ball { center: center.clone(), radius: *radius },
    }
}

pub fn build_problem(spec: &ProblemSpec, base: &Path) -> Result<Problem> {
    let f = build_multifunction(spec, base)?;
    let n = f.dim;
    let dim_ok = |v: &Option<Vec<f64>>, name: &str| -> Result<Vec<f64>> {
        match v {
            Some(v) if v.len() != n => bail!("config parse error: field `problem.cost.{name}` has length {} (dimension {n})", v.len()),
            Some(v) => Ok(v.clone()),
            None => Ok(vec![0.0; n]),
        }
    };
    let c0 = dim_ok(&spec.cost.initial, "initial")?;
    let c1 = dim_ok(&spec.cost.terminal, "terminal")?;
    let g = match &spec.cost.target {
        None => EndpointCost::linear(c0, c1),
        Some(tg) => {
            let (pt, w) = (tg.point.clone(), tg.weight);
            let (pt2, d0, d1) = (pt.clone(), c0.clone(), c1.clone());
            EndpointCost::new(move |x0, x1| {
                let lin: f64 = c0.iter().zip(x0).map(|(a, b)| a * b).sum::<f64>()
                    + c1.iter().zip(x1).map(|(a, b)| a * b).sum::<f64>();
                lin + w * x1.iter().zip(&pt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            })
            .with_gradient(move |_, x1| {
                let g1 = d1.iter().zip(x1.iter().zip(&pt2)).map(|(c, (a, b))| c + 2.0 * w * (a - b)).collect();
                (d0.clone(), g1)
            })
        }
    };
    let endpoints = EndpointSet { initial: shape(&spec.endpoints.initial), terminal: shape(&spec.endpoints.terminal) };
    let mut p = Problem::new(f, g, endpoints);
    if let Some(r) = &spec.running {
        let w = r.velocity_weight;
        p = p.with_integrand(
            Integrand::new(move |_, _, v| w * v.iter().map(|a| a * a).sum::<f64>())
                .with_grad_x(|_, x, _| vec![0.0; x.len()])
                .with_grad_v(move |_, _, v| v.iter().map(|a| 2.0 * w * a).collect()),
        );
    }
    if let Some(c) = &spec.constraint {
        let br: Vec<(Vec<f64>, f64)> = c.branches.iter().map(|b| (b.c.clone(), b.b)).collect();
        p = p.with_constraint(affine_constraint(&br, c.lip));
    }
    Ok(p)
}
