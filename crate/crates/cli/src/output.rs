//! File formats: CSV for arcs, staircases and traces; JSON for reports.
//!
//! Floats are written with Rust's shortest round-trip formatting, so arcs
//! read back bit-exactly.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;
use varinc::conditions::assemble;
use varinc::multifun::{Arc, Interp};
use varinc::trajectory::Problem;
use varinc::transcription::{Atom, JumpCheck, MultiplierSet, StageInfo};
use varinc::variation::CumulativeVariation;

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x}")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn write_arc_csv(path: &Path, x: &Arc) -> Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=x.dim()).map(|i| format!("x_{i}")));
    let rows: Vec<Vec<String>> = x
        .grid
        .iter()
        .zip(&x.values)
        .map(|(t, v)| std::iter::once(num(*t)).chain(v.iter().map(|a| num(*a))).collect())
        .collect();
    write_rows(path, &header, &rows)
}

pub fn read_arc_csv(path: &Path) -> Result<Arc> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading arc {}", path.display()))?;
    let mut grid = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let parsed: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| anyhow!("{}: line {line}: {e}", path.display()))?;
        if parsed.len() < 2 {
            bail!("{}: line {line}: expected columns t, x_1..x_n", path.display());
        }
        grid.push(parsed[0]);
        values.push(parsed[1..].to_vec());
    }
    Arc::new(grid, values, Interp::Linear).map_err(|e| anyhow!("{}: {e}", path.display()))
}

/// Staircase rows `(t, eta, delta, eps, level)` at the knots.
pub fn write_staircase_csv(path: &Path, eta: &CumulativeVariation) -> Result<()> {
    let header: Vec<String> = ["t", "eta", "delta", "eps", "level"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = eta
        .knots
        .iter()
        .zip(&eta.values)
        .map(|(t, v)| vec![num(*t), num(*v), num(eta.delta), num(eta.eps), eta.level.to_string()])
        .collect();
    write_rows(path, &header, &rows)
}

/// Trace rows `(t, r, eta_F_star, eta_L_star, bound_margin)` at the knots;
/// the eta columns accumulate the per-cell lower estimates, the margin is
/// empty at the two endpoints.
pub fn write_trace_csv(path: &Path, m: &MultiplierSet, jumps: &[JumpCheck]) -> Result<()> {
    let header: Vec<String> =
        ["t", "r", "eta_F_star", "eta_L_star", "bound_margin"].iter().map(|s| s.to_string()).collect();
    let grid = &m.r.grid;
    let n = grid.len();
    let (mut ef, mut el) = (0.0, 0.0);
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let mut margin = String::new();
        if let Some(j) = jumps.iter().find(|j| j.t == grid[k]) {
            ef += j.eta_f;
            el += j.eta_l;
            margin = num(j.margin);
        }
        rows.push(vec![num(grid[k]), num(m.r.values[k][0]), num(ef), num(el), margin]);
    }
    write_rows(path, &header, &rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomDump {
    pub t: f64,
    pub mass: f64,
}

/// Multiplier file. `t` and `x` carry the arc the multipliers belong to.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierDump {
    pub schema: String,
    pub lambda: f64,
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub mu_atoms: Vec<AtomDump>,
    pub mu_density: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    pub r: Vec<f64>,
    pub normalization_residual: f64,
    #[serde(default)]
    pub kkt_residual: f64,
    #[serde(default)]
    pub stage: Option<StageInfo>,
}

impl MultiplierDump {
    pub fn new(x: &Arc, m: &MultiplierSet) -> Self {
        Self {
            schema: crate::config::SCHEMA.to_string(),
            lambda: m.lambda,
            t: x.grid.clone(),
            x: x.values.clone(),
            p: m.p.values.clone(),
            mu_atoms: m.atoms.iter().map(|a| AtomDump { t: a.t, mass: a.mass }).collect(),
            mu_density: m.mu_density(),
            gamma: m.atoms.iter().map(|a| a.gamma.clone()).collect(),
            r: m.r.values.iter().map(|v| v[0]).collect(),
            normalization_residual: m.normalization_residual,
            kkt_residual: m.kkt_residual,
            stage: m.stage.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let d: Self =
            serde_json::from_str(&text).map_err(|e| anyhow!("multiplier file parse error in {}: {e}", path.display()))?;
        if d.gamma.len() != d.mu_atoms.len() {
            bail!("multiplier file parse error: `gamma` needs one entry per atom");
        }
        if d.p.len() != d.t.len() || d.x.len() != d.t.len() {
            bail!("multiplier file parse error: `p` and `x` need one row per entry of `t`");
        }
        Ok(d)
    }

    pub fn arc(&self) -> Result<Arc> {
        Ok(Arc::new(self.t.clone(), self.x.clone(), Interp::Linear)?)
    }

    /// Rebuilds the multiplier set; the trace is recomputed against `p`.
    pub fn multipliers(&self, p: &Problem) -> Result<MultiplierSet> {
        let atoms = self
            .mu_atoms
            .iter()
            .zip(&self.gamma)
            .map(|(a, g)| Atom { t: a.t, mass: a.mass, gamma: g.clone() })
            .collect();
        let mut m = assemble(p, &self.arc()?, self.p.clone(), self.lambda, atoms)?;
        m.kkt_residual = self.kkt_residual;
        m.stage = self.stage.clone();
        Ok(m)
    }
}
