use anyhow::{anyhow, bail, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;
use varinc::calcvar::{lipschitz_certificate, solve_variational, CertificateOptions, SolveVarOptions};
use varinc::conditions::{check_nondegeneracy, check_theorem1, ConditionReport, ConditionTolerances, NondegeneracyReport};
use varinc::hamiltonian::{bv_verdict, trace, BvReport, CostatePath, BV_TOL_ANALYTIC};
use varinc::multifun::LimitOptions;
use varinc::transcription::{build_stage, run_pipeline, JumpCheck, KktOptions, PipelineOptions, SolveMode};
use varinc::trajectory::{FeasibilityReport, FEAS_TOL};
use varinc::variation::{cumulative_variation, extrapolate_halving, VariationOptions};
use varinc::Error;

use crate::config::RunConfig;
use crate::output::{write_arc_csv, write_json, write_staircase_csv, write_trace_csv, MultiplierDump};

/// Default trace-jump slack for solver runs.
pub const JUMP_TOL: f64 = 1e-6;

const KNOWN: &[&str] = &[
    "nontriviality",
    "adjoint",
    "weierstrass",
    "transversality",
    "support",
    "face",
    "kkt",
    "jump",
    "feas",
    "bv",
    "eta",
    "ce",
    "bound",
    "drift",
];

/// Config tolerances with command-line overrides applied on top.
#[derive(Debug, Clone, Default)]
pub struct Tolerances(BTreeMap<String, f64>);

impl Tolerances {
    pub fn merge(cfg: &RunConfig, overrides: &[(String, f64)]) -> Result<Self> {
        let mut map = cfg.tolerances.clone();
        for (k, v) in overrides {
            map.insert(k.clone(), *v);
        }
        for (k, v) in &map {
            if !KNOWN.contains(&k.as_str()) {
                bail!("unknown tolerance `{k}` (known: {})", KNOWN.join(", "));
            }
            if !(*v > 0.0) {
                bail!("tolerance `{k}` must be positive, got {v}");
            }
        }
        Ok(Self(map))
    }

    fn get(&self, name: &str, default: f64) -> f64 {
        self.0.get(name).copied().unwrap_or(default)
    }

    fn conditions(&self, base: ConditionTolerances) -> ConditionTolerances {
        ConditionTolerances {
            nontriviality: self.get("nontriviality", base.nontriviality),
            adjoint: self.get("adjoint", base.adjoint),
            weierstrass: self.get("weierstrass", base.weierstrass),
            transversality: self.get("transversality", base.transversality),
            support: self.get("support", base.support),
            face: self.get("face", base.face),
        }
    }

    fn variation(&self) -> VariationOptions {
        let d = VariationOptions::default();
        VariationOptions { tol_eta: self.get("eta", d.tol_eta), ..d }
    }
}

fn ensure_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| anyhow!("creating {}: {e}", out.display()))
}

#[derive(Serialize)]
struct StaircaseEntry {
    delta: f64,
    eps: f64,
    level: usize,
    total: f64,
    file: String,
}

#[derive(Serialize)]
struct Extrapolated {
    delta: f64,
    limit: Option<f64>,
}

#[derive(Serialize)]
struct VariationSummary {
    staircases: Vec<StaircaseEntry>,
    extrapolated: Vec<Extrapolated>,
}

/// Staircases of eta over the (delta, eps) grid plus a halving extrapolation
/// of eta(T) per delta.
pub fn variation(cfg: &RunConfig, out: &Path, levels: Option<usize>, tol: &Tolerances) -> Result<bool> {
    let spec = cfg.variation.as_ref().ok_or_else(|| anyhow!("config parse error: missing field `variation`"))?;
    if spec.eps.is_empty() || spec.eps.iter().any(|e| !(*e > 0.0)) {
        bail!("config parse error: field `variation.eps` needs positive entries");
    }
    let f = crate::config::build_multifunction(cfg.problem_spec()?, &cfg.base)?;
    let levels = levels.unwrap_or(spec.levels);
    let opts = tol.variation();
    ensure_dir(out)?;
    let mut summary = VariationSummary { staircases: vec![], extrapolated: vec![] };
    for (i, &delta) in spec.deltas.iter().enumerate() {
        let mut totals = Vec::new();
        for (k, &eps) in spec.eps.iter().enumerate() {
            let eta = cumulative_variation(&f, delta, eps, levels, &opts)?;
            let file = format!("staircase_d{i}_e{k}.csv");
            write_staircase_csv(&out.join(&file), &eta)?;
            totals.push(eta.total());
            summary.staircases.push(StaircaseEntry { delta, eps, level: eta.level, total: eta.total(), file });
        }
        summary.extrapolated.push(Extrapolated { delta, limit: extrapolate_halving(&totals) });
    }
    write_json(&out.join("variation_summary.json"), &summary)?;
    Ok(true)
}

#[derive(Serialize)]
struct StageSummary {
    index: usize,
    cells: usize,
    k_pen: f64,
    beta: f64,
    alpha: f64,
    cost: f64,
    comparison_cost: Option<f64>,
    mode: SolveMode,
    sweeps: usize,
    lambda: f64,
    mu_total: f64,
    kkt_residual: f64,
    normalization_residual: f64,
    min_jump_margin: Option<f64>,
    feasibility: FeasibilityReport,
    pass: bool,
}

/// Pipeline over the schedule; writes arc, multipliers and trace per stage.
pub fn solve(cfg: &RunConfig, out: &Path, tol: &Tolerances) -> Result<bool> {
    let p = cfg.problem()?;
    cfg.check_schedule(&p)?;
    let sched = cfg.schedule()?;
    let opts = PipelineOptions {
        kkt: KktOptions { kkt_tol: tol.get("kkt", KktOptions::default().kkt_tol) },
        variation: tol.variation(),
        ..Default::default()
    };
    let runs = run_pipeline(&p, sched, &opts)?;
    ensure_dir(out)?;
    let jump_tol = tol.get("jump", JUMP_TOL);
    let feas_tol = tol.get("feas", FEAS_TOL);
    let mut stages = Vec::new();
    let mut all = true;
    for (i, r) in runs.iter().enumerate() {
        write_arc_csv(&out.join(format!("arc_{i}.csv")), &r.solution.x)?;
        write_json(&out.join(format!("multipliers_{i}.json")), &MultiplierDump::new(&r.solution.x, &r.multipliers))?;
        write_trace_csv(&out.join(format!("trace_{i}.csv")), &r.multipliers, &r.jumps)?;
        let feasibility = if feas_tol == FEAS_TOL {
            r.feasibility.clone()
        } else {
            varinc::trajectory::feasibility_report(&r.stage.view_problem(), &r.solution.x, feas_tol)?
        };
        let min_jump = r.jumps.iter().map(|j| j.margin).reduce(f64::min);
        // penalty solutions may exceed h <= 0 by O(beta), so only the
        // dynamics and endpoints enter the verdict
        let pass = min_jump.map_or(true, |m| m >= -jump_tol)
            && feasibility.max_defect <= feas_tol
            && feasibility.endpoint_residual <= feas_tol;
        all &= pass;
        let m = &r.multipliers;
        stages.push(StageSummary {
            index: i,
            cells: r.stage.cells(),
            k_pen: r.stage.k_pen,
            beta: r.stage.beta,
            alpha: r.stage.alpha,
            cost: r.solution.cost,
            comparison_cost: r.comparison_cost,
            mode: r.solution.mode,
            sweeps: r.solution.sweeps,
            lambda: m.lambda,
            mu_total: m.mu_total(),
            kkt_residual: m.kkt_residual,
            normalization_residual: m.normalization_residual,
            min_jump_margin: min_jump,
            feasibility,
            pass,
        });
    }
    write_json(&out.join("solve_summary.json"), &stages)?;
    Ok(all)
}

#[derive(Serialize)]
struct BvSection {
    /// "stage" (per-knot jump estimate) or "pairs" (all interior pairs).
    mode: &'static str,
    min_margin: f64,
    tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pairs: Option<BvReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    jumps: Vec<JumpCheck>,
    pass: bool,
}

#[derive(Serialize)]
struct CheckReport {
    tolerance_preset: &'static str,
    conditions: ConditionReport,
    bv: BvSection,
    nondegeneracy: Option<NondegeneracyReport>,
    /// `lambda + mu((S, T]) > 0`, required when the inward-pointing probe holds.
    inward_nondegeneracy: Option<bool>,
    pass: bool,
}

/// Necessary conditions, trace bound and (when applicable) nondegeneracy for
/// a multiplier file. Stage multipliers are checked against their stage.
pub fn check(cfg: &RunConfig, multipliers: &Path, out: Option<&Path>, tol: &Tolerances) -> Result<bool> {
    let dump = MultiplierDump::load(multipliers)?;
    let p0 = cfg.problem()?;
    let x = dump.arc()?;
    let (report_conditions, bv, m, preset) = match &dump.stage {
        Some(info) => {
            cfg.check_schedule(&p0)?;
            let sched = cfg.schedule()?;
            let i = (0..sched.cells.len())
                .find(|&i| sched.cells[i] == info.cells && sched.weights[i] == info.k_pen)
                .ok_or_else(|| anyhow!("multipliers belong to a stage (N = {}, K = {}) not in the schedule", info.cells, info.k_pen))?;
            let (sp, _) = build_stage(&p0, sched, i)?;
            let view = sp.view_problem();
            let m = dump.multipliers(&view)?;
            let rep = check_theorem1(&view, &x, &m, &tol.conditions(ConditionTolerances::solver()))?;
            let jumps = varinc::transcription::stage_jumps(&sp, &x, &m, &tol.variation())?;
            let jt = tol.get("jump", JUMP_TOL);
            let min_margin = jumps.iter().map(|j| j.margin).fold(f64::INFINITY, f64::min);
            let bv = BvSection { mode: "stage", min_margin, tolerance: jt, pairs: None, pass: min_margin >= -jt, jumps };
            (rep, bv, m, "solver")
        }
        None => {
            let m = dump.multipliers(&p0)?;
            let rep = check_theorem1(&p0, &x, &m, &tol.conditions(ConditionTolerances::analytic()))?;
            let tr = trace(&p0.f, p0.l.as_ref(), m.lambda, &x, &m, &LimitOptions::default())?;
            let eps = x.grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            let eta = cumulative_variation(&p0.f, 0.0, eps, 2, &tol.variation())?.normalize();
            let bt = tol.get("bv", BV_TOL_ANALYTIC);
            // the config families only allow time-independent running costs
            let r = bv_verdict(&tr, &eta, None, m.q_sup_norm(), m.lambda, bt);
            let bv = BvSection { mode: "pairs", min_margin: r.min_margin, tolerance: bt, pass: r.pass, pairs: Some(r), jumps: vec![] };
            (rep, bv, m, "analytic")
        }
    };
    let nd = match check_nondegeneracy(&p0, &x, &m) {
        Ok(r) => Some(r),
        Err(Error::ProblemShape(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let inward_nondegeneracy = nd.as_ref().filter(|r| r.inward_pointing).map(|r| r.nondegenerate);
    let pass = report_conditions.pass() && bv.pass && inward_nondegeneracy.unwrap_or(true);
    let report = CheckReport { tolerance_preset: preset, conditions: report_conditions, bv, nondegeneracy: nd, inward_nondegeneracy, pass };
    match out {
        Some(dir) => {
            ensure_dir(dir)?;
            write_json(&dir.join("check_report.json"), &report)?;
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    if !pass {
        let mut why = Vec::new();
        if !report.conditions.pass() {
            why.push(format!("conditions {:?}", report.conditions.verdicts));
        }
        if !report.bv.pass {
            why.push(format!("trace bound margin {:e}", report.bv.min_margin));
        }
        if inward_nondegeneracy == Some(false) {
            let v = report.nondegeneracy.as_ref().map_or(0.0, |r| r.value);
            why.push(format!("nondegeneracy fails: lambda + mu((S,T]) = {v}"));
        }
        eprintln!("check failed: {}", why.join("; "));
    }
    Ok(pass)
}

#[derive(Serialize)]
struct CertificateSummary {
    k1: f64,
    k2: f64,
    k3: f64,
    #[serde(rename = "K")]
    k: f64,
    #[serde(rename = "V_cap")]
    v_cap: f64,
    sup_slope: f64,
    verdict: bool,
}

/// Solves the variational problem and certifies the Lipschitz bound.
pub fn certify(cfg: &RunConfig, out: &Path, levels: Option<usize>, tol: &Tolerances) -> Result<bool> {
    let spec = cfg.variational.as_ref().ok_or_else(|| anyhow!("config parse error: missing field `variational`"))?;
    let (v, cells) = spec.build();
    let d = CertificateOptions::default();
    let opts = CertificateOptions {
        levels: levels.map_or(d.levels, |n| [n, 2 * n, 4 * n]),
        ce_tol: tol.get("ce", d.ce_tol),
        bound_tol: tol.get("bound", d.bound_tol),
        drift_tol: tol.get("drift", d.drift_tol),
    };
    let x = solve_variational(&v, cells, &SolveVarOptions::default())?;
    ensure_dir(out)?;
    write_arc_csv(&out.join("candidate.csv"), &x)?;
    let c = match lipschitz_certificate(&v, &x, &opts) {
        Ok(c) => c,
        Err(e @ Error::EulerResidual { .. }) => {
            eprintln!("certificate refused: {e}");
            return Ok(false);
        }
        Err(e) => return Err(e.into()),
    };
    let summary = CertificateSummary {
        k1: c.k1,
        k2: c.k2,
        k3: c.k3,
        k: c.k_bv,
        v_cap: c.v_cap,
        sup_slope: c.sup_slope,
        verdict: c.verdict,
    };
    write_json(&out.join("certificate.json"), &summary)?;
    write_json(&out.join("certificate_full.json"), &c)?;
    Ok(c.verdict)
}

pub fn parse_tol(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VAL, got {s:?}"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("tolerance {k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}
