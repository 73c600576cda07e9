//! Scenario configuration (flat `key = value` files), orchestration of
//! `simulate`, `verify` and `sweep`, and the CSV/JSON outputs.

use crate::dynamics::{ChiMode, InitSpec, Model};
use crate::energy::{annotate, gronwall_check, total_energy, EnergyReport, GronwallStatus};
use crate::error::{Error, Result};
use crate::fields::FdOrder;
use crate::geometry::{conformal_factor_integrals, AProfile, LapseProfile, SProfile, WarpedSpacetime};
use crate::target::{TargetChart, TargetKind, WarpFamily};
use crate::verify::{check_variational_consistency, check_variational_mutation, run_battery, CheckResult};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub spacetime: WarpedSpacetime,
    pub chart: TargetChart,
    pub npts: usize,
    pub fd_order: FdOrder,
    pub t_end: f64,
    pub cfl: f64,
    pub dt_max: f64,
    pub init: InitSpec,
    pub output_path: PathBuf,
    pub output_stride: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "default".into(),
            spacetime: WarpedSpacetime::de_sitter(3),
            chart: TargetChart::sphere(),
            npts: 64,
            fd_order: FdOrder::Four,
            t_end: 10.0,
            cfl: 0.4,
            dt_max: 0.05,
            init: InitSpec::default(),
            output_path: PathBuf::from("output"),
            output_stride: 10,
        }
    }
}

const KEYS: &[&str] = &[
    "scenario.name",
    "spacetime.n",
    "s.family",
    "s.value",
    "s.lambda",
    "s.p",
    "a.family",
    "a.value",
    "a.mu",
    "a.omega",
    "N.family",
    "N.beta",
    "target.kind",
    "target.f",
    "target.chart_radius",
    "grid.npts",
    "grid.fd_order",
    "run.t_end",
    "run.cfl",
    "run.dt_max",
    "init.epsilon",
    "init.seed",
    "init.mode_cutoff",
    "init.spinor",
    "init.chi",
    "output.path",
    "output.stride",
];

fn num(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Validation(format!("{key}: expected a number, got '{v}'")))
}

fn int(key: &str, v: &str) -> Result<u64> {
    v.parse::<u64>()
        .map_err(|_| Error::Validation(format!("{key}: expected a nonnegative integer, got '{v}'")))
}

fn get<'a>(kv: &'a [(String, String, usize)], key: &str) -> Option<&'a str> {
    kv.iter().rev().find(|(k, _, _)| k == key).map(|(_, v, _)| v.as_str())
}

fn num_or(kv: &[(String, String, usize)], key: &str, default: f64) -> Result<f64> {
    get(kv, key).map(|v| num(key, v)).transpose().map(|x| x.unwrap_or(default))
}

fn parse_warp(v: &str) -> Result<WarpFamily> {
    let (id, param) = match v.split_once(':') {
        Some((a, b)) => (a.trim(), Some(b.trim())),
        None => (v.trim(), None),
    };
    match id {
        "sinh" => Ok(WarpFamily::Sinh),
        "cubic" => {
            let c = param.map(|p| num("target.f", p)).transpose()?.unwrap_or(1.0);
            if c < 0.0 {
                return Err(Error::Validation("target.f: cubic coefficient must be >= 0".into()));
            }
            Ok(WarpFamily::Cubic { c })
        }
        _ => Err(Error::Validation(format!("target.f: unknown family '{v}' (sinh | cubic[:c])"))),
    }
}

impl ScenarioConfig {
    /// Render as a config file that [`parse_config`] maps back to `self`.
    pub fn to_text(&self) -> String {
        let st = &self.spacetime;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("scenario.name", self.name.clone());
        kv("spacetime.n", st.n.to_string());
        match st.s {
            SProfile::Const(v) => {
                kv("s.family", "const".into());
                kv("s.value", format!("{v:?}"));
            }
            SProfile::Exp { lambda } => {
                kv("s.family", "exp".into());
                kv("s.lambda", format!("{lambda:?}"));
            }
            SProfile::Power { p } => {
                kv("s.family", "power".into());
                kv("s.p", format!("{p:?}"));
            }
        }
        match st.a {
            AProfile::Const(v) => {
                kv("a.family", "const".into());
                kv("a.value", format!("{v:?}"));
            }
            AProfile::Osc { mu, omega } => {
                kv("a.family", "osc".into());
                kv("a.mu", format!("{mu:?}"));
                kv("a.omega", format!("{omega:?}"));
            }
            AProfile::Exp { .. } => kv("a.family", "exp".into()),
        }
        match st.lapse {
            LapseProfile::One => kv("N.family", "const".into()),
            LapseProfile::Cos { beta } => {
                kv("N.family", "cos".into());
                kv("N.beta", format!("{beta:?}"));
            }
        }
        match self.chart.kind {
            TargetKind::Flat => kv("target.kind", "flat".into()),
            TargetKind::SphereStereographic => kv("target.kind", "sphere".into()),
            TargetKind::WarpedSurface(f) => {
                kv("target.kind", "warped_surface".into());
                match f {
                    WarpFamily::Sinh => kv("target.f", "sinh".into()),
                    WarpFamily::Cubic { c } => kv("target.f", format!("cubic:{c:?}")),
                }
            }
        }
        kv("target.chart_radius", format!("{:?}", self.chart.chart_radius));
        kv("grid.npts", self.npts.to_string());
        kv("grid.fd_order", self.fd_order.as_int().to_string());
        kv("run.t_end", format!("{:?}", self.t_end));
        kv("run.cfl", format!("{:?}", self.cfl));
        kv("run.dt_max", format!("{:?}", self.dt_max));
        kv("init.epsilon", format!("{:?}", self.init.epsilon));
        kv("init.seed", self.init.seed.to_string());
        kv("init.mode_cutoff", self.init.mode_cutoff.to_string());
        kv("init.spinor", if self.init.spinor { "on" } else { "off" }.into());
        kv("init.chi", match self.init.chi_mode {
            ChiMode::Discrete => "discrete",
            ChiMode::Continuum => "continuum",
        }
        .into());
        kv("output.path", self.output_path.display().to_string());
        kv("output.stride", self.output_stride.to_string());
        out
    }
}

/// Parse and validate a config. Omitted keys take the documented defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut kv: Vec<(String, String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected 'key = value', got '{line}'") })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::Parse { line: i + 1, msg: "empty key or value".into() });
        }
        if !KEYS.contains(&k) {
            return Err(Error::Parse { line: i + 1, msg: format!("unknown key '{k}'") });
        }
        kv.push((k.to_string(), v.to_string(), i + 1));
    }
    let mut cfg = ScenarioConfig::default();
    if let Some(v) = get(&kv, "scenario.name") {
        cfg.name = v.to_string();
    }
    let n = get(&kv, "spacetime.n").map(|v| int("spacetime.n", v)).transpose()?.unwrap_or(3) as usize;
    if n != 2 && n != 3 {
        return Err(Error::Validation(format!("spacetime.n must be 2 or 3, got {n}")));
    }
    let s = match get(&kv, "s.family").unwrap_or("exp") {
        "const" => SProfile::Const(num_or(&kv, "s.value", 1.0)?),
        "exp" => SProfile::Exp { lambda: num_or(&kv, "s.lambda", 1.0)? },
        "power" => SProfile::Power { p: num_or(&kv, "s.p", 2.0)? },
        other => return Err(Error::Validation(format!("s.family: unknown family '{other}' (const | exp | power)"))),
    };
    let a = match get(&kv, "a.family").unwrap_or("const") {
        "const" => AProfile::Const(num_or(&kv, "a.value", 1.0)?),
        "osc" => {
            let mu = num_or(&kv, "a.mu", 0.1)?;
            if mu.abs() >= 1.0 {
                return Err(Error::Validation("a.mu must satisfy |a.mu| < 1".into()));
            }
            AProfile::Osc { mu, omega: num_or(&kv, "a.omega", 1.0)? }
        }
        other => return Err(Error::Validation(format!("a.family: unknown family '{other}' (const | osc)"))),
    };
    let lapse = match get(&kv, "N.family").unwrap_or("const") {
        "const" => LapseProfile::One,
        "cos" => {
            let beta = num_or(&kv, "N.beta", 0.1)?;
            if beta.abs() >= 1.0 {
                return Err(Error::Validation("N.beta must satisfy |N.beta| < 1".into()));
            }
            LapseProfile::Cos { beta }
        }
        other => return Err(Error::Validation(format!("N.family: unknown family '{other}' (const | cos)"))),
    };
    cfg.spacetime = WarpedSpacetime::new(n, s, a, lapse).map_err(|e| Error::Validation(e.to_string()))?;

    let kind = match get(&kv, "target.kind").unwrap_or("sphere") {
        "flat" => TargetKind::Flat,
        "sphere" => TargetKind::SphereStereographic,
        "warped_surface" => TargetKind::WarpedSurface(parse_warp(get(&kv, "target.f").unwrap_or("cubic:1"))?),
        other => {
            return Err(Error::Validation(format!("target.kind: unknown target '{other}' (flat | sphere | warped_surface)")))
        }
    };
    let radius = num_or(&kv, "target.chart_radius", 10.0)?;
    if !(radius > 0.0) {
        return Err(Error::Validation("target.chart_radius must be positive".into()));
    }
    cfg.chart = TargetChart { kind, chart_radius: radius };

    if let Some(v) = get(&kv, "grid.npts") {
        cfg.npts = int("grid.npts", v)? as usize;
    }
    if cfg.npts % 2 != 0 {
        return Err(Error::Validation("grid.npts must be even".into()));
    }
    if cfg.npts < 8 {
        return Err(Error::Validation("grid.npts must be >= 8".into()));
    }
    if let Some(v) = get(&kv, "grid.fd_order") {
        cfg.fd_order = FdOrder::from_int(int("grid.fd_order", v)? as usize)?;
    }
    cfg.t_end = num_or(&kv, "run.t_end", cfg.t_end)?;
    if !(cfg.t_end > 0.0) {
        return Err(Error::Validation("run.t_end must be positive".into()));
    }
    cfg.cfl = num_or(&kv, "run.cfl", cfg.cfl)?;
    if !(cfg.cfl > 0.0 && cfg.cfl <= 1.0) {
        return Err(Error::Validation("run.cfl must be in (0, 1]".into()));
    }
    cfg.dt_max = num_or(&kv, "run.dt_max", cfg.dt_max)?;
    if !(cfg.dt_max > 0.0) {
        return Err(Error::Validation("run.dt_max must be positive".into()));
    }
    cfg.init.epsilon = num_or(&kv, "init.epsilon", cfg.init.epsilon)?;
    if !(cfg.init.epsilon > 0.0) {
        return Err(Error::Validation("init.epsilon must be > 0".into()));
    }
    if let Some(v) = get(&kv, "init.seed") {
        cfg.init.seed = int("init.seed", v)?;
    }
    if let Some(v) = get(&kv, "init.mode_cutoff") {
        cfg.init.mode_cutoff = int("init.mode_cutoff", v)? as usize;
        if cfg.init.mode_cutoff == 0 || cfg.init.mode_cutoff >= cfg.npts / 2 {
            return Err(Error::Validation("init.mode_cutoff must be in 1..npts/2".into()));
        }
    }
    cfg.init.spinor = match get(&kv, "init.spinor").unwrap_or("on") {
        "on" | "true" => true,
        "off" | "false" => false,
        other => return Err(Error::Validation(format!("init.spinor: expected on | off, got '{other}'"))),
    };
    cfg.init.chi_mode = match get(&kv, "init.chi").unwrap_or("discrete") {
        "discrete" => ChiMode::Discrete,
        "continuum" => ChiMode::Continuum,
        other => return Err(Error::Validation(format!("init.chi: expected discrete | continuum, got '{other}'"))),
    };
    if let Some(v) = get(&kv, "output.path") {
        cfg.output_path = PathBuf::from(v);
    }
    if let Some(v) = get(&kv, "output.stride") {
        cfg.output_stride = int("output.stride", v)? as usize;
        if cfg.output_stride == 0 {
            return Err(Error::Validation("output.stride must be >= 1".into()));
        }
    }
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallSummary {
    pub status: String,
    pub c_hat: Option<f64>,
    pub max_ratio: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub completed: bool,
    pub exit_code: i32,
    pub error: Option<String>,
    pub steps: usize,
    pub last_good_t: f64,
    pub phi: f64,
    pub outside_hypotheses: bool,
    pub gronwall: GronwallSummary,
    pub max_chart_radius: f64,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub reports: Vec<EnergyReport>,
}

pub fn csv_header(r: usize) -> String {
    let mut h = String::from("t");
    for k in 0..=r {
        let _ = write!(h, ",E_map_{k}");
    }
    for k in 0..r {
        let _ = write!(h, ",E_spin_{k}");
    }
    h.push_str(",psi_l2,F_total,dirac_res,bound_value,bound_ok");
    h
}

pub fn csv_rows(reports: &[EnergyReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let _ = write!(out, "{:.16e}", r.t);
        for e in r.e_map.iter().chain(&r.e_spin) {
            let _ = write!(out, ",{e:.16e}");
        }
        let _ = writeln!(
            out,
            ",{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.psi_l2, r.f_total, r.dirac_res, r.bound_value, r.bound_ok
        );
    }
    out
}

/// Run one scenario and write `series.csv` and `summary.json` under
/// `cfg.output_path`. Aborts (chart exit, NaN) are reported in the summary
/// with exit code 2; artifacts cover the samples up to the last good step.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutcome> {
    let clock = Instant::now();
    cfg.spacetime.validate_horizon(cfg.t_end, 1000)?;
    let mut model = Model::new(cfg.spacetime, cfg.chart, cfg.npts, cfg.fd_order)?;
    model.cfl = cfg.cfl;
    let r = model.regularity();
    let integrals = conformal_factor_integrals(&cfg.spacetime, cfg.t_end)?;
    let mut reports = Vec::new();
    let mut steps = 0usize;
    let mut last_good_t = 0.0;
    let mut max_radius = 0.0f64;
    let result: Result<()> = (|| {
        let state = model.make_initial_data(&cfg.init)?;
        max_radius = state.max_chart_distance(&cfg.chart);
        reports.push(total_energy(&model, &state, r)?);
        model.evolve(state, cfg.t_end, cfg.dt_max, |s, k| {
            steps = k;
            last_good_t = s.t;
            max_radius = max_radius.max(s.max_chart_distance(&cfg.chart));
            if k % cfg.output_stride == 0 {
                reports.push(total_energy(&model, s, r)?);
            }
            Ok(())
        })?;
        Ok(())
    })();
    let error = result.err();
    let series: Vec<(f64, f64)> = reports.iter().map(|x| (x.t, x.f_total)).collect();
    let gronwall = if series.is_empty() {
        GronwallSummary { status: "none".into(), c_hat: None, max_ratio: None, note: None }
    } else {
        match gronwall_check(&series, &cfg.spacetime, None) {
            Ok(v) => {
                annotate(&mut reports, &v);
                let status = match v.status {
                    GronwallStatus::Pass => "pass",
                    GronwallStatus::Fail => "fail",
                    GronwallStatus::OutsideHypotheses => "outside_hypotheses",
                };
                let note = (v.status == GronwallStatus::OutsideHypotheses)
                    .then(|| "integral of 1/s diverges; bound reported but not judged".to_string());
                GronwallSummary { status: status.into(), c_hat: Some(v.c_hat), max_ratio: Some(v.max_ratio), note }
            }
            Err(e) => GronwallSummary { status: "refused".into(), c_hat: None, max_ratio: None, note: Some(e.to_string()) },
        }
    };
    let summary = RunSummary {
        scenario: cfg.name.clone(),
        completed: error.is_none(),
        exit_code: if error.is_none() { 0 } else { 2 },
        error: error.map(|e| e.to_string()),
        steps,
        last_good_t,
        phi: integrals.phi,
        outside_hypotheses: integrals.warning,
        gronwall,
        max_chart_radius: max_radius,
        wallclock_s: clock.elapsed().as_secs_f64(),
    };
    write_outputs(&cfg.output_path, r, &reports, &summary)?;
    Ok(RunOutcome { summary, reports })
}

fn write_outputs(dir: &Path, r: usize, reports: &[EnergyReport], summary: &RunSummary) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut csv = csv_header(r);
    csv.push('\n');
    csv.push_str(&csv_rows(reports));
    std::fs::write(dir.join("series.csv"), csv)?;
    let json = serde_json::to_string_pretty(summary).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(())
}

/// The identity battery plus the variational checks. The mutation row is
/// expected to fail; `expected_fail` marks it.
pub fn run_verify(seed: u64) -> Result<Vec<(CheckResult, bool)>> {
    let mut rows: Vec<(CheckResult, bool)> = run_battery(seed)?.into_iter().map(|r| (r, false)).collect();
    rows.push((check_variational_consistency(seed, 16, 200)?, false));
    rows.push((check_variational_mutation(seed, 16, 20)?, true));
    Ok(rows)
}

pub fn verify_csv(rows: &[(CheckResult, bool)]) -> String {
    let mut out = String::from("id,residual,slope,order,pass,expected_fail\n");
    for (r, xf) in rows {
        let slope = r.slope.map(|s| format!("{s:.4}")).unwrap_or_default();
        let order = r.order.map(|o| o.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{:.6e},{},{},{},{}", r.id, r.residual, slope, order, r.pass, xf);
    }
    out
}

/// Worker count from `WAVEMAP_THREADS`, if set.
pub fn worker_threads() -> Option<usize> {
    std::env::var("WAVEMAP_THREADS").ok().and_then(|v| v.parse().ok()).filter(|&n| n > 0)
}

/// Run every config matching `pattern`, each into `<output.path>/<file stem>`.
pub fn run_sweep(pattern: &str) -> Result<Vec<(PathBuf, Result<RunOutcome>)>> {
    let paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| Error::Validation(format!("bad glob '{pattern}': {e}")))?
        .filter_map(|p| p.ok())
        .collect();
    if paths.is_empty() {
        return Err(Error::Validation(format!("no config files match '{pattern}'")));
    }
    let run_one = |p: &PathBuf| -> Result<RunOutcome> {
        let text = std::fs::read_to_string(p)?;
        let mut cfg = parse_config(&text)?;
        let stem = p.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_else(|| "run".into());
        cfg.output_path = cfg.output_path.join(stem);
        run_scenario(&cfg)
    };
    use rayon::prelude::*;
    let work = || paths.par_iter().map(|p| (p.clone(), run_one(p))).collect::<Vec<_>>();
    match worker_threads() {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Validation(e.to_string()))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}
