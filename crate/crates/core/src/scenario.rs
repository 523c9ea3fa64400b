//! JSON scenarios: parsing with defaults, dispatch to the solvers, verdicts
//! and artifacts.
//!
//! A scenario names one computation (`capacity`, `imcf`, `penrose`) or a
//! `sweep` over the cross-product of parameter lists. Every report embeds the
//! fully defaulted scenario it was produced from, and a run fails (nonzero
//! exit in the CLI) iff an asserted inequality is violated beyond
//! `inequality_slack + discretization estimate`.

use crate::capacity::{capacity, pfs_lower_bound, write_field_csv, CapacityResult, ExteriorGrid, Weight};
use crate::conformal::{penrose_check, schwarzschild_field, HalfSchwarzschild, PenroseReport, PenroseTolerances};
use crate::cone::ConeSpec;
use crate::error::{Error, Result};
use crate::imcf;
use crate::surface::{functionals, RadialGraph};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Capacity,
    Imcf,
    Penrose,
    Sweep,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Capacity => "capacity",
            Kind::Imcf => "imcf",
            Kind::Penrose => "penrose",
            Kind::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConeConfig {
    pub n: usize,
    pub theta0_deg: f64,
}

impl Default for ConeConfig {
    fn default() -> Self {
        ConeConfig { n: 3, theta0_deg: 90.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    Cap,
    PerturbedCap,
    ProfileCsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceConfig {
    #[serde(rename = "type")]
    pub kind: SurfaceKind,
    pub r: f64,
    pub eps: f64,
    pub mode: usize,
    /// CSV with columns `theta,rho` (for `profile_csv`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig {
            kind: SurfaceKind::Cap,
            r: 1.0,
            eps: 0.0,
            mode: 2,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub m_theta: usize,
    pub m_s: usize,
    /// Outer log-radius; `max u + 4` when absent.
    pub s_max: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            m_theta: 128,
            m_s: 256,
            s_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub t_end: f64,
    pub dt: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            t_end: 6.0,
            dt: imcf::DEFAULT_DT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchwarzschildConfig {
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Absolute slack added to every inequality check.
    pub inequality_slack: f64,
    pub penrose: PenroseTolerances,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            inequality_slack: 1e-6,
            penrose: PenroseTolerances::default(),
        }
    }
}

/// Parameter lists expanded as a cross-product; empty lists keep the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub kind: Kind,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub theta0_deg: Vec<f64>,
    #[serde(default)]
    pub r: Vec<f64>,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub mode: Vec<usize>,
    #[serde(default)]
    pub mass: Vec<f64>,
    /// Worker threads; all cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: Kind,
    #[serde(default)]
    pub cone: ConeConfig,
    /// Defaults to the unit cap, or to the horizon for `penrose`.
    #[serde(default)]
    pub surface: Option<SurfaceConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schwarzschild: Option<SchwarzschildConfig>,
    /// File prefix for artifacts; defaults to the kind.
    #[serde(default)]
    pub output: Option<String>,
    /// Also write the capacity potential as CSV.
    #[serde(default)]
    pub write_field: bool,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

/// Parse and validate a JSON scenario, filling in every default.
pub fn parse_config(text: &str) -> Result<Scenario> {
    let mut sc: Scenario =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    sc.resolve_defaults();
    sc.validate()?;
    Ok(sc)
}

impl Scenario {
    fn resolve_defaults(&mut self) {
        if self.output.is_none() {
            self.output = Some(self.kind.name().to_string());
        }
        if self.surface.is_none() {
            let mut s = SurfaceConfig::default();
            if let (Kind::Penrose, Some(sw)) = (self.kind, &self.schwarzschild) {
                if self.cone.n >= 3 && sw.mass > 0.0 {
                    s.r = (sw.mass / 2.0).powf(1.0 / (self.cone.n as f64 - 2.0));
                }
            }
            self.surface = Some(s);
        }
    }

    fn surface(&self) -> &SurfaceConfig {
        self.surface.as_ref().expect("defaults resolved")
    }

    /// Artifact prefix.
    pub fn output_prefix(&self) -> &str {
        self.output.as_deref().unwrap_or(self.kind.name())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        ConeSpec::from_degrees(self.cone.n, self.cone.theta0_deg)
            .map_err(|e| Error::Config(format!("cone: {e}")))?;
        let s = self.surface();
        if !(s.r > 0.0 && s.r.is_finite()) {
            return bad("surface.r", format!("{} must be positive", s.r));
        }
        if s.kind == SurfaceKind::PerturbedCap {
            if !(s.eps.abs() < 0.5) {
                return bad("surface.eps", format!("|{}| must be below 0.5", s.eps));
            }
            if s.mode % 2 != 0 {
                return bad("surface.mode", format!("{} must be even", s.mode));
            }
        }
        if s.kind == SurfaceKind::ProfileCsv && s.path.is_none() {
            return bad("surface.path", "required for profile_csv".into());
        }
        if self.grid.m_theta < 8 || self.grid.m_s < 8 {
            return bad("grid", "m_theta and m_s must be at least 8".into());
        }
        if !(self.flow.t_end > 0.0) || !(self.flow.dt > 0.0) {
            return bad("flow", "t_end and dt must be positive".into());
        }
        if !(self.tolerances.inequality_slack >= 0.0) {
            return bad("tolerances.inequality_slack", "must be non-negative".into());
        }
        match self.kind {
            Kind::Penrose => {
                if self.cone.theta0_deg != 90.0 {
                    return bad("cone.theta0_deg", "penrose scenarios use the half-space (90)".into());
                }
                match &self.schwarzschild {
                    None => return bad("schwarzschild", "required for penrose".into()),
                    Some(sw) if !(sw.mass > 0.0) => {
                        return bad("schwarzschild.mass", format!("{} must be positive", sw.mass))
                    }
                    _ => {}
                }
            }
            Kind::Sweep => {
                let sw = match &self.sweep {
                    None => return bad("sweep", "required for kind sweep".into()),
                    Some(sw) => sw,
                };
                if sw.kind == Kind::Sweep {
                    return bad("sweep.kind", "must be capacity, imcf or penrose".into());
                }
                for p in self.sweep_points()? {
                    p.validate()?;
                }
            }
            _ => {}
        }
        if self.kind != Kind::Sweep && self.sweep.is_some() {
            return bad("sweep", format!("only allowed for kind sweep, not {}", self.kind.name()));
        }
        Ok(())
    }

    /// Multiply both grid resolutions by `k`.
    pub fn with_grid_scale(&self, k: usize) -> Scenario {
        let mut s = self.clone();
        s.grid.m_theta *= k;
        s.grid.m_s *= k;
        s
    }

    /// Expanded points of a sweep, in row-major order of
    /// `n, theta0_deg, r, eps, mode, mass`.
    pub fn sweep_points(&self) -> Result<Vec<Scenario>> {
        let sw = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Config("sweep: missing".into()))?;
        let or = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
        let base_surface = self.surface().clone();
        let mass0 = self.schwarzschild.as_ref().map_or(2.0, |s| s.mass);
        let ns = if sw.n.is_empty() { vec![self.cone.n] } else { sw.n.clone() };
        let modes = if sw.mode.is_empty() { vec![base_surface.mode] } else { sw.mode.clone() };
        let mut out = Vec::new();
        for &n in &ns {
            for &t in &or(&sw.theta0_deg, self.cone.theta0_deg) {
                for &r in &or(&sw.r, base_surface.r) {
                    for &eps in &or(&sw.eps, base_surface.eps) {
                        for &mode in &modes {
                            for &mass in &or(&sw.mass, mass0) {
                                let mut p = self.clone();
                                p.kind = sw.kind;
                                p.sweep = None;
                                p.cone = ConeConfig { n, theta0_deg: t };
                                let mut s = base_surface.clone();
                                s.r = r;
                                s.eps = eps;
                                s.mode = mode;
                                if sw.kind == Kind::Penrose {
                                    p.schwarzschild = Some(SchwarzschildConfig { mass });
                                    if sw.r.is_empty() && s.kind == SurfaceKind::Cap {
                                        s.r = (mass / 2.0).powf(1.0 / (n as f64 - 2.0));
                                    }
                                }
                                if eps != 0.0 && s.kind == SurfaceKind::Cap {
                                    s.kind = SurfaceKind::PerturbedCap;
                                }
                                p.surface = Some(s);
                                p.output = Some(format!("{}_{:03}", self.output_prefix(), out.len()));
                                out.push(p);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn cone_spec(&self) -> Result<ConeSpec> {
        ConeSpec::from_degrees(self.cone.n, self.cone.theta0_deg)
    }

    /// The surface Σ at the grid's angular resolution.
    pub fn build_surface(&self) -> Result<RadialGraph> {
        let cone = self.cone_spec()?;
        let s = self.surface();
        let m = self.grid.m_theta;
        match s.kind {
            SurfaceKind::Cap => RadialGraph::cap(cone, m, s.r),
            SurfaceKind::PerturbedCap => RadialGraph::perturbed_cap(cone, m, s.r, s.eps, s.mode),
            SurfaceKind::ProfileCsv => {
                RadialGraph::read_csv(cone, m, s.path.as_deref().expect("validated"))
            }
        }
    }

    pub fn build_grid(&self, graph: &RadialGraph) -> Result<ExteriorGrid> {
        match self.grid.s_max {
            Some(s_max) => ExteriorGrid::new(graph, s_max, self.grid.m_theta, self.grid.m_s),
            None => ExteriorGrid::with_default_margin(graph, self.grid.m_theta, self.grid.m_s),
        }
    }

    /// Make a relative `profile_csv` path relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(s) = &mut self.surface {
            if let Some(p) = &s.path {
                let path = Path::new(p);
                if path.is_relative() {
                    s.path = Some(base.join(path).to_string_lossy().into_owned());
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    #[serde(rename = "holds")]
    Holds,
    #[serde(rename = "equality within tol")]
    Equality,
    #[serde(rename = "violated")]
    Violated,
}

/// Outcome of one inequality `lhs >= rhs`, reported as `margin = lhs - rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub margin: f64,
    pub tolerance: f64,
    pub status: Status,
}

impl Verdict {
    pub fn new(name: &str, margin: f64, tolerance: f64) -> Self {
        let status = if !(margin >= -tolerance) {
            Status::Violated
        } else if margin <= tolerance {
            Status::Equality
        } else {
            Status::Holds
        };
        Verdict {
            name: name.to_string(),
            margin,
            tolerance,
            status,
        }
    }

    pub fn violated(&self) -> bool {
        self.status == Status::Violated
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityReport {
    pub capacity: CapacityResult,
    pub iterations: usize,
    pub residual_norm: f64,
    pub area: f64,
    pub volume: f64,
    pub total_mean_curvature: f64,
    pub min_mean_curvature: f64,
    /// `I / ((n-1) α)`.
    pub mean_curvature_bound: f64,
    /// `(Area/α)^{(n-2)/(n-1)}`.
    pub area_bound: f64,
    /// `(Vol / (α/n))^{(n-2)/n}`.
    pub volume_bound: f64,
    /// Capacity lower bound from the level-set radius profile.
    pub pfs_lower_bound: f64,
    /// `Area - n (α/n)^{1/n} Vol^{(n-1)/n}`.
    pub isoperimetric_margin: f64,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImcfReport {
    pub samples: usize,
    pub final_t: f64,
    pub final_h: f64,
    pub h_limit: f64,
    pub final_h_error: f64,
    pub max_h_increase: f64,
    pub h_monotone: bool,
    pub max_exponential_excess: f64,
    pub max_area_ratio_error: f64,
    pub rescaled_limit: f64,
    pub predicted_limit: f64,
    pub initial_variation: f64,
    pub final_variation: f64,
    pub dt: f64,
    pub rejected_steps: usize,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PenroseSummary {
    #[serde(flatten)]
    pub report: PenroseReport,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Outcome {
    Capacity(CapacityReport),
    Imcf(ImcfReport),
    Penrose(PenroseSummary),
    Sweep(Vec<SweepRow>),
}

impl Outcome {
    pub fn verdicts(&self) -> Vec<&Verdict> {
        match self {
            Outcome::Capacity(r) => r.verdicts.iter().collect(),
            Outcome::Imcf(r) => r.verdicts.iter().collect(),
            Outcome::Penrose(r) => r.verdicts.iter().collect(),
            Outcome::Sweep(_) => Vec::new(),
        }
    }

    pub fn violations(&self) -> Vec<String> {
        match self {
            Outcome::Sweep(rows) => rows
                .iter()
                .filter(|r| r.violations > 0 || r.error.is_some())
                .map(|r| format!("point {}: {}", r.index, r.status))
                .collect(),
            _ => self
                .verdicts()
                .into_iter()
                .filter(|v| v.violated())
                .map(|v| format!("{} (margin {:.3e}, tolerance {:.3e})", v.name, v.margin, v.tolerance))
                .collect(),
        }
    }
}

/// JSON document written for every run.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub scenario: Scenario,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
    pub grid_scale: usize,
    pub result: Outcome,
    pub violations: Vec<String>,
}

/// One row of the combined sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub kind: Kind,
    pub n: usize,
    pub theta0_deg: f64,
    pub r: f64,
    pub eps: f64,
    pub mode: usize,
    pub mass: Option<f64>,
    /// Capacity (flat for `capacity`, conformal for `penrose`).
    pub capacity: Option<f64>,
    pub mean_curvature_bound: Option<f64>,
    pub volume_bound: Option<f64>,
    pub final_h: Option<f64>,
    pub h_limit: Option<f64>,
    pub mass_estimate: Option<f64>,
    pub min_margin: Option<f64>,
    pub violations: usize,
    pub status: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Directory for artifacts; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    pub timestamp: bool,
    pub grid_scale: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            out_dir: None,
            timestamp: false,
            grid_scale: 1,
        }
    }
}

/// Result of [`run_scenario`]: the report plus the artifacts written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub files: Vec<PathBuf>,
}

impl RunOutput {
    pub fn success(&self) -> bool {
        self.report.violations.is_empty()
    }
}

fn gap(a: f64, b: f64) -> f64 {
    (a - b).abs()
}

fn evaluate_capacity(sc: &Scenario, files: &mut Vec<PathBuf>, out_dir: Option<&Path>) -> Result<CapacityReport> {
    let graph = sc.build_surface()?;
    let grid = sc.build_grid(&graph)?;
    let (cap, field) = capacity(&grid, &Weight::Flat)?;
    let cone = *graph.cone();
    let n = cone.n() as f64;
    let alpha = cone.alpha();
    let f = functionals(grid.graph());
    let coarse = functionals(&grid.graph().resample(grid.m_theta() / 2)?);

    let mean_curvature_bound = f.total_mean_curvature / ((n - 1.0) * alpha);
    let area_bound = (f.area / alpha).powf((n - 2.0) / (n - 1.0));
    let volume_bound = (f.volume / cone.unit_sector_volume()).powf((n - 2.0) / n);
    let pfs = pfs_lower_bound(&field)?;

    let slack = sc.tolerances.inequality_slack;
    let cap_err = gap(cap.cap_extrapolated, cap.cap_flux).max(gap(cap.cap_energy, cap.cap_flux));
    let quad_err = |fine: f64, coarse: f64| gap(fine, coarse) / 3.0;
    let i_err = quad_err(f.total_mean_curvature, coarse.total_mean_curvature) / ((n - 1.0) * alpha);
    let a_err = quad_err(f.area, coarse.area) / alpha;
    let v_err = quad_err(f.volume, coarse.volume) / cone.unit_sector_volume();
    let c = cap.cap_extrapolated;

    let verdicts = vec![
        Verdict::new("capacity_le_mean_curvature", mean_curvature_bound - c, slack + cap_err + i_err),
        Verdict::new("mean_curvature_ge_area", mean_curvature_bound - area_bound, slack + i_err + a_err),
        Verdict::new("capacity_ge_volume", c - volume_bound, slack + cap_err + v_err),
        Verdict::new("capacity_ge_level_profile", c - pfs, slack + cap_err + gap(c, cap.cap_flux_coarse)),
        Verdict::new(
            "isoperimetric",
            f.isoperimetric_margin(&cone),
            slack + f.area * 1e-6 + gap(f.area, coarse.area),
        ),
    ];

    if let (Some(dir), true) = (out_dir, sc.write_field) {
        let path = dir.join(format!("{}_field.csv", sc.output_prefix()));
        write_field_csv(&field, &path)?;
        files.push(path);
    }
    Ok(CapacityReport {
        capacity: cap,
        iterations: field.iterations,
        residual_norm: field.residual_norm,
        area: f.area,
        volume: f.volume,
        total_mean_curvature: f.total_mean_curvature,
        min_mean_curvature: f.min_h,
        mean_curvature_bound,
        area_bound,
        volume_bound,
        pfs_lower_bound: pfs,
        isoperimetric_margin: f.isoperimetric_margin(&cone),
        verdicts,
    })
}

fn evaluate_imcf(sc: &Scenario, files: &mut Vec<PathBuf>, out_dir: Option<&Path>) -> Result<ImcfReport> {
    let graph = sc.build_surface()?;
    let trace = imcf::run(&graph, sc.flow.t_end, sc.flow.dt)?;
    let n = graph.cone().n();
    let last = *trace.samples.last().expect("trace has samples");
    if let Some(dir) = out_dir {
        let path = dir.join(format!("{}_trace.csv", sc.output_prefix()));
        trace.write_csv_file(&path)?;
        files.push(path);
    }
    let slack = sc.tolerances.inequality_slack;
    let verdicts = vec![
        Verdict::new("h_non_increasing", -trace.max_h_increase().max(0.0), imcf::H_MONOTONE_SLACK),
        Verdict::new(
            "mean_curvature_exponential_bound",
            -trace.max_exponential_excess(n).max(0.0),
            imcf::EXP_BOUND_SLACK.max(slack),
        ),
    ];
    Ok(ImcfReport {
        samples: trace.samples.len(),
        final_t: last.t,
        final_h: last.h,
        h_limit: trace.h_limit,
        final_h_error: trace.final_h_error(),
        max_h_increase: trace.max_h_increase(),
        h_monotone: trace.h_monotone(),
        max_exponential_excess: trace.max_exponential_excess(n),
        max_area_ratio_error: trace.max_area_ratio_error(),
        rescaled_limit: trace.rescaled_limit,
        predicted_limit: trace.predicted_limit,
        initial_variation: trace.initial_variation,
        final_variation: trace.final_variation,
        dt: trace.dt,
        rejected_steps: trace.rejected_steps,
        verdicts,
    })
}

fn evaluate_penrose(sc: &Scenario) -> Result<PenroseSummary> {
    let graph = sc.build_surface()?;
    let grid = sc.build_grid(&graph)?;
    let mass = sc.schwarzschild.as_ref().expect("validated").mass;
    let model = HalfSchwarzschild::new(sc.cone.n, mass)?;
    let field = schwarzschild_field(&model, &grid)?;
    let report = penrose_check(&field, sc.tolerances.penrose)?;
    let mass_err = gap(report.mass_identity, report.mass_expansion)
        .max(gap(report.mass_flux, report.mass))
        .min(0.01 * report.mass.abs());
    let tol = sc.tolerances.inequality_slack + mass_err + report.cap_flat_error + report.cap_conformal_error;
    let verdicts = report
        .checked_margins()
        .into_iter()
        .map(|(name, margin)| Verdict::new(name, margin, tol))
        .collect();
    Ok(PenroseSummary { report, verdicts })
}

fn evaluate(sc: &Scenario, files: &mut Vec<PathBuf>, out_dir: Option<&Path>) -> Result<Outcome> {
    Ok(match sc.kind {
        Kind::Capacity => Outcome::Capacity(evaluate_capacity(sc, files, out_dir)?),
        Kind::Imcf => Outcome::Imcf(evaluate_imcf(sc, files, out_dir)?),
        Kind::Penrose => Outcome::Penrose(evaluate_penrose(sc)?),
        Kind::Sweep => Outcome::Sweep(evaluate_sweep(sc, files, out_dir)?),
    })
}

fn sweep_row(index: usize, p: &Scenario, outcome: Result<Outcome>) -> SweepRow {
    let s = p.surface();
    let mut row = SweepRow {
        index,
        kind: p.kind,
        n: p.cone.n,
        theta0_deg: p.cone.theta0_deg,
        r: s.r,
        eps: s.eps,
        mode: s.mode,
        mass: p.schwarzschild.as_ref().map(|m| m.mass),
        capacity: None,
        mean_curvature_bound: None,
        volume_bound: None,
        final_h: None,
        h_limit: None,
        mass_estimate: None,
        min_margin: None,
        violations: 0,
        status: String::new(),
        error: None,
    };
    match outcome {
        Err(e) => {
            row.status = "error".into();
            row.error = Some(e.to_string());
        }
        Ok(o) => {
            match &o {
                Outcome::Capacity(c) => {
                    row.capacity = Some(c.capacity.cap_extrapolated);
                    row.mean_curvature_bound = Some(c.mean_curvature_bound);
                    row.volume_bound = Some(c.volume_bound);
                }
                Outcome::Imcf(f) => {
                    row.final_h = Some(f.final_h);
                    row.h_limit = Some(f.h_limit);
                }
                Outcome::Penrose(p) => {
                    row.capacity = Some(p.report.cap_conformal);
                    row.volume_bound = Some(p.report.vol_term);
                    row.mass_estimate = Some(p.report.mass);
                }
                Outcome::Sweep(_) => {}
            }
            let verdicts = o.verdicts();
            row.min_margin = verdicts.iter().map(|v| v.margin).reduce(f64::min);
            row.violations = verdicts.iter().filter(|v| v.violated()).count();
            row.status = if row.violations == 0 { "ok".into() } else { "violated".into() };
        }
    }
    row
}

fn evaluate_sweep(sc: &Scenario, files: &mut Vec<PathBuf>, out_dir: Option<&Path>) -> Result<Vec<SweepRow>> {
    let points = sc.sweep_points()?;
    let workers = sc.sweep.as_ref().and_then(|s| s.workers).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("sweep.workers: {e}")))?;
    let results: Vec<(SweepRow, Vec<PathBuf>)> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let mut f = Vec::new();
                let outcome = evaluate(p, &mut f, out_dir);
                (sweep_row(i, p, outcome), f)
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    for (row, f) in results {
        files.extend(f);
        rows.push(row);
    }
    if let Some(dir) = out_dir {
        let path = dir.join(format!("{}.csv", sc.output_prefix()));
        write_sweep_csv(&rows, &path)?;
        files.push(path);
    }
    Ok(rows)
}

/// Combined sweep CSV, one row per point.
pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Run a validated scenario and write `<prefix>.json` (plus CSV artifacts) to `out_dir`.
pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Result<RunOutput> {
    let k = options.grid_scale.max(1);
    let sc = if k > 1 { scenario.with_grid_scale(k) } else { scenario.clone() };
    sc.validate()?;
    if let Some(dir) = &options.out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut files = Vec::new();
    let result = evaluate(&sc, &mut files, options.out_dir.as_deref())
        .map_err(|e| contextualize(e, &sc))?;
    let violations = result.violations();
    let report = Report {
        scenario: sc.clone(),
        generated_at: options.timestamp.then(now_unix),
        grid_scale: k,
        result,
        violations,
    };
    if let Some(dir) = &options.out_dir {
        let path = dir.join(format!("{}.json", sc.output_prefix()));
        let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(&path, text + "\n")?;
        files.push(path);
    }
    Ok(RunOutput { report, files })
}

fn contextualize(e: Error, sc: &Scenario) -> Error {
    match e {
        Error::Domain(msg) => Error::Domain(format!("scenario '{}': {msg}", sc.output_prefix())),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_is_fully_defaulted() {
        let sc = parse_config(r#"{"kind": "capacity"}"#).unwrap();
        assert_eq!(sc.cone, ConeConfig::default());
        assert_eq!(sc.grid.m_theta, 128);
        assert_eq!(sc.grid.m_s, 256);
        assert_eq!(sc.grid.s_max, None);
        assert_eq!(sc.flow.dt, 1e-3);
        assert_eq!(sc.surface, Some(SurfaceConfig::default()));
        assert_eq!(sc.output.as_deref(), Some("capacity"));
        assert_eq!(sc.tolerances.inequality_slack, 1e-6);
        let echoed = serde_json::to_string(&sc).unwrap();
        assert_eq!(parse_config(&echoed).unwrap(), sc);
    }

    #[test]
    fn rejects_bad_configs() {
        let err = |t: &str| parse_config(t).unwrap_err().to_string();
        assert!(err(r#"{"kind": "capacity", "cone": {"n": 3, "theta0_deg": 120}}"#).contains("cone"));
        assert!(err(r#"{"kind": "capacity", "surface": {"type": "perturbed_cap", "eps": 0.7}}"#)
            .contains("surface.eps"));
        assert!(err(r#"{"kind": "capacity", "colour": 1}"#).contains("unknown field"));
        assert!(err("{\n\"kind\": \"capacity\",\n\"grid\": {\"m_t\": 3}}").contains("line 3"));
        assert!(err(r#"{"kind": "penrose"}"#).contains("schwarzschild"));
        assert!(err(r#"{"kind": "sweep", "sweep": {"kind": "sweep"}}"#).contains("sweep.kind"));
        assert!(err(r#"{"kind": "capacity", "surface": {"type": "perturbed_cap", "eps": 0.1, "mode": 3}}"#)
            .contains("mode"));
    }

    #[test]
    fn penrose_surface_defaults_to_horizon() {
        let sc = parse_config(r#"{"kind": "penrose", "schwarzschild": {"mass": 4}}"#).unwrap();
        assert_eq!(sc.surface.unwrap().r, 2.0);
    }

    #[test]
    fn sweep_expands_cross_product() {
        let sc = parse_config(
            r#"{"kind": "sweep", "sweep": {"kind": "capacity", "eps": [0.05, 0.1], "mode": [2, 4], "n": [3, 4]}}"#,
        )
        .unwrap();
        let pts = sc.sweep_points().unwrap();
        assert_eq!(pts.len(), 8);
        assert!(pts.iter().all(|p| p.kind == Kind::Capacity && p.sweep.is_none()));
        assert_eq!(pts[3].surface.as_ref().unwrap().kind, SurfaceKind::PerturbedCap);
        assert_eq!(pts[7].cone.n, 4);
        assert_eq!(pts[7].output.as_deref(), Some("sweep_007"));
    }

    #[test]
    fn verdict_classification() {
        assert_eq!(Verdict::new("a", 0.5, 1e-6).status, Status::Holds);
        assert_eq!(Verdict::new("a", -1e-7, 1e-6).status, Status::Equality);
        assert_eq!(Verdict::new("a", -1e-3, 1e-6).status, Status::Violated);
        assert_eq!(Verdict::new("a", f64::NAN, 1e-6).status, Status::Violated);
    }
}
