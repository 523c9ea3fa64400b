//! Inverse mean curvature flow of star-shaped radial graphs with free boundary
//! on the cone wall.
//!
//! Moving with normal speed `1/H`, a radial graph `ρ = e^u` evolves by
//!
//! ```text
//! u_t = v^2 / D,   D = ρ v H = (n-1) - u''/v^2 - (n-2) cot θ u',   v^2 = 1 + u'^2,
//! ```
//!
//! which is invariant under `u → u + c`; caps grow as `u_t = 1/(n-1)`.
//! Each step linearizes `v^2/D` in `(u'', cot θ u')` with frozen coefficients
//! and solves one tridiagonal system, so round caps stay exactly round and the
//! stiff diffusion carries no explicit stability limit. Neumann conditions at
//! the axis and at the wall come from the reflected ghost nodes.

use crate::error::{Error, Result};
use crate::numerics::solve_tridiagonal;
use crate::surface::{functionals, RadialGraph};
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// Default time step.
pub const DEFAULT_DT: f64 = 1e-3;
/// Largest sup-norm change of `u` accepted in one step.
pub const MAX_STEP_CHANGE: f64 = 0.1;
/// Per-sample slack allowed in the monotonicity of `h`.
pub const H_MONOTONE_SLACK: f64 = 1e-8;
/// Relative slack in `I(t) <= I(0) e^{(n-2)t/(n-1)}`.
pub const EXP_BOUND_SLACK: f64 = 1e-6;
/// How far the rescaled surface may drift before the run is declared divergent.
const DIVERGENCE_DRIFT: f64 = 20.0;

#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub graph: RadialGraph,
}

impl FlowState {
    pub fn new(graph: RadialGraph) -> Self {
        FlowState { t: 0.0, graph }
    }
}

/// Scalar monitors of a flowing surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Monitors {
    pub area: f64,
    pub total_mean_curvature: f64,
    /// `I / Area^{(n-2)/(n-1)}`.
    pub h: f64,
    pub umbilicity: f64,
}

pub fn monitors(state: &FlowState) -> Monitors {
    let f = functionals(&state.graph);
    let n = state.graph.cone().n() as f64;
    Monitors {
        area: f.area,
        total_mean_curvature: f.total_mean_curvature,
        h: f.total_mean_curvature / f.area.powf((n - 2.0) / (n - 1.0)),
        umbilicity: f.umbilicity_residual,
    }
}

/// Advance one linearly implicit step of size `dt`.
pub fn step(state: &FlowState, dt: f64) -> Result<FlowState> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step {dt} must be positive")));
    }
    let graph = &state.graph;
    let n = graph.cone().n() as f64;
    let m = graph.m();
    let h = graph.spacing();
    let h2 = h * h;
    let d = graph.derivatives();

    let mut lower = vec![0.0; m + 1];
    let mut diag = vec![0.0; m + 1];
    let mut upper = vec![0.0; m + 1];
    let mut speed = vec![0.0; m + 1];
    for i in 0..=m {
        let v2 = 1.0 + d.du[i] * d.du[i];
        let denom = (n - 1.0) - d.d2u[i] / v2 - (n - 2.0) * d.cot_du[i];
        if !(denom > 0.0) {
            return Err(Error::NonPositiveMeanCurvature {
                node: i,
                theta: i as f64 * h,
                value: denom / (graph.log_radius()[i].exp() * v2.sqrt()),
            });
        }
        speed[i] = v2 / denom;
        // ∂(v²/D)/∂u'' and ∂(v²/D)/∂(cot θ u')
        let a = 1.0 / (denom * denom);
        let b = (n - 2.0) * v2 / (denom * denom);
        let (lo, di, up) = if i == 0 {
            let c = 2.0 * (a + b) / h2;
            (0.0, -c, c)
        } else if i == m {
            // cot θ0 · u'(θ0) = 0 under the reflection
            (2.0 * a / h2, -2.0 * a / h2, 0.0)
        } else {
            let theta = i as f64 * h;
            let cot = theta.cos() / theta.sin();
            (
                a / h2 - b * cot / (2.0 * h),
                -2.0 * a / h2,
                a / h2 + b * cot / (2.0 * h),
            )
        };
        lower[i] = -dt * lo;
        diag[i] = 1.0 - dt * di;
        upper[i] = -dt * up;
    }
    // (I - dt L) δ = v²/D,  u ← u + dt δ
    solve_tridiagonal(&lower, &diag, &upper, &mut speed);
    let change = speed.iter().fold(0.0_f64, |acc, s| acc.max((dt * s).abs()));
    if change > MAX_STEP_CHANGE {
        return Err(Error::StepRejected {
            change,
            limit: MAX_STEP_CHANGE,
            dt,
        });
    }
    let u: Vec<f64> = graph
        .log_radius()
        .iter()
        .zip(&speed)
        .map(|(u, s)| u + dt * s)
        .collect();
    Ok(FlowState {
        t: state.t + dt,
        graph: RadialGraph::from_log_radius(*graph.cone(), u)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowSample {
    pub t: f64,
    pub area: f64,
    pub total_mean_curvature: f64,
    pub h: f64,
    pub umbilicity: f64,
    /// `|Area(t)/Area(0) - e^t| / e^t`.
    pub area_ratio_error: f64,
}

/// Monitored history of a flow run.
#[derive(Debug, Clone, Serialize)]
pub struct FlowTrace {
    pub samples: Vec<FlowSample>,
    /// `exp(mean u - t/(n-1))` at the final time (mean over the link measure).
    pub rescaled_limit: f64,
    /// `(Area(Σ_0)/α)^{1/(n-1)}`: the radius the rescaled flow converges to,
    /// reading the reference area as the link measure `α` of the cone.
    pub predicted_limit: f64,
    /// `max u - min u` of the initial and final profiles.
    pub initial_variation: f64,
    pub final_variation: f64,
    /// Limit of `h` on round caps: `(n-1) α^{1/(n-1)}`.
    pub h_limit: f64,
    pub dt: f64,
    pub rejected_steps: usize,
    #[serde(skip)]
    pub final_graph: Option<RadialGraph>,
}

impl FlowTrace {
    /// Largest increase `h(t_{k+1}) - h(t_k)` over consecutive samples.
    pub fn max_h_increase(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| w[1].h - w[0].h)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn h_monotone(&self) -> bool {
        self.max_h_increase() <= H_MONOTONE_SLACK
    }

    /// Largest value of `I(t) / (I(0) e^{(n-2)t/(n-1)}) - 1`.
    pub fn max_exponential_excess(&self, n: usize) -> f64 {
        let i0 = self.samples[0].total_mean_curvature;
        let rate = (n as f64 - 2.0) / (n as f64 - 1.0);
        self.samples
            .iter()
            .map(|s| s.total_mean_curvature / (i0 * (rate * s.t).exp()) - 1.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn exponential_bound_holds(&self, n: usize) -> bool {
        self.max_exponential_excess(n) <= EXP_BOUND_SLACK
    }

    pub fn max_area_ratio_error(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.area_ratio_error)
            .fold(0.0, f64::max)
    }

    /// Relative error of the final `h` against the round-cap limit.
    pub fn final_h_error(&self) -> f64 {
        let last = self.samples.last().expect("trace has samples");
        (last.h - self.h_limit).abs() / self.h_limit
    }

    /// CSV with header `t,area,I,h,umbilicity,area_ratio_err`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "area", "I", "h", "umbilicity", "area_ratio_err"])?;
        for s in &self.samples {
            w.write_record([
                format!("{:.6}", s.t),
                format!("{:.12e}", s.area),
                format!("{:.12e}", s.total_mean_curvature),
                format!("{:.12e}", s.h),
                format!("{:.6e}", s.umbilicity),
                format!("{:.6e}", s.area_ratio_error),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn variation(graph: &RadialGraph) -> f64 {
    let u = graph.log_radius();
    let max = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = u.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

fn mean_log_radius(graph: &RadialGraph) -> f64 {
    let w = graph.link_weights();
    let total: f64 = w.iter().sum();
    w.iter().zip(graph.log_radius()).map(|(w, u)| w * u).sum::<f64>() / total
}

/// Integrate the flow from `initial` to `t_end`, sampling the monitors every
/// `max(dt, t_end/1000)`. A rejected step halves `dt` for the rest of the run.
pub fn run(initial: &RadialGraph, t_end: f64, dt: f64) -> Result<FlowTrace> {
    if !(t_end > 0.0) || !(dt > 0.0) {
        return Err(Error::Domain(format!("need t_end > 0 and dt > 0 (got {t_end}, {dt})")));
    }
    crate::surface::positive_mean_curvature(initial)?;
    let cone = *initial.cone();
    let n = cone.n();
    let nm1 = n as f64 - 1.0;
    let sample_every = (t_end / 1000.0).max(dt);

    let mut state = FlowState::new(initial.clone());
    let m0 = monitors(&state);
    let sample = |st: &FlowState, m: Monitors| FlowSample {
        t: st.t,
        area: m.area,
        total_mean_curvature: m.total_mean_curvature,
        h: m.h,
        umbilicity: m.umbilicity,
        area_ratio_error: (m.area / m0.area - st.t.exp()).abs() / st.t.exp(),
    };
    let mut samples = vec![sample(&state, m0)];
    let start_max = initial.max_rho().ln();

    let mut dt = dt;
    let mut rejected = 0;
    let mut next_sample = sample_every;
    while state.t < t_end - 1e-12 {
        let h = dt.min(t_end - state.t);
        match step(&state, h) {
            Ok(next) => state = next,
            Err(Error::StepRejected { .. }) if dt > 1e-9 => {
                dt *= 0.5;
                rejected += 1;
                continue;
            }
            Err(e) => return Err(e),
        }
        let drift = state.graph.max_rho().ln() - state.t / nm1 - start_max;
        if !drift.is_finite() || drift.abs() > DIVERGENCE_DRIFT {
            return Err(Error::Diverged {
                t: state.t,
                value: drift,
            });
        }
        if state.t >= next_sample - 1e-9 * sample_every || state.t >= t_end - 1e-12 {
            samples.push(sample(&state, monitors(&state)));
            while next_sample <= state.t + 1e-9 * sample_every {
                next_sample += sample_every;
            }
        }
    }

    Ok(FlowTrace {
        samples,
        rescaled_limit: (mean_log_radius(&state.graph) - state.t / nm1).exp(),
        predicted_limit: (m0.area / cone.alpha()).powf(1.0 / nm1),
        initial_variation: variation(initial),
        final_variation: variation(&state.graph),
        h_limit: cone.round_h_limit(),
        dt,
        rejected_steps: rejected,
        final_graph: Some(state.graph),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::ConeSpec;

    #[test]
    fn cap_grows_self_similarly() {
        let cone = ConeSpec::from_degrees(4, 70.0).unwrap();
        let mut st = FlowState::new(RadialGraph::cap(cone, 32, 0.7).unwrap());
        for _ in 0..50 {
            st = step(&st, 0.01).unwrap();
        }
        let u = st.graph.log_radius();
        let spread = u.iter().map(|x| (x - u[0]).abs()).fold(0.0, f64::max);
        assert!(spread < 1e-12);
        assert!((u[0] - (0.7f64.ln() + 0.5 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_dt_and_large_steps() {
        let cone = ConeSpec::half_space(3).unwrap();
        let st = FlowState::new(RadialGraph::cap(cone, 16, 1.0).unwrap());
        assert!(step(&st, 0.0).is_err());
        assert!(matches!(step(&st, 0.5), Err(Error::StepRejected { .. })));
    }

    #[test]
    fn run_halves_dt_on_rejection() {
        let cone = ConeSpec::half_space(3).unwrap();
        let trace = run(&RadialGraph::cap(cone, 16, 1.0).unwrap(), 1.0, 0.5).unwrap();
        assert!(trace.rejected_steps >= 2);
        assert!(trace.dt <= 0.2);
        assert!((trace.rescaled_limit - 1.0).abs() < 1e-9);
    }

    #[test]
    fn monitors_scale_invariant_h() {
        let cone = ConeSpec::half_space(3).unwrap();
        let g = RadialGraph::perturbed_cap(cone, 64, 1.0, 0.1, 2).unwrap();
        let a = monitors(&FlowState::new(g.clone()));
        let b = monitors(&FlowState::new(g.scaled(3.0).unwrap()));
        assert!((a.h - b.h).abs() < 1e-12 * a.h);
    }

    #[test]
    fn trace_csv_header() {
        let cone = ConeSpec::half_space(3).unwrap();
        let trace = run(&RadialGraph::cap(cone, 16, 1.0).unwrap(), 0.01, 1e-3).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,area,I,h,umbilicity,area_ratio_err\n"));
        assert_eq!(text.lines().count(), trace.samples.len() + 1);
    }
}
