//! Axisymmetric star-shaped hypersurfaces with free boundary in a circular cone.
//!
//! A surface is stored as a radial graph `ρ(θ) = e^{u(θ)}` over the uniform grid
//! `θ_i = i·theta0/m`, `i = 0..=m`, where θ is the polar angle from the cone axis.
//! Derivatives use second-order central differences with one reflected ghost
//! node at each end (`u_{-1} = u_1`, `u_{m+1} = u_{m-1}`), which enforces the
//! axis regularity condition at θ = 0 and orthogonal contact with the wall at
//! θ = theta0.
//!
//! Orientation: the unit normal `N = (x̂ - ∇u)/v`, `v = sqrt(1 + u'^2)`, points
//! away from the enclosed region Ω, so round caps have `H = (n-1)/ρ > 0`.

use crate::cone::{isoperimetric_bound, ConeSpec};
use crate::error::{Error, Result};
use crate::numerics::{fd_weights, simpson_weights};
use serde::Serialize;
use std::path::Path;

/// Star-shaped hypersurface with boundary on the cone wall.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGraph {
    cone: ConeSpec,
    u: Vec<f64>,
}

/// First and second θ-derivatives of `u` at each node plus the rotational term
/// `cot θ · u'` (replaced by its limit `u''` on the axis).
#[derive(Debug, Clone)]
pub struct GraphDerivatives {
    pub du: Vec<f64>,
    pub d2u: Vec<f64>,
    pub cot_du: Vec<f64>,
}

/// Principal curvatures at a node: meridian and rotational (multiplicity n-2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalCurvatures {
    pub meridian: f64,
    pub rotational: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceFunctionals {
    pub area: f64,
    pub volume: f64,
    pub total_mean_curvature: f64,
    pub min_h: f64,
    pub umbilicity_residual: f64,
}

/// Legendre polynomial `P_k(x)` by the three-term recurrence.
pub fn legendre(k: usize, x: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut p0, mut p1) = (1.0, x);
            for j in 1..k {
                let jf = j as f64;
                let p2 = ((2.0 * jf + 1.0) * x * p1 - jf * p0) / (jf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

impl RadialGraph {
    /// Build from log-radius samples on the uniform θ grid of the cone.
    pub fn from_log_radius(cone: ConeSpec, u: Vec<f64>) -> Result<Self> {
        if u.len() < 5 {
            return Err(Error::Domain(format!(
                "radial graph needs at least 5 nodes (m >= 4), got {}",
                u.len()
            )));
        }
        if let Some(i) = u.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("non-finite log-radius at node {i}")));
        }
        Ok(RadialGraph { cone, u })
    }

    /// Sample `rho(θ)` on `m + 1` nodes.
    pub fn from_radius_fn<F: Fn(f64) -> f64>(cone: ConeSpec, m: usize, rho: F) -> Result<Self> {
        let h = cone.theta0() / m as f64;
        let mut u = Vec::with_capacity(m + 1);
        for i in 0..=m {
            let r = rho(i as f64 * h);
            if !(r > 0.0) {
                return Err(Error::Domain(format!(
                    "radius {r} at node {i} is not positive; surface is not star-shaped"
                )));
            }
            u.push(r.ln());
        }
        Self::from_log_radius(cone, u)
    }

    /// Round cap of radius `r`.
    pub fn cap(cone: ConeSpec, m: usize, r: f64) -> Result<Self> {
        Self::from_radius_fn(cone, m, |_| r)
    }

    /// `ρ(θ) = r (1 + eps P_mode(cos(θ π / (2 theta0))))` for even `mode`.
    ///
    /// The angle is stretched so the wall maps to the equator, where even
    /// Legendre modes have zero slope; in the half-space this is `P_mode(cos θ)`.
    pub fn perturbed_cap(cone: ConeSpec, m: usize, r: f64, eps: f64, mode: usize) -> Result<Self> {
        if mode % 2 != 0 {
            return Err(Error::Domain(format!(
                "perturbation mode {mode} must be even to meet the wall orthogonally"
            )));
        }
        if eps.abs() >= 0.5 {
            return Err(Error::Domain(format!("perturbation amplitude |{eps}| must be < 0.5")));
        }
        let stretch = std::f64::consts::FRAC_PI_2 / cone.theta0();
        Self::from_radius_fn(cone, m, |t| {
            r * (1.0 + eps * legendre(mode, (stretch * t).cos()))
        })
    }

    /// Read a two-column `theta,rho` CSV and resample it onto `m + 1` uniform nodes.
    pub fn read_csv<P: AsRef<Path>>(cone: ConeSpec, m: usize, path: P) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut theta = Vec::new();
        let mut rho = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Io(format!("row {}: missing column {k}", line + 2)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Io(format!("row {}: {e}", line + 2)))
            };
            theta.push(parse(0)?);
            rho.push(parse(1)?);
        }
        Self::from_samples(cone, m, &theta, &rho)
    }

    /// Resample scattered `(θ, ρ)` data (sorted, covering `[0, theta0]`) with
    /// four-point Lagrange interpolation of `log ρ`.
    pub fn from_samples(cone: ConeSpec, m: usize, theta: &[f64], rho: &[f64]) -> Result<Self> {
        if theta.len() != rho.len() || theta.len() < 4 {
            return Err(Error::Domain("profile needs at least 4 (theta, rho) rows".into()));
        }
        if theta.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("profile theta values must be strictly increasing".into()));
        }
        let t0 = cone.theta0();
        let span = 1e-9 * t0.max(1.0);
        if theta[0].abs() > span || (theta[theta.len() - 1] - t0).abs() > span {
            return Err(Error::Domain(format!(
                "profile must span [0, {t0}], got [{}, {}]",
                theta[0],
                theta[theta.len() - 1]
            )));
        }
        if let Some(i) = rho.iter().position(|r| !(*r > 0.0)) {
            return Err(Error::Domain(format!("profile radius at row {i} is not positive")));
        }
        let logs: Vec<f64> = rho.iter().map(|r| r.ln()).collect();
        let h = t0 / m as f64;
        let u = (0..=m)
            .map(|i| {
                let x = i as f64 * h;
                let k = theta.partition_point(|t| *t <= x).saturating_sub(1);
                let start = k.saturating_sub(1).min(theta.len() - 4);
                let w = fd_weights(x, &theta[start..start + 4], 0).swap_remove(0);
                w.iter().zip(&logs[start..start + 4]).map(|(a, b)| a * b).sum()
            })
            .collect();
        let graph = Self::from_log_radius(cone, u)?;
        let (axis, wall) = graph.neumann_defect();
        if axis.abs() > 1e-2 || wall.abs() > 1e-2 {
            return Err(Error::Domain(format!(
                "profile does not meet the axis/wall orthogonally (end slopes {axis:.3e}, {wall:.3e})"
            )));
        }
        Ok(graph)
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["theta", "rho"])?;
        for (t, r) in self.thetas().iter().zip(self.rho()) {
            w.write_record([format!("{t:.17e}"), format!("{r:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn cone(&self) -> &ConeSpec {
        &self.cone
    }

    /// Number of grid intervals.
    pub fn m(&self) -> usize {
        self.u.len() - 1
    }

    pub fn spacing(&self) -> f64 {
        self.cone.theta0() / self.m() as f64
    }

    pub fn log_radius(&self) -> &[f64] {
        &self.u
    }

    pub fn thetas(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..=self.m()).map(|i| i as f64 * h).collect()
    }

    pub fn rho(&self) -> Vec<f64> {
        self.u.iter().map(|x| x.exp()).collect()
    }

    pub fn min_rho(&self) -> f64 {
        self.u.iter().cloned().fold(f64::INFINITY, f64::min).exp()
    }

    pub fn max_rho(&self) -> f64 {
        self.u.iter().cloned().fold(f64::NEG_INFINITY, f64::max).exp()
    }

    /// Dilate about the vertex: `ρ → λρ`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!("scale factor {lambda} must be positive")));
        }
        let shift = lambda.ln();
        Ok(RadialGraph {
            cone: self.cone,
            u: self.u.iter().map(|x| x + shift).collect(),
        })
    }

    /// Same profile on a different number of intervals (reflection-extended
    /// four-point interpolation, which keeps the end conditions).
    pub fn resample(&self, m_new: usize) -> Result<Self> {
        if m_new == self.m() {
            return Ok(self.clone());
        }
        let m = self.m();
        let mut ext = Vec::with_capacity(m + 5);
        ext.push(self.u[2]);
        ext.push(self.u[1]);
        ext.extend_from_slice(&self.u);
        ext.push(self.u[m - 1]);
        ext.push(self.u[m - 2]);
        let u = (0..=m_new)
            .map(|i| {
                let x = i as f64 * m as f64 / m_new as f64 + 2.0;
                let k = (x.floor() as usize).min(m + 2);
                let start = k - 1;
                let xs: Vec<f64> = (start..start + 4).map(|j| j as f64).collect();
                let w = fd_weights(x, &xs, 0).swap_remove(0);
                w.iter().zip(&ext[start..start + 4]).map(|(a, b)| a * b).sum()
            })
            .collect();
        Self::from_log_radius(self.cone, u)
    }

    /// One-sided second-order slopes `u'` at the axis and at the wall.
    pub fn neumann_defect(&self) -> (f64, f64) {
        let h = self.spacing();
        let m = self.m();
        let u = &self.u;
        let axis = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
        let wall = (3.0 * u[m] - 4.0 * u[m - 1] + u[m - 2]) / (2.0 * h);
        (axis, wall)
    }

    pub fn derivatives(&self) -> GraphDerivatives {
        let m = self.m();
        let h = self.spacing();
        let u = &self.u;
        let at = |i: isize| -> f64 {
            if i < 0 {
                u[(-i) as usize]
            } else if i as usize > m {
                u[2 * m - i as usize]
            } else {
                u[i as usize]
            }
        };
        let mut du = vec![0.0; m + 1];
        let mut d2u = vec![0.0; m + 1];
        let mut cot_du = vec![0.0; m + 1];
        for i in 0..=m {
            let k = i as isize;
            du[i] = (at(k + 1) - at(k - 1)) / (2.0 * h);
            d2u[i] = (at(k + 1) - 2.0 * at(k) + at(k - 1)) / (h * h);
            let theta = i as f64 * h;
            cot_du[i] = if i == 0 {
                d2u[0]
            } else {
                du[i] * theta.cos() / theta.sin()
            };
        }
        GraphDerivatives { du, d2u, cot_du }
    }

    pub fn principal_curvatures(&self) -> Vec<PrincipalCurvatures> {
        let d = self.derivatives();
        self.u
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let v2 = 1.0 + d.du[i] * d.du[i];
                let rho_v = u.exp() * v2.sqrt();
                PrincipalCurvatures {
                    meridian: (1.0 - d.d2u[i] / v2) / rho_v,
                    rotational: (1.0 - d.cot_du[i]) / rho_v,
                }
            })
            .collect()
    }

    /// `sqrt(1 + u'^2)` at each node.
    pub fn slope_factor(&self) -> Vec<f64> {
        self.derivatives()
            .du
            .iter()
            .map(|d| (1.0 + d * d).sqrt())
            .collect()
    }

    /// Quadrature weights for `∫ f dμ_link` on the θ grid (Simpson times link density).
    pub fn link_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        simpson_weights(self.m(), h)
            .into_iter()
            .zip(self.thetas())
            .map(|(w, t)| w * self.cone.link_density(t))
            .collect()
    }

    /// Area element weights: `∫_Σ f dσ ≈ Σ_i w_i f_i`.
    pub fn area_weights(&self) -> Vec<f64> {
        let n = self.cone.n() as i32;
        let v = self.slope_factor();
        self.link_weights()
            .into_iter()
            .zip(&self.u)
            .zip(v)
            .map(|((w, u), v)| w * (u * (n - 1) as f64).exp() * v)
            .collect()
    }
}

/// Mean curvature `H = κ_meridian + (n-2) κ_rotational` at every node.
pub fn mean_curvature_field(graph: &RadialGraph) -> Vec<f64> {
    let nm2 = graph.cone.n() as f64 - 2.0;
    graph
        .principal_curvatures()
        .iter()
        .map(|k| k.meridian + nm2 * k.rotational)
        .collect()
}

/// Mean curvature field, failing on the first node with `H <= 0`.
pub fn positive_mean_curvature(graph: &RadialGraph) -> Result<Vec<f64>> {
    let h = mean_curvature_field(graph);
    let dtheta = graph.spacing();
    if let Some((i, v)) = h.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveMeanCurvature {
            node: i,
            theta: i as f64 * dtheta,
            value: *v,
        });
    }
    Ok(h)
}

/// `|A|^2 = κ_meridian^2 + (n-2) κ_rotational^2` at every node.
pub fn second_fundamental_form_norm2(graph: &RadialGraph) -> Vec<f64> {
    let nm2 = graph.cone.n() as f64 - 2.0;
    graph
        .principal_curvatures()
        .iter()
        .map(|k| k.meridian * k.meridian + nm2 * k.rotational * k.rotational)
        .collect()
}

/// `max_i |H_i^2 - (n-1)|A_i|^2|`; zero exactly on umbilical graphs.
pub fn umbilicity_residual(graph: &RadialGraph) -> f64 {
    let nm1 = graph.cone.n() as f64 - 1.0;
    mean_curvature_field(graph)
        .iter()
        .zip(second_fundamental_form_norm2(graph))
        .map(|(h, a2)| (h * h - nm1 * a2).abs())
        .fold(0.0, f64::max)
}

pub fn functionals(graph: &RadialGraph) -> SurfaceFunctionals {
    let n = graph.cone.n() as f64;
    let h = mean_curvature_field(graph);
    let aw = graph.area_weights();
    let area = aw.iter().sum();
    let total_mean_curvature = aw.iter().zip(&h).map(|(w, h)| w * h).sum();
    let volume = graph
        .link_weights()
        .iter()
        .zip(graph.log_radius())
        .map(|(w, u)| w * (n * u).exp() / n)
        .sum();
    SurfaceFunctionals {
        area,
        volume,
        total_mean_curvature,
        min_h: h.iter().cloned().fold(f64::INFINITY, f64::min),
        umbilicity_residual: umbilicity_residual(graph),
    }
}

impl SurfaceFunctionals {
    /// `area - isoperimetric_bound(volume)`; non-negative up to quadrature error.
    pub fn isoperimetric_margin(&self, cone: &ConeSpec) -> f64 {
        self.area - isoperimetric_bound(cone, self.volume)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn half3() -> ConeSpec {
        ConeSpec::half_space(3).unwrap()
    }

    #[test]
    fn legendre_values() {
        assert_eq!(legendre(2, 0.0), -0.5);
        assert!((legendre(4, 0.5) - (35.0 / 16.0 - 30.0 / 4.0 + 3.0) / 8.0).abs() < 1e-15);
        assert!((legendre(6, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cap_has_constant_mean_curvature() {
        let g = RadialGraph::cap(ConeSpec::new(4, 1.0).unwrap(), 32, 2.0).unwrap();
        for h in mean_curvature_field(&g) {
            assert!((h - 1.5).abs() < 1e-13);
        }
        assert!(umbilicity_residual(&g) < 1e-10);
    }

    #[test]
    fn unit_cap_functionals() {
        let g = RadialGraph::cap(half3(), 256, 1.0).unwrap();
        let f = functionals(&g);
        assert!((f.area - 2.0 * PI).abs() < 1e-6);
        assert!((f.volume - 2.0 * PI / 3.0).abs() < 1e-6);
        assert!((f.total_mean_curvature - 4.0 * PI).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(RadialGraph::from_log_radius(half3(), vec![0.0; 4]).is_err());
        assert!(RadialGraph::from_radius_fn(half3(), 8, |t| t - 0.5).is_err());
        assert!(RadialGraph::perturbed_cap(half3(), 8, 1.0, 0.7, 2).is_err());
        assert!(RadialGraph::perturbed_cap(half3(), 8, 1.0, 0.1, 3).is_err());
    }

    #[test]
    fn positivity_check_reports_node() {
        // A deep dimple at the pole makes H negative there.
        let g = RadialGraph::from_radius_fn(half3(), 64, |t| 1.0 - 0.45 * (-(t * t) / 0.02).exp())
            .unwrap();
        match positive_mean_curvature(&g) {
            Err(Error::NonPositiveMeanCurvature { node, .. }) => assert!(node < 10),
            other => panic!("expected positivity failure, got {other:?}"),
        }
    }

    #[test]
    fn perturbed_cap_meets_wall_orthogonally() {
        for theta0 in [FRAC_PI_2, PI / 3.0] {
            let cone = ConeSpec::new(3, theta0).unwrap();
            let coarse = RadialGraph::perturbed_cap(cone, 32, 1.0, 0.2, 2).unwrap();
            let fine = RadialGraph::perturbed_cap(cone, 64, 1.0, 0.2, 2).unwrap();
            let (a1, w1) = coarse.neumann_defect();
            let (a2, w2) = fine.neumann_defect();
            assert!(a2.abs() < 1e-3 && w2.abs() < 1e-3);
            // one-sided slope defect is O(h^2)
            assert!(w1.abs() / w2.abs().max(1e-300) > 3.5 || w2.abs() < 1e-12);
            assert!(a1.abs() / a2.abs().max(1e-300) > 3.5 || a2.abs() < 1e-12);
        }
    }

    #[test]
    fn resample_preserves_smooth_profile() {
        let g = RadialGraph::perturbed_cap(half3(), 64, 1.0, 0.1, 2).unwrap();
        let r = g.resample(96).unwrap();
        let exact = RadialGraph::perturbed_cap(half3(), 96, 1.0, 0.1, 2).unwrap();
        for (a, b) in r.log_radius().iter().zip(exact.log_radius()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profile.csv");
        let g = RadialGraph::perturbed_cap(half3(), 40, 1.3, 0.1, 4).unwrap();
        g.write_csv(&path).unwrap();
        let back = RadialGraph::read_csv(half3(), 40, &path).unwrap();
        for (a, b) in g.log_radius().iter().zip(back.log_radius()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_rejects_non_orthogonal_profile() {
        let theta: Vec<f64> = (0..=20).map(|i| i as f64 * FRAC_PI_2 / 20.0).collect();
        let rho: Vec<f64> = theta.iter().map(|t| 1.0 + 0.3 * t).collect();
        assert!(RadialGraph::from_samples(half3(), 32, &theta, &rho).is_err());
    }
}
