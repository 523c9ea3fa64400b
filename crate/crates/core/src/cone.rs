//! Rotationally symmetric convex cones and their spherical-cap sectors.
//!
//! A cone is described by its dimension `n` and the half-angle `theta0` of its
//! circular cross-section, measured from the axis. `theta0 = π/2` is the
//! half-space. The link measure
//!
//! ```text
//! alpha = |S^{n-2}| ∫_0^{theta0} sin^{n-2}θ dθ
//! ```
//!
//! is the (n-1)-measure of the cone's cross-section on the unit sphere; a
//! cap of radius `r` has area `alpha r^{n-1}` and encloses volume `alpha r^n / n`.
//! Every equality case of the capacity and curvature inequalities is a cap.

use crate::error::{Error, Result};
use crate::numerics::{adaptive_simpson, sphere_measure};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// A circular convex cone in `R^n` with vertex at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    n: usize,
    theta0: f64,
    alpha: f64,
}

impl ConeSpec {
    /// Build a cone of dimension `n >= 3` with half-angle `theta0 ∈ (0, π/2]` (radians).
    pub fn new(n: usize, theta0: f64) -> Result<Self> {
        let alpha = solid_angle(n, theta0)?;
        Ok(ConeSpec { n, theta0, alpha })
    }

    /// Half-space `x_n > 0` in dimension `n`.
    pub fn half_space(n: usize) -> Result<Self> {
        Self::new(n, FRAC_PI_2)
    }

    /// Build from a half-angle in degrees.
    pub fn from_degrees(n: usize, theta0_deg: f64) -> Result<Self> {
        Self::new(n, theta0_deg.to_radians())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    /// Link measure `alpha_{n-1}`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_half_space(&self) -> bool {
        (self.theta0 - FRAC_PI_2).abs() < 1e-14
    }

    /// Volume of the unit sector `C ∩ {|x| <= 1}`.
    pub fn unit_sector_volume(&self) -> f64 {
        self.alpha / self.n as f64
    }

    /// Density of the link measure in θ: `|S^{n-2}| sin^{n-2}θ`.
    pub fn link_density(&self, theta: f64) -> f64 {
        sphere_measure(self.n - 2) * theta.sin().powi(self.n as i32 - 2)
    }

    /// Exact link measure of `[a, b] ⊂ [0, theta0]`.
    pub fn link_measure(&self, a: f64, b: f64) -> f64 {
        let k = self.n as i32 - 2;
        sphere_measure(self.n - 2) * sin_power_integral(k, a, b)
    }

    /// `(n-1) alpha^{1/(n-1)}`: the value of `I / Area^{(n-2)/(n-1)}` on every cap.
    pub fn round_h_limit(&self) -> f64 {
        let nm1 = self.n as f64 - 1.0;
        nm1 * self.alpha.powf(1.0 / nm1)
    }
}

/// `∫_a^b sin^k θ dθ` from the reduction formula; exact for integer `k >= 0`.
pub(crate) fn sin_power_integral(k: i32, a: f64, b: f64) -> f64 {
    match k {
        0 => b - a,
        1 => a.cos() - b.cos(),
        _ => {
            let kf = k as f64;
            let boundary =
                |t: f64| -> f64 { -t.sin().powi(k - 1) * t.cos() / kf };
            boundary(b) - boundary(a) + (kf - 1.0) / kf * sin_power_integral(k - 2, a, b)
        }
    }
}

/// Link measure `alpha_{n-1}` of the circular cone of half-angle `theta0`,
/// by adaptive quadrature of `|S^{n-2}| ∫_0^{theta0} sin^{n-2}θ dθ`.
pub fn solid_angle(n: usize, theta0: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::Domain(format!("dimension n = {n} must be at least 3")));
    }
    if !(theta0 > 0.0 && theta0 <= FRAC_PI_2 + 1e-15) || !theta0.is_finite() {
        return Err(Error::Domain(format!(
            "half-angle {theta0} rad outside (0, π/2]; the cone would not be convex"
        )));
    }
    let k = n as i32 - 2;
    let integral = adaptive_simpson(&|t: f64| t.sin().powi(k), 0.0, theta0, 1e-15);
    Ok(sphere_measure(n - 2) * integral)
}

/// `C ∩ {|x| <= r}` for a cone `C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapSector {
    pub cone: ConeSpec,
    pub r: f64,
}

/// Closed-form functionals of a cap sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapMetrics {
    pub area: f64,
    pub volume: f64,
    pub total_mean_curvature: f64,
    pub capacity: f64,
}

impl CapSector {
    pub fn new(cone: ConeSpec, r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("cap radius {r} must be positive")));
        }
        Ok(CapSector { cone, r })
    }

    pub fn metrics(&self) -> CapMetrics {
        cap_metrics(self)
    }
}

pub fn cap_metrics(sector: &CapSector) -> CapMetrics {
    let n = sector.cone.n as i32;
    let a = sector.cone.alpha;
    let r = sector.r;
    CapMetrics {
        area: a * r.powi(n - 1),
        volume: a * r.powi(n) / n as f64,
        total_mean_curvature: (n - 1) as f64 * a * r.powi(n - 2),
        capacity: r.powi(n - 2),
    }
}

/// Lower bound `n Vol(C ∩ B_1)^{1/n} V^{(n-1)/n}` for the area of any
/// free-boundary hypersurface enclosing volume `V` in the cone.
pub fn isoperimetric_bound(cone: &ConeSpec, volume: f64) -> f64 {
    let n = cone.n as f64;
    n * cone.unit_sector_volume().powf(1.0 / n) * volume.max(0.0).powf((n - 1.0) / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn half_space_solid_angles() {
        assert!((solid_angle(3, FRAC_PI_2).unwrap() - 2.0 * PI).abs() < 1e-12);
        assert!((solid_angle(4, FRAC_PI_2).unwrap() - PI * PI).abs() < 1e-12 * PI * PI);
        let omega4 = sphere_measure(4);
        assert!((solid_angle(5, FRAC_PI_2).unwrap() - omega4 / 2.0).abs() < 1e-12 * omega4);
    }

    #[test]
    fn closed_forms_match_quadrature() {
        for t in [0.1, 0.5, PI / 3.0, 1.2, FRAC_PI_2] {
            let q3 = solid_angle(3, t).unwrap();
            let c3 = 2.0 * PI * (1.0 - t.cos());
            assert!((q3 - c3).abs() <= 1e-12 * c3, "n=3 theta0={t}");
            // n = 4: |S^2| (θ/2 - sin 2θ / 4)
            let q4 = solid_angle(4, t).unwrap();
            let c4 = 4.0 * PI * (t / 2.0 - (2.0 * t).sin() / 4.0);
            assert!((q4 - c4).abs() <= 1e-12 * c4, "n=4 theta0={t}");
            let cone = ConeSpec::new(5, t).unwrap();
            let exact = cone.link_measure(0.0, t);
            assert!((exact - cone.alpha()).abs() <= 1e-10 * exact);
        }
        assert!((solid_angle(3, PI / 3.0).unwrap() - PI).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_convex_and_low_dimension() {
        assert!(matches!(ConeSpec::from_degrees(3, 120.0), Err(Error::Domain(_))));
        assert!(matches!(solid_angle(2, 1.0), Err(Error::Domain(_))));
        assert!(matches!(solid_angle(3, 0.0), Err(Error::Domain(_))));
        assert!(matches!(solid_angle(3, f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn cap_metrics_half_space_unit() {
        let cone = ConeSpec::half_space(3).unwrap();
        let m = CapSector::new(cone, 1.0).unwrap().metrics();
        assert!((m.area - 2.0 * PI).abs() < 1e-12);
        assert!((m.volume - 2.0 * PI / 3.0).abs() < 1e-12);
        assert!((m.total_mean_curvature - 4.0 * PI).abs() < 1e-12);
        assert_eq!(m.capacity, 1.0);
    }

    #[test]
    fn isoperimetric_examples() {
        let c = ConeSpec::half_space(3).unwrap();
        assert!((isoperimetric_bound(&c, 2.0 * PI / 3.0) - 2.0 * PI).abs() < 1e-12);
        let c60 = ConeSpec::new(3, PI / 3.0).unwrap();
        assert!((isoperimetric_bound(&c60, PI / 3.0) - PI).abs() < 1e-12);
        let b1 = isoperimetric_bound(&c60, 1.7);
        let b8 = isoperimetric_bound(&c60, 8.0 * 1.7);
        assert!((b8 / b1 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sector_radius_rejects_nonpositive() {
        let cone = ConeSpec::half_space(3).unwrap();
        assert!(CapSector::new(cone, 0.0).is_err());
    }
}
