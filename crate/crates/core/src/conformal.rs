//! Conformally flat metrics `g = u^{4/(n-2)} δ` on the exterior of Σ in the
//! half-space, their curvature, and their mass.
//!
//! The mass is normalized so that the half Schwarzschild factor
//! `u = 1 + (m/2)|x|^{2-n}` has mass `m`. For a conformally flat metric the
//! hemisphere flux integral `∫ (g_ij,j - g_jj,i) x_i/r` reduces to
//!
//! ```text
//! m = -(4 / ((n-2) ω)) ∫_{S_r^+} u^{(6-n)/(n-2)} ∂_r u dσ,      ω = |S^{n-1}|,
//! ```
//!
//! and the wall line integral vanishes because `g` is diagonal. Combining the
//! divergence theorem on `M` with the conformal transformation laws
//!
//! ```text
//! R_g = -(4(n-1)/(n-2)) u^{-(n+2)/(n-2)} Δu
//! H_g = u^{-n/(n-2)} ((2(n-1)/(n-2)) ∂_N u + H u)
//! ```
//!
//! gives the mass identity
//!
//! ```text
//! m = (1/((n-1)ω)) ∫_M R_g u^{(n+2)/(n-2)} dv + (2/((n-1)ω)) ∫_Σ (H u - u^{n/(n-2)} H_g) dσ
//!     + (4/((n-2)ω)) ∫_S D_μ u dσ,
//! ```
//!
//! exact for factors that are harmonic beyond the grid. `N` is the normal of
//! Σ pointing away from Ω and `μ` the outward normal of `M` along the wall.

use crate::capacity::{capacity, CapacityResult, ExteriorGrid, Weight};
use crate::cone::ConeSpec;
use crate::error::{Error, Result};
use crate::numerics::{fd_weights, interpolate_uniform, simpson_weights, sphere_measure};
use crate::surface::{functionals, mean_curvature_field, RadialGraph};
use serde::Serialize;

/// Stencil width for derivatives of the conformal factor.
const STENCIL: usize = 6;
/// Fit residual (relative rms) above which the far-field mass is flagged.
pub const EXPANSION_RESIDUAL_LIMIT: f64 = 1e-3;
/// Relative agreement expected between the three mass estimates.
pub const MASS_AGREEMENT: f64 = 1e-2;

/// Positive conformal factor sampled on a half-space exterior grid.
#[derive(Debug, Clone)]
pub struct ConformalFactorField {
    grid: ExteriorGrid,
    u: Vec<f64>,
}

impl ConformalFactorField {
    pub fn new(grid: ExteriorGrid, u: Vec<f64>) -> Result<Self> {
        if !grid.cone().is_half_space() {
            return Err(Error::Domain(format!(
                "conformal factors live on the half-space; got half-angle {:.6} rad",
                grid.cone().theta0()
            )));
        }
        if u.len() != grid.node_count() {
            return Err(Error::Domain(format!(
                "factor has {} values for {} nodes",
                u.len(),
                grid.node_count()
            )));
        }
        if let Some(k) = u.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!("conformal factor not positive at node {k}")));
        }
        Ok(ConformalFactorField { grid, u })
    }

    /// Sample `f(r, θ)` at every node.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: ExteriorGrid, f: F) -> Result<Self> {
        let u = grid.sample(f);
        Self::new(grid, u)
    }

    pub fn grid(&self) -> &ExteriorGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// `u` on Σ, one value per ray.
    pub fn sigma_values(&self) -> Vec<f64> {
        (0..=self.grid.m_theta()).map(|j| self.u[self.grid.index(0, j)]).collect()
    }

    /// `u` along the wall, one value per radial node.
    pub fn wall_values(&self) -> Vec<f64> {
        let j = self.grid.m_theta();
        (0..=self.grid.m_s()).map(|i| self.u[self.grid.index(i, j)]).collect()
    }

    /// Inner radius `u̲ = min_Σ u`.
    pub fn inner_radius(&self) -> f64 {
        self.sigma_values().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Interpolated value at a point of `R^n` with `|x|` inside the grid's
    /// radial range; reflected evenly across the wall `x_n = 0`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rho = x[..n - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
        let theta = rho.atan2(x[n - 1].abs());
        let g = &self.grid;
        let tj = theta / g.dtheta();
        let b = interpolate_uniform(g.graph().log_radius(), tj, STENCIL);
        let len = g.s_max() - b;
        let xi = (r.ln() - b) / len * g.m_s() as f64;

        let (jt, wt) = axis_even_interp(tj, g.m_theta());
        let (is, ws) = clamped_interp(xi, g.m_s());
        let mut acc = 0.0;
        for (a, wa) in ws.iter().enumerate() {
            let i = is + a;
            for (c, wc) in wt.iter().enumerate() {
                let j = (jt + c as isize).unsigned_abs();
                acc += wa * wc * self.u[g.index(i, j)];
            }
        }
        acc
    }
}

/// Interpolation stencil in θ (fractional index `x` on `0..=m`) with even
/// ghosts below the axis.
fn axis_even_interp(x: f64, m: usize) -> (isize, Vec<f64>) {
    let half = STENCIL as isize / 2;
    let base = x.floor() as isize;
    let start = (base + 1 - half).min(m as isize + 1 - STENCIL as isize);
    let xs: Vec<f64> = (0..STENCIL).map(|k| (start + k as isize) as f64).collect();
    (start, fd_weights(x, &xs, 0).swap_remove(0))
}

fn clamped_interp(x: f64, m: usize) -> (usize, Vec<f64>) {
    let w = STENCIL.min(m + 1);
    let i = (x.floor().max(0.0) as usize).min(m);
    let start = if i + 1 < w / 2 { 0 } else { (i + 1 - w / 2).min(m + 1 - w) };
    let xs: Vec<f64> = (start..start + w).map(|k| k as f64).collect();
    (start, fd_weights(x, &xs, 0).swap_remove(0))
}

/// Per-node θ-derivative stencils on `0..=m`: even ghosts below the axis,
/// one-sided at the wall so wall derivatives are measured, not imposed.
struct ThetaStencils {
    starts: Vec<isize>,
    weights: Vec<Vec<f64>>,
}

impl ThetaStencils {
    fn new(m: usize, h: f64, d: usize) -> Self {
        let half = STENCIL as isize / 2;
        let mut starts = Vec::with_capacity(m + 1);
        let mut weights = Vec::with_capacity(m + 1);
        for j in 0..=m as isize {
            let start = (j - half).min(m as isize + 1 - STENCIL as isize);
            let xs: Vec<f64> = (0..STENCIL).map(|k| k as f64).collect();
            let w = fd_weights((j - start) as f64, &xs, d).swap_remove(d);
            starts.push(start);
            weights.push(w.into_iter().map(|c| c / h.powi(d as i32)).collect());
        }
        ThetaStencils { starts, weights }
    }

    fn apply(&self, row: &[f64], j: usize) -> f64 {
        let s = self.starts[j];
        self.weights[j]
            .iter()
            .enumerate()
            .map(|(k, w)| w * row[(s + k as isize).unsigned_abs()])
            .sum()
    }

    fn apply_all(&self, row: &[f64]) -> Vec<f64> {
        (0..row.len()).map(|j| self.apply(row, j)).collect()
    }
}

/// Derivatives of `u` in the log-radial coordinates `(s, θ)` at every node.
struct PolarDerivatives {
    us: Vec<f64>,
    uss: Vec<f64>,
    /// `∂_θ u` at fixed `s`.
    ut: Vec<f64>,
    utt: Vec<f64>,
}

fn polar_derivatives(grid: &ExteriorGrid, u: &[f64]) -> PolarDerivatives {
    let (ms, mt) = (grid.m_s(), grid.m_theta());
    let stride = mt + 1;
    let dth = grid.dtheta();
    let d1 = ThetaStencils::new(mt, dth, 1);
    let d2 = ThetaStencils::new(mt, dth, 2);

    let b: Vec<f64> = (0..=mt).map(|j| grid.surface_u(j)).collect();
    let db = d1.apply_all(&b);
    let d2b = d2.apply_all(&b);

    // ξ-derivatives column by column
    let mut uxi = vec![0.0; u.len()];
    let mut uxixi = vec![0.0; u.len()];
    for j in 0..=mt {
        let c1 = grid.column_derivative(u, j, 1);
        let c2 = grid.column_derivative(u, j, 2);
        for i in 0..=ms {
            uxi[i * stride + j] = c1[i];
            uxixi[i * stride + j] = c2[i];
        }
    }

    let mut out = PolarDerivatives {
        us: vec![0.0; u.len()],
        uss: vec![0.0; u.len()],
        ut: vec![0.0; u.len()],
        utt: vec![0.0; u.len()],
    };
    for i in 0..=ms {
        let row = &u[i * stride..(i + 1) * stride];
        let row_xi = &uxi[i * stride..(i + 1) * stride];
        let xi = grid.xi(i);
        for j in 0..=mt {
            let k = i * stride + j;
            let len = grid.ray_length(j);
            let u_t = d1.apply(row, j);
            let u_tt = d2.apply(row, j);
            let u_xt = d1.apply(row_xi, j);
            // ξ = (s - b(θ)) / (s_max - b(θ)) at fixed s
            let xi_t = -db[j] * (1.0 - xi) / len;
            let xi_tt = -d2b[j] * (1.0 - xi) / len - 2.0 * db[j] * db[j] * (1.0 - xi) / (len * len);
            out.us[k] = uxi[k] / len;
            out.uss[k] = uxixi[k] / (len * len);
            out.ut[k] = u_t + xi_t * uxi[k];
            out.utt[k] = u_tt + 2.0 * xi_t * u_xt + xi_t * xi_t * uxixi[k] + xi_tt * uxi[k];
        }
    }
    out
}

/// Curvature of `g = u^{4/(n-2)} δ` on the grid.
#[derive(Debug, Clone)]
pub struct ConformalCurvatures {
    /// Flat Laplacian `Δu` at every node.
    pub laplacian: Vec<f64>,
    /// Scalar curvature `R_g` at every node.
    pub scalar: Vec<f64>,
    /// `∂_N u` on Σ, one value per ray.
    pub sigma_normal_derivative: Vec<f64>,
    /// `H_g` on Σ, one value per ray.
    pub sigma_mean_curvature: Vec<f64>,
    /// `D_μ u` along the wall, one value per radial node.
    pub wall_normal_derivative: Vec<f64>,
    /// `H_g` along the wall (the flat wall has `H = 0`).
    pub wall_mean_curvature: Vec<f64>,
}

impl ConformalCurvatures {
    /// `max |R_g|` over nodes off Σ and off the outer boundary.
    pub fn max_interior_scalar(&self, grid: &ExteriorGrid) -> f64 {
        let stride = grid.m_theta() + 1;
        self.scalar[stride..grid.node_count() - stride]
            .iter()
            .fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max_sigma_mean_curvature(&self) -> f64 {
        self.sigma_mean_curvature.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max_wall_mean_curvature(&self) -> f64 {
        self.wall_mean_curvature.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

pub fn conformal_curvatures(field: &ConformalFactorField) -> ConformalCurvatures {
    let grid = &field.grid;
    let u = &field.u;
    let n = grid.n() as f64;
    let nm2 = n - 2.0;
    let (ms, mt) = (grid.m_s(), grid.m_theta());
    let stride = mt + 1;
    let d = polar_derivatives(grid, u);

    let mut laplacian = vec![0.0; u.len()];
    let mut scalar = vec![0.0; u.len()];
    for i in 0..=ms {
        for j in 0..=mt {
            let k = i * stride + j;
            let theta = grid.theta(j);
            let rot = if j == 0 {
                d.utt[k]
            } else {
                d.ut[k] * theta.cos() / theta.sin()
            };
            let s = grid.s(i, j);
            let lap = (-2.0 * s).exp() * (d.uss[k] + nm2 * d.us[k] + d.utt[k] + nm2 * rot);
            laplacian[k] = lap;
            scalar[k] = -4.0 * (n - 1.0) / nm2 * lap * u[k].powf(-(n + 2.0) / nm2);
        }
    }

    let h_flat = mean_curvature_field(grid.graph());
    let mut sigma_normal_derivative = Vec::with_capacity(stride);
    let mut sigma_mean_curvature = Vec::with_capacity(stride);
    for j in 0..=mt {
        let b1 = grid.surface_du(j);
        let r = grid.surface_u(j).exp();
        let v = (1.0 + b1 * b1).sqrt();
        let dn = (d.us[j] - b1 * d.ut[j]) / (r * v);
        sigma_normal_derivative.push(dn);
        sigma_mean_curvature.push(
            u[j].powf(-n / nm2) * (2.0 * (n - 1.0) / nm2 * dn + h_flat[j] * u[j]),
        );
    }

    let mut wall_normal_derivative = Vec::with_capacity(ms + 1);
    let mut wall_mean_curvature = Vec::with_capacity(ms + 1);
    for i in 0..=ms {
        let k = i * stride + mt;
        let dmu = d.ut[k] / grid.radius(i, mt);
        wall_normal_derivative.push(dmu);
        wall_mean_curvature.push(u[k].powf(-n / nm2) * 2.0 * (n - 1.0) / nm2 * dmu);
    }

    ConformalCurvatures {
        laplacian,
        scalar,
        sigma_normal_derivative,
        sigma_mean_curvature,
        wall_normal_derivative,
        wall_mean_curvature,
    }
}

/// Half Schwarzschild factor `u = 1 + (m/2)|x|^{2-n}` on the half-space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HalfSchwarzschild {
    pub n: usize,
    pub mass: f64,
    /// `R = (m/2)^{1/(n-2)}`, where `u = 2`.
    pub horizon_radius: f64,
}

impl HalfSchwarzschild {
    pub fn new(n: usize, mass: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::Domain(format!("dimension n = {n} must be at least 3")));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Domain(format!("mass {mass} must be positive")));
        }
        Ok(HalfSchwarzschild {
            n,
            mass,
            horizon_radius: (mass / 2.0).powf(1.0 / (n as f64 - 2.0)),
        })
    }

    pub fn factor(&self, r: f64) -> f64 {
        1.0 + 0.5 * self.mass * r.powi(2 - self.n as i32)
    }

    /// The horizon `|x| = R` as a radial graph with `m_theta` intervals.
    pub fn horizon(&self, m_theta: usize) -> Result<RadialGraph> {
        RadialGraph::cap(ConeSpec::half_space(self.n)?, m_theta, self.horizon_radius)
    }
}

pub fn schwarzschild_field(model: &HalfSchwarzschild, grid: &ExteriorGrid) -> Result<ConformalFactorField> {
    if grid.n() != model.n {
        return Err(Error::Domain(format!(
            "grid dimension {} does not match model dimension {}",
            grid.n(),
            model.n
        )));
    }
    ConformalFactorField::from_fn(grid.clone(), |r, _| model.factor(r))
}

/// Far-field mass from a least-squares fit of `u - 1 ≈ c r^{2-n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionFit {
    /// `2c`.
    pub mass: f64,
    /// Relative rms residual of the fit.
    pub residual: f64,
    pub degraded: bool,
}

/// Fit over the outer 20% of radial rings.
pub fn mass_from_expansion(field: &ConformalFactorField) -> ExpansionFit {
    let g = &field.grid;
    let p = 2 - g.n() as i32;
    let first = (0.8 * g.m_s() as f64).ceil() as usize;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    let mut pts = Vec::new();
    for i in first..=g.m_s() {
        for j in 0..=g.m_theta() {
            let x = g.radius(i, j).powi(p);
            let y = field.u[g.index(i, j)] - 1.0;
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
            pts.push((x, y));
        }
    }
    let c = sxy / sxx;
    let res2: f64 = pts.iter().map(|(x, y)| (y - c * x).powi(2)).sum();
    let residual = if syy > 0.0 { (res2 / syy).sqrt() } else { 0.0 };
    ExpansionFit {
        mass: 2.0 * c,
        residual,
        degraded: residual > EXPANSION_RESIDUAL_LIMIT,
    }
}

/// Terms of the mass identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassIdentity {
    pub mass: f64,
    /// `(1/((n-1)ω)) ∫_M R_g u^{(n+2)/(n-2)} dv`.
    pub volume_term: f64,
    /// `(2/((n-1)ω)) ∫_Σ H u dσ`.
    pub sigma_term: f64,
    /// `-(2/((n-1)ω)) ∫_Σ u^{n/(n-2)} H_g dσ`.
    pub horizon_term: f64,
    /// `(4/((n-2)ω)) ∫_S D_μ u dσ`.
    pub wall_term: f64,
}

pub fn mass_identity(field: &ConformalFactorField) -> MassIdentity {
    mass_identity_with(field, &conformal_curvatures(field))
}

fn mass_identity_with(field: &ConformalFactorField, curv: &ConformalCurvatures) -> MassIdentity {
    let g = &field.grid;
    let n = g.n();
    let nf = n as f64;
    let nm2 = nf - 2.0;
    let omega = sphere_measure(n - 1);
    let (ms, mt) = (g.m_s(), g.m_theta());
    let stride = mt + 1;
    let wxi = simpson_weights(ms, g.dxi());
    let wth = simpson_weights(mt, g.dtheta());

    let mut volume = 0.0;
    for i in 0..=ms {
        for j in 0..=mt {
            let k = i * stride + j;
            // dv = r^n ds dμ = e^{ns} L dξ dμ
            let dv = wxi[i] * wth[j] * g.cone().link_density(g.theta(j)) * (nf * g.s(i, j)).exp() * g.ray_length(j);
            let rg_u = -4.0 * (nf - 1.0) / nm2 * curv.laplacian[k];
            volume += rg_u * dv;
        }
    }

    let aw = g.graph().area_weights();
    let h = mean_curvature_field(g.graph());
    let (mut sigma, mut horizon) = (0.0, 0.0);
    for j in 0..=mt {
        let u = field.u[j];
        sigma += aw[j] * h[j] * u;
        horizon += aw[j] * u.powf(nf / nm2) * curv.sigma_mean_curvature[j];
    }

    let sphere = sphere_measure(n - 2);
    let wall: f64 = (0..=ms)
        .map(|i| {
            let s = g.s(i, mt);
            // D_μu dσ = (u_θ / r) |S^{n-2}| r^{n-2} dr, dr = r L dξ
            wxi[i] * curv.wall_normal_derivative[i] * sphere * ((nf - 1.0) * s).exp() * g.ray_length(mt)
        })
        .sum();

    let volume_term = volume / ((nf - 1.0) * omega);
    let sigma_term = 2.0 * sigma / ((nf - 1.0) * omega);
    let horizon_term = -2.0 * horizon / ((nf - 1.0) * omega);
    let wall_term = 4.0 * wall / (nm2 * omega);
    MassIdentity {
        mass: volume_term + sigma_term + horizon_term + wall_term,
        volume_term,
        sigma_term,
        horizon_term,
        wall_term,
    }
}

/// Reduced hemisphere flux `-(4/((n-2)ω)) ∫ u^{(6-n)/(n-2)} ∂_r u dσ` at radius `r`.
pub fn mass_flux_at(field: &ConformalFactorField, r: f64) -> Result<f64> {
    let g = &field.grid;
    let n = g.n();
    let nf = n as f64;
    let nm2 = nf - 2.0;
    let s = r.ln();
    let mt = g.m_theta();
    let wth = simpson_weights(mt, g.dtheta());
    let mut total = 0.0;
    for j in 0..=mt {
        let xi = (s - g.surface_u(j)) / g.ray_length(j);
        if !(0.5..=1.0 + 1e-12).contains(&xi) {
            return Err(Error::Domain(format!(
                "flux sphere r = {r:.4} leaves the outer half of the grid on ray {j}"
            )));
        }
        let col: Vec<f64> = (0..=g.m_s()).map(|i| field.u[g.index(i, j)]).collect();
        let dcol = g.column_derivative(&field.u, j, 1);
        let x = xi * g.m_s() as f64;
        let u = interpolate_uniform(&col, x, STENCIL);
        let u_xi = interpolate_uniform(&dcol, x, STENCIL);
        let ur = u_xi / g.ray_length(j) / r;
        total += wth[j] * g.cone().link_density(g.theta(j)) * u.powf((6.0 - nf) / nm2) * ur;
    }
    let omega = sphere_measure(n - 1);
    Ok(-4.0 / (nm2 * omega) * total * r.powi(n as i32 - 1))
}

/// Radii of the two flux stations.
pub fn flux_stations(grid: &ExteriorGrid) -> (f64, f64) {
    let outer = grid.s_max().exp();
    (0.8 * outer, outer)
}

/// Mass from the reduced flux at `0.8 e^{s_max}` and `e^{s_max}`, extrapolated linearly in `1/r`.
pub fn mass_flux(field: &ConformalFactorField) -> Result<f64> {
    let (r1, r2) = flux_stations(&field.grid);
    let m1 = mass_flux_at(field, r1)?;
    let m2 = mass_flux_at(field, r2)?;
    Ok((r2 * m2 - r1 * m1) / (r2 - r1))
}

/// Flux integrals of a general axisymmetric metric at radius `r`, normalized
/// like [`mass_flux_at`]: `(hemisphere, wall)` parts.
///
/// `metric(x)` returns `g_ij` at `x ∈ R^n`; derivatives use fourth-order
/// central differences with step `step`. Axisymmetry about `x_n` reduces the
/// hemisphere to its meridian.
pub fn adm_flux_general<F>(metric: F, n: usize, r: f64, quad_points: usize, step: f64) -> (f64, f64)
where
    F: Fn(&[f64]) -> Vec<Vec<f64>>,
{
    let nf = n as f64;
    let derivative = |x: &[f64], a: usize| -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; n]; n];
        for (k, c) in [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)] {
            let mut y = x.to_vec();
            y[a] += k * step;
            let g = metric(&y);
            for i in 0..n {
                for j in 0..n {
                    out[i][j] += c * g[i][j] / (12.0 * step);
                }
            }
        }
        out
    };
    let m = quad_points + quad_points % 2;
    let h = std::f64::consts::FRAC_PI_2 / m as f64;
    let w = simpson_weights(m, h);
    let mut hemi = 0.0;
    for (q, wq) in w.iter().enumerate() {
        let theta = q as f64 * h;
        let mut x = vec![0.0; n];
        x[0] = r * theta.sin();
        x[n - 1] = r * theta.cos();
        let dg: Vec<Vec<Vec<f64>>> = (0..n).map(|a| derivative(&x, a)).collect();
        let mut integrand = 0.0;
        for i in 0..n {
            let mut div = 0.0;
            let mut trace = 0.0;
            for j in 0..n {
                div += dg[j][i][j];
                trace += dg[i][j][j];
            }
            integrand += (div - trace) * x[i] / r;
        }
        hemi += wq * integrand * sphere_measure(n - 2) * theta.sin().powi(n as i32 - 2);
    }
    hemi *= r.powi(n as i32 - 1);
    let mut xw = vec![0.0; n];
    xw[0] = r;
    let wall = metric(&xw)[0][n - 1] * sphere_measure(n - 2) * r.powi(n as i32 - 2);
    let norm = (nf - 1.0) * sphere_measure(n - 1);
    (hemi / norm, wall / norm)
}

/// [`mass_flux`] recomputed from `g_ij = u^{4/(n-2)} δ_ij` through the
/// general flux integrand; slower, used to validate the reduced formula.
pub fn mass_flux_general(field: &ConformalFactorField) -> Result<f64> {
    let n = field.n();
    let p = 4.0 / (n as f64 - 2.0);
    let metric = |x: &[f64]| -> Vec<Vec<f64>> {
        let f = field.eval(x).powf(p);
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { f } else { 0.0 }).collect())
            .collect()
    };
    let (r1, r2) = flux_stations(&field.grid);
    // stay inside the grid for the finite-difference stencil
    let (r1, r2) = (r1 * 0.97, r2 * 0.97);
    let quad = field.grid.m_theta();
    let at = |r: f64| {
        let (h, w) = adm_flux_general(metric, n, r, quad, 1e-3 * r);
        h + w
    };
    let (m1, m2) = (at(r1), at(r2));
    Ok((r2 * m2 - r1 * m1) / (r2 - r1))
}

/// Tolerances for the membership flags of a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenroseTolerances {
    /// Allowed positive part of the discrete `Δu`.
    pub laplacian: f64,
    /// Allowed negative part of `D_μu` and size of `H_g` for minimality.
    pub boundary: f64,
    /// Allowed deviation of `u|_Σ` from 2.
    pub factor: f64,
}

impl Default for PenroseTolerances {
    fn default() -> Self {
        PenroseTolerances {
            laplacian: 1e-4,
            boundary: 1e-4,
            factor: 1e-8,
        }
    }
}

/// Flat JSON summary of the mass–capacity inequalities for one factor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PenroseReport {
    pub n: usize,
    /// Headline mass: the far-field fit, or the flux value if the fit is degraded.
    pub mass: f64,
    pub mass_expansion: f64,
    pub mass_expansion_residual: f64,
    pub mass_expansion_degraded: bool,
    pub mass_identity: f64,
    pub mass_flux: f64,
    pub masses_agree: bool,
    pub cap_flat: f64,
    pub cap_conformal: f64,
    /// Discretization estimates `|extrapolated - flux|` of both capacities.
    pub cap_flat_error: f64,
    pub cap_conformal_error: f64,
    pub vol_term: f64,
    pub total_mean_curvature_flat: f64,
    pub inner_radius: f64,
    /// `m - cap_conformal`.
    pub margin_mass_capacity: f64,
    /// `m - vol_term`.
    pub margin_volumetric: f64,
    /// `cap_flat + m/2 - cap_conformal`.
    pub margin_capacity_shift: f64,
    /// `m - (2 u̲ / ((n-1)ω)) I_flat`.
    pub margin_mean_curvature: f64,
    /// `m - (2u̲/(2+u̲)) cap_conformal`.
    pub margin_mass_capacity_weighted: f64,
    /// `m - u̲ vol_term / 2`.
    pub margin_volumetric_weighted: f64,
    pub max_scalar_curvature: f64,
    pub max_sigma_mean_curvature: f64,
    pub max_wall_mean_curvature: f64,
    pub max_laplacian: f64,
    pub min_wall_normal_derivative: f64,
    pub inner_radius_at_least_two: bool,
    pub factor_two_on_sigma: bool,
    pub scalar_nonnegative: bool,
    pub sigma_mean_convex: bool,
    pub wall_minimal: bool,
    pub sigma_g_minimal: bool,
    pub wall_g_mean_convex: bool,
    /// `Δu <= tol` in `M` and `D_μu >= -tol` on the wall.
    pub admissible: bool,
    /// The unweighted mass–capacity and volumetric bounds are claimed only when `u̲ >= 2`.
    pub sharp_forms_apply: bool,
    pub tolerances: PenroseTolerances,
}

impl PenroseReport {
    /// Inequalities that are asserted for this field, with their margins.
    pub fn checked_margins(&self) -> Vec<(&'static str, f64)> {
        let mut out = Vec::new();
        if self.admissible {
            out.push(("capacity_shift", self.margin_capacity_shift));
            out.push(("mean_curvature", self.margin_mean_curvature));
            out.push(("mass_capacity_weighted", self.margin_mass_capacity_weighted));
            out.push(("volumetric_weighted", self.margin_volumetric_weighted));
            if self.sharp_forms_apply {
                out.push(("mass_capacity", self.margin_mass_capacity));
                out.push(("volumetric", self.margin_volumetric));
            }
        }
        out
    }
}

/// Solve both capacities, evaluate all three masses and the membership flags.
pub fn penrose_check(field: &ConformalFactorField, tol: PenroseTolerances) -> Result<PenroseReport> {
    let grid = &field.grid;
    let n = grid.n();
    let nf = n as f64;
    let omega = sphere_measure(n - 1);
    let curv = conformal_curvatures(field);
    let weight = Weight::conformal(grid, field.u.clone())?;
    let ((flat, _), (conf, _)) = {
        let (a, b) = rayon::join(|| capacity(grid, &Weight::Flat), || capacity(grid, &weight));
        (a?, b?)
    };
    let cap_error = |c: &CapacityResult| (c.cap_extrapolated - c.cap_flux).abs();

    let fit = mass_from_expansion(field);
    let identity = mass_identity_with(field, &curv).mass;
    let flux = mass_flux(field)?;
    let mass = if fit.degraded { flux } else { fit.mass };
    let scale = mass.abs().max(1e-12);
    let masses_agree = (fit.mass - flux).abs() <= MASS_AGREEMENT * scale
        && (fit.mass - identity).abs() <= MASS_AGREEMENT * scale;

    let sig = functionals(grid.graph());
    let vol_term = 2.0 * (sig.volume / grid.cone().unit_sector_volume()).powf((nf - 2.0) / nf);
    let inner = field.inner_radius();
    let cap_flat = flat.cap_extrapolated;
    let cap_conformal = conf.cap_extrapolated;

    let stride = grid.m_theta() + 1;
    let interior = &curv.laplacian[stride..grid.node_count() - stride];
    let max_laplacian = interior.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_wall = curv
        .wall_normal_derivative
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let scalar_nonnegative = max_laplacian <= tol.laplacian;
    let wall_g_mean_convex = min_wall >= -tol.boundary;
    let max_sigma_mean_curvature = curv.max_sigma_mean_curvature();

    Ok(PenroseReport {
        n,
        mass,
        mass_expansion: fit.mass,
        mass_expansion_residual: fit.residual,
        mass_expansion_degraded: fit.degraded,
        mass_identity: identity,
        mass_flux: flux,
        masses_agree,
        cap_flat,
        cap_conformal,
        cap_flat_error: cap_error(&flat),
        cap_conformal_error: cap_error(&conf),
        vol_term,
        total_mean_curvature_flat: sig.total_mean_curvature,
        inner_radius: inner,
        margin_mass_capacity: mass - cap_conformal,
        margin_volumetric: mass - vol_term,
        margin_capacity_shift: cap_flat + mass / 2.0 - cap_conformal,
        margin_mean_curvature: mass - 2.0 * inner / ((nf - 1.0) * omega) * sig.total_mean_curvature,
        margin_mass_capacity_weighted: mass - 2.0 * inner / (2.0 + inner) * cap_conformal,
        margin_volumetric_weighted: mass - inner * vol_term / 2.0,
        max_scalar_curvature: curv.max_interior_scalar(grid),
        max_sigma_mean_curvature,
        max_wall_mean_curvature: curv.max_wall_mean_curvature(),
        max_laplacian,
        min_wall_normal_derivative: min_wall,
        inner_radius_at_least_two: inner >= 2.0 - tol.factor,
        factor_two_on_sigma: field
            .sigma_values()
            .iter()
            .all(|v| (v - 2.0).abs() <= tol.factor * 2.0),
        scalar_nonnegative,
        sigma_mean_convex: sig.min_h > 0.0,
        wall_minimal: true,
        sigma_g_minimal: max_sigma_mean_curvature <= tol.boundary,
        wall_g_mean_convex,
        admissible: scalar_nonnegative && wall_g_mean_convex,
        sharp_forms_apply: inner >= 2.0 - tol.factor,
        tolerances: tol,
    })
}
