//! Capacity of a free-boundary hypersurface in a circular cone.
//!
//! The equilibrium potential solves `div(w Dφ) = 0` in the exterior of Ω inside
//! the cone, with `φ = 0` on Σ, zero conormal derivative on the cone wall and
//! `φ → 1` at infinity. Axisymmetry reduces the problem to the meridian plane in
//! log-radial coordinates `(s, θ)`, `s = log|x|`, where the Dirichlet energy is
//!
//! ```text
//! ∫ w |Dφ|^2 dv = |S^{n-2}| ∫∫ w e^{(n-2)s} sin^{n-2}θ (φ_s^2 + φ_θ^2) ds dθ.
//! ```
//!
//! The domain `u(θ) <= s <= s_max` is mapped to the unit square by
//! `s = u(θ) + ξ (s_max - u(θ))` and the energy is discretized edge by edge:
//! radial edges carry the exact harmonic transmissibility of `e^{(n-2)s}`, so
//! the monopole `1 - e^{-(n-2)(s - u)}` is reproduced at the nodes; the mixed
//! `φ_ξ φ_θ` term of the non-orthogonal map is assembled per cell. Beyond
//! `s_max` the potential is closed by the exact monopole Robin condition.
//!
//! The matrix is the Hessian of the discrete energy, hence symmetric positive
//! definite, and is solved with Jacobi-preconditioned conjugate gradients.

use crate::cone::{sin_power_integral, ConeSpec};
use crate::error::{Error, Result};
use crate::numerics::{fd_weights, pcg, simpson_weights, sphere_measure, uniform_derivative, CsrMatrix};
use crate::surface::RadialGraph;
use serde::Serialize;
use std::path::Path;

/// Outer margin `s_max - max u` used when none is given.
pub const DEFAULT_OUTER_MARGIN: f64 = 4.0;
/// Smallest admissible outer margin.
pub const MIN_OUTER_MARGIN: f64 = 2.0;
/// Relative residual at which the linear solve stops.
pub const SOLVER_TOLERANCE: f64 = 1e-10;
/// Surfaces with `min ρ < MIN_RADIUS_RATIO · max ρ` touch the vertex too closely.
pub const MIN_RADIUS_RATIO: f64 = 1e-6;

/// Boundary-fitted grid on the exterior of Σ, `ξ ∈ [0, 1] × θ ∈ [0, theta0]`.
#[derive(Debug, Clone)]
pub struct ExteriorGrid {
    graph: RadialGraph,
    s_max: f64,
    m_theta: usize,
    m_s: usize,
    du: Vec<f64>,
}

impl ExteriorGrid {
    /// `graph` is resampled to `m_theta` intervals if needed.
    pub fn new(graph: &RadialGraph, s_max: f64, m_theta: usize, m_s: usize) -> Result<Self> {
        if m_theta < 4 || m_s < 4 {
            return Err(Error::Domain(format!(
                "grid {m_s}x{m_theta} too coarse (need at least 4 intervals each way)"
            )));
        }
        if graph.min_rho() < MIN_RADIUS_RATIO * graph.max_rho() {
            return Err(Error::Domain(format!(
                "surface radius ratio {:.3e} below {MIN_RADIUS_RATIO:.0e}: near-vertex contact unsupported",
                graph.min_rho() / graph.max_rho()
            )));
        }
        let graph = graph.resample(m_theta)?;
        let max_u = graph.max_rho().ln();
        if !(s_max - max_u >= MIN_OUTER_MARGIN - 1e-12) {
            return Err(Error::Domain(format!(
                "outer log-radius {s_max} must exceed max u = {max_u:.4} by at least {MIN_OUTER_MARGIN}"
            )));
        }
        let du = graph.derivatives().du;
        Ok(ExteriorGrid {
            graph,
            s_max,
            m_theta,
            m_s,
            du,
        })
    }

    /// Grid with the default outer margin `s_max = max u + 4`.
    pub fn with_default_margin(graph: &RadialGraph, m_theta: usize, m_s: usize) -> Result<Self> {
        let s_max = graph.max_rho().ln() + DEFAULT_OUTER_MARGIN;
        Self::new(graph, s_max, m_theta, m_s)
    }

    /// Same domain with both resolutions halved, if both are even.
    pub fn coarsened(&self) -> Option<Result<Self>> {
        if self.m_theta % 2 != 0 || self.m_s % 2 != 0 || self.m_theta < 8 || self.m_s < 8 {
            return None;
        }
        Some(Self::new(&self.graph, self.s_max, self.m_theta / 2, self.m_s / 2))
    }

    /// Same domain with both resolutions multiplied by `k`.
    pub fn refined(&self, k: usize) -> Result<Self> {
        Self::new(&self.graph, self.s_max, self.m_theta * k, self.m_s * k)
    }

    pub fn graph(&self) -> &RadialGraph {
        &self.graph
    }

    pub fn cone(&self) -> &ConeSpec {
        self.graph.cone()
    }

    pub fn n(&self) -> usize {
        self.cone().n()
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn m_theta(&self) -> usize {
        self.m_theta
    }

    pub fn m_s(&self) -> usize {
        self.m_s
    }

    pub fn node_count(&self) -> usize {
        (self.m_s + 1) * (self.m_theta + 1)
    }

    /// Flat node index of `(ξ_i, θ_j)`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * (self.m_theta + 1) + j
    }

    pub fn dxi(&self) -> f64 {
        1.0 / self.m_s as f64
    }

    pub fn dtheta(&self) -> f64 {
        self.cone().theta0() / self.m_theta as f64
    }

    pub fn xi(&self, i: usize) -> f64 {
        i as f64 * self.dxi()
    }

    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.dtheta()
    }

    /// Surface log-radius `u(θ_j)`.
    pub fn surface_u(&self, j: usize) -> f64 {
        self.graph.log_radius()[j]
    }

    /// Surface slope `u'(θ_j)`.
    pub fn surface_du(&self, j: usize) -> f64 {
        self.du[j]
    }

    /// Radial extent `s_max - u(θ_j)` of the ray at `θ_j`.
    pub fn ray_length(&self, j: usize) -> f64 {
        self.s_max - self.surface_u(j)
    }

    /// Log-radius of node `(i, j)`.
    pub fn s(&self, i: usize, j: usize) -> f64 {
        self.surface_u(j) + self.xi(i) * self.ray_length(j)
    }

    pub fn radius(&self, i: usize, j: usize) -> f64 {
        self.s(i, j).exp()
    }

    /// Link measure `|S^{n-2}| ∫ sin^{n-2}` of the dual interval around `θ_j`.
    pub fn dual_link_weight(&self, j: usize) -> f64 {
        let h = self.dtheta();
        let t = self.theta(j);
        let a = (t - 0.5 * h).max(0.0);
        let b = (t + 0.5 * h).min(self.cone().theta0());
        self.cone().link_measure(a, b)
    }

    /// Evaluate `f(r, θ)` at every node.
    pub fn sample<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.node_count());
        for i in 0..=self.m_s {
            for j in 0..=self.m_theta {
                out.push(f(self.radius(i, j), self.theta(j)));
            }
        }
        out
    }

    /// Keep every `k`-th node of a field sampled on a `k`-times finer grid.
    pub fn restrict_from(&self, fine: &ExteriorGrid, values: &[f64]) -> Result<Vec<f64>> {
        let k = fine.m_s / self.m_s;
        if k * self.m_s != fine.m_s || k * self.m_theta != fine.m_theta {
            return Err(Error::Domain("grids are not nested".into()));
        }
        let mut out = Vec::with_capacity(self.node_count());
        for i in 0..=self.m_s {
            for j in 0..=self.m_theta {
                out.push(values[fine.index(k * i, k * j)]);
            }
        }
        Ok(out)
    }

    /// Derivative along ξ at fixed θ_j, fourth order, for a nodal field.
    pub(crate) fn d_xi(&self, values: &[f64], i: usize, j: usize) -> f64 {
        let column: Vec<f64> = (0..=self.m_s).map(|k| values[self.index(k, j)]).collect();
        let width = 5.min(self.m_s + 1);
        let start = crate::numerics::stencil_start(i, self.m_s, width);
        let xs: Vec<f64> = (0..width).map(|k| k as f64).collect();
        let w = fd_weights((i - start) as f64, &xs, 1).swap_remove(1);
        w.iter()
            .zip(&column[start..start + width])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / self.dxi()
    }

    /// Derivative along ξ of a whole column at fixed θ_j.
    pub(crate) fn column_derivative(&self, values: &[f64], j: usize, order: usize) -> Vec<f64> {
        let column: Vec<f64> = (0..=self.m_s).map(|k| values[self.index(k, j)]).collect();
        uniform_derivative(&column, self.dxi(), order, 6)
    }
}

/// Coefficient `w` of the weighted energy `∫ w |Dφ|^2`.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    /// `w ≡ 1`: Euclidean capacity.
    Flat,
    /// `w = u^2` for a conformal factor `u` given at the grid nodes:
    /// capacity with respect to `g = u^{4/(n-2)} δ`.
    Conformal(Vec<f64>),
}

impl Weight {
    pub fn conformal(grid: &ExteriorGrid, u: Vec<f64>) -> Result<Self> {
        validate_factor(grid, &u)?;
        Ok(Weight::Conformal(u))
    }

    fn value(&self, k: usize) -> f64 {
        match self {
            Weight::Flat => 1.0,
            Weight::Conformal(u) => u[k] * u[k],
        }
    }

    fn restricted(&self, coarse: &ExteriorGrid, fine: &ExteriorGrid) -> Result<Self> {
        Ok(match self {
            Weight::Flat => Weight::Flat,
            Weight::Conformal(u) => Weight::Conformal(coarse.restrict_from(fine, u)?),
        })
    }
}

fn validate_factor(grid: &ExteriorGrid, u: &[f64]) -> Result<()> {
    if u.len() != grid.node_count() {
        return Err(Error::Domain(format!(
            "conformal factor has {} values for {} grid nodes",
            u.len(),
            grid.node_count()
        )));
    }
    if let Some(k) = u.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Domain(format!("conformal factor is not positive at node {k}")));
    }
    Ok(())
}

/// Far-field Robin data at the outer node of ray `j`: `φ_s = c (φ* - φ)`.
///
/// For a conformal weight the closure is imposed on `u φ`, which is harmonic
/// when `u` is; for `w ≡ 1` it reduces to `φ_s = (n-2)(1 - φ)`.
#[derive(Debug, Clone, Copy)]
struct RobinData {
    rate: f64,
    target: f64,
}

fn robin_data(grid: &ExteriorGrid, weight: &Weight) -> Result<Vec<RobinData>> {
    let nm2 = grid.n() as f64 - 2.0;
    let i = grid.m_s();
    (0..=grid.m_theta())
        .map(|j| match weight {
            Weight::Flat => Ok(RobinData {
                rate: nm2,
                target: 1.0,
            }),
            Weight::Conformal(u) => {
                let uo = u[grid.index(i, j)];
                let us = grid.d_xi(u, i, j) / grid.ray_length(j);
                let rate = nm2 + us / uo;
                if !(rate > 0.0) {
                    return Err(Error::Domain(format!(
                        "conformal factor does not decay like a monopole at the outer boundary (ray {j})"
                    )));
                }
                Ok(RobinData {
                    rate,
                    target: nm2 / (uo * rate),
                })
            }
        })
        .collect()
}

/// Discrete energy operator split into its quadratic form and Robin part.
struct Assembly {
    /// Quadratic form of `∫ w |Dφ|^2` over all nodes.
    energy: CsrMatrix,
    /// Robin coefficient per outer node (already multiplied by `w κ W`).
    robin: Vec<f64>,
    robin_data: Vec<RobinData>,
}

fn assemble(grid: &ExteriorGrid, weight: &Weight) -> Result<Assembly> {
    let n = grid.n();
    let nm2 = n as f64 - 2.0;
    let k = n as i32 - 2;
    let sphere = sphere_measure(n - 2);
    let (ms, mt) = (grid.m_s(), grid.m_theta());
    let dxi = grid.dxi();
    let dth = grid.dtheta();
    let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(16 * ms * mt);
    let add_edge = |a: usize, b: usize, t: f64, trip: &mut Vec<(usize, usize, f64)>| {
        trip.push((a, a, t));
        trip.push((b, b, t));
        trip.push((a, b, -t));
        trip.push((b, a, -t));
    };

    for i in 0..ms {
        for j in 0..mt {
            let ids = [
                grid.index(i, j),
                grid.index(i + 1, j),
                grid.index(i, j + 1),
                grid.index(i + 1, j + 1),
            ];
            let (xa, xb) = (grid.xi(i), grid.xi(i + 1));
            let xc = 0.5 * (xa + xb);
            let (ta, tb) = (grid.theta(j), grid.theta(j + 1));
            let tc = 0.5 * (ta + tb);

            // radial edges at θ_j and θ_{j+1}, each carrying half the dual θ-interval
            for (col, lo, hi, na, nb) in [
                (j, ta, tc, ids[0], ids[1]),
                (j + 1, tc, tb, ids[2], ids[3]),
            ] {
                let link = sphere * sin_power_integral(k, lo, hi);
                let len = grid.ray_length(col);
                let sa = grid.surface_u(col) + xa * len;
                let ds = dxi * len;
                let w = 0.5 * (weight.value(na) + weight.value(nb));
                let resistance = -(-nm2 * sa).exp() * (-nm2 * ds).exp_m1() / nm2;
                let shear = grid.surface_du(col) * (1.0 - xc);
                let t = link * w * (1.0 + shear * shear) / resistance;
                add_edge(na, nb, t, &mut trip);
            }

            // angular edges at ξ_i and ξ_{i+1}, each carrying half the dual ξ-interval
            let u_mid = 0.5 * (grid.surface_u(j) + grid.surface_u(j + 1));
            let len_mid = grid.s_max() - u_mid;
            let sin_mid = sphere * tc.sin().powi(k);
            for (lo, hi, na, nb) in [(xa, xc, ids[0], ids[2]), (xc, xb, ids[1], ids[3])] {
                let s_lo = u_mid + lo * len_mid;
                let grow = (nm2 * s_lo).exp() * (nm2 * (hi - lo) * len_mid).exp_m1() / nm2;
                let w = 0.5 * (weight.value(na) + weight.value(nb));
                let t = sin_mid * w * grow / dth;
                add_edge(na, nb, t, &mut trip);
            }

            // mixed term -2 w e^{(n-2)s} sin^{n-2}θ u'(θ)(1-ξ) φ_ξ φ_θ over the cell
            let du_c = (grid.surface_u(j + 1) - grid.surface_u(j)) / dth;
            if du_c != 0.0 {
                let s_c = u_mid + xc * len_mid;
                let w = 0.25 * ids.iter().map(|&id| weight.value(id)).sum::<f64>();
                let x = -2.0 * w * (nm2 * s_c).exp() * sin_mid * du_c * (1.0 - xc);
                let g = [-0.5, 0.5, -0.5, 0.5];
                let h = [-0.5, -0.5, 0.5, 0.5];
                for a in 0..4 {
                    for b in 0..4 {
                        let v = 0.5 * x * (g[a] * h[b] + h[a] * g[b]);
                        if v != 0.0 {
                            trip.push((ids[a], ids[b], v));
                        }
                    }
                }
            }
        }
    }
    let energy = CsrMatrix::from_triplets(grid.node_count(), trip);

    let robin_data = robin_data(grid, weight)?;
    let kappa_out = (nm2 * grid.s_max()).exp();
    let robin = (0..=mt)
        .map(|j| {
            let id = grid.index(ms, j);
            robin_data[j].rate * weight.value(id) * kappa_out * grid.dual_link_weight(j)
        })
        .collect();
    Ok(Assembly {
        energy,
        robin,
        robin_data,
    })
}

/// Solver controls; `max_iterations = None` uses `50 · sqrt(nodes)`.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub relative_tolerance: f64,
    pub max_iterations: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            relative_tolerance: SOLVER_TOLERANCE,
            max_iterations: None,
        }
    }
}

/// Discrete equilibrium potential.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub grid: ExteriorGrid,
    /// `φ` at every node, `grid.index(i, j)` ordering; zero on Σ (`i = 0`).
    pub phi: Vec<f64>,
    pub weight: Weight,
    pub residual_norm: f64,
    pub iterations: usize,
    energy: f64,
    robin_flux: f64,
}

pub fn solve_mixed_bvp(grid: &ExteriorGrid, weight: &Weight) -> Result<PotentialField> {
    solve_mixed_bvp_with(grid, weight, SolverOptions::default())
}

pub fn solve_mixed_bvp_with(
    grid: &ExteriorGrid,
    weight: &Weight,
    options: SolverOptions,
) -> Result<PotentialField> {
    if let Weight::Conformal(u) = weight {
        validate_factor(grid, u)?;
    }
    let asm = assemble(grid, weight)?;
    let stride = grid.m_theta() + 1;
    let free = grid.node_count() - stride;
    let ms = grid.m_s();

    // Restrict to free nodes (drop ξ = 0 rows/cols) and add the Robin diagonal.
    let mut trip = Vec::with_capacity(asm.energy.vals.len());
    for row in stride..grid.node_count() {
        for k in asm.energy.row_ptr[row]..asm.energy.row_ptr[row + 1] {
            let col = asm.energy.cols[k];
            if col >= stride {
                trip.push((row - stride, col - stride, asm.energy.vals[k]));
            }
        }
    }
    let mut rhs = vec![0.0; free];
    for j in 0..=grid.m_theta() {
        let id = grid.index(ms, j) - stride;
        trip.push((id, id, asm.robin[j]));
        rhs[id] = asm.robin[j] * asm.robin_data[j].target;
    }
    let a = CsrMatrix::from_triplets(free, trip);

    // Initial guess: the radial monopole profile on every ray.
    let nm2 = grid.n() as f64 - 2.0;
    let mut x: Vec<f64> = (1..=ms)
        .flat_map(|i| {
            (0..=grid.m_theta()).map(move |j| (i, j))
        })
        .map(|(i, j)| 1.0 - (-nm2 * (grid.s(i, j) - grid.surface_u(j))).exp())
        .collect();
    let max_iter = options
        .max_iterations
        .unwrap_or_else(|| (50.0 * (grid.node_count() as f64).sqrt()).ceil() as usize);
    let report = pcg(&a, &rhs, &mut x, options.relative_tolerance, max_iter)?;

    let mut phi = vec![0.0; stride];
    phi.extend_from_slice(&x);

    let mut kphi = vec![0.0; grid.node_count()];
    asm.energy.mul_vec(&phi, &mut kphi);
    let energy: f64 = phi.iter().zip(&kphi).map(|(a, b)| a * b).sum();
    let robin_flux: f64 = (0..=grid.m_theta())
        .map(|j| {
            let p = phi[grid.index(ms, j)];
            asm.robin[j] * (asm.robin_data[j].target - p)
        })
        .sum();
    let tail: f64 = (0..=grid.m_theta())
        .map(|j| {
            let p = phi[grid.index(ms, j)];
            asm.robin[j] * (1.0 - p) * (asm.robin_data[j].target - p)
        })
        .sum();

    Ok(PotentialField {
        grid: grid.clone(),
        phi,
        weight: weight.clone(),
        residual_norm: report.relative_residual,
        iterations: report.iterations,
        energy: energy + tail,
        robin_flux,
    })
}


/// Single-resolution capacity estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityEstimate {
    /// `(∫ w|Dφ|^2 + exact tail) / ((n-2) α)`.
    pub energy: f64,
    /// `∮_Σ w ∂_N φ dσ / ((n-2) α)` from the one-sided normal derivative on Σ.
    pub flux: f64,
    /// Outer Robin flux `/((n-2) α)`; equals `energy` up to the solver residual.
    pub outer_flux: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityResult {
    pub cap_energy: f64,
    pub cap_flux: f64,
    /// Richardson extrapolation of `cap_flux` from the half-resolution solve.
    pub cap_extrapolated: f64,
    /// `|cap_energy - cap_flux| / cap_flux`.
    pub discrepancy: f64,
    /// Coarse-grid flux used for extrapolation (equal to `cap_flux` if none).
    pub cap_flux_coarse: f64,
    /// Normalizing link measure `α` in `(n-2) α`.
    pub alpha: f64,
    pub m_theta: usize,
    pub m_s: usize,
}

pub fn capacity_estimates(field: &PotentialField) -> CapacityEstimate {
    let grid = &field.grid;
    let n = grid.n();
    let nm2 = n as f64 - 2.0;
    let norm = nm2 * grid.cone().alpha();
    let mt = grid.m_theta();
    let quad = simpson_weights(mt, grid.dtheta());
    let flux: f64 = (0..=mt)
        .map(|j| {
            let len = grid.ray_length(j);
            let du = grid.surface_du(j);
            let dphi = grid.d_xi(&field.phi, 0, j);
            let w = field.weight.value(grid.index(0, j));
            let kappa = w * (nm2 * grid.surface_u(j)).exp() * grid.cone().link_density(grid.theta(j));
            quad[j] * kappa * (1.0 + du * du) / len * dphi
        })
        .sum();
    CapacityEstimate {
        energy: field.energy / norm,
        flux: flux / norm,
        outer_flux: field.robin_flux / norm,
    }
}

impl CapacityResult {
    /// Combine a solve with an optional half-resolution solve (second-order Richardson).
    pub fn from_fields(fine: &PotentialField, coarse: Option<&PotentialField>) -> Self {
        let f = capacity_estimates(fine);
        let coarse_flux = coarse.map(|c| capacity_estimates(c).flux);
        let extrapolated = coarse_flux.map_or(f.flux, |c| (4.0 * f.flux - c) / 3.0);
        CapacityResult {
            cap_energy: f.energy,
            cap_flux: f.flux,
            cap_extrapolated: extrapolated,
            discrepancy: (f.energy - f.flux).abs() / f.flux,
            cap_flux_coarse: coarse_flux.unwrap_or(f.flux),
            alpha: fine.grid.cone().alpha(),
            m_theta: fine.grid.m_theta(),
            m_s: fine.grid.m_s(),
        }
    }
}

/// Solve on `grid` and on the half-resolution grid (concurrently) and combine.
pub fn capacity(grid: &ExteriorGrid, weight: &Weight) -> Result<(CapacityResult, PotentialField)> {
    let coarse_grid = grid.coarsened().transpose()?;
    let (fine, coarse) = rayon::join(
        || solve_mixed_bvp(grid, weight),
        || -> Result<Option<PotentialField>> {
            match &coarse_grid {
                None => Ok(None),
                Some(cg) => {
                    let w = weight.restricted(cg, grid)?;
                    solve_mixed_bvp(cg, &w).map(Some)
                }
            }
        },
    );
    let fine = fine?;
    let coarse = coarse?;
    Ok((CapacityResult::from_fields(&fine, coarse.as_ref()), fine))
}

/// Level values `0.05, 0.10, …, 0.95` used by [`pfs_radius_profile`].
pub fn pfs_levels() -> Vec<f64> {
    (1..=19).map(|k| 0.05 * k as f64).collect()
}

/// Log-radius where the ray at `θ_j` first reaches level `t`.
///
/// Between nodes `log(1 - φ)` is interpolated linearly in `s` (exact for the
/// monopole); beyond `s_max` the Robin monopole tail is followed.
fn level_crossing(field: &PotentialField, j: usize, t: f64) -> Result<f64> {
    let grid = &field.grid;
    let nm2 = grid.n() as f64 - 2.0;
    if t <= 0.0 {
        return Ok(grid.surface_u(j));
    }
    let target = (1.0 - t).ln();
    let mut prev = 0.0_f64;
    for i in 1..=grid.m_s() {
        let p = field.phi[grid.index(i, j)];
        if p < prev - 1e-9 {
            return Err(Error::LevelSet {
                level: t,
                reason: format!("potential decreases along ray {j} near node {i}"),
            });
        }
        if p >= t {
            let (sa, sb) = (grid.s(i - 1, j), grid.s(i, j));
            let la = (1.0 - prev).ln();
            let lb = (1.0 - p.min(1.0 - 1e-300)).ln();
            let frac = if (lb - la).abs() < 1e-300 {
                1.0
            } else {
                (target - la) / (lb - la)
            };
            return Ok(sa + frac * (sb - sa));
        }
        prev = p;
    }
    if prev >= 1.0 {
        return Err(Error::LevelSet {
            level: t,
            reason: format!("outer value on ray {j} is not below 1"),
        });
    }
    Ok(grid.s_max() + ((1.0 - prev).ln() - target) / nm2)
}

/// Volume of `Ω ∪ {φ < t}` and the sector radius `R(t)` with the same volume.
fn level_volume(field: &PotentialField, t: f64) -> Result<f64> {
    let grid = &field.grid;
    if grid.m_s() < 8 {
        return Err(Error::LevelSet {
            level: t,
            reason: format!("grid with {} radial intervals is too coarse", grid.m_s()),
        });
    }
    let n = grid.n() as f64;
    let weights = grid.graph().link_weights();
    let mut v = 0.0;
    for (j, w) in weights.iter().enumerate() {
        v += w * (n * level_crossing(field, j, t)?).exp() / n;
    }
    Ok(v)
}

fn sector_radius(cone: &ConeSpec, volume: f64) -> f64 {
    (volume / cone.unit_sector_volume()).powf(1.0 / cone.n() as f64)
}

/// `(t, R(t))` for `t ∈ {0.05, …, 0.95}`, where `R(t)` is the radius of the cone
/// sector whose volume equals that of `Ω ∪ {φ < t}`.
pub fn pfs_radius_profile(field: &PotentialField) -> Result<Vec<(f64, f64)>> {
    let cone = *field.grid.cone();
    pfs_levels()
        .into_iter()
        .map(|t| Ok((t, sector_radius(&cone, level_volume(field, t)?))))
        .collect()
}

/// `(1/(n-2)) ∫_0^1 R^{n-1}/R' dt`, a lower bound for the capacity.
///
/// With `z = R^{2-n}` the integrand is `-(n-2)/z'`; `z` is sampled at
/// `t = 0, 0.05, …, 0.95` and `z(1) = 0`, differentiated at second order and
/// integrated with Simpson's rule. Exact when the level sets are caps.
pub fn pfs_lower_bound(field: &PotentialField) -> Result<f64> {
    let cone = *field.grid.cone();
    let nm2 = cone.n() as f64 - 2.0;
    let mut z = Vec::with_capacity(21);
    z.push(sector_radius(&cone, level_volume(field, 0.0)?).powf(-nm2));
    for (_, r) in pfs_radius_profile(field)? {
        z.push(r.powf(-nm2));
    }
    z.push(0.0);
    let h = 0.05;
    let dz = uniform_derivative(&z, h, 1, 3);
    if let Some(k) = dz.iter().position(|d| !(*d < 0.0)) {
        return Err(Error::LevelSet {
            level: k as f64 * h,
            reason: "enclosed volume is not increasing with the level".into(),
        });
    }
    let w = simpson_weights(20, h);
    Ok(w.iter().zip(&dz).map(|(w, d)| -w / d).sum())
}

/// Write `xi,theta,phi` rows for every node.
pub fn write_field_csv<P: AsRef<Path>>(field: &PotentialField, path: P) -> Result<()> {
    let grid = &field.grid;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["xi", "theta", "phi"])?;
    for i in 0..=grid.m_s() {
        for j in 0..=grid.m_theta() {
            w.write_record([
                format!("{:.10e}", grid.xi(i)),
                format!("{:.10e}", grid.theta(j)),
                format!("{:.12e}", field.phi[grid.index(i, j)]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn cap_grid(n: usize, theta0: f64, r: f64, mt: usize, ms: usize) -> ExteriorGrid {
        let cone = ConeSpec::new(n, theta0).unwrap();
        let g = RadialGraph::cap(cone, mt, r).unwrap();
        ExteriorGrid::with_default_margin(&g, mt, ms).unwrap()
    }

    #[test]
    fn grid_rejects_small_margin_and_vertex_contact() {
        let cone = ConeSpec::half_space(3).unwrap();
        let g = RadialGraph::cap(cone, 16, 1.0).unwrap();
        assert!(matches!(ExteriorGrid::new(&g, 1.0, 16, 16), Err(Error::Domain(_))));
        let pinched = RadialGraph::from_radius_fn(cone, 16, |t| 1e-7 + t * t).unwrap();
        assert!(ExteriorGrid::with_default_margin(&pinched, 16, 16).is_err());
    }

    #[test]
    fn cap_potential_is_nodally_exact() {
        let grid = cap_grid(3, FRAC_PI_2, 1.0, 16, 32);
        let field = solve_mixed_bvp(&grid, &Weight::Flat).unwrap();
        for i in 0..=grid.m_s() {
            for j in 0..=grid.m_theta() {
                let exact = 1.0 - 1.0 / grid.radius(i, j);
                assert!((field.phi[grid.index(i, j)] - exact).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn energy_matches_outer_flux() {
        let cone = ConeSpec::half_space(3).unwrap();
        let g = RadialGraph::perturbed_cap(cone, 32, 1.0, 0.1, 2).unwrap();
        let grid = ExteriorGrid::with_default_margin(&g, 32, 32).unwrap();
        let est = capacity_estimates(&solve_mixed_bvp(&grid, &Weight::Flat).unwrap());
        assert!((est.energy - est.outer_flux).abs() < 1e-7 * est.energy);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let grid = cap_grid(3, FRAC_PI_2, 1.0, 16, 16);
        let opts = SolverOptions {
            relative_tolerance: 1e-14,
            max_iterations: Some(1),
        };
        let cone = ConeSpec::half_space(3).unwrap();
        let g = RadialGraph::perturbed_cap(cone, 16, 1.0, 0.2, 2).unwrap();
        let pgrid = ExteriorGrid::with_default_margin(&g, 16, 16).unwrap();
        assert!(solve_mixed_bvp_with(&grid, &Weight::Flat, opts).is_ok());
        assert!(matches!(
            solve_mixed_bvp_with(&pgrid, &Weight::Flat, opts),
            Err(Error::NotConverged { .. })
        ));
    }

    #[test]
    fn conformal_weight_validation() {
        let grid = cap_grid(3, FRAC_PI_2, 1.0, 8, 8);
        assert!(Weight::conformal(&grid, vec![1.0; 3]).is_err());
        let mut u = vec![1.0; grid.node_count()];
        u[5] = -1.0;
        assert!(Weight::conformal(&grid, u).is_err());
    }
}
