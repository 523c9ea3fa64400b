//! Capacity, total mean curvature and conformal mass of free-boundary
//! hypersurfaces in convex cones.
//!
//! The crate works with rotationally symmetric cones and axisymmetric
//! star-shaped hypersurfaces meeting the cone wall orthogonally:
//!
//! - [`cone`]: closed-form cap sectors, link measure, isoperimetric bound.
//! - [`surface`]: radial graphs, curvature, area/volume/total mean curvature.
//! - [`capacity`]: the mixed Dirichlet–Neumann potential problem and capacity.
//! - [`imcf`]: inverse mean curvature flow with free boundary on the wall.
//! - [`conformal`]: conformally flat half-space metrics, mass, Penrose checks.
//! - [`scenario`]: JSON scenarios driving the above and the `conecap` binary.

pub mod capacity;
pub mod cone;
pub mod conformal;
pub mod error;
pub mod imcf;
pub mod numerics;
pub mod scenario;
pub mod surface;

pub use capacity::{
    capacity, capacity_estimates, pfs_lower_bound, pfs_radius_profile, solve_mixed_bvp,
    CapacityResult, ExteriorGrid, PotentialField, Weight,
};
pub use cone::{cap_metrics, isoperimetric_bound, solid_angle, CapSector, ConeSpec};
pub use error::{Error, Result};
pub use surface::{functionals, mean_curvature_field, umbilicity_residual, RadialGraph, SurfaceFunctionals};
