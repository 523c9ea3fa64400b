//! Volumes enclosed by the level sets of the capacitary potential.

use cone_capacity::{pfs_lower_bound, pfs_radius_profile, solve_mixed_bvp, ConeSpec, ExteriorGrid, RadialGraph, Weight};

fn main() -> cone_capacity::Result<()> {
    let cone = ConeSpec::from_degrees(4, 60.0)?;
    let graph = RadialGraph::perturbed_cap(cone, 96, 1.0, 0.15, 2)?;
    let grid = ExteriorGrid::with_default_margin(&graph, 96, 192)?;
    let field = solve_mixed_bvp(&grid, &Weight::Flat)?;
    println!("{:>5} {:>12}", "t", "R(t)");
    for (t, r) in pfs_radius_profile(&field)? {
        println!("{t:>5.2} {r:>12.6}");
    }
    println!("capacity lower bound from the profile: {:.6}", pfs_lower_bound(&field)?);
    Ok(())
}
