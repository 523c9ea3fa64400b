//! Capacity of perturbed caps against the total mean curvature bound.

use cone_capacity::{capacity, functionals, ConeSpec, ExteriorGrid, RadialGraph, Weight};

fn main() -> cone_capacity::Result<()> {
    let cone = ConeSpec::half_space(3)?;
    println!("{:>4} {:>5} {:>12} {:>12} {:>12} {:>10}", "mode", "eps", "cap", "I/(2 alpha)", "margin", "flux/energy");
    for mode in [2, 4] {
        for eps in [0.0, 0.05, 0.1, 0.2] {
            let graph = RadialGraph::perturbed_cap(cone, 128, 1.0, eps, mode)?;
            let grid = ExteriorGrid::with_default_margin(&graph, 128, 256)?;
            let (c, _) = capacity(&grid, &Weight::Flat)?;
            let bound = functionals(&graph).total_mean_curvature / (2.0 * cone.alpha());
            println!(
                "{mode:>4} {eps:>5.2} {:>12.8} {bound:>12.8} {:>12.3e} {:>10.1e}",
                c.cap_extrapolated,
                bound - c.cap_extrapolated,
                c.discrepancy
            );
        }
    }
    Ok(())
}
