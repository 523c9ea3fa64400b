//! Closed-form cap-sector functionals and the isoperimetric bound.

use cone_capacity::{cap_metrics, isoperimetric_bound, CapSector, ConeSpec};

fn main() -> cone_capacity::Result<()> {
    println!("{:>2} {:>6} {:>5} {:>10} {:>10} {:>10} {:>10} {:>12}", "n", "theta0", "r", "alpha", "area", "volume", "I", "iso margin");
    for n in [3, 4, 5] {
        for deg in [90.0, 60.0, 30.0] {
            let cone = ConeSpec::from_degrees(n, deg)?;
            for r in [0.5, 1.0, 2.0] {
                let m = cap_metrics(&CapSector { cone, r });
                let margin = m.area - isoperimetric_bound(&cone, m.volume);
                println!(
                    "{n:>2} {deg:>6.1} {r:>5.2} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {margin:>12.2e}",
                    cone.alpha(),
                    m.area,
                    m.volume,
                    m.total_mean_curvature
                );
            }
        }
    }
    Ok(())
}
