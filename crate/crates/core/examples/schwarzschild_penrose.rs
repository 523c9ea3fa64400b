//! Mass estimates and Penrose-type margins for the half Schwarzschild metric.

use cone_capacity::conformal::{penrose_check, schwarzschild_field, HalfSchwarzschild, PenroseTolerances};
use cone_capacity::ExteriorGrid;

fn main() -> cone_capacity::Result<()> {
    for mass in [0.5, 1.0, 2.0, 4.0] {
        let model = HalfSchwarzschild::new(3, mass)?;
        let grid = ExteriorGrid::with_default_margin(&model.horizon(64)?, 64, 128)?;
        let report = penrose_check(&schwarzschild_field(&model, &grid)?, PenroseTolerances::default())?;
        println!(
            "m = {mass}: expansion {:.8}, identity {:.8}, flux {:.6}, cap_g {:.8}, max |R_g| {:.1e}, admissible {}",
            report.mass_expansion,
            report.mass_identity,
            report.mass_flux,
            report.cap_conformal,
            report.max_scalar_curvature,
            report.admissible
        );
        for (name, margin) in report.checked_margins() {
            println!("    {name:<28} {margin:>12.3e}");
        }
    }
    Ok(())
}
