//! Runs a sweep scenario in-process and prints the resulting table.

use cone_capacity::scenario::{parse_config, run_scenario, RunOptions};

const CONFIG: &str = r#"{
    "kind": "sweep",
    "output": "example_sweep",
    "grid": {"m_theta": 64, "m_s": 128},
    "sweep": {"kind": "capacity", "n": [3, 4], "theta0_deg": [90, 60], "eps": [0.0, 0.1], "mode": [2]}
}"#;

fn main() -> cone_capacity::Result<()> {
    let scenario = parse_config(CONFIG)?;
    let dir = std::env::temp_dir().join("conecap_example_sweep");
    let options = RunOptions { out_dir: Some(dir), timestamp: false, grid_scale: 1 };
    let out = run_scenario(&scenario, &options)?;
    for file in &out.files {
        println!("wrote {}", file.display());
        if file.extension().is_some_and(|e| e == "csv") {
            print!("{}", std::fs::read_to_string(file)?);
        }
    }
    println!("violations: {}", out.report.violations.len());
    Ok(())
}
