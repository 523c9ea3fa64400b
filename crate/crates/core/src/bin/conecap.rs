use clap::{Args, Parser, Subcommand};
use cone_capacity::scenario::{parse_config, run_scenario, Kind, RunOptions};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Capacity, inverse mean curvature flow and mass checks in convex cones.
#[derive(Parser)]
#[command(name = "conecap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the exterior capacity problem of a capacity scenario.
    CapSolve(Common),
    /// Run inverse mean curvature flow from an imcf scenario.
    ImcfRun(Common),
    /// Check the mass–capacity inequalities of a penrose scenario.
    PenroseCheck(Common),
    /// Run every point of a sweep scenario.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    config: PathBuf,
    /// Directory for reports and traces.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Omit the generation timestamp so reports are byte-identical across runs.
    #[arg(long)]
    no_timestamp: bool,
    /// Multiply both grid resolutions by this factor.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=16))]
    grid_scale: u32,
}

fn run(kind: Kind, args: &Common) -> Result<bool, String> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("{}: {e}", args.config.display()))?;
    let mut scenario =
        parse_config(&text).map_err(|e| format!("{}: {e}", args.config.display()))?;
    if scenario.kind != kind {
        return Err(format!(
            "{}: scenario kind is {:?}, expected {:?}",
            args.config.display(),
            scenario.kind,
            kind
        ));
    }
    scenario.resolve_paths(args.config.parent().unwrap_or(Path::new(".")));
    let options = RunOptions {
        out_dir: Some(args.out_dir.clone()),
        timestamp: !args.no_timestamp,
        grid_scale: args.grid_scale as usize,
    };
    let out = run_scenario(&scenario, &options).map_err(|e| e.to_string())?;
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    for v in &out.report.violations {
        eprintln!("violated: {v}");
    }
    Ok(out.success())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::CapSolve(a) => (Kind::Capacity, a),
        Command::ImcfRun(a) => (Kind::Imcf, a),
        Command::PenroseCheck(a) => (Kind::Penrose, a),
        Command::Sweep(a) => (Kind::Sweep, a),
    };
    match run(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
