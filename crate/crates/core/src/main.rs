use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use fogport::harness::{render_table, run_and_write, Calibration, ConfigPreset, ExperimentRequest, RunOptions};
use fogport::workload::ScenarioParams;

#[derive(Parser)]
#[command(name = "fogport", version, about = "Fog-to-cloud orchestration simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep request rates over one or more deployment presets.
    Run(RunArgs),
    /// Print the bundled calibration profile as JSON.
    Profile,
}

#[derive(clap::Args)]
struct RunArgs {
    /// fog1, cloud-only, mf2c-1fog or mf2c-2fog; repeat or comma-separate.
    /// All four when omitted.
    #[arg(long, value_delimiter = ',')]
    preset: Vec<String>,
    /// JSON scenario parameters; unspecified fields take their defaults.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// JSON calibration profile replacing the bundled one.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Requests per second, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    /// Simulated seconds per rate point.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write heatmap.csv and heatmap.pgm.
    #[arg(long)]
    export_heatmap: bool,
    /// Cluster radius in metres; enables clusters.jsonl.
    #[arg(long)]
    clusters_eps: Option<f64>,
}

fn run(args: RunArgs) -> Result<()> {
    let mut calibration = match &args.calibration {
        Some(path) => Calibration::load(path)?,
        None => Calibration::frozen(),
    };
    let params = match &args.scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<ScenarioParams>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => calibration.scenario_params(),
    };
    if let Some(seed) = args.seed {
        calibration.sweep.seed = seed;
    }
    if let Some(rates) = args.rates {
        calibration.sweep.rates = rates;
    }
    if let Some(duration) = args.duration {
        calibration.sweep.duration_s = duration;
    }
    if let Some(eps) = args.clusters_eps {
        if !(eps.is_finite() && eps > 0.0) {
            bail!("--clusters-eps must be positive");
        }
    }
    let presets = if args.preset.is_empty() {
        ConfigPreset::ALL.to_vec()
    } else {
        args.preset.iter().map(|p| p.parse()).collect::<Result<Vec<ConfigPreset>, _>>()?
    };

    let request = ExperimentRequest {
        presets: &presets,
        calibration: &calibration,
        sweep: &calibration.sweep,
        params: &params,
        options: RunOptions { cluster_eps_m: args.clusters_eps, record_trace: false },
        export_heatmap: args.export_heatmap,
    };
    let summary = run_and_write(&request, &args.out)?;
    print!("{}", render_table(&summary));
    println!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Profile => {
            println!("{}", serde_json::to_string_pretty(&Calibration::frozen())?);
            Ok(())
        }
    }
}
