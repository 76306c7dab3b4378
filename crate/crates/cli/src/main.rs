//! Command-line front end: run one scenario, compare protocols, print the
//! effective defaults, or replay a saved run and verify its trace.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sidle_core::metrics::export_csv;
use sidle_core::plot::emit_plot;
use sidle_core::scenario::{compare_protocols, run_on_topology, run_scenario, ScenarioConfig};
use sidle_core::sim::network::trace_to_csv;
use sidle_core::topology::Topology;

#[derive(Parser)]
#[command(
    name = "sidle",
    about = "Deterministic simulator for hexagonal wireless sensor networks: \
             SIDLE leader election with LEACH and FCA baselines",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Scenario config file (TOML); defaults apply when omitted
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the run seed
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Override the protocol (sidle | leach | fca)
    #[arg(long, value_name = "NAME")]
    protocol: Option<String>,
    /// Override the round count
    #[arg(long, value_name = "N")]
    rounds: Option<u32>,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Also write an SVG plot
    #[arg(long)]
    plot: bool,
    /// Collect and write the event trace (and the topology, for replays)
    #[arg(long)]
    trace: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and export per-round metrics as CSV
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write the per-node energy audit log as CSV
        #[arg(long)]
        audit: bool,
    },
    /// Run several protocols over one shared topology and report orderings
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Protocols to compare (repeatable)
        #[arg(long = "protocols", value_delimiter = ',', default_values = ["sidle", "leach", "fca"])]
        protocols: Vec<String>,
        /// Seeds to average over (repeatable); defaults to 20 consecutive
        /// seeds starting at the config seed
        #[arg(long = "seeds", value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Number of consecutive seeds when --seeds is not given
        #[arg(long, default_value_t = 20)]
        seed_count: u32,
    },
    /// Print the effective configuration (defaults + overrides) as TOML
    Defaults {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Re-run from a saved topology and verify the trace matches
    Replay {
        /// Directory holding config.toml, topology.toml, and trace.csv from
        /// a previous `run --trace`
        #[arg(long, value_name = "DIR")]
        dir: PathBuf,
    },
}

fn load_config(common: &CommonArgs) -> Result<ScenarioConfig, String> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::load(path).map_err(|e| e.to_string())?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(protocol) = &common.protocol {
        cfg.protocol = protocol.clone();
    }
    if let Some(rounds) = common.rounds {
        cfg.rounds = rounds;
    }
    if common.trace {
        cfg.trace = true;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn write(path: &Path, contents: &str) -> Result<(), String> {
    std::fs::write(path, contents).map_err(|e| format!("i/o error on {}: {e}", path.display()))
}

fn cmd_run(common: &CommonArgs, audit: bool) -> Result<(), String> {
    let cfg = load_config(common)?;
    let out = run_scenario(&cfg).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(&common.out)
        .map_err(|e| format!("i/o error on {}: {e}", common.out.display()))?;
    write(&common.out.join("metrics.csv"), &export_csv(&out.metrics))?;
    write(&common.out.join("config.toml"), &cfg.to_toml())?;
    if cfg.trace {
        write(&common.out.join("trace.csv"), &trace_to_csv(&out.trace))?;
        write(&common.out.join("topology.toml"), &out.topology.to_toml())?;
    }
    if common.plot {
        let svg = emit_plot(
            &[(cfg.protocol.clone(), out.metrics.clone())],
            "mean_residual_j",
        )
        .map_err(|e| e.to_string())?;
        write(&common.out.join("plot.svg"), &svg)?;
    }
    if audit {
        write(&common.out.join("audit.csv"), &out.audit.to_csv())?;
    }
    let last = out.metrics.last();
    println!(
        "run complete: protocol={} rounds={} alive={} mean_residual={:.6} J -> {}",
        cfg.protocol,
        out.metrics.len(),
        last.map(|s| s.alive_count).unwrap_or(0),
        last.map(|s| s.mean_residual_j).unwrap_or(0.0),
        common.out.display()
    );
    Ok(())
}

fn cmd_compare(
    common: &CommonArgs,
    protocols: &[String],
    seeds: Option<Vec<u64>>,
    seed_count: u32,
) -> Result<(), String> {
    let cfg = load_config(common)?;
    let seeds = seeds.unwrap_or_else(|| (0..seed_count as u64).map(|i| cfg.seed + i).collect());
    let report = compare_protocols(&cfg, protocols, &seeds).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(&common.out)
        .map_err(|e| format!("i/o error on {}: {e}", common.out.display()))?;
    let text = report.render_text();
    write(&common.out.join("report.txt"), &text)?;
    write(&common.out.join("comparison.csv"), &report.to_csv())?;
    if common.plot {
        let svg = emit_plot(&report.plot_series(), "mean_residual_j").map_err(|e| e.to_string())?;
        write(&common.out.join("comparison.svg"), &svg)?;
    }
    print!("{text}");
    Ok(())
}

fn cmd_replay(dir: &Path) -> Result<(), String> {
    let cfg = ScenarioConfig::load(&dir.join("config.toml")).map_err(|e| e.to_string())?;
    if !cfg.trace {
        return Err("replay: saved config has trace disabled; re-run with --trace".into());
    }
    let topo_text = std::fs::read_to_string(dir.join("topology.toml"))
        .map_err(|e| format!("i/o error on {}: {e}", dir.join("topology.toml").display()))?;
    let topology = Topology::from_toml(&topo_text).map_err(|e| e.to_string())?;
    let saved_trace = std::fs::read_to_string(dir.join("trace.csv"))
        .map_err(|e| format!("i/o error on {}: {e}", dir.join("trace.csv").display()))?;
    let out = run_on_topology(&cfg, topology, cfg.seed).map_err(|e| e.to_string())?;
    let fresh = trace_to_csv(&out.trace);
    if fresh == saved_trace {
        println!(
            "replay ok: {} trace lines reproduced",
            fresh.lines().count()
        );
        Ok(())
    } else {
        let diverging = saved_trace
            .lines()
            .zip(fresh.lines())
            .position(|(a, b)| a != b)
            .map(|i| i + 1)
            .unwrap_or(saved_trace.lines().count().min(fresh.lines().count()) + 1);
        Err(format!(
            "replay mismatch: traces diverge at line {diverging} \
             (saved {} lines, fresh {} lines)",
            saved_trace.lines().count(),
            fresh.lines().count()
        ))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { common, audit } => cmd_run(common, *audit),
        Command::Compare {
            common,
            protocols,
            seeds,
            seed_count,
        } => cmd_compare(common, protocols, seeds.clone(), *seed_count),
        Command::Defaults { common } => load_config(common).map(|cfg| {
            print!("{}", cfg.to_toml());
        }),
        Command::Replay { dir } => cmd_replay(dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
