use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use spf_cli::commands::{self, FieldGrid, EXIT_ERROR};
use spf_cli::RunDocument;
use spf_core::Reach;

#[derive(Parser)]
#[command(
    name = "spf",
    version,
    about = "Safety-filter simulation and equilibrium analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run document (JSON).
    #[arg(long, short)]
    config: PathBuf,
    /// Replace a document value, e.g. `sim.dt=2e-3`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; defaults to the document's `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the document's random initial conditions.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for batch runs.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every initial condition and write trajectories plus a report.
    Run(Common),
    /// Locate and classify undesired equilibria; exit 2 if any is not unstable.
    Analyze(Common),
    /// Emit the closed-loop vector field and dilation contours of a 2D world.
    Field {
        #[command(flatten)]
        common: Common,
        /// Lattice size as `NXxNY`.
        #[arg(long, default_value = "100x100", value_parser = parse_grid)]
        grid: (usize, usize),
        /// `xmin,xmax,ymin,ymax`; the world bounds when omitted.
        #[arg(long, value_parser = parse_extent)]
        extent: Option<[f64; 4]>,
    },
    /// Check the document and the feasibility conditions.
    Validate(Common),
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once('x').ok_or("expected NXxNY")?;
    Ok((
        a.trim().parse().map_err(|e| format!("{e}"))?,
        b.trim().parse().map_err(|e| format!("{e}"))?,
    ))
}

fn parse_extent(s: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{e}")))
        .collect::<Result<_, _>>()?;
    v.try_into()
        .map_err(|_| "expected four comma-separated numbers".to_string())
}

fn load(common: &Common) -> anyhow::Result<(RunDocument, PathBuf)> {
    if let Some(n) = common.jobs {
        if n == 0 {
            bail!("--jobs must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let mut doc = RunDocument::load(&common.config, &common.overrides)
        .with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        match doc.sim.random.as_mut() {
            Some(r) => r.seed = seed,
            None => log::warn!("--seed ignored: the document has no sim.random block"),
        }
    }
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| doc.output.directory.clone());
    Ok((doc, out))
}

fn execute(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Run(common) => {
            let (doc, out) = load(&common)?;
            let (status, report) = commands::run(&doc, &out)?;
            println!(
                "{} runs, {} reached the goal, {} stalled, {} timed out, {} safety faults; artifacts in {}",
                report.n_runs,
                report.n_reached,
                report.n_stalled,
                report.n_timeout,
                report.n_safety_fault,
                out.display()
            );
            Ok(status)
        }
        Command::Analyze(common) => {
            let (doc, _) = load(&common)?;
            let (status, reports) = commands::analyze(&doc)?;
            let json = serde_json::to_string_pretty(&reports)?;
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("equilibria.json"), format!("{json}\n"))?;
            }
            println!("{json}");
            Ok(status)
        }
        Command::Field {
            common,
            grid,
            extent,
        } => {
            let (doc, out) = load(&common)?;
            let grid = FieldGrid {
                nx: grid.0,
                ny: grid.1,
                extent,
            };
            let r = commands::field(&doc, &grid, &out)?;
            println!(
                "{} field rows, {} contours ({} open); artifacts in {}",
                r.rows,
                r.contours,
                r.open_contours,
                out.display()
            );
            Ok(0)
        }
        Command::Validate(common) => {
            let (doc, _) = load(&common)?;
            let (status, report) = commands::validate(&doc);
            match report.reach {
                Reach::Known(h) => println!("reach: {h}"),
                Reach::Unknown => println!("reach: unknown (checks are advisory)"),
            }
            if let Some(c) = report.min_clearance {
                println!("minimum obstacle clearance: {c}");
            }
            for v in &report.violations {
                println!("{v}");
            }
            if report.passed() {
                println!("ok");
            }
            Ok(status)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPF_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
