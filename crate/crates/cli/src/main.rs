use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use spherenav::controller::{ModeChoice, ModeMap};
use spherenav::executor::{Priority, Scanner, Sensing};
use spherenav::par::Execution;
use spherenav::scenario::{load_scenario_with, Overrides, Scenario, SensingKind};
use spherenav::sensor::{
    perceive, scan_2d, scan_3d, segment_returns, segment_returns_3d, symmetry_test,
};
use spherenav::suite::{run_suite, write_scan_2d_csv, write_scan_3d_csv, SuiteOptions, Summary};

/// Exit status for unreadable or invalid scenarios.
const CONFIG_ERROR: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "spherenav",
    version,
    about = "Hybrid navigation among spherical obstacles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one start of one variant.
    Run {
        #[command(flatten)]
        common: Common,
        /// Start index.
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Variant name; defaults to the first one.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Run every start of every variant.
    Suite {
        #[command(flatten)]
        common: Common,
        /// Run the starts one after the other.
        #[arg(long)]
        sequential: bool,
    },
    /// Parse and validate a scenario, listing the defaults applied.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Dump one range scan from a start and the obstacles recovered from it.
    ScanDebug {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        start: usize,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Output directory (or file for scan-debug).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Record wall time in the metrics (outputs stop being reproducible).
    #[arg(long)]
    wall_time: bool,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    e_c: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// zeno-free | original
    #[arg(long, value_parser = parse_mode_map)]
    mode_map: Option<ModeMap>,
    /// continuity | original
    #[arg(long, value_parser = parse_mode_choice)]
    mode_choice: Option<ModeChoice>,
    /// flow | jump
    #[arg(long, value_parser = parse_priority)]
    priority: Option<Priority>,
    /// known-map | sensor
    #[arg(long, value_parser = parse_sensing)]
    sensing: Option<SensingKind>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            dt: self.dt,
            t_max: self.t_max,
            e_c: self.e_c,
            gamma: self.gamma,
            seed: self.seed,
            mode_map: self.mode_map,
            mode_choice: self.mode_choice,
            priority: self.priority,
            sensing: self.sensing,
        }
    }

    fn load(&self) -> Result<Scenario> {
        load_scenario_with(&self.scenario, &self.overrides())
            .with_context(|| format!("loading {}", self.scenario.display()))
    }
}

fn parse_mode_map(s: &str) -> Result<ModeMap, String> {
    match s {
        "zeno-free" => Ok(ModeMap::ZenoFree),
        "original" => Ok(ModeMap::Original),
        _ => Err(format!("unknown mode map {s:?}")),
    }
}

fn parse_mode_choice(s: &str) -> Result<ModeChoice, String> {
    match s {
        "continuity" => Ok(ModeChoice::Continuity),
        "original" => Ok(ModeChoice::Original),
        _ => Err(format!("unknown mode choice {s:?}")),
    }
}

fn parse_priority(s: &str) -> Result<Priority, String> {
    match s {
        "flow" => Ok(Priority::Flow),
        "jump" => Ok(Priority::Jump),
        _ => Err(format!("unknown priority {s:?}")),
    }
}

fn parse_sensing(s: &str) -> Result<SensingKind, String> {
    match s {
        "known-map" => Ok(SensingKind::KnownMap),
        "sensor" => Ok(SensingKind::Sensor),
        _ => Err(format!("unknown sensing {s:?}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // Scenario problems exit with 3; run outcomes decide the rest.
    let common = match &cli.command {
        Command::Run { common, .. }
        | Command::Suite { common, .. }
        | Command::Validate { common }
        | Command::ScanDebug { common, .. } => common,
    };
    let scenario = match common.load() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    match execute(&cli.command, &scenario) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(CONFIG_ERROR)
        }
    }
}

fn execute(command: &Command, scenario: &Scenario) -> Result<u8> {
    match command {
        Command::Validate { .. } => {
            print!("{scenario}");
            Ok(0)
        }
        Command::Run {
            common,
            start,
            variant,
        } => {
            let variant = match variant {
                Some(v) => v.clone(),
                None => scenario.variants[0].name.clone(),
            };
            if !scenario.variants.iter().any(|v| v.name == variant) {
                bail!("no variant named {variant}");
            }
            let opts = SuiteOptions {
                execution: Execution::Sequential,
                wall_time: common.wall_time,
                starts: Some(vec![*start]),
                variants: Some(vec![variant]),
            };
            let summary = run_suite(scenario, common.out.as_deref(), &opts)?;
            report(&summary, common.out.as_deref())
        }
        Command::Suite { common, sequential } => {
            let opts = SuiteOptions {
                execution: if *sequential {
                    Execution::Sequential
                } else {
                    Execution::default()
                },
                wall_time: common.wall_time,
                ..SuiteOptions::default()
            };
            let summary = run_suite(scenario, common.out.as_deref(), &opts)?;
            report(&summary, common.out.as_deref())
        }
        Command::ScanDebug { common, start } => scan_debug(scenario, *start, common.out.as_deref()),
    }
}

fn report(summary: &Summary, out: Option<&Path>) -> Result<u8> {
    let stdout = io::stdout();
    let mut w = stdout.lock();
    for r in &summary.runs {
        match (&r.metrics, &r.error) {
            (Some(m), _) => writeln!(
                w,
                "{:<12} start {:>3}  {:<10} length {:.4}  min clearance {:.3e}  switches {}",
                r.variant,
                r.start,
                outcome_label(&m.outcome),
                m.path_length,
                m.min_clearance.unwrap_or(f64::INFINITY),
                m.switches
            )?,
            (None, Some(e)) => writeln!(w, "{:<12} start {:>3}  error: {e}", r.variant, r.start)?,
            (None, None) => {}
        }
    }
    for e in &summary.rld {
        writeln!(
            w,
            "start {:>3}  RLD {} vs {} = {:.3}%",
            e.start, e.variant, e.reference, e.rld
        )?;
    }
    writeln!(
        w,
        "{} converged, {} timed out, {} faulted",
        summary.converged, summary.timeouts, summary.faults
    )?;
    if let Some(dir) = out {
        writeln!(w, "wrote {}", dir.display())?;
    }
    Ok(summary.exit_code() as u8)
}

fn outcome_label(o: &spherenav::executor::Outcome) -> &'static str {
    use spherenav::executor::Outcome::*;
    match o {
        Converged { .. } => "converged",
        Timeout { .. } => "timeout",
        SafetyFault { .. } => "safety",
        ZenoFault { .. } => "zeno",
    }
}

fn scan_debug(scenario: &Scenario, start: usize, out: Option<&Path>) -> Result<u8> {
    let setup = scenario
        .variants
        .iter()
        .find_map(|v| match v.config.sensing {
            Sensing::Sensor(s) => Some(s),
            Sensing::KnownMap => None,
        })
        .context("scenario has no sensor-based variant")?;
    let x = scenario
        .starts
        .get(start)
        .with_context(|| format!("start {start} does not exist"))?;
    let ws = scenario.workspace()?;
    let mut buf = Vec::new();
    let arcs = match setup.scanner {
        Scanner::Planar(cfg) => {
            let scan = scan_2d(x, &ws, &cfg)?;
            write_scan_2d_csv(&mut buf, &scan)?;
            segment_returns(&scan)
        }
        Scanner::Spherical(cfg) => {
            let scan = scan_3d(x, &ws, &cfg)?;
            write_scan_3d_csv(&mut buf, &scan)?;
            segment_returns_3d(&scan)
        }
    };
    match out {
        Some(path) => {
            fs::write(path, &buf).with_context(|| format!("writing {}", path.display()))?
        }
        None => io::stdout().write_all(&buf)?,
    }
    for (i, arc) in arcs.iter().enumerate() {
        eprintln!(
            "arc {i}: {} points, symmetric {}",
            arc.points.len(),
            symmetry_test(arc, x)
        );
    }
    for (c, r) in perceive(&arcs, x) {
        eprintln!("recovered center {:?} radius {r:.6}", c.as_slice());
    }
    Ok(0)
}
