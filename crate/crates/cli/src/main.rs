use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use slarm::experiment::{accuracy_from_dirs, run_experiment, ExperimentConfig, Mode, DEFAULT_EPSILON_DB};
use slarm::grid::read_pgm;
use slarm::radio::{build_radio_map, HeightModel};
use slarm::Scenario;

/// Simultaneous localization and radio mapping experiments.
#[derive(Parser, Debug)]
#[command(name = "slarm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sweep resolutions, speeds and seeds; write maps, radio maps and metrics.
    Run {
        /// Scenario JSON file, or one of the built-in rooms `fig2` and `fig2-padded`.
        #[arg(long, default_value = "fig2")]
        scenario: String,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.25")]
        resolutions: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.6")]
        speeds: Vec<f64>,
        #[arg(long, default_value_t = 30)]
        particles: usize,
        /// Inclusive range `a..b` or a comma-separated list.
        #[arg(long, default_value = "1", value_parser = parse_seeds)]
        seeds: Seeds,
        #[arg(long, default_value_t = DEFAULT_EPSILON_DB)]
        epsilon_db: f64,
        #[arg(long, default_value = "both")]
        mode: Mode,
        /// Output directory; metrics go to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the radio map of an occupancy grid.
    RadioMap {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value = "fig2")]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every `*_map.pgm` in a directory against the truth directory.
    Accuracy {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPSILON_DB)]
        epsilon_db: f64,
    },
}

#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let bad = |e: std::num::ParseIntError| format!("bad seed in '{s}': {e}");
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(bad)?;
        let b: u64 = b.trim_start_matches('=').trim().parse().map_err(bad)?;
        if b < a {
            return Err(format!("empty seed range '{s}'"));
        }
        return Ok(Seeds((a..=b).collect()));
    }
    s.split(',')
        .map(|p| p.trim().parse().map_err(bad))
        .collect::<Result<Vec<_>, _>>()
        .map(Seeds)
}

fn load_scenario(spec: &str) -> Result<(Scenario, Option<PathBuf>)> {
    Ok(match spec {
        "fig2" => (Scenario::fig2(), None),
        "fig2-padded" | "fig2_padded" => (Scenario::fig2_padded(), None),
        path => {
            let p = PathBuf::from(path);
            let s = Scenario::from_path(&p).with_context(|| format!("loading scenario {path}"))?;
            (s, Some(p))
        }
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            scenario,
            resolutions,
            speeds,
            particles,
            seeds,
            epsilon_db,
            mode,
            out,
        } => {
            let (sc, path) = load_scenario(&scenario)?;
            let mut cfg = ExperimentConfig::new(sc);
            cfg.scenario_path = path;
            cfg.resolutions = resolutions;
            cfg.speeds = speeds;
            cfg.particles = particles;
            cfg.seeds = seeds.0;
            cfg.epsilon_db = epsilon_db;
            cfg.mode = mode;
            cfg.out_dir = out.clone();
            let report = run_experiment(&cfg)?;
            for r in &report.rows {
                match &r.error {
                    None => eprintln!(
                        "{} {}: accuracy {:.2}% coverage {:.4} ate_rmse {:.4}",
                        r.mode.as_str(),
                        r.stem(),
                        r.radio_accuracy,
                        r.coverage_rate,
                        r.ate_rmse
                    ),
                    Some(e) => eprintln!("{} {}: failed: {e}", r.mode.as_str(), r.stem()),
                }
            }
            match &out {
                Some(dir) => eprintln!("wrote {}", dir.display()),
                None => print!("{}", report.metrics_csv()),
            }
            if report.failures() > 0 {
                eprintln!("{} of {} cells failed", report.failures(), report.rows.len());
                return Ok(ExitCode::from(2));
            }
        }
        Command::RadioMap { grid, scenario, out } => {
            let (sc, _) = load_scenario(&scenario)?;
            let map = read_pgm(&grid).with_context(|| format!("reading {}", grid.display()))?;
            let g = map.geometry();
            if (g.x_max - sc.x_max).abs() > 1e-9 || (g.y_max - sc.y_max).abs() > 1e-9 {
                bail!(
                    "grid covers {}x{} m but the scenario room is {}x{} m",
                    2.0 * g.x_max,
                    2.0 * g.y_max,
                    2.0 * sc.x_max,
                    2.0 * sc.y_max
                );
            }
            let radio = build_radio_map(&map, &HeightModel::from_scenario(&sc), &sc)?;
            radio.write_csv(&out)?;
            eprintln!("{} cells written to {}", radio.data_count(), out.display());
        }
        Command::Accuracy { est, truth, epsilon_db } => {
            check_dir(&est)?;
            check_dir(&truth)?;
            println!("stem,accuracy");
            for (stem, acc) in accuracy_from_dirs(&est, &truth, epsilon_db)? {
                println!("{stem},{acc:.4}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn check_dir(p: &Path) -> Result<()> {
    if !p.is_dir() {
        bail!("{} is not a directory", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges_are_inclusive() {
        assert_eq!(parse_seeds("1..10").unwrap().0, (1..=10).collect::<Vec<_>>());
        assert_eq!(parse_seeds("3..=4").unwrap().0, vec![3, 4]);
        assert_eq!(parse_seeds("5,2").unwrap().0, vec![5, 2]);
        assert!(parse_seeds("4..1").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
