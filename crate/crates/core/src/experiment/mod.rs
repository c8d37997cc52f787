//! Resolution/speed sweeps, the radio-map accuracy metric and artifact
//! export.
//!
//! Accuracy is scored over the true mobile area (every cell of the truth
//! raster except enclosed free space). A truly occupied cell is accurate
//! unless the estimate calls it free; a truly free cell is accurate when the
//! estimate calls it free and the two gains agree within `epsilon_db`.

mod simulate;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use simulate::{
    calibrate_mse, simulational_pipeline, theoretical_pipeline, world_resolution, PipelineOutcome, SimParams,
    SimWorld, TruthMaps,
};

use crate::coverage::{trajectory_csv, CoverageReport, DEFAULT_EXPANSION_RADIUS};
use crate::error::{Error, Result};
use crate::grid::{read_pgm, write_pgm, CellClass, ClassGrid, GridIndex};
use crate::radio::{read_radio_csv, RadioMap};
use crate::rng::derive_seed;
use crate::scenario::{Scenario, DEFAULT_FC_GHZ};

pub const DEFAULT_EPSILON_DB: f64 = 1.0;
pub const DEFAULT_SCAN_RATE_HZ: f64 = 5.0;

const CALIBRATION_STREAM: u64 = 0xCA1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Theoretical,
    Simulational,
    Both,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Theoretical => "theoretical",
            Mode::Simulational => "simulational",
            Mode::Both => "both",
        }
    }

    fn pipelines(self) -> &'static [Mode] {
        match self {
            Mode::Theoretical => &[Mode::Theoretical],
            Mode::Simulational => &[Mode::Simulational],
            Mode::Both => &[Mode::Theoretical, Mode::Simulational],
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theoretical" => Ok(Mode::Theoretical),
            "simulational" => Ok(Mode::Simulational),
            "both" => Ok(Mode::Both),
            other => Err(Error::InvalidArgument(format!(
                "mode must be theoretical, simulational or both, got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Where the scenario came from, for the report.
    pub scenario_path: Option<PathBuf>,
    pub resolutions: Vec<f64>,
    pub speeds: Vec<f64>,
    pub particles: usize,
    pub seeds: Vec<u64>,
    pub epsilon_db: f64,
    pub mode: Mode,
    /// Artifacts are written here when set.
    pub out_dir: Option<PathBuf>,
    pub r_e: f64,
    pub scan_rate_hz: f64,
    /// Short filter runs averaged for the boundary-shrink MSE.
    pub calibration_runs: usize,
    pub calibration_steps: usize,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            scenario_path: None,
            resolutions: vec![0.05, 0.1, 0.25],
            speeds: vec![0.6],
            particles: 30,
            seeds: vec![1],
            epsilon_db: DEFAULT_EPSILON_DB,
            mode: Mode::Both,
            out_dir: None,
            r_e: DEFAULT_EXPANSION_RADIUS,
            scan_rate_hz: DEFAULT_SCAN_RATE_HZ,
            calibration_runs: 5,
            calibration_steps: 40,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.resolutions.is_empty() || self.speeds.is_empty() || self.seeds.is_empty() {
            return bad("resolutions, speeds and seeds must be nonempty".into());
        }
        if let Some(d) = self.resolutions.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return bad(format!("resolution must be positive, got {d}"));
        }
        if let Some(v) = self.speeds.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return bad(format!("speed must be positive, got {v}"));
        }
        if self.particles == 0 {
            return bad("need at least one particle".into());
        }
        if !(self.epsilon_db >= 0.0) {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon_db));
        }
        if !(self.r_e >= 0.0) {
            return bad(format!("expansion radius must be >= 0, got {}", self.r_e));
        }
        if !(self.scan_rate_hz > 0.0) {
            return bad(format!("scan rate must be positive, got {}", self.scan_rate_hz));
        }
        Ok(())
    }
}

/// One (mode, δ, v, seed) cell of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub mode: Mode,
    pub delta: f64,
    pub v: f64,
    pub seed: u64,
    /// `None` on success.
    pub error: Option<String>,
    pub coverage_rate: f64,
    pub ate_mse: f64,
    pub ate_rmse: f64,
    pub radio_accuracy: f64,
    pub exploration_time_s: f64,
    pub steps: usize,
    pub scans: usize,
    pub boundary_mse: f64,
    pub coverage: Option<CoverageReport>,
}

impl MetricsRow {
    fn failed(mode: Mode, delta: f64, v: f64, seed: u64, err: &Error) -> Self {
        Self {
            mode,
            delta,
            v,
            seed,
            error: Some(err.to_string()),
            coverage_rate: f64::NAN,
            ate_mse: f64::NAN,
            ate_rmse: f64::NAN,
            radio_accuracy: f64::NAN,
            exploration_time_s: f64::NAN,
            steps: 0,
            scans: 0,
            boundary_mse: f64::NAN,
            coverage: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    /// File name prefix, e.g. `d0.050_v0.60_s1`.
    pub fn stem(&self) -> String {
        artifact_stem(self.delta, self.v, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub mode: Mode,
    pub delta: f64,
    pub v: f64,
    pub seed: u64,
    pub wall_clock_s: f64,
}

/// Sweep results. Wall-clock times live apart from the metrics so that the
/// metrics stay a pure function of the configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub timings: Vec<TimingRow>,
}

impl MetricsReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }

    pub fn metrics_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.rows)?;
        s.push('\n');
        Ok(s)
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(
            "mode,delta,v,seed,status,coverage_rate,ate_mse,ate_rmse,radio_accuracy,exploration_time_s,steps,scans,boundary_mse\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.6},{:.8},{:.8},{:.4},{:.4},{},{},{:.8}",
                r.mode.as_str(),
                r.delta,
                r.v,
                r.seed,
                if r.is_ok() { "ok" } else { "error" },
                r.coverage_rate,
                r.ate_mse,
                r.ate_rmse,
                r.radio_accuracy,
                r.exploration_time_s,
                r.steps,
                r.scans,
                r.boundary_mse
            );
        }
        s
    }

    pub fn timings_csv(&self) -> String {
        let mut s = String::from("mode,delta,v,seed,wall_clock_s\n");
        for t in &self.timings {
            let _ = writeln!(s, "{},{},{},{},{:.3}", t.mode.as_str(), t.delta, t.v, t.seed, t.wall_clock_s);
        }
        s
    }
}

pub fn artifact_stem(delta: f64, v: f64, seed: u64) -> String {
    format!("d{delta:.3}_v{v:.2}_s{seed}")
}

pub fn truth_stem(delta: f64) -> String {
    format!("d{delta:.3}")
}

/// Percentage of accurate cells over the true mobile area.
pub fn radio_map_accuracy(
    est_map: &ClassGrid,
    est_radio: &RadioMap,
    truth_map: &ClassGrid,
    truth_radio: &RadioMap,
    epsilon_db: f64,
) -> Result<f64> {
    let g = truth_map.geometry();
    for (what, other) in [
        ("estimated map", est_map.geometry()),
        ("estimated radio map", est_radio.geometry()),
        ("true radio map", truth_radio.geometry()),
    ] {
        if !g.same_layout(other) {
            return Err(Error::DimensionMismatch(format!(
                "{what} is {}x{} at {} m, truth is {}x{} at {} m",
                other.width, other.height, other.delta, g.width, g.height, g.delta
            )));
        }
    }
    let mut area = 0usize;
    let mut accurate = 0usize;
    for (i, (t, e)) in truth_map.cells().iter().zip(est_map.cells()).enumerate() {
        let ok = match t {
            CellClass::Unexplored => continue,
            CellClass::Occupied => *e != CellClass::Free,
            CellClass::Free => {
                *e == CellClass::Free
                    && match (&est_radio.cells()[i], &truth_radio.cells()[i]) {
                        (Some(a), Some(b)) => (a.gain_db() - b.gain_db()).abs() <= epsilon_db,
                        _ => false,
                    }
            }
        };
        area += 1;
        accurate += ok as usize;
    }
    if area == 0 {
        return Err(Error::InvalidArgument("truth map has no mobile area".into()));
    }
    Ok(100.0 * accurate as f64 / area as f64)
}

/// Travel time over a cell path; turns are free.
pub fn exploration_time(trajectory: &[GridIndex], v: f64, delta: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::InvalidArgument(format!("speed must be positive, got {v}")));
    }
    Ok(trajectory.len().saturating_sub(1) as f64 * delta / v)
}

/// Files of one sweep cell, in the order they are written.
pub const ARTIFACT_SUFFIXES: [&str; 5] = ["map.pgm", "radio.csv", "radio_grid.csv", "coverage.csv", "trajectory.csv"];

/// Writes the five artifacts of one run into `dir`, named `{stem}_{suffix}`.
pub fn export_artifacts(outcome: &PipelineOutcome, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths: Vec<PathBuf> = ARTIFACT_SUFFIXES.iter().map(|s| dir.join(format!("{stem}_{s}"))).collect();
    write_pgm(&outcome.map, &paths[0])?;
    outcome.radio.write_csv(&paths[1])?;
    outcome.radio.write_grid_csv(&paths[2])?;
    write_text(&paths[3], &trajectory_csv(&outcome.state))?;
    let mut t = String::from("k,true_x_m,true_y_m,est_x_m,est_y_m\n");
    for (k, (a, e)) in outcome.positions.iter().enumerate() {
        let _ = writeln!(t, "{k},{:.6},{:.6},{:.6},{:.6}", a.x, a.y, e.x, e.y);
    }
    write_text(&paths[4], &t)?;
    Ok(paths)
}

/// Writes the true map and radio map at one resolution into `dir`.
pub fn export_truth(truth: &TruthMaps, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = truth_stem(truth.classes.geometry().delta);
    let paths = vec![
        dir.join(format!("{stem}_map.pgm")),
        dir.join(format!("{stem}_radio.csv")),
        dir.join(format!("{stem}_radio_grid.csv")),
    ];
    write_pgm(&truth.classes, &paths[0])?;
    truth.radio.write_csv(&paths[1])?;
    truth.radio.write_grid_csv(&paths[2])?;
    Ok(paths)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn score(outcome: &PipelineOutcome, truth: &TruthMaps, epsilon_db: f64) -> Result<f64> {
    radio_map_accuracy(&outcome.map, &outcome.radio, &truth.classes, &truth.radio, epsilon_db)
}

/// Runs the sweep. Failures of single cells are recorded in their rows and
/// do not stop the sweep; only an invalid configuration or a failed metrics
/// export is an error.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let mut report = MetricsReport::default();
    for &delta in &cfg.resolutions {
        let started = Instant::now();
        let truth = TruthMaps::build(&cfg.scenario, delta).and_then(|t| {
            if let Some(dir) = &cfg.out_dir {
                export_truth(&t, &dir.join("truth"))?;
            }
            Ok(t)
        });
        let needs_world = cfg.mode != Mode::Theoretical;
        let world = match (&truth, needs_world) {
            (Ok(_), true) => Some(SimWorld::build(&cfg.scenario, delta)),
            _ => None,
        };
        let setup_s = started.elapsed().as_secs_f64();
        for &v in &cfg.speeds {
            let params = SimParams {
                v,
                particles: cfg.particles,
                r_e: cfg.r_e,
                scan_rate_hz: cfg.scan_rate_hz,
            };
            let mut mse: Option<Result<f64>> = None;
            for &seed in &cfg.seeds {
                for &mode in cfg.mode.pipelines() {
                    let started = Instant::now();
                    let row = match &truth {
                        Err(e) => MetricsRow::failed(mode, delta, v, seed, e),
                        Ok(truth) => {
                            let res = run_cell(cfg, mode, truth, world.as_ref(), &params, &mut mse, seed);
                            match res {
                                Ok(row) => row,
                                Err(e) => MetricsRow::failed(mode, delta, v, seed, &e),
                            }
                        }
                    };
                    report.rows.push(row);
                    report.timings.push(TimingRow {
                        mode,
                        delta,
                        v,
                        seed,
                        wall_clock_s: started.elapsed().as_secs_f64() + setup_s,
                    });
                }
            }
        }
    }
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_text(&dir.join("metrics.json"), &report.metrics_json()?)?;
        write_text(&dir.join("metrics.csv"), &report.metrics_csv())?;
        write_text(&dir.join("timings.csv"), &report.timings_csv())?;
    }
    Ok(report)
}

fn run_cell(
    cfg: &ExperimentConfig,
    mode: Mode,
    truth: &TruthMaps,
    world: Option<&Result<SimWorld>>,
    params: &SimParams,
    mse: &mut Option<Result<f64>>,
    seed: u64,
) -> Result<MetricsRow> {
    let delta = truth.classes.geometry().delta;
    let (outcome, boundary_mse) = match mode {
        Mode::Simulational => {
            let world = match world {
                Some(Ok(w)) => w,
                Some(Err(e)) => return Err(Error::InvalidArgument(format!("sensor world: {e}"))),
                None => return Err(Error::InvalidArgument("sensor world missing".into())),
            };
            let m = match mse.get_or_insert_with(|| {
                calibrate_mse(
                    &cfg.scenario,
                    world,
                    truth,
                    params,
                    cfg.calibration_runs,
                    cfg.calibration_steps,
                    derive_seed(CALIBRATION_STREAM, &[delta.to_bits(), params.v.to_bits()]),
                )
            }) {
                Ok(m) => *m,
                Err(e) => return Err(Error::InvalidArgument(format!("calibration: {e}"))),
            };
            (simulational_pipeline(&cfg.scenario, world, truth, params, m, seed, None)?, m)
        }
        _ => (theoretical_pipeline(truth, cfg.r_e, seed)?, 0.0),
    };
    let radio_accuracy = score(&outcome, truth, cfg.epsilon_db)?;
    if let Some(dir) = &cfg.out_dir {
        export_artifacts(&outcome, &dir.join(mode.as_str()), &artifact_stem(delta, params.v, seed))?;
    }
    let ate = outcome.ate.unwrap_or_default();
    Ok(MetricsRow {
        mode,
        delta,
        v: params.v,
        seed,
        error: None,
        coverage_rate: outcome.coverage.coverage_rate,
        ate_mse: ate.mse,
        ate_rmse: ate.rmse,
        radio_accuracy,
        exploration_time_s: exploration_time(&outcome.state.trajectory, params.v, delta)?,
        steps: outcome.coverage.steps,
        scans: outcome.scans,
        boundary_mse,
        coverage: Some(outcome.coverage),
    })
}

/// Accuracy of every estimated map in `est_dir` against the truth files in
/// `truth_dir`, matched by resolution. Returns `(stem, accuracy)` pairs
/// sorted by stem.
pub fn accuracy_from_dirs(est_dir: &Path, truth_dir: &Path, epsilon_db: f64) -> Result<Vec<(String, f64)>> {
    let entries = std::fs::read_dir(est_dir).map_err(|e| Error::io(est_dir, e))?;
    let mut stems = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(est_dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix("_map.pgm") {
            stems.push(stem.to_string());
        }
    }
    stems.sort();
    let mut out = Vec::new();
    for stem in stems {
        let key = stem.split('_').next().unwrap_or(&stem);
        let truth_map = read_pgm(&truth_dir.join(format!("{key}_map.pgm")))?;
        let truth_radio = read_radio_csv(
            &truth_dir.join(format!("{key}_radio.csv")),
            *truth_map.geometry(),
            DEFAULT_FC_GHZ,
        )?;
        let est_map = read_pgm(&est_dir.join(format!("{stem}_map.pgm")))?;
        let est_radio = read_radio_csv(
            &est_dir.join(format!("{stem}_radio.csv")),
            *est_map.geometry(),
            DEFAULT_FC_GHZ,
        )?;
        let acc = radio_map_accuracy(&est_map, &est_radio, &truth_map, &truth_radio, epsilon_db)?;
        out.push((stem, acc));
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no '*_map.pgm' files in {}",
            est_dir.display()
        )));
    }
    Ok(out)
}
