//! Multi-start, multi-variant batches and their output files.
//!
//! Layout of an output directory:
//!
//! ```text
//! out/
//!   summary.json
//!   <variant>/start_000.csv
//!   <variant>/start_000.json
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::Mode;
use crate::executor::{run, Trajectory};
use crate::metrics::{rld, Metrics};
use crate::par::{map_runs, Execution};
use crate::scenario::{Scenario, ScenarioError, ScenarioFile};
use crate::sensor::{Scan2D, Scan3D};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SuiteError + '_ {
    move |source| SuiteError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    pub execution: Execution,
    /// Record wall time in the metrics. Off by default so that outputs are
    /// byte-identical between runs.
    pub wall_time: bool,
    /// Only run these start indices.
    pub starts: Option<Vec<usize>>,
    /// Only run these variants.
    pub variants: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub variant: String,
    pub start: usize,
    pub x0: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    /// Set when the run could not be carried out at all.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RldEntry {
    pub start: usize,
    pub variant: String,
    pub reference: String,
    /// `100 (L_variant - L_reference) / L_reference`, in percent.
    pub rld: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub seed: u64,
    pub scenario: ScenarioFile,
    pub defaults: Vec<String>,
    pub runs: Vec<RunRecord>,
    pub rld: Vec<RldEntry>,
    pub converged: usize,
    pub timeouts: usize,
    pub faults: usize,
}

impl Summary {
    /// 0 when every run converged, 1 on any timeout, 2 on any fault.
    pub fn exit_code(&self) -> i32 {
        if self.faults > 0 {
            2
        } else if self.timeouts > 0 {
            1
        } else {
            0
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serialize")
    }
}

/// Runs every selected (variant, start) pair. With `out`, writes one CSV and
/// one metrics file per run as it finishes and the summary at the end.
pub fn run_suite(
    scenario: &Scenario,
    out: Option<&Path>,
    opts: &SuiteOptions,
) -> Result<Summary, SuiteError> {
    let ws = scenario.workspace()?;
    let variants: Vec<usize> = (0..scenario.variants.len())
        .filter(|&i| {
            opts.variants
                .as_ref()
                .is_none_or(|names| names.contains(&scenario.variants[i].name))
        })
        .collect();
    let starts: Vec<usize> = match &opts.starts {
        Some(s) => s.clone(),
        None => (0..scenario.starts.len()).collect(),
    };
    if let Some(&bad) = starts.iter().find(|&&s| s >= scenario.starts.len()) {
        return Err(ScenarioError::Invalid(vec![format!(
            "start {bad} does not exist ({} starts)",
            scenario.starts.len()
        )])
        .into());
    }
    if variants.is_empty() {
        return Err(ScenarioError::Invalid(vec!["no variant selected".into()]).into());
    }
    if let Some(dir) = out {
        for &v in &variants {
            let d = dir.join(&scenario.variants[v].name);
            fs::create_dir_all(&d).map_err(io_err(&d))?;
        }
    }

    let jobs: Vec<(usize, usize)> = variants
        .iter()
        .flat_map(|&v| starts.iter().map(move |&s| (v, s)))
        .collect();
    let results = map_runs(&jobs, opts.execution, |&(v, s)| {
        let variant = &scenario.variants[v];
        let x0 = &scenario.starts[s];
        let clock = Instant::now();
        let mut record = RunRecord {
            variant: variant.name.clone(),
            start: s,
            x0: x0.as_slice().to_vec(),
            metrics: None,
            error: None,
        };
        match run(&ws, x0, &variant.config) {
            Ok(res) => {
                let mut m = Metrics::from_run(&res, &variant.config);
                if opts.wall_time {
                    m.wall_time = Some(clock.elapsed().as_secs_f64());
                }
                if let Some(dir) = out {
                    let base = dir.join(&variant.name).join(format!("start_{s:03}"));
                    write_run(&base, &res.trajectory, &m)?;
                }
                record.metrics = Some(m);
            }
            Err(e) => record.error = Some(e.to_string()),
        }
        Ok::<_, SuiteError>(record)
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut rld_entries = Vec::new();
    for &s in &starts {
        let lengths: Vec<(&str, f64)> = runs
            .iter()
            .filter(|r| r.start == s)
            .filter_map(|r| {
                let m = r.metrics.as_ref()?;
                m.outcome
                    .converged()
                    .then_some((r.variant.as_str(), m.path_length))
            })
            .collect();
        for (i, (a, la)) in lengths.iter().enumerate() {
            for (b, lb) in &lengths[i + 1..] {
                if *lb > 0.0 {
                    rld_entries.push(RldEntry {
                        start: s,
                        variant: a.to_string(),
                        reference: b.to_string(),
                        rld: rld(*la, *lb),
                    });
                }
            }
        }
    }

    let count = |f: &dyn Fn(&RunRecord) -> bool| runs.iter().filter(|r| f(r)).count();
    let summary = Summary {
        name: scenario.name.clone(),
        seed: scenario.seed,
        scenario: scenario.source.clone(),
        defaults: scenario.defaults.clone(),
        converged: count(&|r| r.metrics.as_ref().is_some_and(|m| m.outcome.converged())),
        timeouts: count(&|r| {
            r.metrics
                .as_ref()
                .is_some_and(|m| !m.outcome.converged() && !m.outcome.is_fault())
        }),
        faults: count(&|r| {
            r.error.is_some() || r.metrics.as_ref().is_some_and(|m| m.outcome.is_fault())
        }),
        runs,
        rld: rld_entries,
    };
    if let Some(dir) = out {
        let path = dir.join("summary.json");
        fs::write(&path, summary.to_json() + "\n").map_err(io_err(&path))?;
    }
    Ok(summary)
}

/// Writes `<base>.csv` and `<base>.json`.
pub fn write_run(base: &Path, traj: &Trajectory, metrics: &Metrics) -> Result<(), SuiteError> {
    let csv_path = base.with_extension("csv");
    let file = fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    write_trajectory_csv(io::BufWriter::new(file), traj)?;
    let json_path = base.with_extension("json");
    fs::write(&json_path, metrics.to_json() + "\n").map_err(io_err(&json_path))?;
    Ok(())
}

fn mode_value(m: Mode) -> String {
    m.value().to_string()
}

/// Trajectory CSV: `t, j, x_1..x_n, k, m, u_1..u_n, clearance`, followed by
/// `heading, v, omega` for unicycle runs. Floats use the shortest form that
/// parses back to the same value.
pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory) -> Result<(), SuiteError> {
    let mut out = csv::Writer::from_writer(w);
    let Some(first) = traj.samples.first() else {
        out.flush().map_err(|e| SuiteError::Csv(e.into()))?;
        return Ok(());
    };
    let n = first.x.len();
    let unicycle = first.drive.is_some();
    let mut header = vec!["t".to_string(), "j".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend(["k".to_string(), "m".to_string()]);
    header.extend((1..=n).map(|i| format!("u_{i}")));
    header.push("clearance".into());
    if unicycle {
        header.extend(["heading".to_string(), "v".to_string(), "omega".to_string()]);
    }
    out.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for s in &traj.samples {
        row.clear();
        row.push(s.t.to_string());
        row.push(s.j.to_string());
        row.extend(s.x.iter().map(|v| v.to_string()));
        row.push(s.k.to_string());
        row.push(mode_value(s.m));
        row.extend(s.u.iter().map(|v| v.to_string()));
        row.push(s.clearance.to_string());
        if unicycle {
            let d = s.drive.unwrap_or(crate::executor::DriveSample {
                heading: f64::NAN,
                v: f64::NAN,
                omega: f64::NAN,
            });
            row.extend([d.heading.to_string(), d.v.to_string(), d.omega.to_string()]);
        }
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| SuiteError::Csv(e.into()))?;
    Ok(())
}

/// One row per planar beam: `angle_deg, range, hit`.
pub fn write_scan_2d_csv<W: Write>(w: W, scan: &Scan2D) -> Result<(), SuiteError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["angle_deg", "range", "hit"])?;
    for (i, (a, r)) in scan.angles.iter().zip(&scan.ranges).enumerate() {
        out.write_record([
            a.to_degrees().to_string(),
            r.to_string(),
            u8::from(scan.is_return(i)).to_string(),
        ])?;
    }
    out.flush().map_err(|e| SuiteError::Csv(e.into()))?;
    Ok(())
}

/// One row per spatial beam: `polar_deg, azimuth_deg, range, hit`.
pub fn write_scan_3d_csv<W: Write>(w: W, scan: &Scan3D) -> Result<(), SuiteError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["polar_deg", "azimuth_deg", "range", "hit"])?;
    for (i, row) in scan.ranges.iter().enumerate() {
        for (j, r) in row.iter().enumerate() {
            // pole rows hold a single beam
            let az = if row.len() == 1 { 0.0 } else { scan.azimuth[j] };
            out.write_record([
                scan.polar[i].to_degrees().to_string(),
                az.to_degrees().to_string(),
                r.to_string(),
                u8::from(*r < scan.max_range).to_string(),
            ])?;
        }
    }
    out.flush().map_err(|e| SuiteError::Csv(e.into()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{parse_scenario, Overrides};

    const TWO_VARIANTS: &str = r#"
name = "pair"
dimension = 2
target = [0.0, 0.0]
starts = [[4.5, 0.3], [-3.0, 1.0]]

[[obstacles]]
center = [2.0, 0.0]
radius = 1.0

[sensor]
range = 2.0

[[variants]]
name = "map"

[[variants]]
name = "lidar"
sensing = "sensor"
"#;

    #[test]
    fn suite_writes_files_and_rld() {
        let s = parse_scenario(TWO_VARIANTS, &Overrides::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let summary = run_suite(&s, Some(dir.path()), &SuiteOptions::default()).unwrap();
        assert_eq!(summary.runs.len(), 4);
        assert_eq!(summary.exit_code(), 0);
        assert_eq!(summary.rld.len(), 2);
        for v in ["map", "lidar"] {
            for i in 0..2 {
                let base = dir.path().join(v).join(format!("start_{i:03}"));
                let text = fs::read_to_string(base.with_extension("json")).unwrap();
                let m = Metrics::from_json(&text).unwrap();
                let rec = summary
                    .runs
                    .iter()
                    .find(|r| r.variant == v && r.start == i)
                    .unwrap();
                assert_eq!(rec.metrics.as_ref(), Some(&m));
                let csv = fs::read_to_string(base.with_extension("csv")).unwrap();
                assert!(csv.starts_with("t,j,x_1,x_2,k,m,u_1,u_2,clearance\n"));
                assert_eq!(csv.lines().count(), m.samples + 1);
            }
        }
        let text = fs::read_to_string(dir.path().join("summary.json")).unwrap();
        let back: Summary = serde_json::from_str(&text).unwrap();
        assert_eq!(back, summary);
        assert!(back
            .defaults
            .iter()
            .any(|d| d.starts_with("controller.gamma")));
    }

    #[test]
    fn rld_matches_path_lengths() {
        let s = parse_scenario(TWO_VARIANTS, &Overrides::default()).unwrap();
        let opts = SuiteOptions {
            starts: Some(vec![0]),
            ..SuiteOptions::default()
        };
        let summary = run_suite(&s, None, &opts).unwrap();
        let len = |v: &str| {
            summary
                .runs
                .iter()
                .find(|r| r.variant == v)
                .and_then(|r| r.metrics.as_ref())
                .unwrap()
                .path_length
        };
        let e = &summary.rld[0];
        assert_eq!((e.variant.as_str(), e.reference.as_str()), ("map", "lidar"));
        let expected = 100.0 * (len("map") - len("lidar")) / len("lidar");
        assert!((e.rld - expected).abs() < 1e-12);
    }

    #[test]
    fn bad_start_index_is_rejected() {
        let s = parse_scenario(TWO_VARIANTS, &Overrides::default()).unwrap();
        let opts = SuiteOptions {
            starts: Some(vec![5]),
            ..SuiteOptions::default()
        };
        assert!(run_suite(&s, None, &opts).is_err());
    }
}
