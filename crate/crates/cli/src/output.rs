//! CSV and JSON artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use spf_core::{FieldSample, Summary, Termination, Trajectory};

use crate::contour::Polyline;
use crate::CliError;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(path.to_path_buf(), e)
}

fn header(prefixes: &[&str], n: usize, tail: &[&str]) -> String {
    let mut cols: Vec<String> = prefixes
        .iter()
        .flat_map(|p| (0..n).map(move |i| format!("{p}{i}")))
        .collect();
    cols.extend(tail.iter().map(|s| s.to_string()));
    cols.join(",")
}

/// `t,x0..,u0..,d,s,w,V`, one row per recorded sample. Floats are written in
/// shortest round-trip form.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let n = traj.dimension;
    let mut out = create(path)?;
    let err = io(path);
    writeln!(out, "t,{}", header(&["x", "u"], n, &["d", "s", "w", "V"])).map_err(&err)?;
    for k in 0..traj.len() {
        let mut row = vec![traj.times[k]];
        row.extend_from_slice(traj.state(k));
        row.extend_from_slice(traj.control(k));
        row.extend([
            traj.margins[k],
            traj.alignments[k],
            traj.weights[k],
            traj.potentials[k],
        ]);
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(out, "{}", line.join(",")).map_err(&err)?;
    }
    out.flush().map_err(&err)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(CliError::Schema)?;
    writeln!(out).and_then(|_| out.flush()).map_err(io(path))
}

/// `x0..,v0..,w` rows.
pub fn write_field_csv(path: &Path, samples: &[FieldSample], dim: usize) -> Result<(), CliError> {
    let mut out = create(path)?;
    let err = io(path);
    writeln!(out, "{}", header(&["x", "v"], dim, &["w"])).map_err(&err)?;
    for s in samples {
        let row: Vec<String> = s
            .point
            .iter()
            .chain(s.velocity.iter())
            .chain(std::iter::once(&s.w))
            .map(f64::to_string)
            .collect();
        writeln!(out, "{}", row.join(",")).map_err(&err)?;
    }
    out.flush().map_err(&err)
}

/// `level,polyline,closed,x0,x1`; `level` is the margin value of the contour.
pub fn write_contours_csv(path: &Path, contours: &[(f64, Vec<Polyline>)]) -> Result<(), CliError> {
    let mut out = create(path)?;
    let err = io(path);
    writeln!(out, "level,polyline,closed,x0,x1").map_err(&err)?;
    let mut id = 0usize;
    for (level, lines) in contours {
        for line in lines {
            for p in &line.points {
                writeln!(out, "{level},{id},{},{},{}", line.closed, p[0], p[1]).map_err(&err)?;
            }
            id += 1;
        }
    }
    out.flush().map_err(&err)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub index: usize,
    pub initial: Vec<f64>,
    pub csv: Option<PathBuf>,
    #[serde(flatten)]
    pub summary: Summary,
    /// `None` when the run recorded a single sample.
    pub max_v_increase: Option<f64>,
}

/// Aggregate over one `run` batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub n_runs: usize,
    pub n_reached: usize,
    pub n_stalled: usize,
    pub n_timeout: usize,
    pub n_safety_fault: usize,
    /// Smallest recorded margin over all runs; `None` in an obstacle-free world.
    pub worst_min_margin: Option<f64>,
    pub max_v_increase: Option<f64>,
    pub runs: Vec<RunEntry>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl RunReport {
    pub fn new(
        initials: &[Vec<f64>],
        trajectories: &[Trajectory],
        csvs: &[Option<PathBuf>],
    ) -> Self {
        let count = |t: Termination| trajectories.iter().filter(|r| r.termination() == t).count();
        let runs: Vec<RunEntry> = trajectories
            .iter()
            .enumerate()
            .map(|(index, t)| RunEntry {
                index,
                initial: initials[index].clone(),
                csv: csvs.get(index).cloned().flatten(),
                summary: t.summary.clone(),
                max_v_increase: finite(t.max_v_increase()),
            })
            .collect();
        let worst = trajectories
            .iter()
            .map(|t| t.summary.min_margin)
            .fold(f64::INFINITY, f64::min);
        let max_dv = trajectories
            .iter()
            .map(|t| t.max_v_increase())
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            n_runs: trajectories.len(),
            n_reached: count(Termination::ReachedGoal),
            n_stalled: count(Termination::Stalled),
            n_timeout: count(Termination::Timeout),
            n_safety_fault: count(Termination::SafetyFault),
            worst_min_margin: finite(worst),
            max_v_increase: finite(max_dv),
            runs,
        }
    }
}
