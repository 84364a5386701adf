//! Subcommand implementations. Each returns the process exit status.

use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;

use spf_core::{
    batch_simulate, classify_equilibrium, emit_vector_field, find_equilibria, validate_feasibility,
    EquilibriumReport, FeasibilityReport, GeometryError, GridSpec, Reach, Termination,
};

use crate::contour::{marching_squares, Polyline};
use crate::document::{Format, RunDocument};
use crate::output::{
    write_contours_csv, write_field_csv, write_json, write_trajectory_csv, RunReport,
};
use crate::CliError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
/// `analyze` found an equilibrium that is not decisively unstable.
pub const EXIT_NOT_AGAS: i32 = 2;
/// `run` recorded a safety fault.
pub const EXIT_SAFETY_FAULT: i32 = 3;

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))
}

/// Infeasible parameters are an error; an unknown reach is only logged.
fn check_feasibility(doc: &RunDocument) -> Result<FeasibilityReport, CliError> {
    let report = validate_feasibility(&doc.world, &doc.robot, &doc.penalty);
    match report.check(true) {
        Ok(()) => {
            if report.reach == Reach::Unknown {
                info!("reach of the obstacle set is unknown; feasibility checks are advisory");
            }
            Ok(report)
        }
        Err(e) => Err(CliError::Geometry(e)),
    }
}

pub fn run(doc: &RunDocument, out: &Path) -> Result<(i32, RunReport), CliError> {
    check_feasibility(doc)?;
    let config = doc.sim_config()?;
    prepare_dir(out)?;
    info!("simulating {} initial conditions", config.initials.len());
    let trajectories = batch_simulate(&config, &config.initials);
    let mut csvs = Vec::with_capacity(trajectories.len());
    for (k, traj) in trajectories.iter().enumerate() {
        let mut csv = None;
        if doc.output.formats.contains(&Format::Csv) {
            let path = out.join(format!("traj_{k:03}.csv"));
            write_trajectory_csv(&path, traj)?;
            csv = Some(PathBuf::from(path.file_name().expect("joined file name")));
        }
        if doc.output.formats.contains(&Format::Json) {
            write_json(&out.join(format!("traj_{k:03}.json")), &traj.summary)?;
        }
        csvs.push(csv);
    }
    let initials: Vec<Vec<f64>> = config
        .initials
        .iter()
        .map(|x| x.iter().copied().collect())
        .collect();
    let report = RunReport::new(&initials, &trajectories, &csvs);
    write_json(&out.join("report.json"), &report)?;
    for (k, t) in trajectories.iter().enumerate() {
        if t.termination() != Termination::ReachedGoal {
            warn!(
                "run {k} ended {:?} at {:?}",
                t.termination(),
                t.final_state().as_slice()
            );
        }
    }
    info!(
        "{}/{} runs reached the goal, worst margin {:?}",
        report.n_reached, report.n_runs, report.worst_min_margin
    );
    let status = if report.n_safety_fault > 0 {
        EXIT_SAFETY_FAULT
    } else {
        EXIT_OK
    };
    Ok((status, report))
}

pub fn analyze(doc: &RunDocument) -> Result<(i32, Vec<EquilibriumReport>), CliError> {
    if doc.world.is_empty() {
        return Ok((EXIT_OK, Vec::new()));
    }
    let reports = find_equilibria(&doc.world, &doc.potential, &doc.robot)?;
    let mut status = EXIT_OK;
    for r in &reports {
        if !r.unstable || r.indefinite {
            warn!(
                "equilibrium at {:?} on obstacle {} is not decisively unstable (spectrum {:?})",
                r.location, r.obstacle, r.spectrum
            );
            status = EXIT_NOT_AGAS;
        }
    }
    Ok((status, reports))
}

/// Re-runs the classification of one report; used to cross-check `analyze`.
pub fn reclassify(doc: &RunDocument, report: &EquilibriumReport) -> Result<bool, CliError> {
    let x = spf_core::Vector::from_column_slice(&report.location);
    Ok(classify_equilibrium(&doc.world, &doc.potential, &x, report.lambda)?.unstable)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldGrid {
    pub nx: usize,
    pub ny: usize,
    /// `[xmin, xmax, ymin, ymax]`; the world bounds when absent.
    pub extent: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldOutput {
    pub rows: usize,
    pub contours: usize,
    pub open_contours: usize,
}

pub fn field(doc: &RunDocument, grid: &FieldGrid, out: &Path) -> Result<FieldOutput, CliError> {
    if doc.world.dimension() != 2 {
        return Err(CliError::Unsupported(
            "vector fields are emitted for 2D worlds only".into(),
        ));
    }
    if grid.nx < 2 || grid.ny < 2 {
        return Err(CliError::Invalid(
            "field grid needs at least 2x2 points".into(),
        ));
    }
    let [x0, x1, y0, y1] = match (grid.extent, doc.world.bounds()) {
        (Some(e), _) => e,
        (None, Some(b)) => [b.min[0], b.max[0], b.min[1], b.max[1]],
        (None, None) => {
            return Err(CliError::Invalid(
                "field needs --extent or world bounds".into(),
            ))
        }
    };
    let spec = GridSpec {
        min: vec![x0, y0],
        max: vec![x1, y1],
        counts: vec![grid.nx, grid.ny],
    };
    let mut config = doc.sim_config()?;
    config.initials.clear();
    prepare_dir(out)?;
    let samples = emit_vector_field(&config, &spec)?;
    write_field_csv(&out.join("field.csv"), &samples, 2)?;

    let mut contours: Vec<(f64, Vec<Polyline>)> = Vec::new();
    if !doc.world.is_empty() {
        let points = spec.points();
        let clearance = doc.robot.clearance();
        let margins = points
            .iter()
            .map(|p| match doc.world.margin(p, &doc.robot) {
                Ok(m) => Ok(m),
                // interior points only need the right sign
                Err(GeometryError::InsideObstacle { .. }) => Ok(-clearance),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let xs: Vec<f64> = points[..grid.nx].iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = points.iter().step_by(grid.nx).map(|p| p[1]).collect();
        for level in [0.0, doc.penalty.mu] {
            contours.push((level, marching_squares(&margins, &xs, &ys, level)));
        }
    }
    write_contours_csv(&out.join("contours.csv"), &contours)?;
    let all = contours.iter().flat_map(|(_, l)| l);
    Ok(FieldOutput {
        rows: samples.len(),
        contours: all.clone().count(),
        open_contours: all.filter(|l| !l.closed).count(),
    })
}

/// Feasibility report; exit 1 if a condition is violated.
pub fn validate(doc: &RunDocument) -> (i32, FeasibilityReport) {
    let report = validate_feasibility(&doc.world, &doc.robot, &doc.penalty);
    let status = if report.check(true).is_ok() {
        EXIT_OK
    } else {
        EXIT_ERROR
    };
    (status, report)
}
