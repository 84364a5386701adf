//! Run documents: one JSON file describing a world, a controller and a batch.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use spf_core::{
    random_initials, Integrator, PenaltyParams, QuadraticPotential, RobotParams, SensorConfig,
    SimConfig, Vector, World,
};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDocument {
    pub world: World,
    pub potential: QuadraticPotential,
    pub robot: RobotParams,
    pub penalty: PenaltyParams,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub sim: SimBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_goal_tol")]
    pub goal_tol: f64,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub initials: Vec<Vec<f64>>,
    /// Extra seeded initial conditions drawn from the world bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomInitials>,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_t_max() -> f64 {
    60.0
}

fn default_goal_tol() -> f64 {
    1e-2
}

impl Default for SimBlock {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            t_max: default_t_max(),
            goal_tol: default_goal_tol(),
            integrator: Integrator::default(),
            initials: Vec::new(),
            random: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomInitials {
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

impl RunDocument {
    /// Reads, overrides and validates a document.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        Self::from_str_with(&text, overrides)
    }

    pub fn from_str_with(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut value: Value = serde_json::from_str(text).map_err(CliError::Schema)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let doc: RunDocument = serde_json::from_value(value).map_err(CliError::Schema)?;
        doc.validate()?;
        Ok(doc)
    }

    /// Numeric constraints the serde layer does not enforce.
    pub fn validate(&self) -> Result<(), CliError> {
        let dim = self.world.dimension();
        let bad = |m: String| Err(CliError::Invalid(m));
        PenaltyParams::with_blend(self.penalty.mu, self.penalty.nu, self.penalty.blend)
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        if !(self.robot.radius > 0.0) || !self.robot.radius.is_finite() {
            return bad(format!(
                "robot radius must be positive, got {}",
                self.robot.radius
            ));
        }
        if !(self.robot.epsilon >= 0.0) || !self.robot.epsilon.is_finite() {
            return bad(format!(
                "epsilon must be non-negative, got {}",
                self.robot.epsilon
            ));
        }
        use spf_core::Potential;
        if self.potential.dimension() != dim {
            return bad(format!(
                "potential has dimension {}, world has {dim}",
                self.potential.dimension()
            ));
        }
        if let Some(x) = self.sim.initials.iter().find(|x| x.len() != dim) {
            return bad(format!(
                "initial condition {x:?} does not have dimension {dim}"
            ));
        }
        if self.sim.random.is_some() && self.world.bounds().is_none() {
            return bad("random initial conditions need world bounds".into());
        }
        self.sensor
            .build()
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        let wants_2d = matches!(self.sensor.mode, spf_core::SensorKind::Lidar2d);
        let wants_3d = matches!(self.sensor.mode, spf_core::SensorKind::Lidar3d);
        if (wants_2d && dim != 2) || (wants_3d && dim != 3) {
            return bad(format!(
                "sensor {:?} does not match a {dim}D world",
                self.sensor.mode
            ));
        }
        self.sim_config()?;
        Ok(())
    }

    fn sim_config_without_initials(&self) -> SimConfig {
        let mut c = SimConfig::new(
            self.world.clone(),
            self.potential.clone(),
            self.robot,
            self.penalty,
        );
        c.sensing = self.sensor.build().expect("sensor validated");
        c.dt = self.sim.dt;
        c.t_max = self.sim.t_max;
        c.goal_tol = self.sim.goal_tol;
        c.integrator = self.sim.integrator;
        // LiDAR readings carry chord-level error, so only true violations count.
        if !c.sensing.is_oracle() {
            c.safety_tol = 1e-3;
        }
        c
    }

    /// Explicit initials followed by the seeded random ones.
    pub fn initials(&self) -> Result<Vec<Vector>, CliError> {
        let mut out: Vec<Vector> = self
            .sim
            .initials
            .iter()
            .map(|x| Vector::from_column_slice(x))
            .collect();
        if let Some(r) = self.sim.random {
            let bounds = self.world.bounds().expect("validated");
            out.extend(random_initials(
                &self.world,
                &self.robot,
                bounds,
                r.count,
                r.seed,
            )?);
        }
        Ok(out)
    }

    pub fn sim_config(&self) -> Result<SimConfig, CliError> {
        let mut c = self.sim_config_without_initials();
        c.initials = self.initials()?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents always serialize")
    }
}

/// Applies `a.b.0.c=value`; the value is parsed as JSON, falling back to a
/// plain string.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Override(format!("expected key=value, got {spec:?}")))?;
    let new: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Override(format!("malformed key {path:?}")));
    }
    let mut cur = doc;
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), new);
                    return Ok(());
                }
                map.entry(key.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = key.parse().map_err(|_| {
                    CliError::Override(format!("{key:?} is not an array index in {path:?}"))
                })?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    CliError::Override(format!("index {idx} out of range ({len}) in {path:?}"))
                })?;
                if last {
                    *slot = new;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(CliError::Override(format!(
                    "{path:?} descends into a scalar"
                )))
            }
        };
    }
    unreachable!("loop returns on the last key")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn override_paths() {
        let mut v = json!({"sim": {"dt": 1e-3, "initials": [[1.0, 2.0]]}});
        apply_override(&mut v, "sim.dt=2e-3").unwrap();
        apply_override(&mut v, "sim.initials.0.1=5").unwrap();
        apply_override(&mut v, "output.directory=runs/a").unwrap();
        assert_eq!(v["sim"]["dt"], json!(2e-3));
        assert_eq!(v["sim"]["initials"][0][1], json!(5));
        assert_eq!(v["output"]["directory"], json!("runs/a"));
        assert!(apply_override(&mut v, "sim.dt").is_err());
        assert!(apply_override(&mut v, "sim.dt.x=1").is_err());
        assert!(apply_override(&mut v, "sim.initials.4=1").is_err());
    }
}
