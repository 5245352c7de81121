//! Flat JSON configuration merged under command-line flags.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Every key any command accepts. Commands restrict this further.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub loss: Option<String>,
    pub tau: Option<f64>,
    pub eps: Option<f64>,
    pub phi: Option<f64>,
    pub sigma2_beta: Option<f64>,
    pub a_eps: Option<f64>,
    pub b_eps: Option<f64>,
    pub a_h: Option<f64>,
    pub b_h: Option<f64>,
    pub data: Option<PathBuf>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub max_halvings: Option<usize>,
    pub stochastic: Option<bool>,
    pub minibatch: Option<usize>,
    pub rho0: Option<f64>,
    pub iters: Option<usize>,
    pub elbo_every: Option<usize>,
    pub methods: Option<String>,
    pub draws: Option<usize>,
    pub burn: Option<usize>,
    pub step_scale: Option<f64>,
    pub family: Option<String>,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub sigma: Option<f64>,
    pub dof: Option<f64>,
    pub with_truth: Option<bool>,
    pub y: Option<Vec<f64>>,
    pub m: Option<Vec<f64>>,
    pub nu: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub quad_order: Option<usize>,
}

fn read_file(path: &Path) -> Result<Map<String, Value>, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(format!("config {} must be a JSON object", path.display())),
        Err(e) => Err(format!("config {}: {e}", path.display())),
    }
}

/// Overlays `flags` (serialized with unset options skipped) on the config
/// file and checks every key against `allowed`.
pub fn merge<F: Serialize>(
    command: &str,
    config: Option<&Path>,
    flags: &F,
    allowed: &BTreeSet<String>,
) -> Result<Settings, String> {
    let mut map = match config {
        Some(p) => read_file(p)?,
        None => Map::new(),
    };
    if let Some(key) = map.keys().find(|k| !allowed.contains(*k)) {
        return Err(format!("config key '{key}' is not valid for {command}"));
    }
    match serde_json::to_value(flags).map_err(|e| e.to_string())? {
        Value::Object(f) => map.extend(f.into_iter().filter(|(_, v)| !v.is_null())),
        _ => unreachable!("flag structs serialize to objects"),
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| format!("config: {e}"))
}
