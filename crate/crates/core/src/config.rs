//! TOML configuration files.
//!
//! A file holds the simulation settings at top level, with `[traffic]` and
//! `[grid]` tables, plus optional scenario keys: `name`, `steady_fraction`,
//! a `[sweep]` table and a `[train]` table. Every key has a default, so an
//! empty file is a valid configuration.

use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::engine::{PredictorKind, SimulationConfig};
use crate::scenario::{Scenario, Sweep, TrainConfig};
use crate::{Error, Result};

pub fn parse_table(text: &str) -> Result<Table> {
    text.parse::<Table>().map_err(|e| Error::Parse(e.to_string()))
}

/// Recursively overlay `top` on `base`; tables merge, other values replace.
pub fn merge_tables(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge_tables(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn deserialize<T: serde::de::DeserializeOwned>(value: Value, what: &str) -> Result<T> {
    value
        .try_into()
        .map_err(|e: toml::de::Error| Error::Parse(format!("{what}: {}", e.message())))
}

/// Build a scenario from a parsed table. Relative model paths are resolved
/// against `base_dir`.
pub fn scenario_from_table(mut table: Table, base_dir: Option<&Path>) -> Result<Scenario> {
    let name = match table.remove("name") {
        None => "custom".to_string(),
        Some(Value::String(s)) => s,
        Some(_) => return Err(Error::config("name", "must be a string")),
    };
    let steady_fraction = match table.remove("steady_fraction") {
        None => crate::metrics::STEADY_STATE_FRACTION,
        Some(Value::Float(f)) => f,
        Some(Value::Integer(i)) => i as f64,
        Some(_) => return Err(Error::config("steady_fraction", "must be a number")),
    };
    let sweep: Option<Sweep> = table
        .remove("sweep")
        .map(|v| deserialize(v, "sweep"))
        .transpose()?;
    let train: TrainConfig = match table.remove("train") {
        Some(v) => deserialize(v, "train")?,
        None => TrainConfig::default(),
    };
    let mut base: SimulationConfig = deserialize(Value::Table(table), "config")?;
    if let (PredictorKind::Lstm(path), Some(dir)) = (&base.predictor, base_dir) {
        if path.is_relative() {
            base.predictor = PredictorKind::Lstm(dir.join(path));
        }
    }
    let scenario = Scenario {
        name,
        base,
        sweep,
        train,
        steady_fraction,
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn parse_scenario(text: &str, base_dir: Option<&Path>) -> Result<Scenario> {
    scenario_from_table(parse_table(text)?, base_dir)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parent_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Read a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(&read(path)?, Some(&parent_dir(path)))
}

/// Read a file's simulation settings, ignoring any sweep.
pub fn load_config(path: &Path) -> Result<SimulationConfig> {
    Ok(load_scenario(path)?.base)
}

/// A named preset with the file at `path` overlaid on it.
pub fn load_preset_with(preset: &str, path: Option<&Path>) -> Result<Scenario> {
    let mut table = parse_table(crate::scenario::preset_text(preset)?)?;
    let dir = match path {
        Some(p) => {
            merge_tables(&mut table, parse_table(&read(p)?)?);
            Some(parent_dir(p))
        }
        None => None,
    };
    scenario_from_table(table, dir.as_deref())
}
