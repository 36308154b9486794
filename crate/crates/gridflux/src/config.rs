//! Strict JSON configuration files.
//!
//! Unknown keys are rejected everywhere; every run artifact includes the
//! fully resolved configuration so a run can be reproduced byte-for-byte
//! from `resolved_config.json`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::sim::{ScenarioKind, SimSettings};
use crate::stability::{Coupling, SubsystemSpec};
use crate::{Error, Result};

/// Output artifact selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output directory; overridden by `--out`, falling back to
    /// `$GRIDFLUX_OUT`, then `./out`.
    pub dir: Option<String>,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
        }
    }
}

/// A dense matrix as nested JSON arrays (row-major).
pub type MatrixRows = Vec<Vec<f64>>;

pub fn matrix_from_rows(rows: &MatrixRows, what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::Config(format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{what}: ragged or empty rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("{what}: non-finite entry")));
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemConfig {
    pub id: String,
    pub a: MatrixRows,
    /// Lyapunov weight; identity when absent.
    #[serde(default)]
    pub g: Option<MatrixRows>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub i: usize,
    pub j: usize,
    pub block: MatrixRows,
}

/// Tie-susceptance sweep over the default two-area fixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub tie_values: Vec<f64>,
}

/// Input to the `stability` subcommand: explicit subsystem matrices, a
/// two-area sweep, or both.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub subsystems: Vec<SubsystemConfig>,
    pub couplings: Vec<CouplingConfig>,
    pub two_area_sweep: Option<SweepConfig>,
}

impl StabilityConfig {
    pub fn to_specs(&self) -> Result<(Vec<SubsystemSpec>, Vec<Coupling>)> {
        let mut subsystems = Vec::with_capacity(self.subsystems.len());
        for s in &self.subsystems {
            let a = matrix_from_rows(&s.a, &format!("subsystem {} A", s.id))?;
            let g = match &s.g {
                Some(rows) => matrix_from_rows(rows, &format!("subsystem {} G", s.id))?,
                None => DMatrix::identity(a.nrows(), a.nrows()),
            };
            subsystems.push(SubsystemSpec {
                id: s.id.clone(),
                a,
                g,
            });
        }
        let mut couplings = Vec::with_capacity(self.couplings.len());
        for c in &self.couplings {
            couplings.push(Coupling {
                i: c.i,
                j: c.j,
                block: matrix_from_rows(&c.block, &format!("coupling ({}, {})", c.i, c.j))?,
            });
        }
        Ok((subsystems, couplings))
    }
}

/// One configuration file. Which sections are required depends on the
/// subcommand: `simulate`/`compare` need `scenario` + `sim`, `stability`
/// needs `stability`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub scenario: Option<ScenarioKind>,
    #[serde(default)]
    pub sim: Option<SimSettings>,
    #[serde(default)]
    pub seed: u64,
    /// Controller list for `compare`.
    #[serde(default)]
    pub controllers: Vec<crate::sim::RlcControllerSpec>,
    #[serde(default)]
    pub stability: Option<StabilityConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Apply one `--set path.to.key=value` override onto the raw JSON value.
///
/// Parent objects must already exist; the leaf may be created. The value is
/// parsed as JSON when possible, else taken as a string.
pub fn apply_override(root: &mut serde_json::Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::Config(format!("override '{assignment}' must look like key.path=value"))
    })?;
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));

    let mut cursor = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (depth, segment) in segments.iter().enumerate() {
        let object = cursor.as_object_mut().ok_or_else(|| {
            Error::Config(format!(
                "override '{path}': '{}' is not an object",
                segments[..depth].join(".")
            ))
        })?;
        if depth == segments.len() - 1 {
            object.insert(segment.to_string(), parsed);
            return Ok(());
        }
        cursor = object.get_mut(*segment).ok_or_else(|| {
            Error::Config(format!(
                "override '{path}': missing section '{}'",
                segments[..=depth].join(".")
            ))
        })?;
    }
    unreachable!("split always yields at least one segment")
}

/// Load a config file, apply overrides, and parse strictly.
///
/// Returns the typed config together with its fully resolved JSON form.
pub fn load(path: &Path, overrides: &[String]) -> Result<(Config, serde_json::Value)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for assignment in overrides {
        apply_override(&mut value, assignment)?;
    }
    let config: Config = serde_json::from_value(value)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let resolved = serde_json::to_value(&config)?;
    Ok((config, resolved))
}
