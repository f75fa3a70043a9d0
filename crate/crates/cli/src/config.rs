//! Scenario configuration files.
//!
//! A config is JSON with a `schema` field and a list of scenarios. Every
//! struct rejects unknown keys so a typo is a parse error instead of a
//! silently ignored setting.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thermolab::lattice::models::ModelSpec;
use thermolab::lattice::Boundary;

use crate::CliError;

pub const SCHEMA: &str = "thermolab/1";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: String,
    /// Base seed; `--seed` overrides it and scenarios may pin their own.
    #[serde(default)]
    pub seed: Option<u64>,
    pub scenarios: Vec<Scenario>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub model: Option<ModelRef>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Multiplies every upper bound before it is checked. Only for
    /// exercising the failure path.
    #[serde(default = "one")]
    pub bound_scale: f64,
    pub experiment: Experiment,
}

fn one() -> f64 {
    1.0
}

/// A model file path (relative to the config) or an inline model.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    File(String),
    Inline(ModelSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PauliName {
    X,
    Y,
    Z,
}

/// The same Pauli matrix on every listed site.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub pauli: PauliName,
    pub sites: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Neel {
        #[serde(default = "yes")]
        first_up: bool,
    },
    Basis {
        digits: Vec<usize>,
    },
    /// One `[theta, phi]` Bloch angle pair per site.
    Product {
        angles: Vec<[f64; 2]>,
    },
    RandomProduct,
    Haar,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Uniform,
    Log,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub start: f64,
    pub end: f64,
    pub points: usize,
    #[serde(default = "uniform")]
    pub spacing: Spacing,
}

fn uniform() -> Spacing {
    Spacing::Uniform
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    EquilibrationObservable(EquilibrationObservableParams),
    EquilibrationPovm(EquilibrationPovmParams),
    TimeAverageOracle(TimeAverageOracleParams),
    MaxEntropy(MaxEntropyParams),
    Thermalisation(ThermalisationParams),
    Truncation(TruncationParams),
    Clustering(ClusteringParams),
    UniversalLocality(UniversalLocalityParams),
    Concentration(ConcentrationParams),
    HaarEquilibration(HaarEquilibrationParams),
    MemoryBound(MemoryBoundParams),
    Eth(EthParams),
    Anderson(AndersonParams),
    LevelStatistics(LevelStatisticsParams),
    Mbl(MblParams),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibrationObservableParams {
    pub observable: ObservableSpec,
    pub state: StateSpec,
    /// Gap resolution; optimised over the gap table when absent.
    #[serde(default)]
    pub epsilon: Option<f64>,
    pub t_final: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibrationPovmParams {
    /// Sites measured with the product of qubit SIC-POVMs.
    pub sites: Vec<usize>,
    pub state: StateSpec,
    #[serde(default)]
    pub epsilon: Option<f64>,
    pub t_final: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeAverageOracleParams {
    pub observable: ObservableSpec,
    pub state: StateSpec,
    /// `T` in units of the inverse smallest level gap.
    #[serde(default = "gap_multiple")]
    pub gap_multiple: f64,
    #[serde(default = "oracle_samples")]
    pub samples: usize,
    #[serde(default = "five_percent")]
    pub relative_tolerance: f64,
}

fn gap_multiple() -> f64 {
    1e4
}
fn oracle_samples() -> usize {
    100_000
}
fn five_percent() -> f64 {
    0.05
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxEntropyParams {
    pub state: StateSpec,
    #[serde(default = "max_entropy_tolerance")]
    pub tolerance: f64,
}

fn max_entropy_tolerance() -> f64 {
    1e-8
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalisationParams {
    pub region: Vec<usize>,
    /// Window centre as a fraction of the spectral range from the bottom.
    pub window_centre: f64,
    /// Window width as a fraction of the spectral range.
    pub window_width: f64,
    pub times: GridSpec,
    #[serde(default = "max_thermal_distance")]
    pub max_distance: f64,
    /// The distance is asserted only when `|beta| ||H_I||` is at most this.
    #[serde(default = "coupling_limit")]
    pub coupling_limit: f64,
    /// Pure rectangular start with random phases; the micro-canonical state
    /// itself when false.
    #[serde(default = "yes")]
    pub random_coherences: bool,
}

fn max_thermal_distance() -> f64 {
    0.1
}
fn coupling_limit() -> f64 {
    0.05
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationParams {
    pub region: Vec<usize>,
    pub observable: ObservableSpec,
    pub beta: f64,
    #[serde(default = "quad_points")]
    pub quad_points: usize,
    #[serde(default = "truncation_tolerance")]
    pub tolerance: f64,
}

fn quad_points() -> usize {
    24
}
fn truncation_tolerance() -> f64 {
    1e-6
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringParams {
    pub beta: f64,
    #[serde(default = "half")]
    pub tau: f64,
    pub pauli: PauliName,
    /// Site pairs carrying the two single-site observables.
    pub pairs: Vec<[usize; 2]>,
    /// Growth constant; detected from the lattice when absent.
    #[serde(default)]
    pub alpha: Option<f64>,
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniversalLocalityParams {
    pub beta: f64,
    pub s_region: Vec<usize>,
    pub b_region: Vec<usize>,
    #[serde(default)]
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationParams {
    pub n_qubits: usize,
    pub observable: ObservableSpec,
    pub epsilon: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HaarEquilibrationParams {
    pub state: StateSpec,
    pub region: Vec<usize>,
    pub times: GridSpec,
    pub samples: usize,
    pub epsilon: f64,
    #[serde(default)]
    pub circuit_depth: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryBoundParams {
    pub region: Vec<usize>,
    /// Random product pairs sharing one random bath factor.
    #[serde(default)]
    pub random_pairs: usize,
    /// Explicit pairs, checked in addition to the random ones.
    #[serde(default)]
    pub pairs: Vec<[StateSpec; 2]>,
    /// Asserted lower limit on the de-phased distance of the explicit pairs.
    #[serde(default)]
    pub min_lhs: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EthParams {
    pub observable: ObservableSpec,
    pub window_width: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AndersonParams {
    pub length: usize,
    pub lambda: f64,
    pub disorder_width: f64,
    pub start: usize,
    pub times: GridSpec,
    #[serde(default = "two")]
    pub moment: f64,
    #[serde(default = "one_usize")]
    pub realizations: usize,
}

fn two() -> f64 {
    2.0
}
fn one_usize() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelStatisticsParams {
    pub n: usize,
    pub disorder: f64,
    pub realizations: usize,
    #[serde(default = "periodic")]
    pub boundary: Boundary,
    /// Asserted value of the mean ratio, if any.
    #[serde(default)]
    pub expected: Option<f64>,
    #[serde(default = "ratio_tolerance")]
    pub tolerance: f64,
}

fn periodic() -> Boundary {
    Boundary::Periodic
}
fn ratio_tolerance() -> f64 {
    0.03
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MblParams {
    pub n: usize,
    pub disorder: Vec<f64>,
    pub realizations: usize,
    #[serde(default)]
    pub times: Option<GridSpec>,
    #[serde(default = "periodic")]
    pub boundary: Boundary,
}

/// Reads and parses a config. Unreadable files and malformed contents are
/// both parse errors.
pub fn load(path: &Path) -> Result<(Config, Vec<u8>), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg: Config = serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if cfg.schema != SCHEMA {
        return Err(CliError::Config(format!("schema {:?}, expected {SCHEMA:?}", cfg.schema)));
    }
    let mut names = std::collections::BTreeSet::new();
    for s in &cfg.scenarios {
        let ok = !s.name.is_empty() && s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !ok {
            return Err(CliError::Config(format!("scenario name {:?} must be non-empty [A-Za-z0-9_-]", s.name)));
        }
        if !names.insert(s.name.clone()) {
            return Err(CliError::Config(format!("duplicate scenario name {:?}", s.name)));
        }
    }
    if cfg.scenarios.is_empty() {
        return Err(CliError::Config("no scenarios".into()));
    }
    Ok((cfg, bytes))
}

/// Resolves a model reference against the config's directory.
pub fn resolve_model(model: &ModelRef, base: &Path) -> Result<ModelSpec, CliError> {
    match model {
        ModelRef::Inline(m) => Ok(m.clone()),
        ModelRef::File(p) => {
            let path: PathBuf = base.join(p);
            if !path.is_file() {
                return Err(CliError::Precondition(format!("model file {} not found", path.display())));
            }
            ModelSpec::load(&path).map_err(|e| CliError::Precondition(e.to_string()))
        }
    }
}
