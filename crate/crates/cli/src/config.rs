//! Experiment configuration: JSON schema, validation, and construction of
//! the domain objects.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use nds_core::entropy::{IntervalPartition, PartitionSequence};
use nds_core::pressure::{GridFunction, PotentialSequence};
use nds_core::systems::{CircleMap, NdsSequence};
use nds_core::GridDensity;

pub const SCHEMA_VERSION: u32 = 1;

/// A configuration failure: carries the violated invariant by name.
#[derive(Debug)]
pub struct ValidationError(pub String);

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid config: {}", self.0)
    }
}

impl std::error::Error for ValidationError {}

type VResult<T> = Result<T, ValidationError>;

fn fail<T>(msg: impl Into<String>) -> VResult<T> {
    Err(ValidationError(msg.into()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub system: SystemSpec,
    #[serde(default)]
    pub out_dir: Option<String>,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Constant {
        map: MapSpec,
    },
    Explicit {
        prefix: Vec<MapSpec>,
        tail: MapSpec,
    },
    Periodic {
        pattern: Vec<MapSpec>,
        repeats: usize,
    },
    AlternatingBlocks {
        map: MapSpec,
        blocks: usize,
    },
    GrowingDegree {
        count: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Identity,
    Linear {
        degree: u32,
    },
    Perturbed {
        degree: u32,
        amplitude: f64,
    },
}

impl MapSpec {
    pub fn build(&self) -> VResult<CircleMap> {
        match self {
            MapSpec::Identity => Ok(CircleMap::identity()),
            MapSpec::Linear { degree } => {
                CircleMap::linear(*degree).map_err(|e| ValidationError(e.to_string()))
            }
            MapSpec::Perturbed { degree, amplitude } => CircleMap::perturbed(*degree, *amplitude)
                .map_err(|e| ValidationError(e.to_string())),
        }
    }
}

impl SystemSpec {
    pub fn build(&self) -> VResult<NdsSequence> {
        match self {
            SystemSpec::Constant { map } => Ok(NdsSequence::constant(map.build()?)),
            SystemSpec::Explicit { prefix, tail } => {
                let prefix: VResult<Vec<_>> = prefix.iter().map(MapSpec::build).collect();
                Ok(NdsSequence::new(prefix?, tail.build()?))
            }
            SystemSpec::Periodic { pattern, repeats } => {
                if pattern.is_empty() {
                    return fail("periodic pattern must be nonempty");
                }
                if *repeats == 0 {
                    return fail("periodic repeats must be at least 1");
                }
                let maps: VResult<Vec<_>> = pattern.iter().map(MapSpec::build).collect();
                NdsSequence::periodic(&maps?, *repeats).map_err(|e| ValidationError(e.to_string()))
            }
            SystemSpec::AlternatingBlocks { map, blocks } => {
                if *blocks == 0 {
                    return fail("alternating blocks must be at least 1");
                }
                Ok(NdsSequence::alternating_blocks(map.build()?, *blocks))
            }
            SystemSpec::GrowingDegree { count } => {
                NdsSequence::growing_degree(*count).map_err(|e| ValidationError(e.to_string()))
            }
        }
    }

    /// Builds and additionally requires a uniform expansion factor above 1.
    pub fn build_expanding(&self) -> VResult<NdsSequence> {
        let seq = self.build()?;
        if !seq.is_uniformly_expanding() {
            return fail(
                "sequence must be uniformly expanding (uniform_lambda > 1) for this experiment",
            );
        }
        Ok(seq)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigMode {
    pub freq: u32,
    pub amp: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform,
    Trig { modes: Vec<TrigMode> },
}

impl DensitySpec {
    pub fn build(&self, grid: usize) -> VResult<GridDensity> {
        let density = match self {
            DensitySpec::Uniform => GridDensity::uniform(grid),
            DensitySpec::Trig { modes } => {
                let modes = modes.clone();
                GridDensity::from_fn(grid, move |x| {
                    1.0 + modes
                        .iter()
                        .map(|m| m.amp * (TAU * m.freq as f64 * x + m.phase).sin())
                        .sum::<f64>()
                })
            }
        }
        .map_err(|e| ValidationError(e.to_string()))?;
        if density.min_value() <= 0.0 {
            return fail("density must be strictly positive");
        }
        Ok(density)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    Constant { value: f64 },
    NegLogDerivative,
    Trig { modes: Vec<TrigMode> },
}

impl PotentialSpec {
    /// Potential sequence matched to the system: `neg_log_derivative`
    /// follows the per-time maps, the other kinds are constant in time.
    pub fn build(&self, seq: &NdsSequence, grid: usize) -> VResult<PotentialSequence> {
        let wrap = |r: Result<GridFunction, nds_core::NdsError>| {
            r.map_err(|e| ValidationError(e.to_string()))
        };
        Ok(match self {
            PotentialSpec::Zero => PotentialSequence::constant(wrap(GridFunction::zero(grid))?),
            PotentialSpec::Constant { value } => {
                PotentialSequence::constant(wrap(GridFunction::constant(*value, grid))?)
            }
            PotentialSpec::NegLogDerivative => {
                let mut prefix = Vec::with_capacity(seq.prefix_len());
                for i in 0..seq.prefix_len() {
                    prefix.push(wrap(GridFunction::neg_log_derivative(seq.map_at(i), grid))?);
                }
                let tail = wrap(GridFunction::neg_log_derivative(seq.tail(), grid))?;
                PotentialSequence::new(prefix, tail)
            }
            PotentialSpec::Trig { modes } => {
                let modes = modes.clone();
                PotentialSequence::constant(wrap(GridFunction::from_fn(grid, move |x| {
                    modes
                        .iter()
                        .map(|m| m.amp * (TAU * m.freq as f64 * x + m.phase).sin())
                        .sum::<f64>()
                }))?)
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSpec {
    Halves,
    Breakpoints { points: Vec<f64> },
}

impl PartitionSpec {
    pub fn build(&self) -> VResult<PartitionSequence> {
        let partition = match self {
            PartitionSpec::Halves => IntervalPartition::halves(),
            PartitionSpec::Breakpoints { points } => IntervalPartition::new(points.clone())
                .map_err(|e| ValidationError(e.to_string()))?,
        };
        Ok(PartitionSequence::constant(partition))
    }
}

fn default_window_frac() -> f64 {
    1.0 / 3.0
}

fn default_cell_budget() -> usize {
    nds_core::entropy::DEFAULT_CELL_BUDGET
}

fn default_preimage_tol() -> f64 {
    nds_core::transfer::DEFAULT_PREIMAGE_TOL
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyParams {
    pub n_max: usize,
    pub eps_list: Vec<f64>,
    pub resolution: usize,
    pub quad_points: usize,
    pub density_grid: usize,
    pub density: DensitySpec,
    pub partition: PartitionSpec,
    #[serde(default = "default_window_frac")]
    pub window_frac: f64,
    #[serde(default = "default_cell_budget")]
    pub cell_budget: usize,
    #[serde(default = "default_preimage_tol")]
    pub preimage_tol: f64,
}

impl EntropyParams {
    pub fn refinement(&self) -> nds_core::entropy::RefinementOptions {
        nds_core::entropy::RefinementOptions {
            cell_budget: self.cell_budget,
            window_frac: self.window_frac,
            preimage_tol: self.preimage_tol,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureParams {
    pub n_max: usize,
    pub eps_list: Vec<f64>,
    pub resolution: usize,
    pub potential_grid: usize,
    pub potential: PotentialSpec,
    pub density_grid: usize,
    pub density: DensitySpec,
    pub partition: PartitionSpec,
    #[serde(default = "default_window_frac")]
    pub window_frac: f64,
    #[serde(default = "default_cell_budget")]
    pub cell_budget: usize,
    #[serde(default = "default_preimage_tol")]
    pub preimage_tol: f64,
    /// Optional power-rule cross-check exponent.
    #[serde(default)]
    pub power_k: Option<usize>,
}

impl PressureParams {
    pub fn refinement(&self) -> nds_core::entropy::RefinementOptions {
        nds_core::entropy::RefinementOptions {
            cell_budget: self.cell_budget,
            window_frac: self.window_frac,
            preimage_tol: self.preimage_tol,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemorylossParams {
    pub n_max: usize,
    pub grid: usize,
    pub density_a: DensitySpec,
    pub density_b: DensitySpec,
    /// Renormalization constant for the density-class diagnostic; defaults
    /// to 0.9 times the observed minimum of the evolved densities.
    #[serde(default)]
    pub kappa: Option<f64>,
    /// Also fit the mass-defect refinement slope and check duality.
    #[serde(default)]
    pub diagnostics: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjugacyParams {
    pub target: MapSpec,
    pub horizon: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub grid: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansivityParams {
    pub delta: f64,
    pub eps: f64,
    pub n_max: usize,
    pub time_window: usize,
    pub net_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrinkParams {
    pub delta: f64,
    pub depth: usize,
    pub net_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeParams {
    pub eps: f64,
    pub n_max: usize,
    pub samples: usize,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> VResult<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ValidationError(format!("parse error: {e}")))?;
        if config.schema_version != SCHEMA_VERSION {
            return fail(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                config.schema_version
            ));
        }
        Ok(config)
    }

    pub fn params<T: serde::de::DeserializeOwned>(&self) -> VResult<T> {
        serde_json::from_value(self.params.clone())
            .map_err(|e| ValidationError(format!("bad params for {}: {e}", self.experiment)))
    }
}

/// Checks module preconditions shared by the counting experiments.
pub fn validate_counting(eps_list: &[f64], resolution: usize, n_max: usize) -> VResult<()> {
    if eps_list.is_empty() {
        return fail("eps_list must be nonempty");
    }
    for &eps in eps_list {
        if !(eps > 0.0 && eps <= 0.5) {
            return fail(format!("eps {eps} must lie in (0, 1/2]"));
        }
        if (resolution as f64) < 10.0 / eps {
            return fail(format!(
                "resolution {resolution} violates the precondition resolution >= 10/eps for eps {eps}"
            ));
        }
    }
    if n_max < 2 {
        return fail("n_max must be at least 2");
    }
    Ok(())
}
