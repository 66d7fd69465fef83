//! Per-command run configurations read from JSON.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tcforge::model::{ModelParams, SimGrid};
use tcforge::oracle::OracleOptions;
use tcforge::phasescan::{Axis, InitialCondition, MultistabilityOptions, SweepParam, SweepSpec};
use tcforge::thermo::StorageRef;

use crate::error::CliError;

fn check_params(p: &ModelParams, grid: &SimGrid) -> Result<(), CliError> {
    p.validate()?;
    grid.validate()?;
    Ok(())
}

/// Reads a config file, or returns the command default when no path is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub params: ModelParams,
    pub grid: SimGrid,
    pub initial: InitialCondition,
    pub storage: StorageRef,
    pub with_fluctuations: bool,
    pub seed: u64,
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_params(&self.params, &self.grid)
    }
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            params: ModelParams::setup1(2.0, 1.0, 1.0),
            grid: SimGrid::new(200.0, 0.05),
            initial: InitialCondition::Ground,
            storage: StorageRef::Both,
            with_fluctuations: false,
            seed: 0,
        }
    }
}

/// Sweep configurations are sweep specs; the default is a coarse setup-1 `(J, Jz)` map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SweepConfig(pub SweepSpec);

impl Default for SweepConfig {
    fn default() -> Self {
        let axis = |param| Axis {
            param,
            min: 0.0,
            max: 4.0,
            points: 10,
        };
        SweepConfig(SweepSpec::new(
            ModelParams::setup1(2.0, 0.0, 0.0),
            axis(SweepParam::Jz),
            axis(SweepParam::J),
            SimGrid::new(200.0, 0.05),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    pub params: ModelParams,
    /// One charging run per coupling; empty runs `params` as given.
    pub j_values: Vec<f64>,
    pub grid: SimGrid,
    pub initial: InitialCondition,
    pub storage: StorageRef,
    /// Trailing fraction of each run over which the stored energy is averaged.
    pub window_fraction: f64,
    pub seed: u64,
}

impl BatteryConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_params(&self.params, &self.grid)?;
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            return Err(CliError::Config(
                "window_fraction must lie in (0, 1]".into(),
            ));
        }
        for &j in &self.j_values {
            let mut p = self.params;
            p.j_xy = j;
            p.validate()?;
        }
        Ok(())
    }
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            params: ModelParams::setup1(2.0, 3.4, 1.0),
            j_values: vec![3.4, 3.41],
            grid: SimGrid::new(100.0, 0.01),
            initial: InitialCondition::Ground,
            storage: StorageRef::Both,
            window_fraction: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub params: ModelParams,
    pub n_list: Vec<usize>,
    pub grid: SimGrid,
    pub options: OracleOptions,
    /// Also write the exact magnetization trajectory of every `N`.
    pub trajectories: bool,
    pub seed: u64,
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_params(&self.params, &self.grid)?;
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config(
                "n_list must be non-empty and strictly ascending".into(),
            ));
        }
        Ok(())
    }
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            params: ModelParams::setup1(0.5, 1.0, 3.0),
            n_list: vec![4, 8, 12],
            grid: SimGrid::new(5.0, 0.05),
            options: OracleOptions::default(),
            trajectories: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultistabilityConfig {
    pub params: ModelParams,
    pub axis1: Axis,
    pub axis2: Axis,
    pub options: MultistabilityOptions,
    pub seed: u64,
}

impl MultistabilityConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.params.validate()?;
        self.axis1.validate()?;
        self.axis2.validate()?;
        self.options.validate()?;
        Ok(())
    }
}

impl Default for MultistabilityConfig {
    fn default() -> Self {
        MultistabilityConfig {
            params: ModelParams::setup2(2.5, 2.1),
            axis1: Axis::fixed(SweepParam::Omega2, 2.5),
            axis2: Axis {
                param: SweepParam::J,
                min: 2.1,
                max: 4.0,
                points: 2,
            },
            options: MultistabilityOptions::default(),
            seed: 0,
        }
    }
}
