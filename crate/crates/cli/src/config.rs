//! Run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use strikeconv::experiments::{test_case_model, GridSpec, EXPERIMENT_SKEW_STEP, TEST_CASE_MATURITY};
use strikeconv::heston::{AssetSpec, HestonParams};
use strikeconv::simulation::{McConfig, TwoAssetModel};
use strikeconv::PricingError;

use crate::error::CliError;

/// Two-asset model plus the maturity and skew step used by the quotes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub rho: f64,
    pub maturity: f64,
    /// Log-strike step of the central-difference ATM skew.
    pub skew_step: f64,
    pub heston: HestonParams,
    pub asset_x: AssetSpec,
    pub asset_y: AssetSpec,
}

impl ModelConfig {
    pub fn test_case(case_id: u8) -> Result<Self, CliError> {
        let m = test_case_model(case_id)?;
        Ok(Self {
            rho: m.rho,
            maturity: TEST_CASE_MATURITY,
            skew_step: EXPERIMENT_SKEW_STEP,
            heston: m.heston,
            asset_x: m.asset_x,
            asset_y: m.asset_y,
        })
    }

    pub fn two_asset(&self) -> TwoAssetModel {
        TwoAssetModel { heston: self.heston, asset_x: self.asset_x, asset_y: self.asset_y, rho: self.rho }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.two_asset().validate()?;
        for (name, v) in [("maturity", self.maturity), ("skew_step", self.skew_step)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PricingError::InvalidInput(format!("{name} must be positive, got {v}")).into());
            }
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::test_case(1).expect("built-in test case")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Every file a command writes goes under this directory.
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    pub mc: McConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("."), model: ModelConfig::default(), mc: McConfig::default(), grid: None }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.mc.validate()?;
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        Ok(())
    }

    /// Grid to sweep: the configured one, else the full default sweep
    /// simulated with `mc`.
    pub fn grid_or_default(&self) -> GridSpec {
        self.grid.clone().unwrap_or_else(|| GridSpec { mc: self.mc, ..GridSpec::default() })
    }

    /// Creates the output directory and returns the path of `name` inside it.
    pub fn output(&self, name: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", self.out_dir.display())))?;
        Ok(self.out_dir.join(name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg =
            RunConfig { grid: Some(GridSpec { t_list: vec![0.05], ..GridSpec::default() }), ..Default::default() };
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("out_dir = \"runs\"\n[mc]\nn_paths = 10\nsteps_per_year = 50\nseed = 3\nuse_control_variate = false\nbeta = \"estimated\"\n").unwrap();
        assert_eq!(cfg.out_dir, PathBuf::from("runs"));
        assert_eq!(cfg.mc.n_paths, 10);
        assert_eq!(cfg.model, ModelConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("paths = 3\n").is_err());
    }
}
