//! Run configuration: one TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::core_model::FitConfig;
use crate::dataset::{AxisSpec, GridSpec, OracleParams};
use crate::error::{Error, Result};
use crate::training::TrainConfig;
use crate::validation::{GummelConfig, MetricsConfig};
use crate::veriloga::TanhStyle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_grid: GridSpec,
    pub test_grid: GridSpec,
    /// Measured or simulated IV table to resample instead of the oracle.
    pub source_csv: Option<PathBuf>,
    pub train_file: String,
    pub test_file: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train_grid: GridSpec::default_train(),
            test_grid: GridSpec::default_test(),
            source_csv: None,
            train_file: "train.csv".into(),
            test_file: "test.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSettings {
    pub floor: f64,
    pub bin_edges: Vec<f64>,
    pub max_i_ds_pct: f64,
    pub max_g_m_pct: f64,
    pub max_g_ds_pct: f64,
    pub format: String,
}

impl Default for ValidateSettings {
    fn default() -> Self {
        let m = MetricsConfig::default();
        ValidateSettings {
            floor: m.floor,
            bin_edges: m.bin_edges,
            max_i_ds_pct: 2.0,
            max_g_m_pct: 5.0,
            max_g_ds_pct: 25.0,
            format: "json".into(),
        }
    }
}

impl ValidateSettings {
    pub fn metrics(&self) -> MetricsConfig {
        MetricsConfig {
            floor: self.floor,
            bin_edges: self.bin_edges.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GummelSettings {
    pub v_g: f64,
    pub v_x_max: f64,
    pub points: usize,
    pub max_discontinuity: f64,
    /// Bound on `|d2I/dVx2(0)| / max |d2I/dVx2|`.
    pub max_zero_ratio: f64,
    pub format: String,
}

impl Default for GummelSettings {
    fn default() -> Self {
        let g = GummelConfig::default();
        GummelSettings {
            v_g: g.v_g,
            v_x_max: g.v_x_max,
            points: g.points,
            max_discontinuity: 1e-2,
            max_zero_ratio: 1e-6,
            format: "csv".into(),
        }
    }
}

impl GummelSettings {
    pub fn sweep(&self) -> GummelConfig {
        GummelConfig {
            v_g: self.v_g,
            v_x_max: self.v_x_max,
            points: self.points,
        }
    }
}

/// Output characteristics `I(v_ds)` at each listed gate voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSettings {
    pub v_gs: Vec<f64>,
    pub v_ds: AxisSpec,
}

impl Default for PredictSettings {
    fn default() -> Self {
        PredictSettings {
            v_gs: vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            v_ds: AxisSpec::new(0.0, 0.7, 141),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSettings {
    pub module_name: String,
    /// `builtin` or `exp`.
    pub tanh: String,
    pub round_trip_points: usize,
    pub round_trip_tol: f64,
    /// Biases for the round-trip check are drawn from `[lo, hi]` on both
    /// `v_gs` and `v_gd`.
    pub bias_lo: f64,
    pub bias_hi: f64,
}

impl Default for ExportSettings {
    fn default() -> Self {
        ExportSettings {
            module_name: "ekvnet".into(),
            tanh: "builtin".into(),
            round_trip_points: 1000,
            round_trip_tol: 1e-9,
            bias_lo: -0.5,
            bias_hi: 1.0,
        }
    }
}

impl ExportSettings {
    pub fn tanh_style(&self) -> Result<TanhStyle> {
        self.tanh.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the seeds in `[fit]` and `[train]` when set.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub model_file: String,
    pub history_file: String,
    pub data: DataConfig,
    pub oracle: OracleParams,
    pub fit: FitConfig,
    pub train: TrainConfig,
    pub validate: ValidateSettings,
    pub gummel: GummelSettings,
    pub predict: PredictSettings,
    pub export: ExportSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            out_dir: PathBuf::from("out"),
            model_file: "model.json".into(),
            history_file: "history.csv".into(),
            data: DataConfig::default(),
            oracle: OracleParams::default(),
            fit: FitConfig::default(),
            train: TrainConfig::default(),
            validate: ValidateSettings::default(),
            gummel: GummelSettings::default(),
            predict: PredictSettings::default(),
            export: ExportSettings::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path` (or the defaults when `None`), applies `overrides` and
    /// validates. Relative `source_csv` paths resolve against the config
    /// file's directory.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let mut cfg = Self::from_toml(&text)?;
                if let Some(src) = cfg.data.source_csv.as_mut() {
                    if src.is_relative() {
                        *src = p.parent().unwrap_or(Path::new(".")).join(&*src);
                    }
                }
                cfg
            }
            None => RunConfig::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.seed = Some(seed);
        }
        if let Some(dir) = &overrides.out_dir {
            self.out_dir = dir.clone();
        }
        if let Some(seed) = self.seed {
            self.fit.seed = seed;
            self.train.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.data.train_grid.validate_for_eps()?;
        self.data.test_grid.validate()?;
        self.oracle.validate()?;
        self.train.validate()?;
        if let Some(src) = &self.data.source_csv {
            if !src.is_file() {
                return Err(Error::Config(format!("source_csv {} does not exist", src.display())));
            }
        }
        self.export.tanh_style()?;
        if self.export.round_trip_points == 0 || !(self.export.bias_lo < self.export.bias_hi) {
            return Err(Error::Config(
                "export: need round_trip_points > 0 and bias_lo < bias_hi".into(),
            ));
        }
        for (name, f) in [("validate", &self.validate.format), ("gummel", &self.gummel.format)] {
            f.parse::<crate::validation::ReportFormat>()
                .map_err(|e| Error::Config(format!("{name}: {e}")))?;
        }
        if self.predict.v_gs.is_empty() || self.predict.v_ds.count < 2 {
            return Err(Error::Config(
                "predict: need at least one v_gs and two v_ds points".into(),
            ));
        }
        Ok(())
    }

    pub fn out_path(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }
}
