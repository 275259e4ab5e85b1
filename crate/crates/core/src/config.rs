//! Run configuration: one TOML document with a table per pipeline stage.
//!
//! Every field has a default, so an empty file is a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cls::{DEFAULT_ALPHA_DET, DEFAULT_N_TOYS, MIN_TOYS};
use crate::detector::DEFAULT_EMA_ALPHA;
use crate::error::{Error, Result};
use crate::eval::{LofoConfig, ReportOptions};
use crate::sbi::{MdnConfig, PairConfig, DEFAULT_POSTERIOR_SAMPLES};
use crate::synth::CorpusSpec;

pub const DEFAULT_WINDOW_LENGTH: usize = 500;
pub const DEFAULT_STRIDE: usize = 250;
pub const DEFAULT_FAR_TARGET: f64 = 0.05;
pub const DEFAULT_CREDIBLE_LEVEL: f64 = 0.9;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Flight manifest; when absent the synthetic corpus is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Overrides the sample rate otherwise taken from timestamps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_rate_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub window_length: usize,
    pub stride: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { window_length: DEFAULT_WINDOW_LENGTH, stride: DEFAULT_STRIDE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub alpha_ema: f64,
    /// Healthy window false alarm rate the alarm threshold is calibrated to.
    pub far_target: f64,
    /// Majority-vote threshold on the smoothed statistic.
    pub decision_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { alpha_ema: DEFAULT_EMA_ALPHA, far_target: DEFAULT_FAR_TARGET, decision_threshold: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClsConfig {
    pub alpha_det: f64,
    pub n_toys: usize,
    /// Compare the EMA-smoothed statistic (rather than the raw one) with the toys.
    pub on_smoothed: bool,
    pub seed: u64,
}

impl Default for ClsConfig {
    fn default() -> Self {
        Self { alpha_det: DEFAULT_ALPHA_DET, n_toys: DEFAULT_N_TOYS, on_smoothed: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbiConfig {
    pub pairs: PairConfig,
    pub mdn: MdnConfig,
    pub n_samples: usize,
    pub level: f64,
    /// Fraction of flights held out for the calibration report.
    pub holdout_fraction: f64,
}

impl Default for SbiConfig {
    fn default() -> Self {
        Self {
            pairs: PairConfig::default(),
            mdn: MdnConfig::default(),
            n_samples: DEFAULT_POSTERIOR_SAMPLES,
            level: DEFAULT_CREDIBLE_LEVEL,
            holdout_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker thread cap; all cores when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub data: DataConfig,
    pub synth: CorpusSpec,
    pub features: FeatureConfig,
    pub detector: DetectorConfig,
    pub cls: ClsConfig,
    pub sbi: SbiConfig,
    pub eval: LofoConfig,
    pub report: ReportOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            threads: None,
            data: DataConfig::default(),
            synth: CorpusSpec::default(),
            features: FeatureConfig::default(),
            detector: DetectorConfig::default(),
            cls: ClsConfig::default(),
            sbi: SbiConfig::default(),
            eval: LofoConfig::default(),
            report: ReportOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(e.to_string()))
    }

    /// Sets the master seed and every stage seed to `seed`.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
        self.cls.seed = seed;
        self.sbi.pairs.seed = seed;
        self.sbi.mdn.seed = seed;
        self.eval.seed = seed;
        self.eval.autoencoder.seed = seed;
        self.report.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.features;
        if f.window_length == 0 || f.stride == 0 {
            return Err(Error::Config("window_length and stride must be positive".into()));
        }
        let unit = |name: &str, v: f64, closed_top: bool| {
            let ok = v > 0.0 && (v < 1.0 || closed_top && v == 1.0);
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in (0, 1{}, got {v}", if closed_top { "]" } else { ")" })))
            }
        };
        unit("detector.alpha_ema", self.detector.alpha_ema, true)?;
        unit("eval.alpha_ema", self.eval.alpha_ema, true)?;
        unit("detector.far_target", self.detector.far_target, false)?;
        unit("cls.alpha_det", self.cls.alpha_det, false)?;
        unit("sbi.level", self.sbi.level, false)?;
        unit("sbi.holdout_fraction", self.sbi.holdout_fraction, false)?;
        if self.cls.n_toys < MIN_TOYS {
            return Err(Error::Config(format!("cls.n_toys must be at least {MIN_TOYS}, got {}", self.cls.n_toys)));
        }
        if self.sbi.n_samples == 0 {
            return Err(Error::Config("sbi.n_samples must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        if self.eval.methods.is_empty() {
            return Err(Error::Config("no evaluation methods selected".into()));
        }
        self.synth.validate()
    }
}
