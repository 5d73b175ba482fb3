//! Experiment configuration, stored as a single TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detect::DetectConfig;
use crate::error::{Error, Result};
use crate::feed::{FanoutConfig, FeedConfig, DEFAULT_N_TIMELINE};
use crate::network::ZipfParams;
use crate::sim::VirtualTime;
use crate::store::StoreConfig;

pub const OUT_DIR_ENV: &str = "FEEDSIM_OUT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Multiplier on the tweet and query rates, in `(0, 1]`.
    pub scale: f64,
    pub n_producers: usize,
    pub n_consumers: usize,
    pub n_timeline: usize,
    pub duration_hours: f64,
    pub analysis_window_fraction: f64,
    pub out_dir: PathBuf,
    pub zipf: ZipfParams,
    pub store: StoreConfig,
    pub fanout: FanoutConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 20130601,
            scale: 1.0,
            n_producers: 679,
            n_consumers: 1963,
            n_timeline: DEFAULT_N_TIMELINE,
            duration_hours: 2.0,
            analysis_window_fraction: 0.5,
            out_dir: PathBuf::from("out"),
            zipf: ZipfParams::default(),
            store: StoreConfig::default(),
            fanout: FanoutConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_hours >= 0.0 && self.duration_hours.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "duration_hours {} must be >= 0",
                self.duration_hours
            )));
        }
        let f = self.analysis_window_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "analysis_window_fraction {f} outside (0, 1]"
            )));
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "scale {} must lie in (0, 1]",
                self.scale
            )));
        }
        if self.n_timeline < 1 {
            return Err(Error::InvalidParameter("n_timeline must be >= 1".into()));
        }
        self.store.validate()?;
        self.fanout.validate()
    }

    pub fn duration(&self) -> VirtualTime {
        VirtualTime::from_secs_f64(self.duration_hours * 3600.0)
    }

    pub fn feed(&self) -> FeedConfig {
        FeedConfig {
            n_timeline: self.n_timeline,
            fanout: self.fanout.clone(),
        }
    }

    pub fn detect(&self) -> DetectConfig {
        DetectConfig {
            analysis_window_fraction: self.analysis_window_fraction,
            n_timeline: self.n_timeline,
        }
    }
}
