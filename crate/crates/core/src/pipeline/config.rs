use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::cge::{PilotLayout, TaskConfig};
use crate::phy::Equalizer;
use crate::remote::Endpoint;
use crate::semeval::DEFAULT_THRESHOLD;

/// How the receiver obtains the channel gains it equalizes with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// The true gains.
    Perfect,
    /// The trained generator.
    Cge,
    /// Pilot least squares with interpolation.
    Ls,
    /// No estimation: unit gains.
    None,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Perfect => "perfect",
            Estimator::Cge => "cge",
            Estimator::Ls => "ls",
            Estimator::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Estimator::Perfect, Estimator::Cge, Estimator::Ls, Estimator::None]
            .into_iter()
            .find(|e| e.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Backends {
    pub mma: Backend,
    pub lkb: Backend,
    pub embed: Backend,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Endpoints {
    pub mma: Option<Endpoint>,
    pub lkb: Option<Endpoint>,
    pub embed: Option<Endpoint>,
}

/// Every knob of a run; the TOML config file uses the same keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub rows: usize,
    pub cols: usize,
    pub pilot_spacing_f: usize,
    pub pilot_spacing_t: usize,
    pub pilot_seed: u64,
    pub sigma_f: f64,
    pub sigma_t: f64,
    /// When false the channel is `H ≡ 1`.
    pub fading: bool,
    pub snr_db: Vec<f64>,
    pub repetition: usize,
    pub estimators: Vec<Estimator>,
    pub equalizer: Equalizer,
    pub threshold: f64,
    /// Disables personalization on both ends when false.
    pub lkb_enabled: bool,
    pub backends: Backends,
    pub endpoints: Endpoints,
    pub master_seed: u64,
    pub sender: String,
    pub receiver: String,
    pub prompt_base: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    /// Size and seed of the synthetic corpus used when no corpus file is set.
    pub corpus_size: usize,
    pub corpus_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let task = TaskConfig::default();
        PipelineConfig {
            rows: task.rows,
            cols: task.cols,
            pilot_spacing_f: task.pilots.d_f,
            pilot_spacing_t: task.pilots.d_t,
            pilot_seed: task.pilots.seed,
            sigma_f: task.sigma_f,
            sigma_t: task.sigma_t,
            fading: true,
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            repetition: 1,
            estimators: vec![Estimator::Cge],
            equalizer: Equalizer::Zf,
            threshold: DEFAULT_THRESHOLD,
            lkb_enabled: true,
            backends: Backends::default(),
            endpoints: Endpoints::default(),
            master_seed: 2024,
            sender: "mike".into(),
            receiver: "jane".into(),
            prompt_base: None,
            model: None,
            corpus: None,
            corpus_size: 200,
            corpus_seed: 11,
        }
    }
}

fn config_error(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| config_error(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn pilots(&self) -> PilotLayout {
        PilotLayout {
            d_f: self.pilot_spacing_f,
            d_t: self.pilot_spacing_t,
            seed: self.pilot_seed,
        }
    }

    /// The channel-estimation task this config transmits over, at `snr_db`.
    pub fn task(&self, snr_db: f64) -> TaskConfig {
        TaskConfig {
            rows: self.rows,
            cols: self.cols,
            sigma_f: self.sigma_f,
            sigma_t: self.sigma_t,
            snr_db,
            pilots: self.pilots(),
        }
    }

    /// Checks internal consistency; `model_in_memory` waives the model path
    /// requirement of the `cge` estimator.
    pub fn validate(&self, model_in_memory: bool) -> Result<(), PipelineError> {
        if self.snr_db.is_empty() {
            return Err(config_error("snr_db must list at least one value"));
        }
        if let Some(s) = self.snr_db.iter().find(|s| s.is_nan() || **s == f64::NEG_INFINITY) {
            return Err(config_error(format!("invalid snr {s}")));
        }
        if self.estimators.is_empty() {
            return Err(config_error("estimators must list at least one estimator"));
        }
        if self.estimators.contains(&Estimator::Cge) && self.model.is_none() && !model_in_memory {
            return Err(config_error("estimator cge requires a model path"));
        }
        if self.repetition == 0 {
            return Err(config_error("repetition must be at least 1"));
        }
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(config_error(format!("threshold {} outside [-1, 1]", self.threshold)));
        }
        if self.rows < 4 || self.cols < 4 || self.pilot_spacing_f == 0 || self.pilot_spacing_t == 0 {
            return Err(config_error("grid must be at least 4x4 with positive pilot spacings"));
        }
        if self.sigma_f < 0.0 || self.sigma_t < 0.0 {
            return Err(config_error("smoothing stds must be non-negative"));
        }
        for (stage, backend, ep) in [
            ("mma", self.backends.mma, &self.endpoints.mma),
            ("lkb", self.backends.lkb, &self.endpoints.lkb),
            ("embed", self.backends.embed, &self.endpoints.embed),
        ] {
            if backend == Backend::Remote && ep.is_none() {
                return Err(config_error(format!("remote {stage} backend needs endpoints.{stage}")));
            }
            if ep.as_ref().is_some_and(|e| e.timeout_ms == 0) {
                return Err(config_error(format!("endpoints.{stage}.timeout_ms must be positive")));
            }
        }
        Ok(())
    }

    /// FNV-1a over the canonical TOML rendering, as 16 hex digits.
    pub fn fingerprint(&self) -> String {
        format!("{:016x}", crate::semeval::fnv1a(self.to_toml_string().as_bytes()))
    }
}
