use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{MultipathChannel, Tap};
use crate::neuralnet::TrainingConfig;
use crate::waveform::WaveformConfig;
use crate::{Error, Result};

use super::decode::{DecoderKind, FutureScheme};

/// Sweep configuration, read from TOML.
///
/// ```toml
/// [waveform]
/// n_samp = 16
/// tail_symbols = 16
/// probe_order = 6
///
/// [channel]
/// gamma = 0.7
/// delays = [0.0, 1.0, 2.0]
///
/// [noise]
/// ebn0_db = [8.0, 10.0, 12.0]
/// seed = 7
///
/// [sweep]
/// decoders = ["zero", "past", "cnn", "genie"]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub waveform: WaveformSection,
    #[serde(default)]
    pub channel: ChannelSection,
    pub noise: NoiseSection,
    #[serde(default)]
    pub cnn: CnnSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveformSection {
    pub f: f64,
    pub n_samp: usize,
    pub tail_symbols: usize,
    pub probe_order: usize,
}

impl Default for WaveformSection {
    fn default() -> Self {
        let w = WaveformConfig::default();
        Self {
            f: w.f,
            n_samp: w.n_samp,
            tail_symbols: w.tail_symbols,
            probe_order: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKnowledge {
    /// Receiver uses the true channel taps.
    #[default]
    Genie,
    /// Receiver estimates taps from each frame's probe.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    /// Explicit `[tau, alpha]` pairs. Takes precedence over `gamma`.
    pub taps: Option<Vec<[f64; 2]>>,
    pub gamma: Option<f64>,
    pub delays: Option<Vec<f64>>,
    pub knowledge: ChannelKnowledge,
    /// Largest delay searched by the probe-based estimator, in symbols.
    pub max_delay_symbols: usize,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            taps: None,
            gamma: Some(0.7),
            delays: Some(vec![0.0, 1.0, 2.0]),
            knowledge: ChannelKnowledge::Genie,
            max_delay_symbols: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub ebn0_db: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnSection {
    pub kernels: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch: usize,
    pub retrain_per_frame: bool,
    pub future_scheme: FutureScheme,
    /// Pre-trained model to use instead of training.
    pub model_path: Option<PathBuf>,
}

impl Default for CnnSection {
    fn default() -> Self {
        let t = TrainingConfig::default();
        Self {
            kernels: 8,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch: t.batch,
            retrain_per_frame: true,
            future_scheme: FutureScheme::default(),
            model_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Payload bits carried by each frame.
    pub payload_bits: usize,
    pub bits_budget: u64,
    pub error_budget: u64,
    pub decoders: Vec<DecoderKind>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            payload_bits: 2000,
            bits_budget: 100_000,
            error_budget: 200,
            decoders: DecoderKind::ALL.to_vec(),
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| format!("byte {}..{}", s.start, s.end))
                .unwrap_or_else(|| "config".into());
            Error::config(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        // model paths are relative to the config file
        if let (Some(model), Some(dir)) = (cfg.cnn.model_path.as_mut(), path.parent()) {
            if model.is_relative() {
                *model = dir.join(&*model);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn waveform_config(&self) -> WaveformConfig {
        WaveformConfig {
            f: self.waveform.f,
            n_samp: self.waveform.n_samp,
            tail_symbols: self.waveform.tail_symbols,
        }
    }

    pub fn channel(&self) -> Result<MultipathChannel> {
        let ch = &self.channel;
        let built = if let Some(taps) = &ch.taps {
            MultipathChannel::from_taps(
                taps.iter()
                    .map(|&[tau, alpha]| Tap { tau, alpha })
                    .collect(),
            )
        } else {
            match (ch.gamma, &ch.delays) {
                (Some(gamma), Some(delays)) => MultipathChannel::from_gamma(gamma, delays),
                _ => {
                    return Err(Error::config(
                        "channel",
                        "give either `taps` or both `gamma` and `delays`",
                    ))
                }
            }
        };
        built.map_err(|e| Error::config("channel", e.to_string()))
    }

    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            learning_rate: self.cnn.learning_rate,
            epochs: self.cnn.epochs,
            seed: self.noise.seed,
            batch: self.cnn.batch,
            early_stop: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.waveform_config()
            .validate()
            .map_err(|e| Error::config("waveform", e.to_string()))?;
        if !(1..=16).contains(&self.waveform.probe_order) {
            return Err(Error::config("waveform.probe_order", "must be in 1..=16"));
        }
        let ch = self.channel()?;
        ch.sample_delays(&self.waveform_config())
            .map_err(|e| Error::config("channel", e.to_string()))?;
        if self.noise.ebn0_db.is_empty() {
            return Err(Error::config("noise.ebn0_db", "needs at least one point"));
        }
        if let Some(bad) = self
            .noise
            .ebn0_db
            .iter()
            .find(|v| v.is_nan() || **v == f64::NEG_INFINITY)
        {
            return Err(Error::config(
                "noise.ebn0_db",
                format!("invalid point {bad}"),
            ));
        }
        if self.cnn.kernels == 0 {
            return Err(Error::config("cnn.kernels", "must be at least 1"));
        }
        self.training_config()
            .validate()
            .map_err(|e| Error::config("cnn", e.to_string()))?;
        if self.sweep.payload_bits == 0 {
            return Err(Error::config("sweep.payload_bits", "must be at least 1"));
        }
        if self.sweep.bits_budget == 0 {
            return Err(Error::config("sweep.bits_budget", "must be at least 1"));
        }
        if self.sweep.error_budget == 0 {
            return Err(Error::config("sweep.error_budget", "must be at least 1"));
        }
        if self.sweep.decoders.is_empty() {
            return Err(Error::config(
                "sweep.decoders",
                "needs at least one decoder",
            ));
        }
        let needs_windows = self.sweep.decoders.contains(&DecoderKind::CnnPredicted);
        if needs_windows
            && self.waveform.n_samp * crate::neuralnet::WINDOW_SYMBOLS
                != crate::neuralnet::INPUT_LEN
        {
            return Err(Error::config(
                "waveform.n_samp",
                "the cnn decoder needs n_samp = 16",
            ));
        }
        Ok(())
    }
}
