//! Static multipath channel `h(t) = Σ_l α_l δ(t - τ_l)` and calibrated AWGN.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::waveform::WaveformConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    /// Delay in symbol durations.
    pub tau: f64,
    /// Linear attenuation.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipathChannel {
    taps: Vec<Tap>,
    gamma: Option<f64>,
}

impl MultipathChannel {
    pub fn from_taps(taps: Vec<Tap>) -> Result<Self> {
        let ch = Self { taps, gamma: None };
        ch.validate()?;
        Ok(ch)
    }

    /// Taps with `α_l = e^{-γ τ_l}`.
    pub fn from_gamma(gamma: f64, taus: &[f64]) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::InvalidChannel(format!(
                "gamma must be finite, got {gamma}"
            )));
        }
        let taps = taus
            .iter()
            .map(|&tau| Tap {
                tau,
                alpha: (-gamma * tau).exp(),
            })
            .collect();
        let ch = Self {
            taps,
            gamma: Some(gamma),
        };
        ch.validate()?;
        Ok(ch)
    }

    pub fn single_path() -> Self {
        Self {
            taps: vec![Tap {
                tau: 0.0,
                alpha: 1.0,
            }],
            gamma: None,
        }
    }

    /// Three paths at 0, 1 and 2 symbols with `γ = 0.7`.
    pub fn default_three_path() -> Self {
        Self::from_gamma(0.7, &[0.0, 1.0, 2.0]).expect("default channel is valid")
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    fn validate(&self) -> Result<()> {
        let first = self
            .taps
            .first()
            .ok_or_else(|| Error::InvalidChannel("no taps".into()))?;
        if first.tau != 0.0 {
            return Err(Error::InvalidChannel(format!(
                "reference path must have zero delay, got {}",
                first.tau
            )));
        }
        for tap in &self.taps {
            if !(tap.alpha.is_finite() && tap.alpha > 0.0) {
                return Err(Error::InvalidChannel(format!(
                    "attenuation must be positive, got {}",
                    tap.alpha
                )));
            }
            if !tap.tau.is_finite() {
                return Err(Error::InvalidChannel("non-finite delay".into()));
            }
        }
        if self.taps.windows(2).any(|w| w[1].tau <= w[0].tau) {
            return Err(Error::InvalidChannel(
                "delays must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Delay of each tap in samples. Fails for delays off the sampling grid.
    pub fn sample_delays(&self, cfg: &WaveformConfig) -> Result<Vec<usize>> {
        self.taps
            .iter()
            .map(|tap| delay_in_samples(tap.tau, cfg))
            .collect()
    }

    pub fn max_delay_samples(&self, cfg: &WaveformConfig) -> Result<usize> {
        Ok(self.sample_delays(cfg)?.into_iter().max().unwrap_or(0))
    }

    /// The same channel with every delay increased by `extra` symbols.
    /// The reference path moves too, so the result skips validation.
    pub fn delayed_by(&self, extra: f64) -> Self {
        Self {
            taps: self
                .taps
                .iter()
                .map(|t| Tap {
                    tau: t.tau + extra,
                    alpha: t.alpha,
                })
                .collect(),
            gamma: self.gamma,
        }
    }

    /// Channel consisting of path `l` alone, kept at its original delay.
    pub fn path(&self, l: usize) -> Self {
        Self {
            taps: vec![self.taps[l]],
            gamma: self.gamma,
        }
    }
}

fn delay_in_samples(tau: f64, cfg: &WaveformConfig) -> Result<usize> {
    let scaled = tau * cfg.n_samp as f64;
    let rounded = scaled.round();
    if (scaled - rounded).abs() > 1e-9 || rounded < 0.0 {
        return Err(Error::OffGridDelay {
            tau,
            n_samp: cfg.n_samp,
        });
    }
    Ok(rounded as usize)
}

/// `out[k] = Σ_l α_l x[k - τ_l n_samp]`, output extended by the largest delay.
pub fn apply_multipath(
    samples: &[f64],
    ch: &MultipathChannel,
    cfg: &WaveformConfig,
) -> Result<Vec<f64>> {
    let delays = ch.sample_delays(cfg)?;
    let max_delay = delays.iter().copied().max().unwrap_or(0);
    let mut out = vec![0.0; samples.len() + max_delay];
    for (tap, d) in ch.taps.iter().zip(delays) {
        for (o, &x) in out[d..d + samples.len()].iter_mut().zip(samples) {
            *o += tap.alpha * x;
        }
    }
    Ok(out)
}

/// Sum of squared samples divided by the number of bits.
pub fn measure_eb(samples: &[f64], n_bits: usize) -> f64 {
    assert!(n_bits >= 1, "measure_eb needs at least one bit");
    samples.iter().map(|x| x * x).sum::<f64>() / n_bits as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub ebn0_db: f64,
    pub seed: u64,
}

impl NoiseSpec {
    /// Per-sample noise variance `Eb / (2 · 10^{Eb/N0 / 10})`.
    pub fn variance(&self, eb: f64) -> f64 {
        eb / (2.0 * 10f64.powf(self.ebn0_db / 10.0))
    }
}

pub fn add_awgn(samples: &[f64], eb: f64, noise: &NoiseSpec) -> Result<Vec<f64>> {
    if !(eb > 0.0 && eb.is_finite()) {
        return Err(Error::NonPositiveEnergy(eb));
    }
    let sigma = noise.variance(eb).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    Ok(samples
        .iter()
        .map(|&x| {
            let n: f64 = StandardNormal.sample(&mut rng);
            x + sigma * n
        })
        .collect())
}
