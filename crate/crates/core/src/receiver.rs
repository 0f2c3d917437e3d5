//! Matched filtering, decision-instant sampling and threshold decisions.

use crate::channel::{apply_multipath, MultipathChannel};
use crate::waveform::{basis_function, shape_forming_filter, Symbol, WaveformConfig};
use crate::{Error, Result};

/// Time-reversed sampled basis function.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedFilter {
    /// `coeffs[j] = p(1 - j / n_samp)`, i.e. `p(-t)` for `t` from -1 to `tail`.
    pub coeffs: Vec<f64>,
    /// Index of the `t = 0` tap.
    pub group_delay: usize,
}

impl MatchedFilter {
    pub fn new(cfg: &WaveformConfig) -> Self {
        let ns = cfg.n_samp as f64;
        let len = (cfg.tail_symbols + 1) * cfg.n_samp + 1;
        let coeffs = (0..len)
            .map(|j| basis_function(1.0 - j as f64 / ns, cfg))
            .collect();
        Self {
            coeffs,
            group_delay: cfg.n_samp,
        }
    }

    /// Full discrete convolution of `samples` with the filter taps.
    pub fn apply(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.is_empty() {
            return Err(Error::EmptyWaveform);
        }
        let h = &self.coeffs;
        let mut out = vec![0.0; samples.len() + h.len() - 1];
        for (i, &x) in samples.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (o, &c) in out[i..i + h.len()].iter_mut().zip(h) {
                *o += x * c;
            }
        }
        Ok(out)
    }
}

pub fn matched_filter(samples: &[f64], cfg: &WaveformConfig) -> Result<Vec<f64>> {
    MatchedFilter::new(cfg).apply(samples)
}

/// Response of a lone `+1` symbol through shaping, `ch` and the matched filter.
pub fn single_symbol_response(cfg: &WaveformConfig, ch: &MultipathChannel) -> Result<Vec<f64>> {
    let shaped = shape_forming_filter(&[1], cfg)?;
    let rx = apply_multipath(&shaped.samples, ch, cfg)?;
    matched_filter(&rx, cfg)
}

/// Sample index of the largest absolute single-symbol response. All
/// per-symbol decision instants are anchored to it.
pub fn calibrate_timing(cfg: &WaveformConfig, ch: &MultipathChannel) -> Result<usize> {
    let response = single_symbol_response(cfg, ch)?;
    Ok(argmax_abs(&response))
}

fn argmax_abs(x: &[f64]) -> usize {
    // first index wins on ties
    let mut best = 0;
    for (k, v) in x.iter().enumerate() {
        if v.abs() > x[best].abs() {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionSeries {
    pub y: Vec<f64>,
    pub timing_offset: usize,
}

/// `y_n = filtered[timing_offset + n · n_samp]`.
pub fn sample_decisions(
    filtered: &[f64],
    n_symbols: usize,
    timing_offset: usize,
    cfg: &WaveformConfig,
) -> Result<DecisionSeries> {
    if n_symbols > 0 {
        let last = timing_offset + (n_symbols - 1) * cfg.n_samp;
        if last >= filtered.len() {
            return Err(Error::Length {
                needed: last + 1,
                available: filtered.len(),
            });
        }
    }
    let y = (0..n_symbols)
        .map(|n| filtered[timing_offset + n * cfg.n_samp])
        .collect();
    Ok(DecisionSeries { y, timing_offset })
}

/// `+1` when `y - θ ≥ 0`, else `-1`.
pub fn decide(y: f64, theta: f64) -> Result<Symbol> {
    if !(y.is_finite() && theta.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(if y - theta >= 0.0 { 1 } else { -1 })
}
