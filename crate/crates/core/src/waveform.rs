//! Chaotic baseband waveform generation.
//!
//! Time is normalized to the symbol duration, so the decay rate of the basis
//! function is `ln 2` per symbol and its oscillation is `2π` per symbol. The
//! base frequency `f` is kept only for reporting.
//!
//! A shaped waveform starts `tail_symbols` symbol durations before the first
//! symbol so the anticipatory part of the first pulses is not lost: sample `k`
//! sits at time `k / n_samp - tail_symbols`.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Bit = u8;
pub type Symbol = i8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformConfig {
    /// Base frequency in Hz. Not used by any computation.
    pub f: f64,
    pub n_samp: usize,
    pub tail_symbols: usize,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        Self {
            f: 600.0,
            n_samp: 16,
            tail_symbols: 16,
        }
    }
}

impl WaveformConfig {
    /// Per-symbol decay `β/f`.
    pub const fn beta_norm(&self) -> f64 {
        LN_2
    }

    /// Per-symbol phase advance `ω/f`.
    pub const fn omega_norm(&self) -> f64 {
        2.0 * PI
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samp < 2 {
            return Err(Error::InvalidWaveformConfig(format!(
                "n_samp must be at least 2, got {}",
                self.n_samp
            )));
        }
        if !(self.f.is_finite() && self.f > 0.0) {
            return Err(Error::InvalidWaveformConfig(format!(
                "base frequency must be positive, got {}",
                self.f
            )));
        }
        let residual = (-self.beta_norm() * self.tail_symbols as f64).exp();
        if residual >= 1e-4 {
            return Err(Error::InvalidWaveformConfig(format!(
                "tail_symbols = {} leaves a truncation residual of {residual:e} (need < 1e-4)",
                self.tail_symbols
            )));
        }
        Ok(())
    }

    /// Number of samples in the sampled basis function, which covers `[-tail, 1)`.
    pub fn pulse_len(&self) -> usize {
        (self.tail_symbols + 1) * self.n_samp
    }
}

/// The chaotic basis function `p(t)`, three branches on `floor(t)`.
///
/// Implemented exactly as written, including the jump at `t = 0` where the
/// left limit is 0.5 and the value is -1. Zero outside `[-tail_symbols, 1)`.
pub fn basis_function(t: f64, cfg: &WaveformConfig) -> f64 {
    let beta = cfg.beta_norm();
    let omega = cfg.omega_norm();
    let floor = t.floor();
    if floor > 0.0 || t < -(cfg.tail_symbols as f64) {
        return 0.0;
    }
    let osc = (omega * t).cos() - (beta / omega) * (omega * t).sin();
    if floor < 0.0 {
        (1.0 - (-beta).exp()) * (beta * t).exp() * osc
    } else {
        1.0 - (-beta * (t - 1.0)).exp() * osc
    }
}

/// Basis function sampled on the grid: entry `j` is `p(j / n_samp - tail)`.
pub fn sampled_basis(cfg: &WaveformConfig) -> Vec<f64> {
    let ns = cfg.n_samp as f64;
    let tail = cfg.tail_symbols as f64;
    (0..cfg.pulse_len())
        .map(|j| basis_function(j as f64 / ns - tail, cfg))
        .collect()
}

/// Header carried alongside a flat sample buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveformHeader {
    pub n_samp: usize,
    pub symbols: usize,
    pub tail_symbols: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub header: WaveformHeader,
    pub samples: Vec<f64>,
}

impl Waveform {
    /// Normalized time of sample `k`.
    pub fn time_of(&self, k: usize) -> f64 {
        k as f64 / self.header.n_samp as f64 - self.header.tail_symbols as f64
    }
}

pub fn check_symbols(symbols: &[Symbol]) -> Result<()> {
    match symbols.iter().find(|&&s| s != 1 && s != -1) {
        Some(&s) => Err(Error::InvalidSymbol(s as i64)),
        None => Ok(()),
    }
}

/// Shape-forming filter: `u(t) = Σ_m s_m p(t - m)` on the sampling grid.
///
/// Output length is `(symbols + tail_symbols) * n_samp`, covering times
/// `[-tail, symbols)`.
pub fn shape_forming_filter(symbols: &[Symbol], cfg: &WaveformConfig) -> Result<Waveform> {
    if symbols.is_empty() {
        return Err(Error::EmptySymbols);
    }
    check_symbols(symbols)?;
    let pulse = sampled_basis(cfg);
    let ns = cfg.n_samp;
    let mut samples = vec![0.0; (symbols.len() + cfg.tail_symbols) * ns];
    for (m, &s) in symbols.iter().enumerate() {
        let s = s as f64;
        let start = m * ns;
        for (out, &p) in samples[start..start + pulse.len()].iter_mut().zip(&pulse) {
            *out += s * p;
        }
    }
    Ok(Waveform {
        header: WaveformHeader {
            n_samp: ns,
            symbols: symbols.len(),
            tail_symbols: cfg.tail_symbols,
        },
        samples,
    })
}

/// Binary de Bruijn sequence B(2, order), built from Lyndon words
/// (Fredricksen-Kessler-Maiorana). Starts with `order` zeros.
pub fn debruijn_probe(order: usize) -> Result<Vec<Bit>> {
    if !(1..=16).contains(&order) {
        return Err(Error::DeBruijnOrder(order));
    }
    let n = order;
    let mut seq = Vec::with_capacity(1 << n);
    // a[1..=n] walks the prenecklaces in lexicographic order; a[1..=p] is
    // emitted whenever its period p divides n
    let mut a = vec![0u8; n + 1];
    let mut p = 1usize;
    loop {
        if n.is_multiple_of(p) {
            seq.extend_from_slice(&a[1..=p]);
        }
        let mut i = n;
        while i > 0 && a[i] == 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        a[i] += 1;
        for j in i + 1..=n {
            a[j] = a[j - i];
        }
        p = i;
    }
    Ok(seq)
}

pub fn bit_to_symbol(bit: Bit) -> Symbol {
    if bit == 0 {
        -1
    } else {
        1
    }
}

pub fn symbol_to_bit(symbol: Symbol) -> Bit {
    u8::from(symbol > 0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub probe_bits: Vec<Bit>,
    pub payload_bits: Vec<Bit>,
    pub symbols: Vec<Symbol>,
}

impl Frame {
    pub fn payload_start(&self) -> usize {
        self.probe_bits.len()
    }

    pub fn payload_symbols(&self) -> &[Symbol] {
        &self.symbols[self.probe_bits.len()..]
    }
}

/// Probe bits for a frame: de Bruijn sequence of `order`, extended
/// cyclically by `order - 1` bits so every `order`-bit context appears as a
/// contiguous run.
pub fn probe_bits(order: usize) -> Result<Vec<Bit>> {
    let mut probe = debruijn_probe(order)?;
    probe.extend_from_within(0..order - 1);
    Ok(probe)
}

pub fn build_frame(payload_bits: &[Bit], probe_order: usize) -> Result<Frame> {
    if payload_bits.is_empty() {
        return Err(Error::EmptyPayload);
    }
    let probe = probe_bits(probe_order)?;
    let symbols = probe
        .iter()
        .chain(payload_bits)
        .map(|&b| bit_to_symbol(b))
        .collect();
    Ok(Frame {
        probe_bits: probe,
        payload_bits: payload_bits.to_vec(),
        symbols,
    })
}
