use serde::{Deserialize, Serialize};

use crate::isi::{threshold_with, IsiCoefficients, DECODER_RANGE};
use crate::neuralnet::{predict_bits, CnnModel, WindowLayout};
use crate::receiver::{decide, matched_filter, sample_decisions};
use crate::waveform::{bit_to_symbol, symbol_to_bit, Bit, Symbol, WaveformConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    #[serde(alias = "zero")]
    ZeroThreshold,
    #[serde(alias = "past")]
    PastOnly,
    #[serde(alias = "cnn")]
    CnnPredicted,
    #[serde(alias = "genie")]
    GenieOptimal,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 4] = [
        DecoderKind::ZeroThreshold,
        DecoderKind::PastOnly,
        DecoderKind::CnnPredicted,
        DecoderKind::GenieOptimal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::ZeroThreshold => "zero_threshold",
            DecoderKind::PastOnly => "past_only",
            DecoderKind::CnnPredicted => "cnn_predicted",
            DecoderKind::GenieOptimal => "genie_optimal",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl std::fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A frame after the matched filter, with one decision sample per symbol.
#[derive(Debug, Clone)]
pub struct ReceivedFrame {
    pub filtered: Vec<f64>,
    pub y: Vec<f64>,
    pub timing_offset: usize,
    pub probe_bits: Vec<Bit>,
}

impl ReceivedFrame {
    /// Matched-filters `rx_samples` and samples `n_symbols` decision instants.
    pub fn new(
        rx_samples: &[f64],
        n_symbols: usize,
        probe_bits: &[Bit],
        timing_offset: usize,
        cfg: &WaveformConfig,
    ) -> Result<Self> {
        if probe_bits.len() >= n_symbols {
            return Err(Error::EmptyPayload);
        }
        let filtered = matched_filter(rx_samples, cfg)?;
        let series = sample_decisions(&filtered, n_symbols, timing_offset, cfg)?;
        Ok(Self {
            filtered,
            y: series.y,
            timing_offset,
            probe_bits: probe_bits.to_vec(),
        })
    }

    pub fn n_symbols(&self) -> usize {
        self.y.len()
    }

    pub fn payload_start(&self) -> usize {
        self.probe_bits.len()
    }
}

/// How CNN window outputs are turned into the future symbols of a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FutureScheme {
    /// While deciding `s_n`, the window ending at `n + 2` supplies its
    /// `(past, current, future)` outputs as `(s_{n+1}, s_{n+2}, s_{n+3})`.
    #[default]
    Lookahead,
    /// `s_{n+k}` is the future-bit output of the window ending at `n + k - 1`.
    Sliding,
}

/// Windows buffered beyond the symbol being decided.
pub const LOOKAHEAD_SYMBOLS: usize = 2;

/// Supplies predicted symbols for the threshold of the symbol being decided.
pub trait FuturePredictor {
    /// Bit of symbol `target` as predicted while deciding symbol `deciding`.
    fn predict(&self, target: usize, deciding: usize) -> Option<Bit>;
}

/// CNN predictions for every window of one frame.
#[derive(Debug, Clone)]
pub struct CnnPredictor {
    triples: Vec<Option<(Bit, Bit, Bit)>>,
    scheme: FutureScheme,
}

impl CnnPredictor {
    /// Runs `model` on every window of `frame`, scaling inputs by `1 / scale`.
    pub fn new(
        model: &CnnModel,
        frame: &ReceivedFrame,
        cfg: &WaveformConfig,
        scale: f64,
        scheme: FutureScheme,
    ) -> Result<Self> {
        let layout = WindowLayout::new(frame.timing_offset, cfg)?;
        let triples = (0..frame.n_symbols())
            .map(|w| {
                layout
                    .normalized_window(&frame.filtered, w, scale)
                    .map(|win| predict_bits(model, &win))
                    .transpose()
            })
            .collect::<Result<_>>()?;
        Ok(Self { triples, scheme })
    }

    /// `(past, current, future)` predicted from the window ending at `w`.
    pub fn triple(&self, w: usize) -> Option<(Bit, Bit, Bit)> {
        self.triples.get(w).copied().flatten()
    }
}

impl FuturePredictor for CnnPredictor {
    fn predict(&self, target: usize, deciding: usize) -> Option<Bit> {
        match self.scheme {
            FutureScheme::Sliding => self.triple(target.checked_sub(1)?).map(|t| t.2),
            FutureScheme::Lookahead => {
                let last = self.triples.len().checked_sub(1)?;
                let w = (deciding + LOOKAHEAD_SYMBOLS).min(last);
                if target + 1 < w || target > w + 1 {
                    return None;
                }
                let (past, current, future) = self.triple(w)?;
                Some([past, current, future][target + 1 - w])
            }
        }
    }
}

/// Predictor that knows the transmitted symbols.
#[derive(Debug, Clone, Copy)]
pub struct OraclePredictor<'a> {
    pub symbols: &'a [Symbol],
}

impl FuturePredictor for OraclePredictor<'_> {
    fn predict(&self, target: usize, _deciding: usize) -> Option<Bit> {
        self.symbols.get(target).map(|&s| symbol_to_bit(s))
    }
}

/// Where past symbols in a threshold come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PastContext {
    /// The receiver's own earlier decisions (known probe bits before the payload).
    Decisions,
    /// The transmitted symbols.
    Truth,
}

pub struct DecodeInputs<'a> {
    /// Must cover `-4..=3`; the genie uses the table's whole range.
    pub coeffs: &'a IsiCoefficients,
    pub predictor: Option<&'a dyn FuturePredictor>,
    pub true_symbols: Option<&'a [Symbol]>,
}

/// Decodes the payload of `frame` with the chosen threshold strategy.
pub fn decode_frame(
    frame: &ReceivedFrame,
    kind: DecoderKind,
    inputs: &DecodeInputs<'_>,
) -> Result<Vec<Bit>> {
    let coeffs = inputs.coeffs;
    let symbols = match kind {
        DecoderKind::ZeroThreshold => decode_core(
            frame,
            coeffs,
            (0, 0),
            PastContext::Decisions,
            None,
            |_, _| None,
        )?,
        DecoderKind::PastOnly => decode_core(
            frame,
            coeffs,
            (DECODER_RANGE.0, -1),
            PastContext::Decisions,
            None,
            |_, _| None,
        )?,
        DecoderKind::CnnPredicted => {
            let predictor = inputs
                .predictor
                .ok_or(Error::MissingInput("cnn_predicted", "a trained model"))?;
            let n_symbols = frame.n_symbols();
            decode_core(
                frame,
                coeffs,
                DECODER_RANGE,
                PastContext::Decisions,
                None,
                |idx, n| {
                    if idx < n_symbols {
                        predictor.predict(idx, n).map(bit_to_symbol)
                    } else {
                        None
                    }
                },
            )?
        }
        DecoderKind::GenieOptimal => {
            let truth = inputs
                .true_symbols
                .ok_or(Error::MissingInput("genie_optimal", "the transmitted bits"))?;
            check_truth(frame, truth)?;
            decode_core(
                frame,
                coeffs,
                coeffs.range(),
                PastContext::Truth,
                Some(truth),
                |idx, _| truth.get(idx).copied(),
            )?
        }
    };
    Ok(symbols.into_iter().map(symbol_to_bit).collect())
}

/// Genie decoding over an explicit offset range with a chosen past context.
pub fn decode_restricted_genie(
    frame: &ReceivedFrame,
    coeffs: &IsiCoefficients,
    truth: &[Symbol],
    range: (i32, i32),
    past: PastContext,
) -> Result<Vec<Bit>> {
    check_truth(frame, truth)?;
    let symbols = decode_core(frame, coeffs, range, past, Some(truth), |idx, _| {
        truth.get(idx).copied()
    })?;
    Ok(symbols.into_iter().map(symbol_to_bit).collect())
}

fn check_truth(frame: &ReceivedFrame, truth: &[Symbol]) -> Result<()> {
    if truth.len() != frame.n_symbols() {
        return Err(Error::Shape(format!(
            "{} true symbols for a frame of {}",
            truth.len(),
            frame.n_symbols()
        )));
    }
    Ok(())
}

/// Sequential threshold decoding of the payload. `future_at(idx, n)`
/// supplies the symbol at absolute index `idx > n` while deciding `n`.
fn decode_core<F>(
    frame: &ReceivedFrame,
    coeffs: &IsiCoefficients,
    range: (i32, i32),
    past: PastContext,
    truth: Option<&[Symbol]>,
    future_at: F,
) -> Result<Vec<Symbol>>
where
    F: Fn(usize, usize) -> Option<Symbol>,
{
    let start = frame.payload_start();
    let n_symbols = frame.n_symbols();
    let probe: Vec<Symbol> = frame.probe_bits.iter().map(|&b| bit_to_symbol(b)).collect();
    let mut decided: Vec<Symbol> = Vec::with_capacity(n_symbols - start);
    for n in start..n_symbols {
        let theta = threshold_with(coeffs, range, |i| {
            let idx = n as i64 + i as i64;
            if idx < 0 {
                return None;
            }
            let idx = idx as usize;
            if i > 0 {
                return future_at(idx, n);
            }
            match (past, truth) {
                (PastContext::Truth, Some(t)) => Some(t[idx]),
                _ if idx < start => Some(probe[idx]),
                _ => Some(decided[idx - start]),
            }
        });
        decided.push(decide(frame.y[n], theta.value)?);
    }
    Ok(decided)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_multipath, MultipathChannel};
    use crate::isi::{compute_isi_coefficients, GENIE_RANGE};
    use crate::waveform::{build_frame, shape_forming_filter};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noiseless(
        ch: &MultipathChannel,
        payload: usize,
        seed: u64,
    ) -> (ReceivedFrame, Vec<Symbol>, IsiCoefficients) {
        let cfg = WaveformConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits: Vec<Bit> = (0..payload).map(|_| rng.random_range(0..=1)).collect();
        let frame = build_frame(&bits, 6).unwrap();
        let shaped = shape_forming_filter(&frame.symbols, &cfg).unwrap();
        let rx = apply_multipath(&shaped.samples, ch, &cfg).unwrap();
        let coeffs = compute_isi_coefficients(ch, &cfg, GENIE_RANGE).unwrap();
        let rf = ReceivedFrame::new(
            &rx,
            frame.symbols.len(),
            &frame.probe_bits,
            coeffs.timing_offset(),
            &cfg,
        )
        .unwrap();
        (rf, frame.symbols, coeffs)
    }

    fn errors(decoded: &[Bit], truth: &[Symbol], start: usize) -> usize {
        decoded
            .iter()
            .zip(&truth[start..])
            .filter(|(d, s)| **d != symbol_to_bit(**s))
            .count()
    }

    #[test]
    fn names_round_trip() {
        for k in DecoderKind::ALL {
            assert_eq!(DecoderKind::from_name(k.name()), Some(k));
        }
        assert_eq!(DecoderKind::from_name("nope"), None);
    }

    #[test]
    fn missing_inputs_are_errors() {
        let (rf, _, coeffs) = noiseless(&MultipathChannel::single_path(), 20, 1);
        let inputs = DecodeInputs {
            coeffs: &coeffs,
            predictor: None,
            true_symbols: None,
        };
        assert!(matches!(
            decode_frame(&rf, DecoderKind::CnnPredicted, &inputs),
            Err(Error::MissingInput("cnn_predicted", _))
        ));
        assert!(matches!(
            decode_frame(&rf, DecoderKind::GenieOptimal, &inputs),
            Err(Error::MissingInput("genie_optimal", _))
        ));
    }

    #[test]
    fn noiseless_single_path_zero_threshold_is_error_free() {
        let (rf, truth, coeffs) = noiseless(&MultipathChannel::single_path(), 2000, 2);
        let inputs = DecodeInputs {
            coeffs: &coeffs,
            predictor: None,
            true_symbols: Some(&truth),
        };
        for kind in [
            DecoderKind::ZeroThreshold,
            DecoderKind::PastOnly,
            DecoderKind::GenieOptimal,
        ] {
            let bits = decode_frame(&rf, kind, &inputs).unwrap();
            assert_eq!(bits.len(), 2000);
            assert_eq!(errors(&bits, &truth, rf.payload_start()), 0, "{kind}");
        }
    }

    #[test]
    fn oracle_predictor_matches_restricted_genie() {
        let (rf, truth, coeffs) = noiseless(&MultipathChannel::default_three_path(), 1500, 3);
        let oracle = OraclePredictor { symbols: &truth };
        let inputs = DecodeInputs {
            coeffs: &coeffs,
            predictor: Some(&oracle),
            true_symbols: Some(&truth),
        };
        let cnn = decode_frame(&rf, DecoderKind::CnnPredicted, &inputs).unwrap();
        let genie =
            decode_restricted_genie(&rf, &coeffs, &truth, DECODER_RANGE, PastContext::Decisions)
                .unwrap();
        assert_eq!(cnn, genie);
    }

    #[test]
    fn lookahead_reads_one_window_two_symbols_ahead() {
        // window w predicts (w-1, w, w+1); encode the window index in the bits
        let triples = (0..10u8)
            .map(|w| Some((w % 2, (w / 2) % 2, (w / 4) % 2)))
            .collect();
        let p = CnnPredictor {
            triples,
            scheme: FutureScheme::Lookahead,
        };
        // deciding 3 uses window 5 for targets 4, 5, 6
        assert_eq!(p.predict(4, 3), Some(1));
        assert_eq!(p.predict(5, 3), Some(0));
        assert_eq!(p.predict(6, 3), Some(1));
        assert_eq!(p.predict(7, 3), None);
        // near the end the last window is reused
        assert_eq!(p.predict(9, 8), Some(0));
        assert_eq!(p.predict(10, 8), Some(0));

        let sliding = CnnPredictor {
            scheme: FutureScheme::Sliding,
            ..p
        };
        assert_eq!(sliding.predict(6, 3), Some(1));
        assert_eq!(sliding.predict(0, 3), None);
    }
}
