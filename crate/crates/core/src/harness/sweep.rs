use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{add_awgn, apply_multipath, measure_eb, MultipathChannel, NoiseSpec};
use crate::isi::{compute_isi_coefficients, estimate_channel, IsiCoefficients, GENIE_RANGE};
use crate::neuralnet::{build_training_set, train, CnnModel, TrainReport, WindowLayout};
use crate::waveform::{
    build_frame, shape_forming_filter, symbol_to_bit, Bit, Frame, Symbol, WaveformConfig,
};
use crate::{Error, Result};

use super::config::{ChannelKnowledge, SimConfig};
use super::decode::{
    decode_frame, CnnPredictor, DecodeInputs, DecoderKind, FuturePredictor, ReceivedFrame,
};
use super::report::{BerCurve, BerPoint};

/// Frames processed per parallel batch. Results are accounted in frame
/// order, so the batch size never changes the totals.
const FRAME_BATCH: usize = 8;

/// SplitMix64 over `(master, point, frame)`.
pub fn derive_seed(master: u64, point: u64, frame: u64) -> u64 {
    let mut z = master
        .wrapping_add(point.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(frame.wrapping_mul(0xD1B5_4A32_D192_ED03));
    for _ in 0..2 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Everything about the link that is fixed for a whole sweep.
#[derive(Debug, Clone)]
pub struct LinkSetup {
    pub sim: SimConfig,
    pub wave: WaveformConfig,
    pub channel: MultipathChannel,
    /// Coefficients from the true channel, used in genie-CSI mode.
    pub true_coeffs: IsiCoefficients,
}

impl LinkSetup {
    pub fn new(sim: &SimConfig) -> Result<Self> {
        sim.validate()?;
        let wave = sim.waveform_config();
        let channel = sim.channel()?;
        let true_coeffs = compute_isi_coefficients(&channel, &wave, GENIE_RANGE)?;
        Ok(Self {
            sim: sim.clone(),
            wave,
            channel,
            true_coeffs,
        })
    }

    fn uses_cnn(&self) -> bool {
        self.sim.sweep.decoders.contains(&DecoderKind::CnnPredicted)
    }
}

/// A transmitted and received frame before decoding.
struct Transmission {
    frame: Frame,
    received: ReceivedFrame,
    coeffs: IsiCoefficients,
}

fn transmit(setup: &LinkSetup, ebn0_db: f64, seed: u64) -> Result<Transmission> {
    let wave = &setup.wave;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let payload: Vec<Bit> = (0..setup.sim.sweep.payload_bits)
        .map(|_| rng.random_range(0..=1))
        .collect();
    let frame = build_frame(&payload, setup.sim.waveform.probe_order)?;
    let shaped = shape_forming_filter(&frame.symbols, wave)?;
    let rx = apply_multipath(&shaped.samples, &setup.channel, wave)?;
    let noisy = if ebn0_db == f64::INFINITY {
        rx
    } else {
        let eb = measure_eb(&shaped.samples, frame.symbols.len());
        let noise = NoiseSpec {
            ebn0_db,
            seed: rng.random(),
        };
        add_awgn(&rx, eb, &noise)?
    };
    let coeffs = match setup.sim.channel.knowledge {
        ChannelKnowledge::Genie => setup.true_coeffs.clone(),
        ChannelKnowledge::Estimated => {
            // samples before the first payload pulse starts carry only probe
            let probe_syms = &frame.symbols[..frame.payload_start()];
            let clean = frame.payload_start() * wave.n_samp;
            let probe_tx = shape_forming_filter(probe_syms, wave)?;
            let grid = setup.sim.channel.max_delay_symbols * wave.n_samp;
            let estimated =
                estimate_channel(&noisy[..clean], &probe_tx.samples[..clean], wave, grid)?;
            compute_isi_coefficients(&estimated, wave, GENIE_RANGE)?
        }
    };
    let received = ReceivedFrame::new(
        &noisy,
        frame.symbols.len(),
        &frame.probe_bits,
        coeffs.timing_offset(),
        wave,
    )?;
    Ok(Transmission {
        frame,
        received,
        coeffs,
    })
}

fn train_on(setup: &LinkSetup, rf: &ReceivedFrame) -> Result<(TrainReport, f64)> {
    let layout = WindowLayout::new(rf.timing_offset, &setup.wave)?;
    let set = build_training_set(&rf.filtered, &layout, &rf.probe_bits)?;
    let init = CnnModel::new(setup.sim.cnn.kernels, setup.sim.noise.seed)?;
    let report = train(&init, &set.examples, &setup.sim.training_config())?;
    Ok((report, set.scale))
}

/// Probe-derived input scale for a frame.
fn probe_scale(setup: &LinkSetup, rf: &ReceivedFrame) -> Result<f64> {
    let layout = WindowLayout::new(rf.timing_offset, &setup.wave)?;
    Ok(build_training_set(&rf.filtered, &layout, &rf.probe_bits)?.scale)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    /// Payload bit errors, aligned with the configured decoder list.
    pub errors: Vec<u64>,
    pub bits: u64,
    /// Correct and total CNN future-symbol predictions over the payload
    /// thresholds, if the CNN ran.
    pub future_hits: Option<(u64, u64)>,
}

fn future_hits(p: &CnnPredictor, symbols: &[Symbol], start: usize) -> (u64, u64) {
    let mut hits = 0;
    let mut total = 0;
    for n in start..symbols.len() {
        for target in n + 1..(n + 4).min(symbols.len()) {
            if let Some(bit) = p.predict(target, n) {
                total += 1;
                hits += u64::from(bit == symbol_to_bit(symbols[target]));
            }
        }
    }
    (hits, total)
}

fn count_errors(decoded: &[Bit], truth: &[Bit]) -> u64 {
    decoded.iter().zip(truth).filter(|(a, b)| a != b).count() as u64
}

fn run_frame(
    setup: &LinkSetup,
    ebn0_db: f64,
    seed: u64,
    shared: Option<&CnnModel>,
) -> Result<FrameOutcome> {
    let tx = transmit(setup, ebn0_db, seed)?;
    let rf = &tx.received;
    let predictor = if setup.uses_cnn() {
        let (model, scale) = match shared {
            Some(m) => (m.clone(), probe_scale(setup, rf)?),
            None => {
                let (report, scale) = train_on(setup, rf)?;
                (report.model, scale)
            }
        };
        Some(CnnPredictor::new(
            &model,
            rf,
            &setup.wave,
            scale,
            setup.sim.cnn.future_scheme,
        )?)
    } else {
        None
    };
    let inputs = DecodeInputs {
        coeffs: &tx.coeffs,
        predictor: predictor.as_ref().map(|p| p as &dyn FuturePredictor),
        true_symbols: Some(&tx.frame.symbols),
    };
    let errors = setup
        .sim
        .sweep
        .decoders
        .iter()
        .map(|&kind| {
            decode_frame(rf, kind, &inputs).map(|bits| count_errors(&bits, &tx.frame.payload_bits))
        })
        .collect::<Result<Vec<_>>>()?;
    let future_hits = predictor
        .as_ref()
        .map(|p| future_hits(p, &tx.frame.symbols, rf.payload_start()));
    Ok(FrameOutcome {
        errors,
        bits: tx.frame.payload_bits.len() as u64,
        future_hits,
    })
}

/// Trains a model on the probe of the first frame of `point`.
fn point_model(setup: &LinkSetup, point: usize) -> Result<CnnModel> {
    let ebn0 = setup.sim.noise.ebn0_db[point];
    let tx = transmit(
        setup,
        ebn0,
        derive_seed(setup.sim.noise.seed, point as u64, 0),
    )?;
    Ok(train_on(setup, &tx.received)?.0.model)
}

/// Trains the model the `train` command serializes: first Eb/N0 point,
/// first frame.
pub fn train_model_for_config(sim: &SimConfig) -> Result<(CnnModel, TrainReport)> {
    let setup = LinkSetup::new(sim)?;
    let ebn0 = sim.noise.ebn0_db[0];
    let tx = transmit(&setup, ebn0, derive_seed(sim.noise.seed, 0, 0))?;
    let (report, _) = train_on(&setup, &tx.received)?;
    Ok((report.model.clone(), report))
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub channel: MultipathChannel,
    pub curves: Vec<BerCurve>,
    /// Accuracy of the CNN future symbols fed to thresholds, per Eb/N0
    /// point, when the CNN decoder ran.
    pub future_accuracy: Vec<Option<f64>>,
}

pub fn run_ber_sweep(sim: &SimConfig) -> Result<SweepReport> {
    let setup = LinkSetup::new(sim)?;
    let master = sim.noise.seed;
    let decoders = &sim.sweep.decoders;
    let loaded = match &sim.cnn.model_path {
        Some(path) if setup.uses_cnn() => {
            Some(CnnModel::from_text(&std::fs::read_to_string(path)?)?)
        }
        _ => None,
    };
    let mut curves: Vec<BerCurve> = decoders
        .iter()
        .map(|&decoder| BerCurve {
            decoder,
            seed: master,
            points: Vec::new(),
        })
        .collect();
    let mut future_accuracy = Vec::new();

    for (pi, &ebn0) in sim.noise.ebn0_db.iter().enumerate() {
        let shared = match (&loaded, setup.uses_cnn() && !sim.cnn.retrain_per_frame) {
            (Some(m), _) => Some(m.clone()),
            (None, true) => Some(point_model(&setup, pi)?),
            (None, false) => None,
        };
        let mut errors = vec![0u64; decoders.len()];
        let mut bits = vec![0u64; decoders.len()];
        let mut done = vec![false; decoders.len()];
        let mut hits = 0u64;
        let mut predicted = 0u64;
        let mut next_frame = 0u64;
        while done.iter().any(|d| !d) {
            let batch: Vec<u64> = (next_frame..next_frame + FRAME_BATCH as u64).collect();
            next_frame += FRAME_BATCH as u64;
            let outcomes: Vec<Result<FrameOutcome>> = batch
                .par_iter()
                .map(|&f| {
                    run_frame(
                        &setup,
                        ebn0,
                        derive_seed(master, pi as u64, f),
                        shared.as_ref(),
                    )
                })
                .collect();
            for outcome in outcomes {
                let outcome = outcome?;
                if done.iter().all(|d| *d) {
                    break;
                }
                for d in 0..decoders.len() {
                    if done[d] {
                        continue;
                    }
                    errors[d] += outcome.errors[d];
                    bits[d] += outcome.bits;
                    if bits[d] >= sim.sweep.bits_budget || errors[d] >= sim.sweep.error_budget {
                        done[d] = true;
                    }
                }
                if let Some((h, t)) = outcome.future_hits {
                    hits += h;
                    predicted += t;
                }
            }
        }
        for (d, curve) in curves.iter_mut().enumerate() {
            curve.points.push(BerPoint::new(ebn0, errors[d], bits[d]));
        }
        future_accuracy.push((predicted > 0).then(|| hits as f64 / predicted as f64));
    }
    Ok(SweepReport {
        channel: setup.channel,
        curves,
        future_accuracy,
    })
}

/// Per-symbol trace of one frame at the first Eb/N0 point.
#[derive(Debug, Clone)]
pub struct FrameTrace {
    pub decoders: Vec<DecoderKind>,
    pub symbols: Vec<Symbol>,
    pub payload_start: usize,
    pub y: Vec<f64>,
    /// CNN `(past, current, future)` for the window ending at each symbol.
    pub cnn: Vec<Option<(Bit, Bit, Bit)>>,
    /// Decoded payload bits per decoder.
    pub decoded: Vec<Vec<Bit>>,
    pub train_accuracy: Option<f64>,
}

impl FrameTrace {
    /// CSV: `n,region,bit,y,cnn_past,cnn_current,cnn_future,<decoder>...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let mut header: Vec<String> = [
            "n",
            "region",
            "bit",
            "y",
            "cnn_past",
            "cnn_current",
            "cnn_future",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(self.decoders.iter().map(|d| d.name().to_string()));
        w.write_record(&header)?;
        let opt = |b: Option<Bit>| b.map(|v| v.to_string()).unwrap_or_default();
        for n in 0..self.symbols.len() {
            let payload = n >= self.payload_start;
            let triple = self.cnn.get(n).copied().flatten();
            let mut row = vec![
                n.to_string(),
                if payload { "payload" } else { "probe" }.to_string(),
                symbol_to_bit(self.symbols[n]).to_string(),
                self.y[n].to_string(),
                opt(triple.map(|t| t.0)),
                opt(triple.map(|t| t.1)),
                opt(triple.map(|t| t.2)),
            ];
            for dec in &self.decoded {
                row.push(if payload {
                    dec[n - self.payload_start].to_string()
                } else {
                    String::new()
                });
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn simulate_frame(sim: &SimConfig) -> Result<FrameTrace> {
    let setup = LinkSetup::new(sim)?;
    let ebn0 = sim.noise.ebn0_db[0];
    let tx = transmit(&setup, ebn0, derive_seed(sim.noise.seed, 0, 0))?;
    let rf = &tx.received;
    let (predictor, train_accuracy) = if setup.uses_cnn() {
        let (model, scale, accuracy) = match &sim.cnn.model_path {
            Some(path) => {
                let model = CnnModel::from_text(&std::fs::read_to_string(path)?)?;
                (model, probe_scale(&setup, rf)?, None)
            }
            None => {
                let (report, scale) = train_on(&setup, rf)?;
                (report.model, scale, Some(report.accuracy))
            }
        };
        (
            Some(CnnPredictor::new(
                &model,
                rf,
                &setup.wave,
                scale,
                setup.sim.cnn.future_scheme,
            )?),
            accuracy,
        )
    } else {
        (None, None)
    };
    let inputs = DecodeInputs {
        coeffs: &tx.coeffs,
        predictor: predictor.as_ref().map(|p| p as &dyn FuturePredictor),
        true_symbols: Some(&tx.frame.symbols),
    };
    let decoded = sim
        .sweep
        .decoders
        .iter()
        .map(|&k| decode_frame(rf, k, &inputs))
        .collect::<Result<Vec<_>>>()?;
    let cnn = (0..rf.n_symbols())
        .map(|w| predictor.as_ref().and_then(|p| p.triple(w)))
        .collect();
    if decoded.is_empty() {
        return Err(Error::config(
            "sweep.decoders",
            "needs at least one decoder",
        ));
    }
    Ok(FrameTrace {
        decoders: sim.sweep.decoders.clone(),
        symbols: tx.frame.symbols.clone(),
        payload_start: rf.payload_start(),
        y: rf.y.clone(),
        cnn,
        decoded,
        train_accuracy,
    })
}
