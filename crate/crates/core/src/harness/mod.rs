//! End-to-end frame pipeline, decoders, Monte-Carlo BER sweeps and CSV
//! reporting.

mod config;
mod decode;
mod report;
mod sweep;

pub use config::{
    ChannelKnowledge, ChannelSection, CnnSection, NoiseSection, SimConfig, SweepSection,
    WaveformSection,
};
pub use decode::{
    decode_frame, decode_restricted_genie, CnnPredictor, DecodeInputs, DecoderKind,
    FuturePredictor, FutureScheme, OraclePredictor, PastContext, ReceivedFrame, LOOKAHEAD_SYMBOLS,
};
pub use report::{emit_csv, parse_csv, BerCurve, BerPoint};
pub use sweep::{
    derive_seed, run_ber_sweep, simulate_frame, train_model_for_config, FrameOutcome, FrameTrace,
    LinkSetup, SweepReport,
};
