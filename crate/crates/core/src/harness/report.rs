use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::decode::DecoderKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub ebn0_db: f64,
    pub bit_errors: u64,
    pub bits_total: u64,
    pub ber: f64,
}

impl BerPoint {
    pub fn new(ebn0_db: f64, bit_errors: u64, bits_total: u64) -> Self {
        assert!(bits_total > 0, "a BER point needs at least one bit");
        Self {
            ebn0_db,
            bit_errors,
            bits_total,
            ber: bit_errors as f64 / bits_total as f64,
        }
    }

    /// Half-width of the 95% normal-approximation confidence interval.
    pub fn ci95(&self) -> f64 {
        let n = self.bits_total as f64;
        1.96 * (self.ber * (1.0 - self.ber) / n).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerCurve {
    pub decoder: DecoderKind,
    pub seed: u64,
    pub points: Vec<BerPoint>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    decoder: String,
    ebn0_db: f64,
    bit_errors: u64,
    bits_total: u64,
    ber: f64,
    seed: u64,
}

/// `decoder,ebn0_db,bit_errors,bits_total,ber,seed`, one row per point.
pub fn emit_csv(curves: &[BerCurve]) -> Result<String> {
    if curves.is_empty() || curves.iter().all(|c| c.points.is_empty()) {
        return Err(Error::EmptyCurves);
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for curve in curves {
        for p in &curve.points {
            w.serialize(Row {
                decoder: curve.decoder.name().to_string(),
                ebn0_db: p.ebn0_db,
                bit_errors: p.bit_errors,
                bits_total: p.bits_total,
                ber: p.ber,
                seed: curve.seed,
            })?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Inverse of [`emit_csv`]; consecutive rows with the same decoder and seed
/// form one curve.
pub fn parse_csv(text: &str) -> Result<Vec<BerCurve>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut curves: Vec<BerCurve> = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        let decoder = DecoderKind::from_name(&row.decoder).ok_or_else(|| {
            Error::config("decoder", format!("unknown decoder `{}`", row.decoder))
        })?;
        let point = BerPoint {
            ebn0_db: row.ebn0_db,
            bit_errors: row.bit_errors,
            bits_total: row.bits_total,
            ber: row.ber,
        };
        match curves.last_mut() {
            Some(c) if c.decoder == decoder && c.seed == row.seed => c.points.push(point),
            _ => curves.push(BerCurve {
                decoder,
                seed: row.seed,
                points: vec![point],
            }),
        }
    }
    Ok(curves)
}
