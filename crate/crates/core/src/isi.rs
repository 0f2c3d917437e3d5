//! Inter-symbol interference coefficients and decoding thresholds.
//!
//! `C[l, i]` is the decision-instant contribution to `y_n` of a lone `+1`
//! symbol sent at index `n + i` through path `l` only. It is computed by
//! running that single symbol through the same shaping, path and matched
//! filter as real frames, so for any noiseless frame
//!
//! ```text
//! y_n = s_n · c_main + Σ_l Σ_{i≠0} s_{n+i} · C[l, i]
//! ```
//!
//! holds up to rounding, provided the offset range covers the whole response.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::channel::{MultipathChannel, Tap};
use crate::receiver::{calibrate_timing, single_symbol_response};
use crate::waveform::{check_symbols, Symbol, WaveformConfig};
use crate::{Error, Result};

/// Offsets used by the decoder thresholds: 4 past, 3 future.
pub const DECODER_RANGE: (i32, i32) = (-4, 3);
/// Offsets used by the genie threshold.
pub const GENIE_RANGE: (i32, i32) = (-8, 8);

#[derive(Debug, Clone, PartialEq)]
pub struct IsiCoefficients {
    /// `c[l][i - i_min]`; the `i = 0` column holds each path's own main term.
    c: Vec<Vec<f64>>,
    c_main: f64,
    i_min: i32,
    i_max: i32,
    timing_offset: usize,
}

impl IsiCoefficients {
    /// Builds a table from explicit values, `c[l][i - i_min]`.
    pub fn from_table(c: Vec<Vec<f64>>, i_min: i32, i_max: i32) -> Result<Self> {
        let width = (i_max - i_min + 1) as usize;
        if c.is_empty() || c.iter().any(|row| row.len() != width) || i_min > 0 || i_max < 0 {
            return Err(Error::Shape(
                "coefficient table does not match its offset range".into(),
            ));
        }
        let c_main = c.iter().map(|row| row[(-i_min) as usize]).sum();
        Ok(Self {
            c,
            c_main,
            i_min,
            i_max,
            timing_offset: 0,
        })
    }

    pub fn c_main(&self) -> f64 {
        self.c_main
    }

    pub fn range(&self) -> (i32, i32) {
        (self.i_min, self.i_max)
    }

    pub fn paths(&self) -> usize {
        self.c.len()
    }

    pub fn timing_offset(&self) -> usize {
        self.timing_offset
    }

    /// `C[l, i]`, zero outside the table.
    pub fn get(&self, l: usize, i: i32) -> f64 {
        if i < self.i_min || i > self.i_max {
            return 0.0;
        }
        self.c[l][(i - self.i_min) as usize]
    }

    /// `Σ_l C[l, i]`.
    pub fn path_sum(&self, i: i32) -> f64 {
        (0..self.c.len()).map(|l| self.get(l, i)).sum()
    }

    /// CSV with header `l,i,c`, one row per table entry with `i ≠ 0`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["l", "i", "c"])?;
        for l in 0..self.c.len() {
            for i in self.i_min..=self.i_max {
                if i != 0 {
                    w.write_record([l.to_string(), i.to_string(), self.get(l, i).to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Offset range wide enough that every non-zero coefficient is in the table.
pub fn full_range(ch: &MultipathChannel, cfg: &WaveformConfig) -> Result<(i32, i32)> {
    let off = calibrate_timing(cfg, ch)? as i64;
    let len = single_symbol_response(cfg, ch)?.len() as i64;
    let ns = cfg.n_samp as i64;
    // offset i reads index off - i*ns, which must lie in [0, len)
    let i_min = -((len - 1 - off + ns - 1) / ns);
    let i_max = off / ns;
    Ok((
        (i_min as i32).min(DECODER_RANGE.0),
        (i_max as i32).max(DECODER_RANGE.1),
    ))
}

pub fn compute_isi_coefficients(
    ch: &MultipathChannel,
    cfg: &WaveformConfig,
    i_range: (i32, i32),
) -> Result<IsiCoefficients> {
    let (i_min, i_max) = i_range;
    if i_min > DECODER_RANGE.0 || i_max < DECODER_RANGE.1 {
        return Err(Error::OffsetRange(i_min, i_max));
    }
    let off = calibrate_timing(cfg, ch)? as i64;
    let ns = cfg.n_samp as i64;
    let mut c = Vec::with_capacity(ch.taps().len());
    for l in 0..ch.taps().len() {
        let r = single_symbol_response(cfg, &ch.path(l))?;
        let row = (i_min..=i_max)
            .map(|i| {
                let k = off - i as i64 * ns;
                if k >= 0 && (k as usize) < r.len() {
                    r[k as usize]
                } else {
                    0.0
                }
            })
            .collect();
        c.push(row);
    }
    let mut table = IsiCoefficients::from_table(c, i_min, i_max)?;
    table.timing_offset = off as usize;
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub value: f64,
    pub i_past: f64,
    pub i_future: f64,
}

impl Threshold {
    fn from_parts(i_past: f64, i_future: f64) -> Self {
        Self {
            value: i_past + i_future,
            i_past,
            i_future,
        }
    }
}

/// Threshold from the 4 past symbols `s_{n-4..n-1}` and either no future
/// symbols or the 3 future symbols `s_{n+1..n+3}`.
pub fn threshold(
    past: &[Symbol],
    future: &[Symbol],
    coeffs: &IsiCoefficients,
) -> Result<Threshold> {
    if past.len() != 4 {
        return Err(Error::Shape(format!(
            "expected 4 past symbols, got {}",
            past.len()
        )));
    }
    if !(future.is_empty() || future.len() == 3) {
        return Err(Error::Shape(format!(
            "expected 0 or 3 future symbols, got {}",
            future.len()
        )));
    }
    check_symbols(past)?;
    check_symbols(future)?;
    let i_past = past
        .iter()
        .zip(-4..0)
        .map(|(&s, i)| s as f64 * coeffs.path_sum(i))
        .sum();
    let i_future = future
        .iter()
        .zip(1..)
        .map(|(&s, i)| s as f64 * coeffs.path_sum(i))
        .sum();
    Ok(Threshold::from_parts(i_past, i_future))
}

/// Threshold over offsets `i_range` (excluding 0) where `symbol_at(i)`
/// supplies `s_{n+i}`; `None` contributes nothing.
pub fn threshold_with<F>(
    coeffs: &IsiCoefficients,
    i_range: (i32, i32),
    mut symbol_at: F,
) -> Threshold
where
    F: FnMut(i32) -> Option<Symbol>,
{
    let mut i_past = 0.0;
    let mut i_future = 0.0;
    for i in i_range.0..=i_range.1 {
        if i == 0 {
            continue;
        }
        if let Some(s) = symbol_at(i) {
            let term = s as f64 * coeffs.path_sum(i);
            if i < 0 {
                i_past += term;
            } else {
                i_future += term;
            }
        }
    }
    Threshold::from_parts(i_past, i_future)
}

/// Threshold from the true symbols over the table's whole offset range.
/// Neighbors outside the sequence contribute nothing.
pub fn genie_threshold(
    all_syms: &[Symbol],
    n: usize,
    coeffs: &IsiCoefficients,
) -> Result<Threshold> {
    if n >= all_syms.len() {
        return Err(Error::IndexOutOfRange {
            index: n,
            len: all_syms.len(),
        });
    }
    Ok(threshold_with(coeffs, coeffs.range(), |i| {
        let k = n as i64 + i as i64;
        (k >= 0 && (k as usize) < all_syms.len()).then(|| all_syms[k as usize])
    }))
}

/// Relative amplitude below which estimated taps are dropped.
pub const DEFAULT_PRUNE: f64 = 0.05;

/// Non-negative least squares fit of `probe_rx` by delayed copies of
/// `probe_tx` on delays `0..=delay_grid` samples. Only the samples present
/// in `probe_rx` are fitted, so a received probe may be cut short before
/// the payload starts to leak in.
pub fn estimate_channel(
    probe_rx: &[f64],
    probe_tx: &[f64],
    cfg: &WaveformConfig,
    delay_grid: usize,
) -> Result<MultipathChannel> {
    estimate_channel_pruned(probe_rx, probe_tx, cfg, delay_grid, DEFAULT_PRUNE)
}

pub fn estimate_channel_pruned(
    probe_rx: &[f64],
    probe_tx: &[f64],
    cfg: &WaveformConfig,
    delay_grid: usize,
    prune: f64,
) -> Result<MultipathChannel> {
    if probe_tx.iter().all(|&x| x == 0.0) {
        return Err(Error::DegenerateProbe);
    }
    let n_taps = delay_grid + 1;
    // rows past the end of probe_rx are not observed
    let rows = probe_rx.len();
    let column = |d: usize, k: usize| -> f64 {
        if k >= d && k - d < probe_tx.len() {
            probe_tx[k - d]
        } else {
            0.0
        }
    };
    let mut gram = DMatrix::<f64>::zeros(n_taps, n_taps);
    let mut rhs = DVector::<f64>::zeros(n_taps);
    for a in 0..n_taps {
        rhs[a] = (0..rows).map(|k| column(a, k) * probe_rx[k]).sum();
        for b in a..n_taps {
            let v: f64 = (0..rows).map(|k| column(a, k) * column(b, k)).sum();
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    let amps = nnls_normal(&gram, &rhs);
    let peak = amps.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::InvalidChannel("no positive tap found".into()));
    }
    let taps = amps
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > prune * peak)
        .map(|(d, &a)| Tap {
            tau: d as f64 / cfg.n_samp as f64,
            alpha: a,
        })
        .collect();
    MultipathChannel::from_taps(taps)
}

/// Lawson-Hanson active-set NNLS on the normal equations `G x = b`.
fn nnls_normal(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Vec<f64> {
    let n = rhs.len();
    let scale = gram.diagonal().iter().cloned().fold(0.0, f64::max).max(1.0);
    let tol = 1e-12 * scale;
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    for _ in 0..3 * n + 10 {
        let w = rhs - gram * &x;
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = candidate else { break };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let z_p = solve_subsystem(gram, rhs, &idx);
            if z_p.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (&k, &v) in idx.iter().zip(z_p.iter()) {
                    x[k] = v;
                }
                break;
            }
            // step back toward the feasible region
            let mut step = f64::INFINITY;
            for (&k, &v) in idx.iter().zip(z_p.iter()) {
                if v <= 0.0 {
                    step = step.min(x[k] / (x[k] - v));
                }
            }
            for (&k, &v) in idx.iter().zip(z_p.iter()) {
                x[k] += step * (v - x[k]);
            }
            for &k in &idx {
                if x[k] <= tol * 1e-6 {
                    x[k] = 0.0;
                    passive[k] = false;
                }
            }
        }
    }
    x.iter().copied().collect()
}

fn solve_subsystem(gram: &DMatrix<f64>, rhs: &DVector<f64>, idx: &[usize]) -> Vec<f64> {
    let m = idx.len();
    let sub = DMatrix::from_fn(m, m, |a, b| gram[(idx[a], idx[b])]);
    let sub_rhs = DVector::from_fn(m, |a, _| rhs[idx[a]]);
    let solved = sub
        .clone()
        .cholesky()
        .map(|c| c.solve(&sub_rhs))
        .or_else(|| sub.lu().solve(&sub_rhs))
        .unwrap_or_else(|| DVector::zeros(m));
    solved.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::apply_multipath;
    use crate::receiver::{matched_filter, sample_decisions};
    use crate::waveform::shape_forming_filter;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> WaveformConfig {
        WaveformConfig::default()
    }

    fn random_symbols(n: usize, seed: u64) -> Vec<Symbol> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect()
    }

    #[test]
    fn range_must_cover_decoder_offsets() {
        let ch = MultipathChannel::single_path();
        assert!(matches!(
            compute_isi_coefficients(&ch, &cfg(), (-3, 3)),
            Err(Error::OffsetRange(-3, 3))
        ));
        assert!(compute_isi_coefficients(&ch, &cfg(), (-4, 2)).is_err());
        assert!(compute_isi_coefficients(&ch, &cfg(), (-4, 3)).is_ok());
    }

    #[test]
    fn single_path_coefficients_decay() {
        let c = cfg();
        let t = compute_isi_coefficients(&MultipathChannel::single_path(), &c, (-20, 20)).unwrap();
        for i in -20i32..=20 {
            if i.unsigned_abs() as usize >= c.tail_symbols {
                assert!(t.get(0, i).abs() < 1e-3 * t.c_main().abs(), "i = {i}");
            }
        }
        // symmetric response for a lone path
        for i in 1..=8 {
            assert!((t.get(0, i) - t.get(0, -i)).abs() < 1e-9);
        }
        assert!(t.c_main() > 0.0);
    }

    #[test]
    fn coefficients_scale_with_attenuation() {
        let c = cfg();
        let a = MultipathChannel::from_taps(vec![
            Tap {
                tau: 0.0,
                alpha: 1.0,
            },
            Tap {
                tau: 1.0,
                alpha: 0.4,
            },
        ])
        .unwrap();
        let b = MultipathChannel::from_taps(vec![
            Tap {
                tau: 0.0,
                alpha: 1.0,
            },
            Tap {
                tau: 1.0,
                alpha: 0.8,
            },
        ])
        .unwrap();
        let ta = compute_isi_coefficients(&a, &c, GENIE_RANGE).unwrap();
        let tb = compute_isi_coefficients(&b, &c, GENIE_RANGE).unwrap();
        assert_eq!(ta.timing_offset(), tb.timing_offset());
        for i in -8..=8 {
            assert_eq!(ta.get(0, i), tb.get(0, i));
            assert_eq!(2.0 * ta.get(1, i), tb.get(1, i));
        }
    }

    #[test]
    fn decomposition_identity_three_path() {
        let c = cfg();
        let ch = MultipathChannel::default_three_path();
        let range = full_range(&ch, &c).unwrap();
        let table = compute_isi_coefficients(&ch, &c, range).unwrap();
        let syms = random_symbols(300, 3);
        let shaped = shape_forming_filter(&syms, &c).unwrap();
        let rx = apply_multipath(&shaped.samples, &ch, &c).unwrap();
        let y = sample_decisions(
            &matched_filter(&rx, &c).unwrap(),
            syms.len(),
            table.timing_offset(),
            &c,
        )
        .unwrap();
        for n in 0..syms.len() {
            let th = genie_threshold(&syms, n, &table).unwrap();
            let predicted = syms[n] as f64 * table.c_main() + th.value;
            assert!((y.y[n] - predicted).abs() <= 1e-9 * y.y[n].abs().max(table.c_main()));
        }
    }

    #[test]
    fn threshold_sums() {
        let zero = IsiCoefficients::from_table(vec![vec![0.0; 8]], -4, 3).unwrap();
        let t = threshold(&[1, -1, 1, 1], &[1, 1, -1], &zero).unwrap();
        assert_eq!(t.value, 0.0);

        // only offset -1 is non-zero, split across two paths
        let mut rows = vec![vec![0.0; 8], vec![0.0; 8]];
        rows[0][3] = 1.5;
        rows[1][3] = -0.25;
        let one = IsiCoefficients::from_table(rows, -4, 3).unwrap();
        let t = threshold(&[1, 1, -1, -1], &[], &one).unwrap();
        assert_eq!(t.value, -1.25);
        assert_eq!(t.i_future, 0.0);
        assert!(threshold(&[1, 1, 0, 1], &[], &one).is_err());
        assert!(threshold(&[1, 1, 1], &[], &one).is_err());
        assert!(threshold(&[1, 1, 1, 1], &[1], &one).is_err());
    }

    #[test]
    fn default_channel_threshold_hand_sum() {
        let table = compute_isi_coefficients(
            &MultipathChannel::default_three_path(),
            &cfg(),
            DECODER_RANGE,
        )
        .unwrap();
        let past = [1i8, -1, 1, -1];
        let future = [1i8, 1, -1];
        let mut i_past = 0.0;
        for l in 0..3 {
            i_past += table.get(l, -4) - table.get(l, -3) + table.get(l, -2) - table.get(l, -1);
        }
        let mut i_future = 0.0;
        for l in 0..3 {
            i_future += table.get(l, 1) + table.get(l, 2) - table.get(l, 3);
        }
        let t = threshold(&past, &future, &table).unwrap();
        assert!((t.i_past - i_past).abs() < 1e-12);
        assert!((t.i_future - i_future).abs() < 1e-12);
        assert_eq!(t.value, t.i_past + t.i_future);
    }

    #[test]
    fn flipping_one_symbol_moves_threshold_by_twice_the_column() {
        let table = compute_isi_coefficients(
            &MultipathChannel::default_three_path(),
            &cfg(),
            DECODER_RANGE,
        )
        .unwrap();
        let past = [1i8, -1, -1, 1];
        let future = [-1i8, 1, 1];
        let base = threshold(&past, &future, &table).unwrap().value;
        for j in 0..4 {
            let mut p = past;
            p[j] = -p[j];
            let moved = threshold(&p, &future, &table).unwrap().value;
            let i = j as i32 - 4;
            assert!((moved - base - 2.0 * p[j] as f64 * table.path_sum(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn genie_edge_cases() {
        let table =
            compute_isi_coefficients(&MultipathChannel::default_three_path(), &cfg(), GENIE_RANGE)
                .unwrap();
        assert_eq!(genie_threshold(&[1], 0, &table).unwrap().value, 0.0);
        assert!(genie_threshold(&[1], 1, &table).is_err());
        let ones = vec![1i8; 40];
        let expected: f64 = (-8..=8)
            .filter(|&i| i != 0)
            .map(|i| table.path_sum(i))
            .sum();
        let got = genie_threshold(&ones, 20, &table).unwrap().value;
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn csv_export() {
        let table =
            compute_isi_coefficients(&MultipathChannel::single_path(), &cfg(), DECODER_RANGE)
                .unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "l,i,c");
        assert_eq!(lines.len(), 1 + 7);
        assert!(lines[1].starts_with("0,-4,"));
    }

    fn probe_waveform(c: &WaveformConfig) -> Vec<f64> {
        let bits = crate::waveform::probe_bits(6).unwrap();
        let syms: Vec<Symbol> = bits
            .iter()
            .map(|&b| crate::waveform::bit_to_symbol(b))
            .collect();
        shape_forming_filter(&syms, c).unwrap().samples
    }

    #[test]
    fn estimate_recovers_noiseless_channels() {
        let c = cfg();
        let tx = probe_waveform(&c);
        for ch in [
            MultipathChannel::single_path(),
            MultipathChannel::default_three_path(),
        ] {
            let rx = apply_multipath(&tx, &ch, &c).unwrap();
            let est = estimate_channel(&rx, &tx, &c, 48).unwrap();
            assert_eq!(est.taps().len(), ch.taps().len());
            for (a, b) in est.taps().iter().zip(ch.taps()) {
                assert!((a.tau - b.tau).abs() < 1e-6);
                assert!(
                    (a.alpha - b.alpha).abs() < 1e-6,
                    "{} vs {}",
                    a.alpha,
                    b.alpha
                );
            }
        }
    }

    #[test]
    fn estimate_rejects_zero_probe() {
        assert!(matches!(
            estimate_channel(&[0.0; 10], &[0.0; 10], &cfg(), 4),
            Err(Error::DegenerateProbe)
        ));
    }

    #[test]
    fn nnls_clamps_negative_solutions() {
        // unconstrained solution is (2, -1); constrained optimum has x1 = 0
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let b = DVector::from_vec(vec![3.0, 0.0]);
        let x = nnls_normal(&g, &b);
        assert!((x[0] - 1.5).abs() < 1e-12);
        assert_eq!(x[1], 0.0);
    }
}
