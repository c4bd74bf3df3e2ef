//! Viewpoint encoding of melodies into fixed-width binary n-gram instances.
//!
//! Each note becomes a 41-bit column holding four one-hot blocks: absolute
//! interval (13 bins), contour (3), inter-onset interval (16) and
//! offset-to-onset interval (9). An n-gram row for a target note
//! concatenates the columns of its n−1 predecessors and itself; context
//! positions before the start of the melody are filled with Bernoulli(0.5)
//! noise drawn from a counter-based stream keyed by (seed, melody id,
//! target index, column position), so padding is reproducible regardless of
//! iteration order or thread count.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Melody, NoteEvent};

/// One-hot block widths for the four note viewpoints.
///
/// `note_width()` is the total column width (41 with the default bins).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewpointConfig {
    /// |pitch interval| bins: 0..12 semitones, clamped.
    pub abs_interval_bins: usize,
    /// Contour bins: down, equal, up.
    pub contour_bins: usize,
    /// Inter-onset interval bins: 1..16 semiquavers, clamped.
    pub ioi_bins: usize,
    /// Offset-to-onset interval bins: 0..8 quavers, clamped.
    pub ooi_bins: usize,
}

impl Default for ViewpointConfig {
    fn default() -> Self {
        ViewpointConfig {
            abs_interval_bins: 13,
            contour_bins: 3,
            ioi_bins: 16,
            ooi_bins: 9,
        }
    }
}

impl ViewpointConfig {
    /// Total bits per note column.
    pub fn note_width(&self) -> usize {
        self.abs_interval_bins + self.contour_bins + self.ioi_bins + self.ooi_bins
    }
}

/// Melodic contour of a note relative to its predecessor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Contour {
    Down,
    Equal,
    Up,
}

/// Quantized note features; the digram baselines use this as their symbol
/// alphabet so statistical models see exactly the encoder's quantization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NoteSymbol {
    /// |interval| bin, 0..abs_interval_bins.
    pub abs_interval: u8,
    pub contour: Contour,
    /// IOI bin index, 0..ioi_bins (bin i holds IOI of i+1 semiquavers).
    pub ioi: u8,
    /// OOI bin index in quavers, 0..ooi_bins.
    pub ooi: u8,
}

/// Quantize a note relative to its predecessor. With no predecessor the
/// symbol is the documented default (0, equal, IOI 1, OOI 0).
pub fn note_symbol(prev: Option<&NoteEvent>, cur: &NoteEvent, cfg: &ViewpointConfig) -> NoteSymbol {
    let Some(prev) = prev else {
        return NoteSymbol {
            abs_interval: 0,
            contour: Contour::Equal,
            ioi: 0,
            ooi: 0,
        };
    };
    let delta = i32::from(cur.pitch) - i32::from(prev.pitch);
    let abs_interval = (delta.unsigned_abs() as usize).min(cfg.abs_interval_bins - 1);
    let contour = match delta.signum() {
        -1 => Contour::Down,
        0 => Contour::Equal,
        _ => Contour::Up,
    };
    let ioi_ticks = (cur.onset - prev.onset).clamp(1, cfg.ioi_bins as u32);
    let ooi_ticks = cur.onset.saturating_sub(prev.offset()).min(16);
    let ooi_quavers = ((ooi_ticks / 2) as usize).min(cfg.ooi_bins - 1);
    NoteSymbol {
        abs_interval: abs_interval as u8,
        contour,
        ioi: (ioi_ticks - 1) as u8,
        ooi: ooi_quavers as u8,
    }
}

/// Active bit positions of a symbol within its 41-bit column, one per block.
pub fn symbol_bits(sym: &NoteSymbol, cfg: &ViewpointConfig) -> [usize; 4] {
    let contour_idx = match sym.contour {
        Contour::Down => 0,
        Contour::Equal => 1,
        Contour::Up => 2,
    };
    let contour_base = cfg.abs_interval_bins;
    let ioi_base = contour_base + cfg.contour_bins;
    let ooi_base = ioi_base + cfg.ioi_bins;
    [
        sym.abs_interval as usize,
        contour_base + contour_idx,
        ioi_base + sym.ioi as usize,
        ooi_base + sym.ooi as usize,
    ]
}

/// Write the one-hot column for `cur` (relative to `prev`) into `out`.
pub fn encode_note(
    prev: Option<&NoteEvent>,
    cur: &NoteEvent,
    cfg: &ViewpointConfig,
    out: &mut [f64],
) {
    assert_eq!(out.len(), cfg.note_width(), "column width mismatch");
    out.fill(0.0);
    for bit in symbol_bits(&note_symbol(prev, cur, cfg), cfg) {
        out[bit] = 1.0;
    }
}

/// Batch of binary n-gram instances: one row per target note, in melody
/// order, with per-row provenance and padding flags.
#[derive(Debug, Clone)]
pub struct NGramBatch {
    /// Window length; each row is `n * note_width` wide.
    pub n: usize,
    /// Viewpoint config the rows were encoded under.
    pub viewpoint: ViewpointConfig,
    pub rows: Array2<f64>,
    /// (melody id, note index) of each row's target note.
    pub row_meta: Vec<(String, usize)>,
    /// True if any context column of the row is noise padding.
    pub padded_flags: Vec<bool>,
}

impl NGramBatch {
    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn row_width(&self) -> usize {
        self.rows.ncols()
    }

    /// Concatenate batches row-wise. All batches must agree on n and width.
    pub fn concat(batches: &[NGramBatch]) -> NGramBatch {
        let first = batches.first().expect("at least one batch");
        let width = first.row_width();
        let n = first.n;
        let total: usize = batches.iter().map(NGramBatch::len).sum();
        let mut rows = Array2::zeros((total, width));
        let mut row_meta = Vec::with_capacity(total);
        let mut padded_flags = Vec::with_capacity(total);
        let mut at = 0;
        for b in batches {
            assert_eq!(b.n, n, "mixed n-gram lengths");
            assert_eq!(b.row_width(), width, "mixed row widths");
            assert_eq!(b.viewpoint, first.viewpoint, "mixed viewpoint configs");
            rows.slice_mut(ndarray::s![at..at + b.len(), ..])
                .assign(&b.rows);
            row_meta.extend(b.row_meta.iter().cloned());
            padded_flags.extend(b.padded_flags.iter().copied());
            at += b.len();
        }
        NGramBatch {
            n,
            viewpoint: first.viewpoint,
            rows,
            row_meta,
            padded_flags,
        }
    }

    /// PBM (P1) text rendering for visual inspection: one image row per
    /// instance, `1` = active bit.
    pub fn to_pbm(&self) -> String {
        let mut out = format!("P1\n{} {}\n", self.row_width(), self.len());
        for row in self.rows.rows() {
            let line: Vec<&str> = row.iter().map(|&x| if x > 0.5 { "1" } else { "0" }).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Counter-based generator: a key is absorbed once, then each call yields
/// the next word of a splitmix64 stream. Streams with distinct keys are
/// independent for practical purposes hence safe to draw in any order.
struct KeyedStream {
    state: u64,
}

const GOLDEN: u64 = 0x9e3779b97f4a7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl KeyedStream {
    fn new(parts: &[u64]) -> KeyedStream {
        let mut state = 0u64;
        for &p in parts {
            state = splitmix64(state ^ p);
        }
        KeyedStream { state }
    }

    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        splitmix64(self.state)
    }
}

/// Collapse key parts into one 64-bit seed, stable across platforms and
/// independent of evaluation order.
pub(crate) fn derive_seed(parts: &[u64]) -> u64 {
    KeyedStream::new(parts).state
}

/// Stable 64-bit hash of a melody id.
pub(crate) fn id_hash(id: &str) -> u64 {
    fnv1a(id.as_bytes())
}

/// Fill a noise column for melody `id`, target note `t`, window position
/// `pos`. Each bit is an independent Bernoulli(0.5) draw.
fn noise_column(seed: u64, id: &str, t: usize, pos: usize, out: &mut [f64]) {
    let mut stream = KeyedStream::new(&[seed, fnv1a(id.as_bytes()), t as u64, pos as u64]);
    let mut word = 0u64;
    for (i, x) in out.iter_mut().enumerate() {
        if i % 64 == 0 {
            word = stream.next_u64();
        }
        *x = f64::from((word >> (i % 64)) & 1 != 0);
    }
}

/// Encode every note of a melody as the target of one n-gram row.
///
/// Row `t` concatenates the columns of notes `t−n+1 .. t`; positions with
/// note index < 0 hold seeded noise and set the row's padded flag.
pub fn encode_melody(m: &Melody, n: usize, cfg: &ViewpointConfig, rng_seed: u64) -> NGramBatch {
    assert!(n >= 1, "n-gram length must be at least 1");
    let width = cfg.note_width();
    let len = m.notes.len();
    let mut rows = Array2::zeros((len, n * width));
    let mut row_meta = Vec::with_capacity(len);
    let mut padded_flags = Vec::with_capacity(len);
    for t in 0..len {
        let mut row = rows.row_mut(t);
        let row = row.as_slice_mut().expect("row-major layout");
        let mut padded = false;
        for pos in 0..n {
            let col = &mut row[pos * width..(pos + 1) * width];
            // Window position pos covers note index t − n + 1 + pos.
            match (t + pos + 1).checked_sub(n) {
                Some(j) => {
                    let prev = j.checked_sub(1).map(|p| &m.notes[p]);
                    encode_note(prev, &m.notes[j], cfg, col);
                }
                None => {
                    noise_column(rng_seed, &m.id, t, pos, col);
                    padded = true;
                }
            }
        }
        row_meta.push((m.id.clone(), t));
        padded_flags.push(padded);
    }
    NGramBatch {
        n,
        viewpoint: *cfg,
        rows,
        row_meta,
        padded_flags,
    }
}

/// Encode a whole corpus into one batch, melodies in corpus order.
pub fn encode_corpus(corpus: &Corpus, n: usize, cfg: &ViewpointConfig, rng_seed: u64) -> NGramBatch {
    let batches: Vec<NGramBatch> = corpus
        .melodies
        .iter()
        .map(|m| encode_melody(m, n, cfg, rng_seed))
        .collect();
    NGramBatch::concat(&batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Melody;
    use proptest::prelude::*;

    fn note(onset: u32, duration: u32, pitch: u8, phrase_start: bool) -> NoteEvent {
        NoteEvent {
            onset,
            duration,
            pitch,
            phrase_start,
        }
    }

    fn active_bits(col: &[f64]) -> Vec<usize> {
        col.iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.5)
            .map(|(i, _)| i)
            .collect()
    }

    #[test]
    fn encodes_upward_third_after_quarter_step() {
        // prev C4 at 0 lasting 2 ticks, cur E4 at 2: |interval|=4, up,
        // IOI=2, OOI=0.
        let cfg = ViewpointConfig::default();
        let prev = note(0, 2, 60, true);
        let cur = note(2, 2, 64, false);
        let mut col = vec![0.0; cfg.note_width()];
        encode_note(Some(&prev), &cur, &cfg, &mut col);
        assert_eq!(active_bits(&col), vec![4, 13 + 2, 16 + 1, 32]);
    }

    #[test]
    fn encodes_first_note_defaults() {
        let cfg = ViewpointConfig::default();
        let cur = note(0, 2, 72, true);
        let mut col = vec![0.0; cfg.note_width()];
        encode_note(None, &cur, &cfg, &mut col);
        assert_eq!(active_bits(&col), vec![0, 13 + 1, 16, 32]);
    }

    #[test]
    fn encodes_repeated_pitch_after_rest() {
        // prev C4 at 0 lasting 2, cur C4 at 8: IOI=8, OOI=(8−2)/2=3 quavers.
        let cfg = ViewpointConfig::default();
        let prev = note(0, 2, 60, true);
        let cur = note(8, 2, 60, false);
        let mut col = vec![0.0; cfg.note_width()];
        encode_note(Some(&prev), &cur, &cfg, &mut col);
        assert_eq!(active_bits(&col), vec![0, 13 + 1, 16 + 7, 32 + 3]);
    }

    #[test]
    fn clamps_wide_leaps_long_gaps() {
        let cfg = ViewpointConfig::default();
        let prev = note(0, 2, 40, true);
        let cur = note(100, 2, 100, false);
        let mut col = vec![0.0; cfg.note_width()];
        encode_note(Some(&prev), &cur, &cfg, &mut col);
        // |interval| clamps to 12, IOI to 16 (bin 15), OOI to 8 quavers.
        assert_eq!(active_bits(&col), vec![12, 13 + 2, 16 + 15, 32 + 8]);
    }

    #[test]
    fn unigram_rows_have_no_padding() {
        let cfg = ViewpointConfig::default();
        let m = Melody::new(
            "t",
            vec![note(0, 2, 60, true), note(2, 2, 64, false)],
        )
        .unwrap();
        let batch = encode_melody(&m, 1, &cfg, 7);
        assert_eq!(batch.len(), 2);
        assert_eq!(batch.row_width(), 41);
        assert!(batch.padded_flags.iter().all(|&p| !p));
    }

    #[test]
    fn trigram_rows_pad_melody_prefix() {
        let cfg = ViewpointConfig::default();
        let m = Melody::new(
            "t",
            vec![note(0, 2, 60, true), note(2, 2, 64, false)],
        )
        .unwrap();
        let batch = encode_melody(&m, 3, &cfg, 7);
        assert_eq!(batch.len(), 2);
        assert_eq!(batch.row_width(), 3 * 41);
        assert_eq!(batch.padded_flags, vec![true, true]);
        // Row 0 pads positions 0 and 1; row 1 pads only position 0, so its
        // position-1 column is the real first note.
        let row1 = batch.rows.row(1);
        let col = &row1.as_slice().unwrap()[41..82];
        assert_eq!(active_bits(col), vec![0, 14, 16, 32]);
        assert_eq!(batch.row_meta, vec![("t".into(), 0), ("t".into(), 1)]);
    }

    #[test]
    fn same_seed_is_bit_identical_and_seeds_differ() {
        let cfg = ViewpointConfig::default();
        let m = Melody::new(
            "t",
            vec![note(0, 2, 60, true), note(2, 2, 64, false)],
        )
        .unwrap();
        let a = encode_melody(&m, 3, &cfg, 7);
        let b = encode_melody(&m, 3, &cfg, 7);
        assert_eq!(a.rows, b.rows);
        let c = encode_melody(&m, 3, &cfg, 8);
        assert_ne!(a.rows, c.rows);
    }

    #[test]
    fn corpus_batch_concatenates_in_order() {
        let cfg = ViewpointConfig::default();
        let m1 = Melody::new("a", vec![note(0, 2, 60, true)]).unwrap();
        let m2 = Melody::new("b", vec![note(0, 2, 64, true), note(2, 2, 65, false)]).unwrap();
        let corpus = Corpus {
            melodies: vec![m1, m2],
            source: None,
        };
        let batch = encode_corpus(&corpus, 2, &cfg, 1);
        assert_eq!(batch.len(), 3);
        assert_eq!(
            batch.row_meta,
            vec![("a".into(), 0), ("b".into(), 0), ("b".into(), 1)]
        );
    }

    #[test]
    fn pbm_dump_has_header_and_rows() {
        let cfg = ViewpointConfig::default();
        let m = Melody::new("t", vec![note(0, 2, 60, true)]).unwrap();
        let batch = encode_melody(&m, 1, &cfg, 7);
        let pbm = batch.to_pbm();
        assert!(pbm.starts_with("P1\n41 1\n"));
        assert_eq!(pbm.lines().count(), 3);
    }

    prop_compose! {
        fn arb_melody()(
            steps in prop::collection::vec((0u32..6, 1u32..5, 30u8..100), 1..20)
        ) -> Melody {
            let mut notes = Vec::with_capacity(steps.len());
            let mut onset = 0u32;
            for (i, &(gap, duration, pitch)) in steps.iter().enumerate() {
                notes.push(NoteEvent { onset, duration, pitch, phrase_start: i == 0 });
                onset += duration + gap;
            }
            Melody::new("p", notes).unwrap()
        }
    }

    proptest! {
        #[test]
        fn real_columns_are_one_hot_per_block(m in arb_melody(), n in 1usize..4) {
            let cfg = ViewpointConfig::default();
            let batch = encode_melody(&m, n, &cfg, 3);
            for (t, row) in batch.rows.rows().into_iter().enumerate() {
                let row = row.as_slice().unwrap();
                for pos in 0..n {
                    if t + pos + 1 < n {
                        continue;
                    }
                    let col = &row[pos * 41..(pos + 1) * 41];
                    let bits = active_bits(col);
                    prop_assert_eq!(bits.len(), 4);
                    prop_assert!(bits[0] < 13);
                    prop_assert!((13..16).contains(&bits[1]));
                    prop_assert!((16..32).contains(&bits[2]));
                    prop_assert!((32..41).contains(&bits[3]));
                }
            }
        }

        #[test]
        fn transposition_leaves_encoding_unchanged(m in arb_melody(), shift in -10i32..10) {
            let cfg = ViewpointConfig::default();
            let transposed: Vec<NoteEvent> = m.notes.iter().map(|n| {
                let pitch = i32::from(n.pitch) + shift;
                prop_assume!((0..=127).contains(&pitch));
                Ok(NoteEvent { pitch: pitch as u8, ..*n })
            }).collect::<Result<_, TestCaseError>>()?;
            let shifted = Melody::new("p", transposed).unwrap();
            let a = encode_melody(&m, 2, &cfg, 3);
            let b = encode_melody(&shifted, 2, &cfg, 3);
            prop_assert_eq!(a.rows, b.rows);
        }
    }
}
