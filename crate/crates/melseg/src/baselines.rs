//! Reference segmenters: trivial bounds, the rest rule, and digram
//! statistics.
//!
//! Always and Never bracket the achievable F1 range, GPR 2a places a
//! boundary wherever a rest precedes a note, and the digram baselines
//! score each transition by its training-corpus statistics: transition
//! probability, strength −log2 P̂(s_t | s_{t−1}), or pointwise mutual
//! information, strength −log2( P̂(s_{t−1}, s_t) / (P̂(s_{t−1})·P̂(s_t)) ).
//! Digram profiles are ordinary BSPs and flow through the standard peak
//! picker, so every statistical baseline shares the encoder's symbol
//! quantization and the main pipeline's boundary rule.

use std::collections::HashMap;

use thiserror::Error;

use crate::corpus::Melody;
use crate::encoding::{note_symbol, NoteSymbol, ViewpointConfig};
use crate::infocontent::Bsp;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BaselineError {
    #[error("digram statistics need at least one training melody")]
    EmptyTrainingSet,
}

/// Every note after the first is a boundary. Recall 1 by construction;
/// precision equals the corpus boundary density.
pub fn baseline_always(melody: &Melody) -> Vec<u8> {
    let mut out = vec![1u8; melody.notes.len()];
    if out.len() >= 2 {
        out[0] = 0;
    }
    out
}

/// Only the forced final boundary.
pub fn baseline_never(melody: &Melody) -> Vec<u8> {
    let mut out = vec![0u8; melody.notes.len()];
    *out.last_mut().unwrap() = 1;
    out
}

/// Gestalt rest rule: note t ≥ 1 is a boundary iff a rest precedes it
/// (OOI > 0 ticks); the final note is forced like everywhere else.
pub fn baseline_gpr2a(melody: &Melody) -> Vec<u8> {
    let mut out = vec![0u8; melody.notes.len()];
    for t in 1..melody.notes.len() {
        if melody.notes[t].onset > melody.notes[t - 1].offset() {
            out[t] = 1;
        }
    }
    *out.last_mut().unwrap() = 1;
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DigramMethod {
    /// Transition probability: −log2 P̂(s_t | s_{t−1}).
    Tp,
    /// Pointwise mutual information: −log2( P̂(pair) / (P̂·P̂) ).
    Pmi,
}

/// Digram and unigram counts over quantized note symbols, built from
/// training melodies only. Probabilities use add-one smoothing over the
/// full symbol alphabet (and its square for pairs), so unseen events stay
/// finite.
#[derive(Debug, Clone)]
pub struct DigramStats {
    viewpoint: ViewpointConfig,
    pair_counts: HashMap<(NoteSymbol, NoteSymbol), u64>,
    unigram_counts: HashMap<NoteSymbol, u64>,
    total_unigrams: u64,
    total_pairs: u64,
}

impl DigramStats {
    pub fn from_melodies(
        melodies: &[Melody],
        viewpoint: &ViewpointConfig,
    ) -> Result<DigramStats, BaselineError> {
        if melodies.is_empty() {
            return Err(BaselineError::EmptyTrainingSet);
        }
        let mut stats = DigramStats {
            viewpoint: *viewpoint,
            pair_counts: HashMap::new(),
            unigram_counts: HashMap::new(),
            total_unigrams: 0,
            total_pairs: 0,
        };
        for melody in melodies {
            let symbols = melody_symbols(melody, viewpoint);
            for window in symbols.windows(2) {
                *stats.pair_counts.entry((window[0], window[1])).or_insert(0) += 1;
                stats.total_pairs += 1;
            }
            for s in symbols {
                *stats.unigram_counts.entry(s).or_insert(0) += 1;
                stats.total_unigrams += 1;
            }
        }
        Ok(stats)
    }

    /// Size of the symbol alphabet the smoothing spreads mass over.
    pub fn alphabet_size(&self) -> u64 {
        let v = &self.viewpoint;
        (v.abs_interval_bins * v.contour_bins * v.ioi_bins * v.ooi_bins) as u64
    }

    pub fn pair_count(&self, prev: &NoteSymbol, cur: &NoteSymbol) -> u64 {
        self.pair_counts.get(&(*prev, *cur)).copied().unwrap_or(0)
    }

    pub fn unigram_count(&self, s: &NoteSymbol) -> u64 {
        self.unigram_counts.get(s).copied().unwrap_or(0)
    }

    /// Boundary strength of the transition prev → cur. Both methods use
    /// negative logs so that higher means more boundary-like; PMI values
    /// below 0 (transitions more likely than chance) are clamped to keep
    /// BSP values nonnegative.
    pub fn strength(&self, prev: &NoteSymbol, cur: &NoteSymbol, method: DigramMethod) -> f64 {
        let v = self.alphabet_size() as f64;
        let pair = self.pair_count(prev, cur) as f64;
        match method {
            DigramMethod::Tp => {
                let context = self.unigram_count(prev) as f64;
                -((pair + 1.0) / (context + v)).log2()
            }
            DigramMethod::Pmi => {
                let p_pair = (pair + 1.0) / (self.total_pairs as f64 + v * v);
                let p_prev =
                    (self.unigram_count(prev) as f64 + 1.0) / (self.total_unigrams as f64 + v);
                let p_cur =
                    (self.unigram_count(cur) as f64 + 1.0) / (self.total_unigrams as f64 + v);
                (-(p_pair / (p_prev * p_cur)).log2()).max(0.0)
            }
        }
    }
}

fn melody_symbols(melody: &Melody, viewpoint: &ViewpointConfig) -> Vec<NoteSymbol> {
    let notes = &melody.notes;
    (0..notes.len())
        .map(|t| {
            let prev = t.checked_sub(1).map(|p| &notes[p]);
            note_symbol(prev, &notes[t], viewpoint)
        })
        .collect()
}

/// Digram boundary-strength profile for one melody: strength per
/// transition, 0 at the first note.
pub fn baseline_digram(stats: &DigramStats, melody: &Melody, method: DigramMethod) -> Bsp {
    let symbols = melody_symbols(melody, &stats.viewpoint);
    let mut values = vec![0.0];
    for window in symbols.windows(2) {
        values.push(stats.strength(&window[0], &window[1], method));
    }
    Bsp::new(melody.id.clone(), values)
}
