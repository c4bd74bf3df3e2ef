//! Boundary selection from a BSP by a weighted-threshold peak rule.
//!
//! A note at 1-based position n ≥ 2 is a candidate peak when its strength
//! strictly exceeds the left neighbour and is at least the right neighbour
//! (vacuous at the end). A candidate becomes a boundary when
//!
//! ```text
//! S_n > k · sqrt( Σ_{i<n} (w_i·S_i − m)² / Σ_{i<n} w_i ) + m,
//! m = Σ_{i<n} w_i·S_i / Σ_{i<n} w_i,    w_i = i
//! ```
//!
//! so the threshold adapts to the weighted history of the profile, with
//! recent notes weighted most. Two deviation forms are implemented. The
//! literal form above keeps the weight inside the square
//! ([`VarianceMode::AsPrinted`], the [`PeakPickConfig`] default); because
//! w_i·S_i grows roughly linearly in i on a near-flat profile, its deviation
//! term grows with position and on realistic IC profiles (tens of notes,
//! strengths around 10 bits) the threshold rises past every interior peak.
//! The conventional weighted variance Σ w_i·(S_i − m)²
//! ([`VarianceMode::StandardWeighted`]) is scale- and length-stable and is
//! what the published threshold-multiplier sets (k near 1 raw, k near 0.3
//! smoothed) presuppose; the evaluation pipeline and CLI default to it. The
//! first note is never a boundary and the final note always is (phrases end
//! with the melody).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalharness::{prf1, Prf1};
use crate::infocontent::Bsp;

/// Threshold multipliers swept for raw-IC profiles.
pub const RAW_K_SET: [f64; 7] = [0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 1.00];

/// Threshold multipliers swept for pseudo-supervised (smoothed) profiles,
/// whose flatter curves need smaller multipliers.
pub const SMOOTHED_K_SET: [f64; 7] = [0.24, 0.26, 0.28, 0.30, 0.32, 0.34, 0.36];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PeakPickError {
    #[error("cannot pick boundaries on an empty BSP")]
    EmptyBsp,
    #[error("k sweep needs at least one k value")]
    EmptyKSet,
}

/// Which deviation formula the threshold uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMode {
    /// Σ (w_i·S_i − m)²: weights inside the square.
    #[default]
    AsPrinted,
    /// Σ w_i·(S_i − m)²: conventional weighted variance.
    StandardWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakPickConfig {
    /// Threshold multiplier, must be positive.
    pub k: f64,
    pub variance: VarianceMode,
}

impl Default for PeakPickConfig {
    fn default() -> Self {
        // Midpoint of the raw-IC sweep set.
        PeakPickConfig {
            k: 0.85,
            variance: VarianceMode::AsPrinted,
        }
    }
}

/// The adaptive threshold a candidate at 1-based position `n` must exceed.
/// Exposed for diagnostics; `n` must satisfy 2 ≤ n ≤ values.len().
pub fn weighted_threshold(values: &[f64], n: usize, cfg: &PeakPickConfig) -> f64 {
    assert!(n >= 2 && n <= values.len(), "threshold needs history");
    let mut w_sum = 0.0;
    let mut ws_sum = 0.0;
    for i in 1..n {
        let w = i as f64;
        w_sum += w;
        ws_sum += w * values[i - 1];
    }
    let m = ws_sum / w_sum;
    let mut dev_sum = 0.0;
    for i in 1..n {
        let (w, s) = (i as f64, values[i - 1]);
        let d = match cfg.variance {
            VarianceMode::AsPrinted => (w * s - m) * (w * s - m),
            VarianceMode::StandardWeighted => w * (s - m) * (s - m),
        };
        dev_sum += d;
    }
    cfg.k * (dev_sum / w_sum).sqrt() + m
}

/// Binary boundary vector for one BSP: 1 at kept peaks and at the final
/// note, 0 elsewhere (always 0 at the first note of a ≥ 2-note melody).
pub fn pick_boundaries(bsp: &Bsp, cfg: &PeakPickConfig) -> Result<Vec<u8>, PeakPickError> {
    assert!(cfg.k > 0.0, "threshold multiplier must be positive");
    let s = &bsp.values;
    if s.is_empty() {
        return Err(PeakPickError::EmptyBsp);
    }
    let len = s.len();
    let mut out = vec![0u8; len];
    for n in 2..=len {
        let here = s[n - 1];
        let is_peak = here > s[n - 2] && (n == len || here >= s[n]);
        if is_peak && here > weighted_threshold(s, n, cfg) {
            out[n - 1] = 1;
        }
    }
    out[len - 1] = 1;
    Ok(out)
}

/// One row of a k sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KSweepEntry {
    pub k: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Sweep outcome: the full per-k table and the argmax, ties broken toward
/// the smaller k.
#[derive(Debug, Clone, PartialEq)]
pub struct KSweep {
    pub best_k: f64,
    pub entries: Vec<KSweepEntry>,
}

impl KSweep {
    pub fn best_entry(&self) -> &KSweepEntry {
        self.entries
            .iter()
            .find(|e| e.k == self.best_k)
            .expect("best_k is always taken from entries")
    }
}

/// Evaluate pooled F1 for every k against ground truth. BSPs and truth
/// vectors must be aligned one-to-one with equal per-melody lengths.
pub fn sweep_k(
    bsps: &[Bsp],
    truths: &[Vec<u8>],
    k_values: &[f64],
    variance: VarianceMode,
) -> Result<KSweep, PeakPickError> {
    if k_values.is_empty() {
        return Err(PeakPickError::EmptyKSet);
    }
    assert_eq!(bsps.len(), truths.len(), "one truth vector per BSP");
    let mut entries = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let cfg = PeakPickConfig { k, variance };
        let preds: Vec<Vec<u8>> = bsps
            .iter()
            .map(|b| pick_boundaries(b, &cfg))
            .collect::<Result<_, _>>()?;
        let Prf1 {
            precision,
            recall,
            f1,
            ..
        } = prf1(&preds, truths).expect("sweep inputs are aligned");
        entries.push(KSweepEntry {
            k,
            precision,
            recall,
            f1,
        });
    }
    let mut best = entries[0];
    for e in &entries[1..] {
        if e.f1 > best.f1 || (e.f1 == best.f1 && e.k < best.k) {
            best = *e;
        }
    }
    Ok(KSweep {
        best_k: best.k,
        entries,
    })
}
