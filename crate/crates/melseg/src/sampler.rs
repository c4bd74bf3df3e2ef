//! Monte-Carlo estimation of marginal and conditional visible-configuration
//! probabilities via fantasy particles and clamped Gibbs sampling.
//!
//! Each estimate runs N particles for a fixed number of full Gibbs sweeps
//! (hidden states sampled binarily, visible probabilities binarized between
//! sweeps) and reads out the final-sweep visible probabilities q_i:
//! p̂(v) = (1/N) Σ_i Π_j q_ij^{v_j} (1 − q_ij)^{1−v_j}, the product running
//! over the free bits only. Clamped bits hold their input values through
//! every sweep. Particle RNG streams are keyed by (row seed, particle
//! index), so estimates do not depend on evaluation order or thread count.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{derive_seed, id_hash, NGramBatch};
use crate::rbm::RbmModel;

/// Estimates below this floor are clamped up before downstream logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("free index set is empty")]
    EmptyFreeSet,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Fantasy-particle budget for one estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_particles: usize,
    pub gibbs_steps: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_particles: 150,
            gibbs_steps: 150,
            seed: 0,
        }
    }
}

fn clamped_intact(
    v: &Array2<f64>,
    targets: ArrayView2<f64>,
    free: &[usize],
    particles: usize,
) -> bool {
    let mut is_free = vec![false; v.ncols()];
    for &c in free {
        is_free[c] = true;
    }
    v.rows().into_iter().enumerate().all(|(idx, pv)| {
        let t = targets.row(idx / particles);
        pv.iter()
            .zip(t.iter())
            .zip(&is_free)
            .all(|((&a, &b), &f)| f || a == b)
    })
}

/// Run one particle population for every target row and return the per-row
/// probability estimates of the free bits given the clamped bits.
///
/// All rows share the free set and evolve in one system so the hidden and
/// visible updates are two matrix products per sweep. Row i's particles
/// draw from streams keyed by (row_seeds[i], particle); the readout sums
/// particles in index order.
fn run_population(
    model: &RbmModel,
    targets: ArrayView2<f64>,
    free: &[usize],
    row_seeds: &[u64],
    cfg: &SamplerConfig,
) -> Vec<f64> {
    assert!(cfg.n_particles >= 1, "need at least one particle");
    assert!(cfg.gibbs_steps >= 1, "need at least one sweep");
    assert_eq!(targets.nrows(), row_seeds.len());
    let r = model.r();
    let rows = targets.nrows();
    let n = cfg.n_particles;
    let total = rows * n;
    let mut rngs: Vec<ChaCha8Rng> = (0..total)
        .map(|idx| {
            let seed = derive_seed(&[row_seeds[idx / n], (idx % n) as u64]);
            ChaCha8Rng::seed_from_u64(seed)
        })
        .collect();

    let mut v = Array2::zeros((total, r));
    for (idx, mut pv) in v.rows_mut().into_iter().enumerate() {
        pv.assign(&targets.row(idx / n));
        let rng = &mut rngs[idx];
        for &c in free {
            pv[c] = f64::from(rng.gen::<bool>());
        }
    }

    let mut q = Array2::zeros((total, r));
    for s in 0..cfg.gibbs_steps {
        let mut h = model.hidden_probs_batch(v.view());
        for (idx, mut hrow) in h.rows_mut().into_iter().enumerate() {
            let rng = &mut rngs[idx];
            for x in hrow.iter_mut() {
                *x = f64::from(rng.gen::<f64>() < *x);
            }
        }
        let v_probs = model.visible_probs_batch(h.view());
        if s + 1 == cfg.gibbs_steps {
            q = v_probs;
            break;
        }
        for (idx, vp) in v_probs.rows().into_iter().enumerate() {
            let rng = &mut rngs[idx];
            let mut vrow = v.row_mut(idx);
            for &c in free {
                vrow[c] = f64::from(rng.gen::<f64>() < vp[c]);
            }
        }
        debug_assert!(
            clamped_intact(&v, targets, free, n),
            "clamped bits drifted during sweep {s}"
        );
    }

    let mut out = Vec::with_capacity(rows);
    for row in 0..rows {
        let t = targets.row(row);
        let mut acc = 0.0;
        for p in 0..n {
            let qrow = q.row(row * n + p);
            let mut prod = 1.0;
            for &c in free {
                prod *= if t[c] > 0.5 { qrow[c] } else { 1.0 - qrow[c] };
            }
            acc += prod;
        }
        out.push((acc / n as f64).clamp(0.0, 1.0));
    }
    out
}

/// Estimate the marginal probability p(v) of a full visible configuration.
pub fn estimate_prob(
    model: &RbmModel,
    v: ArrayView1<f64>,
    cfg: &SamplerConfig,
) -> Result<f64, SamplerError> {
    if v.len() != model.r() {
        return Err(SamplerError::DimensionMismatch {
            expected: model.r(),
            got: v.len(),
        });
    }
    let free: Vec<usize> = (0..model.r()).collect();
    let targets = v.insert_axis(Axis(0));
    Ok(run_population(model, targets, &free, &[cfg.seed], cfg)[0])
}

/// Estimate p(v at free indices | v at the remaining, clamped indices).
pub fn estimate_conditional(
    model: &RbmModel,
    v: ArrayView1<f64>,
    free_index_set: &[usize],
    cfg: &SamplerConfig,
) -> Result<f64, SamplerError> {
    if v.len() != model.r() {
        return Err(SamplerError::DimensionMismatch {
            expected: model.r(),
            got: v.len(),
        });
    }
    if free_index_set.is_empty() {
        return Err(SamplerError::EmptyFreeSet);
    }
    let mut free = free_index_set.to_vec();
    free.sort_unstable();
    free.dedup();
    if let Some(&last) = free.last() {
        if last >= model.r() {
            return Err(SamplerError::DimensionMismatch {
                expected: model.r(),
                got: last + 1,
            });
        }
    }
    let targets = v.insert_axis(Axis(0));
    Ok(run_population(model, targets, &free, &[cfg.seed], cfg)[0])
}

/// Probability of a row's last note block given its n−1 context blocks.
/// For n = 1 the block is the whole row and this is the unconditioned
/// marginal. The result is floored at [`PROB_FLOOR`].
pub fn conditional_note_prob(
    model: &RbmModel,
    row: ArrayView1<f64>,
    n: usize,
    cfg: &SamplerConfig,
) -> Result<f64, SamplerError> {
    assert!(n >= 1, "n-gram length must be at least 1");
    if row.len() != model.r() {
        return Err(SamplerError::DimensionMismatch {
            expected: model.r(),
            got: row.len(),
        });
    }
    assert!(model.r() % n == 0, "row width must split into n blocks");
    let block = model.r() / n;
    let free: Vec<usize> = (model.r() - block..model.r()).collect();
    estimate_conditional(model, row, &free, cfg).map(|p| p.max(PROB_FLOOR))
}

/// Conditional probability of the last note block for every batch row,
/// evaluated as one particle population.
///
/// Row streams are keyed by (seed, melody id, note index), so the estimate
/// for a note does not depend on which other rows share the call.
pub fn conditional_note_probs(
    model: &RbmModel,
    batch: &NGramBatch,
    cfg: &SamplerConfig,
) -> Result<Vec<f64>, SamplerError> {
    if batch.row_width() != model.r() {
        return Err(SamplerError::DimensionMismatch {
            expected: model.r(),
            got: batch.row_width(),
        });
    }
    if batch.is_empty() {
        return Ok(Vec::new());
    }
    assert!(batch.n >= 1, "n-gram length must be at least 1");
    let block = model.r() / batch.n;
    let free: Vec<usize> = (model.r() - block..model.r()).collect();
    let row_seeds: Vec<u64> = batch
        .row_meta
        .iter()
        .map(|(id, t)| derive_seed(&[cfg.seed, id_hash(id), *t as u64]))
        .collect();
    let probs = run_population(model, batch.rows.view(), &free, &row_seeds, cfg);
    Ok(probs.into_iter().map(|p| p.max(PROB_FLOOR)).collect())
}

/// Seed for one note's estimate, shared by the batched and per-row paths.
pub fn note_seed(seed: u64, melody_id: &str, note_index: usize) -> u64 {
    derive_seed(&[seed, id_hash(melody_id), note_index as u64])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::ViewpointConfig;
    use crate::rbm::{train_fpcd, TrainConfig};
    use ndarray::{Array1, Array2};

    fn toy_model(r: usize, q: usize, scale: f64, phase: f64) -> RbmModel {
        let w = Array2::from_shape_fn((r, q), |(i, j)| {
            scale * ((i * q + j) as f64 + phase).sin()
        });
        let a = Array1::from_shape_fn(r, |i| 0.3 * ((i as f64) * 1.7 + phase).cos());
        let b = Array1::from_shape_fn(q, |j| 0.2 * ((j as f64) * 2.3 - phase).sin());
        RbmModel::new(w, a, b)
    }

    fn config(code: usize, r: usize) -> Array1<f64> {
        Array1::from_shape_fn(r, |i| f64::from(code >> i & 1 == 1))
    }

    #[test]
    fn zero_model_estimate_is_exact_quarter() {
        // Zero weights give q_ij = 0.5 exactly, so every particle
        // contributes 0.25 for a 2-bit configuration.
        let model = RbmModel::new(Array2::zeros((2, 3)), Array1::zeros(2), Array1::zeros(3));
        let cfg = SamplerConfig {
            n_particles: 50,
            gibbs_steps: 5,
            seed: 1,
        };
        let p = estimate_prob(&model, config(0b01, 2).view(), &cfg).unwrap();
        assert!((p - 0.25).abs() < 1e-15);
    }

    #[test]
    fn saturated_model_estimates_near_one() {
        let model = RbmModel::new(
            Array2::zeros((3, 2)),
            Array1::from(vec![30.0, 30.0, 30.0]),
            Array1::zeros(2),
        );
        let cfg = SamplerConfig {
            n_particles: 20,
            gibbs_steps: 10,
            seed: 3,
        };
        let p = estimate_prob(&model, config(0b111, 3).view(), &cfg).unwrap();
        assert!(p > 0.99, "{p}");
    }

    #[test]
    fn estimates_track_exact_probabilities() {
        let model = toy_model(6, 4, 0.8, 0.0);
        let cfg = SamplerConfig {
            n_particles: 800,
            gibbs_steps: 80,
            seed: 5,
        };
        for code in 0..64 {
            let v = config(code, 6);
            let exact = model.exact_prob(v.view()).unwrap();
            if exact < 0.01 {
                continue;
            }
            let est = estimate_prob(&model, v.view(), &cfg).unwrap();
            let rel = (est - exact).abs() / exact;
            assert!(rel < 0.2, "code {code}: est {est}, exact {exact}");
        }
    }

    #[test]
    fn error_shrinks_with_more_particles() {
        let model = toy_model(6, 4, 1.2, 2.0);
        let mae = |particles: usize| {
            let cfg = SamplerConfig {
                n_particles: particles,
                gibbs_steps: 60,
                seed: 9,
            };
            let mut total = 0.0;
            for code in 0..64 {
                let v = config(code, 6);
                let exact = model.exact_prob(v.view()).unwrap();
                let est = estimate_prob(&model, v.view(), &cfg).unwrap();
                total += (est - exact).abs();
            }
            total / 64.0
        };
        let coarse = mae(10);
        let fine = mae(1000);
        assert!(fine < coarse * 0.5, "coarse {coarse}, fine {fine}");
    }

    #[test]
    fn zero_model_conditional_single_free_bit_is_half() {
        let model = RbmModel::new(Array2::zeros((4, 2)), Array1::zeros(4), Array1::zeros(2));
        let cfg = SamplerConfig {
            n_particles: 30,
            gibbs_steps: 8,
            seed: 2,
        };
        let v = config(0b1010, 4);
        let p = estimate_conditional(&model, v.view(), &[2], &cfg).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn free_set_of_all_bits_matches_estimate_prob() {
        let model = toy_model(5, 3, 0.9, 1.0);
        let cfg = SamplerConfig {
            n_particles: 40,
            gibbs_steps: 12,
            seed: 7,
        };
        let v = config(0b10110, 5);
        let all: Vec<usize> = (0..5).collect();
        let a = estimate_prob(&model, v.view(), &cfg).unwrap();
        let b = estimate_conditional(&model, v.view(), &all, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conditional_tracks_exact_conditional() {
        let model = toy_model(6, 4, 1.1, 3.0);
        let cfg = SamplerConfig {
            n_particles: 800,
            gibbs_steps: 80,
            seed: 13,
        };
        let v = config(0b011010, 6);
        let clamped = [
            Some(false),
            None,
            Some(false),
            None,
            None,
            Some(false),
        ];
        let table = model.exact_conditional(&clamped).unwrap();
        // v = 0b011010 sets bits 1, 3 and 4: all three free bits are on.
        let exact = table.prob_of(&[true, true, true]);
        let est = estimate_conditional(&model, v.view(), &[1, 3, 4], &cfg).unwrap();
        let rel = (est - exact).abs() / exact;
        assert!(rel < 0.2, "est {est}, exact {exact}");
    }

    #[test]
    fn same_seed_reproduces_estimates() {
        let model = toy_model(6, 4, 0.7, 4.0);
        let cfg = SamplerConfig {
            n_particles: 100,
            gibbs_steps: 30,
            seed: 21,
        };
        let v = config(0b110011, 6);
        let a = estimate_prob(&model, v.view(), &cfg).unwrap();
        let b = estimate_prob(&model, v.view(), &cfg).unwrap();
        assert_eq!(a, b);
        let other = SamplerConfig { seed: 22, ..cfg };
        let c = estimate_prob(&model, v.view(), &other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_free_set_is_rejected() {
        let model = toy_model(4, 2, 0.5, 0.0);
        let cfg = SamplerConfig::default();
        assert!(matches!(
            estimate_conditional(&model, config(0, 4).view(), &[], &cfg),
            Err(SamplerError::EmptyFreeSet)
        ));
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let model = toy_model(4, 2, 0.5, 0.0);
        let cfg = SamplerConfig::default();
        assert!(matches!(
            estimate_prob(&model, config(0, 3).view(), &cfg),
            Err(SamplerError::DimensionMismatch { expected: 4, got: 3 })
        ));
        assert!(matches!(
            estimate_conditional(&model, config(0, 4).view(), &[7], &cfg),
            Err(SamplerError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unigram_conditional_equals_marginal_estimate() {
        let model = toy_model(6, 3, 0.6, 1.0);
        let cfg = SamplerConfig {
            n_particles: 60,
            gibbs_steps: 15,
            seed: 4,
        };
        let v = config(0b010101, 6);
        let marginal = estimate_prob(&model, v.view(), &cfg).unwrap();
        let conditional = conditional_note_prob(&model, v.view(), 1, &cfg).unwrap();
        assert_eq!(marginal, conditional);
    }

    #[test]
    fn impossible_target_is_floored() {
        let model = RbmModel::new(
            Array2::zeros((2, 2)),
            Array1::from(vec![-40.0, -40.0]),
            Array1::zeros(2),
        );
        let cfg = SamplerConfig {
            n_particles: 10,
            gibbs_steps: 5,
            seed: 6,
        };
        let p = conditional_note_prob(&model, config(0b11, 2).view(), 1, &cfg).unwrap();
        assert_eq!(p, PROB_FLOOR);
    }

    #[test]
    fn overfit_model_gives_confident_conditional() {
        // One repeated 2-block instance; after training, the conditional of
        // its last block given its first should be close to 1.
        let pattern = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let rows = Array2::from_shape_fn((32, 6), |(_, j)| pattern[j]);
        let batch = NGramBatch {
            n: 2,
            viewpoint: ViewpointConfig::default(),
            rows,
            row_meta: (0..32).map(|i| ("train".into(), i)).collect(),
            padded_flags: vec![false; 32],
        };
        let train_cfg = TrainConfig {
            epochs: 200,
            batch_size: 8,
            learning_rate: 0.08,
            l2: 0.0,
            sparsity_phi: 0.0,
            dropout_hidden: 0.0,
            dropout_visible: 0.0,
            n_chains: 20,
            seed: 17,
            ..TrainConfig::default()
        };
        let (model, _) = train_fpcd(&batch, 4, &train_cfg).unwrap();
        let cfg = SamplerConfig {
            n_particles: 300,
            gibbs_steps: 100,
            seed: 8,
        };
        let v = Array1::from(pattern.to_vec());
        let p = conditional_note_prob(&model, v.view(), 2, &cfg).unwrap();
        assert!(p > 0.9, "{p}");
    }

    #[test]
    fn batched_rows_match_single_row_estimates() {
        let model = toy_model(6, 4, 0.9, 2.5);
        let cfg = SamplerConfig {
            n_particles: 40,
            gibbs_steps: 20,
            seed: 31,
        };
        let rows = Array2::from_shape_fn((3, 6), |(i, j)| f64::from((i + j) % 2 == 0));
        let batch = NGramBatch {
            n: 2,
            viewpoint: ViewpointConfig::default(),
            rows: rows.clone(),
            row_meta: vec![("m".into(), 0), ("m".into(), 1), ("x".into(), 0)],
            padded_flags: vec![false; 3],
        };
        let batched = conditional_note_probs(&model, &batch, &cfg).unwrap();
        for (i, (id, t)) in batch.row_meta.iter().enumerate() {
            let row_cfg = SamplerConfig {
                seed: note_seed(cfg.seed, id, *t),
                ..cfg
            };
            let single = conditional_note_prob(&model, rows.row(i), 2, &row_cfg).unwrap();
            assert_eq!(batched[i], single, "row {i}");
        }
    }
}
