//! Binary-binary restricted Boltzmann machine.
//!
//! The model assigns each visible/hidden configuration (v, h) the energy
//! E(v, h) = −aᵀv − bᵀh − vᵀWh and each visible configuration the free
//! energy F(v) = −aᵀv − Σ_j log(1 + exp(b_j + (Wᵀv)_j)), so that
//! p(v) = exp(−F(v)) / Z. Small models (r + q ≤ 20) support exact
//! probabilities and conditionals by enumeration; these serve as oracles
//! for the Monte-Carlo sampler. Training is fast persistent contrastive
//! divergence with momentum, L2 decay, a sparsity/selectivity penalty and
//! dropout on both layers.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{NGramBatch, ViewpointConfig};

/// Exact enumeration is limited to models with r + q at most this size.
pub const ENUMERATION_BUDGET: usize = 20;

#[derive(Debug, Error)]
pub enum RbmError {
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model too large for enumeration: r={r}, q={q}, budget r+q <= {ENUMERATION_BUDGET}")]
    TooLargeForEnumeration { r: usize, q: usize },
    #[error("free index set is empty")]
    EmptyFreeSet,
    #[error("training stream has no rows")]
    EmptyStream,
    #[error("non-finite {what} gradient at epoch {epoch}, batch {batch}")]
    NonFiniteGradient {
        epoch: usize,
        batch: usize,
        what: &'static str,
    },
    #[error("invalid model file: {0}")]
    InvalidModelFile(String),
}

/// RBM parameters. Fast weights exist only to drive the persistent chains
/// during training and are zero in any trained or hand-built model.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmModel {
    /// Visible-to-hidden weights, r × q.
    pub w: Array2<f64>,
    /// Visible biases, length r.
    pub a: Array1<f64>,
    /// Hidden biases, length q.
    pub b: Array1<f64>,
    pub w_fast: Array2<f64>,
    pub a_fast: Array1<f64>,
    pub b_fast: Array1<f64>,
    pub seed: u64,
    pub epochs: usize,
    /// n-gram length the model was trained on; 0 for hand-built models.
    pub n: usize,
    pub viewpoint: ViewpointConfig,
}

/// FPCD hyperparameters. Defaults follow the reference training recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial learning rate, linearly annealed to 0 across epochs.
    pub learning_rate: f64,
    pub momentum: f64,
    /// Fast-weight learning rate, ramped linearly across epochs.
    pub fast_lr_start: f64,
    pub fast_lr_end: f64,
    /// Multiplicative fast-weight decay applied after every update.
    pub fast_decay: f64,
    /// L2 penalty on the slow weight matrix only.
    pub l2: f64,
    /// Target mean activation for the sparsity/selectivity penalty.
    pub sparsity_mu: f64,
    /// Strength of the sparsity/selectivity penalty.
    pub sparsity_phi: f64,
    pub dropout_hidden: f64,
    pub dropout_visible: f64,
    /// Number of persistent fantasy chains.
    pub n_chains: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 250,
            learning_rate: 0.0085,
            momentum: 0.6,
            fast_lr_start: 0.002,
            fast_lr_end: 0.007,
            fast_decay: 0.95,
            l2: 0.0035,
            sparsity_mu: 0.04,
            sparsity_phi: 0.65,
            dropout_hidden: 0.5,
            dropout_visible: 0.2,
            n_chains: 100,
            seed: 0,
        }
    }
}

/// Per-epoch diagnostics recorded during training.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    /// Mean free energy of the probe rows after each epoch.
    pub probe_free_energy: Vec<f64>,
}

/// Gradient of the free energy with respect to each parameter.
#[derive(Debug, Clone)]
pub struct FreeEnergyGrad {
    pub w: Array2<f64>,
    pub a: Array1<f64>,
    pub b: Array1<f64>,
}

/// Exact conditional distribution over the free visible bits.
///
/// `probs[mask]` is the probability of the completion where bit k of
/// `mask` gives the value of visible unit `free_indices[k]`. Clamping
/// every bit yields the point-mass table with no free indices.
#[derive(Debug, Clone)]
pub struct ConditionalTable {
    pub free_indices: Vec<usize>,
    pub probs: Vec<f64>,
}

impl ConditionalTable {
    /// Probability of one assignment to the free bits, given in
    /// `free_indices` order.
    pub fn prob_of(&self, free_values: &[bool]) -> f64 {
        assert_eq!(free_values.len(), self.free_indices.len());
        let mask: usize = free_values
            .iter()
            .enumerate()
            .map(|(k, &bit)| usize::from(bit) << k)
            .sum();
        self.probs[mask]
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// log(1 + exp(x)) without overflow for large |x|.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid_mat(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(sigmoid)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

fn free_energy_raw(w: &Array2<f64>, a: &Array1<f64>, b: &Array1<f64>, v: ArrayView1<f64>) -> f64 {
    let z = w.t().dot(&v) + b;
    -a.dot(&v) - z.iter().map(|&x| softplus(x)).sum::<f64>()
}

impl RbmModel {
    /// Hand-built model with zero fast weights and no training metadata.
    pub fn new(w: Array2<f64>, a: Array1<f64>, b: Array1<f64>) -> RbmModel {
        assert_eq!(w.nrows(), a.len(), "visible bias length");
        assert_eq!(w.ncols(), b.len(), "hidden bias length");
        let (r, q) = (w.nrows(), w.ncols());
        RbmModel {
            w,
            a,
            b,
            w_fast: Array2::zeros((r, q)),
            a_fast: Array1::zeros(r),
            b_fast: Array1::zeros(q),
            seed: 0,
            epochs: 0,
            n: 0,
            viewpoint: ViewpointConfig::default(),
        }
    }

    pub fn r(&self) -> usize {
        self.w.nrows()
    }

    pub fn q(&self) -> usize {
        self.w.ncols()
    }

    fn check_len(&self, got: usize, expected: usize) -> Result<(), RbmError> {
        if got == expected {
            Ok(())
        } else {
            Err(RbmError::DimensionMismatch { expected, got })
        }
    }

    fn check_enumerable(&self) -> Result<(), RbmError> {
        if self.r() + self.q() > ENUMERATION_BUDGET {
            Err(RbmError::TooLargeForEnumeration {
                r: self.r(),
                q: self.q(),
            })
        } else {
            Ok(())
        }
    }

    /// P(h_j = 1 | v) = sigmoid(b_j + (Wᵀv)_j). A dropout mask of 0/1
    /// factors forces masked units to 0.
    pub fn hidden_probs(
        &self,
        v: ArrayView1<f64>,
        dropout_mask: Option<&[f64]>,
    ) -> Result<Array1<f64>, RbmError> {
        self.check_len(v.len(), self.r())?;
        let mut p = (self.w.t().dot(&v) + &self.b).mapv(sigmoid);
        if let Some(mask) = dropout_mask {
            self.check_len(mask.len(), self.q())?;
            for (x, &m) in p.iter_mut().zip(mask) {
                *x *= m;
            }
        }
        Ok(p)
    }

    /// P(v_i = 1 | h) = sigmoid(a_i + (Wh)_i), with optional mask.
    pub fn visible_probs(
        &self,
        h: ArrayView1<f64>,
        dropout_mask: Option<&[f64]>,
    ) -> Result<Array1<f64>, RbmError> {
        self.check_len(h.len(), self.q())?;
        let mut p = (self.w.dot(&h) + &self.a).mapv(sigmoid);
        if let Some(mask) = dropout_mask {
            self.check_len(mask.len(), self.r())?;
            for (x, &m) in p.iter_mut().zip(mask) {
                *x *= m;
            }
        }
        Ok(p)
    }

    /// Hidden conditionals for a batch of visible rows, one row each.
    pub fn hidden_probs_batch(&self, v: ArrayView2<f64>) -> Array2<f64> {
        debug_assert_eq!(v.ncols(), self.r());
        sigmoid_mat(&(v.dot(&self.w) + &self.b))
    }

    /// Visible conditionals for a batch of hidden rows, one row each.
    pub fn visible_probs_batch(&self, h: ArrayView2<f64>) -> Array2<f64> {
        debug_assert_eq!(h.ncols(), self.q());
        sigmoid_mat(&(h.dot(&self.w.t()) + &self.a))
    }

    /// F(v) = −aᵀv − Σ_j log(1 + exp(b_j + (Wᵀv)_j)). Lower free energy
    /// means higher unnormalized probability.
    pub fn free_energy(&self, v: ArrayView1<f64>) -> Result<f64, RbmError> {
        self.check_len(v.len(), self.r())?;
        Ok(free_energy_raw(&self.w, &self.a, &self.b, v))
    }

    /// Gradient of F(v): ∂F/∂a = −v, ∂F/∂b_j = −σ(z_j),
    /// ∂F/∂W_ij = −v_i σ(z_j) with z = b + Wᵀv.
    pub fn free_energy_grad(&self, v: ArrayView1<f64>) -> Result<FreeEnergyGrad, RbmError> {
        self.check_len(v.len(), self.r())?;
        let h = (self.w.t().dot(&v) + &self.b).mapv(sigmoid);
        let mut gw = Array2::zeros((self.r(), self.q()));
        for (i, mut row) in gw.rows_mut().into_iter().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = -v[i] * h[j];
            }
        }
        Ok(FreeEnergyGrad {
            w: gw,
            a: -&v,
            b: -h,
        })
    }

    /// Negative free energies of all 2^r visible configurations; the bit i
    /// of the configuration index gives v_i.
    fn all_neg_free_energies(&self) -> Vec<f64> {
        let r = self.r();
        let mut out = Vec::with_capacity(1 << r);
        let mut v = Array1::zeros(r);
        for code in 0..(1usize << r) {
            for i in 0..r {
                v[i] = f64::from(code >> i & 1 == 1);
            }
            out.push(-free_energy_raw(&self.w, &self.a, &self.b, v.view()));
        }
        out
    }

    /// Exact p(v) by enumerating all visible configurations.
    pub fn exact_prob(&self, v: ArrayView1<f64>) -> Result<f64, RbmError> {
        self.check_enumerable()?;
        self.check_len(v.len(), self.r())?;
        let neg_f = self.all_neg_free_energies();
        let log_z = log_sum_exp(&neg_f);
        let code: usize = v
            .iter()
            .enumerate()
            .map(|(i, &x)| usize::from(x > 0.5) << i)
            .sum();
        Ok((neg_f[code] - log_z).exp())
    }

    /// Exact conditional over the unclamped visible bits: renormalized
    /// exact probabilities over all completions of the clamped bits.
    pub fn exact_conditional(
        &self,
        clamped: &[Option<bool>],
    ) -> Result<ConditionalTable, RbmError> {
        self.check_enumerable()?;
        self.check_len(clamped.len(), self.r())?;
        let free_indices: Vec<usize> = clamped
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_none())
            .map(|(i, _)| i)
            .collect();
        let mut v = Array1::zeros(self.r());
        for (i, c) in clamped.iter().enumerate() {
            if let Some(bit) = c {
                v[i] = f64::from(*bit);
            }
        }
        let mut neg_f = Vec::with_capacity(1 << free_indices.len());
        for mask in 0..(1usize << free_indices.len()) {
            for (k, &i) in free_indices.iter().enumerate() {
                v[i] = f64::from(mask >> k & 1 == 1);
            }
            neg_f.push(-free_energy_raw(&self.w, &self.a, &self.b, v.view()));
        }
        let log_z = log_sum_exp(&neg_f);
        let probs = neg_f.iter().map(|&x| (x - log_z).exp()).collect();
        Ok(ConditionalTable {
            free_indices,
            probs,
        })
    }

    /// Versioned JSON document with row-major weights.
    pub fn to_json(&self) -> String {
        let file = RbmFile {
            format_version: 1,
            kind: "rbm".into(),
            r: self.r(),
            q: self.q(),
            w: self.w.iter().copied().collect(),
            a: self.a.to_vec(),
            b: self.b.to_vec(),
            seed: self.seed,
            epochs: self.epochs,
            viewpoint_config: self.viewpoint,
            n: self.n,
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<RbmModel, RbmError> {
        let f: RbmFile =
            serde_json::from_str(text).map_err(|e| RbmError::InvalidModelFile(e.to_string()))?;
        if f.kind != "rbm" {
            return Err(RbmError::InvalidModelFile(format!(
                "kind `{}`, expected `rbm`",
                f.kind
            )));
        }
        if f.format_version != 1 {
            return Err(RbmError::InvalidModelFile(format!(
                "unsupported format_version {}",
                f.format_version
            )));
        }
        if f.w.len() != f.r * f.q || f.a.len() != f.r || f.b.len() != f.q {
            return Err(RbmError::InvalidModelFile(
                "parameter lengths inconsistent with r and q".into(),
            ));
        }
        let w = Array2::from_shape_vec((f.r, f.q), f.w)
            .map_err(|e| RbmError::InvalidModelFile(e.to_string()))?;
        let mut model = RbmModel::new(w, Array1::from(f.a), Array1::from(f.b));
        model.seed = f.seed;
        model.epochs = f.epochs;
        model.n = f.n;
        model.viewpoint = f.viewpoint_config;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct RbmFile {
    format_version: u32,
    kind: String,
    r: usize,
    q: usize,
    #[serde(rename = "W")]
    w: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    seed: u64,
    epochs: usize,
    viewpoint_config: ViewpointConfig,
    n: usize,
}

/// Standard normal draw via the Box-Muller transform.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// 0/1 mask with P(1) = keep, drawn in logical order.
fn bernoulli_mask(rng: &mut ChaCha8Rng, shape: (usize, usize), keep: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || f64::from(rng.gen::<f64>() < keep))
}

/// Bernoulli sample of every entry, drawn in logical order.
fn sample_mat(rng: &mut ChaCha8Rng, probs: &Array2<f64>) -> Array2<f64> {
    let mut out = probs.clone();
    for x in out.iter_mut() {
        *x = f64::from(rng.gen::<f64>() < *x);
    }
    out
}

/// d/dm of the cross-entropy of m toward the target mean mu.
fn ce_grad(m: f64, mu: f64) -> f64 {
    (m - mu) / (m * (1.0 - m))
}

/// Gradient of the sparsity/selectivity penalty
/// P = Σ_j CE(μ, mean_i h_ij) + Σ_i CE(μ, mean_j h_ij)
/// with respect to W and b, propagated through the hidden sigmoid.
fn sparsity_grad(x: &Array2<f64>, h: &Array2<f64>, mu: f64) -> (Array2<f64>, Array1<f64>) {
    const EPS: f64 = 1e-7;
    let bsize = h.nrows() as f64;
    let q = h.ncols() as f64;
    let m_col = h
        .mean_axis(Axis(0))
        .expect("nonempty batch")
        .mapv(|m| m.clamp(EPS, 1.0 - EPS));
    let m_row = h
        .mean_axis(Axis(1))
        .expect("nonempty batch")
        .mapv(|m| m.clamp(EPS, 1.0 - EPS));
    let mut d = h.clone();
    for ((i, j), v) in d.indexed_iter_mut() {
        let g = ce_grad(m_col[j], mu) / bsize + ce_grad(m_row[i], mu) / q;
        *v = g * *v * (1.0 - *v);
    }
    let sp_b = d.sum_axis(Axis(0));
    let sp_w = x.t().dot(&d);
    (sp_w, sp_b)
}

fn finite2(a: &Array2<f64>) -> bool {
    a.iter().all(|x| x.is_finite())
}

fn finite1(a: &Array1<f64>) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Train an RBM with q hidden units on the batch rows by fast persistent
/// contrastive divergence.
///
/// The positive phase uses the data with per-example dropout masks on both
/// layers; the negative phase advances persistent chains under the slow
/// plus fast weights with fresh per-chain hidden masks. Slow weights get
/// momentum, L2 decay and the sparsity penalty; fast weights get their own
/// ramped learning rate and multiplicative decay after every update. After
/// the final epoch the hidden keep-probability is folded into W (the
/// dropout test-time scaling) and fast weights are zeroed.
pub fn train_fpcd(
    batch: &NGramBatch,
    q: usize,
    cfg: &TrainConfig,
) -> Result<(RbmModel, TrainLog), RbmError> {
    if batch.is_empty() {
        return Err(RbmError::EmptyStream);
    }
    assert!(q >= 1, "hidden layer must be nonempty");
    assert!(cfg.n_chains >= 1, "need at least one persistent chain");
    let r = batch.row_width();
    let n_rows = batch.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut w = Array2::from_shape_simple_fn((r, q), || 0.01 * gaussian(&mut rng));
    let mut a: Array1<f64> = Array1::zeros(r);
    let mut b: Array1<f64> = Array1::zeros(q);
    let mut w_fast: Array2<f64> = Array2::zeros((r, q));
    let mut a_fast: Array1<f64> = Array1::zeros(r);
    let mut b_fast: Array1<f64> = Array1::zeros(q);
    let mut vel_w: Array2<f64> = Array2::zeros((r, q));
    let mut vel_a: Array1<f64> = Array1::zeros(r);
    let mut vel_b: Array1<f64> = Array1::zeros(q);

    // Evenly spaced probe rows feed the per-epoch free-energy log. Streams
    // too small to spare rows keep the probes in the training set.
    let probe_count = (n_rows / 10).clamp(1, 100);
    let mut probe: Vec<usize> = (0..probe_count).map(|k| k * n_rows / probe_count).collect();
    probe.dedup();
    let train_idx: Vec<usize> = if n_rows >= 20 {
        let held: std::collections::HashSet<usize> = probe.iter().copied().collect();
        (0..n_rows).filter(|i| !held.contains(i)).collect()
    } else {
        (0..n_rows).collect()
    };

    let mut chains =
        Array2::from_shape_simple_fn((cfg.n_chains, r), || f64::from(rng.gen::<bool>()));
    let keep_v = 1.0 - cfg.dropout_visible;
    let keep_h = 1.0 - cfg.dropout_hidden;

    let mut order = train_idx;
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate * (cfg.epochs - epoch) as f64 / cfg.epochs as f64;
        let ramp = if cfg.epochs > 1 {
            epoch as f64 / (cfg.epochs - 1) as f64
        } else {
            0.0
        };
        let fast_lr = cfg.fast_lr_start + (cfg.fast_lr_end - cfg.fast_lr_start) * ramp;
        order.shuffle(&mut rng);
        for (batch_no, chunk) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let x = batch.rows.select(Axis(0), chunk);
            let bsize = chunk.len() as f64;

            let x_in = if cfg.dropout_visible > 0.0 {
                &x * &bernoulli_mask(&mut rng, (x.nrows(), x.ncols()), keep_v)
            } else {
                x
            };
            let h = sigmoid_mat(&(x_in.dot(&w) + &b));
            let h_drop = if cfg.dropout_hidden > 0.0 {
                &h * &bernoulli_mask(&mut rng, (h.nrows(), h.ncols()), keep_h)
            } else {
                h.clone()
            };
            let pos_w = x_in.t().dot(&h_drop) / bsize;
            let pos_a = x_in.mean_axis(Axis(0)).expect("nonempty chunk");
            let pos_b = h_drop.mean_axis(Axis(0)).expect("nonempty chunk");

            // Sparsity acts on the full (unmasked) hidden activity.
            let (sp_w, sp_b) = if cfg.sparsity_phi > 0.0 {
                sparsity_grad(&x_in, &h, cfg.sparsity_mu)
            } else {
                (Array2::zeros((r, q)), Array1::zeros(q))
            };

            // Fantasy particles run under slow + fast parameters.
            let w_tot = &w + &w_fast;
            let a_tot = &a + &a_fast;
            let b_tot = &b + &b_fast;
            let mut h_chain = sigmoid_mat(&(chains.dot(&w_tot) + &b_tot));
            if cfg.dropout_hidden > 0.0 {
                h_chain = &h_chain
                    * &bernoulli_mask(&mut rng, (h_chain.nrows(), h_chain.ncols()), keep_h);
            }
            let csize = cfg.n_chains as f64;
            let neg_w = chains.t().dot(&h_chain) / csize;
            let neg_a = chains.mean_axis(Axis(0)).expect("chains nonempty");
            let neg_b = h_chain.mean_axis(Axis(0)).expect("chains nonempty");
            let h_sample = sample_mat(&mut rng, &h_chain);
            let v_probs = sigmoid_mat(&(h_sample.dot(&w_tot.t()) + &a_tot));
            chains = sample_mat(&mut rng, &v_probs);

            let cd_w = &pos_w - &neg_w;
            let cd_a = &pos_a - &neg_a;
            let cd_b = &pos_b - &neg_b;
            let grad_w = &cd_w - &(&w * cfg.l2) - &(&sp_w * cfg.sparsity_phi);
            let grad_a = cd_a.clone();
            let grad_b = &cd_b - &(&sp_b * cfg.sparsity_phi);
            if !finite2(&grad_w) {
                return Err(RbmError::NonFiniteGradient {
                    epoch,
                    batch: batch_no,
                    what: "weight",
                });
            }
            if !finite1(&grad_a) || !finite1(&grad_b) {
                return Err(RbmError::NonFiniteGradient {
                    epoch,
                    batch: batch_no,
                    what: "bias",
                });
            }

            vel_w = &vel_w * cfg.momentum + &grad_w * lr;
            vel_a = &vel_a * cfg.momentum + &grad_a * lr;
            vel_b = &vel_b * cfg.momentum + &grad_b * lr;
            w += &vel_w;
            a += &vel_a;
            b += &vel_b;
            w_fast = (&w_fast + &(&cd_w * fast_lr)) * cfg.fast_decay;
            a_fast = (&a_fast + &(&cd_a * fast_lr)) * cfg.fast_decay;
            b_fast = (&b_fast + &(&cd_b * fast_lr)) * cfg.fast_decay;
        }
        let fe: f64 = probe
            .iter()
            .map(|&i| free_energy_raw(&w, &a, &b, batch.rows.row(i)))
            .sum();
        log.probe_free_energy.push(fe / probe.len() as f64);
    }

    // Test-time dropout scaling: units were present with probability
    // keep_h during training, so their weights are folded once here.
    if cfg.dropout_hidden > 0.0 {
        w.mapv_inplace(|x| x * keep_h);
    }
    let mut model = RbmModel::new(w, a, b);
    model.seed = cfg.seed;
    model.epochs = cfg.epochs;
    model.n = batch.n;
    model.viewpoint = batch.viewpoint;
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::NGramBatch;

    /// Deterministic weights so oracle checks need no shared RNG code.
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

    /// Independent route: p(v) from the joint energy
    /// E(v, h) = −aᵀv − bᵀh − vᵀWh summed over every h explicitly.
    fn brute_force_prob(model: &RbmModel, code: usize) -> f64 {
        let (r, q) = (model.r(), model.q());
        let joint_weight = |vc: usize| -> f64 {
            let mut total = 0.0;
            for hc in 0..(1usize << q) {
                let mut energy = 0.0;
                for i in 0..r {
                    if vc >> i & 1 == 1 {
                        energy -= model.a[i];
                        for j in 0..q {
                            if hc >> j & 1 == 1 {
                                energy -= model.w[(i, j)];
                            }
                        }
                    }
                }
                for j in 0..q {
                    if hc >> j & 1 == 1 {
                        energy -= model.b[j];
                    }
                }
                total += (-energy).exp();
            }
            total
        };
        let z: f64 = (0..(1usize << r)).map(joint_weight).sum();
        joint_weight(code) / z
    }

    #[test]
    fn exact_prob_matches_joint_enumeration() {
        for (scale, phase) in [(0.8, 0.0), (1.5, 2.0), (0.3, 5.0)] {
            let model = toy_model(6, 4, scale, phase);
            let mut sum = 0.0;
            for code in 0..64 {
                let p = model.exact_prob(config(code, 6).view()).unwrap();
                let brute = brute_force_prob(&model, code);
                assert!(
                    (p - brute).abs() < 1e-10,
                    "code {code}: {p} vs {brute}"
                );
                sum += p;
            }
            assert!((sum - 1.0).abs() < 1e-10, "probabilities sum to {sum}");
        }
    }

    #[test]
    fn zero_model_free_energy_is_hidden_count_log_two() {
        let model = RbmModel::new(Array2::zeros((3, 5)), Array1::zeros(3), Array1::zeros(5));
        let v = config(0b101, 3);
        let f = model.free_energy(v.view()).unwrap();
        assert!((f - (-5.0 * std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn visible_bias_shifts_free_energy() {
        let model = RbmModel::new(
            Array2::zeros((2, 3)),
            Array1::from(vec![1.0, 0.0]),
            Array1::zeros(3),
        );
        let f = model.free_energy(config(0b01, 2).view()).unwrap();
        assert!((f - (-1.0 - 3.0 * std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn hidden_probs_at_zero_weights_are_half() {
        let model = RbmModel::new(Array2::zeros((3, 4)), Array1::zeros(3), Array1::zeros(4));
        let p = model.hidden_probs(config(0b111, 3).view(), None).unwrap();
        assert!(p.iter().all(|&x| (x - 0.5).abs() < 1e-15));
    }

    #[test]
    fn saturated_hidden_unit_is_off() {
        let model = RbmModel::new(
            Array2::zeros((2, 1)),
            Array1::zeros(2),
            Array1::from(vec![-30.0]),
        );
        let p = model.hidden_probs(config(0b11, 2).view(), None).unwrap();
        assert!(p[0] < 1e-12);
    }

    #[test]
    fn hidden_probs_match_scalar_arithmetic() {
        let w = Array2::from_shape_vec((2, 2), vec![0.5, -0.25, 1.0, 0.75]).unwrap();
        let model = RbmModel::new(w, Array1::zeros(2), Array1::from(vec![0.1, -0.2]));
        let p = model
            .hidden_probs(Array1::from(vec![1.0, 1.0]).view(), None)
            .unwrap();
        let expect0 = 1.0 / (1.0 + (-(0.1 + 0.5 + 1.0f64)).exp());
        let expect1 = 1.0 / (1.0 + (-(-0.2 - 0.25 + 0.75f64)).exp());
        assert!((p[0] - expect0).abs() < 1e-15);
        assert!((p[1] - expect1).abs() < 1e-15);
    }

    #[test]
    fn dropout_mask_zeroes_hidden_units() {
        let model = RbmModel::new(Array2::zeros((2, 3)), Array1::zeros(2), Array1::zeros(3));
        let p = model
            .hidden_probs(config(0b01, 2).view(), Some(&[1.0, 0.0, 1.0]))
            .unwrap();
        assert_eq!(p[1], 0.0);
        assert!((p[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn visible_probs_mirror_hidden_probs() {
        let model = toy_model(4, 3, 0.7, 1.0);
        let h = Array1::from(vec![1.0, 0.0, 1.0]);
        let p = model.visible_probs(h.view(), None).unwrap();
        for i in 0..4 {
            let z = model.a[i] + model.w[(i, 0)] + model.w[(i, 2)];
            assert!((p[i] - sigmoid(z)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let model = RbmModel::new(Array2::zeros((3, 2)), Array1::zeros(3), Array1::zeros(2));
        for code in 0..8 {
            let p = model.exact_prob(config(code, 3).view()).unwrap();
            assert!((p - 0.125).abs() < 1e-12);
        }
    }

    #[test]
    fn positive_weight_prefers_active_bit() {
        let model = RbmModel::new(
            Array2::from_shape_vec((1, 1), vec![5.0]).unwrap(),
            Array1::zeros(1),
            Array1::zeros(1),
        );
        let p1 = model.exact_prob(Array1::from(vec![1.0]).view()).unwrap();
        let p0 = model.exact_prob(Array1::from(vec![0.0]).view()).unwrap();
        assert!(p1 > p0);
    }

    #[test]
    fn enumeration_budget_is_enforced() {
        let model = RbmModel::new(Array2::zeros((15, 6)), Array1::zeros(15), Array1::zeros(6));
        assert!(matches!(
            model.exact_prob(Array1::zeros(15).view()),
            Err(RbmError::TooLargeForEnumeration { .. })
        ));
    }

    #[test]
    fn conditional_of_zero_model_is_uniform() {
        let model = RbmModel::new(Array2::zeros((4, 2)), Array1::zeros(4), Array1::zeros(2));
        let table = model
            .exact_conditional(&[Some(true), None, Some(false), None])
            .unwrap();
        assert_eq!(table.free_indices, vec![1, 3]);
        assert_eq!(table.probs.len(), 4);
        assert!(table.probs.iter().all(|&p| (p - 0.25).abs() < 1e-12));
    }

    #[test]
    fn fully_clamped_conditional_is_point_mass() {
        let model = toy_model(3, 2, 0.5, 0.0);
        let table = model
            .exact_conditional(&[Some(true), Some(false), Some(true)])
            .unwrap();
        assert!(table.free_indices.is_empty());
        assert_eq!(table.probs, vec![1.0]);
    }

    #[test]
    fn conditional_matches_bayes_quotient() {
        let model = toy_model(6, 4, 1.1, 3.0);
        // Clamp bits 0, 2, 5 to 1, 0, 1; bits 1, 3, 4 stay free.
        let clamped = [Some(true), None, Some(false), None, None, Some(true)];
        let table = model.exact_conditional(&clamped).unwrap();
        assert_eq!(table.free_indices, vec![1, 3, 4]);
        let mut total = 0.0;
        for mask in 0..8usize {
            let code = 0b100001
                | (mask & 1) << 1
                | (mask >> 1 & 1) << 3
                | (mask >> 2 & 1) << 4;
            let joint = brute_force_prob(&model, code);
            let mut marginal = 0.0;
            for m2 in 0..8usize {
                let c2 = 0b100001
                    | (m2 & 1) << 1
                    | (m2 >> 1 & 1) << 3
                    | (m2 >> 2 & 1) << 4;
                marginal += brute_force_prob(&model, c2);
            }
            let expected = joint / marginal;
            assert!(
                (table.probs[mask] - expected).abs() < 1e-10,
                "mask {mask}: {} vs {expected}",
                table.probs[mask]
            );
            total += table.probs[mask];
        }
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn free_energy_grad_matches_central_differences() {
        let model = toy_model(6, 4, 0.9, 1.5);
        let v = config(0b101101, 6);
        let grad = model.free_energy_grad(v.view()).unwrap();
        let eps = 1e-4;
        let rel = |analytic: f64, numeric: f64| {
            (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
        };
        for i in 0..6 {
            for j in 0..4 {
                let mut plus = model.clone();
                plus.w[(i, j)] += eps;
                let mut minus = model.clone();
                minus.w[(i, j)] -= eps;
                let numeric = (plus.free_energy(v.view()).unwrap()
                    - minus.free_energy(v.view()).unwrap())
                    / (2.0 * eps);
                assert!(rel(grad.w[(i, j)], numeric) < 1e-4, "W[{i},{j}]");
            }
        }
        for i in 0..6 {
            let mut plus = model.clone();
            plus.a[i] += eps;
            let mut minus = model.clone();
            minus.a[i] -= eps;
            let numeric =
                (plus.free_energy(v.view()).unwrap() - minus.free_energy(v.view()).unwrap())
                    / (2.0 * eps);
            assert!(rel(grad.a[i], numeric) < 1e-4, "a[{i}]");
        }
        for j in 0..4 {
            let mut plus = model.clone();
            plus.b[j] += eps;
            let mut minus = model.clone();
            minus.b[j] -= eps;
            let numeric =
                (plus.free_energy(v.view()).unwrap() - minus.free_energy(v.view()).unwrap())
                    / (2.0 * eps);
            assert!(rel(grad.b[j], numeric) < 1e-4, "b[{j}]");
        }
    }

    fn repeated_instance_batch(pattern: &[f64], copies: usize) -> NGramBatch {
        let r = pattern.len();
        let rows = Array2::from_shape_fn((copies, r), |(_, j)| pattern[j]);
        NGramBatch {
            n: 0,
            viewpoint: ViewpointConfig::default(),
            rows,
            row_meta: (0..copies).map(|i| ("train".into(), i)).collect(),
            padded_flags: vec![false; copies],
        }
    }

    fn overfit_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 8,
            learning_rate: 0.05,
            momentum: 0.6,
            l2: 0.0,
            sparsity_phi: 0.0,
            dropout_hidden: 0.0,
            dropout_visible: 0.0,
            n_chains: 20,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_on_one_instance_raises_its_probability() {
        let pattern = [1.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        let batch = repeated_instance_batch(&pattern, 32);
        let target = Array1::from(pattern.to_vec());
        // Identical seeds make shorter runs prefixes of longer ones, so the
        // three checkpoints lie on one trajectory.
        let mut probs = Vec::new();
        for epochs in [5, 15, 45] {
            let (model, log) = train_fpcd(&batch, 4, &overfit_config(epochs)).unwrap();
            assert_eq!(log.probe_free_energy.len(), epochs);
            probs.push(model.exact_prob(target.view()).unwrap());
        }
        assert!(probs[0] < probs[1] && probs[1] < probs[2], "{probs:?}");
        assert!(probs[2] > 1.0 / 64.0, "beats uniform: {probs:?}");
    }

    #[test]
    fn zero_learning_rate_leaves_initialization_unchanged() {
        let batch = repeated_instance_batch(&[1.0, 0.0, 1.0, 1.0, 0.0, 1.0], 32);
        let mut cfg = overfit_config(10);
        cfg.learning_rate = 0.0;
        let (trained, _) = train_fpcd(&batch, 4, &cfg).unwrap();
        let mut init_cfg = cfg.clone();
        init_cfg.epochs = 0;
        let (init, _) = train_fpcd(&batch, 4, &init_cfg).unwrap();
        assert_eq!(trained.w, init.w);
        assert_eq!(trained.a, init.a);
        assert_eq!(trained.b, init.b);
    }

    #[test]
    fn same_seed_reproduces_parameters_exactly() {
        let batch = repeated_instance_batch(&[1.0, 1.0, 0.0, 0.0, 1.0, 0.0], 40);
        let cfg = TrainConfig {
            epochs: 7,
            batch_size: 10,
            n_chains: 15,
            seed: 99,
            ..TrainConfig::default()
        };
        let (m1, _) = train_fpcd(&batch, 5, &cfg).unwrap();
        let (m2, _) = train_fpcd(&batch, 5, &cfg).unwrap();
        assert_eq!(m1.w, m2.w);
        assert_eq!(m1.a, m2.a);
        assert_eq!(m1.b, m2.b);
    }

    #[test]
    fn diverging_training_reports_non_finite_gradient() {
        let batch = repeated_instance_batch(&[1.0, 0.0, 1.0, 1.0, 0.0, 1.0], 32);
        let mut cfg = overfit_config(10);
        cfg.learning_rate = 1e308;
        assert!(matches!(
            train_fpcd(&batch, 4, &cfg),
            Err(RbmError::NonFiniteGradient { .. })
        ));
    }

    #[test]
    fn empty_stream_is_rejected() {
        let batch = NGramBatch {
            n: 0,
            viewpoint: ViewpointConfig::default(),
            rows: Array2::zeros((0, 6)),
            row_meta: vec![],
            padded_flags: vec![],
        };
        assert!(matches!(
            train_fpcd(&batch, 4, &TrainConfig::default()),
            Err(RbmError::EmptyStream)
        ));
    }

    #[test]
    fn fast_weights_are_zero_after_training() {
        let batch = repeated_instance_batch(&[1.0, 0.0, 1.0, 1.0, 0.0, 1.0], 32);
        let (model, _) = train_fpcd(&batch, 4, &overfit_config(5)).unwrap();
        assert!(model.w_fast.iter().all(|&x| x == 0.0));
        assert!(model.a_fast.iter().all(|&x| x == 0.0));
        assert!(model.b_fast.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn json_round_trip_preserves_parameters() {
        let mut model = toy_model(5, 3, 0.77, 4.2);
        model.seed = 42;
        model.epochs = 17;
        model.n = 2;
        let text = model.to_json();
        assert!(text.contains("\"kind\": \"rbm\""));
        let back = RbmModel::from_json(&text).unwrap();
        assert_eq!(back.w, model.w);
        assert_eq!(back.a, model.a);
        assert_eq!(back.b, model.b);
        assert_eq!(back.seed, 42);
        assert_eq!(back.epochs, 17);
        assert_eq!(back.n, 2);
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let model = toy_model(2, 2, 0.5, 0.0);
        let text = model.to_json().replace("\"rbm\"", "\"ffnn\"");
        assert!(matches!(
            RbmModel::from_json(&text),
            Err(RbmError::InvalidModelFile(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let model = toy_model(4, 2, 0.5, 0.0);
        let v = Array1::zeros(3);
        assert!(matches!(
            model.free_energy(v.view()),
            Err(RbmError::DimensionMismatch { expected: 4, got: 3 })
        ));
    }
}
