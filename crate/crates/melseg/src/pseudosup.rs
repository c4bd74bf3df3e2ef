//! Pseudo-supervised smoothing of boundary-strength profiles.
//!
//! A feed-forward network regresses the RBM's per-note IC estimates
//! directly from the n-gram bits: the RBM first produces pseudo-targets
//! for its own training data, a PCD-pretrained hidden layer initializes
//! the network, and backpropagation then minimizes the mean squared error
//! to the targets. The fitted network's outputs form smoothed BSPs. Under
//! a Gaussian noise model the residual precision is β = N / Σ(t − y)², so
//! driving down the MSE is the same as driving down the Gaussian entropy
//! ½·log(2π/β) + ½ of the targets given the inputs.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::encoding::{encode_melody, NGramBatch, ViewpointConfig};
use crate::infocontent::{bsp_for_melody, Bsp, InfoContentError};
use crate::rbm::{train_fpcd, RbmError, RbmModel, TrainConfig, TrainLog};
use crate::sampler::SamplerConfig;
use crate::corpus::Melody;

#[derive(Debug, Error)]
pub enum PseudosupError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("beta {0} is not positive and finite")]
    NonPositiveBeta(f64),
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error(transparent)]
    Rbm(#[from] RbmError),
    #[error(transparent)]
    InfoContent(#[from] InfoContentError),
    #[error("invalid model file: {0}")]
    InvalidModelFile(String),
}

/// Feed-forward regression network: sigmoid hidden layers, one linear
/// output unit. `w[l]` maps layer l to layer l+1 (layers[l] × layers[l+1]).
#[derive(Debug, Clone, PartialEq)]
pub struct FfnnModel {
    pub layers: Vec<usize>,
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
    pub source_rbm_id: String,
    /// Viewpoint the input rows are encoded under. Model files always
    /// describe default-viewpoint models; this field is not serialized.
    pub viewpoint: ViewpointConfig,
}

/// Per-note regression targets aligned with an encoded corpus batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoTargets {
    pub row_meta: Vec<(String, usize)>,
    pub values: Vec<f64>,
    pub source_model_id: String,
}

/// Backpropagation hyperparameters. Defaults follow the reference
/// fine-tuning recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial learning rate, linearly annealed to 0 across epochs.
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2: f64,
    pub dropout_hidden: f64,
    pub dropout_input: f64,
    pub seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        FineTuneConfig {
            epochs: 100,
            batch_size: 250,
            learning_rate: 0.005,
            momentum: 0.6,
            l2: 0.01,
            dropout_hidden: 0.5,
            dropout_input: 0.2,
            seed: 0,
        }
    }
}

/// Per-epoch traces from fine-tuning, measured on the full training set
/// without dropout after each epoch.
#[derive(Debug, Clone, Default)]
pub struct FineTuneLog {
    pub mse: Vec<f64>,
    /// β = N / Σ(t − y)²; +∞ when the fit is exact.
    pub beta: Vec<f64>,
    /// Gaussian entropy of β; −∞ when β is +∞.
    pub entropy: Vec<f64>,
}

/// Stable identifier of a trained RBM, recorded in FFNN files.
pub fn rbm_id(model: &RbmModel) -> String {
    format!(
        "rbm-n{}-q{}-seed{}-epochs{}",
        model.n,
        model.q(),
        model.seed,
        model.epochs
    )
}

/// β = N / Σ(t_i − y_i)². A perfect fit returns the +∞ sentinel, which is
/// reported but never divided by.
pub fn precision_beta(targets: &[f64], outputs: &[f64]) -> Result<f64, PseudosupError> {
    if targets.is_empty() || targets.len() != outputs.len() {
        return Err(PseudosupError::EmptyInput);
    }
    let sq: f64 = targets
        .iter()
        .zip(outputs)
        .map(|(t, y)| (t - y) * (t - y))
        .sum();
    if sq == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(targets.len() as f64 / sq)
    }
}

/// Entropy of a Gaussian with precision β: ½·ln(2π/β) + ½ (natural log).
pub fn gaussian_entropy(beta: f64) -> Result<f64, PseudosupError> {
    if !beta.is_finite() || beta <= 0.0 {
        return Err(PseudosupError::NonPositiveBeta(beta));
    }
    Ok(0.5 * (std::f64::consts::TAU / beta).ln() + 0.5)
}

impl FfnnModel {
    /// Build from explicit parameters; layer sizes come from the shapes.
    pub fn new(w: Vec<Array2<f64>>, b: Vec<Array1<f64>>, source_rbm_id: String) -> FfnnModel {
        assert!(!w.is_empty(), "need at least one weight matrix");
        assert_eq!(w.len(), b.len(), "one bias vector per layer");
        let mut layers = vec![w[0].nrows()];
        for (l, (wl, bl)) in w.iter().zip(&b).enumerate() {
            assert_eq!(
                wl.nrows(),
                layers[l],
                "layer {l} input width must chain from the previous layer"
            );
            assert_eq!(wl.ncols(), bl.len(), "bias length per layer");
            layers.push(wl.ncols());
        }
        assert_eq!(*layers.last().unwrap(), 1, "exactly one linear output unit");
        FfnnModel {
            layers,
            w,
            b,
            source_rbm_id,
            viewpoint: ViewpointConfig::default(),
        }
    }

    /// Initialize from a pretrained RBM: the RBM's weights and hidden
    /// biases become the first hidden layer; later layers start small.
    /// `second_hidden` inserts an optional extra sigmoid layer.
    pub fn from_pretrained(
        pretrained: &RbmModel,
        source_rbm_id: String,
        second_hidden: Option<usize>,
        seed: u64,
    ) -> FfnnModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut small =
            |rows: usize, cols: usize| Array2::from_shape_simple_fn((rows, cols), || {
                0.01 * gaussian(&mut rng)
            });
        let mut w = vec![pretrained.w.clone()];
        let mut b = vec![pretrained.b.clone()];
        let mut width = pretrained.q();
        if let Some(h2) = second_hidden {
            w.push(small(width, h2));
            b.push(Array1::zeros(h2));
            width = h2;
        }
        w.push(small(width, 1));
        b.push(Array1::zeros(1));
        let mut model = FfnnModel::new(w, b, source_rbm_id);
        model.viewpoint = pretrained.viewpoint;
        model
    }

    /// Clean forward pass: one output per input row, no dropout.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array1<f64> {
        debug_assert_eq!(x.ncols(), self.layers[0]);
        let depth = self.w.len();
        let mut act = x.to_owned();
        for l in 0..depth - 1 {
            act = (act.dot(&self.w[l]) + &self.b[l]).mapv(crate::rbm::sigmoid);
        }
        let y = act.dot(&self.w[depth - 1]) + &self.b[depth - 1];
        y.column(0).to_owned()
    }

    /// Versioned JSON document; weights are row-major per layer.
    pub fn to_json(&self) -> String {
        let file = FfnnFile {
            format_version: 1,
            kind: "ffnn".into(),
            layers: self.layers.clone(),
            w: self.w.iter().map(|m| m.iter().copied().collect()).collect(),
            b: self.b.iter().map(|v| v.to_vec()).collect(),
            source_rbm_id: self.source_rbm_id.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<FfnnModel, PseudosupError> {
        let f: FfnnFile = serde_json::from_str(text)
            .map_err(|e| PseudosupError::InvalidModelFile(e.to_string()))?;
        if f.kind != "ffnn" {
            return Err(PseudosupError::InvalidModelFile(format!(
                "kind `{}`, expected `ffnn`",
                f.kind
            )));
        }
        if f.format_version != 1 {
            return Err(PseudosupError::InvalidModelFile(format!(
                "unsupported format_version {}",
                f.format_version
            )));
        }
        if f.layers.len() < 2 || f.w.len() != f.layers.len() - 1 || f.b.len() != f.w.len() {
            return Err(PseudosupError::InvalidModelFile(
                "layer sizes inconsistent with parameter counts".into(),
            ));
        }
        let mut w = Vec::with_capacity(f.w.len());
        let mut b = Vec::with_capacity(f.b.len());
        for l in 0..f.w.len() {
            let (rows, cols) = (f.layers[l], f.layers[l + 1]);
            if f.w[l].len() != rows * cols || f.b[l].len() != cols {
                return Err(PseudosupError::InvalidModelFile(format!(
                    "layer {l} parameter lengths inconsistent with sizes"
                )));
            }
            w.push(
                Array2::from_shape_vec((rows, cols), f.w[l].clone())
                    .map_err(|e| PseudosupError::InvalidModelFile(e.to_string()))?,
            );
            b.push(Array1::from(f.b[l].clone()));
        }
        if *f.layers.last().unwrap() != 1 {
            return Err(PseudosupError::InvalidModelFile(
                "output layer must have exactly one unit".into(),
            ));
        }
        Ok(FfnnModel::new(w, b, f.source_rbm_id))
    }
}

#[derive(Serialize, Deserialize)]
struct FfnnFile {
    format_version: u32,
    kind: String,
    layers: Vec<usize>,
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    source_rbm_id: String,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Inverted-dropout mask: entries are 1/keep with probability keep, else 0,
/// so masked activations keep their expectation and inference needs no
/// rescaling.
fn inverted_mask(rng: &mut ChaCha8Rng, shape: (usize, usize), keep: f64) -> Array2<f64> {
    let scale = 1.0 / keep;
    Array2::from_shape_simple_fn(shape, || {
        if rng.gen::<f64>() < keep {
            scale
        } else {
            0.0
        }
    })
}

struct Dropout<'a> {
    rng: &'a mut ChaCha8Rng,
    keep_input: f64,
    keep_hidden: f64,
}

/// MSE loss (mean over rows) and its parameter gradients. With dropout,
/// masks are drawn here and enter the gradients exactly as they entered
/// the forward pass.
fn backprop(
    model: &FfnnModel,
    x: ArrayView2<f64>,
    t: &[f64],
    mut dropout: Option<Dropout<'_>>,
) -> (f64, Vec<Array2<f64>>, Vec<Array1<f64>>) {
    let depth = model.w.len();
    let bsize = x.nrows() as f64;
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(depth);
    let mut sigmas: Vec<Array2<f64>> = Vec::with_capacity(depth - 1);
    let mut masks: Vec<Option<Array2<f64>>> = Vec::with_capacity(depth - 1);

    let mut a = x.to_owned();
    if let Some(d) = dropout.as_mut() {
        if d.keep_input < 1.0 {
            a = &a * &inverted_mask(d.rng, (a.nrows(), a.ncols()), d.keep_input);
        }
    }
    acts.push(a);
    for l in 0..depth - 1 {
        let s = (acts[l].dot(&model.w[l]) + &model.b[l]).mapv(crate::rbm::sigmoid);
        sigmas.push(s.clone());
        let mut h = s;
        let mask = dropout.as_mut().and_then(|d| {
            (d.keep_hidden < 1.0)
                .then(|| inverted_mask(d.rng, (h.nrows(), h.ncols()), d.keep_hidden))
        });
        if let Some(m) = &mask {
            h = &h * m;
        }
        masks.push(mask);
        acts.push(h);
    }
    let y = acts[depth - 1].dot(&model.w[depth - 1]) + &model.b[depth - 1];

    let residual =
        Array1::from_shape_fn(t.len(), |i| y[(i, 0)] - t[i]);
    let loss = residual.iter().map(|r| r * r).sum::<f64>() / bsize;

    let mut gw = vec![Array2::zeros((0, 0)); depth];
    let mut gb = vec![Array1::zeros(0); depth];
    // d loss / d y, one column.
    let mut delta = residual
        .mapv(|r| 2.0 * r / bsize)
        .insert_axis(Axis(1));
    for l in (0..depth).rev() {
        gw[l] = acts[l].t().dot(&delta);
        gb[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut da = delta.dot(&model.w[l].t());
            if let Some(m) = &masks[l - 1] {
                da = &da * m;
            }
            let s = &sigmas[l - 1];
            delta = da * s * &(1.0 - s);
        }
    }
    (loss, gw, gb)
}

/// MSE loss and gradients on the full batch, no dropout or weight decay.
pub fn loss_and_grad(
    model: &FfnnModel,
    x: ArrayView2<f64>,
    t: &[f64],
) -> Result<(f64, Vec<Array2<f64>>, Vec<Array1<f64>>), PseudosupError> {
    if x.nrows() == 0 {
        return Err(PseudosupError::EmptyInput);
    }
    if x.nrows() != t.len() {
        return Err(PseudosupError::ConfigMismatch(format!(
            "{} rows vs {} targets",
            x.nrows(),
            t.len()
        )));
    }
    Ok(backprop(model, x, t, None))
}

/// Pseudo-targets: the RBM's IC estimate for every note of the corpus, in
/// corpus row order.
pub fn make_pseudo_targets(
    rbm: &RbmModel,
    corpus: &Corpus,
    n: usize,
    cfg: &SamplerConfig,
) -> Result<PseudoTargets, PseudosupError> {
    let mut row_meta = Vec::new();
    let mut values = Vec::new();
    for melody in &corpus.melodies {
        let bsp = bsp_for_melody(rbm, melody, n, cfg)?;
        for (i, v) in bsp.values.iter().enumerate() {
            row_meta.push((melody.id.clone(), i));
            values.push(*v);
        }
    }
    Ok(PseudoTargets {
        row_meta,
        values,
        source_model_id: rbm_id(rbm),
    })
}

/// Training recipe for the FFNN's PCD-pretrained hidden layer.
pub fn pretrain_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.005,
        l2: 0.01,
        seed,
        ..TrainConfig::default()
    }
}

/// Train the hidden-layer RBM that initializes the network.
pub fn pretrain_hidden(
    batch: &NGramBatch,
    size: usize,
    cfg: &TrainConfig,
) -> Result<(RbmModel, TrainLog), PseudosupError> {
    Ok(train_fpcd(batch, size, cfg)?)
}

/// Fine-tune the network on aligned batch rows and pseudo-targets by
/// backpropagation with momentum, L2 decay and inverted dropout. Returns
/// the fitted model and the per-epoch MSE/β/entropy traces.
pub fn finetune(
    model: &FfnnModel,
    batch: &NGramBatch,
    targets: &PseudoTargets,
    cfg: &FineTuneConfig,
) -> Result<(FfnnModel, FineTuneLog), PseudosupError> {
    if batch.is_empty() {
        return Err(PseudosupError::EmptyInput);
    }
    if batch.row_meta != targets.row_meta {
        return Err(PseudosupError::ConfigMismatch(
            "batch rows and pseudo-targets are not aligned".into(),
        ));
    }
    if batch.row_width() != model.layers[0] {
        return Err(PseudosupError::ConfigMismatch(format!(
            "batch width {} vs input layer {}",
            batch.row_width(),
            model.layers[0]
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = model.clone();
    let depth = model.w.len();
    let mut vel_w: Vec<Array2<f64>> = model
        .w
        .iter()
        .map(|w| Array2::zeros((w.nrows(), w.ncols())))
        .collect();
    let mut vel_b: Vec<Array1<f64>> = model.b.iter().map(|b| Array1::zeros(b.len())).collect();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut log = FineTuneLog::default();
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate * (cfg.epochs - epoch) as f64 / cfg.epochs as f64;
        order.shuffle(&mut rng);
        for (batch_no, chunk) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let x = batch.rows.select(Axis(0), chunk);
            let t: Vec<f64> = chunk.iter().map(|&i| targets.values[i]).collect();
            let (loss, gw, gb) = backprop(
                &model,
                x.view(),
                &t,
                Some(Dropout {
                    rng: &mut rng,
                    keep_input: 1.0 - cfg.dropout_input,
                    keep_hidden: 1.0 - cfg.dropout_hidden,
                }),
            );
            if !loss.is_finite() {
                return Err(PseudosupError::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                });
            }
            for l in 0..depth {
                let step = &gw[l] + &(&model.w[l] * cfg.l2);
                vel_w[l] = &vel_w[l] * cfg.momentum - &(&step * lr);
                model.w[l] += &vel_w[l];
                vel_b[l] = &vel_b[l] * cfg.momentum - &(&gb[l] * lr);
                model.b[l] += &vel_b[l];
            }
        }
        let outputs = model.forward(batch.rows.view());
        let mse = outputs
            .iter()
            .zip(&targets.values)
            .map(|(y, t)| (y - t) * (y - t))
            .sum::<f64>()
            / batch.len() as f64;
        let beta = precision_beta(&targets.values, outputs.as_slice().unwrap())?;
        let entropy = if beta.is_finite() {
            gaussian_entropy(beta)?
        } else {
            f64::NEG_INFINITY
        };
        log.mse.push(mse);
        log.beta.push(beta);
        log.entropy.push(entropy);
    }
    Ok((model, log))
}

/// Smoothed BSP: the network's output per note row, negatives clamped to 0.
pub fn smoothed_bsp(
    ffnn: &FfnnModel,
    melody: &Melody,
    n: usize,
    seed: u64,
) -> Result<Bsp, PseudosupError> {
    if ffnn.layers[0] != n * ffnn.viewpoint.note_width() {
        return Err(PseudosupError::ConfigMismatch(format!(
            "input layer {} does not fit {}-grams of width {}",
            ffnn.layers[0],
            n,
            ffnn.viewpoint.note_width()
        )));
    }
    let batch = encode_melody(melody, n, &ffnn.viewpoint, seed);
    let y = ffnn.forward(batch.rows.view());
    Ok(Bsp::new(
        melody.id.clone(),
        y.iter().map(|&v| v.max(0.0)).collect(),
    ))
}

/// Full smoothing pipeline over a training corpus: pseudo-targets from the
/// RBM, PCD pretraining of the hidden layer, then supervised fine-tuning.
/// The hidden width matches the source RBM.
pub fn smooth_corpus(
    rbm: &RbmModel,
    corpus: &Corpus,
    n: usize,
    sampler_cfg: &SamplerConfig,
    pretrain_cfg: &TrainConfig,
    ft_cfg: &FineTuneConfig,
    second_hidden: Option<usize>,
) -> Result<(FfnnModel, FineTuneLog, PseudoTargets), PseudosupError> {
    let targets = make_pseudo_targets(rbm, corpus, n, sampler_cfg)?;
    let batch = crate::encoding::encode_corpus(corpus, n, &rbm.viewpoint, sampler_cfg.seed);
    let (pre, _) = pretrain_hidden(&batch, rbm.q(), pretrain_cfg)?;
    let ffnn = FfnnModel::from_pretrained(&pre, rbm_id(rbm), second_hidden, ft_cfg.seed);
    let (fitted, log) = finetune(&ffnn, &batch, &targets, ft_cfg)?;
    Ok((fitted, log, targets))
}
