//! Smooth a boundary-strength profile with the pseudo-supervised network.
//!
//! The RBM's own information-content estimates become regression targets
//! for a feed-forward network whose hidden layer is pretrained as an RBM.
//! Because the targets are model outputs, no annotation is needed. The
//! fine-tune log tracks the fit: as the mean squared error falls, the
//! precision beta = N / sum((t - y)^2) rises and the entropy of the
//! implied Gaussian error model falls.
//!
//! This takes a couple of minutes: pseudo-targets are Monte-Carlo
//! estimates for every note of the training corpus.

use melseg::corpus::boundary_vector;
use melseg::encoding::{encode_corpus, ViewpointConfig};
use melseg::evalharness::{generate_synthetic_corpus, SynthSpec};
use melseg::infocontent::{bsp_for_melody, Bsp};
use melseg::pseudosup::{pretrain_config, smooth_corpus, smoothed_bsp, FineTuneConfig};
use melseg::rbm::{train_fpcd, TrainConfig};
use melseg::sampler::SamplerConfig;

fn boundary_contrast(bsp: &Bsp, truth: &[u8]) -> (f64, f64) {
    let pick = |want: u8| {
        let sel: Vec<f64> = bsp
            .values
            .iter()
            .zip(truth)
            .filter(|(_, t)| u8::from(**t != 0) == want)
            .map(|(v, _)| *v)
            .collect();
        sel.iter().sum::<f64>() / sel.len() as f64
    };
    (pick(1), pick(0))
}

fn main() {
    let spec = SynthSpec {
        melodies: 60,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic_corpus(&spec, 3).expect("spec is valid");
    let n = 2;
    let batch = encode_corpus(&corpus, n, &ViewpointConfig::default(), 3);
    let train_cfg = TrainConfig {
        seed: 4,
        ..TrainConfig::default()
    };
    println!("training the RBM on {} rows...", batch.len());
    let (rbm, _) = train_fpcd(&batch, 100, &train_cfg).expect("training succeeds");

    let sampler = SamplerConfig {
        n_particles: 100,
        gibbs_steps: 100,
        seed: 9,
    };
    let ft = FineTuneConfig {
        epochs: 60,
        seed: 10,
        ..FineTuneConfig::default()
    };
    println!("estimating pseudo-targets and fine-tuning the network...");
    let (ffnn, log, targets) = smooth_corpus(
        &rbm,
        &corpus,
        n,
        &sampler,
        &pretrain_config(8),
        &ft,
        None,
    )
    .expect("smoothing succeeds");
    println!(
        "network layers {:?}, trained on {} pseudo-targets from `{}`",
        ffnn.layers,
        targets.values.len(),
        targets.source_model_id
    );

    println!("\nfine-tune trace (clean forward pass after each epoch):");
    println!("{:>6} {:>12} {:>12} {:>10}", "epoch", "mse", "beta", "entropy");
    for e in (0..log.mse.len()).step_by(12).chain([log.mse.len() - 1]) {
        println!(
            "{e:>6} {:>12.6} {:>12.4} {:>10.4}",
            log.mse[e], log.beta[e], log.entropy[e]
        );
    }

    let melody = &corpus.melodies[0];
    let truth = boundary_vector(melody);
    let raw = bsp_for_melody(&rbm, melody, n, &sampler).expect("profile estimates");
    let smooth = smoothed_bsp(&ffnn, melody, n, sampler.seed).expect("network runs");
    println!("\nraw vs smoothed profile for `{}`:", melody.id);
    println!("{:>5} {:>10} {:>10} {:>7}", "note", "raw", "smoothed", "truth");
    for i in 0..melody.notes.len().min(14) {
        println!(
            "{i:>5} {:>10.3} {:>10.3} {:>7}",
            raw.values[i],
            smooth.values[i],
            if truth[i] != 0 { "yes" } else { "" }
        );
    }

    let (raw_b, raw_e) = boundary_contrast(&raw, &truth);
    let (sm_b, sm_e) = boundary_contrast(&smooth, &truth);
    println!("\nmean IC at boundaries vs elsewhere:");
    println!("  raw      {raw_b:.3} vs {raw_e:.3}");
    println!("  smoothed {sm_b:.3} vs {sm_e:.3}");
}
