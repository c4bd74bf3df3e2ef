//! Estimate a boundary-strength profile: per-note information content
//! under a trained RBM n-gram model.
//!
//! Each note's probability is estimated conditionally on its context
//! (context bits clamped, the note's bits free), and IC = -log2(p). Notes
//! at phrase boundaries tend to be less predictable, so IC peaks there.

use melseg::corpus::boundary_vector;
use melseg::encoding::{encode_corpus, ViewpointConfig};
use melseg::evalharness::{generate_synthetic_corpus, SynthSpec};
use melseg::infocontent::bsp_for_melody;
use melseg::rbm::{train_fpcd, TrainConfig};
use melseg::sampler::SamplerConfig;

fn main() {
    let spec = SynthSpec {
        melodies: 120,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic_corpus(&spec, 21).expect("spec is valid");
    let n = 2;
    let batch = encode_corpus(&corpus, n, &ViewpointConfig::default(), 21);
    let cfg = TrainConfig {
        seed: 2,
        ..TrainConfig::default()
    };
    println!("training a {n}-gram model on {} rows...", batch.len());
    let (model, _) = train_fpcd(&batch, 100, &cfg).expect("training succeeds");

    let sampler = SamplerConfig {
        seed: 5,
        ..SamplerConfig::default()
    };
    let melody = &corpus.melodies[0];
    let bsp = bsp_for_melody(&model, melody, n, &sampler).expect("profile estimates");
    let truth = boundary_vector(melody);

    println!("\nprofile for `{}`:", melody.id);
    println!("{:>5} {:>10} {:>7}  bar", "note", "ic (bits)", "truth");
    let max = bsp.values.iter().cloned().fold(1e-9, f64::max);
    for (i, v) in bsp.values.iter().enumerate() {
        let bar = "#".repeat((v / max * 40.0).round() as usize);
        let mark = if truth[i] != 0 { "yes" } else { "" };
        println!("{i:>5} {v:>10.3} {mark:>7}  {bar}");
    }

    let at_boundaries: f64 = bsp
        .values
        .iter()
        .zip(&truth)
        .filter(|(_, t)| **t != 0)
        .map(|(v, _)| *v)
        .sum::<f64>()
        / truth.iter().filter(|t| **t != 0).count() as f64;
    let elsewhere: f64 = bsp
        .values
        .iter()
        .zip(&truth)
        .filter(|(_, t)| **t == 0)
        .map(|(v, _)| *v)
        .sum::<f64>()
        / truth.iter().filter(|t| **t == 0).count() as f64;
    println!("\nmean IC at boundaries {at_boundaries:.3}, elsewhere {elsewhere:.3}");
}
