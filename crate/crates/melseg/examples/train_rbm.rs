//! Train an RBM on synthetic n-grams and check what it learned.
//!
//! Training uses fast persistent contrastive divergence: persistent
//! fantasy chains driven by the sum of slow and fast weights, with
//! dropout, an L2 penalty, and a sparsity/selectivity penalty pulling
//! hidden activations toward a low target mean.
//!
//! Free energies are only comparable under one model (the partition
//! function cancels), so the check at the end compares real n-gram rows
//! against random rows with the same one-hot structure: the trained model
//! should assign the real rows lower free energy, i.e. higher probability.

use melseg::encoding::{encode_corpus, ViewpointConfig};
use melseg::evalharness::{generate_synthetic_corpus, SynthSpec};
use melseg::rbm::{train_fpcd, RbmModel, TrainConfig};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mean_free_energy(model: &RbmModel, rows: &[Array1<f64>]) -> f64 {
    rows.iter()
        .map(|v| model.free_energy(v.view()).expect("width matches"))
        .sum::<f64>()
        / rows.len() as f64
}

fn main() {
    let spec = SynthSpec {
        melodies: 24,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic_corpus(&spec, 7).expect("spec is valid");
    let cfg_vp = ViewpointConfig::default();
    let n = 2;
    let batch = encode_corpus(&corpus, n, &cfg_vp, 7);
    println!(
        "training on {} two-gram rows of width {}",
        batch.len(),
        batch.row_width()
    );

    let cfg = TrainConfig {
        epochs: 100,
        n_chains: 50,
        seed: 1,
        ..TrainConfig::default()
    };
    let (model, log) = train_fpcd(&batch, 64, &cfg).expect("training succeeds");
    println!(
        "model: {} visible x {} hidden, n = {}",
        model.r(),
        model.q(),
        model.n
    );

    println!("\nheld-out probe free energy by epoch (monitoring trace):");
    for (e, fe) in log.probe_free_energy.iter().enumerate() {
        if e % 20 == 0 || e + 1 == log.probe_free_energy.len() {
            println!("epoch {e:>3}: {fe:>10.4}");
        }
    }

    // Real rows versus random rows with the same four-fields-per-note
    // one-hot layout but uniformly random bins.
    let data_rows: Vec<Array1<f64>> = (0..batch.len())
        .map(|i| batch.rows.row(i).to_owned())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let fields = [
        (0, cfg_vp.abs_interval_bins),
        (cfg_vp.abs_interval_bins, cfg_vp.contour_bins),
        (cfg_vp.abs_interval_bins + cfg_vp.contour_bins, cfg_vp.ioi_bins),
        (
            cfg_vp.abs_interval_bins + cfg_vp.contour_bins + cfg_vp.ioi_bins,
            cfg_vp.ooi_bins,
        ),
    ];
    let random_rows: Vec<Array1<f64>> = (0..batch.len())
        .map(|_| {
            let mut v = Array1::zeros(batch.row_width());
            for block in 0..n {
                for (offset, width) in fields {
                    v[block * cfg_vp.note_width() + offset + rng.gen_range(0..width)] = 1.0;
                }
            }
            v
        })
        .collect();
    let fe_data = mean_free_energy(&model, &data_rows);
    let fe_random = mean_free_energy(&model, &random_rows);
    println!("\nmean free energy, real n-grams:   {fe_data:.4}");
    println!("mean free energy, random n-grams: {fe_random:.4}");
    println!(
        "margin: {:.2} bits per row in favor of real data",
        (fe_random - fe_data) / std::f64::consts::LN_2
    );
    assert!(fe_data < fe_random, "training should favor real data");

    let json = model.to_json();
    println!("\nserialized model: {} bytes of JSON", json.len());
}
