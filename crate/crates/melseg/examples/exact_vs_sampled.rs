//! Compare exact enumeration probabilities against Monte-Carlo estimates
//! on a model small enough to enumerate (r + q <= 20).
//!
//! The sampler runs a population of Gibbs chains and reads the final-sweep
//! visible probabilities; its mean absolute error shrinks as the
//! population grows.

use melseg::rbm::RbmModel;
use melseg::sampler::{estimate_prob, SamplerConfig};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let (r, q) = (6, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = Array2::from_shape_fn((r, q), |_| rng.gen_range(-1.0..1.0));
    let a = Array1::from_shape_fn(r, |_| rng.gen_range(-0.5..0.5));
    let b = Array1::from_shape_fn(q, |_| rng.gen_range(-0.5..0.5));
    let model = RbmModel::new(w, a, b);

    // Every visible configuration, exactly.
    let states: Vec<Array1<f64>> = (0..1u32 << r)
        .map(|s| Array1::from_shape_fn(r, |i| f64::from(s >> i & 1)))
        .collect();
    let exact: Vec<f64> = states
        .iter()
        .map(|v| model.exact_prob(v.view()).expect("within budget"))
        .collect();
    let total: f64 = exact.iter().sum();
    println!("exact probabilities over all {} states sum to {total:.12}", states.len());

    println!("\n{:>10} {:>14}", "particles", "mean abs err");
    for n_particles in [10, 100, 1000] {
        let cfg = SamplerConfig {
            n_particles,
            gibbs_steps: 200,
            seed: 3,
        };
        let mae: f64 = states
            .iter()
            .zip(&exact)
            .map(|(v, p)| {
                let est = estimate_prob(&model, v.view(), &cfg).expect("sampler runs");
                (est - p).abs()
            })
            .sum::<f64>()
            / states.len() as f64;
        println!("{n_particles:>10} {mae:>14.6e}");
    }
    println!("\nerror falls as the chain population grows");
}
