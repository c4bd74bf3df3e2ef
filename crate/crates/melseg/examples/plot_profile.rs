//! Render a melody's boundary-strength profile as a two-panel SVG:
//! a piano-roll strip above the profile curve, with truth boundaries as
//! gray bars and predicted boundaries as dashed lines.

use melseg::baselines::{baseline_digram, DigramMethod, DigramStats};
use melseg::cli::render_bsp_panel;
use melseg::corpus::boundary_vector;
use melseg::encoding::ViewpointConfig;
use melseg::evalharness::{generate_synthetic_corpus, SynthSpec};
use melseg::peakpick::{pick_boundaries, PeakPickConfig, VarianceMode};

fn main() {
    let spec = SynthSpec {
        melodies: 40,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic_corpus(&spec, 23).expect("spec is valid");
    let stats = DigramStats::from_melodies(&corpus.melodies, &ViewpointConfig::default())
        .expect("corpus is nonempty");

    let melody = &corpus.melodies[0];
    let bsp = baseline_digram(&stats, melody, DigramMethod::Tp);
    let truth = boundary_vector(melody);
    let pred = pick_boundaries(
        &bsp,
        &PeakPickConfig {
            k: 0.85,
            variance: VarianceMode::StandardWeighted,
        },
    )
    .expect("profile is nonempty");

    let svg = render_bsp_panel(melody, &bsp, &truth, Some(&pred));
    let out = std::env::temp_dir().join("melseg_profile.svg");
    std::fs::write(&out, &svg).expect("temp dir is writable");
    println!(
        "wrote {} ({} notes, {} truth boundaries, {} predicted)",
        out.display(),
        melody.notes.len(),
        truth.iter().filter(|t| **t != 0).count(),
        pred.iter().filter(|p| **p != 0).count()
    );
    println!("open it in a browser; the same panel is available as `melseg plot`");
}
