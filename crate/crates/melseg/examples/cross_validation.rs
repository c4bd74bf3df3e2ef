//! Cross-validate two baseline pipelines and print the report documents.
//!
//! Melodies are assigned to folds by a seeded hash of their id, so the
//! partition is independent of corpus order. Each fold trains on the
//! other folds and evaluates on its own melodies; for profile pipelines
//! the picker threshold k is swept on the test output (an optimistic,
//! oracle choice, and the reports say so).

use melseg::evalharness::{
    emit_f_scores_csv, emit_text_table, generate_synthetic_corpus, run_cv, Pipeline,
    PipelineSpec, SynthSpec,
};

fn main() {
    let spec = SynthSpec {
        melodies: 60,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic_corpus(&spec, 13).expect("spec is valid");
    let folds = 5;
    let master_seed = 1;

    let mut reports = Vec::new();
    for pipeline in [Pipeline::Gpr2a, Pipeline::DigramTp] {
        let spec = PipelineSpec::new(pipeline, 2);
        println!("cross-validating {} ...", pipeline.name());
        let report = run_cv(&corpus, &spec, folds, master_seed).expect("cv runs");
        println!(
            "  best: k = {}, fold-mean F1 = {:.3}",
            report
                .best
                .k
                .map(|k| format!("{k:.2}"))
                .unwrap_or_else(|| "-".into()),
            report.best.f1
        );
        for agg in &report.aggregates {
            if let Some(k) = agg.k {
                println!("    k {k:.2}: P {:.3} R {:.3} F1 {:.3}", agg.precision, agg.recall, agg.f1);
            }
        }
        reports.push(report);
    }

    println!("\nbest F1 per method:\n{}", emit_f_scores_csv(&reports));
    println!("ranked table (computed rows pooled over folds, reference rows verbatim):\n");
    println!("{}", emit_text_table(&reports));
}
