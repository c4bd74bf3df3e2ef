//! Encode a melody as one-hot viewpoint n-grams and inspect the bit layout.
//!
//! Each note occupies 41 binary columns with the default bins:
//! absolute interval (13) + contour (3) + inter-onset interval (16) +
//! offset-to-onset gap (9). An n-gram row concatenates n such blocks;
//! notes before the melody start are noise-padded from the row's seed.

use melseg::corpus::parse_melody;
use melseg::encoding::{encode_melody, note_symbol, symbol_bits, ViewpointConfig};

const MELODY_CSV: &str = "\
onset_16th,duration_16th,midi_pitch,phrase_start
0,2,60,1
2,2,64,0
4,4,62,0
12,2,62,1
";

fn main() {
    let cfg = ViewpointConfig::default();
    println!(
        "viewpoint bins: interval {} + contour {} + ioi {} + ooi {} = {} columns per note",
        cfg.abs_interval_bins,
        cfg.contour_bins,
        cfg.ioi_bins,
        cfg.ooi_bins,
        cfg.note_width()
    );

    let melody = parse_melody(MELODY_CSV, "demo").expect("fixture parses");
    println!("\nper-note symbols and their set bits:");
    let mut prev = None;
    for (i, note) in melody.notes.iter().enumerate() {
        let sym = note_symbol(prev, note, &cfg);
        let bits = symbol_bits(&sym, &cfg);
        println!("note {i}: {sym:?} -> set bits {bits:?}");
        prev = Some(note);
    }

    let n = 2;
    let batch = encode_melody(&melody, n, &cfg, 0);
    println!(
        "\n{}-gram batch: {} rows x {} columns",
        n,
        batch.len(),
        batch.row_width()
    );
    for (row, ((id, t), padded)) in batch.row_meta.iter().zip(&batch.padded_flags).enumerate() {
        println!(
            "row {row}: melody `{id}` note {t}{}",
            if *padded { " (noise-padded context)" } else { "" }
        );
    }

    // Rows render as a portable bitmap for eyeballing the sparsity pattern.
    println!("\nPBM dump (one row per n-gram, 1 = set bit):");
    print!("{}", batch.to_pbm());
}
