//! Input generators shared by the benchmarks.

use std::collections::BTreeMap;

use noncomp_core::ratings::{CandidateItems, PhraseSentiment};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` items with `k` labels each, scattered around a per-item center.
pub fn label_units(n: usize, k: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let center: i16 = rng.random_range(0..=6);
            (0..k)
                .map(|_| (center + rng.random_range(-1..=1)).clamp(0, 6) as u8)
                .collect()
        })
        .collect()
}

/// Study-2 layout and sentiments for `n` candidates with three controls per side.
pub fn rating_table(n: u64, seed: u64) -> (Vec<CandidateItems>, BTreeMap<String, PhraseSentiment>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentiments = BTreeMap::new();
    let layout: Vec<CandidateItems> = (0..n)
        .map(|c| CandidateItems {
            candidate_id: c,
            text_a: format!("a{c}"),
            text_b: format!("b{c}"),
            natural: format!("{c}-n"),
            controls_a: (0..3).map(|i| format!("{c}-a{i}")).collect(),
            controls_b: (0..3).map(|i| format!("{c}-b{i}")).collect(),
        })
        .collect();
    for c in &layout {
        for id in std::iter::once(&c.natural).chain(&c.controls_a).chain(&c.controls_b) {
            sentiments.insert(
                id.clone(),
                PhraseSentiment {
                    item_id: id.clone(),
                    mean_label: f64::from(rng.random_range(0..=18u8)) / 3.0,
                    n_annotations: 3,
                    flagged_ungrammatical: rng.random_bool(0.06),
                },
            );
        }
    }
    (layout, sentiments)
}

/// Prediction TSV with `seeds` blocks of `rows` items.
pub fn prediction_tsv(rows: usize, seeds: u64, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("item_id\tseed\tp0\tp1\tp2\tp3\tp4\tp5\tp6\n");
    for s in 0..seeds {
        for r in 0..rows {
            let w: Vec<f64> = (0..7).map(|_| rng.random_range(0.01..1.0)).collect();
            let total: f64 = w.iter().sum();
            out.push_str(&format!("item-{r}\t{s}"));
            for p in w {
                out.push_str(&format!("\t{}", p / total));
            }
            out.push('\n');
        }
    }
    out
}
