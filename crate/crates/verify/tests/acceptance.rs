//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs under `cargo test` with its own harness so the report is always
//! printed; exits nonzero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use noncomp_core::evalharness::{macro_f1, pearson, top_subset};
use noncomp_core::pipeline::{run_synthetic, study_file, Workspace};
use noncomp_core::ratings::{
    candidate_items, compute_ratings, ratings_csv, to_variant, CandidateItems, PhraseSentiment, VariantKey,
};
use noncomp_core::study::{assign_batches, krippendorff_alpha_ordinal, quality_gate, GateThresholds, Phase};
use noncomp_core::synthetic::{AnnotatorParams, ModelParams, SynthParams};
use noncomp_core::{NonCompRating, PipelineConfig, RatingVariant, Response, Side, StudyItem};
use noncomp_verify::{alpha_pairwise, direct_rating};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- 1

fn sentiment(id: &str, mean: f64, flagged: bool) -> (String, PhraseSentiment) {
    (
        id.to_string(),
        PhraseSentiment {
            item_id: id.to_string(),
            mean_label: mean,
            n_annotations: 3,
            flagged_ungrammatical: flagged,
        },
    )
}

fn layout(c: u64, controls: usize) -> CandidateItems {
    CandidateItems {
        candidate_id: c,
        text_a: format!("a{c}"),
        text_b: format!("b{c}"),
        natural: format!("{c}-n"),
        controls_a: (0..controls).map(|n| format!("{c}-a{n}")).collect(),
        controls_b: (0..controls).map(|n| format!("{c}-b{n}")).collect(),
    }
}

fn rating_arithmetic() -> Check {
    // Controls for A: 4/3, 1, 4/3 (mean 11/9); B controls at 5.
    let mut s: BTreeMap<_, _> = [sentiment("1-n", 16.0 / 3.0, false)].into();
    for (n, v) in [4.0 / 3.0, 1.0, 4.0 / 3.0].into_iter().enumerate() {
        s.extend([sentiment(&format!("1-a{n}"), v, false), sentiment(&format!("1-b{n}"), 5.0, false)]);
    }
    let mut l = layout(1, 3);
    l.text_a = "a nearly terminal case".into();
    l.text_b = "of the cutes".into();
    let r = compute_ratings(&s, &[l], &Default::default());
    let a = r[0].rating_a.ok_or("side A excluded")?;
    let err = (a - (16.0 / 3.0 - 11.0 / 9.0)).abs();
    ensure!(err < 1e-12, "rating {a} is {err:e} from 37/9");
    let csv = ok(ratings_csv(&r))?;
    let row = csv.lines().nth(1).ok_or("no CSV row")?;
    ensure!(
        row == "1,a nearly terminal case,of the cutes,4.11,0.33,4.11,4.11,1,1,5.33",
        "CSV row {row:?}"
    );
    Ok(format!("rating 4.11, sentiment 5.33, |error| {err:.1e}"))
}

// ---------------------------------------------------------------- 2

fn read_json<T: serde::de::DeserializeOwned>(ws: &Workspace, name: &str) -> Result<T, String> {
    let text = ok(fs::read_to_string(ws.path(name)))?;
    ok(serde_json::from_str(&text))
}

fn structural_counts() -> Check {
    let dir = ok(tempfile::tempdir())?;
    let ws = ok(Workspace::open(dir.path(), PipelineConfig::default()))?;
    let annotators = AnnotatorParams::default();
    ok(ws.synth_corpus(&SynthParams::default()))?;
    ok(ws.select_candidates())?;
    ok(ws.pools_build())?;
    ok(ws.synth_curate())?;
    ok(ws.pools_import(None))?;
    ok(ws.study_gen(Phase::One))?;
    ok(ws.synth_respond(Phase::One, &annotators))?;
    let filter = ok(ws.study_filter())?;
    ensure!(filter["survivors"] == 259, "survivors {}", filter["survivors"]);
    let gen = ok(ws.study_gen(Phase::Two))?;
    ensure!(gen["items"] == 1813, "study-2 items {}", gen["items"]);

    // Flag 109 of the 1813 items in every response that covers them.
    ok(ws.synth_respond(Phase::Two, &annotators))?;
    let items: Vec<StudyItem> = read_json(&ws, &study_file(Phase::Two, "items.json"))?;
    let ids: Vec<&str> = items.iter().map(|i| i.item_id.as_str()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let flagged: HashSet<&str> = ids.choose_multiple(&mut rng, 109).copied().collect();
    let path = ws.path(&study_file(Phase::Two, "responses.jsonl"));
    let mut rows: Vec<Response> = ok(fs::read_to_string(&path))?
        .lines()
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    for r in &mut rows {
        r.ungrammatical = flagged.contains(r.item_id.as_str());
    }
    ok(fs::write(&path, noncomp_core::study::responses_to_jsonl(&rows)))?;

    let summary = ok(ws.ratings_compute())?;
    ensure!(summary["flagged_items"] == 109, "flagged items {}", summary["flagged_items"]);
    let ratings: Vec<NonCompRating> = read_json(&ws, "ratings.json")?;
    ensure!(ratings.len() == 259, "{} rated candidates", ratings.len());
    let all = to_variant(&ratings, RatingVariant::All);
    let clean = to_variant(&ratings, RatingVariant::AllClean);

    let mut expected = BTreeSet::new();
    for c in ok(candidate_items(&items))? {
        for side in Side::BOTH {
            let touched =
                flagged.contains(c.natural.as_str()) || c.controls(side).iter().any(|i| flagged.contains(i.as_str()));
            let key = VariantKey {
                candidate_id: c.candidate_id,
                side: Some(side),
            };
            if !touched && all.contains_key(&key) {
                expected.insert(key);
            }
        }
    }
    let got: BTreeSet<VariantKey> = clean.keys().copied().collect();
    ensure!(got == expected, "AllClean has {} entries, oracle {}", got.len(), expected.len());
    Ok(format!(
        "259 survivors, 1813 items, 109 flagged, AllClean {}/{} entries",
        got.len(),
        all.len()
    ))
}

// ---------------------------------------------------------------- 3

fn batch_instance(u: usize, p: usize) -> Result<BTreeSet<usize>, String> {
    let ids: Vec<String> = (0..u).map(|i| format!("i{i}")).collect();
    let batches = ok(assign_batches(&ids, p, 3, 42))?;
    ensure!(batches.len() == p, "{} batches", batches.len());
    let mut count: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for b in &batches {
        for id in &b.item_ids {
            count.entry(id).or_default().push(b.batch_id);
        }
    }
    ensure!(count.len() == u, "{} of {u} items assigned", count.len());
    for (id, bs) in &count {
        let distinct: BTreeSet<_> = bs.iter().collect();
        ensure!(bs.len() == 3 && distinct.len() == 3, "{id} in batches {bs:?}");
    }
    Ok(batches.iter().map(|b| b.item_ids.len()).collect())
}

fn batch_allocation() -> Check {
    let sizes = batch_instance(1813, 90)?;
    ensure!(sizes.iter().all(|s| [60, 61].contains(s)), "study-2 sizes {sizes:?}");
    let u: usize = 968;
    let (lo, hi) = (u * 3 / 57, (u * 3).div_ceil(57));
    let sizes1 = batch_instance(u, 57)?;
    ensure!(sizes1.iter().all(|s| *s == lo || *s == hi), "study-1 sizes {sizes1:?}");
    Ok(format!("U=1813 P=90 sizes {sizes:?}; U={u} P=57 sizes {sizes1:?}"))
}

// ---------------------------------------------------------------- 4

fn agreement_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0f64;
    let mut done = 0;
    while done < 200 {
        let n_units = rng.random_range(1..=8);
        let spread = rng.random_range(0..=6u8);
        let units: Vec<Vec<u8>> = (0..n_units)
            .map(|_| {
                let base = rng.random_range(0..=6 - spread);
                (0..rng.random_range(0..=5)).map(|_| base + rng.random_range(0..=spread)).collect()
            })
            .collect();
        let Some(want) = alpha_pairwise(&units) else {
            ensure!(krippendorff_alpha_ordinal(&units).is_err(), "{units:?} has no pairable unit but no error");
            continue;
        };
        let got = ok(krippendorff_alpha_ordinal(&units))?.alpha;
        let diff = (got - want).abs();
        ensure!(diff <= 1e-12, "{units:?}: alpha {got} vs pairwise {want}");
        worst = worst.max(diff);
        done += 1;
    }
    let perfect = vec![vec![0, 0, 0], vec![3, 3], vec![6, 6, 6, 6], vec![2, 2, 2]];
    let a = ok(krippendorff_alpha_ordinal(&perfect))?.alpha;
    ensure!(a == 1.0, "perfect agreement gives {a}");
    Ok(format!("200 instances, max |diff| {worst:.1e}; perfect agreement 1.0"))
}

// ---------------------------------------------------------------- 5

fn ratings_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut entries = 0;
    for table in 0..100 {
        let n = rng.random_range(1..=30);
        let cands: Vec<CandidateItems> = (0..n).map(|c| layout(c, 3)).collect();
        let mut s = BTreeMap::new();
        for c in &cands {
            for id in std::iter::once(&c.natural).chain(&c.controls_a).chain(&c.controls_b) {
                if rng.random_bool(0.1) {
                    continue;
                }
                let mean = f64::from(rng.random_range(0..=18u8)) / 3.0;
                s.extend([sentiment(id, mean, rng.random_bool(0.1))]);
            }
        }
        let ratings = compute_ratings(&s, &cands, &Default::default());
        let v: BTreeMap<RatingVariant, _> = RatingVariant::ALL.iter().map(|&k| (k, to_variant(&ratings, k))).collect();
        for (c, r) in cands.iter().zip(&ratings) {
            let d = direct_rating(c, &s);
            ensure!(
                r.rating_a == d.a && r.rating_b == d.b,
                "table {table} candidate {}: ({:?}, {:?}) vs direct ({:?}, {:?})",
                c.candidate_id,
                r.rating_a,
                r.rating_b,
                d.a,
                d.b
            );
            let max = match (d.a, d.b) {
                (Some(a), Some(b)) => Some(if b.abs() > a.abs() { b } else { a }),
                (a, b) => a.or(b),
            };
            let whole = VariantKey {
                candidate_id: c.candidate_id,
                side: None,
            };
            ensure!(v[&RatingVariant::Max].get(&whole).copied() == max, "table {table}: Max mismatch");
            let max_abs = v[&RatingVariant::MaxAbs].get(&whole).copied();
            ensure!(max_abs == max.map(f64::abs), "table {table}: MaxAbs != |Max|");
            let larger = match (d.a, d.b) {
                (None, None) => None,
                (a, b) => Some(a.map_or(0.0, f64::abs).max(b.map_or(0.0, f64::abs))),
            };
            ensure!(max_abs == larger, "table {table}: MaxAbs != max(|r_A|, |r_B|)");
            for (side, rating, clean) in [(Side::A, d.a, d.clean_a), (Side::B, d.b, d.clean_b)] {
                let key = VariantKey {
                    candidate_id: c.candidate_id,
                    side: Some(side),
                };
                ensure!(v[&RatingVariant::All].get(&key).copied() == rating, "table {table}: All mismatch");
                ensure!(
                    v[&RatingVariant::AllAbs].get(&key).copied() == rating.map(f64::abs),
                    "table {table}: AllAbs != |All|"
                );
                let want = if clean { rating } else { None };
                ensure!(v[&RatingVariant::AllClean].get(&key).copied() == want, "table {table}: AllClean mismatch");
            }
        }
        for (k, x) in &v[&RatingVariant::AllClean] {
            ensure!(v[&RatingVariant::All].get(k) == Some(x), "table {table}: AllClean not within All");
        }
        entries += v[&RatingVariant::All].len();
    }
    Ok(format!("100 tables, {entries} per-side ratings, all five variants match"))
}

// ---------------------------------------------------------------- 6

fn keyed(v: &[f64]) -> BTreeMap<usize, f64> {
    v.iter().copied().enumerate().collect()
}

fn evaluation_metrics() -> Check {
    let r = ok(pearson(&keyed(&[1.0, 2.0, 3.0]), &keyed(&[2.0, 2.0, 5.0])))?.r;
    ensure!((r - 0.8660).abs() < 1e-4, "fixture r = {r}");

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..500 {
        let n = rng.random_range(3..40);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let Ok(base) = pearson(&keyed(&x), &keyed(&y)) else { continue };
        let a = rng.random_range(0.1..10.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let b = rng.random_range(-100.0..100.0);
        let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let ay: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let rx = ok(pearson(&keyed(&ax), &keyed(&y)))?.r;
        let ry = ok(pearson(&keyed(&x), &keyed(&ay)))?.r;
        let want = a.signum() * base.r;
        ensure!(
            (rx - want).abs() < 1e-9 && (ry - want).abs() < 1e-9,
            "case {case}: a={a} b={b}: {rx}, {ry} vs {want}"
        );
    }

    let labels: BTreeMap<usize, u8> = [(0, 0), (1, 0), (2, 1)].into();
    let preds: BTreeMap<usize, u8> = [(0, 0), (1, 1), (2, 1)].into();
    let f1 = ok(macro_f1(&preds, &labels))?;
    ensure!(f1 == 2.0 / 3.0, "macro-F1 {f1} != 2/3");
    let f1_self = ok(macro_f1(&labels, &labels))?;
    ensure!(f1_self == 1.0, "perfect macro-F1 {f1_self}");

    let human: BTreeMap<VariantKey, f64> = (0..300)
        .map(|c| {
            let v = f64::from(rng.random_range(0..=40u8)) / 9.0;
            (VariantKey { candidate_id: c, side: None }, v)
        })
        .collect();
    let brute: BTreeSet<u64> = human.iter().filter(|(_, &v)| v > 1.0).map(|(k, _)| k.candidate_id).collect();
    let top = top_subset(&human, 1.0);
    ensure!(top == brute, "top_subset {} vs brute force {}", top.len(), brute.len());

    let listed = [
        4.11, -4.11, -3.00, -2.56, -2.56, 2.33, -2.22, -1.89, -1.89, -1.78, -1.67, -1.67, 1.56, -1.56, 1.56, -1.56,
        1.56, -1.56, 1.56, 1.56, 1.56, -1.44, -1.44, -1.44, -1.44, -1.44, 1.44, 1.44, -1.33, 1.33, 1.33, 1.33, 1.33,
        -1.33, 1.33, 1.33, -1.22, -1.22, 1.22, -1.22, -1.22, -1.22, -1.22, 1.22, -1.22, -1.22, 1.22, 1.22, -1.22,
        1.11, 1.11, 1.11, -1.11, 1.11, -1.11, -1.11, 1.11, 1.11, 1.11, 1.11,
    ];
    let mut table: BTreeMap<VariantKey, f64> = listed
        .iter()
        .enumerate()
        .map(|(i, v): (usize, &f64)| (VariantKey { candidate_id: i as u64, side: None }, v.abs()))
        .collect();
    table.insert(VariantKey { candidate_id: 1000, side: None }, 1.00);
    let top = top_subset(&table, 1.0);
    ensure!(top.len() == listed.len() && !top.contains(&1000), "table subset {} of {}", top.len(), listed.len());
    Ok(format!("r=0.8660, 500 affine cases, macro-F1 2/3, top_subset {} of 300", brute.len()))
}

// ---------------------------------------------------------------- 7

fn gate(labels: &[u8], refs: &[u8]) -> Result<bool, String> {
    let responses: Vec<(String, u8)> = labels.iter().enumerate().map(|(i, &l)| (format!("p{i}"), l)).collect();
    let references = refs.iter().enumerate().map(|(i, &r)| (format!("p{i}"), r)).collect();
    Ok(ok(quality_gate("x", &responses, &references, GateThresholds::default()))?.pass)
}

fn gate_behavior() -> Check {
    let refs: Vec<u8> = (0..7).collect();
    ensure!(gate(&refs, &refs)?, "identity fails");
    ensure!(!gate(&[3; 7], &refs)?, "constant passes");
    ensure!(!gate(&[1, 2, 3, 4, 5, 6, 4], &refs)?, "mae 8/7 passes");

    // Start from a passing answer sheet, then bring one answer strictly
    // closer to its reference.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut flips = Vec::new();
    for _ in 0..1000 {
        let before = loop {
            let labels: Vec<u8> = refs
                .iter()
                .map(|&r| (i16::from(r) + rng.random_range(-2..=2)).clamp(0, 6) as u8)
                .collect();
            if gate(&labels, &refs)? && labels != refs {
                break labels;
            }
        };
        let off: Vec<usize> = (0..7).filter(|&i| before[i] != refs[i]).collect();
        let i = *off.choose(&mut rng).ok_or("no error to reduce")?;
        let err = (i16::from(before[i]) - i16::from(refs[i])).abs();
        let closer: Vec<u8> = (0..=6u8)
            .filter(|&v| (i16::from(v) - i16::from(refs[i])).abs() < err)
            .collect();
        let mut after = before.clone();
        after[i] = *closer.choose(&mut rng).ok_or("nothing closer")?;
        if !gate(&after, &refs)? {
            flips.push((before, after));
        }
    }
    ensure!(
        flips.is_empty(),
        "fixtures hold; monotonicity broken by {} of 1000 perturbations, e.g. {:?} passes but {:?} fails",
        flips.len(),
        flips[0].0,
        flips[0].1
    );
    Ok("fixtures hold; 1000 perturbations monotone".into())
}

// ---------------------------------------------------------------- 8

fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for e in ok(fs::read_dir(dir))? {
        let e = ok(e)?;
        if ok(e.file_type())?.is_file() {
            out.insert(e.file_name().to_string_lossy().into_owned(), ok(fs::read(e.path()))?);
        }
    }
    Ok(out)
}

fn determinism() -> Check {
    let mut snaps = Vec::new();
    for _ in 0..2 {
        let dir = ok(tempfile::tempdir())?;
        let ws = ok(Workspace::open(dir.path(), PipelineConfig::default()))?;
        let annotators = AnnotatorParams {
            noise: 0.2,
            flag_rate: 0.05,
            careless: 3,
            ..AnnotatorParams::default()
        };
        ok(run_synthetic(&ws, &SynthParams::default(), &annotators, &ModelParams::default()))?;
        snaps.push(snapshot(dir.path())?);
    }
    let (a, b) = (&snaps[0], &snaps[1]);
    ensure!(
        a.keys().eq(b.keys()),
        "file sets differ: {:?} vs {:?}",
        a.keys().collect::<Vec<_>>(),
        b.keys().collect::<Vec<_>>()
    );
    let differing: Vec<&String> = a.iter().filter(|(k, v)| b[*k] != **v).map(|(k, _)| k).collect();
    ensure!(differing.is_empty(), "differing artifacts {differing:?}");
    let bytes: usize = a.values().map(Vec::len).sum();
    Ok(format!("{} artifacts, {bytes} bytes identical", a.len()))
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    type Criterion = (u8, &'static str, Option<u64>, fn() -> Check);
    let criteria: [Criterion; 8] = [
        (1, "rating arithmetic anchor", Some(1), rating_arithmetic),
        (2, "structural counts", Some(5), structural_counts),
        (3, "batch allocation", Some(5), batch_allocation),
        (4, "agreement oracle", Some(10), agreement_oracle),
        (5, "ratings oracle", Some(10), ratings_oracle),
        (6, "evaluation metrics", None, evaluation_metrics),
        (7, "gate behavior", None, gate_behavior),
        (8, "determinism", None, determinism),
    ];
    let mut failed = 0;
    for (n, title, limit, f) in criteria {
        let start = Instant::now();
        let mut result = f();
        let took = start.elapsed();
        if let (Ok(_), Some(secs)) = (&result, limit) {
            if took > Duration::from_secs(secs) {
                result = Err(format!("took {took:.2?}, limit {secs} s"));
            }
        }
        match result {
            Ok(detail) => println!("criterion {n} PASS  {title}: {detail} [{took:.2?}]"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} FAIL  {title}: {why} [{took:.2?}]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
