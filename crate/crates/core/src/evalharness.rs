//! Scoring sentiment models against the human ratings.
//!
//! Models are not run here. Their class distributions arrive as a TSV of
//! `item_id<TAB>seed<TAB>p0..p6`, and ratings are recomputed from the
//! seed-averaged predictions exactly as for the human data.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{EvalConfig, ModelSentiment, RatingsConfig};
use crate::corpus::{Corpus, PhraseId};
use crate::error::{Error, Result};
use crate::ratings::{
    compute_ratings, to_variant, CandidateItems, NonCompRating, PhraseSentiment, RatingVariant, VariantKey,
};
use crate::stats;
use crate::study::ItemId;

pub const N_CLASSES: usize = 7;

/// Equal-width seven-way binning of an SST value, closed at 1.0.
pub fn sst7_convert(value: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::OutOfRange {
            what: "sst value",
            value: value.to_string(),
            range: "[0, 1]",
        });
    }
    Ok(((value * 7.0).floor() as u8).min(6))
}

/// Item id under which a model predicts a treebank phrase.
pub fn sst_item_id(phrase_id: PhraseId) -> ItemId {
    format!("sst-{phrase_id}")
}

/// Gold SST-7 labels for every treebank phrase, keyed by [`sst_item_id`].
pub fn sst_labels(corpus: &Corpus) -> Result<BTreeMap<ItemId, u8>> {
    corpus
        .phrases
        .values()
        .map(|p| Ok((sst_item_id(p.phrase_id), sst7_convert(p.sst_value)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPredictionSet {
    pub model_name: String,
    pub seed: u64,
    pub rows: BTreeMap<ItemId, [f64; N_CLASSES]>,
}

/// Parse a prediction file into one set per seed, ordered by seed. A header
/// line starting with `item_id` is skipped.
pub fn parse_predictions(text: &str, model_name: &str) -> Result<Vec<ModelPredictionSet>> {
    let mut by_seed: BTreeMap<u64, BTreeMap<ItemId, [f64; N_CLASSES]>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || (line_no == 1 && line.starts_with("item_id")) {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 2 + N_CLASSES {
            return Err(Error::parse(
                "predictions",
                line_no,
                format!("expected {} columns, got {}", 2 + N_CLASSES, f.len()),
            ));
        }
        let seed: u64 = f[1]
            .trim()
            .parse()
            .map_err(|e| Error::parse("predictions", line_no, format!("seed: {e}")))?;
        let mut p = [0.0f64; N_CLASSES];
        for (c, v) in f[2..].iter().enumerate() {
            p[c] = v
                .trim()
                .parse()
                .map_err(|e| Error::parse("predictions", line_no, format!("p{c}: {e}")))?;
        }
        if p.iter().any(|&x| !x.is_finite() || x < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::parse(
                "predictions",
                line_no,
                "probabilities must be non-negative and sum to 1",
            ));
        }
        let item = f[0].trim().to_string();
        if by_seed.entry(seed).or_default().insert(item.clone(), p).is_some() {
            return Err(Error::parse(
                "predictions",
                line_no,
                format!("duplicate row for {item} seed {seed}"),
            ));
        }
    }
    Ok(by_seed
        .into_iter()
        .map(|(seed, rows)| ModelPredictionSet {
            model_name: model_name.to_string(),
            seed,
            rows,
        })
        .collect())
}

pub fn read_predictions(path: &Path, model_name: &str) -> Result<Vec<ModelPredictionSet>> {
    parse_predictions(&crate::corpus::read_file(path)?, model_name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAveraged {
    pub probs: [f64; N_CLASSES],
    pub expected_sentiment: f64,
    pub argmax_class: u8,
}

impl SeedAveraged {
    pub fn sentiment(&self, mode: ModelSentiment) -> f64 {
        match mode {
            ModelSentiment::Expectation => self.expected_sentiment,
            ModelSentiment::Argmax => f64::from(self.argmax_class),
        }
    }
}

/// Elementwise mean of the seeds' distributions, with the expected class
/// and the argmax (lowest class on ties).
pub fn seed_average(sets: &[ModelPredictionSet]) -> Result<BTreeMap<ItemId, SeedAveraged>> {
    let first = sets
        .first()
        .ok_or_else(|| Error::Invalid("no prediction sets".into()))?;
    for s in &sets[1..] {
        if !s.rows.keys().eq(first.rows.keys()) {
            return Err(Error::Invalid(format!(
                "seed {} covers different items than seed {}",
                s.seed, first.seed
            )));
        }
    }
    let n = sets.len() as f64;
    Ok(first
        .rows
        .keys()
        .map(|id| {
            let mut probs = [0.0; N_CLASSES];
            for s in sets {
                for (acc, p) in probs.iter_mut().zip(&s.rows[id]) {
                    *acc += p;
                }
            }
            for p in &mut probs {
                *p /= n;
            }
            let expected_sentiment = probs.iter().enumerate().map(|(c, p)| c as f64 * p).sum();
            let mut argmax = 0;
            for c in 1..N_CLASSES {
                if probs[c] > probs[argmax] {
                    argmax = c;
                }
            }
            (
                id.clone(),
                SeedAveraged {
                    probs,
                    expected_sentiment,
                    argmax_class: argmax as u8,
                },
            )
        })
        .collect())
}

/// Ratings recomputed with model sentiments in place of human means. The
/// human ungrammaticality flags are carried over, so the same controls are
/// used on both sides and `AllClean` keeps the same entries.
pub fn model_ratings(
    model: &BTreeMap<ItemId, f64>,
    human: &BTreeMap<ItemId, PhraseSentiment>,
    candidates: &[CandidateItems],
    cfg: &RatingsConfig,
) -> Result<Vec<NonCompRating>> {
    let mut sentiments = BTreeMap::new();
    for c in candidates {
        for id in c.item_ids() {
            let v = model.get(id).ok_or_else(|| {
                Error::Invalid(format!("no model prediction for item {id} of candidate {}", c.candidate_id))
            })?;
            let h = human.get(id);
            sentiments.insert(
                id.clone(),
                PhraseSentiment {
                    item_id: id.clone(),
                    mean_label: *v,
                    n_annotations: h.map_or(0, |h| h.n_annotations),
                    flagged_ungrammatical: h.is_some_and(|h| h.flagged_ungrammatical),
                },
            );
        }
    }
    Ok(compute_ratings(&sentiments, candidates, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub n_pairs: usize,
    /// Keys present on only one side.
    pub n_unmatched: usize,
}

/// Pearson's r over the keys both vectors share.
pub fn pearson<K: Ord>(x: &BTreeMap<K, f64>, y: &BTreeMap<K, f64>) -> Result<Correlation> {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (k, a) in x {
        if let Some(b) = y.get(k) {
            xs.push(*a);
            ys.push(*b);
        }
    }
    let n_unmatched = x.len() + y.len() - 2 * xs.len();
    Ok(Correlation {
        r: stats::pearson(&xs, &ys)?,
        n_pairs: xs.len(),
        n_unmatched,
    })
}

/// Unweighted mean of per-class F1 over the classes that occur in either
/// labels or predictions. Keys missing on either side are ignored.
pub fn macro_f1<K: Ord>(predictions: &BTreeMap<K, u8>, labels: &BTreeMap<K, u8>) -> Result<f64> {
    let mut tp = [0usize; N_CLASSES];
    let mut pred_n = [0usize; N_CLASSES];
    let mut gold_n = [0usize; N_CLASSES];
    let mut n = 0;
    for (k, &p) in predictions {
        let Some(&g) = labels.get(k) else { continue };
        if usize::from(p) >= N_CLASSES || usize::from(g) >= N_CLASSES {
            return Err(Error::OutOfRange {
                what: "class",
                value: p.max(g).to_string(),
                range: "0..=6",
            });
        }
        n += 1;
        pred_n[usize::from(p)] += 1;
        gold_n[usize::from(g)] += 1;
        if p == g {
            tp[usize::from(p)] += 1;
        }
    }
    if n == 0 {
        return Err(Error::Undefined("macro-F1 of an empty set".into()));
    }
    let mut sum = 0.0;
    let mut classes = 0;
    for c in 0..N_CLASSES {
        if pred_n[c] == 0 && gold_n[c] == 0 {
            continue;
        }
        classes += 1;
        let precision = if pred_n[c] == 0 { 0.0 } else { tp[c] as f64 / pred_n[c] as f64 };
        let recall = if gold_n[c] == 0 { 0.0 } else { tp[c] as f64 / gold_n[c] as f64 };
        if precision + recall > 0.0 {
            sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    Ok(sum / classes as f64)
}

/// Nearest-integer class for each human mean (halves round up).
pub fn human_labels_for_f1(sentiments: &BTreeMap<ItemId, PhraseSentiment>) -> Result<BTreeMap<ItemId, u8>> {
    sentiments
        .iter()
        .map(|(id, s)| {
            if !(0.0..=6.0).contains(&s.mean_label) {
                return Err(Error::OutOfRange {
                    what: "mean label",
                    value: s.mean_label.to_string(),
                    range: "[0, 6]",
                });
            }
            Ok((id.clone(), (s.mean_label + 0.5 + 1e-9).floor() as u8))
        })
        .collect()
}

/// Candidates whose MaxAbs rating is strictly above `threshold`.
pub fn top_subset(max_abs: &BTreeMap<VariantKey, f64>, threshold: f64) -> BTreeSet<PhraseId> {
    max_abs
        .iter()
        .filter(|(_, &v)| v > threshold)
        .map(|(k, _)| k.candidate_id)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    pub n_seeds: usize,
    pub model_sentiment: ModelSentiment,
    /// Per variant; `None` when r is undefined (constant ratings, < 2 pairs).
    pub pearson: BTreeMap<RatingVariant, Option<f64>>,
    pub pairs: BTreeMap<RatingVariant, usize>,
    pub f1_sst: Option<f64>,
    pub f1_all_phrases: Option<f64>,
    pub f1_top: Option<f64>,
    pub n_top: usize,
    pub warnings: Vec<String>,
}

pub struct EvalInputs<'a> {
    pub model_name: &'a str,
    pub predictions: &'a [ModelPredictionSet],
    pub human_sentiments: &'a BTreeMap<ItemId, PhraseSentiment>,
    pub human_ratings: &'a [NonCompRating],
    pub candidates: &'a [CandidateItems],
    /// Gold labels for treebank rows, if the model predicted any.
    pub sst_labels: &'a BTreeMap<ItemId, u8>,
}

pub fn evaluate(inputs: &EvalInputs<'_>, ratings_cfg: &RatingsConfig, cfg: &EvalConfig) -> Result<EvalReport> {
    let averaged = seed_average(inputs.predictions)?;
    let mut warnings = Vec::new();
    let model_sent: BTreeMap<ItemId, f64> = averaged
        .iter()
        .map(|(k, v)| (k.clone(), v.sentiment(cfg.model_sentiment)))
        .collect();
    let model = model_ratings(&model_sent, inputs.human_sentiments, inputs.candidates, ratings_cfg)?;

    let mut pearson_out = BTreeMap::new();
    let mut pairs = BTreeMap::new();
    for v in RatingVariant::ALL {
        let h = to_variant(inputs.human_ratings, v);
        let m = to_variant(&model, v);
        match pearson(&h, &m) {
            Ok(c) => {
                pearson_out.insert(v, Some(c.r));
                pairs.insert(v, c.n_pairs);
            }
            Err(e) => {
                warnings.push(format!("{v}: {e}"));
                pearson_out.insert(v, None);
                pairs.insert(v, h.keys().filter(|k| m.contains_key(k)).count());
            }
        }
    }

    let predicted: BTreeMap<ItemId, u8> = averaged.iter().map(|(k, v)| (k.clone(), v.argmax_class)).collect();
    let mut f1 = |name: &str, labels: &BTreeMap<ItemId, u8>| match macro_f1(&predicted, labels) {
        Ok(v) => Some(v),
        Err(e) => {
            warnings.push(format!("{name}: {e}"));
            None
        }
    };
    let f1_sst = if inputs.sst_labels.keys().any(|k| predicted.contains_key(k)) {
        f1("f1_sst", inputs.sst_labels)
    } else {
        None
    };
    let study_ids: BTreeSet<&ItemId> = inputs.candidates.iter().flat_map(|c| c.item_ids()).collect();
    let human_labels: BTreeMap<ItemId, u8> = human_labels_for_f1(inputs.human_sentiments)?
        .into_iter()
        .filter(|(k, _)| study_ids.contains(k))
        .collect();
    let f1_all = f1("f1_all_phrases", &human_labels);
    let top = top_subset(&to_variant(inputs.human_ratings, RatingVariant::MaxAbs), cfg.top_threshold);
    let top_ids: BTreeSet<&ItemId> = inputs
        .candidates
        .iter()
        .filter(|c| top.contains(&c.candidate_id))
        .flat_map(|c| c.item_ids())
        .collect();
    let top_labels: BTreeMap<ItemId, u8> = human_labels
        .iter()
        .filter(|(k, _)| top_ids.contains(k))
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    let f1_top = if top_labels.is_empty() { None } else { f1("f1_top", &top_labels) };

    Ok(EvalReport {
        model_name: inputs.model_name.to_string(),
        n_seeds: inputs.predictions.len(),
        model_sentiment: cfg.model_sentiment,
        pearson: pearson_out,
        pairs,
        f1_sst,
        f1_all_phrases: f1_all,
        f1_top,
        n_top: top.len(),
        warnings,
    })
}
