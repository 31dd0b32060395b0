//! Non-compositionality ratings from study-2 sentiments.
//!
//! For a candidate "A B" with controls A'_n and B'_n,
//! `rating_A = s(A B) - mean_n s(A'_n B)` and symmetrically for B.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{CleanScope, RatingsConfig};
use crate::corpus::PhraseId;
use crate::error::{Error, Result};
use crate::select::Side;
use crate::study::{CombinationRole, ItemId, ItemKind, ItemSource, ResponseSet, StudyCatalog, StudyItem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseSentiment {
    pub item_id: ItemId,
    pub mean_label: f64,
    pub n_annotations: usize,
    pub flagged_ungrammatical: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregation {
    pub sentiments: BTreeMap<ItemId, PhraseSentiment>,
    /// Items below the annotation minimum, with the count they did get.
    pub omitted: BTreeMap<ItemId, usize>,
}

/// Mean label per study item over gate-passing participants. Items with fewer
/// than `min_annotations` labels are omitted and listed.
pub fn aggregate_sentiment(set: &ResponseSet, catalog: &StudyCatalog, min_annotations: usize) -> Aggregation {
    let mut labels: BTreeMap<&str, (Vec<u8>, bool)> = catalog
        .study_item_ids()
        .into_iter()
        .map(|id| (id, (Vec::new(), false)))
        .collect();
    for r in set.included(catalog) {
        if let Some((ls, flag)) = labels.get_mut(r.item_id.as_str()) {
            ls.push(r.label);
            *flag |= r.ungrammatical;
        }
    }
    let mut out = Aggregation::default();
    for (id, (ls, flagged)) in labels {
        if ls.len() < min_annotations.max(1) {
            out.omitted.insert(id.to_string(), ls.len());
            continue;
        }
        let mean_label = ls.iter().map(|&l| f64::from(l)).sum::<f64>() / ls.len() as f64;
        out.sentiments.insert(
            id.to_string(),
            PhraseSentiment {
                item_id: id.to_string(),
                mean_label,
                n_annotations: ls.len(),
                flagged_ungrammatical: flagged,
            },
        );
    }
    out
}

/// The seven study-2 items of one candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateItems {
    pub candidate_id: PhraseId,
    pub text_a: String,
    pub text_b: String,
    pub natural: ItemId,
    pub controls_a: Vec<ItemId>,
    pub controls_b: Vec<ItemId>,
}

impl CandidateItems {
    pub fn controls(&self, side: Side) -> &[ItemId] {
        match side {
            Side::A => &self.controls_a,
            Side::B => &self.controls_b,
        }
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &ItemId> {
        std::iter::once(&self.natural)
            .chain(&self.controls_a)
            .chain(&self.controls_b)
    }
}

/// Group study-2 combination items by candidate, in candidate-id order.
pub fn candidate_items(items: &[StudyItem]) -> Result<Vec<CandidateItems>> {
    type Parts<'a> = (Option<&'a StudyItem>, Vec<(u8, &'a ItemId)>, Vec<(u8, &'a ItemId)>);
    let mut by_cand: BTreeMap<PhraseId, Parts> = BTreeMap::new();
    for item in items.iter().filter(|i| i.kind == ItemKind::Combination) {
        let ItemSource::Combination { candidate_id, role } = &item.source else {
            return Err(Error::Invalid(format!("item {} has no candidate", item.item_id)));
        };
        let e = by_cand.entry(*candidate_id).or_default();
        match *role {
            CombinationRole::Natural => e.0 = Some(item),
            CombinationRole::ControlA(n) => e.1.push((n, &item.item_id)),
            CombinationRole::ControlB(n) => e.2.push((n, &item.item_id)),
        }
    }
    by_cand
        .into_iter()
        .map(|(candidate_id, (natural, mut a, mut b))| {
            let natural = natural
                .ok_or_else(|| Error::Invalid(format!("candidate {candidate_id} has no natural item")))?;
            if natural.segments.len() != 2 {
                return Err(Error::Invalid(format!("item {} needs two segments", natural.item_id)));
            }
            a.sort();
            b.sort();
            Ok(CandidateItems {
                candidate_id,
                text_a: natural.segments[0].clone(),
                text_b: natural.segments[1].clone(),
                natural: natural.item_id.clone(),
                controls_a: a.into_iter().map(|(_, id)| id.clone()).collect(),
                controls_b: b.into_iter().map(|(_, id)| id.clone()).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonCompRating {
    pub candidate_id: PhraseId,
    pub text_a: String,
    pub text_b: String,
    pub sentiment_ab: Option<f64>,
    pub rating_a: Option<f64>,
    pub rating_b: Option<f64>,
    pub excluded_a: bool,
    pub excluded_b: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason_a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason_b: Option<String>,
    pub controls_used_a: usize,
    pub controls_used_b: usize,
    /// Whether the side's entry survives `AllClean`.
    pub clean_a: bool,
    pub clean_b: bool,
}

impl NonCompRating {
    pub fn rating(&self, side: Side) -> Option<f64> {
        match side {
            Side::A => self.rating_a,
            Side::B => self.rating_b,
        }
    }

    pub fn clean(&self, side: Side) -> bool {
        match side {
            Side::A => self.clean_a,
            Side::B => self.clean_b,
        }
    }

    /// Signed rating of larger magnitude; ties and single sides resolve to
    /// whichever side is present, A first.
    pub fn max(&self) -> Option<f64> {
        match (self.rating_a, self.rating_b) {
            (Some(a), Some(b)) => Some(if b.abs() > a.abs() { b } else { a }),
            (a, b) => a.or(b),
        }
    }
}

struct SideResult {
    rating: Option<f64>,
    reason: Option<String>,
    used: usize,
    any_flag: bool,
}

fn rate_side(
    natural: f64,
    controls: &[ItemId],
    sentiments: &BTreeMap<ItemId, PhraseSentiment>,
    min_usable: usize,
) -> SideResult {
    let mut used = Vec::new();
    let mut any_flag = false;
    for id in controls {
        match sentiments.get(id) {
            Some(s) if s.flagged_ungrammatical => any_flag = true,
            Some(s) => used.push(s.mean_label),
            None => {}
        }
    }
    if used.len() < min_usable.max(1) {
        return SideResult {
            rating: None,
            reason: Some(format!("{} usable controls, need {min_usable}", used.len())),
            used: used.len(),
            any_flag,
        };
    }
    let mean = used.iter().sum::<f64>() / used.len() as f64;
    SideResult {
        rating: Some(natural - mean),
        reason: None,
        used: used.len(),
        any_flag,
    }
}

/// Ratings for every candidate. Flagged or missing control combinations are
/// left out of the mean; a side with fewer than `min_usable_controls`
/// remaining is excluded, as are both sides when "A B" itself has no
/// sentiment.
pub fn compute_ratings(
    sentiments: &BTreeMap<ItemId, PhraseSentiment>,
    candidates: &[CandidateItems],
    cfg: &RatingsConfig,
) -> Vec<NonCompRating> {
    candidates
        .iter()
        .map(|c| {
            let mut r = NonCompRating {
                candidate_id: c.candidate_id,
                text_a: c.text_a.clone(),
                text_b: c.text_b.clone(),
                sentiment_ab: None,
                rating_a: None,
                rating_b: None,
                excluded_a: true,
                excluded_b: true,
                reason_a: None,
                reason_b: None,
                controls_used_a: 0,
                controls_used_b: 0,
                clean_a: false,
                clean_b: false,
            };
            let Some(natural) = sentiments.get(&c.natural) else {
                let reason = Some(format!("no sentiment for {}", c.natural));
                r.reason_a = reason.clone();
                r.reason_b = reason;
                return r;
            };
            r.sentiment_ab = Some(natural.mean_label);
            for side in Side::BOTH {
                let s = rate_side(natural.mean_label, c.controls(side), sentiments, cfg.min_usable_controls);
                let clean = s.rating.is_some()
                    && !natural.flagged_ungrammatical
                    && (cfg.clean_scope == CleanScope::NaturalOnly || !s.any_flag);
                match side {
                    Side::A => {
                        (r.rating_a, r.reason_a, r.controls_used_a, r.clean_a) = (s.rating, s.reason, s.used, clean)
                    }
                    Side::B => {
                        (r.rating_b, r.reason_b, r.controls_used_b, r.clean_b) = (s.rating, s.reason, s.used, clean)
                    }
                }
            }
            r.excluded_a = r.rating_a.is_none();
            r.excluded_b = r.rating_b.is_none();
            r
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RatingVariant {
    All,
    AllAbs,
    Max,
    MaxAbs,
    AllClean,
}

impl RatingVariant {
    pub const ALL: [RatingVariant; 5] = [
        RatingVariant::All,
        RatingVariant::AllAbs,
        RatingVariant::Max,
        RatingVariant::MaxAbs,
        RatingVariant::AllClean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RatingVariant::All => "All",
            RatingVariant::AllAbs => "AllAbs",
            RatingVariant::Max => "Max",
            RatingVariant::MaxAbs => "MaxAbs",
            RatingVariant::AllClean => "AllClean",
        }
    }
}

impl fmt::Display for RatingVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RatingVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RatingVariant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Invalid(format!("unknown rating variant {s:?}")))
    }
}

/// Candidate id, plus the side for the per-side variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VariantKey {
    pub candidate_id: PhraseId,
    pub side: Option<Side>,
}

impl fmt::Display for VariantKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.side {
            Some(s) => write!(f, "{}:{s}", self.candidate_id),
            None => write!(f, "{}", self.candidate_id),
        }
    }
}

pub type VariantVector = BTreeMap<VariantKey, f64>;

pub fn to_variant(ratings: &[NonCompRating], variant: RatingVariant) -> VariantVector {
    let mut out = BTreeMap::new();
    for r in ratings {
        match variant {
            RatingVariant::All | RatingVariant::AllAbs | RatingVariant::AllClean => {
                for side in Side::BOTH {
                    let Some(v) = r.rating(side) else { continue };
                    if variant == RatingVariant::AllClean && !r.clean(side) {
                        continue;
                    }
                    let v = if variant == RatingVariant::AllAbs { v.abs() } else { v };
                    out.insert(
                        VariantKey {
                            candidate_id: r.candidate_id,
                            side: Some(side),
                        },
                        v,
                    );
                }
            }
            RatingVariant::Max | RatingVariant::MaxAbs => {
                if let Some(v) = r.max() {
                    let v = if variant == RatingVariant::MaxAbs { v.abs() } else { v };
                    out.insert(
                        VariantKey {
                            candidate_id: r.candidate_id,
                            side: None,
                        },
                        v,
                    );
                }
            }
        }
    }
    out
}

/// Two-decimal display that never prints "-0.00".
pub fn fmt2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn opt2(v: Option<f64>) -> String {
    v.map(fmt2).unwrap_or_default()
}

/// One row per candidate, values at two decimals; empty cells for excluded
/// sides.
pub fn ratings_csv(ratings: &[NonCompRating]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "candidate_id",
        "text_A",
        "text_B",
        "rating_A",
        "rating_B",
        "max",
        "max_abs",
        "clean_A",
        "clean_B",
        "sentiment_AB",
    ])
    .map_err(csv_err)?;
    for r in ratings {
        w.write_record([
            r.candidate_id.to_string(),
            r.text_a.clone(),
            r.text_b.clone(),
            opt2(r.rating_a),
            opt2(r.rating_b),
            opt2(r.max()),
            opt2(r.max().map(f64::abs)),
            u8::from(r.clean_a).to_string(),
            u8::from(r.clean_b).to_string(),
            opt2(r.sentiment_ab),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(w)
}

pub fn variant_csv(v: &VariantVector) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"]).map_err(csv_err)?;
    for (k, x) in v {
        w.write_record([k.to_string(), x.to_string()]).map_err(csv_err)?;
    }
    finish_csv(w)
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Invalid(format!("csv: {e}"))
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Invalid(format!("csv: {e}")))
}
