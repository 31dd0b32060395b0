//! Rating breakdowns by composition type, length pair, syntactic category
//! pair and figurative tag. Output is plot data only.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::AnalysisConfig;
use crate::corpus::{PhraseId, PhraseLabel};
use crate::error::{Error, Result};
use crate::ratings::{csv_err, finish_csv, to_variant, NonCompRating, RatingVariant};
use crate::select::CandidatePhrase;
use crate::stats::{mean, quantile_sorted};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Negative,
    Neutral,
    Positive,
}

impl Polarity {
    pub fn symbol(self) -> &'static str {
        match self {
            Polarity::Negative => "-",
            Polarity::Neutral => "~",
            Polarity::Positive => "+",
        }
    }
}

fn polarity(s: f64, cfg: &AnalysisConfig) -> Result<Polarity> {
    if !(0.0..=6.0).contains(&s) {
        return Err(Error::OutOfRange {
            what: "sentiment",
            value: s.to_string(),
            range: "[0, 6]",
        });
    }
    Ok(if s < cfg.negative_below {
        Polarity::Negative
    } else if s > cfg.positive_above {
        Polarity::Positive
    } else {
        Polarity::Neutral
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CompositionType {
    pub sign_a: Polarity,
    pub sign_b: Polarity,
}

impl fmt::Display for CompositionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.sign_a.symbol(), self.sign_b.symbol())
    }
}

/// Polarity pair from study-1 sentiments on the 0..6 scale. The neutral band
/// is inclusive at both thresholds.
pub fn composition_type(s_a: f64, s_b: f64, cfg: &AnalysisConfig) -> Result<CompositionType> {
    Ok(CompositionType {
        sign_a: polarity(s_a, cfg)?,
        sign_b: polarity(s_b, cfg)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    CompositionType,
    LengthPair,
    CategoryPair,
    Figurative,
}

impl Grouping {
    pub const ALL: [Grouping; 4] = [
        Grouping::CompositionType,
        Grouping::LengthPair,
        Grouping::CategoryPair,
        Grouping::Figurative,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Grouping::CompositionType => "composition_type",
            Grouping::LengthPair => "length_pair",
            Grouping::CategoryPair => "category_pair",
            Grouping::Figurative => "figurative",
        }
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Grouping::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown grouping {s:?}")))
    }
}

/// What the groupings need to know about a rated candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMeta {
    pub candidate_id: PhraseId,
    pub study1_a: f64,
    pub study1_b: f64,
    pub len_a: usize,
    pub len_b: usize,
    pub label_a: PhraseLabel,
    pub label_b: PhraseLabel,
}

pub fn candidate_meta(survivors: &[CandidatePhrase]) -> Result<BTreeMap<PhraseId, CandidateMeta>> {
    survivors
        .iter()
        .map(|c| {
            let missing = || Error::MissingStudy1Sentiment(c.text.clone());
            Ok((
                c.phrase_id,
                CandidateMeta {
                    candidate_id: c.phrase_id,
                    study1_a: c.study1_a.ok_or_else(missing)?,
                    study1_b: c.study1_b.ok_or_else(missing)?,
                    len_a: c.side_a.token_count_nonpunct,
                    len_b: c.side_b.token_count_nonpunct,
                    label_a: c.side_a.phrase_label,
                    label_b: c.side_b.phrase_label,
                },
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum GroupKey {
    Composition(CompositionType),
    Length(usize, usize),
    Category(PhraseLabel, PhraseLabel),
    Figurative(bool),
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKey::Composition(c) => write!(f, "{c}"),
            GroupKey::Length(a, b) => write!(f, "{a}+{b}"),
            GroupKey::Category(a, b) => write!(f, "{}+{}", a.as_str(), b.as_str()),
            GroupKey::Figurative(true) => f.write_str("figurative"),
            GroupKey::Figurative(false) => f.write_str("literal"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: String,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

fn summarize(group: String, mut values: Vec<f64>) -> GroupStats {
    values.sort_by(f64::total_cmp);
    GroupStats {
        group,
        n: values.len(),
        mean: mean(&values).unwrap_or(f64::NAN),
        median: quantile_sorted(&values, 0.5),
        q1: quantile_sorted(&values, 0.25),
        q3: quantile_sorted(&values, 0.75),
        min: values[0],
        max: values[values.len() - 1],
    }
}

/// One summary per non-empty group of the variant's entries. Per-side
/// variants contribute one value per side, grouped by their candidate.
/// Candidates missing from `figurative` count as literal.
pub fn group_stats(
    ratings: &[NonCompRating],
    variant: RatingVariant,
    grouping: Grouping,
    meta: &BTreeMap<PhraseId, CandidateMeta>,
    figurative: &BTreeMap<PhraseId, bool>,
    cfg: &AnalysisConfig,
) -> Result<Vec<GroupStats>> {
    let mut groups: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    for (key, value) in to_variant(ratings, variant) {
        let m = meta
            .get(&key.candidate_id)
            .ok_or_else(|| Error::Invalid(format!("no metadata for candidate {}", key.candidate_id)))?;
        let g = match grouping {
            Grouping::CompositionType => GroupKey::Composition(composition_type(m.study1_a, m.study1_b, cfg)?),
            Grouping::LengthPair => GroupKey::Length(m.len_a, m.len_b),
            Grouping::CategoryPair => GroupKey::Category(m.label_a, m.label_b),
            Grouping::Figurative => GroupKey::Figurative(figurative.get(&key.candidate_id).copied().unwrap_or(false)),
        };
        groups.entry(g).or_default().push(value);
    }
    Ok(groups
        .into_iter()
        .map(|(k, v)| summarize(k.to_string(), v))
        .collect())
}

/// Parse `candidate_id<TAB>figurative(0/1)`. Candidates in `expected` without
/// a row default to literal and produce a warning; conflicting duplicate rows
/// are an error.
pub fn parse_figurative_tags(
    text: &str,
    expected: &[PhraseId],
) -> Result<(BTreeMap<PhraseId, bool>, Vec<String>)> {
    let mut tags = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        let id = match f.first().map(|s| s.parse::<PhraseId>()) {
            Some(Ok(id)) => id,
            _ if line_no == 1 => continue,
            _ => return Err(Error::parse("figurative tags", line_no, "bad candidate id")),
        };
        let fig = match f.get(1) {
            Some(&"1") if f.len() == 2 => true,
            Some(&"0") if f.len() == 2 => false,
            _ => return Err(Error::parse("figurative tags", line_no, "expected id<TAB>0|1")),
        };
        if let Some(prev) = tags.insert(id, fig) {
            if prev != fig {
                return Err(Error::parse(
                    "figurative tags",
                    line_no,
                    format!("conflicting tags for candidate {id}"),
                ));
            }
        }
    }
    let mut warnings = Vec::new();
    let known: HashSet<PhraseId> = tags.keys().copied().collect();
    for id in expected {
        if !known.contains(id) {
            warnings.push(format!("candidate {id} has no figurative tag; treated as literal"));
            tags.insert(*id, false);
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok((tags, warnings))
}

pub fn load_figurative_tags(
    path: &std::path::Path,
    expected: &[PhraseId],
) -> Result<(BTreeMap<PhraseId, bool>, Vec<String>)> {
    parse_figurative_tags(&crate::corpus::read_file(path)?, expected)
}

pub fn group_stats_csv(stats: &[GroupStats]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["group", "n", "mean", "median", "q1", "q3", "min", "max"])
        .map_err(csv_err)?;
    for s in stats {
        w.write_record([
            s.group.clone(),
            s.n.to_string(),
            s.mean.to_string(),
            s.median.to_string(),
            s.q1.to_string(),
            s.q3.to_string(),
            s.min.to_string(),
            s.max.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarityThresholds {
    pub negative_below: f64,
    pub positive_above: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub variant: RatingVariant,
    pub thresholds: PolarityThresholds,
    pub groupings: BTreeMap<Grouping, Vec<GroupStats>>,
    pub warnings: Vec<String>,
}

pub fn analysis_report(
    ratings: &[NonCompRating],
    variant: RatingVariant,
    groupings: &[Grouping],
    meta: &BTreeMap<PhraseId, CandidateMeta>,
    figurative: &BTreeMap<PhraseId, bool>,
    warnings: Vec<String>,
    cfg: &AnalysisConfig,
) -> Result<AnalysisReport> {
    let mut out = BTreeMap::new();
    for &g in groupings {
        out.insert(g, group_stats(ratings, variant, g, meta, figurative, cfg)?);
    }
    Ok(AnalysisReport {
        variant,
        thresholds: PolarityThresholds {
            negative_below: cfg.negative_below,
            positive_above: cfg.positive_above,
            note: "polarity thresholds are a configurable convention on the 0-6 scale, not measured values".into(),
        },
        groupings: out,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rating(id: PhraseId, a: f64, b: f64) -> NonCompRating {
        NonCompRating {
            candidate_id: id,
            text_a: String::new(),
            text_b: String::new(),
            sentiment_ab: Some(3.0),
            rating_a: Some(a),
            rating_b: Some(b),
            excluded_a: false,
            excluded_b: false,
            reason_a: None,
            reason_b: None,
            controls_used_a: 3,
            controls_used_b: 3,
            clean_a: true,
            clean_b: true,
        }
    }

    fn meta(id: PhraseId, sa: f64, sb: f64, len_a: usize) -> (PhraseId, CandidateMeta) {
        (
            id,
            CandidateMeta {
                candidate_id: id,
                study1_a: sa,
                study1_b: sb,
                len_a,
                len_b: 3,
                label_a: PhraseLabel::NP,
                label_b: PhraseLabel::VP,
            },
        )
    }

    #[test]
    fn composition_examples() {
        let cfg = AnalysisConfig::default();
        assert_eq!(composition_type(1.0, 1.33, &cfg).unwrap().to_string(), "(-, -)");
        assert_eq!(composition_type(3.0, 3.0, &cfg).unwrap().to_string(), "(~, ~)");
        assert_eq!(composition_type(5.0, 1.0, &cfg).unwrap().to_string(), "(+, -)");
        assert_eq!(composition_type(2.5, 3.5, &cfg).unwrap().to_string(), "(~, ~)");
        assert!(composition_type(6.5, 1.0, &cfg).is_err());
    }

    #[test]
    fn identical_values_collapse_quartiles() {
        let ratings = vec![rating(1, 2.0, 2.0), rating(2, 2.0, 2.0)];
        let m = [meta(1, 1.0, 1.0, 3), meta(2, 1.0, 1.0, 3)].into();
        let g = group_stats(&ratings, RatingVariant::All, Grouping::LengthPair, &m, &BTreeMap::new(), &AnalysisConfig::default()).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!((g[0].q1, g[0].median, g[0].q3, g[0].n), (2.0, 2.0, 2.0, 4));
    }

    #[test]
    fn planted_figurative_effect() {
        let mut ratings = Vec::new();
        let mut m = BTreeMap::new();
        let mut fig = BTreeMap::new();
        for id in 0..20u64 {
            let is_fig = id % 4 == 0;
            let v = if is_fig { 3.0 + id as f64 * 0.01 } else { 0.2 + id as f64 * 0.01 };
            ratings.push(rating(id, v, -v / 2.0));
            m.extend([meta(id, 1.0, 5.0, 4)]);
            fig.insert(id, is_fig);
        }
        let g = group_stats(&ratings, RatingVariant::MaxAbs, Grouping::Figurative, &m, &fig, &AnalysisConfig::default()).unwrap();
        assert_eq!(g[0].group, "literal");
        assert_eq!(g[1].group, "figurative");
        assert_eq!(g[0].n + g[1].n, 20);
        assert!(g[1].mean > g[0].mean);
    }

    #[test]
    fn figurative_tag_file() {
        let (tags, warnings) = parse_figurative_tags("17\t1\n18\t0\n", &[17, 18, 19]).unwrap();
        assert!(tags[&17]);
        assert!(!tags[&19]);
        assert_eq!(warnings.len(), 1);
        assert!(parse_figurative_tags("17\t1\n17\t0\n", &[]).is_err());
        assert!(parse_figurative_tags("17\t1\n17\t1\n", &[]).is_ok());
        assert!(parse_figurative_tags("17\t2\n", &[]).is_err());
    }

    proptest! {
        #[test]
        fn groupings_partition(
            vals in prop::collection::vec((-6.0f64..6.0, -6.0f64..6.0, 0.0f64..=6.0, 0.0f64..=6.0, 3usize..=8), 1..40),
            variant in prop::sample::select(RatingVariant::ALL.to_vec()),
        ) {
            let ratings: Vec<_> = vals.iter().enumerate().map(|(i, v)| rating(i as u64, v.0, v.1)).collect();
            let m: BTreeMap<_, _> = vals.iter().enumerate().map(|(i, v)| meta(i as u64, v.2, v.3, v.4)).collect();
            let total = to_variant(&ratings, variant).len();
            for g in Grouping::ALL {
                let stats = group_stats(&ratings, variant, g, &m, &BTreeMap::new(), &AnalysisConfig::default()).unwrap();
                prop_assert_eq!(stats.iter().map(|s| s.n).sum::<usize>(), total);
                for s in &stats {
                    prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
                }
            }
        }

        #[test]
        fn composition_monotone(a in 0.0f64..=6.0, b in 0.0f64..=6.0, other in 0.0f64..=6.0) {
            let cfg = AnalysisConfig::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(composition_type(lo, other, &cfg).unwrap().sign_a <= composition_type(hi, other, &cfg).unwrap().sign_a);
        }
    }
}
