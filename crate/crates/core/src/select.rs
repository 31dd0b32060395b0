//! Candidate phrase selection and control-subphrase pools.
//!
//! A candidate is a binary constituent "A B" whose sides each have 3 to 8
//! non-punctuation tokens, contain no named entity, and whose raw annotations
//! agree closely. Controls for a side are drawn from subphrases with the same
//! SST sentiment bucket and phrase type, curated by hand down to four per
//! side, and finally reduced to three per side using study-1 sentiments.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::SelectConfig;
use crate::corpus::{
    normalize_text, raw_stats, Corpus, LinguisticSidecar, PhraseId, PhraseLabel, SentenceId,
    Span, StdKind,
};
use crate::error::{Error, Result};
use crate::rng::derived_rng;

/// Sentiment bucket on the 11-point scale 0.0, 0.1, …, 1.0, stored in tenths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bucket(u8);

impl Bucket {
    pub fn tenths(self) -> u8 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 10.0
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.value())
    }
}

/// Nearest multiple of 0.1; exact midpoints round up.
pub fn bucket(sst_value: f64) -> Result<Bucket> {
    if !(0.0..=1.0).contains(&sst_value) {
        return Err(Error::OutOfRange {
            what: "sst value",
            value: sst_value.to_string(),
            range: "[0, 1]",
        });
    }
    // 0.35 * 10 is 3.4999999999999996 in binary floating point.
    let tenths = (sst_value * 10.0 + 0.5 + 1e-9).floor();
    Ok(Bucket(tenths.min(10.0) as u8))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::A, Side::B];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::A => "A",
            Side::B => "B",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subphrase {
    pub phrase_id: PhraseId,
    pub text: String,
    pub sst_value: f64,
    pub sentiment_bucket: Bucket,
    pub phrase_label: PhraseLabel,
    pub token_count_nonpunct: usize,
    pub source_sentence_id: SentenceId,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlEntry {
    pub subphrase: Subphrase,
    /// Manual edit for grammatical agreement with the other side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study1_sentiment: Option<f64>,
    #[serde(default)]
    pub selected_for_study2: bool,
}

impl ControlEntry {
    pub fn new(subphrase: Subphrase) -> Self {
        ControlEntry {
            subphrase,
            edited_text: None,
            study1_sentiment: None,
            selected_for_study2: false,
        }
    }

    /// Text shown to annotators: the edit if present, else the original.
    pub fn display_text(&self) -> &str {
        self.edited_text.as_deref().unwrap_or(&self.subphrase.text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePhrase {
    /// Phrase id of "A B"; doubles as the candidate id.
    pub phrase_id: PhraseId,
    pub sentence_id: SentenceId,
    pub text: String,
    pub side_a: Subphrase,
    pub side_b: Subphrase,
    /// Before curation: the sampled pool. After curation: the chosen controls.
    pub controls_a: Vec<ControlEntry>,
    pub controls_b: Vec<ControlEntry>,
    pub curated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study1_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study1_b: Option<f64>,
}

impl CandidatePhrase {
    pub fn side(&self, side: Side) -> &Subphrase {
        match side {
            Side::A => &self.side_a,
            Side::B => &self.side_b,
        }
    }

    pub fn controls(&self, side: Side) -> &[ControlEntry] {
        match side {
            Side::A => &self.controls_a,
            Side::B => &self.controls_b,
        }
    }

    pub fn controls_mut(&mut self, side: Side) -> &mut Vec<ControlEntry> {
        match side {
            Side::A => &mut self.controls_a,
            Side::B => &mut self.controls_b,
        }
    }

    pub fn study1(&self, side: Side) -> Option<f64> {
        match side {
            Side::A => self.study1_a,
            Side::B => self.study1_b,
        }
    }

    /// Controls chosen for study 2, in curation order.
    pub fn selected_controls(&self, side: Side) -> impl Iterator<Item = &ControlEntry> {
        self.controls(side).iter().filter(|c| c.selected_for_study2)
    }
}

fn subphrase(
    corpus: &Corpus,
    sidecar: &LinguisticSidecar,
    sentence_id: SentenceId,
    span: Span,
) -> Result<Option<(Subphrase, bool)>> {
    let tree = corpus.tree(sentence_id).expect("caller checked");
    let text = normalize_text(&tree.span_text(span)?);
    let Some(record) = corpus.phrase_by_text(&text) else {
        return Ok(None);
    };
    let entry = sidecar.get(sentence_id, span);
    let label = entry.map_or(PhraseLabel::OTHER, |e| e.phrase_label);
    let ne = entry.is_some_and(|e| e.has_named_entity);
    Ok(Some((
        Subphrase {
            phrase_id: record.phrase_id,
            text,
            sst_value: record.sst_value,
            sentiment_bucket: bucket(record.sst_value)?,
            phrase_label: label,
            token_count_nonpunct: tree.count_non_punct(span),
            source_sentence_id: sentence_id,
            span,
        },
        ne,
    )))
}

/// Constituents satisfying all selection constraints, uncurated and without
/// pools. A phrase occurring in several sentences is kept once, from its
/// first sentence.
pub fn find_candidates(
    corpus: &Corpus,
    sidecar: &LinguisticSidecar,
    cfg: &SelectConfig,
    std_kind: StdKind,
) -> Result<Vec<CandidatePhrase>> {
    let covered = sidecar.sentence_ids();
    let missing: Vec<SentenceId> = corpus
        .trees
        .iter()
        .map(|t| t.sentence_id)
        .filter(|id| !covered.contains(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage(missing));
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for ((sentence_id, span), entry) in &sidecar.entries {
        let Some(tree) = corpus.tree(*sentence_id) else {
            log::debug!("sidecar sentence {sentence_id} is not in the corpus");
            continue;
        };
        if span.end > tree.tokens.len() {
            return Err(Error::Invalid(format!(
                "sidecar span {span} exceeds sentence {sentence_id} ({} tokens)",
                tree.tokens.len()
            )));
        }
        if entry.child_spans.len() != 2 || entry.has_named_entity {
            continue;
        }
        let len_ok = |s: &Span| (cfg.min_len..=cfg.max_len).contains(&tree.count_non_punct(*s));
        if !entry.child_spans.iter().all(len_ok) {
            continue;
        }
        let Some(record) = corpus.phrase_by_text(&tree.span_text(*span)?) else {
            continue;
        };
        match raw_stats(record, std_kind) {
            Ok(stats) if stats.std_ticks <= cfg.std_threshold => {}
            _ => continue,
        }
        let (Some((a, ne_a)), Some((b, ne_b))) = (
            subphrase(corpus, sidecar, *sentence_id, entry.child_spans[0])?,
            subphrase(corpus, sidecar, *sentence_id, entry.child_spans[1])?,
        ) else {
            continue;
        };
        if ne_a || ne_b || !seen.insert(record.phrase_id) {
            continue;
        }
        out.push(CandidatePhrase {
            phrase_id: record.phrase_id,
            sentence_id: *sentence_id,
            text: normalize_text(&record.text),
            side_a: a,
            side_b: b,
            controls_a: Vec::new(),
            controls_b: Vec::new(),
            curated: false,
            study1_a: None,
            study1_b: None,
        });
    }
    Ok(out)
}

/// Both sides of every candidate: the population control pools draw from.
pub fn admitted_subphrases(candidates: &[CandidatePhrase]) -> Vec<Subphrase> {
    candidates
        .iter()
        .flat_map(|c| [c.side_a.clone(), c.side_b.clone()])
        .collect()
}

/// Sample up to `pool_size` controls per side from the target's
/// (bucket, label) group, excluding subphrases from the candidate's own
/// sentence and exact-text duplicates of the target.
pub fn build_pools(
    candidates: &[CandidatePhrase],
    all_subphrases: &[Subphrase],
    pool_size: usize,
    seed: u64,
) -> Vec<CandidatePhrase> {
    let mut groups: BTreeMap<(Bucket, PhraseLabel), Vec<&Subphrase>> = BTreeMap::new();
    for s in all_subphrases {
        groups
            .entry((s.sentiment_bucket, s.phrase_label))
            .or_default()
            .push(s);
    }
    for g in groups.values_mut() {
        g.sort_by_key(|s| (s.phrase_id, s.source_sentence_id, s.span));
    }

    candidates
        .iter()
        .map(|cand| {
            let mut cand = cand.clone();
            for side in Side::BOTH {
                let target = cand.side(side);
                let mut ids = HashSet::new();
                let eligible: Vec<&Subphrase> = groups
                    .get(&(target.sentiment_bucket, target.phrase_label))
                    .map(|g| g.as_slice())
                    .unwrap_or_default()
                    .iter()
                    .copied()
                    .filter(|s| s.source_sentence_id != cand.sentence_id && s.text != target.text)
                    .filter(|s| ids.insert(s.phrase_id))
                    .collect();
                let mut rng = derived_rng(seed, &[cand.phrase_id, side as u64]);
                let k = pool_size.min(eligible.len());
                let pool = rand::seq::index::sample(&mut rng, eligible.len(), k)
                    .into_iter()
                    .map(|i| ControlEntry::new(eligible[i].clone()))
                    .collect();
                *cand.controls_mut(side) = pool;
            }
            cand.curated = false;
            cand
        })
        .collect()
}

pub(crate) const CURATION_HEADER: &str = "candidate_phrase_id\tside\tcontrol_phrase_id\tkeep\tedited_text";

/// Curation sheet listing every pool entry. The first `preselect` entries per
/// side are pre-marked `keep=1`.
pub fn export_curation(candidates: &[CandidatePhrase], preselect: usize) -> String {
    let mut out = String::from(CURATION_HEADER);
    out.push('\n');
    for c in candidates {
        for side in Side::BOTH {
            for (i, ctl) in c.controls(side).iter().enumerate() {
                let keep = u8::from(i < preselect);
                let edit = ctl.edited_text.as_deref().unwrap_or("");
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}",
                    c.phrase_id, side, ctl.subphrase.phrase_id, keep, edit
                );
            }
        }
    }
    out
}

pub fn write_curation(candidates: &[CandidatePhrase], preselect: usize, path: &Path) -> Result<()> {
    std::fs::write(path, export_curation(candidates, preselect)).map_err(|e| Error::io(path, e))
}

pub fn read_curation(candidates: &[CandidatePhrase], path: &Path, per_side: usize) -> Result<Vec<CandidatePhrase>> {
    import_curation(candidates, &crate::corpus::read_file(path)?, per_side)
}

/// Apply a curation sheet. A candidate with no `keep=1` rows is dropped;
/// every other candidate must keep exactly `per_side` controls per side.
pub fn import_curation(
    candidates: &[CandidatePhrase],
    sheet: &str,
    per_side: usize,
) -> Result<Vec<CandidatePhrase>> {
    let known: HashMap<PhraseId, &CandidatePhrase> =
        candidates.iter().map(|c| (c.phrase_id, c)).collect();
    type Kept = HashMap<(PhraseId, Side), Vec<(PhraseId, Option<String>)>>;
    let mut kept: Kept = HashMap::new();

    for (i, line) in sheet.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (line_no == 1 && line.starts_with("candidate_phrase_id")) {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 4 || f.len() > 5 {
            return Err(Error::parse("curation", line_no, "expected 5 tab-separated fields"));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| Error::parse("curation", line_no, format!("bad id {s:?}: {e}")))
        };
        let cand_id = num(f[0])?;
        let side = match f[1].trim() {
            "A" => Side::A,
            "B" => Side::B,
            s => return Err(Error::parse("curation", line_no, format!("bad side {s:?}"))),
        };
        let control_id = num(f[2])?;
        let keep = match f[3].trim() {
            "0" => false,
            "1" => true,
            s => return Err(Error::parse("curation", line_no, format!("bad keep {s:?}"))),
        };
        let edit = f.get(4).map(|s| s.trim()).filter(|s| !s.is_empty()).map(String::from);
        let cand = known.get(&cand_id).ok_or_else(|| {
            Error::Curation(format!("line {line_no}: unknown candidate {cand_id}"))
        })?;
        if !cand.controls(side).iter().any(|c| c.subphrase.phrase_id == control_id) {
            return Err(Error::Curation(format!(
                "line {line_no}: control {control_id} is not in the pool of candidate {cand_id} side {side}"
            )));
        }
        if keep {
            let list = kept.entry((cand_id, side)).or_default();
            if list.iter().any(|(id, _)| *id == control_id) {
                return Err(Error::Curation(format!(
                    "line {line_no}: control {control_id} kept twice for candidate {cand_id} side {side}"
                )));
            }
            list.push((control_id, edit));
        }
    }

    let mut out = Vec::new();
    for cand in candidates {
        let a = kept.remove(&(cand.phrase_id, Side::A)).unwrap_or_default();
        let b = kept.remove(&(cand.phrase_id, Side::B)).unwrap_or_default();
        if a.is_empty() && b.is_empty() {
            continue;
        }
        let mut curated = cand.clone();
        for (side, chosen) in [(Side::A, a), (Side::B, b)] {
            if chosen.len() != per_side {
                return Err(Error::Curation(format!(
                    "candidate {} side {side}: {} controls kept, expected {per_side}",
                    cand.phrase_id,
                    chosen.len()
                )));
            }
            let target = cand.side(side);
            let mut controls = Vec::with_capacity(per_side);
            for (id, edit) in chosen {
                let pooled = cand
                    .controls(side)
                    .iter()
                    .find(|c| c.subphrase.phrase_id == id)
                    .expect("membership checked above");
                let sp = &pooled.subphrase;
                if sp.sentiment_bucket != target.sentiment_bucket
                    || sp.phrase_label != target.phrase_label
                {
                    return Err(Error::Curation(format!(
                        "candidate {} side {side}: control {id} is {}/{} but the target is {}/{}",
                        cand.phrase_id,
                        sp.sentiment_bucket,
                        sp.phrase_label,
                        target.sentiment_bucket,
                        target.phrase_label
                    )));
                }
                let mut entry = ControlEntry::new(sp.clone());
                entry.edited_text = edit;
                controls.push(entry);
            }
            *curated.controls_mut(side) = controls;
        }
        curated.curated = true;
        out.push(curated);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discarded {
    pub phrase_id: PhraseId,
    pub valid_a: usize,
    pub valid_b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub survivors: Vec<CandidatePhrase>,
    pub discarded: Vec<Discarded>,
}

/// Absolute tolerance when comparing study-1 means, which are fractions
/// with small denominators.
const SENTIMENT_EPS: f64 = 1e-9;

/// Keep candidates whose sides each have at least `min_valid_controls`
/// controls within `control_tolerance` of the target's study-1 sentiment,
/// and mark the `final_controls` closest per side (ties in curation order).
///
/// `study1` maps displayed text (normalized) to mean study-1 sentiment.
pub fn filter_by_study1(
    candidates: &[CandidatePhrase],
    study1: &HashMap<String, f64>,
    cfg: &SelectConfig,
) -> Result<FilterOutcome> {
    let lookup = |text: &str| {
        let key = normalize_text(text);
        study1
            .get(&key)
            .copied()
            .ok_or(Error::MissingStudy1Sentiment(key))
    };
    let mut survivors = Vec::new();
    let mut discarded = Vec::new();
    for cand in candidates {
        if !cand.curated {
            return Err(Error::Invalid(format!(
                "candidate {} is not curated",
                cand.phrase_id
            )));
        }
        let mut c = cand.clone();
        let mut valid = [0usize; 2];
        for (si, side) in Side::BOTH.into_iter().enumerate() {
            let target = lookup(&c.side(side).text)?;
            match side {
                Side::A => c.study1_a = Some(target),
                Side::B => c.study1_b = Some(target),
            }
            let mut scored = Vec::new();
            for (i, ctl) in c.controls_mut(side).iter_mut().enumerate() {
                let s = lookup(ctl.display_text())?;
                ctl.study1_sentiment = Some(s);
                ctl.selected_for_study2 = false;
                let d = (s - target).abs();
                if d <= cfg.control_tolerance + SENTIMENT_EPS {
                    // Quantize so that equal fractions compare equal.
                    scored.push(((d / SENTIMENT_EPS).round() as i64, i));
                }
            }
            valid[si] = scored.len();
            scored.sort_by_key(|&(d, _)| d);
            if scored.len() >= cfg.min_valid_controls {
                for &(_, i) in scored.iter().take(cfg.final_controls) {
                    c.controls_mut(side)[i].selected_for_study2 = true;
                }
            }
        }
        if valid.iter().all(|&v| v >= cfg.min_valid_controls) {
            survivors.push(c);
        } else {
            discarded.push(Discarded {
                phrase_id: c.phrase_id,
                valid_a: valid[0],
                valid_b: valid[1],
            });
        }
    }
    Ok(FilterOutcome {
        survivors,
        discarded,
    })
}

/// Candidate ids whose pools fall short of `per_side` on either side.
pub fn short_pools(candidates: &[CandidatePhrase], per_side: usize) -> BTreeSet<PhraseId> {
    candidates
        .iter()
        .filter(|c| Side::BOTH.iter().any(|&s| c.controls(s).len() < per_side))
        .map(|c| c.phrase_id)
        .collect()
}
