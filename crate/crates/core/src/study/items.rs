use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{CombinationRole, ItemKind, ItemSource, Phase, StudyItem};
use crate::corpus::{normalize_text, raw_stats, Corpus, StdKind, Token};
use crate::error::{Error, Result};
use crate::evalharness::sst7_convert;
use crate::select::{CandidatePhrase, Side};

/// Study stimuli for one phase.
///
/// Phase 1 yields every distinct subphrase text (targets and all curated
/// controls) once. Phase 2 yields, per candidate, "A B" followed by
/// `final_controls` "A'_n B" and `final_controls` "A B'_n" items.
pub fn make_items(
    candidates: &[CandidatePhrase],
    phase: Phase,
    final_controls: usize,
) -> Result<Vec<StudyItem>> {
    match phase {
        Phase::One => phase1_items(candidates),
        Phase::Two => phase2_items(candidates, final_controls),
    }
}

fn phase1_items(candidates: &[CandidatePhrase]) -> Result<Vec<StudyItem>> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut items: Vec<StudyItem> = Vec::new();
    for c in candidates {
        if !c.curated {
            return Err(Error::Invalid(format!(
                "candidate {} is not curated",
                c.phrase_id
            )));
        }
        let texts = Side::BOTH
            .iter()
            .map(|&s| (c.side(s).text.as_str(), c.side(s).phrase_id))
            .chain(Side::BOTH.iter().flat_map(|&s| {
                c.controls(s)
                    .iter()
                    .map(|ctl| (ctl.display_text(), ctl.subphrase.phrase_id))
            }));
        for (text, pid) in texts {
            let key = normalize_text(text);
            match index.get(&key) {
                Some(&i) => {
                    if let ItemSource::Subphrase { phrase_ids } = &mut items[i].source {
                        if !phrase_ids.contains(&pid) {
                            phrase_ids.push(pid);
                        }
                    }
                }
                None => {
                    index.insert(key.clone(), items.len());
                    items.push(StudyItem {
                        item_id: format!("s1-{:05}", items.len() + 1),
                        phase: Phase::One,
                        kind: ItemKind::Subphrase,
                        segments: vec![key],
                        source: ItemSource::Subphrase {
                            phrase_ids: vec![pid],
                        },
                        allow_ungrammatical_flag: false,
                    });
                }
            }
        }
    }
    Ok(items)
}

fn phase2_items(candidates: &[CandidatePhrase], final_controls: usize) -> Result<Vec<StudyItem>> {
    let mut items = Vec::with_capacity(candidates.len() * (1 + 2 * final_controls));
    for c in candidates {
        let selected_a: Vec<&str> = c.selected_controls(Side::A).map(|e| e.display_text()).collect();
        let selected_b: Vec<&str> = c.selected_controls(Side::B).map(|e| e.display_text()).collect();
        if !c.curated || selected_a.len() != final_controls || selected_b.len() != final_controls {
            return Err(Error::Invalid(format!(
                "candidate {} is not a study-1 survivor with {final_controls} selected controls per side",
                c.phrase_id
            )));
        }
        let a = c.side_a.text.as_str();
        let b = c.side_b.text.as_str();
        let item = |suffix: String, role, seg_a: &str, seg_b: &str| StudyItem {
            item_id: format!("s2-{}-{suffix}", c.phrase_id),
            phase: Phase::Two,
            kind: ItemKind::Combination,
            segments: vec![normalize_text(seg_a), normalize_text(seg_b)],
            source: ItemSource::Combination {
                candidate_id: c.phrase_id,
                role,
            },
            allow_ungrammatical_flag: true,
        };
        items.push(item("n".into(), CombinationRole::Natural, a, b));
        for (n, ctl) in selected_a.iter().enumerate() {
            let n = n as u8 + 1;
            items.push(item(format!("a{n}"), CombinationRole::ControlA(n), ctl, b));
        }
        for (n, ctl) in selected_b.iter().enumerate() {
            let n = n as u8 + 1;
            items.push(item(format!("b{n}"), CombinationRole::ControlB(n), a, ctl));
        }
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PracticeItem {
    pub item_id: String,
    pub text: String,
    pub reference: u8,
}

/// Practice questions with their reference labels (JSON file format).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PracticeSet {
    pub study_id: String,
    pub items: Vec<PracticeItem>,
}

impl PracticeSet {
    pub fn reference(&self, item_id: &str) -> Option<u8> {
        self.items
            .iter()
            .find(|p| p.item_id == item_id)
            .map(|p| p.reference)
    }
}

pub fn practice_items(set: &PracticeSet, phase: Phase) -> Vec<StudyItem> {
    set.items
        .iter()
        .map(|p| StudyItem {
            item_id: p.item_id.clone(),
            phase,
            kind: ItemKind::Practice,
            segments: vec![p.text.clone()],
            source: ItemSource::Practice {
                reference: p.reference,
            },
            allow_ungrammatical_flag: false,
        })
        .collect()
}

/// Choose `count` practice phrases from the treebank, cycling over the seven
/// SST-7 classes. Within a class the phrase with the most agreeing raw
/// annotations wins (lowest std, then lowest id). Texts in `exclude` and
/// phrases outside the length bounds are skipped.
pub fn select_practice(
    corpus: &Corpus,
    exclude: &HashSet<String>,
    count: usize,
    min_len: usize,
    max_len: usize,
    study_id: &str,
) -> Result<PracticeSet> {
    let mut per_class: Vec<Vec<(f64, u64, &str)>> = vec![Vec::new(); 7];
    for p in corpus.phrases.values() {
        let text = normalize_text(&p.text);
        if exclude.contains(&text) {
            continue;
        }
        let len = text
            .split(' ')
            .filter_map(|t| Token::new(t).ok())
            .filter(|t| !t.is_punct)
            .count();
        if !(min_len..=max_len).contains(&len) {
            continue;
        }
        let Ok(stats) = raw_stats(p, StdKind::Population) else {
            continue;
        };
        per_class[usize::from(sst7_convert(p.sst_value)?)].push((stats.std_ticks, p.phrase_id, &p.text));
    }
    for class in &mut per_class {
        class.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    let mut items = Vec::with_capacity(count);
    let mut round = 0;
    while items.len() < count && per_class.iter().any(|c| c.len() > round) {
        for (label, class) in per_class.iter().enumerate() {
            if items.len() == count {
                break;
            }
            if let Some(&(_, _, text)) = class.get(round) {
                items.push(PracticeItem {
                    item_id: format!("{study_id}-practice-{}", items.len() + 1),
                    text: normalize_text(text),
                    reference: label as u8,
                });
            }
        }
        round += 1;
    }
    if items.len() < count {
        log::warn!("only {} practice phrases available, wanted {count}", items.len());
    }
    Ok(PracticeSet {
        study_id: study_id.to_string(),
        items,
    })
}
