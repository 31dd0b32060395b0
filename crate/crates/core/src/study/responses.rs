use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gate::{quality_gate, GateThresholds, QualityReport};
use super::items::{practice_items, PracticeSet};
use super::{ItemId, ItemKind, Phase, StudyItem, MAX_LABEL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub participant_id: String,
    pub item_id: ItemId,
    pub label: u8,
    #[serde(default)]
    pub ungrammatical: bool,
    /// Milliseconds since the Unix epoch.
    #[serde(default)]
    pub ts: u64,
}

/// Unvalidated row, so range errors can name the offending value.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawResponse {
    participant_id: String,
    item_id: ItemId,
    label: i64,
    #[serde(default)]
    ungrammatical: bool,
    #[serde(default)]
    ts: u64,
}

/// Everything a response may refer to in one study.
#[derive(Debug, Clone, Default)]
pub struct StudyCatalog {
    items: HashMap<ItemId, StudyItem>,
    references: HashMap<ItemId, u8>,
}

impl StudyCatalog {
    pub fn new(items: &[StudyItem], practice: &PracticeSet, phase: Phase) -> StudyCatalog {
        let mut catalog = StudyCatalog::default();
        for item in items.iter().cloned().chain(practice_items(practice, phase)) {
            if let Some(r) = item.reference() {
                catalog.references.insert(item.item_id.clone(), r);
            }
            catalog.items.insert(item.item_id.clone(), item);
        }
        catalog
    }

    pub fn item(&self, id: &str) -> Option<&StudyItem> {
        self.items.get(id)
    }

    /// Non-practice item ids, sorted.
    pub fn study_item_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .items
            .values()
            .filter(|i| i.kind != ItemKind::Practice)
            .map(|i| i.item_id.as_str())
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn references(&self) -> &HashMap<ItemId, u8> {
        &self.references
    }

    pub fn has_practice(&self) -> bool {
        !self.references.is_empty()
    }

    pub fn is_practice(&self, id: &str) -> bool {
        self.references.contains_key(id)
    }

    /// Check one response against the item it names.
    pub fn validate(&self, item_id: &str, label: i64, ungrammatical: bool) -> Result<(), String> {
        let item = self
            .items
            .get(item_id)
            .ok_or_else(|| format!("unknown item {item_id}"))?;
        if !(0..=i64::from(MAX_LABEL)).contains(&label) {
            return Err(format!("label {label} outside 0..={MAX_LABEL}"));
        }
        if ungrammatical && !item.allow_ungrammatical_flag {
            return Err(format!("item {item_id} does not allow the ungrammatical flag"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GateStatus {
    Passed(QualityReport),
    Failed(QualityReport),
    /// The study has practice items but the participant answered fewer than two.
    MissingPractice,
    /// The study has no practice items.
    NotRequired,
}

impl GateStatus {
    pub fn included(&self) -> bool {
        matches!(self, GateStatus::Passed(_) | GateStatus::NotRequired)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ResponseSet {
    /// All validated responses, practice included, in first-seen order.
    pub responses: Vec<Response>,
    pub gates: BTreeMap<String, GateStatus>,
    pub excluded: BTreeSet<String>,
    pub warnings: Vec<String>,
}

impl ResponseSet {
    /// Study (non-practice) responses from participants who passed the gate.
    pub fn included<'a>(&'a self, catalog: &'a StudyCatalog) -> impl Iterator<Item = &'a Response> + 'a {
        self.responses
            .iter()
            .filter(move |r| !self.excluded.contains(&r.participant_id) && !catalog.is_practice(&r.item_id))
    }

    pub fn participants(&self) -> impl Iterator<Item = &str> {
        self.gates.keys().map(String::as_str)
    }
}

/// Parse and validate a JSONL response log. Rows are numbered from 1.
/// A repeated (participant, item) pair keeps the later row and records a
/// warning. Participants failing the practice gate stay in the set but are
/// listed in `excluded`.
pub fn ingest_responses(
    jsonl: &str,
    catalog: &StudyCatalog,
    thresholds: GateThresholds,
) -> Result<ResponseSet> {
    let mut set = ResponseSet::default();
    let mut index: HashMap<(String, ItemId), usize> = HashMap::new();
    for (i, line) in jsonl.lines().enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawResponse = serde_json::from_str(line).map_err(|e| Error::InvalidResponse {
            row,
            message: e.to_string(),
        })?;
        catalog
            .validate(&raw.item_id, raw.label, raw.ungrammatical)
            .map_err(|message| Error::InvalidResponse { row, message })?;
        let response = Response {
            participant_id: raw.participant_id,
            item_id: raw.item_id,
            label: raw.label as u8,
            ungrammatical: raw.ungrammatical,
            ts: raw.ts,
        };
        let key = (response.participant_id.clone(), response.item_id.clone());
        match index.get(&key) {
            Some(&at) => {
                let msg = format!(
                    "row {row}: duplicate response by {} to {}; keeping the later one",
                    key.0, key.1
                );
                log::warn!("{msg}");
                set.warnings.push(msg);
                set.responses[at] = response;
            }
            None => {
                index.insert(key, set.responses.len());
                set.responses.push(response);
            }
        }
    }

    let mut practice: BTreeMap<&str, Vec<(String, u8)>> = BTreeMap::new();
    for r in &set.responses {
        let entry = practice.entry(r.participant_id.as_str()).or_default();
        if catalog.is_practice(&r.item_id) {
            entry.push((r.item_id.clone(), r.label));
        }
    }
    let mut gates = BTreeMap::new();
    for (pid, answers) in practice {
        let status = if !catalog.has_practice() {
            GateStatus::NotRequired
        } else if answers.len() < 2 {
            GateStatus::MissingPractice
        } else {
            let report = quality_gate(pid, &answers, catalog.references(), thresholds)?;
            if report.pass {
                GateStatus::Passed(report)
            } else {
                GateStatus::Failed(report)
            }
        };
        if !status.included() {
            set.excluded.insert(pid.to_string());
        }
        gates.insert(pid.to_string(), status);
    }
    set.gates = gates;
    Ok(set)
}

pub fn read_responses(
    path: &Path,
    catalog: &StudyCatalog,
    thresholds: GateThresholds,
) -> Result<ResponseSet> {
    ingest_responses(&crate::corpus::read_file(path)?, catalog, thresholds)
}

pub fn responses_to_jsonl(responses: &[Response]) -> String {
    let mut out = String::new();
    for r in responses {
        out.push_str(&serde_json::to_string(r).expect("response serializes"));
        out.push('\n');
    }
    out
}

/// Labels per item for the agreement statistic, included responses only.
pub fn labels_by_item(set: &ResponseSet, catalog: &StudyCatalog) -> BTreeMap<ItemId, Vec<u8>> {
    let mut out: BTreeMap<ItemId, Vec<u8>> = BTreeMap::new();
    for r in set.included(catalog) {
        if catalog.item(&r.item_id).is_some_and(|i| i.kind != ItemKind::Practice) {
            out.entry(r.item_id.clone()).or_default().push(r.label);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::items::PracticeItem;
    use crate::study::ItemSource;

    fn catalog(with_practice: bool) -> StudyCatalog {
        let items = vec![
            StudyItem {
                item_id: "s1".into(),
                phase: Phase::One,
                kind: ItemKind::Subphrase,
                segments: vec!["a b c".into()],
                source: ItemSource::Subphrase { phrase_ids: vec![1] },
                allow_ungrammatical_flag: false,
            },
            StudyItem {
                item_id: "s2".into(),
                phase: Phase::Two,
                kind: ItemKind::Combination,
                segments: vec!["a".into(), "b".into()],
                source: ItemSource::Combination {
                    candidate_id: 1,
                    role: crate::study::CombinationRole::Natural,
                },
                allow_ungrammatical_flag: true,
            },
        ];
        let practice = PracticeSet {
            study_id: "t".into(),
            items: if with_practice {
                (0..3)
                    .map(|i| PracticeItem {
                        item_id: format!("p{i}"),
                        text: format!("t{i}"),
                        reference: i * 3,
                    })
                    .collect()
            } else {
                vec![]
            },
        };
        StudyCatalog::new(&items, &practice, Phase::One)
    }

    fn row(pid: &str, item: &str, label: i64, flag: bool) -> String {
        format!(r#"{{"participant_id":"{pid}","item_id":"{item}","label":{label},"ungrammatical":{flag},"ts":0}}"#)
    }

    #[test]
    fn valid_row_accepted() {
        let set = ingest_responses(&row("u", "s1", 4, false), &catalog(false), GateThresholds::default()).unwrap();
        assert_eq!(set.responses.len(), 1);
        assert_eq!(set.responses[0].label, 4);
        assert!(set.excluded.is_empty());
        assert_eq!(set.gates["u"], GateStatus::NotRequired);
    }

    #[test]
    fn label_out_of_range_names_row() {
        let text = format!("{}\n{}", row("u", "s1", 4, false), row("u", "s2", 7, false));
        match ingest_responses(&text, &catalog(false), GateThresholds::default()) {
            Err(Error::InvalidResponse { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flag_only_where_allowed() {
        let c = catalog(false);
        assert!(ingest_responses(&row("u", "s1", 1, true), &c, GateThresholds::default()).is_err());
        assert!(ingest_responses(&row("u", "s2", 1, true), &c, GateThresholds::default()).is_ok());
        assert!(ingest_responses(&row("u", "zz", 1, false), &c, GateThresholds::default()).is_err());
    }

    #[test]
    fn duplicate_keeps_last_with_warning() {
        let text = format!("{}\n{}\n", row("u", "s1", 2, false), row("u", "s1", 5, false));
        let set = ingest_responses(&text, &catalog(false), GateThresholds::default()).unwrap();
        assert_eq!(set.responses.len(), 1);
        assert_eq!(set.responses[0].label, 5);
        assert_eq!(set.warnings.len(), 1);
    }

    #[test]
    fn gate_marks_excluded_but_retains() {
        let c = catalog(true);
        let mut lines = vec![];
        for i in 0..3 {
            lines.push(row("good", &format!("p{i}"), i * 3, false));
            lines.push(row("bad", &format!("p{i}"), 3, false));
        }
        lines.push(row("good", "s1", 1, false));
        lines.push(row("bad", "s1", 6, false));
        lines.push(row("lazy", "s1", 6, false));
        let set = ingest_responses(&lines.join("\n"), &c, GateThresholds::default()).unwrap();
        assert_eq!(set.responses.len(), 9);
        assert!(matches!(set.gates["good"], GateStatus::Passed(_)));
        assert!(matches!(set.gates["bad"], GateStatus::Failed(_)));
        assert_eq!(set.gates["lazy"], GateStatus::MissingPractice);
        let included: Vec<_> = set.included(&c).map(|r| r.participant_id.as_str()).collect();
        assert_eq!(included, vec!["good"]);
        assert_eq!(labels_by_item(&set, &c)["s1"], vec![1]);
    }

    #[test]
    fn jsonl_round_trip() {
        let text = format!("{}\n{}\n", row("u", "s1", 2, false), row("v", "s2", 5, true));
        let c = catalog(false);
        let set = ingest_responses(&text, &c, GateThresholds::default()).unwrap();
        let again = ingest_responses(&responses_to_jsonl(&set.responses), &c, GateThresholds::default()).unwrap();
        assert_eq!(set.responses, again.responses);
    }
}
