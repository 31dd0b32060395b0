//! Annotation studies: stimuli, participant batches, response ingestion,
//! the practice-question quality gate and inter-annotator agreement.
//!
//! Study 1 collects sentiment for every subphrase in isolation; study 2
//! collects sentiment for each candidate "A B" and its six control
//! combinations, with an ungrammaticality checkbox.

mod agreement;
mod batches;
mod gate;
mod items;
mod responses;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::PhraseId;
use crate::error::Error;

pub use agreement::{krippendorff_alpha_ordinal, AgreementReport, ORDINAL_CATEGORIES};
pub use batches::{assign_batches, export_batches, Batch, BatchEntry, BatchFile, BatchItem};
pub use gate::{quality_gate, GateThresholds, QualityReport};
pub use items::{make_items, practice_items, select_practice, PracticeItem, PracticeSet};
pub use responses::{
    ingest_responses, labels_by_item, read_responses, responses_to_jsonl, GateStatus, Response, ResponseSet,
    StudyCatalog,
};

pub type ItemId = String;

/// Highest label on the 7-point scale (labels are 0..=6).
pub const MAX_LABEL: u8 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Phase {
    One,
    Two,
}

impl TryFrom<u8> for Phase {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self, Error> {
        match v {
            1 => Ok(Phase::One),
            2 => Ok(Phase::Two),
            _ => Err(Error::Invalid(format!("phase must be 1 or 2, got {v}"))),
        }
    }
}

impl From<Phase> for u8 {
    fn from(p: Phase) -> u8 {
        match p {
            Phase::One => 1,
            Phase::Two => 2,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Subphrase,
    Combination,
    Practice,
}

/// Position of a study-2 stimulus within its candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "role", content = "n", rename_all = "snake_case")]
pub enum CombinationRole {
    /// The original "A B".
    Natural,
    /// "A'_n B", n starting at 1.
    ControlA(u8),
    /// "A B'_n".
    ControlB(u8),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ItemSource {
    /// Every phrase id displayed with this text.
    Subphrase { phrase_ids: Vec<PhraseId> },
    Combination {
        candidate_id: PhraseId,
        #[serde(flatten)]
        role: CombinationRole,
    },
    Practice { reference: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyItem {
    pub item_id: ItemId,
    pub phase: Phase,
    pub kind: ItemKind,
    /// One segment, or two for combinations (shown in different colours).
    pub segments: Vec<String>,
    pub source: ItemSource,
    pub allow_ungrammatical_flag: bool,
}

impl StudyItem {
    pub fn text(&self) -> String {
        self.segments.join(" ")
    }

    pub fn reference(&self) -> Option<u8> {
        match self.source {
            ItemSource::Practice { reference } => Some(reference),
            _ => None,
        }
    }
}
