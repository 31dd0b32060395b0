use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ItemId, StudyItem};
use crate::error::{Error, Result};
use crate::rng::derived_rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub batch_id: usize,
    pub participant_slot: usize,
    pub item_ids: Vec<ItemId>,
}

/// Distribute `items` over `n_participants` batches so that every item lands
/// in exactly `annotations_per_item` distinct batches and batch sizes differ
/// by at most one.
///
/// The items are permuted once, the permutation is repeated
/// `annotations_per_item` times, and the resulting sequence is cut into
/// contiguous chunks. Copies of one item sit `U` positions apart and no chunk
/// is longer than `U` when `n_participants >= annotations_per_item`, so the
/// copies always fall into different chunks. Each chunk is then shuffled.
pub fn assign_batches(
    items: &[ItemId],
    n_participants: usize,
    annotations_per_item: usize,
    seed: u64,
) -> Result<Vec<Batch>> {
    if annotations_per_item == 0 {
        return Err(Error::Infeasible("annotations_per_item must be >= 1".into()));
    }
    if n_participants < annotations_per_item {
        return Err(Error::Infeasible(format!(
            "{n_participants} participants cannot give {annotations_per_item} distinct annotations per item"
        )));
    }
    let mut order: Vec<&ItemId> = items.iter().collect();
    order.shuffle(&mut derived_rng(seed, &[0]));

    let total = items.len() * annotations_per_item;
    let base = total / n_participants;
    let extra = total % n_participants;
    let mut sequence = order.iter().cycle().take(total);
    let mut batches = Vec::with_capacity(n_participants);
    for slot in 0..n_participants {
        let size = base + usize::from(slot < extra);
        let mut item_ids: Vec<ItemId> = sequence.by_ref().take(size).map(|s| (*s).clone()).collect();
        item_ids.shuffle(&mut derived_rng(seed, &[1, slot as u64]));
        batches.push(Batch {
            batch_id: slot,
            participant_slot: slot,
            item_ids,
        });
    }
    Ok(batches)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchItem {
    pub item_id: ItemId,
    pub segments: Vec<String>,
    pub allow_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub participant_slot: usize,
    pub items: Vec<BatchItem>,
}

/// Batch export consumed by the annotation service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchFile {
    pub study_id: String,
    pub batches: Vec<BatchEntry>,
}

pub fn export_batches(study_id: &str, batches: &[Batch], items: &[StudyItem]) -> Result<BatchFile> {
    let by_id: HashMap<&str, &StudyItem> = items.iter().map(|i| (i.item_id.as_str(), i)).collect();
    let batches = batches
        .iter()
        .map(|b| {
            let items = b
                .item_ids
                .iter()
                .map(|id| {
                    let item = by_id
                        .get(id.as_str())
                        .ok_or_else(|| Error::Invalid(format!("batch references unknown item {id}")))?;
                    Ok(BatchItem {
                        item_id: id.clone(),
                        segments: item.segments.clone(),
                        allow_flag: item.allow_ungrammatical_flag,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(BatchEntry {
                participant_slot: b.participant_slot,
                items,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchFile {
        study_id: study_id.to_string(),
        batches,
    })
}
