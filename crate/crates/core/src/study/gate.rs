use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::spearman;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateThresholds {
    pub max_mae: f64,
    pub min_rho: f64,
}

impl Default for GateThresholds {
    fn default() -> Self {
        GateThresholds {
            max_mae: 1.0,
            min_rho: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub participant_id: String,
    pub mae: f64,
    /// `None` when either label vector is constant.
    pub spearman_rho: Option<f64>,
    pub pass: bool,
    pub n: usize,
}

/// Score a participant's practice answers against the reference labels.
///
/// Passes iff the mean absolute error is at most `max_mae` and Spearman's rho
/// is defined and at least `min_rho`.
pub fn quality_gate(
    participant_id: &str,
    responses: &[(String, u8)],
    references: &HashMap<String, u8>,
    thresholds: GateThresholds,
) -> Result<QualityReport> {
    if responses.len() < 2 {
        return Err(Error::Invalid(format!(
            "quality gate for {participant_id} needs at least 2 practice responses, got {}",
            responses.len()
        )));
    }
    let mut given = Vec::with_capacity(responses.len());
    let mut expected = Vec::with_capacity(responses.len());
    for (item, label) in responses {
        let r = references
            .get(item)
            .ok_or_else(|| Error::Invalid(format!("no reference label for practice item {item}")))?;
        given.push(f64::from(*label));
        expected.push(f64::from(*r));
    }
    let mae = given
        .iter()
        .zip(&expected)
        .map(|(g, e)| (g - e).abs())
        .sum::<f64>()
        / given.len() as f64;
    let rho = spearman(&given, &expected).ok();
    let pass = mae <= thresholds.max_mae && rho.is_some_and(|r| r >= thresholds.min_rho);
    Ok(QualityReport {
        participant_id: participant_id.to_string(),
        mae,
        spearman_rho: rho,
        pass,
        n: given.len(),
    })
}
