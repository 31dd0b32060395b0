//! Pipeline configuration.
//!
//! One TOML file carries every tunable. Unknown keys are rejected and every
//! missing key falls back to its default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusFiles, StdKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub select: SelectConfig,
    pub study: StudyConfig,
    pub ratings: RatingsConfig,
    pub eval: EvalConfig,
    pub analysis: AnalysisConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load from `path`; relative corpus paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::corpus::read_file(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.corpus.resolve_relative_to(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.select;
        if s.min_len == 0 || s.min_len > s.max_len {
            return Err(Error::Config(format!(
                "select.min_len {} / max_len {} is not a valid range",
                s.min_len, s.max_len
            )));
        }
        if s.final_controls == 0 || s.final_controls > s.curated_per_side {
            return Err(Error::Config(
                "select.final_controls must be in 1..=curated_per_side".into(),
            ));
        }
        if s.min_valid_controls < s.final_controls || s.min_valid_controls > s.curated_per_side {
            return Err(Error::Config(
                "select.min_valid_controls must be in final_controls..=curated_per_side".into(),
            ));
        }
        if self.study.annotations_per_item == 0 {
            return Err(Error::Config("study.annotations_per_item must be >= 1".into()));
        }
        if self.ratings.min_annotations == 0 || self.ratings.min_usable_controls == 0 {
            return Err(Error::Config(
                "ratings.min_annotations and min_usable_controls must be >= 1".into(),
            ));
        }
        let a = &self.analysis;
        if !(0.0..=6.0).contains(&a.negative_below)
            || !(0.0..=6.0).contains(&a.positive_above)
            || a.negative_below > a.positive_above
        {
            return Err(Error::Config(
                "analysis thresholds must satisfy 0 <= negative_below <= positive_above <= 6".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub sentences: PathBuf,
    pub trees: PathBuf,
    pub dictionary: PathBuf,
    pub sentiment: PathBuf,
    pub raw_annotations: PathBuf,
    pub sidecar: PathBuf,
    /// Standard deviation used for the raw-tick agreement filter.
    pub std_kind: StdKind,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            sentences: "datasetSentences.txt".into(),
            trees: "STree.txt".into(),
            dictionary: "dictionary.txt".into(),
            sentiment: "sentiment_labels.txt".into(),
            raw_annotations: "rawscores.txt".into(),
            sidecar: "sidecar.tsv".into(),
            std_kind: StdKind::Population,
        }
    }
}

impl CorpusConfig {
    pub fn files(&self) -> CorpusFiles {
        CorpusFiles {
            sentences: self.sentences.clone(),
            trees: self.trees.clone(),
            dictionary: self.dictionary.clone(),
            sentiment: self.sentiment.clone(),
            raw_annotations: self.raw_annotations.clone(),
        }
    }

    pub fn resolve_relative_to(&mut self, dir: &Path) {
        for p in [
            &mut self.sentences,
            &mut self.trees,
            &mut self.dictionary,
            &mut self.sentiment,
            &mut self.raw_annotations,
            &mut self.sidecar,
        ] {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    /// Maximum standard deviation of the raw 25-tick annotations.
    pub std_threshold: f64,
    /// Non-punctuation token bounds for each subphrase.
    pub min_len: usize,
    pub max_len: usize,
    pub pool_size: usize,
    pub curated_per_side: usize,
    pub final_controls: usize,
    /// Maximum study-1 sentiment distance between a control and its target.
    pub control_tolerance: f64,
    pub min_valid_controls: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            std_threshold: 5.0,
            min_len: 3,
            max_len: 8,
            pool_size: 32,
            curated_per_side: 4,
            final_controls: 3,
            control_tolerance: 1.0,
            min_valid_controls: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub annotations_per_item: usize,
    pub participants_phase1: usize,
    pub participants_phase2: usize,
    pub practice_items: usize,
    pub gate_max_mae: f64,
    pub gate_min_rho: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            annotations_per_item: 3,
            participants_phase1: 57,
            participants_phase2: 90,
            practice_items: 7,
            gate_max_mae: 1.0,
            gate_min_rho: 0.8,
        }
    }
}

/// Which entries `AllClean` drops.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CleanScope {
    /// Drop an entry if its natural phrase or any of its side's control
    /// combinations was flagged.
    #[default]
    Conservative,
    /// Drop an entry only if the natural phrase was flagged.
    NaturalOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatingsConfig {
    pub min_annotations: usize,
    pub min_usable_controls: usize,
    pub clean_scope: CleanScope,
}

impl Default for RatingsConfig {
    fn default() -> Self {
        RatingsConfig {
            min_annotations: 3,
            min_usable_controls: 2,
            clean_scope: CleanScope::Conservative,
        }
    }
}

/// How a model's class distribution becomes a scalar sentiment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSentiment {
    #[default]
    Expectation,
    Argmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub model_sentiment: ModelSentiment,
    pub top_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            model_sentiment: ModelSentiment::Expectation,
            top_threshold: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub negative_below: f64,
    pub positive_above: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            negative_below: 2.5,
            positive_above: 3.5,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!(c.select.pool_size, 32);
        assert_eq!(c.select.curated_per_side, 4);
        assert_eq!(c.select.final_controls, 3);
        assert_eq!(c.select.control_tolerance, 1.0);
        assert_eq!(c.select.std_threshold, 5.0);
        assert_eq!(c.study.annotations_per_item, 3);
        assert_eq!((c.study.gate_max_mae, c.study.gate_min_rho), (1.0, 0.8));
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_partial() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
        let p = PipelineConfig::from_toml("seed = 7\n[select]\npool_size = 16\n").unwrap();
        assert_eq!(p.seed, 7);
        assert_eq!(p.select.pool_size, 16);
        assert_eq!(p.select.final_controls, 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_toml("sed = 7\n").is_err());
        assert!(PipelineConfig::from_toml("[select]\npoolsize = 1\n").is_err());
    }

    #[test]
    fn invalid_ranges_rejected() {
        assert!(PipelineConfig::from_toml("[select]\nmin_len = 9\n").is_err());
        assert!(PipelineConfig::from_toml("[select]\nmin_valid_controls = 5\n").is_err());
        assert!(PipelineConfig::from_toml("[select]\nmin_valid_controls = 4\n").is_ok());
    }
}
