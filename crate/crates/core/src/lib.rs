//! Building blocks for measuring sentiment non-compositionality: corpus
//! ingestion, candidate and control selection, annotation-study design,
//! rating computation, model evaluation and result breakdowns.

pub mod analysis;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evalharness;
pub mod ratings;
pub mod rng;
pub mod pipeline;
pub mod select;
pub mod stats;
pub mod study;
pub mod synthetic;

pub use config::PipelineConfig;
pub use corpus::{Corpus, PhraseId, PhraseRecord, SentenceId, SentimentTree};
pub use error::{Error, Result};
pub use ratings::{NonCompRating, RatingVariant};
pub use select::{CandidatePhrase, Side};
pub use study::{Response, StudyItem};
