//! Experiment machinery for fine-tuning spoken language understanding models
//! when transcripts are plentiful and paired speech is scarce.
//!
//! * [`corpus`]: canonical SLU records, SLURP/MASSIVE import, split counts
//! * [`labelcodec`]: target-string serialization, tolerant parsing, prompts
//! * [`scheduler`]: text-only / direct-mixing / curriculum epoch plans
//! * [`trainer`]: reference learner, LR schedule, speech simulator, manifests
//! * [`metrics`]: intent accuracy, entity F1, SLU-F1
//! * [`stats`]: seed aggregation, t confidence intervals, CI-overlap marks
//! * [`expcli`]: cross-lingual corpora, experiment grids, report tables, CLI

pub mod corpus;
pub mod expcli;
pub mod labelcodec;
pub mod metrics;
pub mod rng;
pub mod scheduler;
pub mod stats;
pub mod synth;
pub mod trainer;

pub use corpus::{Corpus, Entity, SemanticLabel, Split, Utterance};
pub use labelcodec::Decoded;
pub use metrics::{MetricReport, PredictionRecord};
pub use scheduler::{MixPlan, SchedulerConfig, Scheme};
pub use stats::{AggregateCell, Metric};
pub use trainer::{ModelState, SpeechSimConfig, TrainRecipe};
