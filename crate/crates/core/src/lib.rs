//! Faithfulness of feature attributions and select-then-predict rationales
//! when test data is chronologically newer than training data.

pub mod agreement;
pub mod attribution;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod faithfulness;
pub mod io;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod rationale;
pub mod seed;
pub mod splitter;
pub mod synthetic;

pub use agreement::{layperson_agreement, AgreementRecord};
pub use attribution::{AttributionConfig, AttributionMap, AttributionMethod};
pub use corpus::{Corpus, DriftSpec, TimestampedExample};
pub use error::{Error, Result};
pub use experiment::{run_pipeline, ExperimentConfig, RunManifest};
pub use faithfulness::{FaithfulnessRecord, FaithfulnessSummary};
pub use model::{
    AttentionClassifier, Classifier, EncodedInput, GradientTarget, MaskMode, Prediction, Predictor, TextClassifier,
    TrainConfig,
};
pub use rationale::kuma::KumaGateParams;
pub use rationale::selective::LagrangianState;
pub use rationale::spectra::BudgetConstraint;
pub use rationale::{Rationale, RationaleSource};
pub use splitter::{SplitBundle, SplitName, SplitSpec, SplitStrategy};
