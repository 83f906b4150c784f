//! Adaptive ensemble of stacked denoising autoencoders for top-N recommendation
//! from implicit feedback.
//!
//! Three sub-autoencoders of decreasing width (Large, Medium, Small) share one
//! parameter stack. Traversing a prefix of that stack and decoding back out
//! yields three experts of increasing denoising strength (Mild, Moderate,
//! Strong). A noisy top-k gating network picks experts per user vector and
//! mixes their reconstructions, with importance and load penalties keeping the
//! expert workloads balanced.
//!
//! Modules, bottom-up:
//!
//! - [`numerics`]: dense layers with analytic gradients, activations, Adam, RNG.
//! - [`dataset`]: interaction matrices, loading, splitting, noise injection.
//! - [`model`]: the shared sub-autoencoder stack and the three experts.
//! - [`gating`]: noisy top-k gating and the balancing losses.
//! - [`training`]: corruption, loss assembly, pretraining and the training loop.
//! - [`evaluation`]: Recall/Precision/MRR@N over held-out items.
//! - [`aggregation`]: alternative combiners (averaging, static BMA weights).

pub mod aggregation;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod gating;
pub mod model;
pub mod numerics;
pub mod training;

pub use aggregation::{AggregatorKind, ExpertMix, GatedRanker, SingleExpertRanker};
pub use dataset::{IdMap, InteractionMatrix, SplitDataset};
pub use error::{Error, Result};
pub use evaluation::{AggregateReport, MetricsReport, Ranker, WithHistory};
pub use gating::{GateDecision, GatingNetwork, NUM_EXPERTS};
pub use model::{AelModel, HiddenDims, Level, Parent};
pub use numerics::{Adam, AdamConfig, DenseLayer, Rng};
pub use training::{TrainConfig, TrainReport, TrainedModel};
