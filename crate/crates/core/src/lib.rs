//! Emotion detection under three training regimes (standard prediction,
//! contrastive pair calibration, and DPO/SimPO preference tuning) over a
//! small per-slot softmax scorer, with the data preparation, voting
//! inference and evaluation around them.

pub mod corpus;
pub mod inference;
pub mod metrics;
pub mod mutation;
pub mod pairgen;
pub mod pipeline;
pub mod prefloss;
pub mod scorer;
pub mod seed;
pub mod synthetic;
pub mod templates;
