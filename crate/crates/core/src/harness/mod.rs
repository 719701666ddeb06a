//! Synthetic metric-learning harness: clustered data, a linear embedding onto
//! the unit sphere, cosine similarities within a batch (plus score memory),
//! and Adam on the rank-based losses.

mod dataset;
mod eval;
mod model;
mod optim;
mod similarity;
mod train;

pub use dataset::{SynthDataset, SynthParams};
pub use eval::{evaluate, evaluate_embeddings, Metrics};
pub use model::{EmbeddingModel, Embeddings};
pub use optim::{Adam, AdamConfig};
pub use similarity::{
    batch_similarities, embedding_gradient, similarity_scores, MemoryItem, QueryScores,
};
pub use train::{
    batch_loss, margin_ablation, train, BatchLoss, HistoryRow, Init, LossKind, MarginAblation,
    TrainConfig, TrainReport,
};
