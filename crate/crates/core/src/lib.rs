//! Blackbox differentiation of ranking and the rank-based losses built on it.
//!
//! The forward pass ranks scores with an ordinary sort. The backward pass
//! treats the ranker as a combinatorial solver: it perturbs the scores by the
//! incoming gradient, ranks again, and returns the scaled difference of the
//! two rankings (see [`rank::rank_backward`]). Both passes cost O(n log n).
//!
//! On top of that the crate provides
//! - recall@K, refined recall and the closed-form weighted recall losses,
//! - Average Precision, the AP loss, mAP and class-concatenated AP losses,
//! - a score memory that extends a batch with past batches,
//! - brute-force oracles for every closed form and gradient, and
//! - a small synthetic metric-learning harness.

pub mod error;
pub mod harness;
pub mod losses;
pub mod memory;
pub mod oracle;
pub mod rank;
pub mod weights;

pub use error::{Error, Result};
pub use losses::{
    ap_loss, apc_loss, average_precision, map_loss, mean_average_precision, outrun_counts,
    recall_at_k, recall_loss, refined_recall_at_k, LossResult, RecallLoss,
};
pub use memory::{mask_gradient, MemoryBuffer};
pub use rank::{
    rank, rank_backward, rank_with_margin, surrogate_value, BlackboxRanker, Lambda, Margin, Ranking,
};
pub use weights::{weight_cumulative, WeightScheme};
