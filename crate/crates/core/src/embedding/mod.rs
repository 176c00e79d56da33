//! Augmented attribute embedding: compatibility scores, the softmax (UA)
//! and triplet (LA) losses, triplet sampling, SGD training and multi-scale
//! combination.

mod combine;
mod losses;
mod sampling;
mod train;

pub use combine::{combine_la, train_combiner, MultiScaleCombiner};
pub use losses::{
    compatibility_scores, embedded_scores, softmax_loss_grad, triplet_loss_grad, SoftmaxGrad,
    TripletGrad,
};
pub use sampling::{sample_triplets, Triplet, TripletStrategy};
pub use train::{
    batch_objective, init_models, train, train_from, BatchObjective, EpochRecord, LossTerms,
    LossWeights, TrainConfig, TrainReport,
};
