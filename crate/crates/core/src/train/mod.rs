//! Transfer learning on a frozen backbone: cached features, a 2-way linear
//! head, Adam and base-2 cross-entropy.

mod adam;
mod features;
mod head;
mod loss;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use features::{extract_features, FeatureSet};
pub use head::{
    evaluate_head, loss_and_gradient, positive_probability, predict, train_head, Checkpoint, EpochRecord,
    LinearHead, TrainConfig, TrainOutcome, TrainingCurves,
};
pub use loss::{bce_loss, LogBase, EPS_CLAMP};
