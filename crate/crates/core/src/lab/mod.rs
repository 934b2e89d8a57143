//! Desk-scale contrastive training lab: InfoNCE and its temperature bounds,
//! synthetic paired data, a tiny contextual encoder, and a training loop that
//! records geometry metrics along the way.

pub mod encoder;
pub mod loss;
pub mod synth;
pub mod train;

pub use encoder::{encode, EncoderParams, Pooling};
pub use loss::{bound_gap, info_nce_grad, info_nce_loss, loss_lower_bound, loss_upper_bound};
pub use synth::{generate_pairs, SyntheticPair, SyntheticPairSpec};
pub use train::{train, TrainConfig, TrainTrajectory, TrajectoryPoint};
