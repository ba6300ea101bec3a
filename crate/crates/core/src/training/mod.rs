//! Joint objective, classifier head, optimiser, training loop and gradient checks.

mod config;
mod gradcheck;
mod history;
mod loss;
mod model;
mod objective;
mod optim;
mod train_loop;

pub use config::{ChannelSet, TrainConfig};
pub use gradcheck::{check_blocks, gradient_check, is_smooth_point, BlockError, GradientReport};
pub use history::{format_history, parse_history, EpochRecord, HISTORY_HEADER};
pub use loss::{cross_entropy, evaluate_accuracy, l21_distance, l21_distance_grad, LossTerms};
pub use model::{load_checkpoint, save_checkpoint, GraphInputs, ModelParams, TrainingData, BLOCK_NAMES};
pub use objective::{backward_full, forward_full, ForwardPass};
pub use optim::{adam_step, AdamState};
pub use train_loop::{train, EpochView, TrainOutcome};
