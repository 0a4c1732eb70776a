//! Alternating training of the backbone and the feature-loss encoders.

mod augment;
mod config;
mod fit;
mod loss;
mod state;
mod step;

pub use augment::{augment, AugmentDraw};
pub use config::{apply_override, Corruption, DataSection, FeatureLoss, Mode, TrainConfig, TrainerSection};
pub use fit::{covering_range, training_images, FitOutcome, LogRecord, CONFIG_SNAPSHOT, FINAL_CHECKPOINT, LOSS_LOG};
pub use loss::{pixel_loss, NETWORK_PEAK};
pub use state::{checkpoint_config, TrainState};
pub use step::{changed_parameters, reflect_pad_to, LossPart, StepReport, Trainer};
