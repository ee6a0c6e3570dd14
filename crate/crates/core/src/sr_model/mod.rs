//! The baseline SR generator: architecture, training, checkpoints and
//! constrained fine-tuning.

pub mod arch;
pub mod checkpoint;
pub mod finetune;
pub mod gradcheck;
pub mod net;
pub mod train;

pub use arch::SrArchitecture;
pub use checkpoint::{build_model, upsampling_parameter_names, EpochLoss, ModelCheckpoint, TrainMeta};
pub use finetune::{fine_tune, steps_per_epoch};
pub use gradcheck::{l1_gradient_check, GradCheckReport};
pub use net::SrNet;
pub use train::{train, TrainSchedule, Trainer};
