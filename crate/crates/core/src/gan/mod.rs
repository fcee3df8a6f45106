//! Generator/discriminator pair that proposes and vets preemptive migrations.

mod model;
mod train;
mod types;

pub use model::{compose_schedule, host_context, movable_rows, select_schedule, Discriminator, GanConfig, GanInput, GanModel, Generator};
pub use train::{gan_loss, infer, prepare, score_pair, train_gan, GanInterval, GanTrainConfig, GanTrainReport, Inference, Replay, TrainingCluster};
pub use types::DecisionRecord;
