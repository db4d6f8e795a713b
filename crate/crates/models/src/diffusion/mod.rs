//! Conditional denoising diffusion in the autoencoder's latent space.
//!
//! The forward process corrupts a target latent with Gaussian noise over
//! `T` steps; a residual MLP learns to predict that noise from the noisy
//! latent, a condition latent and the step index, and the reverse chain
//! turns pure noise into a new latent for a given condition.

pub mod denoiser;
pub mod process;
pub mod schedule;
pub mod train;

pub use denoiser::{denoiser_input, DenoiserConfig, DenoiserLayers, DiffusionModel, LatentWhitening, CHECKPOINT_KIND};
pub use process::{forward_sample, iterated_forward, reverse_mean, reverse_step, standard_normal, time_embedding, TIME_EMBEDDING_DIM};
pub use schedule::{sigmoid_beta, NoiseSchedule, ScheduleKind};
pub use train::{
    epoch_pairing, fine_tune_generative, fine_tune_pairing, monitor_pairing, train_diffusion, ConditionPair,
    DiffEpochLog, DiffTrainConfig, DiffTrainReport, DIFF_LOG_HEADER,
};
