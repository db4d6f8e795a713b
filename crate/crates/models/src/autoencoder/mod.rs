//! Sequence autoencoder for straightened TVIRs.
//!
//! The encoder is a stacked bidirectional LSTM over the `T` feature rows;
//! the last forward state and the last backward state of the top layer are
//! concatenated and projected to the latent. The decoder projects the latent
//! once, feeds that vector at every one of the `T` steps of its own
//! bidirectional stack, and maps each step to `3D` features (softplus on the
//! amplitude block).

pub mod loss;
pub mod model;
pub mod train;

pub use loss::{ae_loss, AeLossBreakdown, AeObjective};
pub use model::{encoder_input, loss_graph, time_major, AeConfig, AeLayers, Autoencoder, InputScaling, CHECKPOINT_KIND};
pub use train::{amplitude_nmse_db, evaluate, fine_tune_autoencoder, train_autoencoder, AeTrainConfig, AeTrainReport, EpochLog};
