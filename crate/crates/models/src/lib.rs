//! Generative channel models: a Bi-LSTM autoencoder that compresses each
//! straightened TVIR into a latent vector, and a conditional denoising
//! diffusion model that generates latents of future channel segments.

pub mod autoencoder;
pub mod diffusion;
mod error;

pub use error::{ModelError, Result};
