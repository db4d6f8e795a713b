//! Simulated underwater acoustic channels.
//!
//! An [`Environment`] is drawn at random, an isovelocity image-source model
//! turns it into a set of discrete arrivals ([`PathSet`]), and a stochastic
//! evolution (per-path AR(1) fading plus delay drift) rasterises those
//! arrivals into a straightened TVIR. [`generate_dataset`] repeats this per
//! record and writes a UATV corpus.

pub mod dataset;
pub mod dynamics;
pub mod environment;
mod error;
pub mod paths;
pub mod reflection;

pub use dataset::{generate_dataset, generate_record, generate_records, split_pair, GeneratorConfig};
pub use dynamics::{evolve_tvir, DynamicsConfig, EvolvedTvir, FadingProcess, TvirDims};
pub use environment::{sample_environment, Environment, EnvironmentRanges};
pub use error::{ChannelError, Result};
pub use paths::{nominal_cir, Path, PathSet};
pub use reflection::rayleigh_reflection;
