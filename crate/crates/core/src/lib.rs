//! Accelerated multi-coil cardiac MRI reconstruction.
//!
//! A generator estimates coil sensitivities from the auto-calibration lines
//! and then runs a cascade of reconstructors, each refining the coil-combined
//! image with a prompt-conditioned UNet and pulling the k-space back toward
//! the acquired samples. Training is adversarial against a patch
//! discriminator, with a curriculum over acceleration factors. Everything
//! runs on synthetic phantoms; an adapter reads challenge-layout files.

mod error;
mod layers;

pub mod adversarial;
pub mod apunet;
pub mod cascade;
pub mod cli;
pub mod config;
pub mod kspace;
pub mod objectives;
pub mod phantom;
pub mod sampling;
pub mod trainer;

pub use error::{Error, Result};
