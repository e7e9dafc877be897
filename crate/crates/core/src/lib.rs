//! Recognition-driven face super-resolution.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`imaging`]: pixel containers, color conversion, resampling, JPEG
//!   degradation and the LR/HR pair generator.
//! * [`srops`]: coordinate-channel augmentation and sub-pixel shuffle.
//! * [`nn`]: a small deterministic layer library with explicit backward passes.
//! * [`models`]: the SRCNN / SubCNN / FSRCNN / SRGAN families and their variants.
//! * [`losses`]: pixel, adversarial, content and face-identity objectives.
//! * [`training`]: supervised and adversarial loops, schedules and logs.
//! * [`metrics`]: PSNR, SSIM and inference timing.
//! * [`recognition`]: cropping, embedding and cosine nearest-neighbour matching.
//! * [`analysis`]: rank statistics and report emission.

pub mod analysis;
pub mod backends;
pub mod error;
pub mod imaging;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod recognition;
pub mod rng;
pub mod srops;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Float, Tensor};
