//! Sim-to-real binary segmentation of a toy surgical instrument.
//!
//! The pipeline mirrors a two-step domain-adaptation approach:
//!
//! 1. A procedural scene generator renders the same sampled instrument
//!    scene in a plain "synthetic" style and a textured "realistic"
//!    style, with one pixel-perfect mask shared by both.
//! 2. A CycleGAN is trained on the unpaired styles and then used to
//!    translate synthetic renders into realistic-looking images. The
//!    original masks carry over untouched, yielding a labeled
//!    "adapted" training set for free.
//! 3. A U-Net is trained on the adapted, augmented set and evaluated
//!    with a three-tier IoU protocol (clean / composed backgrounds /
//!    composed + heavy augmentation).
//!
//! Everything is seeded and deterministic: the same config and seed
//! reproduce manifests, loss logs, and reports byte for byte.

pub mod augment;
pub mod checkpoint;
pub mod config;
pub mod cyclegan;
pub mod evalkit;
mod fsutil;
pub mod imaging;
pub mod manifest;
pub mod nn;
pub mod pipeline;
pub mod scenegen;
pub mod seeding;
pub mod unet;

pub use imaging::{BinaryMask, NormalizedTensor, RasterImage};
pub use manifest::{DatasetManifest, DomainTag, ManifestRow};
