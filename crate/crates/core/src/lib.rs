//! Vessel centerline extraction with a dilated 3D CNN orientation classifier.
//!
//! A small fully convolutional network predicts, from an isotropic image patch,
//! a probability distribution over a spherical direction codebook plus the local
//! lumen radius. An iterative tracker follows the most likely direction with
//! radius-sized steps and stops once the direction distribution becomes
//! uncertain. Two extra regression networks locate seed points and ostia so
//! whole vessel trees can be assembled automatically.
//!
//! Everything is trained and verified on synthetic tubular phantoms (see
//! [`phantom`]).

pub mod cnn;
pub mod error;
pub mod format;
pub mod geometry;
pub mod metrics;
pub mod phantom;
pub mod sphere;
pub mod tracker;
pub mod training;
pub mod tree;
pub mod volume;

pub use error::{Error, Result};
pub use geometry::{Mat3, Vec3};
