//! Mutual localization for two ground robots: SE(2)/SE(3) geometry,
//! anisotropic convolution kernels with verified gradients, training losses,
//! iterative pose refinement, a rendezvous pose graph and a seeded simulator
//! tying them together.

pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod posegraph;
pub mod refinement;
pub mod rng;
pub mod simulator;
pub mod trajectory;
