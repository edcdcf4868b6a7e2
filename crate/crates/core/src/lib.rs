//! Adversarial autoencoders with a constant-curvature latent space.
//!
//! The latent codes live in the ambient space `R^{d+1}` of a hypersphere
//! (`κ = +1`) or hyperboloid (`κ = -1`). Training matches the aggregated
//! posterior to a prior on the manifold through a critic, and additionally
//! rewards the encoder for producing codes with a high membership degree.
//!
//! Modules, bottom up:
//!
//! * [`geometry`]: scalar products, geodesics, exp/log maps, projection,
//!   membership.
//! * [`priors`]: spherical uniform and wrapped normal samplers.
//! * [`nn`]: dense networks with exact gradients, BCE and Adam.
//! * [`aae`]: the model and its alternating training loop.
//! * [`data`]: MNIST IDX loading, binarisation, splits, synthetic clusters.
//! * [`eval`]: geodesic K-NN, traversals and chart exports.
//! * [`experiment`]: configuration and the train/evaluate pipeline.

pub mod aae;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod geometry;
pub mod nn;
pub mod priors;
pub mod rng;

pub use aae::{train, CcmAae, Optimisers, Seeds, TrainConfig, TrainHistory};
pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use geometry::{AmbientPoint, Curvature, MembershipWidth, TangentVector};
