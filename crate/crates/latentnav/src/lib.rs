//! Learn a latent map of a toured environment, plan geodesic paths in it,
//! and match them back to real frames as navigation routes.
//!
//! The pipeline, end to end:
//!
//! 1. [`world`] renders a deterministic synthetic tour of a ring of rooms
//!    (or ingests user-supplied frames) with ground-truth positions.
//! 2. [`vae`] trains a variational autoencoder on the tour frames with
//!    RMSprop minibatches; [`checkpoint`] persists the weights.
//! 3. [`planner`] connects two latent points with a straight line and
//!    refines it by gradient descent on the total decoded image length.
//! 4. [`routing`] matches the path's decoded images to the nearest training
//!    frames and scores the resulting route, including against the
//!    graph-search alternative in [`graph`].
//!
//! Everything numeric sits on [`tensor`]/[`mlp`]/[`optim`], whose analytic
//! gradients are verified against [`gradcheck`] finite differences (see
//! [`selfcheck`] for the randomized suites). All randomness flows through
//! the seeded [`rng`] stream, so every run is reproducible byte-for-byte.

pub mod checkpoint;
pub mod error;
pub mod fsio;
pub mod gradcheck;
pub mod graph;
pub mod image;
pub mod mlp;
pub mod netpbm;
pub mod optim;
pub mod planner;
pub mod rng;
pub mod routing;
pub mod selfcheck;
pub mod tensor;
pub mod vae;
pub mod world;

pub use error::{Error, Result};
pub use image::Image;
pub use tensor::Tensor;
