//! Unsupervised 3D keypoint discovery and keypoint-driven cage deformation.
//!
//! The pipeline, bottom-up:
//!
//! - [`geom`]: meshes, point clouds, OBJ I/O, surface sampling, Chamfer
//!   distance, farthest point sampling and procedural shape families.
//! - [`cage`]: icosphere cages, shrink-wrap initialization, mean value
//!   coordinates and the cage deformation itself.
//! - [`net`]: a small PointNet-style encoder, dense heads with hand-written
//!   reverse-mode gradients, and Adam.
//! - [`deformer`]: the keypoint predictor, influence matrix, cage skinning,
//!   the three-term objective and the pairwise-alignment training loop.
//! - [`prior`]: PCA over predicted keypoints for edit synchronization and
//!   shape amplification.
//! - [`eval`]: PCK, part correlation and the alignment benchmark, plus the
//!   property metrics used on synthetic families.
//! - [`pipeline`]: mesh-in, mesh-out helpers shared by the CLI and server.

pub mod cage;
pub mod checkpoint;
pub mod deformer;
mod error;
pub mod eval;
pub mod geom;
pub mod net;
pub mod pipeline;
pub mod prior;
mod rng;

pub use error::{Error, Result};
pub use rng::Rng;

/// A point or direction in 3D.
pub type Vec3 = [f64; 3];
