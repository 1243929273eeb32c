//! Algorithmic core of the `facerep` face-representation toolkit.
//!
//! Everything in this crate is a pure function of its inputs (plus explicit
//! seeds) and needs only an allocator: no file system, no threads, no clock.
//! The companion `facerep` crate carries the file formats, checkpoints, the
//! training driver with its output directory, and the command-line tool.
//!
//! Modules, bottom-up:
//!
//! * [`tensor`] and [`layers`]: dense tensors and the forward/backward passes
//!   of every layer type the network uses, plus [`gradcheck`].
//! * [`network`]: declarative layer stacks, parameter accounting, forward
//!   passes, backpropagation and initialization.
//! * [`objective`]: softmax identification cost, contrastive verification
//!   cost, their weighted combination, and within-batch pair sampling.
//! * [`trainer`]: schedules, batching and momentum SGD with per-layer decay.
//! * [`faceproc`]: gray images, two-landmark similarity alignment, mirroring
//!   and a synthetic face world.
//! * [`forge`]: tag-constrained face-to-identity assignment, subject filtering
//!   and name deduplication.
//! * [`eval`]: cosine, PCA and Joint Bayes scoring and the verification,
//!   open-set identification and video-pair protocols.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod eval;
pub mod exec;
pub mod faceproc;
pub mod forge;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod objective;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use exec::{BatchExecutor, Sequential};
pub use layers::{LayerKind, Mode};
pub use network::{Network, NetworkSpec};
pub use tensor::{ShapeError, Tensor};
