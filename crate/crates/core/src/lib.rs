//! Dense coefficient packing for depthwise and group convolutions evaluated
//! under homomorphic encryption, with a two-party protocol simulator and a
//! communication cost model.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: integer tensors mod `2^l` and the reference convolutions.
//! * [`ring`]: the negacyclic ring `Z_q[X]/(X^N+1)`.
//! * [`packing`]: coefficient mappings (zero-aware dense packing, group
//!   packing, Cheetah and Iron baselines) and the greedy superstring arranger.
//! * [`tiling`]: the communication cost model and the `(C_x, C_w)` solver.
//! * [`protocol`]: secret sharing, a toy RLWE backend and the two-party
//!   depthwise convolution session.
//! * [`bench`]: the command implementations behind the `falconpack` binary.
//!
//! The RLWE scheme here is simulation-grade: it exists to make transcript sizes
//! and noise growth concrete, and claims no security level.

pub mod bench;
pub mod error;
pub mod packing;
pub mod params;
pub mod protocol;
pub mod ring;
pub mod tensor;
pub mod tiling;

pub use error::{Error, Result};
pub use params::HeParams;
pub use ring::RingPoly;
pub use tensor::{ConvDims, Tensor};
