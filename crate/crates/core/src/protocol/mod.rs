//! Two-party secure convolution: additive shares, a toy RLWE backend, byte
//! framing and the client/server session.

pub mod rlwe;
pub mod session;
pub mod share;
pub mod wire;

pub use rlwe::{
    expand_a, extract_lwe, extract_remask_batch, hom_add, hom_add_plain, hom_mul_plain, keygen, lwe_sub_scalar,
    noise_budget_bits, Backend, LweCiphertext, Noise, RlweCiphertext, SecretKey,
};
pub use session::{run_session, secure_dwconv, Client, ProtocolTranscript, Server, SessionConfig, SessionSeeds};
pub use share::{reconstruct, share, Party, Share};
pub use wire::{duplex, Endpoint, InputMessage, OutputMessage};
