//! Trusted-node QKD key relay.
//!
//! Three relay protocols run over simulated QKD links: the plain one-time-pad
//! relay, the relay whose payload is first encrypted under a KEM-established
//! AES key, and the direct-KEM relay that forwards KEM ciphertexts. The crate
//! also provides adversary-view auditing, efficiency accounting and a
//! discrete-time network harness with an ETSI-014-style key delivery endpoint.

pub mod audit;
pub mod cryptoseal;
pub mod keycore;
pub mod netharness;
pub mod qkdsim;
pub mod relay;

/// Randomness source used throughout the simulator.
pub type SimRng = rand_chacha::ChaCha20Rng;
