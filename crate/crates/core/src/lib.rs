//! Execution layer with HMAC attestations in place of per-transaction
//! signatures, an attest/execute/prove slot pipeline, a mock proof system,
//! two-tier finality and a deterministic consensus simulator.

pub mod config;
pub mod crypto;
pub mod executor;
pub mod finality;
pub mod models;
pub mod pipeline;
pub mod prover;
pub mod sim;
pub mod wire;
pub mod workload;
