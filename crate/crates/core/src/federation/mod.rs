//! The server loop: client sampling, broadcast of the shared small model,
//! local training on every sampled client, and sample-weighted aggregation.
//!
//! Clients within a round are independent and train in parallel; each draws
//! its shuffles from its own seeded stream and aggregation runs in ascending
//! client id, so results match a sequential schedule exactly.

mod client;
mod config;
mod run;
mod server;

pub use client::{client_update, ClientState, LocalOutcome, LocalSpec, Upload};
pub use config::{Mode, RunConfig};
pub use run::{run_training, Federation};
pub use server::{aggregate, aggregation_weights, broadcast, sample_clients, ServerState};

#[cfg(test)]
mod tests;
