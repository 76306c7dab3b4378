//! Deterministic discrete-event core: clock and queue, labeled RNG streams,
//! radio propagation, and the shared network state.

pub mod event;
pub mod network;
pub mod radio;
pub mod rng;
