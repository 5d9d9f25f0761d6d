//! Trade-surveillance toolkit: order-tape replay, trading networks and manipulation
//! motifs, power-law tails, event studies of market activity and price impact, and a
//! seeded market generator with ground-truth labels.

pub mod analysis;
pub mod error;
pub mod events;
pub mod impact;
pub mod io;
pub mod matching;
pub mod network;
pub mod powerlaw;
pub mod stats;
pub mod synth;
pub mod tape;

pub use error::{Error, Result};
