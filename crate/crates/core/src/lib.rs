//! Dual-contrastive polarization detection on attributed graphs.

pub mod adjacency;
pub mod clustering;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod index;
pub mod io;
pub mod objectives;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod supervision;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
