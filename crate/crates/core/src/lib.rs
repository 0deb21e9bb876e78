//! Streaming fast/slow cascaded transducer decoding.
//!
//! - [`numerics`]: dense matrices, log-space reductions, masked attention.
//! - [`encoder`]: block-processing streaming encoder and the fast/slow cascade.
//! - [`transducer`]: predictor, joiner and the transducer loss family.
//! - [`decoder`]: transducer beam search and parallel fast/slow beam search.
//! - [`metrics`]: WER, emission delay, correction rate and real-time factor.
//! - [`harness`]: file formats, configuration, corpus runner and CLI.

pub mod decoder;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod numerics;
pub mod transducer;

pub use error::{Error, Result};
