//! Respiratory rate estimation from the photoplethysmogram.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`preprocess`]: band-pass the PPG, segment pulses, flag artifacts;
//! 2. [`riv`]: derive five respiratory-induced variation series on a 5 Hz grid;
//! 3. [`spectral`]: per 32 s window, subtract a power-law background from the
//!    spectrum, pick the dominant rate and score it with a noise index;
//! 4. [`fusion`]: fuse the surviving estimates by covariance intersection
//!    (or the Smart Fusion baselines).
//!
//! [`evaluation`] scores fused output against reference annotations and
//! [`signal_io`] handles files and synthetic test signals.

pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod pipeline;
pub mod preprocess;
pub mod riv;
pub mod signal_io;
pub mod spectral;

pub use error::{Error, Result};
pub use fusion::{FusionResult, Method};
pub use pipeline::{Analysis, Pipeline};
pub use riv::RivKind;
pub use signal_io::{PpgRecord, ReferenceRr, SynthSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
