//! Physical-layer simulator for sparse-coded ambient backscatter.
//!
//! Energy-harvesting tags reflect an access point's own downlink signal over
//! two-way (dyadic) multipath channels. Each active tag places `K1 = 2`
//! non-zero reflection symbols among `K` slots, so `N = C(K, 2)` tags share the
//! `K` slots non-orthogonally. The access point cancels its self-interference,
//! recovers the forward channels from the composite self-convolved channel and
//! separates the superposed tags with an iterative log-domain message-passing
//! detector that models the inter-slot interference instead of discarding it.
//!
//! Modules:
//!
//! * [`sigmodel`]: ambient source, multipath channels, Toeplitz convolution,
//!   incident energy and tag activation, received superposition and SIC.
//! * [`codec`]: mapping tables, sparse codebooks, factor graphs and the
//!   time-division baseline modulator.
//! * [`estimator`]: self-convolution, forward-tap recovery and dyadic channel
//!   assembly.
//! * [`detector`]: max-star arithmetic, codeword projection/expansion, the
//!   message-passing detector, a brute-force MAP oracle and the baseline
//!   detector.
//! * [`simkit`]: Monte-Carlo trials, aggregation and parameter sweeps.
//! * [`cli`]: configuration files, CSV output and debug dumps.

pub mod cli;
pub mod codec;
pub mod detector;
pub mod error;
pub mod estimator;
pub mod sigmodel;
pub mod simkit;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use sigmodel::SimParams;
