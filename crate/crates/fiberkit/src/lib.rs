//! Simulation and analysis toolkit for high-speed optical links.
//!
//! The crate covers both direct-detection and coherent transmission:
//!
//! - [`signal`] — complex baseband containers and waveform primitives
//!   (FFT-based filtering, Hilbert transform, pulse shaping, clipping,
//!   quantization).
//! - [`imdd`] — intensity-modulated direct-detection PAM links and the
//!   interferometric-crosstalk penalty model.
//! - [`dmt`] — discrete multitone framing, one-tap equalization and
//!   bit/power loading.
//! - [`ssb`] — single-/double-/vestigial-sideband DMT transceivers with
//!   square-law detection and beating-interference compensation.
//! - [`ssfm`] — split-step fiber propagation (Manakov), amplified spans,
//!   nonlinear-interference fitting and pulse-collision analysis.
//! - [`cohdsp`] — coherent receiver DSP: CD compensation, 2×2 adaptive
//!   equalization, carrier-phase estimation.
//! - [`shaping`] — labeled constellations, probabilistic shaping,
//!   distribution matching and achievable-information-rate estimators.
//! - [`util`] — numerics shared by everything above.

pub mod cohdsp;
pub mod dmt;
pub mod imdd;
pub mod shaping;
pub mod signal;
pub mod ssb;
pub mod ssfm;
pub mod util;
