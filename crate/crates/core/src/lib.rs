//! Sideband cooling of a micromechanical oscillator coupled to a microwave cavity.
//!
//! The crate is split along the physics:
//!
//! * [`device`] holds the static device description and elementary quantities
//!   (zero-point motion, quality factor, Bose occupancy).
//! * [`dynamics`] covers drive bookkeeping and steady-state cooling: coupling
//!   rate, sideband scattering rates, final occupancy.
//! * [`spectra`] contains the frequency-domain forward models and the
//!   [`SpectrumTrace`](spectra::SpectrumTrace) container with its CSV format.
//! * [`limits`] is the measurement-limit algebra (imprecision, backaction,
//!   imprecision-backaction product).
//! * [`estimation`] solves the inverse problems: spectral fits, coupling
//!   calibration and cooling-sweep analysis.
//! * [`synth`] generates seeded noisy spectra from the forward models.
//!
//! All rates are angular (rad/s). Frequencies on spectrum axes and in files
//! are ordinary frequencies (Hz); the conversion happens at the boundary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod device;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod limits;
pub mod spectra;
pub mod synth;

pub use error::{Error, Result};
