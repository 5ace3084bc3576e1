//! Time-scaled Epidemic-Type Aftershock Sequence (ETAS) models.
//!
//! The crate covers the whole workflow for a space-time ETAS analysis of an
//! earthquake catalog:
//!
//! * [`catalog`]: CSV ingestion, windowing and an ANSS ComCat client.
//! * [`timescale`]: the ideal, calibration, proportional-hazards, log-linear
//!   and power transforms of the time axis.
//! * [`model`]: parameters, magnitude laws and the triggering kernels.
//! * [`intensity`]: conditional intensity, kernel-smoothed background and
//!   gridded intensity / clustering surfaces.
//! * [`likelihood`]: log-likelihood, its magnitude/ground split and the
//!   compensator.
//! * [`optimize`]: Nelder-Mead, Davidon-Fletcher-Powell and parameter
//!   transforms.
//! * [`decluster`]: triggering probabilities, the iterative stochastic
//!   declustering fit and event classification.
//! * [`diagnostics`]: time-rescaling residuals and KS tests.
//! * [`simulate`]: branching and thinning simulators with known genealogy.
//!
//! Times are fractional days, coordinates are planar degrees.

pub mod catalog;
pub mod decluster;
pub mod diagnostics;
pub mod error;
pub mod intensity;
pub mod likelihood;
pub mod model;
pub mod optimize;
pub mod output;
pub mod quad;
pub mod simulate;
pub mod timescale;

pub use catalog::{Catalog, Event, Region};
pub use decluster::{FitResult, TriggerProbs};
pub use error::{EtasError, Result};
pub use intensity::BackgroundField;
pub use likelihood::{LogLik, Variant};
pub use model::{EtasParams, MagnitudeModel};
pub use timescale::TimeScale;
