//! Cellular-automata sediment transport over raster catchments, with greedy
//! selection of afforestation sites that minimize sediment yield.
//!
//! The pipeline, bottom to top:
//!
//! * [`raster`] — row-major grids and ESRI ASCII grid I/O.
//! * [`flow`] — D8 (single) and FD8 (multiple) flow directions, ancestor
//!   adjacency, and a deterministic topological order.
//! * [`transport`] — the piecewise-linear outflow kernel, the full
//!   sediment-accumulation sweep, and incremental replay engines that
//!   re-evaluate only the part of the catchment a single land-use flip can
//!   reach.
//! * [`selection`] — the greedy loop: evaluate every remaining candidate
//!   cell's yield reduction, commit the best, repeat.
//! * [`rusle`] — RUSLE erosion rates (`E = R·K·LS·C·P`) and the derivation of
//!   per-cell transport parameters from them.
//! * [`synth`] — seeded synthetic catchments plus independent reference
//!   implementations used to cross-check the kernels in tests.

pub mod error;
pub mod flow;
pub mod raster;
pub mod rusle;
pub mod selection;
pub mod synth;
pub mod transport;

pub use error::{Error, Result};
