//! Analysis engine for oral-systemic screening studies.
//!
//! The crate covers the full offline pipeline: subject records and their
//! categorical coding ([`model`]), expert annotation consensus
//! ([`aggregation`]), exact statistics ([`stats`]), MGI-by-condition
//! co-occurrence grids ([`cooccurrence`]), ground-truth mask synthesis
//! ([`masks`]), pixel-level segmentation metrics ([`segmetrics`]) and
//! dataset ingestion and report generation ([`io`], [`report`]).

pub mod aggregation;
pub mod cooccurrence;
pub mod error;
pub mod io;
pub mod masks;
pub mod model;
pub mod reference_cohort;
pub mod report;
pub mod segmetrics;
pub mod stats;

pub use error::{Error, Result};

/// Width of every intraoral image and mask, in pixels.
pub const FRAME_WIDTH: usize = 640;
/// Height of every intraoral image and mask, in pixels.
pub const FRAME_HEIGHT: usize = 480;
