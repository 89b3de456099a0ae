//! Point-tracking evaluation with out-of-view and re-identification metrics,
//! and synthesis of semi-real training sequences from sparse reconstructions.

pub mod commands;
pub mod dataio;
pub mod geometry;
pub mod kepic;
pub mod metrics;
pub mod model;
pub mod oracle;
