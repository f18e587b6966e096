//! HTTP service behind the interactive workflow: open a sweep or volume,
//! browse slices, place a tumor box, segment, correct with a spherical brush
//! and export.

pub mod api;
pub mod session;

pub use api::{router, AppState};
