//! Dual tracking of a moving planar target: optical-flow tracking of contour
//! dominant points combined with a multiswarm particle search along the
//! target's polygonal boundary.

pub mod bbox;
pub mod config;
pub mod contour;
pub mod error;
pub mod eval;
pub mod frame_io;
pub mod geometry;
pub mod klt;
pub mod pso;
pub mod synth;
pub mod tracker;
mod par;

pub use error::{Error, Result};
pub use par::is_parallel;
pub use geometry::{Pixel, Point2, Rect};
