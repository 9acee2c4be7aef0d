//! Semantic line combination detection.
//!
//! The pipeline generates line candidates on a uniform Hough-space grid,
//! filters them to `K` reliable lines with non-maximum suppression, scores
//! every one of the `2^K` line combinations, and keeps the best one. Around
//! that core sit the harmony IoU metric, the per-combination line maps, the
//! region-grouping attention math with its separation loss, and three
//! downstream applications: vanishing points, symmetry axes, and
//! composition-based retrieval.
//!
//! Coordinates are centered on the image with `y` pointing down; see
//! [`geometry`].

pub mod applications;
pub mod arrangement;
pub mod candidates;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod grouping;
pub mod io;
pub mod maps;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{Frame, Grid, Line, Point, Segment};
