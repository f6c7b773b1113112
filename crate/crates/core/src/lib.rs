//! Lane-change recognition and prediction for surrounding vehicles, posed as
//! video action recognition over vehicle-centred regions of interest.
//!
//! The crate contains the full chain: a small reverse-mode tensor engine
//! ([`tensor`]), dense optical flow by polynomial expansion ([`flow`]),
//! region-of-interest extraction ([`roi`]), windowed time-to-event labeling
//! and a synthetic highway clip generator ([`dataset`]), the disjoint
//! two-stream and spatiotemporal multiplier networks ([`models`]), and the
//! training / evaluation / experiment-grid harness ([`harness`]).

pub mod error;
pub mod dataset;
pub mod flow;
pub mod harness;
pub mod imageio;
pub mod models;
pub mod roi;
pub mod tensor;

pub use error::{Error, Result};
