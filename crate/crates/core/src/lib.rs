//! IR-UWB radar motion classification.
//!
//! The pipeline turns radar frame sets (`T x 256` amplitude matrices) into
//! feature sequences and labels them `Rest` or `Move`:
//!
//! * [`feature`]: sliding RMS envelope of the concatenated frames, decimated
//!   to `T/4` values, classified by two left-to-right GMM-HMMs ([`hmm`]).
//! * [`clean`]: per-frame strongest-target `(delay, strength)` tracks after
//!   clutter removal, classified by MD-DTW nearest neighbour ([`dtw`]).
//!
//! [`sim`] synthesizes labelled datasets, [`dataset`] stores them on disk and
//! [`eval`] runs leave-one-out cross-validation over all methods.

pub mod clean;
pub mod cli;
pub mod dataset;
pub mod dtw;
pub mod error;
pub mod eval;
pub mod feature;
pub mod hmm;
pub mod sim;
pub mod types;

pub use error::{Error, Result};
pub use types::{Dataset, DatasetInfo, FeatureSequence, Frame, FrameSet, StateLabel, FRAME_LEN};
