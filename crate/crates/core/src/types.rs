//! Domain types shared by every stage of the pipeline.
//!
//! A [`Frame`] is one radar sweep of [`FRAME_LEN`] fast-time samples. A
//! [`FrameSet`] is the `T x 256` matrix recorded for one repetition of a
//! gesture and is the unit of classification. Feature extractors turn a
//! frame set into a [`FeatureSequence`].

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fast-time samples per frame.
pub const FRAME_LEN: usize = 256;

/// Nominal capture rate of the radar, frames per second.
pub const DEFAULT_FPS: f64 = 200.0;

/// Normalized signal strength range of measured or simulated samples.
pub const AMPLITUDE_MIN: f64 = 0.0;
pub const AMPLITUDE_MAX: f64 = 100.0;

/// One radar sweep.
#[derive(Clone, PartialEq)]
#[repr(transparent)]
pub struct Frame([f64; FRAME_LEN]);

impl Frame {
    /// Builds a frame from exactly [`FRAME_LEN`] finite samples.
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.len() != FRAME_LEN {
            return Err(Error::validation(format!(
                "frame has {} samples, expected {FRAME_LEN}",
                samples.len()
            )));
        }
        if let Some(j) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "frame sample {j} is not finite ({})",
                samples[j]
            )));
        }
        let mut buf = [0.0; FRAME_LEN];
        buf.copy_from_slice(samples);
        Ok(Frame(buf))
    }

    pub fn zeros() -> Self {
        Frame([0.0; FRAME_LEN])
    }

    pub fn samples(&self) -> &[f64; FRAME_LEN] {
        &self.0
    }

    pub fn samples_mut(&mut self) -> &mut [f64; FRAME_LEN] {
        &mut self.0
    }

    fn out_of_range(&self) -> Option<usize> {
        self.0
            .iter()
            .position(|v| !(AMPLITUDE_MIN..=AMPLITUDE_MAX).contains(v))
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Frame").field(&&self.0[..]).finish()
    }
}

impl From<[f64; FRAME_LEN]> for Frame {
    fn from(samples: [f64; FRAME_LEN]) -> Self {
        Frame(samples)
    }
}

/// Which of the two recorded states a frame set captures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StateLabel {
    /// Tongue resting on the floor of the mouth.
    Rest,
    /// Tongue tip touches the palate and returns to rest.
    Move,
}

impl StateLabel {
    pub const ALL: [StateLabel; 2] = [StateLabel::Rest, StateLabel::Move];

    pub fn as_str(self) -> &'static str {
        match self {
            StateLabel::Rest => "Rest",
            StateLabel::Move => "Move",
        }
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StateLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Rest" => Ok(StateLabel::Rest),
            "Move" => Ok(StateLabel::Move),
            other => Err(Error::validation(format!(
                "unknown state label {other:?} (expected \"Rest\" or \"Move\")"
            ))),
        }
    }
}

/// The `T x 256` matrix of frames recorded for one gesture repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    id: String,
    fps: f64,
    label: Option<StateLabel>,
    frames: Vec<Frame>,
    clutter_reduced: bool,
}

impl FrameSet {
    /// Builds a frame set of measured or simulated data. Every sample must
    /// lie in `[0, 100]`.
    pub fn new(
        id: impl Into<String>,
        fps: f64,
        label: Option<StateLabel>,
        frames: Vec<Frame>,
    ) -> Result<Self> {
        let fs = Self::build(id.into(), fps, label, frames, false)?;
        for (i, frame) in fs.frames.iter().enumerate() {
            if let Some(j) = frame.out_of_range() {
                return Err(Error::validation(format!(
                    "frame set {:?}: frame {i} sample {j} = {} outside [0, 100]",
                    fs.id, frame.0[j]
                )));
            }
        }
        Ok(fs)
    }

    /// Builds a frame set whose samples were produced by a processing stage
    /// (e.g. clutter reduction) and may leave the `[0, 100]` range.
    pub fn processed(
        id: impl Into<String>,
        fps: f64,
        label: Option<StateLabel>,
        frames: Vec<Frame>,
    ) -> Result<Self> {
        Self::build(id.into(), fps, label, frames, true)
    }

    fn build(
        id: String,
        fps: f64,
        label: Option<StateLabel>,
        frames: Vec<Frame>,
        clutter_reduced: bool,
    ) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::validation(format!("frame set {id:?} has no frames")));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::validation(format!(
                "frame set {id:?}: fps must be positive, got {fps}"
            )));
        }
        for (i, frame) in frames.iter().enumerate() {
            if let Some(j) = frame.0.iter().position(|v| !v.is_finite()) {
                return Err(Error::validation(format!(
                    "frame set {id:?}: frame {i} sample {j} is not finite"
                )));
            }
        }
        Ok(FrameSet {
            id,
            fps,
            label,
            frames,
            clutter_reduced,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn label(&self) -> Option<StateLabel> {
        self.label
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// True when samples come from a processing stage rather than the sensor.
    pub fn is_clutter_reduced(&self) -> bool {
        self.clutter_reduced
    }

    pub fn with_label(mut self, label: Option<StateLabel>) -> Self {
        self.label = label;
        self
    }
}

/// Variable-length sequence of `d`-dimensional feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    dim: usize,
    values: Vec<f64>,
}

impl FeatureSequence {
    /// Builds a sequence from row-major `values` holding `values.len() / dim`
    /// steps.
    pub fn from_flat(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("feature dimension must be at least 1"));
        }
        if values.is_empty() {
            return Err(Error::validation("feature sequence is empty"));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::validation(format!(
                "{} values do not split into steps of dimension {dim}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "feature value at step {} is not finite",
                i / dim
            )));
        }
        Ok(FeatureSequence { dim, values })
    }

    /// One-dimensional sequence.
    pub fn scalar(values: Vec<f64>) -> Result<Self> {
        Self::from_flat(1, values)
    }

    pub fn from_steps<S: AsRef<[f64]>>(steps: &[S]) -> Result<Self> {
        let dim = steps.first().map(|s| s.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(steps.len() * dim);
        for (i, s) in steps.iter().enumerate() {
            let s = s.as_ref();
            if s.len() != dim {
                return Err(Error::validation(format!(
                    "step {i} has dimension {}, expected {dim}",
                    s.len()
                )));
            }
            values.extend_from_slice(s);
        }
        Self::from_flat(dim, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of steps `L`.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn steps(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    /// Values of a single dimension across all steps.
    pub fn column(&self, d: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(d).step_by(self.dim).copied()
    }

    pub(crate) fn map_values(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        let dim = self.dim;
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i % dim, v))
            .collect();
        FeatureSequence { dim, values }
    }
}

/// Capture metadata stored alongside a dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetInfo {
    pub participant: String,
    /// Master seed when the data was synthesized.
    pub seed: Option<u64>,
}

/// A labeled collection of frame sets recorded from one participant.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    info: DatasetInfo,
    frame_sets: Vec<FrameSet>,
}

impl Dataset {
    pub fn new(info: DatasetInfo, frame_sets: Vec<FrameSet>) -> Result<Self> {
        let mut seen = HashSet::new();
        for fs in &frame_sets {
            if fs.label().is_none() {
                return Err(Error::validation(format!(
                    "frame set {:?} has no state label",
                    fs.id()
                )));
            }
            if !seen.insert(fs.id()) {
                return Err(Error::validation(format!(
                    "duplicate frame set id {:?}",
                    fs.id()
                )));
            }
        }
        Ok(Dataset { info, frame_sets })
    }

    pub fn info(&self) -> &DatasetInfo {
        &self.info
    }

    pub fn frame_sets(&self) -> &[FrameSet] {
        &self.frame_sets
    }

    pub fn len(&self) -> usize {
        self.frame_sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_sets.is_empty()
    }

    /// Label of frame set `i`; always present by construction.
    pub fn label(&self, i: usize) -> StateLabel {
        self.frame_sets[i]
            .label()
            .expect("dataset frame sets are labeled")
    }

    pub fn count(&self, label: StateLabel) -> usize {
        (0..self.len()).filter(|&i| self.label(i) == label).count()
    }
}
