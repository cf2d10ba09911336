//! RMS-envelope motion feature.
//!
//! The frames of a set are laid end to end, a sliding RMS envelope is taken
//! over the resulting `T * 256` samples, the envelope is point-sampled every
//! 1024 samples (four frames) and its mean is removed. A frame set of `T`
//! frames yields `floor(T / 4)` feature values.

use crate::error::{Error, Result};
use crate::types::{FeatureSequence, FrameSet, FRAME_LEN};

pub const DEFAULT_WINDOW: usize = 400;
pub const DEFAULT_DECIMATION: usize = 4 * FRAME_LEN;

/// Frames of `fs` laid end to end: `out[i * 256 + j] == frames[i][j]`.
pub fn concatenate(fs: &FrameSet) -> Vec<f64> {
    let mut out = Vec::with_capacity(fs.len() * FRAME_LEN);
    for frame in fs.frames() {
        out.extend_from_slice(frame.samples());
    }
    out
}

/// Sliding RMS with stride 1.
///
/// `out[k]` is the RMS of `signal[k .. k + window]`, truncated to the end of
/// the signal, so the output has the input's length and the tail windows
/// shrink.
///
/// Window sums are assembled from per-block running sums of squares (block
/// length = `window`), so every sum only adds non-negative terms and carries
/// no cancellation error however the signal level varies.
pub fn rms_envelope(signal: &[f64], window: usize) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::validation(
            "cannot take the envelope of an empty signal",
        ));
    }
    if window == 0 {
        return Err(Error::validation("envelope window must be at least 1"));
    }
    let n = signal.len();

    // prefix[i]: sum of squares from the start of i's block through i.
    // suffix[i]: sum of squares from i through the end of i's block.
    let mut prefix = vec![0.0; n];
    let mut suffix = vec![0.0; n];
    for block in (0..n).step_by(window) {
        let end = (block + window).min(n);
        let mut acc = 0.0;
        for i in block..end {
            acc += signal[i] * signal[i];
            prefix[i] = acc;
        }
        let mut acc = 0.0;
        for i in (block..end).rev() {
            acc += signal[i] * signal[i];
            suffix[i] = acc;
        }
    }

    let out = (0..n)
        .map(|k| {
            let last = (k + window).min(n) - 1;
            let sum = if k % window == 0 {
                prefix[last]
            } else if last / window == k / window {
                suffix[k]
            } else {
                suffix[k] + prefix[last]
            };
            (sum / (last - k + 1) as f64).sqrt()
        })
        .collect();
    Ok(out)
}

/// Point-samples every `factor`-th value: `out[k] = env[k * factor]`.
pub fn decimate(env: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor == 0 {
        return Err(Error::validation("decimation factor must be at least 1"));
    }
    if factor > env.len() {
        return Err(Error::validation(format!(
            "decimation factor {factor} exceeds signal length {}",
            env.len()
        )));
    }
    Ok(env
        .iter()
        .step_by(factor)
        .take(env.len() / factor)
        .copied()
        .collect())
}

pub fn remove_dc(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let mean = mean(x);
    x.iter().map(|v| v - mean).collect()
}

/// Mean with one residual-correction pass; exact for constant input.
pub(crate) fn mean(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let rough = x.iter().sum::<f64>() / n;
    rough + x.iter().map(|v| v - rough).sum::<f64>() / n
}

/// Envelope window and decimation factor of the feature pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvelopeParams {
    pub window: usize,
    pub decimation: usize,
}

impl Default for EnvelopeParams {
    fn default() -> Self {
        EnvelopeParams {
            window: DEFAULT_WINDOW,
            decimation: DEFAULT_DECIMATION,
        }
    }
}

/// `remove_dc(decimate(rms_envelope(concatenate(fs), 400), 1024))`.
pub fn extract_feature(fs: &FrameSet) -> Result<FeatureSequence> {
    extract_feature_with(fs, EnvelopeParams::default())
}

pub fn extract_feature_with(fs: &FrameSet, params: EnvelopeParams) -> Result<FeatureSequence> {
    let signal = concatenate(fs);
    if signal.len() < params.decimation {
        return Err(Error::validation(format!(
            "frame set {:?} too short: {} frames give {} samples, at least {} needed",
            fs.id(),
            fs.len(),
            signal.len(),
            params.decimation
        )));
    }
    if params.window == 0 {
        return Err(Error::validation("envelope window must be at least 1"));
    }
    // Same values as decimate(rms_envelope(..)), but only the sampled windows
    // are summed, each in its own order, so equal windows give equal values.
    let picked: Vec<f64> = (0..signal.len() / params.decimation)
        .map(|k| {
            let start = k * params.decimation;
            let w = &signal[start..(start + params.window).min(signal.len())];
            (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt()
        })
        .collect();
    FeatureSequence::scalar(remove_dc(&picked))
}
