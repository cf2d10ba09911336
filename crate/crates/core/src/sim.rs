//! Seedable generator of synthetic IR-UWB frame sets.
//!
//! Every frame is a static clutter profile plus one reflector (a scaled
//! [`PulseTemplate`] at an integer fast-time lag) plus i.i.d. Gaussian noise,
//! clamped to `[0, 100]` and quantized to [`AMPLITUDE_RESOLUTION`]. In a
//! `Rest` frame set the reflector never moves. In a `Move` frame set the
//! reflector follows a half-sine out-and-back excursion during the movement
//! window:
//!
//! ```text
//! delay(t) = rest_delay + round(move_extent * sin(pi * (t - start) / (end - start)))
//! ```
//!
//! ## Seeds
//!
//! All randomness comes from `ChaCha8Rng`. For a dataset with master seed `s`,
//! stream 0 of `ChaCha8Rng::seed_from_u64(s)` draws the shared clutter profile
//! and frame set `i` (in dataset order) gets the seed produced by the first
//! `next_u64()` of stream `i + 1`. Each frame set is therefore reproducible on
//! its own with [`generate_frame_set`].

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::types::{
    Dataset, DatasetInfo, Frame, FrameSet, StateLabel, AMPLITUDE_MAX, AMPLITUDE_MIN, DEFAULT_FPS,
    FRAME_LEN,
};

/// Simulated amplitudes are rounded to this grid, so every value has at most
/// 9 significant digits and survives the dataset text format exactly.
pub const AMPLITUDE_RESOLUTION: f64 = 1e-6;

/// Default pulse length in taps.
pub const DEFAULT_PULSE_LEN: usize = 31;

/// Template taps are rounded to multiples of 2^-16. Amplitude-scaled copies
/// and their correlations with the template are then computed without
/// rounding error.
const TAP_GRID: f64 = 65536.0;

/// Gaussian envelope standard deviation as a fraction of the pulse span.
const ENVELOPE_SPAN: f64 = 6.0;
/// Carrier cycles across the pulse span.
const CARRIER_CYCLES: f64 = 3.0;

/// Background level of the clutter profile.
const CLUTTER_FLOOR: f64 = 10.0;

/// Peak-normalized transmit pulse shape of odd length.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseTemplate {
    taps: Vec<f64>,
}

impl PulseTemplate {
    /// Wraps `taps`, scaling them so the largest absolute tap is 1.
    pub fn from_taps(taps: Vec<f64>) -> Result<Self> {
        if taps.len().is_multiple_of(2) {
            return Err(Error::validation(format!(
                "pulse template length must be odd, got {}",
                taps.len()
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::validation("pulse template has non-finite taps"));
        }
        let peak = taps.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
        if peak == 0.0 {
            return Err(Error::validation("pulse template is all zeros"));
        }
        let taps = if peak == 1.0 {
            taps
        } else {
            taps.into_iter().map(|t| t / peak).collect()
        };
        Ok(PulseTemplate { taps })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }
}

/// Gabor pulse (Gaussian-windowed cosine) of `len` taps.
///
/// Tap `m` is `exp(-x^2 / (2 w^2)) * cos(2 pi f x)` with `x = m - (len-1)/2`,
/// `w = (len-1)/6` and `f = 3/(len-1)`, rounded to a multiple of 2^-16. The
/// centre tap is exactly 1 and the taps are exactly symmetric.
pub fn default_template(len: usize) -> Result<PulseTemplate> {
    if len < 5 || len.is_multiple_of(2) {
        return Err(Error::validation(format!(
            "pulse length must be odd and at least 5, got {len}"
        )));
    }
    let span = (len - 1) as f64;
    let width = span / ENVELOPE_SPAN;
    let freq = CARRIER_CYCLES / span;
    let centre = span / 2.0;
    let taps = (0..len)
        .map(|m| {
            let x = m as f64 - centre;
            let v = (-x * x / (2.0 * width * width)).exp() * (2.0 * PI * freq * x).cos();
            (v * TAP_GRID).round() / TAP_GRID
        })
        .collect();
    PulseTemplate::from_taps(taps)
}

/// Scenario parameters for one frame set.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Frame count `T`.
    pub frames: usize,
    pub fps: f64,
    pub noise_sigma: f64,
    /// Static background, one value per fast-time index.
    pub clutter: Vec<f64>,
    pub pulse: PulseTemplate,
    pub target_amp: f64,
    /// Fast-time lag of the first pulse tap while at rest.
    pub target_rest_delay: usize,
    pub move_extent: usize,
    /// Movement episode as a half-open frame range `[start, end)`.
    pub move_window: (usize, usize),
    pub seed: u64,
}

impl SimConfig {
    /// Defaults for a 2 s capture at 200 fps with the clutter profile drawn
    /// from `seed`. Noise is set for a 20 dB planted-target SNR.
    pub fn with_seed(seed: u64) -> Self {
        let frames = 400;
        SimConfig {
            frames,
            fps: DEFAULT_FPS,
            noise_sigma: 3.0,
            clutter: default_clutter(seed),
            pulse: default_template(DEFAULT_PULSE_LEN).expect("default pulse length is valid"),
            target_amp: 30.0,
            target_rest_delay: 100,
            move_extent: 60,
            move_window: (frames * 3 / 10, frames * 7 / 10),
            seed,
        }
    }

    /// Sets the capture length from a duration in seconds at the configured
    /// fps, rescaling the movement window proportionally.
    pub fn with_duration(mut self, seconds: f64) -> Self {
        let frames = (seconds * self.fps).round().max(1.0) as usize;
        self.move_window = scale_window(self.move_window, self.frames, frames);
        self.frames = frames;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.pulse.len();
        if self.frames == 0 {
            return Err(Error::validation("frame count must be at least 1"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::validation(format!(
                "fps must be positive, got {}",
                self.fps
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::validation(format!(
                "noise sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        if !self.target_amp.is_finite() {
            return Err(Error::validation("target amplitude must be finite"));
        }
        if self.clutter.len() != FRAME_LEN {
            return Err(Error::validation(format!(
                "clutter profile has {} values, expected {FRAME_LEN}",
                self.clutter.len()
            )));
        }
        if self
            .clutter
            .iter()
            .any(|c| !(AMPLITUDE_MIN..=AMPLITUDE_MAX).contains(c))
        {
            return Err(Error::validation("clutter profile leaves [0, 100]"));
        }
        if m > FRAME_LEN || self.target_rest_delay + self.move_extent > FRAME_LEN - 1 - m {
            return Err(Error::validation(format!(
                "reflector path {}..={} does not fit a {m}-tap pulse inside the frame (limit {})",
                self.target_rest_delay,
                self.target_rest_delay + self.move_extent,
                (FRAME_LEN - 1).saturating_sub(m)
            )));
        }
        let (start, end) = self.move_window;
        if start >= end || end > self.frames {
            return Err(Error::validation(format!(
                "movement window [{start}, {end}) is not inside 0..{}",
                self.frames
            )));
        }
        Ok(())
    }

    /// Ground-truth reflector lag at frame `t`.
    pub fn delay_at(&self, t: usize, label: StateLabel) -> usize {
        let (start, end) = self.move_window;
        if label == StateLabel::Rest || t < start || t >= end {
            return self.target_rest_delay;
        }
        let phase = PI * (t - start) as f64 / (end - start) as f64;
        self.target_rest_delay + (self.move_extent as f64 * phase.sin()).round() as usize
    }
}

fn scale_window((start, end): (usize, usize), from: usize, to: usize) -> (usize, usize) {
    let start = start * to / from;
    let end = (end * to / from).clamp(start + 1, to.max(start + 1));
    (start, end)
}

/// Static background: a low floor, a strong antenna-coupling return in the
/// first fast-time bins and four weak random reflections.
pub fn default_clutter(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bumps = vec![(
        rng.random_range(8.0..14.0),
        rng.random_range(4.0..7.0),
        rng.random_range(30.0..40.0),
    )];
    for _ in 0..4 {
        bumps.push((
            rng.random_range(0.0..FRAME_LEN as f64),
            rng.random_range(3.0..12.0),
            rng.random_range(3.0..10.0),
        ));
    }
    (0..FRAME_LEN)
        .map(|j| {
            let x = j as f64;
            let v: f64 = CLUTTER_FLOOR
                + bumps
                    .iter()
                    .map(|&(c, w, h)| h * (-(x - c) * (x - c) / (2.0 * w * w)).exp())
                    .sum::<f64>();
            quantize(v.clamp(AMPLITUDE_MIN, AMPLITUDE_MAX))
        })
        .collect()
}

fn quantize(v: f64) -> f64 {
    // Dividing the integer count gives the double nearest the decimal value.
    let steps = AMPLITUDE_RESOLUTION.recip().round();
    (v * steps).round() / steps
}

/// Seed of frame set `index` within a dataset generated from `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index + 1);
    rng.next_u64()
}

/// Renders one frame set. The result depends only on `cfg`, `label` and `id`.
pub fn generate_frame_set(
    cfg: &SimConfig,
    label: StateLabel,
    id: impl Into<String>,
) -> Result<FrameSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = if cfg.noise_sigma > 0.0 {
        Some(Normal::new(0.0, cfg.noise_sigma).expect("sigma validated"))
    } else {
        None
    };

    let taps = cfg.pulse.taps();
    let mut frames = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let mut frame = Frame::zeros();
        let samples = frame.samples_mut();
        samples.copy_from_slice(&cfg.clutter);
        let delay = cfg.delay_at(t, label);
        for (s, tap) in samples[delay..delay + taps.len()].iter_mut().zip(taps) {
            *s += cfg.target_amp * tap;
        }
        for s in samples.iter_mut() {
            if let Some(n) = &noise {
                *s += n.sample(&mut rng);
            }
            *s = quantize(s.clamp(AMPLITUDE_MIN, AMPLITUDE_MAX));
        }
        frames.push(frame);
    }
    FrameSet::new(id, cfg.fps, Some(label), frames)
}

/// Generates `n_per_state` frame sets of each label, interleaved
/// `rest-00, move-00, rest-01, ...`.
///
/// Each frame set has `cfg.frames + j` frames with `j` drawn uniformly from
/// `t_jitter`; the movement window is rescaled to the drawn length.
pub fn generate_dataset(
    cfg: &SimConfig,
    n_per_state: usize,
    t_jitter: RangeInclusive<i64>,
    participant: impl Into<String>,
) -> Result<Dataset> {
    cfg.validate()?;
    if n_per_state == 0 {
        return Err(Error::validation(
            "at least one frame set per state is required",
        ));
    }
    if t_jitter.is_empty() {
        return Err(Error::validation(format!(
            "frame-count jitter range {}..={} is empty",
            t_jitter.start(),
            t_jitter.end()
        )));
    }
    if cfg.frames as i64 + t_jitter.start() < 1 {
        return Err(Error::validation(format!(
            "jitter {} would leave fewer than one frame",
            t_jitter.start()
        )));
    }

    let mut frame_sets = Vec::with_capacity(2 * n_per_state);
    for i in 0..n_per_state {
        for (k, label) in StateLabel::ALL.into_iter().enumerate() {
            let index = (2 * i + k) as u64;
            let seed = derive_seed(cfg.seed, index);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let jitter = rng.random_range(t_jitter.clone());
            let frames = (cfg.frames as i64 + jitter) as usize;
            let set_cfg = SimConfig {
                frames,
                move_window: scale_window(cfg.move_window, cfg.frames, frames),
                seed: rng.next_u64(),
                ..cfg.clone()
            };
            let id = format!("{}-{i:02}", label.as_str().to_lowercase());
            frame_sets.push(generate_frame_set(&set_cfg, label, id)?);
        }
    }
    Dataset::new(
        DatasetInfo {
            participant: participant.into(),
            seed: Some(cfg.seed),
        },
        frame_sets,
    )
}
