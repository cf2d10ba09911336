//! CLEAN-style baseline features: whole-set mean clutter removal followed by
//! single strongest-target detection per frame, giving a `(delay, strength)`
//! track of length `T`.

use crate::error::{Error, Result};
use crate::sim::PulseTemplate;
use crate::types::{FeatureSequence, Frame, FrameSet, FRAME_LEN};

pub const DEFAULT_SHORT_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CleanVariant {
    /// Correlate with the full pulse template.
    Conventional,
    /// Correlate with the central `fraction` of the template.
    ShortTemplate(f64),
}

impl CleanVariant {
    pub fn short() -> Self {
        CleanVariant::ShortTemplate(DEFAULT_SHORT_FRACTION)
    }
}

/// Subtracts the mean frame of the set from every frame.
pub fn reduce_clutter(fs: &FrameSet) -> Result<FrameSet> {
    let t = fs.len();
    if t < 2 {
        return Err(Error::validation(format!(
            "clutter reduction needs at least 2 frames, frame set {:?} has {t}",
            fs.id()
        )));
    }
    let mut mean = [0.0; FRAME_LEN];
    for frame in fs.frames() {
        for (m, s) in mean.iter_mut().zip(frame.samples()) {
            *m += s;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t as f64);
    // Residual pass so identical frames reduce to exact zeros.
    let mut residual = [0.0; FRAME_LEN];
    for frame in fs.frames() {
        for ((r, s), m) in residual.iter_mut().zip(frame.samples()).zip(&mean) {
            *r += s - m;
        }
    }
    for (m, r) in mean.iter_mut().zip(&residual) {
        *m += r / t as f64;
    }

    let frames = fs
        .frames()
        .iter()
        .map(|frame| {
            let mut out = frame.clone();
            for (o, m) in out.samples_mut().iter_mut().zip(&mean) {
                *o -= m;
            }
            out
        })
        .collect();
    FrameSet::processed(fs.id(), fs.fps(), fs.label(), frames)
}

/// Template actually correlated against the frames for `variant`.
///
/// The short variant keeps the central `ceil(fraction * M)` taps, rounded up
/// to an odd count, and re-normalizes the peak.
pub fn effective_template(tpl: &PulseTemplate, variant: CleanVariant) -> Result<PulseTemplate> {
    match variant {
        CleanVariant::Conventional => Ok(tpl.clone()),
        CleanVariant::ShortTemplate(fraction) => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::validation(format!(
                    "short-template fraction must lie in (0, 1], got {fraction}"
                )));
            }
            let m = tpl.len();
            let mut len = (fraction * m as f64).ceil() as usize;
            if len.is_multiple_of(2) {
                len += 1;
            }
            let len = len.min(m);
            if len < 3 {
                return Err(Error::validation(format!(
                    "short template of {len} taps is too short (fraction {fraction}, M={m})"
                )));
            }
            let start = (m - len) / 2;
            PulseTemplate::from_taps(tpl.taps()[start..start + len].to_vec())
        }
    }
}

/// Strongest single target in a clutter-reduced frame.
///
/// Returns the lag `k` maximizing `|sum_m frame[k + m] * tpl[m]|` over lags
/// that keep the template inside the frame (smallest lag on ties) and the
/// least-squares template amplitude at that lag.
pub fn clean_detect(frame: &Frame, tpl: &PulseTemplate) -> Result<(usize, f64)> {
    let taps = tpl.taps();
    if taps.is_empty() || taps.len() > FRAME_LEN {
        return Err(Error::validation(format!(
            "template length {} must be in 1..={FRAME_LEN}",
            taps.len()
        )));
    }
    let samples = frame.samples();
    let mut best = (0usize, 0.0f64);
    for k in 0..=FRAME_LEN - taps.len() {
        let rho: f64 = samples[k..k + taps.len()]
            .iter()
            .zip(taps)
            .map(|(s, t)| s * t)
            .sum();
        if rho.abs() > best.1.abs() {
            best = (k, rho);
        }
    }
    Ok((best.0, best.1 / tpl.energy()))
}

/// `(delay, strength)` per frame after clutter reduction.
pub fn track_targets(
    fs: &FrameSet,
    tpl: &PulseTemplate,
    variant: CleanVariant,
) -> Result<FeatureSequence> {
    let reduced = reduce_clutter(fs)?;
    let tpl = effective_template(tpl, variant)?;
    let mut values = Vec::with_capacity(2 * reduced.len());
    for frame in reduced.frames() {
        let (delay, strength) = clean_detect(frame, &tpl)?;
        values.push(delay as f64);
        values.push(strength);
    }
    FeatureSequence::from_flat(2, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::default_template;
    use crate::types::StateLabel;

    fn planted(tpl: &PulseTemplate, lag: usize, amp: f64) -> Frame {
        let mut f = Frame::zeros();
        for (m, t) in tpl.taps().iter().enumerate() {
            f.samples_mut()[lag + m] = amp * t;
        }
        f
    }

    fn set_of(frames: Vec<Frame>) -> FrameSet {
        FrameSet::new("s", 200.0, Some(StateLabel::Move), frames).unwrap()
    }

    #[test]
    fn identical_frames_reduce_to_zero() {
        let fs = set_of(vec![Frame::from([42.0; FRAME_LEN]); 5]);
        let r = reduce_clutter(&fs).unwrap();
        assert!(r.is_clutter_reduced());
        assert!(r
            .frames()
            .iter()
            .all(|f| f.samples().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn two_frames_reduce_to_half_differences() {
        let mut a = [0.0; FRAME_LEN];
        let mut b = [0.0; FRAME_LEN];
        for j in 0..FRAME_LEN {
            a[j] = (j % 13) as f64;
            b[j] = (j % 7) as f64 * 2.0;
        }
        let r = reduce_clutter(&set_of(vec![a.into(), b.into()])).unwrap();
        for j in 0..FRAME_LEN {
            assert_eq!(r.frames()[0].samples()[j], (a[j] - b[j]) / 2.0);
            assert_eq!(r.frames()[1].samples()[j], (b[j] - a[j]) / 2.0);
        }
    }

    #[test]
    fn clutter_reduction_needs_two_frames() {
        assert!(reduce_clutter(&set_of(vec![Frame::zeros()])).is_err());
    }

    #[test]
    fn clutter_reduction_is_idempotent() {
        let frames = (0..9)
            .map(|i| {
                let mut s = [0.0; FRAME_LEN];
                s.iter_mut()
                    .enumerate()
                    .for_each(|(j, v)| *v = ((i * 37 + j * 11) % 89) as f64 * 0.7);
                Frame::from(s)
            })
            .collect();
        let once = reduce_clutter(&set_of(frames)).unwrap();
        let twice = reduce_clutter(&once).unwrap();
        for (a, b) in once.frames().iter().zip(twice.frames()) {
            for (x, y) in a.samples().iter().zip(b.samples()) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn effective_template_lengths() {
        let tpl = default_template(31).unwrap();
        assert_eq!(
            effective_template(&tpl, CleanVariant::Conventional).unwrap(),
            tpl
        );
        let short = effective_template(&tpl, CleanVariant::short()).unwrap();
        assert_eq!(short.len(), 9);
        assert_eq!(short.taps(), &tpl.taps()[11..20]);
        let peak = short.taps().iter().fold(0.0_f64, |m, t| m.max(t.abs()));
        assert_eq!(peak, 1.0);
        assert_eq!(
            effective_template(&tpl, CleanVariant::ShortTemplate(1.0)).unwrap(),
            tpl
        );
        assert_eq!(
            effective_template(&tpl, CleanVariant::ShortTemplate(0.05))
                .unwrap()
                .len(),
            3
        );
        assert!(effective_template(&tpl, CleanVariant::ShortTemplate(0.03)).is_err());
        assert!(effective_template(&tpl, CleanVariant::ShortTemplate(0.0)).is_err());
        assert!(effective_template(&tpl, CleanVariant::ShortTemplate(1.5)).is_err());
    }

    #[test]
    fn planted_pulse_is_recovered() {
        let tpl = default_template(31).unwrap();
        assert_eq!(
            clean_detect(&planted(&tpl, 37, 2.5), &tpl).unwrap(),
            (37, 2.5)
        );
        assert_eq!(
            clean_detect(&planted(&tpl, 225, -3.0), &tpl).unwrap(),
            (225, -3.0)
        );
    }

    #[test]
    fn zero_frame_detects_lag_zero() {
        let tpl = default_template(31).unwrap();
        assert_eq!(clean_detect(&Frame::zeros(), &tpl).unwrap(), (0, 0.0));
    }

    #[test]
    fn shift_equivariance() {
        let tpl = default_template(31).unwrap();
        let base = planted(&tpl, 50, 1.7);
        let (d0, _) = clean_detect(&base, &tpl).unwrap();
        for s in [1usize, 13, 100] {
            let mut shifted = Frame::zeros();
            for j in 0..FRAME_LEN - s {
                shifted.samples_mut()[j + s] = base.samples()[j];
            }
            assert_eq!(clean_detect(&shifted, &tpl).unwrap().0, d0 + s);
        }
    }

    #[test]
    fn track_shape() {
        let tpl = default_template(31).unwrap();
        let fs = set_of(vec![Frame::from([10.0; FRAME_LEN]); 7]);
        let track = track_targets(&fs, &tpl, CleanVariant::Conventional).unwrap();
        assert_eq!(track.len(), 7);
        assert_eq!(track.dim(), 2);
        assert!(track.steps().all(|s| s == [0.0, 0.0]));
    }
}
