//! On-disk dataset format.
//!
//! A dataset directory holds a `manifest.json` and one headerless CSV per
//! frame set:
//!
//! ```text
//! manifest.json   {"participant": "P1", "seed": 7,
//!                  "frame_sets": [{"id": "rest-00", "file": "rest-00.csv",
//!                                  "label": "Rest", "fps": 200.0}, ...]}
//! rest-00.csv     T rows x 256 comma-separated amplitudes (slow time down,
//!                 fast time across)
//! ```
//!
//! Amplitudes are written as decimal text rounded to 9 significant digits.
//! Values that already carry at most 9 significant digits (everything the
//! simulator emits) survive a write/read cycle bit-for-bit.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Dataset, DatasetInfo, Frame, FrameSet, StateLabel, FRAME_LEN};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    participant: String,
    seed: Option<u64>,
    frame_sets: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    file: String,
    label: String,
    fps: f64,
}

/// Formats an amplitude as decimal text with at most 9 significant digits.
pub fn format_amplitude(x: f64) -> String {
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    if rounded != 0.0 && rounded.abs() < 1e-4 {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "frame set id {id:?} is not usable as a file name (allowed: A-Z a-z 0-9 - _ .)"
        )))
    }
}

/// Writes `dataset` into `dir`, creating the directory if needed.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let mut entries = Vec::with_capacity(dataset.len());
    for fs in dataset.frame_sets() {
        check_id(fs.id())?;
        if fs.is_clutter_reduced() {
            return Err(Error::validation(format!(
                "frame set {:?} holds processed samples; only sensor-range data can be stored",
                fs.id()
            )));
        }
        entries.push(ManifestEntry {
            id: fs.id().to_owned(),
            file: format!("{}.csv", fs.id()),
            label: fs
                .label()
                .expect("dataset frame sets are labeled")
                .to_string(),
            fps: fs.fps(),
        });
    }

    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (fs, entry) in dataset.frame_sets().iter().zip(&entries) {
        write_frames(fs, &dir.join(&entry.file))?;
    }

    let manifest = Manifest {
        participant: dataset.info().participant.clone(),
        seed: dataset.info().seed,
        frame_sets: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn write_frames(fs: &FrameSet, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut line = String::with_capacity(FRAME_LEN * 12);
    for frame in fs.frames() {
        line.clear();
        for (j, &v) in frame.samples().iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format_amplitude(v));
        }
        line.push('\n');
        out.write_all(line.as_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a dataset directory written by [`write_dataset`].
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: manifest_path.clone(),
        source: e,
    })?;

    let mut frame_sets = Vec::with_capacity(manifest.frame_sets.len());
    for entry in &manifest.frame_sets {
        let label: StateLabel = entry.label.parse().map_err(|e: Error| {
            Error::validation(format!(
                "{}: frame set {:?}: {e}",
                manifest_path.display(),
                entry.id
            ))
        })?;
        let path = dir.join(&entry.file);
        let frames = read_frames(&path)?;
        let fs = FrameSet::new(entry.id.clone(), entry.fps, Some(label), frames)
            .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
        frame_sets.push(fs);
    }

    let info = DatasetInfo {
        participant: manifest.participant,
        seed: manifest.seed,
    };
    Dataset::new(info, frame_sets)
        .map_err(|e| Error::validation(format!("{}: {e}", manifest_path.display())))
}

/// Parses one frame-set CSV. Row numbers in errors are 1-based line numbers.
fn read_frames(path: &Path) -> Result<Vec<Frame>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |row: usize, message: String| Error::Parse {
        file: PathBuf::from(path),
        row,
        message,
    };

    let mut frames = Vec::new();
    let mut buf = [0.0; FRAME_LEN];
    for (n, line) in text.lines().enumerate() {
        let row = n + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for (j, field) in line.split(',').enumerate() {
            count += 1;
            if j >= FRAME_LEN {
                continue;
            }
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(row, format!("column {j}: {field:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(
                    row,
                    format!("column {j}: value {v} is not finite"),
                ));
            }
            buf[j] = v;
        }
        if count != FRAME_LEN {
            return Err(parse_err(
                row,
                format!("expected {FRAME_LEN} columns, found {count}"),
            ));
        }
        frames.push(Frame::from(buf));
    }
    if frames.is_empty() {
        return Err(parse_err(0, "file contains no frames".into()));
    }
    Ok(frames)
}
