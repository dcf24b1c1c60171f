//! Reduction of recorded thermal sequences to one measurement column each.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::blocksparse::MeasurementSet;
use crate::error::{Error, Result};
use crate::io;

/// One measurement's recording, indexed `[y, r, t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalSequence {
    frames: Array3<f64>,
    pub frame_rate: Option<f64>,
    pub pixel_pitch: Option<f64>,
}

impl ThermalSequence {
    pub fn new(frames: Array3<f64>) -> Result<Self> {
        let (ny, nr, nt) = frames.dim();
        if ny == 0 || nr == 0 || nt == 0 {
            return Err(Error::InvalidArgument(format!("sequence dimensions must be positive, got {:?}", frames.dim())));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("sequence has non-finite values".into()));
        }
        Ok(Self {
            frames,
            frame_rate: None,
            pixel_pitch: None,
        })
    }

    pub fn frames(&self) -> &Array3<f64> {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        self.frames.dim().2
    }
}

/// Mean over the vertical axis: `N_r x N_t`.
pub fn vertical_mean(seq: &ThermalSequence) -> Array2<f64> {
    seq.frames.mean_axis(Axis(0)).expect("non-empty vertical axis")
}

/// Chooses the frame that represents a sequence.
pub trait FrameSelector {
    /// `profile` is `N_r x N_t` with `N_t >= 2`; the result lies in `1..N_t`.
    fn select(&self, profile: ArrayView2<f64>) -> usize;
}

/// Picks the frame whose spatial mean rises most above frame 0; the
/// earliest such frame wins ties.
#[derive(Debug, Clone, Copy, Default)]
pub struct LargestMeanRise;

impl FrameSelector for LargestMeanRise {
    fn select(&self, profile: ArrayView2<f64>) -> usize {
        let means = profile.mean_axis(Axis(0)).expect("non-empty profile");
        let mut best = 1;
        for t in 2..means.len() {
            if means[t] > means[best] {
                best = t;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thermogram {
    pub values: Array1<f64>,
    /// Selected frame index; 0 for single-frame input.
    pub frame: usize,
}

/// Maximum thermogram with the default selector.
pub fn maximum_thermogram(profile: ArrayView2<f64>) -> Result<Thermogram> {
    maximum_thermogram_with(profile, &LargestMeanRise)
}

/// Returns the selected frame minus frame 0. A single frame passes through
/// unchanged.
pub fn maximum_thermogram_with(profile: ArrayView2<f64>, selector: &dyn FrameSelector) -> Result<Thermogram> {
    let (nr, nt) = profile.dim();
    if nr == 0 || nt == 0 {
        return Err(Error::InvalidArgument("maximum thermogram needs at least one frame".into()));
    }
    if nt == 1 {
        return Ok(Thermogram {
            values: profile.column(0).to_owned(),
            frame: 0,
        });
    }
    let frame = selector.select(profile);
    if frame == 0 || frame >= nt {
        return Err(Error::InvalidArgument(format!("selector returned frame {frame} outside 1..{nt}")));
    }
    Ok(Thermogram {
        values: &profile.column(frame) - &profile.column(0),
        frame,
    })
}

/// Stacks reduced columns into an `N_r x N_meas` measurement set.
pub fn assemble_measurements(columns: &[Array1<f64>]) -> Result<MeasurementSet> {
    let n = columns.first().map(|c| c.len()).ok_or_else(|| Error::InvalidArgument("no measurements to assemble".into()))?;
    if let Some((m, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != n) {
        return Err(Error::dim("assemble_measurements", format!("length {n}"), format!("measurement {m} has length {}", c.len())));
    }
    let views: Vec<_> = columns.iter().map(|c| c.view().insert_axis(Axis(1))).collect();
    MeasurementSet::new(ndarray::concatenate(Axis(1), &views).unwrap())
}

/// Sidecar manifest of a sequence stored as one CSV per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    /// CSV files in time order, each `N_y x N_r`.
    pub frames: Vec<String>,
    #[serde(default)]
    pub frame_rate: Option<f64>,
    #[serde(default)]
    pub pixel_pitch: Option<f64>,
}

pub const SEQUENCE_MANIFEST: &str = "sequence.json";

/// Loads a sequence from a matrix file (`N_y x N_r x N_t`, or `N_r x N_t`
/// for a single row) or from a directory holding `sequence.json`.
pub fn load_sequence(path: impl AsRef<Path>) -> Result<ThermalSequence> {
    let path = path.as_ref();
    if path.is_dir() {
        let m: SequenceManifest = io::read_json(path.join(SEQUENCE_MANIFEST))?;
        let frames = m
            .frames
            .iter()
            .map(|f| io::read_csv(path.join(f)))
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<_> = frames.iter().map(|f| f.view().insert_axis(Axis(2))).collect();
        if views.is_empty() {
            return Err(Error::format(path, "sequence lists no frames"));
        }
        let stacked = ndarray::concatenate(Axis(2), &views).map_err(|_| Error::format(path, "frames differ in shape"))?;
        let mut seq = ThermalSequence::new(stacked.as_standard_layout().into_owned())?;
        seq.frame_rate = m.frame_rate;
        seq.pixel_pitch = m.pixel_pitch;
        return Ok(seq);
    }
    let a = io::read_matrix(path)?;
    let frames = match a.ndim() {
        2 => a.insert_axis(Axis(0)).into_dimensionality().unwrap(),
        3 => a.into_dimensionality().unwrap(),
        d => return Err(Error::format(path, format!("sequence must be 2D or 3D, got {d}D"))),
    };
    ThermalSequence::new(frames)
}

/// Sequence sources in a directory, sorted by name: matrix files and
/// subdirectories with a sequence manifest.
pub fn list_sequences(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            (p.is_file() && p.extension().is_some_and(|e| e == "bsr")) || (p.is_dir() && p.join(SEQUENCE_MANIFEST).is_file())
        })
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!("no sequences found in {}", dir.display())));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessRecord {
    pub source: String,
    pub frame: usize,
    pub frame_count: usize,
}

/// Reduces every sequence in `dir` to a column of one measurement set.
pub fn preprocess_dir(dir: impl AsRef<Path>) -> Result<(MeasurementSet, Vec<PreprocessRecord>)> {
    let mut columns = Vec::new();
    let mut records = Vec::new();
    for path in list_sequences(dir)? {
        let seq = load_sequence(&path)?;
        let mt = maximum_thermogram(vertical_mean(&seq).view())?;
        records.push(PreprocessRecord {
            source: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            frame: mt.frame,
            frame_count: seq.frame_count(),
        });
        columns.push(mt.values);
    }
    Ok((assemble_measurements(&columns)?, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};

    #[test]
    fn single_row_mean_is_identity() {
        let f = Array::from_shape_fn((1, 4, 3), |(_, r, t)| (r * 3 + t) as f64);
        let s = ThermalSequence::new(f.clone()).unwrap();
        assert_eq!(vertical_mean(&s), f.index_axis(Axis(0), 0));
    }

    #[test]
    fn constant_frames_stay_constant() {
        let s = ThermalSequence::new(Array3::from_elem((5, 4, 3), 2.5)).unwrap();
        assert!(vertical_mean(&s).iter().all(|&v| v == 2.5));
    }

    #[test]
    fn single_frame_passes_raw() {
        let p = array![[1.0], [2.0], [3.0]];
        let mt = maximum_thermogram(p.view()).unwrap();
        assert_eq!(mt.frame, 0);
        assert_eq!(mt.values.to_vec(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn pulse_peak_is_selected() {
        let p = Array2::from_shape_fn((6, 12), |(r, t)| 10.0 + (r as f64 + 1.0) * (-((t as f64 - 7.0).powi(2)) / 4.0).exp());
        let mt = maximum_thermogram(p.view()).unwrap();
        assert_eq!(mt.frame, 7);
        assert_eq!(mt.values, &p.column(7) - &p.column(0));
    }

    #[test]
    fn monotone_decay_selects_first_frame_after_background() {
        let p = Array2::from_shape_fn((3, 5), |(r, t)| (r + 1) as f64 * 0.5f64.powi(t as i32));
        assert_eq!(maximum_thermogram(p.view()).unwrap().frame, 1);
    }

    #[test]
    fn ties_go_to_the_earliest_frame() {
        let p = array![[0.0, 1.0, 1.0, 0.5]];
        assert_eq!(maximum_thermogram(p.view()).unwrap().frame, 1);
    }

    #[test]
    fn assembly_and_ragged_input() {
        let m = assemble_measurements(&[array![1.0, 2.0], array![3.0, 4.0]]).unwrap();
        assert_eq!(m.values(), &array![[1.0, 3.0], [2.0, 4.0]]);
        assert!(assemble_measurements(&[array![1.0, 2.0], array![3.0]]).is_err());
        assert!(assemble_measurements(&[]).is_err());
    }
}
