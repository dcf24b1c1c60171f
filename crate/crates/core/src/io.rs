//! On-disk formats.
//!
//! Matrix files: magic `BSR1`, `u8` dtype (0 = f64), `u8` ndim, `ndim` x
//! `u64` dimensions, then the row-major `f64` payload, all little-endian.
//! CSV mirrors 1D (one value per line) and 2D (one row per line) arrays.
//! Manifests are UTF-8 JSON carrying a `schema_version`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Array3, ArrayD, IxDyn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lbista::{EdgeCorrection, Layout, Mode, NetworkParams, Weight};
use crate::linop::{ConvKernel, DenseModel, LinearModel, Operator};

pub const MAGIC: &[u8; 4] = b"BSR1";
pub const DTYPE_F64: u8 = 0;
pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn encode_matrix(a: &ArrayD<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 8 * a.ndim() + 8 * a.len());
    out.extend_from_slice(MAGIC);
    out.push(DTYPE_F64);
    out.push(a.ndim() as u8);
    for &d in a.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in a.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<ArrayD<f64>> {
    let bad = |d: &str| Error::format(path, d);
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(bad("missing BSR1 magic"));
    }
    if bytes[4] != DTYPE_F64 {
        return Err(bad(&format!("unsupported dtype {}", bytes[4])));
    }
    let ndim = bytes[5] as usize;
    let header = 6 + 8 * ndim;
    if bytes.len() < header {
        return Err(bad("truncated header"));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| u64::from_le_bytes(bytes[6 + 8 * i..14 + 8 * i].try_into().unwrap()) as usize)
        .collect();
    let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| bad("dimension overflow"))?;
    if bytes.len() != header + 8 * count {
        return Err(bad(&format!("payload has {} bytes, expected {}", bytes.len() - header, 8 * count)));
    }
    let data: Vec<f64> = bytes[header..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    ArrayD::from_shape_vec(IxDyn(&dims), data).map_err(|e| bad(&e.to_string()))
}

pub fn write_matrix(path: impl AsRef<Path>, a: &ArrayD<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_matrix(a)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<ArrayD<f64>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes, path)
}

pub fn write_array1(path: impl AsRef<Path>, a: &Array1<f64>) -> Result<()> {
    write_matrix(path, &a.clone().into_dyn())
}

pub fn write_array2(path: impl AsRef<Path>, a: &Array2<f64>) -> Result<()> {
    write_matrix(path, &a.clone().into_dyn())
}

pub fn write_array3(path: impl AsRef<Path>, a: &Array3<f64>) -> Result<()> {
    write_matrix(path, &a.clone().into_dyn())
}

pub fn read_array1(path: impl AsRef<Path>) -> Result<Array1<f64>> {
    let path = path.as_ref();
    read_matrix(path)?
        .into_dimensionality()
        .map_err(|_| Error::format(path, "expected a 1D matrix file"))
}

/// Reads a 2D file; a 1D file is read as a single column.
pub fn read_array2(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let a = read_matrix(path)?;
    match a.ndim() {
        1 => {
            let n = a.len();
            Ok(a.into_shape_with_order((n, 1)).unwrap().into_dimensionality().unwrap())
        }
        2 => Ok(a.into_dimensionality().unwrap()),
        d => Err(Error::format(path, format!("expected a 2D matrix file, got {d}D"))),
    }
}

pub fn read_array3(path: impl AsRef<Path>) -> Result<Array3<f64>> {
    let path = path.as_ref();
    read_matrix(path)?
        .into_dimensionality()
        .map_err(|_| Error::format(path, "expected a 3D matrix file"))
}

/// 1D arrays become one value per line, 2D arrays one comma-separated row per line.
pub fn to_csv(a: &ArrayD<f64>) -> Result<String> {
    let mut s = String::new();
    match a.ndim() {
        1 => {
            for v in a.iter() {
                s.push_str(&format!("{v}\n"));
            }
        }
        2 => {
            for row in a.rows() {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                s.push_str(&line.join(","));
                s.push('\n');
            }
        }
        d => return Err(Error::InvalidArgument(format!("CSV export supports 1D/2D arrays, got {d}D"))),
    }
    Ok(s)
}

pub fn parse_csv(text: &str, path: &Path) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?);
    }
    let cols = rows.first().map(Vec::len).unwrap_or(0);
    if rows.is_empty() || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::format(path, "ragged or empty CSV"));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((flat.len() / cols, cols), flat).unwrap())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn ensure_dir(path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub schema_version: u32,
    /// `conv` or `dense`.
    pub kind: String,
    pub n_r: usize,
    pub n_meas: usize,
    #[serde(default)]
    pub pixel_pitch: Option<f64>,
    /// Matrix file holding the kernel taps (1D) or the dense entries (2D).
    pub file: String,
}

pub const MODEL_MANIFEST: &str = "model.json";
const MODEL_FILE: &str = "model.bsr";

/// Writes `model.json` and `model.bsr` into `dir`.
pub fn save_model(dir: impl AsRef<Path>, model: &LinearModel) -> Result<()> {
    let dir = dir.as_ref();
    ensure_dir(dir)?;
    let (n_r, n_meas) = model.signal_shape();
    let (kind, pitch) = match model.operator() {
        Operator::Conv(k) => {
            write_array1(dir.join(MODEL_FILE), &Array1::from(k.taps().to_vec()))?;
            ("conv", k.pixel_pitch)
        }
        Operator::Dense(d) => {
            write_array2(dir.join(MODEL_FILE), d.entries())?;
            ("dense", None)
        }
    };
    write_json(
        dir.join(MODEL_MANIFEST),
        &ModelManifest {
            schema_version: SCHEMA_VERSION,
            kind: kind.into(),
            n_r,
            n_meas,
            pixel_pitch: pitch,
            file: MODEL_FILE.into(),
        },
    )
}

/// Loads a model from a manifest path or a directory containing `model.json`.
pub fn load_model(path: impl AsRef<Path>) -> Result<LinearModel> {
    let path = path.as_ref();
    let manifest_path = if path.is_dir() { path.join(MODEL_MANIFEST) } else { path.to_path_buf() };
    let m: ModelManifest = read_json(&manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let data = base.join(&m.file);
    match m.kind.as_str() {
        "conv" => {
            let taps = read_array1(&data)?;
            let mut k = ConvKernel::new(taps.to_vec())?;
            k.pixel_pitch = m.pixel_pitch;
            LinearModel::conv(k, m.n_r, m.n_meas)
        }
        "dense" => Ok(LinearModel::dense(DenseModel::new(read_array2(&data)?, m.n_r, m.n_meas)?)),
        other => Err(Error::format(&manifest_path, format!("unknown model kind {other:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub mode: Mode,
    pub layers: usize,
    pub layout: Layout,
    pub lambda: Vec<f64>,
    pub s_files: Vec<String>,
    pub b_files: Vec<String>,
    pub s_shapes: Vec<Vec<usize>>,
    pub b_shapes: Vec<Vec<usize>>,
    /// `(row, col, value)` triplets of the fixed boundary term, if any.
    #[serde(default)]
    pub edge_file: Option<String>,
    /// Free-form record of how the parameters were produced.
    #[serde(default)]
    pub provenance: serde_json::Value,
}

pub const PARAMS_MANIFEST: &str = "params.json";

pub fn save_params(dir: impl AsRef<Path>, params: &NetworkParams, provenance: serde_json::Value) -> Result<()> {
    let dir = dir.as_ref();
    ensure_dir(dir)?;
    let write_weight = |name: &str, w: &Weight| -> Result<String> {
        let file = format!("{name}.bsr");
        match w {
            Weight::Kernel(k) => write_array1(dir.join(&file), &Array1::from(k.clone()))?,
            Weight::Matrix(m) => write_array2(dir.join(&file), m)?,
        }
        Ok(file)
    };
    let s_files = params
        .s
        .iter()
        .enumerate()
        .map(|(i, w)| write_weight(&format!("S_{i}"), w))
        .collect::<Result<Vec<_>>>()?;
    let b_files = params
        .b
        .iter()
        .enumerate()
        .map(|(i, w)| write_weight(&format!("B_{i}"), w))
        .collect::<Result<Vec<_>>>()?;
    let edge_file = match &params.edge {
        Some(e) => {
            let mut a = Array2::zeros((e.entries.len(), 3));
            for (r, &(i, l, v)) in e.entries.iter().enumerate() {
                a[(r, 0)] = i as f64;
                a[(r, 1)] = l as f64;
                a[(r, 2)] = v;
            }
            write_array2(dir.join("edge.bsr"), &a)?;
            Some("edge.bsr".to_string())
        }
        None => None,
    };
    write_json(
        dir.join(PARAMS_MANIFEST),
        &ParamsManifest {
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION.into(),
            mode: params.mode,
            layers: params.layers(),
            layout: params.layout,
            lambda: params.lambda.clone(),
            s_shapes: params.s.iter().map(Weight::shape).collect(),
            b_shapes: params.b.iter().map(Weight::shape).collect(),
            s_files,
            b_files,
            edge_file,
            provenance,
        },
    )
}

pub fn load_params(path: impl AsRef<Path>) -> Result<NetworkParams> {
    let path = path.as_ref();
    let manifest_path: PathBuf = if path.is_dir() { path.join(PARAMS_MANIFEST) } else { path.to_path_buf() };
    let m: ParamsManifest = read_json(&manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let read_weight = |file: &str| -> Result<Weight> {
        let a = read_matrix(base.join(file))?;
        Ok(match a.ndim() {
            1 => Weight::Kernel(a.iter().copied().collect()),
            2 => Weight::Matrix(a.into_dimensionality().unwrap()),
            d => return Err(Error::format(base.join(file), format!("weights must be 1D or 2D, got {d}D"))),
        })
    };
    let s = m.s_files.iter().map(|f| read_weight(f)).collect::<Result<Vec<_>>>()?;
    let b = m.b_files.iter().map(|f| read_weight(f)).collect::<Result<Vec<_>>>()?;
    let edge = match &m.edge_file {
        Some(f) => {
            let a = read_array2(base.join(f))?;
            if a.ncols() != 3 {
                return Err(Error::format(base.join(f), "edge term must have 3 columns"));
            }
            Some(EdgeCorrection {
                entries: a.rows().into_iter().map(|r| (r[0] as usize, r[1] as usize, r[2])).collect(),
            })
        }
        None => None,
    };
    let params = NetworkParams {
        mode: m.mode,
        layout: m.layout,
        s,
        b,
        lambda: m.lambda,
        edge,
    };
    if params.layers() != m.layers {
        return Err(Error::format(&manifest_path, "layer count does not match lambda list"));
    }
    params.validate()?;
    Ok(params)
}
