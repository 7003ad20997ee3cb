//! Matrix and model files.
//!
//! Binary container, all integers and floats little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `SIGACMX\0` |
//! | 4     | format version `u32` (currently 1) |
//! | 8     | rows `u64` |
//! | 8     | cols `u64` |
//! | 16 each | entries row-major as interleaved `(re, im)` `f64` pairs |
//!
//! The CSV alternative has one line per matrix row holding `2 * cols` numbers
//! `re, im, re, im, ...`. A line with a single field is read as a real entry.
//! Files ending in `.csv` use the text form, everything else the container.
//!
//! A model bundle is a TOML file naming the three arrays relative to itself:
//!
//! ```toml
//! sigma_z2 = 0.15
//! a = "a.bin"
//! d = "d.bin"
//! y = "y.bin"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SigaError};
use crate::linalg::{CMatrix, CVector, RVector};
use crate::linmodel::GaussianLinearModel;
use crate::report::{fmt17, write_atomic};

pub const MAGIC: [u8; 8] = *b"SIGACMX\0";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 8;

pub fn encode_matrix(m: &CMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * m.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].re.to_le_bytes());
            out.extend_from_slice(&m[(i, j)].im.to_le_bytes());
        }
    }
    out
}

pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<CMatrix> {
    if bytes.len() < HEADER_LEN || bytes[..8] != MAGIC {
        return Err(SigaError::format(path, "missing matrix container header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(8);
    if version != FORMAT_VERSION {
        return Err(SigaError::format(path, format!("unsupported container version {version}")));
    }
    let rows = u64_at(12) as usize;
    let cols = u64_at(20) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(16))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| SigaError::format(path, "shape overflows"))?;
    if bytes.len() != expected {
        return Err(SigaError::format(
            path,
            format!("{rows}x{cols} needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    Ok(CMatrix::from_fn(rows, cols, |i, j| {
        let o = HEADER_LEN + 16 * (i * cols + j);
        Complex64::new(f64_at(o), f64_at(o + 8))
    }))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn matrix_to_csv(m: &CMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let fields: Vec<String> = (0..m.ncols())
            .flat_map(|j| [fmt17(m[(i, j)].re), fmt17(m[(i, j)].im)])
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str, path: &Path) -> Result<CMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    for (lineno, record) in reader.records().enumerate() {
        let record = record.map_err(|e| SigaError::format(path, e.to_string()))?;
        let nums: Vec<f64> = record
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| SigaError::format(path, format!("row {}: {e}", lineno + 1)))?;
        let row = match nums.len() {
            1 => vec![Complex64::new(nums[0], 0.0)],
            n if n % 2 == 0 => nums.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect(),
            n => return Err(SigaError::format(path, format!("row {} has {n} fields", lineno + 1))),
        };
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(SigaError::format(path, format!("row {} is ragged", lineno + 1)));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(CMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn write_matrix(path: &Path, m: &CMatrix) -> Result<()> {
    if is_csv(path) {
        write_atomic(path, matrix_to_csv(m).as_bytes())
    } else {
        write_atomic(path, &encode_matrix(m))
    }
}

pub fn read_matrix(path: &Path) -> Result<CMatrix> {
    if is_csv(path) {
        let text = fs::read_to_string(path).map_err(|e| SigaError::io(path, e))?;
        matrix_from_csv(&text, path)
    } else {
        let bytes = fs::read(path).map_err(|e| SigaError::io(path, e))?;
        decode_matrix(&bytes, path)
    }
}

/// Reads an `n x 1` or `1 x n` array.
pub fn read_cvector(path: &Path) -> Result<CVector> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 && m.nrows() != 1 {
        return Err(SigaError::format(path, format!("expected a vector, found {}x{}", m.nrows(), m.ncols())));
    }
    Ok(CVector::from_iterator(m.len(), m.iter().copied()))
}

/// Reads a vector whose imaginary parts are all zero.
pub fn read_rvector(path: &Path) -> Result<RVector> {
    let v = read_cvector(path)?;
    if let Some(i) = v.iter().position(|z| z.im != 0.0) {
        return Err(SigaError::format(path, format!("entry {i} has a nonzero imaginary part")));
    }
    Ok(v.map(|z| z.re))
}

pub fn write_cvector(path: &Path, v: &CVector) -> Result<()> {
    write_matrix(path, &CMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

pub fn write_rvector(path: &Path, v: &RVector) -> Result<()> {
    write_cvector(path, &v.map(|x| Complex64::new(x, 0.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBundle {
    pub sigma_z2: f64,
    pub a: PathBuf,
    pub d: PathBuf,
    pub y: PathBuf,
}

/// Loads and validates a model from a TOML bundle.
pub fn load_model(bundle: &Path) -> Result<GaussianLinearModel> {
    let text = fs::read_to_string(bundle).map_err(|e| SigaError::io(bundle, e))?;
    let spec: ModelBundle = toml::from_str(&text)?;
    let base = bundle.parent().unwrap_or_else(|| Path::new("."));
    let a = read_matrix(&base.join(&spec.a))?;
    let d = read_rvector(&base.join(&spec.d))?;
    let y = read_cvector(&base.join(&spec.y))?;
    GaussianLinearModel::new(a, d, spec.sigma_z2, y)
}

/// Writes `{stem}.toml` plus `{stem}_a`, `{stem}_d`, `{stem}_y` arrays with extension `ext`
/// (`"bin"` or `"csv"`) into `dir`, returning the bundle path.
pub fn save_model(model: &GaussianLinearModel, dir: &Path, stem: &str, ext: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| SigaError::io(dir, e))?;
    let name = |part: &str| PathBuf::from(format!("{stem}_{part}.{ext}"));
    let bundle = ModelBundle {
        sigma_z2: model.sigma_z2(),
        a: name("a"),
        d: name("d"),
        y: name("y"),
    };
    write_matrix(&dir.join(&bundle.a), model.a())?;
    write_rvector(&dir.join(&bundle.d), model.d())?;
    write_cvector(&dir.join(&bundle.y), model.y())?;
    let text = toml::to_string(&bundle).map_err(|e| SigaError::format(dir, e.to_string()))?;
    let path = dir.join(format!("{stem}.toml"));
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmodel::random_instance;

    #[test]
    fn container_layout_is_row_major_interleaved() {
        let m = CMatrix::from_row_slice(1, 2, &[Complex64::new(1.0, -2.0), Complex64::new(0.5, 0.0)]);
        let bytes = encode_matrix(&m);
        assert_eq!(bytes.len(), HEADER_LEN + 32);
        assert_eq!(&bytes[..8], b"SIGACMX\0");
        assert_eq!(f64::from_le_bytes(bytes[28..36].try_into().unwrap()), 1.0);
        assert_eq!(f64::from_le_bytes(bytes[36..44].try_into().unwrap()), -2.0);
        assert_eq!(f64::from_le_bytes(bytes[44..52].try_into().unwrap()), 0.5);
    }

    #[test]
    fn corrupt_containers_are_rejected() {
        let p = Path::new("x.bin");
        let mut bytes = encode_matrix(&CMatrix::identity(2, 2));
        assert!(decode_matrix(&bytes[..bytes.len() - 1], p).is_err());
        bytes[8] = 9;
        assert!(matches!(decode_matrix(&bytes, p), Err(SigaError::Format { .. })));
        assert!(decode_matrix(b"nonsense", p).is_err());
    }

    #[test]
    fn csv_accepts_real_columns_and_rejects_ragged_rows() {
        let p = Path::new("d.csv");
        let m = matrix_from_csv("# prior\n1.5\n2\n", p).unwrap();
        assert_eq!(m.shape(), (2, 1));
        assert_eq!(m[(1, 0)], Complex64::new(2.0, 0.0));
        assert!(matrix_from_csv("1,2\n1,2,3,4\n", p).is_err());
        assert!(matrix_from_csv("1,2,3\n", p).is_err());
    }

    #[test]
    fn model_bundle_survives_both_formats_exactly() {
        let (model, _) = random_instance(6, 3, 0.7, 0.2, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for ext in ["bin", "csv"] {
            let path = save_model(&model, dir.path(), &format!("m_{ext}"), ext).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(back.a(), model.a());
            assert_eq!(back.d(), model.d());
            assert_eq!(back.y(), model.y());
            assert_eq!(back.sigma_z2(), model.sigma_z2());
        }
    }

    #[test]
    fn real_vector_rejects_imaginary_parts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.bin");
        write_cvector(&p, &CVector::from_vec(vec![Complex64::new(1.0, 0.1)])).unwrap();
        assert!(read_rvector(&p).is_err());
    }
}
