//! Text output: 17-significant-digit numbers in JSON and CSV, and atomic file writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, SigaError};
use crate::siga::TrajectoryRecord;

/// Formats a float with 17 significant digits; non-finite values become `null`.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

/// `serde(with = ...)` adapters emitting numbers through [`fmt17`]. Serialize-only, JSON-only.
pub mod sig17 {
    use serde::ser::{SerializeSeq, Serializer};
    use serde::Serialize;
    use serde_json::value::RawValue;

    use super::fmt17;
    use crate::linalg::{CVector, RVector};

    fn raw(x: f64) -> Box<RawValue> {
        RawValue::from_string(fmt17(x)).expect("formatted float is valid JSON")
    }

    fn seq<'a, S, I>(s: S, len: usize, items: I) -> Result<S::Ok, S::Error>
    where
        S: Serializer,
        I: Iterator<Item = &'a f64>,
    {
        let mut out = s.serialize_seq(Some(len))?;
        for x in items {
            out.serialize_element(&raw(*x))?;
        }
        out.end()
    }

    pub mod num {
        use super::*;
        pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
            raw(*x).serialize(s)
        }
    }

    pub mod opt {
        use super::*;
        pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match x {
                Some(v) => raw(*v).serialize(s),
                None => s.serialize_none(),
            }
        }
    }

    pub mod slice {
        use super::*;
        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            seq(s, v.len(), v.iter())
        }
    }

    pub mod rvec {
        use super::*;
        pub fn serialize<S: Serializer>(v: &RVector, s: S) -> Result<S::Ok, S::Error> {
            seq(s, v.len(), v.iter())
        }
    }

    /// Complex vectors as `[[re, im], ...]`.
    pub mod cvec {
        use super::*;
        pub fn serialize<S: Serializer>(v: &CVector, s: S) -> Result<S::Ok, S::Error> {
            let mut out = s.serialize_seq(Some(v.len()))?;
            for z in v.iter() {
                out.serialize_element(&[raw(z.re), raw(z.im)])?;
            }
            out.end()
        }
    }
}

pub const TRAJECTORY_HEADER: &str = "t,nu_norm2,theta_norm2,dnu_inf,dtheta_inf";

pub fn trajectory_csv(records: &[TrajectoryRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 100 + 64);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.t,
            fmt17(r.nu_norm2),
            fmt17(r.theta_norm2),
            fmt17(r.dnu_inf),
            fmt17(r.dtheta_inf)
        ));
    }
    out
}

pub fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes via a sibling temporary file and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| SigaError::format(path, "not a file path"))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| SigaError::io(&tmp, e))?;
    f.write_all(contents).map_err(|e| SigaError::io(&tmp, e))?;
    f.sync_all().map_err(|e| SigaError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| SigaError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Serialize;

    #[derive(Serialize)]
    struct Probe {
        #[serde(with = "sig17::num")]
        x: f64,
        #[serde(with = "sig17::slice")]
        v: Vec<f64>,
        #[serde(with = "sig17::opt")]
        o: Option<f64>,
    }

    #[test]
    fn json_numbers_carry_seventeen_digits() {
        let p = Probe {
            x: 0.1,
            v: vec![-2.5, f64::NAN],
            o: None,
        };
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(
            s,
            r#"{"x":1.0000000000000001e-1,"v":[-2.5000000000000000e0,null],"o":null}"#
        );
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["x"].as_f64().unwrap(), 0.1);
    }

    #[test]
    fn trajectory_csv_layout() {
        let rows = [TrajectoryRecord {
            t: 3,
            nu_norm2: 1.0,
            theta_norm2: 2.0,
            dnu_inf: 0.0,
            dtheta_inf: 1e-3,
        }];
        let csv = trajectory_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), TRAJECTORY_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "3,1.0000000000000000e0,2.0000000000000000e0,0.0000000000000000e0,1.0000000000000000e-3"
        );
    }
}
