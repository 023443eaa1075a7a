use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = temp_path(path);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Writes a numeric table as CSV: one header line, then rows in `{:.16e}`
/// (17 significant digits), LF line endings.
///
/// Non-finite values are refused.
pub fn emit_csv<R, I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    R: AsRef<[f64]>,
    I: IntoIterator<Item = R>,
{
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    let mut count = 0usize;
    for row in rows {
        let row = row.as_ref();
        if row.len() != header.len() {
            return Err(Error::io(
                path,
                format!("row {count} has {} values for {} columns", row.len(), header.len()),
            ));
        }
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::io(
                    path,
                    format!("non-finite value {v} in row {count}, column {}", header[j]),
                ));
            }
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v:.16e}"));
        }
        out.push('\n');
        count += 1;
    }
    if count == 0 {
        return Err(Error::io(path, "refusing to write an empty table"));
    }
    write_atomic(path, out.as_bytes())
}

/// Reads a table written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::io(path, "empty file"))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let rows = lines
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|s| {
                    s.parse::<f64>().map_err(|e| Error::Parse {
                        location: format!("{}:{}", path.display(), i + 2),
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, rows))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// `t,<prefix>1,...,<prefix>n`.
pub fn series_header(prefix: &str, n: usize) -> Vec<String> {
    std::iter::once("t".to_owned())
        .chain((1..=n).map(|i| format!("{prefix}{i}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.csv");
        let row = [0.1, -1.0 / 3.0, 6.02214076e23, f64::MIN_POSITIVE, 5e-324];
        let header: Vec<String> = (0..5).map(|i| format!("c{i}")).collect();
        emit_csv(&path, &header, [row]).unwrap();
        let (h, rows) = read_csv(&path).unwrap();
        assert_eq!(h, header);
        for (a, b) in rows[0].iter().zip(&row) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let text = fs::read_to_string(&path).unwrap();
        assert!(!text.contains('\r'));
    }

    #[test]
    fn nan_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let err = emit_csv(&path, &["t".to_owned()], [[f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(!path.exists());
    }

    #[test]
    fn no_temp_files_left_behind() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.json");
        write_json(&path, &serde_json::json!({"a": 1})).unwrap();
        let names: Vec<_> = fs::read_dir(path.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names, vec![std::ffi::OsString::from("out.json")]);
    }
}
