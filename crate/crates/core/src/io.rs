//! Artifact formatting and atomic file emission.

use std::fs;
use std::io::Write;
use std::path::Path;

/// Format a float with 17 significant digits in scientific notation.
///
/// `-0.0` is normalized to `0.0` so that sign-of-zero noise never reaches an
/// artifact.
pub fn fmt_f64(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.16e}")
}

/// Semicolon-joined vector at 17 significant digits.
pub fn fmt_vec(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(";")
}

/// Write `contents` to `path` through a temporary sibling and a rename, so a
/// crash never leaves a truncated artifact behind. A trailing newline is
/// appended when missing.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let file_name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".to_string());
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        if !contents.ends_with('\n') {
            f.write_all(b"\n")?;
        }
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02663e-4, std::f64::consts::PI] {
            let s = fmt_f64(v);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.replace('.', "").len(), 17, "{s}");
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(-0.0), fmt_f64(0.0));
        assert_eq!(fmt_vec(&[1.0, 2.0]), "1.0000000000000000e0;2.0000000000000000e0");
    }

    #[test]
    fn atomic_write_appends_newline() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.csv");
        write_atomic(&p, "a,b").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a,b\n");
        write_atomic(&p, "c\n").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "c\n");
        assert!(!dir.path().join("sub/.out.csv.tmp").exists());
    }
}
