//! CSV output. Every file starts with `# config_hash <hex>`, then a header row.

use std::fs;
use std::path::Path;

use crate::error::BenchError;

pub fn csv_text(config_hash: &str, header: &str, rows: &[String]) -> String {
    let mut s = format!("# config_hash {config_hash}\n{header}\n");
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    s
}

pub fn write_csv(path: &Path, config_hash: &str, header: &str, rows: &[String]) -> Result<(), BenchError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(BenchError::io(dir))?;
    }
    fs::write(path, csv_text(config_hash, header, rows)).map_err(BenchError::io(path))
}

/// Reads back a file written by [`write_csv`]: `(config hash, header, rows)`.
pub fn read_csv(path: &Path) -> Result<(String, String, Vec<String>), BenchError> {
    let text = fs::read_to_string(path).map_err(BenchError::io(path))?;
    let mut lines = text.lines();
    let bad = |reason: &str| BenchError::Manifest {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let hash = lines
        .next()
        .and_then(|l| l.strip_prefix("# config_hash "))
        .ok_or_else(|| bad("missing config hash line"))?;
    let header = lines.next().ok_or_else(|| bad("missing header row"))?;
    Ok((hash.to_string(), header.to_string(), lines.map(String::from).collect()))
}

/// Mean and standard error (sample deviation over sqrt n; 0 for one value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stamped_header() {
        let t = csv_text("ab12", "a,b", &["1,2".into()]);
        assert_eq!(t, "# config_hash ab12\na,b\n1,2\n");
    }

    #[test]
    fn stderr_by_hand() {
        assert_eq!(mean_stderr(&[4.0]), (4.0, 0.0));
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sample variance 5/3, stderr sqrt(5/12)
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!(mean_stderr(&[]).0.is_nan());
    }
}
