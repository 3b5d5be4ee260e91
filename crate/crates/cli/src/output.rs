//! CSV tables and atomic file output.

use std::io::Write;
use std::path::Path;

use crate::error::CliError;

pub const CURVE_HEADER: [&str; 10] = ["state", "scheme", "W0", "theta_bar", "mu", "mse", "stderr", "taylor_delta", "crb", "seed"];
pub const LOSS_EXTRA: [&str; 2] = ["eta", "encoding"];
pub const SPECTRUM_HEADER: [&str; 3] = ["state", "index", "estimate"];
pub const BOUND_HEADER: [&str; 8] = ["state", "W0", "theta_bar", "bound", "bound_variance_form", "fq", "support_dim", "degenerate_groups"];
pub const STATE_HEADER: [&str; 8] = ["state", "cutoff", "tail", "n_bar", "Q", "J", "F_q", "mu_tau"];

/// Scientific notation with ten significant digits.
pub fn sci(x: f64) -> String {
    format!("{x:.9e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Appends the rows of `other`, which must share the header.
    pub fn extend(&mut self, other: Table) -> Result<(), CliError> {
        if other.header != self.header {
            return Err(CliError::Config("experiments writing to one file must produce the same columns".into()));
        }
        self.rows.extend(other.rows);
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }

    /// Writes to a temporary file next to `path` and renames it into place.
    pub fn write_atomic(&self, path: &Path) -> Result<(), CliError> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        std::fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&self.to_bytes()?)?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| CliError::Io(e.to_string()))?;
        Ok(())
    }

    pub fn write_to(&self, path: Option<&Path>) -> Result<(), CliError> {
        match path {
            Some(p) => self.write_atomic(p),
            None => {
                std::io::stdout().write_all(&self.to_bytes()?)?;
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scientific_with_enough_digits() {
        assert_eq!(sci(0.1440180409267), "1.440180409e-1");
        assert_eq!(sci(0.0), "0.000000000e0");
        let back: f64 = sci(std::f64::consts::PI).parse().unwrap();
        assert!((back - std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn header_only_when_empty() {
        let t = Table::new(&CURVE_HEADER);
        assert_eq!(String::from_utf8(t.to_bytes().unwrap()).unwrap(), CURVE_HEADER.join(",") + "\n");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/out.csv");
        let mut t = Table::new(&SPECTRUM_HEADER);
        t.push(vec!["noon".into(), "0".into(), sci(-0.3)]);
        t.write_atomic(&path).unwrap();
        t.write_atomic(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn mismatched_tables_do_not_merge() {
        let mut a = Table::new(&SPECTRUM_HEADER);
        assert!(a.extend(Table::new(&CURVE_HEADER)).is_err());
    }
}
