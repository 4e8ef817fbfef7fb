//! CSV output with provenance header comments, written atomically.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Provenance written as `#`-prefixed lines at the top of every CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_digest: String,
    pub seed: u64,
    /// Additional `key=value` notes.
    pub notes: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(config_digest: impl Into<String>, seed: u64) -> Self {
        Provenance {
            config_digest: config_digest.into(),
            seed,
            notes: Vec::new(),
        }
    }

    pub fn with_note(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.notes.push((key.into(), value.to_string()));
        self
    }

    pub fn header(&self) -> String {
        let mut out = format!(
            "# tool={TOOL_VERSION}\n# config_digest={}\n# seed={}\n",
            self.config_digest, self.seed
        );
        for (k, v) in &self.notes {
            out.push_str(&format!("# {k}={v}\n"));
        }
        out
    }
}

/// Assembles a CSV document in memory.
#[derive(Debug, Clone)]
pub struct CsvDocument {
    text: String,
}

impl CsvDocument {
    pub fn new(provenance: &Provenance, columns: &[&str]) -> Self {
        let mut text = provenance.header();
        text.push_str(&columns.join(","));
        text.push('\n');
        CsvDocument { text }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let fields: Vec<String> = fields.into_iter().map(|f| f.as_ref().to_string()).collect();
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    /// Appends raw text (e.g. a blank separator line or a comment).
    pub fn raw(&mut self, line: &str) {
        self.text.push_str(line);
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.text.as_bytes())
    }
}

/// Formats a float with 17 significant digits, enough to round-trip exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn csv_has_provenance_header() {
        let prov = Provenance::new("abc", 7).with_note("split", "disjoint");
        let mut doc = CsvDocument::new(&prov, &["epoch", "error"]);
        doc.row(["1", "0.5"]);
        let text = doc.as_str();
        assert!(text.starts_with("# tool=dbn-core "));
        assert!(text.contains("# config_digest=abc\n# seed=7\n# split=disjoint\nepoch,error\n1,0.5\n"));
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 2.5e-300, 123456.789, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
