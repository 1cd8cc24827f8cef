//! CSV and manifest writers.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A CSV file whose first lines are the run manifest, commented out with `#`.
pub struct CsvWriter {
    path: PathBuf,
    w: BufWriter<File>,
    columns: usize,
}

impl CsvWriter {
    pub fn create(path: &Path, manifest: &str, columns: &[&str]) -> Result<Self> {
        let mut w = BufWriter::new(File::create(path)?);
        for line in manifest.lines() {
            if line.starts_with('#') {
                writeln!(w, "{line}")?;
            } else {
                writeln!(w, "# {line}")?;
            }
        }
        writeln!(w, "{}", columns.join(","))?;
        Ok(CsvWriter {
            path: path.to_path_buf(),
            w,
            columns: columns.len(),
        })
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        let cells: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
        self.cells(&cells)
    }

    /// A row of preformatted cells (for label columns).
    pub fn cells(&mut self, cells: &[String]) -> Result<()> {
        assert_eq!(cells.len(), self.columns, "wrong column count for {}", self.path.display());
        writeln!(self.w, "{}", cells.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.w.flush()?;
        Ok(self.path)
    }
}

/// Output directory of one run.
pub struct RunOutput {
    pub dir: PathBuf,
    pub manifest: String,
    pub written: Vec<PathBuf>,
}

impl RunOutput {
    pub fn create(dir: &Path, manifest: String) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join("manifest.toml");
        fs::write(&path, &manifest)?;
        Ok(RunOutput {
            dir: dir.to_path_buf(),
            manifest,
            written: vec![path],
        })
    }

    pub fn csv(&self, name: &str, columns: &[&str]) -> Result<CsvWriter> {
        CsvWriter::create(&self.dir.join(name), &self.manifest, columns)
    }

    /// Writes a whole table at once.
    pub fn table(&mut self, name: &str, columns: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
        let mut w = self.csv(name, columns)?;
        for r in rows {
            w.row(&r)?;
        }
        self.written.push(w.finish()?);
        Ok(())
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, data)?;
        self.written.push(path);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.25), "2.5000000000000000e-1");
        let v = 0.1 + 0.2;
        assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn csv_starts_with_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        let mut out = RunOutput::create(dir, "a = 1\nb = 2\n".into()).unwrap();
        out.table("t.csv", &["x", "y"], [vec![1.0, 2.0]]).unwrap();
        let text = fs::read_to_string(dir.join("t.csv")).unwrap();
        assert_eq!(
            text,
            "# a = 1\n# b = 2\nx,y\n1.0000000000000000e0,2.0000000000000000e0\n"
        );
    }
}
