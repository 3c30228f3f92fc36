//! Plain tables rendered as CSV with a fixed number format.

use std::io::Write;
use std::path::Path;

use crate::error::CliError;

/// Significant digits of every numeric cell.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Formats `x` in scientific notation with [`SIGNIFICANT_DIGITS`] digits.
/// The output does not depend on the locale.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        // Normalize -0 so reruns cannot differ in sign of zero.
        let x = if x == 0.0 { 0.0 } else { x };
        format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<(), CliError> {
        let file = std::fs::File::create(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        self.write_to(std::io::BufWriter::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(3.8068), "3.80680000000e0");
        assert_eq!(num(-0.0), "0.00000000000e0");
        assert_eq!(num(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(num(f64::NAN), "nan");
    }

    #[test]
    fn renders_csv() {
        let mut t = Table::new(["a [s]", "b"]);
        t.push(vec![num(1.0), String::new()]);
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a [s],b\n1.00000000000e0,\n");
    }
}
