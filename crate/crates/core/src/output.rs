//! Deterministic CSV emission shared by every module.
//!
//! Floats are written with Rust's shortest round-trip representation, so a
//! value read back parses to the identical bit pattern. Complex numbers take
//! two columns.

use std::io::Write;

pub use csv::Error as CsvError;

/// Shortest decimal string that parses back to the same `f64`, switching
/// to exponent notation for very large or small magnitudes.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // drop the sign of negative zero so identical runs print identically
        return "0".to_string();
    }
    let s = format!("{x:?}");
    match s.strip_suffix(".0") {
        Some(int) => int.to_string(),
        None => s,
    }
}

/// Minimal RFC-4180 table writer.
pub struct CsvTable<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CsvTable<W> {
    pub fn new(sink: W, header: &[&str]) -> Result<Self, CsvError> {
        let mut inner = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(sink);
        inner.write_record(header)?;
        Ok(Self { inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CsvError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields)
    }

    pub fn finish(mut self) -> Result<W, CsvError> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| CsvError::from(e.into_error()))
    }
}
