//! CSV output with shortest round-trip float text.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};

/// Shortest text that parses back to exactly `x` (exponent form for very
/// large or small magnitudes).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub struct CsvOut {
    inner: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut inner = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(BufWriter::new(file));
        inner.write_record(header)?;
        Ok(Self { inner })
    }

    pub fn floats(&mut self, row: &[f64]) -> Result<()> {
        self.inner.write_record(row.iter().map(|v| fmt_f64(*v)))?;
        Ok(())
    }

    pub fn fields<I, S>(&mut self, row: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Header and rows of a CSV file, as text.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header = rdr.headers()?.iter().map(str::to_owned).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_owned).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()?;
    Ok((header, rows))
}

/// Numeric CSV: every field parsed as `f64`.
pub fn read_floats(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let (header, rows) = read_table(path)?;
    let parsed = rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|v| v.parse::<f64>().with_context(|| format!("bad number {v:?}")))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, parsed))
}
