//! Run-trace container and its two on-disk formats.
//!
//! Traces are rectangular: named columns over uniformly sampled rows. The
//! text format is headered comma-separated values in SI units, written with
//! Rust's shortest round-trip float formatting; the binary format carries an
//! 8-byte magic, a version word, and little-endian 64-bit floats. Both
//! round-trip byte-identically: write → read → write reproduces the file.

use std::fs;
use std::io::{self, BufRead, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, SimError};

/// Magic bytes opening every binary trace file.
pub const TRACE_MAGIC: [u8; 8] = *b"MWTRACE\0";
/// Current binary format version.
pub const TRACE_VERSION: u32 = 1;

/// A uniformly sampled multi-channel time series.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    columns: Vec<String>,
    /// Row-major sample storage; every row has `columns.len()` entries.
    rows: Vec<Vec<f64>>,
}

impl RunTrace {
    pub fn new(columns: Vec<String>) -> Result<Self> {
        if columns.is_empty() {
            return Err(SimError::config("trace needs at least one column"));
        }
        for (i, name) in columns.iter().enumerate() {
            if name.is_empty() || name.contains(',') || name.contains('\n') {
                return Err(SimError::config(format!("invalid column name {name:?}")));
            }
            if columns[..i].contains(name) {
                return Err(SimError::config(format!("duplicate column name {name:?}")));
            }
        }
        Ok(RunTrace { columns, rows: Vec::new() })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(SimError::TraceFormat(format!(
                "row has {} entries, trace has {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.rows[index]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Copy one channel out by name.
    pub fn channel(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .column_index(name)
            .ok_or_else(|| SimError::config(format!("trace has no channel named {name:?}")))?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// The time channel `t` [s].
    pub fn time(&self) -> Result<Vec<f64>> {
        self.channel("t")
    }

    /// Check that the time channel is strictly increasing.
    pub fn validate_time_monotone(&self) -> Result<()> {
        let t = self.time()?;
        for pair in t.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(SimError::TraceFormat(format!(
                    "time not strictly increasing: {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // Text format
    // ------------------------------------------------------------------

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.columns.join(","))?;
        let mut line = String::new();
        for row in &self.rows {
            line.clear();
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                line.push_str(&v.to_string());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| SimError::TraceFormat("empty trace file".into()))??;
        let columns: Vec<String> = header.split(',').map(str::to_owned).collect();
        let mut trace = RunTrace::new(columns)?;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|tok| {
                    tok.parse::<f64>().map_err(|e| {
                        SimError::TraceFormat(format!(
                            "line {}: bad float {tok:?}: {e}",
                            lineno + 2
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            trace.push_row(row)?;
        }
        Ok(trace)
    }

    pub fn write_csv_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = fs::File::create(path)?;
        self.write_csv(BufWriter::new(file))?;
        Ok(())
    }

    pub fn read_csv_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = fs::File::open(path)?;
        Self::read_csv(io::BufReader::new(file))
    }

    // ------------------------------------------------------------------
    // Binary format
    // ------------------------------------------------------------------

    pub fn write_binary<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(&TRACE_MAGIC)?;
        out.write_all(&TRACE_VERSION.to_le_bytes())?;
        out.write_all(&(self.columns.len() as u32).to_le_bytes())?;
        out.write_all(&(self.rows.len() as u64).to_le_bytes())?;
        for name in &self.columns {
            let bytes = name.as_bytes();
            out.write_all(&(bytes.len() as u32).to_le_bytes())?;
            out.write_all(bytes)?;
        }
        for row in &self.rows {
            for v in row {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if magic != TRACE_MAGIC {
            return Err(SimError::TraceFormat(format!("bad magic {magic:?}")));
        }
        let version = read_u32(&mut input)?;
        if version != TRACE_VERSION {
            return Err(SimError::TraceFormat(format!(
                "unsupported trace version {version} (expected {TRACE_VERSION})"
            )));
        }
        let n_cols = read_u32(&mut input)? as usize;
        let n_rows = read_u64(&mut input)? as usize;
        let mut columns = Vec::with_capacity(n_cols);
        for _ in 0..n_cols {
            let len = read_u32(&mut input)? as usize;
            let mut buf = vec![0u8; len];
            input.read_exact(&mut buf)?;
            let name = String::from_utf8(buf)
                .map_err(|e| SimError::TraceFormat(format!("column name not UTF-8: {e}")))?;
            columns.push(name);
        }
        let mut trace = RunTrace::new(columns)?;
        let mut buf = [0u8; 8];
        for _ in 0..n_rows {
            let mut row = Vec::with_capacity(n_cols);
            for _ in 0..n_cols {
                input.read_exact(&mut buf)?;
                row.push(f64::from_le_bytes(buf));
            }
            trace.push_row(row)?;
        }
        Ok(trace)
    }

    pub fn write_binary_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = fs::File::create(path)?;
        self.write_binary(BufWriter::new(file))?;
        Ok(())
    }

    pub fn read_binary_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = fs::File::open(path)?;
        Self::read_binary(io::BufReader::new(file))
    }

    /// Read either format, dispatching on the magic bytes.
    pub fn read_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let bytes = fs::read(&path)?;
        if bytes.len() >= 8 && bytes[..8] == TRACE_MAGIC {
            Self::read_binary(io::Cursor::new(bytes))
        } else {
            Self::read_csv(io::Cursor::new(bytes))
        }
    }
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
