//! Deterministic CSV/JSON emission: '.' decimal, ',' separator, LF line
//! endings, floats with 17 significant digits.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// One CSV cell; floats are rendered as `{:.16e}` (17 significant digits).
#[derive(Debug, Clone)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self, out: &mut String) {
        match self {
            Cell::Int(v) => {
                let _ = write!(out, "{v}");
            }
            Cell::Float(v) => {
                let _ = write!(out, "{v:.16e}");
            }
            Cell::Text(v) => out.push_str(v),
        }
    }
}

/// Renders a CSV table to bytes (header row always present).
pub fn csv_bytes(header: &[&str], rows: &[Vec<Cell>]) -> Vec<u8> {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len(), "row width mismatch");
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                text.push(',');
            }
            cell.render(&mut text);
        }
        text.push('\n');
    }
    text.into_bytes()
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::io(parent.display().to_string(), e))?;
    }
    let mut f = std::fs::File::create(path)
        .map_err(|e| CliError::io(path.display().to_string(), e))?;
    f.write_all(bytes)
        .map_err(|e| CliError::io(path.display().to_string(), e))
}

/// JSON serialization with every float printed to 17 significant digits.
pub fn json17_bytes<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Json17);
    value.serialize(&mut ser).expect("in-memory serialization");
    out.push(b'\n');
    out
}

struct Json17;

impl serde_json::ser::Formatter for Json17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            // JSON has no infinities; emit null like serde_json does.
            writer.write_all(b"null")
        }
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.write_f64(writer, value as f64)
    }
}

/// FNV-1a digest of emitted bytes, recorded in the manifest so reruns can be
/// compared at a glance.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}
