use std::path::Path;

use crate::error::{Error, Result};
use crate::expr::{parse_rational, Rational};

/// Reads rational points, one per row, comma-separated (`p/q` or integers);
/// `#` starts a comment line.
pub fn read_points(path: impl AsRef<Path>) -> Result<Vec<Vec<Rational>>> {
    parse_points(std::fs::File::open(path)?)
}

pub fn parse_points(reader: impl std::io::Read) -> Result<Vec<Vec<Rational>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| parse_rational(f).ok_or_else(|| Error::schema("points", format!("row {}: `{f}` is not a rational", line + 1))))
            .collect::<Result<Vec<_>>>()?;
        if !row.is_empty() {
            out.push(row);
        }
    }
    Ok(out)
}
