//! CSV writers shared by trajectories, fields and checkpoints.
//!
//! Numbers use Rust's shortest round-trip formatting, so identical values
//! always produce identical bytes.

use std::io::Write;

use crate::error::Result;

pub fn write_columns<W: Write>(out: W, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|&v| format_number(v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn columns_to_string(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<String> {
    let mut buf = Vec::new();
    write_columns(&mut buf, header, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is ascii"))
}

/// Shortest round-trip text, in exponent form for very small or large magnitudes.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) || !a.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Reads a numeric CSV with a header row.
pub fn read_columns(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| crate::error::Error::OutOfDomain(format!("bad number in csv: {e}")))?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = columns_to_string(&["s", "a"], vec![vec![0.1, -2.5e-300], vec![1.0, 3.0]]).unwrap();
        assert_eq!(text, "s,a\n0.1,-2.5e-300\n1,3\n");
        let (h, rows) = read_columns(&text).unwrap();
        assert_eq!(h, vec!["s", "a"]);
        assert_eq!(rows[0][1], -2.5e-300);
    }
}
