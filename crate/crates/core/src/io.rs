//! CSV formats shared by the command-line tools.
//!
//! Fields are written as a `t,S1,...,SN` header followed by one row per
//! timestep. Numbers use Rust's shortest round-trip decimal form (`{:?}`),
//! so a written field reads back bit-exactly. Matrices put one receiver per
//! row, led by its label; masked entries are empty cells.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::arm_geometry::{ReferenceFrame, N_REFERENCE};
use crate::error::{Error, Result};
use crate::field::SpatioTemporalField;

/// Shortest decimal that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

fn parse_f64(s: &str, row: usize, col: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("row {row}, column {col}: `{s}` is not a number")))
}

fn parse_t(s: &str, row: usize) -> Result<i64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("row {row}: timestep `{s}` is not an integer")))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?)
}

/// Checks that `ts` are consecutive integers and returns the first.
fn consecutive(ts: &[i64]) -> Result<i64> {
    if let Some(n) = ts.windows(2).position(|w| w[1] != w[0] + 1) {
        return Err(Error::Format(format!(
            "timesteps must be consecutive: {} follows {} at row {}",
            ts[n + 1],
            ts[n],
            n + 2
        )));
    }
    ts.first()
        .copied()
        .ok_or_else(|| Error::InsufficientData("file has no data rows".into()))
}

/// Reads a field CSV (`t,<label>...`).
pub fn read_field(path: &Path) -> Result<SpatioTemporalField> {
    let mut rdr = reader(path)?;
    let header = rdr.headers()?.clone();
    if header.len() < 2 || header.get(0) != Some("t") {
        return Err(Error::Format("field header must be `t,S1,...,SN`".into()));
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut rows = vec![Vec::new(); labels.len()];
    let mut ts = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = n + 1;
        ts.push(parse_t(&rec[0], row)?);
        for (c, label) in labels.iter().enumerate() {
            rows[c].push(parse_f64(&rec[c + 1], row, label)?);
        }
    }
    let t0 = consecutive(&ts)?;
    SpatioTemporalField::with_labels(rows, labels, t0)
}

pub fn write_field(path: &Path, field: &SpatioTemporalField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "t")?;
    for l in field.labels() {
        write!(w, ",{l}")?;
    }
    writeln!(w)?;
    for t in 0..field.n_steps() {
        write!(w, "{}", field.t0 + t as i64)?;
        for c in 0..field.n_cells() {
            write!(w, ",{}", format_f64(field.cell(c)[t]))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a single named column of a `t,...` CSV, with its first timestep.
pub fn read_series(path: &Path, column: Option<&str>) -> Result<(Vec<f64>, i64, String)> {
    let mut rdr = reader(path)?;
    let header = rdr.headers()?.clone();
    if header.len() < 2 || header.get(0) != Some("t") {
        return Err(Error::Format("series header must start with `t`".into()));
    }
    let idx = match column {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .filter(|&i| i > 0)
            .ok_or_else(|| Error::Format(format!("no column `{name}`")))?,
        None => 1,
    };
    let name = header[idx].to_owned();
    let mut ts = Vec::new();
    let mut xs = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        ts.push(parse_t(&rec[0], n + 1)?);
        xs.push(parse_f64(&rec[idx], n + 1, &name)?);
    }
    let t0 = consecutive(&ts)?;
    Ok((xs, t0, name))
}

/// Reads tracker rows `t, x_R1, y_R1, ..., x_R6, y_R6`. Frame validation
/// errors carry the row's timestep.
pub fn read_tracker(path: &Path) -> Result<Vec<ReferenceFrame>> {
    let mut rdr = reader(path)?;
    let header = rdr.headers()?.clone();
    if header.len() != 1 + 2 * N_REFERENCE || header.get(0) != Some("t") {
        return Err(Error::Format(format!(
            "tracker header must be `t` plus {} coordinate columns, found {} columns",
            2 * N_REFERENCE,
            header.len()
        )));
    }
    let mut frames = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = n + 1;
        let t = parse_t(&rec[0], row)?;
        let mut points = [(0.0, 0.0); N_REFERENCE];
        for (k, p) in points.iter_mut().enumerate() {
            *p = (
                parse_f64(&rec[1 + 2 * k], row, &header[1 + 2 * k])?,
                parse_f64(&rec[2 + 2 * k], row, &header[2 + 2 * k])?,
            );
        }
        let frame = ReferenceFrame::new(t, points).map_err(|e| Error::Frame {
            t,
            source: Box::new(e),
        })?;
        frames.push(frame);
    }
    if frames.is_empty() {
        return Err(Error::InsufficientData("tracker file has no frames".into()));
    }
    Ok(frames)
}

pub fn write_tracker(path: &Path, frames: &[ReferenceFrame]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "t")?;
    for k in 1..=N_REFERENCE {
        write!(w, ",x_R{k},y_R{k}")?;
    }
    writeln!(w)?;
    for f in frames {
        write!(w, "{}", f.t)?;
        for (x, y) in f.points {
            write!(w, ",{},{}", format_f64(x), format_f64(y))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `rows` under a header `corner,<columns>`, each row led by its label.
pub fn write_matrix(
    path: &Path,
    corner: &str,
    row_labels: &[String],
    columns: &[String],
    rows: &[Vec<Option<f64>>],
) -> Result<()> {
    if row_labels.len() != rows.len() || rows.iter().any(|r| r.len() != columns.len()) {
        return Err(Error::ShapeMismatch("matrix labels do not match its shape".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "{corner}")?;
    for c in columns {
        write!(w, ",{c}")?;
    }
    writeln!(w)?;
    for (label, row) in row_labels.iter().zip(rows) {
        write!(w, "{label}")?;
        for v in row {
            match v {
                Some(v) => write!(w, ",{}", format_f64(*v))?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix`]: `(columns, row labels, rows)`.
pub fn read_matrix(path: &Path) -> Result<(Vec<String>, Vec<String>, Vec<Vec<Option<f64>>>)> {
    let mut rdr = reader(path)?;
    let columns: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_owned).collect();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        labels.push(rec[0].to_owned());
        rows.push(
            rec.iter()
                .skip(1)
                .zip(&columns)
                .map(|(s, c)| {
                    if s.is_empty() {
                        Ok(None)
                    } else {
                        parse_f64(s, n + 1, c).map(Some)
                    }
                })
                .collect::<Result<_>>()?,
        );
    }
    Ok((columns, labels, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn f64_text_round_trips(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            prop_assert_eq!(format_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn field_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let rows = vec![
            vec![0.1, 1e-300, -2.5e17, 1.0 / 3.0],
            vec![f64::MIN_POSITIVE, -0.0, 123456789.125, std::f64::consts::PI],
        ];
        let f = SpatioTemporalField::with_labels(rows, vec!["S1".into(), "S2".into()], -3).unwrap();
        write_field(&path, &f).unwrap();
        let g = read_field(&path).unwrap();
        assert_eq!(g.t0, -3);
        assert_eq!(g.labels(), f.labels());
        for c in 0..2 {
            for (a, b) in f.cell(c).iter().zip(g.cell(c)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn malformed_files_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        for text in [
            "x,S1\n0,1\n",
            "t,S1\n0,abc\n",
            "t,S1\n0,1\n2,1\n",
            "t,S1,S2\n0,1\n",
        ] {
            std::fs::write(&path, text).unwrap();
            assert!(matches!(read_field(&path), Err(Error::Format(_))), "{text}");
        }
        std::fs::write(&path, "t,S1\n").unwrap();
        assert!(matches!(read_field(&path), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn matrix_round_trip_keeps_mask() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![vec![None, Some(0.25)], vec![Some(-1.0), None]];
        let labels = vec!["S1".to_string(), "S2".to_string()];
        write_matrix(&path, "receiver", &labels, &labels, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "receiver,S1,S2\nS1,,0.25\nS2,-1.0,\n");
        let (cols, rl, back) = read_matrix(&path).unwrap();
        assert_eq!((cols, rl, back), (labels.clone(), labels, rows));
    }

    #[test]
    fn tracker_errors_carry_timestep() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tr.csv");
        let mut text = String::from("t");
        for k in 1..=6 {
            text += &format!(",x_R{k},y_R{k}");
        }
        text += "\n7,0,0,1,1,2,2,3,3,4,4,5,5\n8,0,0,1,1,1,2,3,3,4,4,5,5\n";
        std::fs::write(&path, text).unwrap();
        match read_tracker(&path) {
            Err(Error::Frame { t, source }) => {
                assert_eq!(t, 8);
                assert!(matches!(*source, Error::DegenerateFrame(_)));
            }
            other => panic!("{other:?}"),
        }
    }
}
