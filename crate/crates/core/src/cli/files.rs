//! Plain-text formats used by the command line: shape-headed matrix CSV,
//! one-value-per-line vectors and ASCII PGM heatmaps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::numerics::DenseMatrix;

/// Parses a matrix file: a `rows,cols` header followed by `rows` lines of
/// `cols` comma-separated numbers.
pub fn parse_matrix(text: &str) -> Result<DenseMatrix, String> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or("empty matrix file")?;
    let (rows, cols) = header.split_once(',').ok_or_else(|| format!("header {header:?} is not \"rows,cols\""))?;
    let rows: usize = rows.trim().parse().map_err(|_| format!("bad row count {rows:?}"))?;
    let cols: usize = cols.trim().parse().map_err(|_| format!("bad column count {cols:?}"))?;
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (k, line) in lines.enumerate() {
        let before = data.len();
        for field in line.split(',') {
            data.push(parse_number(field, k + 2)?);
        }
        if data.len() - before != cols {
            return Err(format!("line {} has {} entries, header says {cols}", k + 2, data.len() - before));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(format!("found {seen} data rows, header says {rows}"));
    }
    DenseMatrix::new(rows, cols, data).map_err(|e| e.to_string())
}

/// Parses a vector: one number per line. A matrix file with a single row or
/// column is accepted too.
pub fn parse_vector(text: &str) -> Result<Vec<f64>, String> {
    let first = text.lines().map(str::trim).find(|l| !l.is_empty()).ok_or("empty vector file")?;
    if first.contains(',') {
        let m = parse_matrix(text)?;
        if m.rows() != 1 && m.cols() != 1 {
            return Err(format!("expected a vector, found a {}x{} matrix", m.rows(), m.cols()));
        }
        return Ok(m.into_vec());
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| parse_number(l, k + 1))
        .collect()
}

fn parse_number(field: &str, line: usize) -> Result<f64, String> {
    let v: f64 = field.trim().parse().map_err(|_| format!("line {line}: {:?} is not a number", field.trim()))?;
    if !v.is_finite() {
        return Err(format!("line {line}: non-finite value {v}"));
    }
    Ok(v)
}

pub fn format_matrix(m: &DenseMatrix) -> String {
    let mut s = format!("{},{}\n", m.rows(), m.cols());
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn format_vector(v: &[f64]) -> String {
    v.iter().fold(String::new(), |mut s, x| {
        let _ = writeln!(s, "{x:?}");
        s
    })
}

/// Grey level of every entry: `round(255 * v / max)`, clamped at 0. An
/// all-non-positive matrix renders black.
pub fn heatmap_levels(m: &DenseMatrix) -> Vec<u8> {
    let max = m.max();
    m.as_slice()
        .iter()
        .map(|&v| if max > 0.0 { (255.0 * v / max).round().clamp(0.0, 255.0) as u8 } else { 0 })
        .collect()
}

/// ASCII PGM (P2). Image row `i` is matrix row `i`.
pub fn format_pgm(m: &DenseMatrix) -> String {
    let levels = heatmap_levels(m);
    let mut s = format!("P2\n{} {}\n255\n", m.cols(), m.rows());
    for row in levels.chunks(m.cols().max(1)) {
        let row: Vec<String> = row.iter().map(u8::to_string).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

pub fn write(path: &Path, contents: &str) -> Result<(), String> {
    fs::write(path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_roundtrip() {
        let m = DenseMatrix::from_rows(&[vec![0.25, 1.0], vec![0.75, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(parse_matrix(&format_matrix(&m)).unwrap(), m);
    }

    #[test]
    fn malformed_matrices() {
        assert!(parse_matrix("").is_err());
        assert!(parse_matrix("2\n1\n2\n").is_err());
        assert!(parse_matrix("2,2\n1,0\n").is_err());
        assert!(parse_matrix("1,2\n1,x\n").is_err());
        assert!(parse_matrix("1,2\n1,2,3\n").is_err());
        assert!(parse_matrix("1,1\nNaN\n").is_err());
    }

    #[test]
    fn vectors() {
        assert_eq!(parse_vector("0\n1.5\n\n2\n").unwrap(), vec![0.0, 1.5, 2.0]);
        assert_eq!(parse_vector("1,3\n0,1,2\n").unwrap(), vec![0.0, 1.0, 2.0]);
        assert!(parse_vector("2,2\n0,1\n1,0\n").is_err());
        assert_eq!(parse_vector(&format_vector(&[0.1, 2.0])).unwrap(), vec![0.1, 2.0]);
    }

    #[test]
    fn pgm_layout() {
        let m = DenseMatrix::identity(2);
        assert_eq!(format_pgm(&m), "P2\n2 2\n255\n255 0\n0 255\n");
        let m = DenseMatrix::from_rows(&[vec![0.5, 1.0, 0.0]]).unwrap();
        assert_eq!(format_pgm(&m), "P2\n3 1\n255\n128 255 0\n");
    }
}
