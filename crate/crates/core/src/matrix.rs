//! Dense row-major matrices and the headerless CSV exchange format.
//!
//! Rows are time frames and columns are frequency bins. Reals are written
//! with 9 significant digits, shortest form, so that identical input always
//! yields identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::ops::{Index, IndexMut};
use std::path::Path;

use crate::error::{Error, Result};

/// Dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Argument(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; intended for
    /// literals in tests and examples.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged matrix literal");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for t in 0..rows {
            for c in 0..cols {
                data.push(f(t, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_shape(&self, expected: (usize, usize)) -> Result<()> {
        if self.shape() != expected {
            return Err(Error::Dimension {
                expected,
                found: self.shape(),
            });
        }
        Ok(())
    }

    /// Serializes to the CSV exchange format.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.data.len() * 12);
        for t in 0..self.rows {
            for (c, &v) in self.row(t).iter().enumerate() {
                if c > 0 {
                    out.push(',');
                }
                write_real(&mut out, v);
            }
            out.push('\n');
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (t, f): (usize, usize)) -> &f64 {
        debug_assert!(t < self.rows && f < self.cols);
        &self.data[t * self.cols + f]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (t, f): (usize, usize)) -> &mut f64 {
        debug_assert!(t < self.rows && f < self.cols);
        &mut self.data[t * self.cols + f]
    }
}

/// Appends `v` rounded to 9 significant digits in its shortest decimal form.
pub fn write_real(out: &mut String, v: f64) {
    if v == 0.0 {
        out.push('0');
        return;
    }
    // `{:e}` with 8 fractional digits rounds to 9 significant digits; the
    // reparsed value then prints in its shortest round-trip form.
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted real reparses");
    let mag = rounded.abs();
    if (1e-5..1e16).contains(&mag) {
        let _ = write!(out, "{rounded}");
    } else {
        let _ = write!(out, "{rounded:e}");
    }
}

pub fn format_real(v: f64) -> String {
    let mut s = String::new();
    write_real(&mut s, v);
    s
}

/// Parses the headerless CSV matrix format. Blank trailing lines are ignored;
/// entries may carry surrounding whitespace.
pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut data = Vec::new();
    let mut cols = 0usize;
    let mut rows = 0usize;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 1;
        let start = data.len();
        for (j, token) in line.split(',').enumerate() {
            let token = token.trim();
            let v: f64 = token.parse().map_err(|_| Error::Parse {
                row,
                column: j + 1,
                token: token.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, column: j + 1 });
            }
            data.push(v);
        }
        let found = data.len() - start;
        if rows == 0 {
            cols = found;
        } else if found != cols {
            return Err(Error::RaggedRow {
                row,
                expected: cols,
                found,
            });
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok(Matrix { rows, cols, data })
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text).map_err(|e| e.in_file(path))
}

pub fn save_matrix(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if !m.is_finite() {
        return Err(Error::Argument(format!(
            "refusing to write non-finite matrix to {}",
            path.display()
        )));
    }
    fs::write(path, m.to_csv_string()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_literal() {
        let m = parse_matrix("0,1\n2,3").unwrap();
        assert_eq!(m, Matrix::from_rows(&[[0.0, 1.0], [2.0, 3.0]]));
        let one = parse_matrix("1\n").unwrap();
        assert_eq!(one.shape(), (1, 1));
        assert_eq!(one[(0, 0)], 1.0);
    }

    #[test]
    fn ragged_row_is_named() {
        match parse_matrix("1,2\n3\n") {
            Err(Error::RaggedRow {
                row,
                expected,
                found,
            }) => {
                assert_eq!((row, expected, found), (2, 2, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_token_has_position() {
        match parse_matrix("1,2\n3,x\n") {
            Err(Error::Parse { row, column, token }) => {
                assert_eq!((row, column, token.as_str()), (2, 2, "x"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_matrix("nan"), Err(Error::NonFinite { .. })));
        assert!(matches!(parse_matrix(""), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn serializes_literals() {
        assert_eq!(Matrix::from_rows(&[[0.5]]).to_csv_string(), "0.5\n");
        let eye = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(eye.to_csv_string(), "1,0\n0,1\n");
        assert_eq!(format_real(-0.0), "0");
        assert_eq!(format_real(0.1 + 0.2), "0.3");
        assert_eq!(format_real(123456789012.0), "123456789000");
        assert_eq!(format_real(1.5e-9), "1.5e-9");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = Matrix::from_rows(&[[1.25, -3.0], [7.0, 1e-7]]);
        save_matrix(&m, &path).unwrap();
        assert_eq!(load_matrix(&path).unwrap(), m);
        let missing = dir.path().join("nope.csv");
        assert!(matches!(load_matrix(&missing), Err(Error::Io { .. })));
    }

    fn matrix_strategy() -> impl Strategy<Value = Matrix> {
        (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-1e6f64..1e6, r * c)
                .prop_map(move |v| Matrix::from_vec(r, c, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn save_load_save_is_stable(m in matrix_strategy()) {
            let first = m.to_csv_string();
            let back = parse_matrix(&first).unwrap();
            for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
                // 9 significant digits: half a unit in the ninth digit.
                prop_assert!((a - b).abs() <= 5e-9 * a.abs().max(1e-300));
            }
            prop_assert_eq!(back.to_csv_string(), first);
        }

        #[test]
        fn nine_digit_values_round_trip_exactly(
            mantissas in proptest::collection::vec(-999_999_999i64..999_999_999, 1..20),
            exp in -12i32..12,
        ) {
            let text: String = mantissas
                .iter()
                .map(|m| format!("{m}e{exp}"))
                .collect::<Vec<_>>()
                .join(",");
            let m = parse_matrix(&text).unwrap();
            let back = parse_matrix(&m.to_csv_string()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
