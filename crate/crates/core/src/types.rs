//! Validated domain wrappers around [`Matrix`].

use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};

/// Log-magnitude spectrogram, `T` time frames by `F` frequency bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram(Matrix);

impl Spectrogram {
    pub fn new(data: Matrix) -> Result<Self> {
        if data.rows() == 0 || data.cols() == 0 {
            return Err(Error::EmptyMatrix);
        }
        if let Some(i) = data.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: i / data.cols() + 1,
                column: i % data.cols() + 1,
            });
        }
        Ok(Self(data))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::new(matrix::load_matrix(path)?).map_err(|e| e.in_file(path))
    }

    pub fn frames(&self) -> usize {
        self.0.rows()
    }

    pub fn bins(&self) -> usize {
        self.0.cols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn data(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }
}

impl AsRef<Matrix> for Spectrogram {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

/// Per-bin importance scores produced for one committee member.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    pub model_id: String,
    pub data: Matrix,
}

impl AttributionMap {
    pub fn new(model_id: impl Into<String>, data: Matrix) -> Result<Self> {
        if !data.is_finite() {
            return Err(Error::Argument(
                "attribution map has non-finite entries".into(),
            ));
        }
        Ok(Self {
            model_id: model_id.into(),
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.shape()
    }
}

/// 0/1 mask over the time-frequency grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
    active: usize,
}

impl BinaryMask {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
            active: 0,
        }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![true; rows * cols],
            active: rows * cols,
        }
    }

    pub fn from_bits(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::Argument(format!(
                "{} bits cannot fill a {rows}x{cols} mask",
                bits.len()
            )));
        }
        let active = bits.iter().filter(|&&b| b).count();
        Ok(Self {
            rows,
            cols,
            bits,
            active,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(rows * cols);
        for t in 0..rows {
            for c in 0..cols {
                bits.push(f(t, c));
            }
        }
        let active = bits.iter().filter(|&&b| b).count();
        Self {
            rows,
            cols,
            bits,
            active,
        }
    }

    /// Reads a real matrix whose entries must all be exactly 0 or 1.
    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        let mut bits = Vec::with_capacity(m.len());
        for (i, &v) in m.as_slice().iter().enumerate() {
            let bit = if v == 1.0 {
                true
            } else if v == 0.0 {
                false
            } else {
                return Err(Error::Argument(format!(
                    "mask entry at row {}, column {} is {v}, expected 0 or 1",
                    i / m.cols() + 1,
                    i % m.cols() + 1
                )));
            };
            bits.push(bit);
        }
        Self::from_bits(m.rows(), m.cols(), bits)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_matrix(&matrix::load_matrix(path)?).map_err(|e| e.in_file(path))
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(
            self.rows,
            self.cols,
            self.bits
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        )
        .expect("mask shape is consistent")
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

    pub fn active_count(&self) -> usize {
        self.active
    }

    pub fn get(&self, t: usize, f: usize) -> bool {
        self.bits[t * self.cols + f]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Active count of each frequency column.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.cols];
        for row in self.bits.chunks(self.cols.max(1)) {
            for (c, &b) in row.iter().enumerate() {
                counts[c] += b as usize;
            }
        }
        counts
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.shape() == other.shape() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
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
}

/// Checks that every mask shares the first mask's shape and returns it.
pub(crate) fn common_shape(masks: &[BinaryMask]) -> Result<(usize, usize)> {
    let first = masks.first().ok_or(Error::CommitteeSize(0))?.shape();
    for m in &masks[1..] {
        m.ensure_shape(first)?;
    }
    Ok(first)
}
