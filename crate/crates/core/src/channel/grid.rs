use num_complex::Complex32;

use super::{ChannelError, MIN_EXTENT};

/// Row-major `rows × cols` array of complex values (rows are subcarriers,
/// columns are time symbols).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    rows: usize,
    cols: usize,
    values: Vec<Complex32>,
}

impl ComplexGrid {
    pub(crate) fn check_extents(rows: usize, cols: usize) -> Result<(), ChannelError> {
        if rows < MIN_EXTENT || cols < MIN_EXTENT {
            return Err(ChannelError::GridTooSmall { rows, cols });
        }
        Ok(())
    }

    pub fn from_values(rows: usize, cols: usize, values: Vec<Complex32>) -> Result<Self, ChannelError> {
        Self::check_extents(rows, cols)?;
        if values.len() != rows * cols {
            return Err(ChannelError::ExtentMismatch {
                left: format!("{rows}x{cols} grid"),
                right: format!("{} values", values.len()),
            });
        }
        Ok(ComplexGrid { rows, cols, values })
    }

    /// # Panics
    ///
    /// Panics if either extent is below [`MIN_EXTENT`].
    pub fn filled(rows: usize, cols: usize, value: Complex32) -> Self {
        Self::check_extents(rows, cols).expect("grid extents");
        ComplexGrid {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    /// # Panics
    ///
    /// Panics if either extent is below [`MIN_EXTENT`].
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex32) -> Self {
        Self::check_extents(rows, cols).expect("grid extents");
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        ComplexGrid { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex32 {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex32) {
        self.values[r * self.cols + c] = v;
    }

    pub fn values(&self) -> &[Complex32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex32] {
        &mut self.values
    }

    /// `(1/N) Σ |v|²` in double precision.
    pub fn mean_power(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr() as f64).sum::<f64>() / self.values.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub(crate) fn check_same_extents(&self, other: &ComplexGrid) -> Result<(), ChannelError> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(ChannelError::ExtentMismatch {
                left: format!("{}x{}", self.rows, self.cols),
                right: format!("{}x{}", other.rows, other.cols),
            });
        }
        Ok(())
    }
}
