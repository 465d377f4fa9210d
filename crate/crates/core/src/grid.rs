//! Inverse-depth rasters with an explicit validity mask.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major `height x width` inverse-depth raster (1/m).
///
/// Entries flagged invalid are never read by any operator; their stored value
/// is arbitrary.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthGrid<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
    mask: Vec<bool>,
}

impl<T: Scalar> DepthGrid<T> {
    pub fn new(width: usize, height: usize, values: Vec<T>, mask: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if values.len() != n || mask.len() != n {
            return Err(Error::LengthMismatch {
                what: "depth grid",
                expected: n,
                got: values.len().min(mask.len()),
            });
        }
        if let Some(k) = (0..n).find(|&k| mask[k] && !(values[k].is_finite() && values[k] > T::zero())) {
            return Err(Error::InvalidInput(format!(
                "pixel {k} is marked valid but holds {}",
                values[k]
            )));
        }
        Ok(DepthGrid {
            width,
            height,
            values,
            mask,
        })
    }

    /// Builds a grid whose mask accepts exactly the finite, positive entries.
    pub fn from_values(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        let mask = values.iter().map(|v| v.is_finite() && *v > T::zero()).collect();
        Self::new(width, height, values, mask)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_valid(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    /// The value at `idx` if it is valid.
    pub fn get(&self, idx: usize) -> Option<T> {
        self.mask[idx].then(|| self.values[idx])
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Valid values in raster order, aligned with interpolator rows.
    pub fn valid_values(&self) -> Vec<T> {
        self.values
            .iter()
            .zip(&self.mask)
            .filter_map(|(&v, &m)| m.then_some(v))
            .collect()
    }

    /// Marks `idx` invalid.
    pub fn invalidate(&mut self, idx: usize) {
        self.mask[idx] = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_follows_values() {
        let g = DepthGrid::from_values(2, 2, vec![1.0, f64::NAN, 0.0, 2.0]).unwrap();
        assert_eq!(g.mask(), &[true, false, false, true]);
        assert_eq!(g.valid_values(), vec![1.0, 2.0]);
        assert_eq!(g.get(1), None);
    }

    #[test]
    fn rejects_invalid_masked_valid() {
        assert!(DepthGrid::new(1, 1, vec![-1.0], vec![true]).is_err());
        assert!(DepthGrid::new(2, 1, vec![1.0], vec![true]).is_err());
    }
}
