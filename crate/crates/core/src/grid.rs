use crate::error::{Error, Result};

/// Default cap on the total number of grid nodes (fields are dense f64 arrays).
pub const DEFAULT_POINT_CAP: usize = 1 << 25;

/// Uniform periodic grid on a rectangular torus in 2 or 3 dimensions.
///
/// Per-axis resolutions are powers of two (at least 8) so every transform
/// size factors cleanly, and per-axis periods are the physical side lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusGrid {
    dims: Vec<usize>,
    periods: Vec<f64>,
}

impl TorusGrid {
    pub fn new(dims: &[usize], periods: &[f64]) -> Result<Self> {
        Self::with_point_cap(dims, periods, DEFAULT_POINT_CAP)
    }

    pub fn with_point_cap(dims: &[usize], periods: &[f64], cap: usize) -> Result<Self> {
        if !(dims.len() == 2 || dims.len() == 3) {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 2 or 3, got {}",
                dims.len()
            )));
        }
        if periods.len() != dims.len() {
            return Err(Error::InvalidGrid(format!(
                "{} resolutions but {} periods",
                dims.len(),
                periods.len()
            )));
        }
        for &n in dims {
            if n < 8 || !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "resolution {n} must be a power of two >= 8"
                )));
            }
        }
        for &p in periods {
            if !p.is_finite() || p <= 0.0 {
                return Err(Error::InvalidGrid(format!("period {p} must be finite and positive")));
            }
        }
        let total: usize = dims.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).ok_or_else(
            || Error::InvalidGrid("point count overflows usize".into()),
        )?;
        if total > cap {
            return Err(Error::InvalidGrid(format!(
                "point count {total} exceeds cap {cap}"
            )));
        }
        Ok(Self { dims: dims.to_vec(), periods: periods.to_vec() })
    }

    /// Unit-square 2D torus with `n` points per axis.
    pub fn square(n: usize) -> Result<Self> {
        Self::new(&[n, n], &[1.0, 1.0])
    }

    /// Cubic 3D torus with side `period` and `n` points per axis.
    pub fn cube(n: usize, period: f64) -> Result<Self> {
        Self::new(&[n, n, n], &[period, period, period])
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing along one axis.
    pub fn spacing(&self, axis: usize) -> f64 {
        self.periods[axis] / self.dims[axis] as f64
    }

    /// Cell volume (product of spacings).
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    /// Coordinate of node `i` along `axis`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        i as f64 * self.spacing(axis)
    }

    /// Row-major flat index of a multi-index (last axis fastest).
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (a, &i) in idx.iter().enumerate() {
            flat = flat * self.dims[a] + i;
        }
        flat
    }

    /// Decode a flat index into the provided multi-index buffer.
    pub fn unravel(&self, mut flat: usize, idx: &mut [usize]) {
        for a in (0..self.dims.len()).rev() {
            idx[a] = flat % self.dims[a];
            flat /= self.dims[a];
        }
    }

    /// Visit every node as (flat index, coordinates).
    pub fn for_each_node(&self, mut visit: impl FnMut(usize, &[f64])) {
        let d = self.dim();
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0f64; d];
        for flat in 0..self.len() {
            self.unravel(flat, &mut idx);
            for a in 0..d {
                x[a] = self.coord(a, idx[a]);
            }
            visit(flat, &x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_resolutions() {
        assert!(TorusGrid::new(&[7, 16], &[1.0, 1.0]).is_err());
        assert!(TorusGrid::new(&[12, 16], &[1.0, 1.0]).is_err());
        assert!(TorusGrid::new(&[16], &[1.0]).is_err());
        assert!(TorusGrid::new(&[16, 16, 16, 16], &[1.0; 4]).is_err());
    }

    #[test]
    fn rejects_bad_periods() {
        assert!(TorusGrid::new(&[16, 16], &[0.0, 1.0]).is_err());
        assert!(TorusGrid::new(&[16, 16], &[f64::INFINITY, 1.0]).is_err());
        assert!(TorusGrid::new(&[16, 16], &[-1.0, 1.0]).is_err());
    }

    #[test]
    fn point_cap_enforced() {
        assert!(TorusGrid::with_point_cap(&[64, 64], &[1.0, 1.0], 1024).is_err());
        assert!(TorusGrid::with_point_cap(&[32, 32], &[1.0, 1.0], 1024).is_ok());
    }

    #[test]
    fn indexing_round_trip() {
        let g = TorusGrid::new(&[8, 16, 32], &[1.0, 2.0, 3.0]).unwrap();
        let mut idx = [0usize; 3];
        for flat in [0usize, 1, 31, 32, 4095, 8 * 16 * 32 - 1] {
            g.unravel(flat, &mut idx);
            assert_eq!(g.flat_index(&idx), flat);
        }
        assert_eq!(g.spacing(1), 2.0 / 16.0);
        assert_eq!(g.coord(2, 4), 4.0 * 3.0 / 32.0);
    }
}
