use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::TorusGrid;

/// Scalar samples at the nodes of a [`TorusGrid`], row-major (last axis fastest).
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<TorusGrid>,
    values: Vec<f64>,
}

/// Pointwise reduction over a scalar field. Means are node averages, which on a
/// uniform periodic grid coincide with measure-normalized torus integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    L2SqMean,
    Max,
    Min,
}

impl ScalarField {
    pub fn new(grid: Arc<TorusGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<TorusGrid>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n] }
    }

    pub fn constant(grid: Arc<TorusGrid>, value: f64) -> Self {
        let n = grid.len();
        Self { grid, values: vec![value; n] }
    }

    /// Sample a function of position at every node.
    pub fn from_fn(grid: Arc<TorusGrid>, f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut f = f;
        let mut values = vec![0.0; grid.len()];
        grid.for_each_node(|flat, x| values[flat] = f(x));
        Self { grid, values }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<TorusGrid> {
        Arc::clone(&self.grid)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_finite(&self, context: &'static str) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { context })
        }
    }

    pub fn reduce(&self, kind: Reduction) -> f64 {
        let n = self.values.len() as f64;
        match kind {
            Reduction::Mean => self.values.iter().sum::<f64>() / n,
            Reduction::L2SqMean => self.values.iter().map(|v| v * v).sum::<f64>() / n,
            Reduction::Max => self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            Reduction::Min => self.values.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn mean(&self) -> f64 {
        self.reduce(Reduction::Mean)
    }

    /// Mean of the square, i.e. the squared measure-normalized L2 norm.
    pub fn l2sq_mean(&self) -> f64 {
        self.reduce(Reduction::L2SqMean)
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2sq_mean().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Subtract the node mean in place.
    pub fn remove_mean(&mut self) {
        let m = self.mean();
        for v in &mut self.values {
            *v -= m;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out
    }

    /// Write the flat binary container: dim, per-axis resolutions, per-axis
    /// periods (little-endian 64-bit), then row-major f64 samples.
    pub fn write_container<W: Write>(&self, w: &mut W) -> Result<()> {
        let g = self.grid();
        w.write_all(&(g.dim() as u64).to_le_bytes())?;
        for &n in g.dims() {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for &p in g.periods() {
            w.write_all(&p.to_le_bytes())?;
        }
        for &v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_container<R: Read>(r: &mut R) -> Result<Self> {
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf8)?;
        let dim = u64::from_le_bytes(buf8) as usize;
        if !(dim == 2 || dim == 3) {
            return Err(Error::BadContainer(format!("dimension {dim}")));
        }
        let mut dims = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut buf8)?;
            dims.push(u64::from_le_bytes(buf8) as usize);
        }
        let mut periods = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut buf8)?;
            periods.push(f64::from_le_bytes(buf8));
        }
        let grid = Arc::new(
            TorusGrid::new(&dims, &periods)
                .map_err(|e| Error::BadContainer(e.to_string()))?,
        );
        let mut values = vec![0.0f64; grid.len()];
        for v in &mut values {
            r.read_exact(&mut buf8)?;
            *v = f64::from_le_bytes(buf8);
        }
        ScalarField::new(grid, values)
    }

    /// Write node coordinates and values as CSV for inspection.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let d = self.grid.dim();
        let header: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
        writeln!(w, "{},value", header.join(","))?;
        let mut err = None;
        self.grid.for_each_node(|flat, x| {
            if err.is_some() {
                return;
            }
            let coords: Vec<String> = x.iter().map(|c| format!("{c:.12e}")).collect();
            if let Err(e) = writeln!(w, "{},{:.16e}", coords.join(","), self.values[flat]) {
                err = Some(e);
            }
        });
        match err {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    }
}

/// Node average of the pointwise product, i.e. the measure-normalized L2 inner
/// product of two fields on the same grid.
pub fn mean_inner(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    let n = a.values.len() as f64;
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum::<f64>() / n)
}

/// Free-function form of [`ScalarField::reduce`].
pub fn reduce(f: &ScalarField, kind: Reduction) -> f64 {
    f.reduce(kind)
}

/// A velocity-like field: one scalar component per grid axis, all on one grid.
#[derive(Debug, Clone)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidGrid("vector field with no components".into()));
        }
        let grid = components[0].grid();
        if components.len() != grid.dim() {
            return Err(Error::InvalidGrid(format!(
                "{} components for a {}-dimensional grid",
                components.len(),
                grid.dim()
            )));
        }
        if components.iter().any(|c| c.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { components })
    }

    pub fn from_fns(grid: Arc<TorusGrid>, fs: &mut [&mut dyn FnMut(&[f64]) -> f64]) -> Result<Self> {
        let comps = fs
            .iter_mut()
            .map(|f| ScalarField::from_fn(Arc::clone(&grid), &mut **f))
            .collect();
        Self::new(comps)
    }

    pub fn grid(&self) -> &TorusGrid {
        self.components[0].grid()
    }

    pub fn grid_arc(&self) -> Arc<TorusGrid> {
        self.components[0].grid_arc()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, axis: usize) -> &ScalarField {
        &self.components[axis]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [ScalarField] {
        &mut self.components
    }

    /// Largest pointwise Euclidean magnitude over the nodes.
    pub fn max_speed(&self) -> f64 {
        let n = self.grid().len();
        let mut max = 0.0f64;
        for i in 0..n {
            let s: f64 = self.components.iter().map(|c| c.values()[i] * c.values()[i]).sum();
            max = max.max(s);
        }
        max.sqrt()
    }

    /// Mean of the squared magnitude.
    pub fn l2sq_mean(&self) -> f64 {
        self.components.iter().map(|c| c.l2sq_mean()).sum()
    }

    pub fn check_finite(&self, context: &'static str) -> Result<()> {
        for c in &self.components {
            c.check_finite(context)?;
        }
        Ok(())
    }
}

/// Unit vector in the grid's dimension; rejects zero and non-finite input.
pub fn unit_direction(dim: usize, e: &[f64]) -> Result<Vec<f64>> {
    if e.len() != dim {
        return Err(Error::InvalidParam {
            name: "direction",
            reason: format!("{} components for dimension {dim}", e.len()),
        });
    }
    if e.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite { context: "direction" });
    }
    let norm = e.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidParam { name: "direction", reason: "zero vector".into() });
    }
    Ok(e.iter().map(|c| c / norm).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Arc<TorusGrid> {
        Arc::new(TorusGrid::square(n).unwrap())
    }

    #[test]
    fn reduce_sine() {
        let f = ScalarField::from_fn(grid(32), |x| (2.0 * PI * x[0]).sin());
        assert!(f.reduce(Reduction::Mean).abs() < 1e-14);
        assert!((f.reduce(Reduction::L2SqMean) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn reduce_constant() {
        let f = ScalarField::constant(grid(16), 3.0);
        assert_eq!(f.reduce(Reduction::Mean), 3.0);
        assert_eq!(f.reduce(Reduction::L2SqMean), 9.0);
        assert_eq!(f.reduce(Reduction::Max), 3.0);
        assert_eq!(f.reduce(Reduction::Min), 3.0);
    }

    #[test]
    fn reduce_max_off_node_bound() {
        // Max of sin(2pi x) + 3 is 4; grid sampling error is bounded by the
        // squared spacing scale.
        for n in [8usize, 16, 32] {
            let f = ScalarField::from_fn(grid(n), |x| (2.0 * PI * x[0]).sin() + 3.0);
            let bound = (2.0 * PI / n as f64).powi(2);
            assert!((f.reduce(Reduction::Max) - 4.0).abs() <= bound);
        }
    }

    #[test]
    fn container_round_trip() {
        let g = Arc::new(TorusGrid::new(&[8, 16], &[1.0, 2.5]).unwrap());
        let f = ScalarField::from_fn(g, |x| x[0] + 7.0 * x[1] - 0.125);
        let mut buf = Vec::new();
        f.write_container(&mut buf).unwrap();
        let back = ScalarField::read_container(&mut buf.as_slice()).unwrap();
        assert_eq!(back.grid(), f.grid());
        assert_eq!(back.values(), f.values());
    }

    #[test]
    fn container_rejects_garbage() {
        let bytes = 9u64.to_le_bytes();
        assert!(ScalarField::read_container(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn unit_direction_normalizes() {
        let e = unit_direction(2, &[3.0, 4.0]).unwrap();
        assert!((e[0] - 0.6).abs() < 1e-15);
        assert!((e[1] - 0.8).abs() < 1e-15);
        assert!(unit_direction(2, &[0.0, 0.0]).is_err());
        assert!(unit_direction(3, &[1.0, 0.0]).is_err());
    }
}
