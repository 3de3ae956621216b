//! Trigonometric differentiation, Poisson inversion and dealiased products on
//! the torus.
//!
//! All spectra are stored as normalized Fourier coefficients in the same
//! row-major layout as the physical samples, so padding and truncation are
//! grid-size independent. Quadratic products use 3/2 zero padding, and real
//! data is kept real by re-enforcing conjugate symmetry after every forward
//! transform.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::TorusGrid;

/// Relative mean tolerance accepted by [`Spectral::solve_poisson`].
pub const POISSON_MEAN_TOL: f64 = 1e-10;

/// One Fourier mode as seen by multiplier closures: `k` holds the derivative
/// wavenumbers (Nyquist bins zeroed so odd multipliers keep real data real),
/// `ksq` the full |k|^2 including Nyquist.
pub struct Mode<'a> {
    pub ksq: f64,
    pub k: &'a [f64],
}

/// Spectral operator kernel bound to one grid. Cheap to clone (plans are
/// shared) and safe to use from multiple threads.
#[derive(Clone)]
pub struct Spectral {
    grid: Arc<TorusGrid>,
    k_deriv: Vec<Vec<f64>>,
    ksq_total: Vec<f64>,
    strides: Vec<usize>,
    padded_dims: Vec<usize>,
    plans: BTreeMap<usize, (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
}

fn signed_mode(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl Spectral {
    pub fn new(grid: Arc<TorusGrid>) -> Self {
        let d = grid.dim();
        let dims = grid.dims().to_vec();
        let padded_dims: Vec<usize> = dims.iter().map(|&n| 3 * n / 2).collect();

        let mut planner = FftPlanner::<f64>::new();
        let mut plans = BTreeMap::new();
        for &n in dims.iter().chain(padded_dims.iter()) {
            plans.entry(n).or_insert_with(|| {
                (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
            });
        }

        let mut k_full = Vec::with_capacity(d);
        let mut k_deriv = Vec::with_capacity(d);
        for a in 0..d {
            let n = dims[a];
            let scale = 2.0 * PI / grid.periods()[a];
            let full: Vec<f64> = (0..n).map(|i| scale * signed_mode(i, n) as f64).collect();
            let mut deriv = full.clone();
            deriv[n / 2] = 0.0;
            k_full.push(full);
            k_deriv.push(deriv);
        }

        let mut strides = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }

        let mut ksq_total = vec![0.0f64; grid.len()];
        for (flat, ksq) in ksq_total.iter_mut().enumerate() {
            let mut s = 0.0;
            for a in 0..d {
                let ia = (flat / strides[a]) % dims[a];
                s += k_full[a][ia] * k_full[a][ia];
            }
            *ksq = s;
        }

        Self { grid, k_deriv, ksq_total, strides, padded_dims, plans }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<TorusGrid> {
        Arc::clone(&self.grid)
    }

    fn fft_axis(&self, data: &mut [C64], dims: &[usize], axis: usize, inverse: bool) {
        let n = dims[axis];
        let stride: usize = dims[axis + 1..].iter().product();
        let block = n * stride;
        let count = data.len() / block;
        let plan = {
            let (f, i) = &self.plans[&n];
            if inverse { Arc::clone(i) } else { Arc::clone(f) }
        };
        let mut line = vec![C64::new(0.0, 0.0); n];
        let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for outer in 0..count {
            let base = outer * block;
            for inner in 0..stride {
                for (j, l) in line.iter_mut().enumerate() {
                    *l = data[base + inner + j * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (j, l) in line.iter().enumerate() {
                    data[base + inner + j * stride] = *l;
                }
            }
        }
    }

    fn fft_nd(&self, data: &mut [C64], dims: &[usize], inverse: bool) {
        for axis in 0..dims.len() {
            self.fft_axis(data, dims, axis, inverse);
        }
    }

    fn conj_symmetrize(data: &mut [C64], dims: &[usize]) {
        let d = dims.len();
        let mut strides = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        for flat in 0..data.len() {
            let mut mirror = 0usize;
            for a in 0..d {
                let ia = (flat / strides[a]) % dims[a];
                let ma = (dims[a] - ia) % dims[a];
                mirror += ma * strides[a];
            }
            if mirror == flat {
                data[flat].im = 0.0;
            } else if mirror > flat {
                let avg = 0.5 * (data[flat] + data[mirror].conj());
                data[flat] = avg;
                data[mirror] = avg.conj();
            }
        }
    }

    /// Physical samples to normalized, conjugate-symmetric coefficients.
    pub fn forward(&self, values: &[f64]) -> Vec<C64> {
        let mut data: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.fft_nd(&mut data, self.grid.dims(), false);
        let scale = 1.0 / values.len() as f64;
        for c in &mut data {
            *c *= scale;
        }
        Self::conj_symmetrize(&mut data, self.grid.dims());
        data
    }

    /// Normalized coefficients back to physical samples on the main grid.
    pub fn inverse(&self, mut spec: Vec<C64>) -> Vec<f64> {
        self.fft_nd(&mut spec, self.grid.dims(), true);
        spec.into_iter().map(|c| c.re).collect()
    }

    fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.strides[axis]) % self.grid.dims()[axis]
    }

    /// Multiply a spectrum by i*k along one axis (Nyquist zeroed).
    pub(crate) fn mul_ik_axis(&self, spec: &mut [C64], axis: usize) {
        for (flat, c) in spec.iter_mut().enumerate() {
            let k = self.k_deriv[axis][self.axis_index(flat, axis)];
            *c = C64::new(-k * c.im, k * c.re);
        }
    }

    /// Precompute a pointwise Fourier multiplier table.
    pub fn multiplier_table(&self, f: impl Fn(Mode) -> C64) -> Vec<C64> {
        let d = self.grid.dim();
        let mut k = vec![0.0f64; d];
        (0..self.grid.len())
            .map(|flat| {
                for a in 0..d {
                    k[a] = self.k_deriv[a][self.axis_index(flat, a)];
                }
                f(Mode { ksq: self.ksq_total[flat], k: &k })
            })
            .collect()
    }

    /// Apply a precomputed multiplier table to physical samples.
    pub fn apply_table(&self, values: &[f64], table: &[C64]) -> Vec<f64> {
        let mut c = self.forward(values);
        for (ci, m) in c.iter_mut().zip(table) {
            *ci *= m;
        }
        self.inverse(c)
    }

    /// Spectral gradient; exact for trigonometric polynomials below Nyquist.
    pub fn gradient(&self, f: &ScalarField) -> Result<VectorField> {
        self.check_grid(f.grid())?;
        f.check_finite("gradient")?;
        let c = self.forward(f.values());
        let d = self.grid.dim();
        let mut comps = Vec::with_capacity(d);
        for a in 0..d {
            let mut ca = c.clone();
            self.mul_ik_axis(&mut ca, a);
            comps.push(ScalarField::new(self.grid_arc(), self.inverse(ca))?);
        }
        VectorField::new(comps)
    }

    /// Sum of spectral partials of the components.
    pub fn divergence(&self, v: &VectorField) -> Result<ScalarField> {
        self.check_grid(v.grid())?;
        v.check_finite("divergence")?;
        let d = self.grid.dim();
        let mut acc = vec![C64::new(0.0, 0.0); self.grid.len()];
        for a in 0..d {
            let mut ca = self.forward(v.component(a).values());
            self.mul_ik_axis(&mut ca, a);
            for (s, c) in acc.iter_mut().zip(ca) {
                *s += c;
            }
        }
        ScalarField::new(self.grid_arc(), self.inverse(acc))
    }

    pub fn laplacian(&self, f: &ScalarField) -> Result<ScalarField> {
        self.check_grid(f.grid())?;
        let mut c = self.forward(f.values());
        for (ci, ksq) in c.iter_mut().zip(&self.ksq_total) {
            *ci *= -ksq;
        }
        ScalarField::new(self.grid_arc(), self.inverse(c))
    }

    /// Directional derivative e . grad f with constant e.
    pub fn directional_derivative(&self, f: &ScalarField, e: &[f64]) -> Result<ScalarField> {
        self.check_grid(f.grid())?;
        let mut c = self.forward(f.values());
        let d = self.grid.dim();
        for (flat, ci) in c.iter_mut().enumerate() {
            let mut ek = 0.0;
            for a in 0..d {
                ek += e[a] * self.k_deriv[a][self.axis_index(flat, a)];
            }
            *ci = C64::new(-ek * ci.im, ek * ci.re);
        }
        ScalarField::new(self.grid_arc(), self.inverse(c))
    }

    /// Mean-zero solution of -lap f = g; rejects right sides with a
    /// relative mean above [`POISSON_MEAN_TOL`].
    pub fn solve_poisson(&self, g: &ScalarField) -> Result<ScalarField> {
        self.check_grid(g.grid())?;
        g.check_finite("solve_poisson")?;
        let mean = g.mean();
        let scale = g.l2_norm();
        if scale == 0.0 {
            return Ok(ScalarField::zeros(self.grid_arc()));
        }
        let relative = mean.abs() / scale;
        if relative > POISSON_MEAN_TOL {
            return Err(Error::NonZeroMean { mean, relative, limit: POISSON_MEAN_TOL });
        }
        let mut c = self.forward(g.values());
        for (flat, ci) in c.iter_mut().enumerate() {
            let ksq = self.ksq_total[flat];
            if ksq == 0.0 {
                *ci = C64::new(0.0, 0.0);
            } else {
                *ci /= ksq;
            }
        }
        ScalarField::new(self.grid_arc(), self.inverse(c))
    }

    /// Zero every mode with max-norm index above `cutoff` (and the mean).
    pub fn project_band(&self, f: &ScalarField, cutoff: usize) -> Result<ScalarField> {
        self.check_grid(f.grid())?;
        let mut c = self.forward(f.values());
        let dims = self.grid.dims();
        for (flat, ci) in c.iter_mut().enumerate() {
            let mut keep = flat != 0;
            for a in 0..dims.len() {
                let m = signed_mode(self.axis_index(flat, a), dims[a]).unsigned_abs() as usize;
                if m > cutoff {
                    keep = false;
                }
            }
            if !keep {
                *ci = C64::new(0.0, 0.0);
            }
        }
        ScalarField::new(self.grid_arc(), self.inverse(c))
    }

    pub(crate) fn padded_len(&self) -> usize {
        self.padded_dims.iter().product()
    }

    fn pad_axis(src: &[C64], dims: &mut Vec<usize>, axis: usize, new_n: usize) -> Vec<C64> {
        let n = dims[axis];
        let stride: usize = dims[axis + 1..].iter().product();
        let pre: usize = dims[..axis].iter().product();
        let mut out = vec![C64::new(0.0, 0.0); src.len() / n * new_n];
        for p in 0..pre {
            for j in 0..n {
                let src_base = (p * n + j) * stride;
                let mode = signed_mode(j, n);
                if j == n / 2 {
                    // Nyquist bin splits into +n/2 and -n/2 halves
                    for (tj, w) in [(n / 2, 0.5), (new_n - n / 2, 0.5)] {
                        let dst_base = (p * new_n + tj) * stride;
                        for s in 0..stride {
                            out[dst_base + s] += w * src[src_base + s];
                        }
                    }
                } else {
                    let tj = if mode >= 0 { j } else { new_n - (n - j) };
                    let dst_base = (p * new_n + tj) * stride;
                    out[dst_base..dst_base + stride].copy_from_slice(&src[src_base..src_base + stride]);
                }
            }
        }
        dims[axis] = new_n;
        out
    }

    fn truncate_axis(src: &[C64], dims: &mut Vec<usize>, axis: usize, new_n: usize) -> Vec<C64> {
        let n = dims[axis];
        let stride: usize = dims[axis + 1..].iter().product();
        let pre: usize = dims[..axis].iter().product();
        let mut out = vec![C64::new(0.0, 0.0); src.len() / n * new_n];
        for p in 0..pre {
            for tj in 0..new_n {
                let dst_base = (p * new_n + tj) * stride;
                if tj == new_n / 2 {
                    // fold the +-Nyquist pair of the fine spectrum
                    for sj in [new_n / 2, n - new_n / 2] {
                        let src_base = (p * n + sj) * stride;
                        for s in 0..stride {
                            out[dst_base + s] += src[src_base + s];
                        }
                    }
                } else {
                    let mode = signed_mode(tj, new_n);
                    let sj = if mode >= 0 { tj } else { n - (new_n - tj) };
                    let src_base = (p * n + sj) * stride;
                    out[dst_base..dst_base + stride].copy_from_slice(&src[src_base..src_base + stride]);
                }
            }
        }
        dims[axis] = new_n;
        out
    }

    /// Zero-pad a main-grid spectrum to the 3/2 grid and return samples there.
    pub fn to_padded_physical(&self, spec: &[C64]) -> Vec<f64> {
        let mut dims = self.grid.dims().to_vec();
        let mut cur = spec.to_vec();
        for a in 0..dims.len() {
            cur = Self::pad_axis(&cur, &mut dims, a, self.padded_dims[a]);
        }
        self.fft_nd(&mut cur, &self.padded_dims, true);
        cur.into_iter().map(|c| c.re).collect()
    }

    /// Transform 3/2-grid samples and truncate back to the main-grid spectrum.
    pub fn from_padded_physical(&self, phys: &[f64]) -> Vec<C64> {
        let mut data: Vec<C64> = phys.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.fft_nd(&mut data, &self.padded_dims, false);
        let scale = 1.0 / phys.len() as f64;
        for c in &mut data {
            *c *= scale;
        }
        Self::conj_symmetrize(&mut data, &self.padded_dims);
        let mut dims = self.padded_dims.clone();
        let mut cur = data;
        for a in 0..dims.len() {
            cur = Self::truncate_axis(&cur, &mut dims, a, self.grid.dims()[a]);
        }
        cur
    }

    /// Dealiased pointwise product via the 3/2 rule.
    pub fn multiply(&self, a: &ScalarField, b: &ScalarField) -> Result<ScalarField> {
        self.check_grid(a.grid())?;
        self.check_grid(b.grid())?;
        let pa = self.to_padded_physical(&self.forward(a.values()));
        let pb = self.to_padded_physical(&self.forward(b.values()));
        let prod: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let spec = self.from_padded_physical(&prod);
        ScalarField::new(self.grid_arc(), self.inverse(spec))
    }

    /// Convenience u . grad f with a freshly padded velocity; solvers should
    /// hold an [`Advection`] instead.
    pub fn advect(&self, u: &VectorField, f: &ScalarField) -> Result<ScalarField> {
        Advection::new(self, u)?.apply(f)
    }

    fn check_grid(&self, other: &TorusGrid) -> Result<()> {
        if *other != *self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

/// u . grad with the velocity cached on the 3/2 grid, for repeated application.
#[derive(Clone)]
pub struct Advection {
    spectral: Spectral,
    u_padded: Vec<Vec<f64>>,
}

impl Advection {
    pub fn new(spectral: &Spectral, u: &VectorField) -> Result<Self> {
        spectral.check_grid(u.grid())?;
        u.check_finite("advect velocity")?;
        let u_padded = u
            .components()
            .iter()
            .map(|c| spectral.to_padded_physical(&spectral.forward(c.values())))
            .collect();
        Ok(Self { spectral: spectral.clone(), u_padded })
    }

    /// Dealiased u . grad f.
    pub fn apply(&self, f: &ScalarField) -> Result<ScalarField> {
        self.spectral.check_grid(f.grid())?;
        f.check_finite("advect")?;
        Ok(self.apply_values(f.values()))
    }

    pub(crate) fn apply_values(&self, values: &[f64]) -> ScalarField {
        let sp = &self.spectral;
        let c = sp.forward(values);
        let mut acc = vec![0.0f64; sp.padded_len()];
        for (a, ua) in self.u_padded.iter().enumerate() {
            let mut ca = c.clone();
            sp.mul_ik_axis(&mut ca, a);
            let da = sp.to_padded_physical(&ca);
            for ((s, &u), &g) in acc.iter_mut().zip(ua).zip(&da) {
                *s += u * g;
            }
        }
        let spec = sp.from_padded_physical(&acc);
        ScalarField::new(sp.grid_arc(), sp.inverse(spec)).expect("grid preserved")
    }
}

/// Multiplication by a fixed coefficient field, dealiased, for repeated use.
#[derive(Clone)]
pub struct DealiasedMultiplier {
    spectral: Spectral,
    coeff_padded: Vec<f64>,
}

impl DealiasedMultiplier {
    pub fn new(spectral: &Spectral, coeff: &ScalarField) -> Result<Self> {
        spectral.check_grid(coeff.grid())?;
        let coeff_padded = spectral.to_padded_physical(&spectral.forward(coeff.values()));
        Ok(Self { spectral: spectral.clone(), coeff_padded })
    }

    pub fn apply(&self, f: &ScalarField) -> Result<ScalarField> {
        self.spectral.check_grid(f.grid())?;
        Ok(self.apply_values(f.values()))
    }

    pub(crate) fn apply_values(&self, values: &[f64]) -> ScalarField {
        let sp = &self.spectral;
        let pf = sp.to_padded_physical(&sp.forward(values));
        let prod: Vec<f64> = pf.iter().zip(&self.coeff_padded).map(|(x, y)| x * y).collect();
        let spec = sp.from_padded_physical(&prod);
        ScalarField::new(sp.grid_arc(), sp.inverse(spec)).expect("grid preserved")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spectral2(n: usize) -> Spectral {
        Spectral::new(Arc::new(TorusGrid::square(n).unwrap()))
    }

    fn rel_err(got: &[f64], want: &[f64]) -> f64 {
        let scale = want.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
        got.iter()
            .zip(want)
            .fold(0.0f64, |m, (g, w)| m.max((g - w).abs()))
            / scale
    }

    #[test]
    fn gradient_single_mode() {
        let sp = spectral2(32);
        let f = ScalarField::from_fn(sp.grid_arc(), |x| (2.0 * PI * x[0]).sin());
        let g = sp.gradient(&f).unwrap();
        let want0 = ScalarField::from_fn(sp.grid_arc(), |x| 2.0 * PI * (2.0 * PI * x[0]).cos());
        assert!(rel_err(g.component(0).values(), want0.values()) < 1e-12);
        assert!(g.component(1).max_abs() < 1e-12);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let sp = spectral2(16);
        let f = ScalarField::constant(sp.grid_arc(), 4.25);
        let g = sp.gradient(&f).unwrap();
        assert!(g.component(0).max_abs() < 1e-13);
        assert!(g.component(1).max_abs() < 1e-13);
    }

    #[test]
    fn gradient_energy_of_product_mode() {
        // f = sin(2pi x1) sin(2pi x2): mean |grad f|^2 = 2 pi^2, cross-checked
        // against quadrature of the analytic gradient on the same nodes.
        let sp = spectral2(64);
        let f = ScalarField::from_fn(sp.grid_arc(), |x| {
            (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin()
        });
        let g = sp.gradient(&f).unwrap();
        let energy = g.l2sq_mean();
        let analytic = ScalarField::from_fn(sp.grid_arc(), |x| {
            let gx = 2.0 * PI * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin();
            let gy = 2.0 * PI * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos();
            gx * gx + gy * gy
        });
        let quadrature = analytic.mean();
        assert_abs_diff_eq!(energy, 2.0 * PI * PI, epsilon = 1e-11);
        assert_abs_diff_eq!(quadrature, 2.0 * PI * PI, epsilon = 1e-11);
    }

    #[test]
    fn divergence_of_perp_gradient_vanishes() {
        let sp = spectral2(32);
        let h = ScalarField::from_fn(sp.grid_arc(), |x| {
            (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin()
        });
        let g = sp.gradient(&h).unwrap();
        let perp = VectorField::new(vec![g.component(1).scaled(-1.0), g.component(0).clone()])
            .unwrap();
        let div = sp.divergence(&perp).unwrap();
        assert!(div.max_abs() < 1e-11);
    }

    #[test]
    fn divergence_of_constants_is_zero() {
        let sp = spectral2(16);
        let v = VectorField::new(vec![
            ScalarField::constant(sp.grid_arc(), 1.5),
            ScalarField::constant(sp.grid_arc(), -0.5),
        ])
        .unwrap();
        assert!(sp.divergence(&v).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn divergence_of_single_mode() {
        let sp = spectral2(32);
        let v = VectorField::new(vec![
            ScalarField::from_fn(sp.grid_arc(), |x| (2.0 * PI * x[0]).sin()),
            ScalarField::zeros(sp.grid_arc()),
        ])
        .unwrap();
        let div = sp.divergence(&v).unwrap();
        let want = ScalarField::from_fn(sp.grid_arc(), |x| 2.0 * PI * (2.0 * PI * x[0]).cos());
        assert!(rel_err(div.values(), want.values()) < 1e-12);
    }

    #[test]
    fn advect_constant_velocity() {
        let sp = spectral2(32);
        let u = VectorField::new(vec![
            ScalarField::constant(sp.grid_arc(), 1.0),
            ScalarField::zeros(sp.grid_arc()),
        ])
        .unwrap();
        let f = ScalarField::from_fn(sp.grid_arc(), |x| (2.0 * PI * x[0]).sin());
        let a = sp.advect(&u, &f).unwrap();
        let want = ScalarField::from_fn(sp.grid_arc(), |x| 2.0 * PI * (2.0 * PI * x[0]).cos());
        assert!(rel_err(a.values(), want.values()) < 1e-12);
    }

    #[test]
    fn advect_along_level_sets_vanishes() {
        // u = perp-grad H is tangent to level sets of H, so u . grad H = 0.
        let sp = spectral2(32);
        let h = ScalarField::from_fn(sp.grid_arc(), |x| {
            (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin()
        });
        let g = sp.gradient(&h).unwrap();
        let u = VectorField::new(vec![g.component(1).scaled(-1.0), g.component(0).clone()])
            .unwrap();
        let a = sp.advect(&u, &h).unwrap();
        assert!(a.max_abs() < 1e-11);
    }

    #[test]
    fn advect_has_zero_mean_for_solenoidal_velocity() {
        let sp = spectral2(32);
        let h = ScalarField::from_fn(sp.grid_arc(), |x| {
            (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin()
        });
        let g = sp.gradient(&h).unwrap();
        let u = VectorField::new(vec![g.component(1).scaled(-1.0), g.component(0).clone()])
            .unwrap();
        // a non-trivial multi-mode field
        let f = ScalarField::from_fn(sp.grid_arc(), |x| {
            (2.0 * PI * x[0]).cos() + 0.3 * (4.0 * PI * (x[0] + x[1])).sin()
                - 0.2 * (6.0 * PI * x[1]).cos()
        });
        let a = sp.advect(&u, &f).unwrap();
        let grad_f = sp.gradient(&f).unwrap();
        let bound = 1e-10 * u.max_speed() * grad_f.l2sq_mean().sqrt();
        assert!(a.mean().abs() <= bound.max(1e-14));
    }

    #[test]
    fn poisson_single_mode() {
        let sp = spectral2(32);
        let g = ScalarField::from_fn(sp.grid_arc(), |x| (2.0 * PI * x[1]).sin());
        let f = sp.solve_poisson(&g).unwrap();
        let want = ScalarField::from_fn(sp.grid_arc(), |x| {
            (2.0 * PI * x[1]).sin() / (4.0 * PI * PI)
        });
        assert!(rel_err(f.values(), want.values()) < 1e-12);
    }

    #[test]
    fn poisson_of_zero_is_zero() {
        let sp = spectral2(16);
        let f = sp.solve_poisson(&ScalarField::zeros(sp.grid_arc())).unwrap();
        assert_eq!(f.max_abs(), 0.0);
    }

    #[test]
    fn poisson_rejects_nonzero_mean() {
        let sp = spectral2(16);
        let g = ScalarField::from_fn(sp.grid_arc(), |x| 1.0 + (2.0 * PI * x[0]).sin());
        match sp.solve_poisson(&g) {
            Err(Error::NonZeroMean { mean, .. }) => assert!((mean - 1.0).abs() < 1e-12),
            other => panic!("expected NonZeroMean, got {other:?}"),
        }
    }

    #[test]
    fn dealiased_product_drops_unresolved_modes() {
        // sin(10 pi x) * sin(12 pi x) has modes 1 and 11 on the unit torus; at
        // n = 16 only mode 1 is representable, so the dealiased product must
        // equal cos(2 pi x)/2 with the mode-11 part removed, not aliased.
        let sp = spectral2(16);
        let a = ScalarField::from_fn(sp.grid_arc(), |x| (10.0 * PI * x[0]).sin());
        let b = ScalarField::from_fn(sp.grid_arc(), |x| (12.0 * PI * x[0]).sin());
        let p = sp.multiply(&a, &b).unwrap();
        let want = ScalarField::from_fn(sp.grid_arc(), |x| 0.5 * (2.0 * PI * x[0]).cos());
        assert!(rel_err(p.values(), want.values()) < 1e-12);
    }

    #[test]
    fn multiply_by_one_is_identity() {
        let sp = spectral2(16);
        let f = ScalarField::from_fn(sp.grid_arc(), |x| {
            (2.0 * PI * x[0]).sin() + (4.0 * PI * x[1]).cos()
        });
        let one = ScalarField::constant(sp.grid_arc(), 1.0);
        let p = sp.multiply(&f, &one).unwrap();
        assert!(rel_err(p.values(), f.values()) < 1e-13);
    }

    #[test]
    fn works_in_three_dimensions() {
        let grid = Arc::new(TorusGrid::cube(8, 2.0 * PI).unwrap());
        let sp = Spectral::new(grid);
        let f = ScalarField::from_fn(sp.grid_arc(), |x| x[2].sin() * x[0].cos());
        let g = sp.gradient(&f).unwrap();
        let want2 = ScalarField::from_fn(sp.grid_arc(), |x| x[2].cos() * x[0].cos());
        assert!(rel_err(g.component(2).values(), want2.values()) < 1e-12);
        let lap = sp.laplacian(&f).unwrap();
        let want_lap = ScalarField::from_fn(sp.grid_arc(), |x| -2.0 * x[2].sin() * x[0].cos());
        assert!(rel_err(lap.values(), want_lap.values()) < 1e-12);
    }

    #[test]
    fn band_projection_removes_high_modes() {
        let sp = spectral2(32);
        let f = ScalarField::from_fn(sp.grid_arc(), |x| {
            (2.0 * PI * x[0]).sin() + (20.0 * PI * x[1]).sin()
        });
        let p = sp.project_band(&f, 4).unwrap();
        let want = ScalarField::from_fn(sp.grid_arc(), |x| (2.0 * PI * x[0]).sin());
        assert!(rel_err(p.values(), want.values()) < 1e-12);
    }
}
