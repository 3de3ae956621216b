//! Corrector cell problem and effective diffusivity assembly.
//!
//! For a validated flow u, amplitude A and unit direction e, the corrector is
//! the mean-zero periodic solution of
//!
//! ```text
//! -lap(chi) + A u . grad(chi) = A u . e
//! ```
//!
//! solved matrix-free by restarted GMRES. The effective diffusivity matrix is
//! the identity plus the Gram matrix of the corrector gradients, and the
//! directional value is cross-checked between its two algebraically equal
//! forms (with and without the cross term).


use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::field::{mean_inner, ScalarField, VectorField};
use crate::flows::{build_flow, FlowField, FlowSpec};
use crate::grid::TorusGrid;
use crate::krylov::{gmres, GmresOptions, LinOp};
use crate::numeric::symmetric_eigenvalues;
use crate::spectral::{Advection, Spectral};

/// One converged corrector solve.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub corrector: ScalarField,
    pub direction: Vec<f64>,
    pub amplitude: f64,
    /// relative L2 residual of the cell equation
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Effective diffusivity matrix and the directional value for one direction.
#[derive(Debug, Clone)]
pub struct DiffusivityResult {
    /// dim x dim row-major symmetric matrix
    pub matrix: Vec<f64>,
    /// directional diffusivity e . sigma e for the requested direction
    pub directional: f64,
    pub direction: Vec<f64>,
    pub amplitude: f64,
    /// basis correctors (plus the requested direction's when non-canonical)
    pub cells: Vec<CellSolution>,
    /// relative gap between the cross-term and gradient-energy forms
    pub formula_agreement: f64,
    pub resolution: Vec<usize>,
    pub converged: bool,
}

impl DiffusivityResult {
    pub fn min_eigenvalue(&self) -> f64 {
        let n = self.direction.len();
        symmetric_eigenvalues(&self.matrix, n)[0]
    }

    pub fn symmetry_defect(&self) -> f64 {
        let n = self.direction.len();
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                num += (self.matrix[i * n + j] - self.matrix[j * n + i]).powi(2);
                den += self.matrix[i * n + j].powi(2);
            }
        }
        (num / den.max(1e-300)).sqrt()
    }
}

pub const CELL_TOL_MIN: f64 = 1e-12;
pub const CELL_TOL_MAX: f64 = 1e-4;

/// Reusable solver context for one flow: spectral kernel, cached padded
/// velocity and the velocity scale that shapes the preconditioner.
pub struct CellSolver {
    spectral: Spectral,
    advection: Advection,
    u_components: Vec<Vec<f64>>,
    max_speed: f64,
}

struct CellOperator<'a> {
    solver: &'a CellSolver,
    amplitude: f64,
}

impl LinOp for CellOperator<'_> {
    fn len(&self) -> usize {
        self.solver.spectral.grid().len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let sp = &self.solver.spectral;
        let f = ScalarField::new(sp.grid_arc(), x.to_vec()).expect("length checked");
        let lap = sp.laplacian(&f).expect("grid matches");
        let adv = self.solver.advection.apply_values(x);
        let n = x.len() as f64;
        let mut mean = 0.0;
        for i in 0..x.len() {
            y[i] = -lap.values()[i] + self.amplitude * adv.values()[i];
            mean += y[i];
        }
        // the corrector is defined modulo constants; keep the Krylov space in
        // the mean-zero complement
        mean /= n;
        for v in y.iter_mut() {
            *v -= mean;
        }
    }
}

struct TablePrecond<'a> {
    spectral: &'a Spectral,
    table: Vec<C64>,
}

impl LinOp for TablePrecond<'_> {
    fn len(&self) -> usize {
        self.spectral.grid().len()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let out = self.spectral.apply_table(x, &self.table);
        y.copy_from_slice(&out);
    }
}

impl CellSolver {
    pub fn new(flow: &FlowField) -> Result<Self> {
        flow.require_valid()?;
        let spectral = Spectral::new(flow.grid_arc());
        let advection = Advection::new(&spectral, &flow.velocity)?;
        let u_components = flow
            .velocity
            .components()
            .iter()
            .map(|c| c.values().to_vec())
            .collect();
        Ok(Self { spectral, advection, u_components, max_speed: flow.max_speed() })
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// Inverse-Laplacian preconditioner on the mean-zero complement, with a
    /// first-order shift q|k| that balances the advective part of the symbol
    /// at amplitude A (q = 0 recovers the plain inverse Laplacian).
    fn precond_table(&self, amplitude: f64) -> Vec<C64> {
        let q = amplitude.abs() * self.max_speed;
        self.spectral.multiplier_table(|m| {
            if m.ksq == 0.0 {
                C64::new(0.0, 0.0)
            } else {
                C64::new(1.0 / (m.ksq + q * m.ksq.sqrt()), 0.0)
            }
        })
    }

    /// Solve the cell problem for one (A, e), optionally warm-started.
    pub fn solve(
        &self,
        amplitude: f64,
        e: &[f64],
        tol: f64,
        warm: Option<&ScalarField>,
    ) -> Result<CellSolution> {
        if !(CELL_TOL_MIN..=CELL_TOL_MAX).contains(&tol) {
            return Err(Error::InvalidParam {
                name: "tol",
                reason: format!("{tol:e} outside [{CELL_TOL_MIN:e}, {CELL_TOL_MAX:e}]"),
            });
        }
        let grid = self.spectral.grid_arc();
        let e = crate::field::unit_direction(grid.dim(), e)?;
        if amplitude == 0.0 {
            return Ok(CellSolution {
                corrector: ScalarField::zeros(grid),
                direction: e,
                amplitude,
                residual: 0.0,
                iterations: 0,
                converged: true,
            });
        }

        // right side A u . e, projected to mean zero
        let mut b = vec![0.0f64; grid.len()];
        for (a, ea) in e.iter().enumerate() {
            if *ea != 0.0 {
                for (bi, ui) in b.iter_mut().zip(&self.u_components[a]) {
                    *bi += amplitude * ea * ui;
                }
            }
        }
        let mean = b.iter().sum::<f64>() / b.len() as f64;
        for v in &mut b {
            *v -= mean;
        }

        let op = CellOperator { solver: self, amplitude };
        let pre = TablePrecond { spectral: &self.spectral, table: self.precond_table(amplitude) };
        let opts = GmresOptions { restart: 50, max_iterations: 10_000, tol };
        let x0: Option<Vec<f64>> = warm.map(|w| {
            let mut v = w.values().to_vec();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            for vi in &mut v {
                *vi -= m;
            }
            v
        });
        let (mut x, stats) = gmres(&op, Some(&pre), &b, x0.as_deref(), &opts);
        let m = x.iter().sum::<f64>() / x.len() as f64;
        for v in &mut x {
            *v -= m;
        }
        let corrector = ScalarField::new(self.spectral.grid_arc(), x)?;
        Ok(CellSolution {
            corrector,
            direction: e,
            amplitude,
            residual: stats.residual,
            iterations: stats.iterations,
            converged: stats.converged,
        })
    }

}

/// Solve the cell problem for one (flow, A, e).
pub fn solve_cell_problem(
    flow: &FlowField,
    amplitude: f64,
    e: &[f64],
    tol: f64,
) -> Result<CellSolution> {
    CellSolver::new(flow)?.solve(amplitude, e, tol, None)
}

/// Assemble the effective diffusivity matrix from canonical-basis correctors
/// (plus a dedicated solve when `e` is not canonical) and return the
/// directional diffusivity with its two-form agreement.
pub fn diffusivity(flow: &FlowField, amplitude: f64, e: &[f64], tol: f64) -> Result<DiffusivityResult> {
    let solver = CellSolver::new(flow)?;
    diffusivity_with(&solver, flow, amplitude, e, tol, None)
}

/// Warm-startable variant used by sweeps; `warm` holds per-basis-direction
/// correctors from a previous amplitude.
pub fn diffusivity_with(
    solver: &CellSolver,
    flow: &FlowField,
    amplitude: f64,
    e: &[f64],
    tol: f64,
    warm: Option<&[ScalarField]>,
) -> Result<DiffusivityResult> {
    let grid = flow.grid_arc();
    let d = grid.dim();
    let e = crate::field::unit_direction(d, e)?;
    let sp = solver.spectral();

    let mut cells = Vec::with_capacity(d + 1);
    let mut grads: Vec<VectorField> = Vec::with_capacity(d);
    for a in 0..d {
        let mut basis = vec![0.0; d];
        basis[a] = 1.0;
        let w = warm.and_then(|ws| ws.get(a));
        let cell = solver.solve(amplitude, &basis, tol, w)?;
        grads.push(sp.gradient(&cell.corrector)?);
        cells.push(cell);
    }

    let mut matrix = vec![0.0f64; d * d];
    for i in 0..d {
        for j in i..d {
            let mut g = 0.0;
            for a in 0..d {
                g += mean_inner(grads[i].component(a), grads[j].component(a))?;
            }
            let v = if i == j { 1.0 + g } else { g };
            matrix[i * d + j] = v;
            matrix[j * d + i] = v;
        }
    }

    // Directional corrector: reuse the basis solve when e is canonical.
    let canonical = (0..d).find(|&a| {
        e.iter()
            .enumerate()
            .all(|(b, &c)| if b == a { (c - 1.0).abs() < 1e-14 } else { c.abs() < 1e-14 })
    });
    let (chi_grad, extra_cell) = match canonical {
        Some(a) => (grads[a].clone(), None),
        None => {
            let cell = solver.solve(amplitude, &e, tol, None)?;
            let g = sp.gradient(&cell.corrector)?;
            (g, Some(cell))
        }
    };

    // Gradient-energy form and full cross-term form of the directional value.
    let mut grad_sq = 0.0;
    let mut cross = 0.0;
    for a in 0..d {
        grad_sq += chi_grad.component(a).l2sq_mean();
        cross += e[a] * chi_grad.component(a).mean();
    }
    let reduced = 1.0 + grad_sq;
    let full = 1.0 + 2.0 * cross + grad_sq;
    let formula_agreement = (full - reduced).abs() / reduced;

    // e . sigma e from the assembled matrix (polarization route).
    let mut via_matrix = 0.0;
    for i in 0..d {
        for j in 0..d {
            via_matrix += e[i] * matrix[i * d + j] * e[j];
        }
    }
    let directional = reduced;
    let matrix_agreement = (via_matrix - directional).abs() / directional;

    if let Some(cell) = extra_cell {
        cells.push(cell);
    }
    let converged = cells.iter().all(|c| c.converged);
    if !converged {
        let worst = cells.iter().map(|c| c.residual).fold(0.0f64, f64::max);
        return Err(Error::NotConverged {
            context: format!("cell problem for {} at A={amplitude}", flow.spec.id()),
            residual: worst,
            iterations: cells.iter().map(|c| c.iterations).max().unwrap_or(0),
        });
    }

    Ok(DiffusivityResult {
        matrix,
        directional,
        direction: e,
        amplitude,
        cells,
        formula_agreement: formula_agreement.max(matrix_agreement),
        resolution: grid.dims().to_vec(),
        converged,
    })
}

/// Directional diffusivity from a single corrector solve, without assembling
/// the matrix. Used by amplitude sweeps and the direction classifier.
#[derive(Debug, Clone)]
pub struct DirectionalDiffusivity {
    pub amplitude: f64,
    pub value: f64,
    pub cell: CellSolution,
}

/// Directional diffusivities along an increasing amplitude schedule with
/// warm-started correctors; amplitudes above 100 get geometric intermediate
/// stops so each warm start stays close.
pub fn directional_sweep(
    flow: &FlowField,
    amplitudes: &[f64],
    e: &[f64],
    tol: f64,
) -> Result<Vec<DirectionalDiffusivity>> {
    if amplitudes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParam {
            name: "amplitudes",
            reason: "must be strictly increasing".into(),
        });
    }
    let solver = CellSolver::new(flow)?;
    let sp = solver.spectral();
    let mut warm: Option<ScalarField> = None;
    let mut last_amp = 0.0f64;
    let mut out = Vec::with_capacity(amplitudes.len());
    for &amp in amplitudes {
        let mut schedule = Vec::new();
        if amp > 100.0 && last_amp > 0.0 && amp / last_amp > 2.5 {
            let mut a = last_amp * 2.0;
            while a < amp * 0.75 {
                schedule.push(a);
                a *= 2.0;
            }
        }
        schedule.push(amp);
        let mut cell = None;
        for a in schedule {
            let c = solver.solve(a, e, tol, warm.as_ref())?;
            warm = Some(c.corrector.clone());
            cell = Some(c);
        }
        let cell = cell.expect("schedule is nonempty");
        if !cell.converged {
            return Err(Error::NotConverged {
                context: format!("cell problem for {} at A={amp}", flow.spec.id()),
                residual: cell.residual,
                iterations: cell.iterations,
            });
        }
        let grad = sp.gradient(&cell.corrector)?;
        let value = 1.0 + grad.l2sq_mean();
        last_amp = amp;
        out.push(DirectionalDiffusivity { amplitude: amp, value, cell });
    }
    Ok(out)
}

/// Diffusivities along an increasing amplitude schedule, warm-starting each
/// solve from the previous correctors. Above amplitude 100 the schedule is
/// densified geometrically so warm starts stay close.
pub fn diffusivity_sweep(
    flow: &FlowField,
    amplitudes: &[f64],
    e: &[f64],
    tol: f64,
) -> Result<Vec<DiffusivityResult>> {
    let solver = CellSolver::new(flow)?;
    let d = flow.dim();
    let mut warm: Option<Vec<ScalarField>> = None;
    let mut last_amp = 0.0f64;
    let mut out = Vec::with_capacity(amplitudes.len());
    for &amp in amplitudes {
        // intermediate continuation stops between large amplitudes
        let mut stops = Vec::new();
        if amp > 100.0 && last_amp > 0.0 && amp / last_amp > 2.5 {
            let mut a = last_amp * 2.0;
            while a < amp * 0.75 {
                stops.push(a);
                a *= 2.0;
            }
        }
        for stop in stops {
            let res = diffusivity_with(&solver, flow, stop, e, tol, warm.as_deref())?;
            warm = Some(res.cells.iter().take(d).map(|c| c.corrector.clone()).collect());
        }
        let res = diffusivity_with(&solver, flow, amp, e, tol, warm.as_deref())?;
        warm = Some(res.cells.iter().take(d).map(|c| c.corrector.clone()).collect());
        last_amp = amp;
        out.push(res);
    }
    Ok(out)
}

/// Resolution continuation: rebuild the flow and re-solve on doubled grids
/// until the directional diffusivity changes by less than `rel_change`
/// between doublings (or `max_n` is reached). Returns the accepted result and
/// the (resolution, value) trace.
pub fn diffusivity_continuation(
    spec: &FlowSpec,
    base: &TorusGrid,
    max_n: usize,
    amplitude: f64,
    e: &[f64],
    tol: f64,
    rel_change: f64,
) -> Result<(DiffusivityResult, Vec<(usize, f64)>)> {
    let mut dims = base.dims().to_vec();
    let mut trace = Vec::new();
    let mut current: Option<DiffusivityResult> = None;
    loop {
        let grid = TorusGrid::new(&dims, base.periods())?;
        let flow = build_flow(spec, &grid)?;
        let res = diffusivity(&flow, amplitude, e, tol)?;
        trace.push((dims[0], res.directional));
        let done = match &current {
            Some(prev) => {
                (res.directional - prev.directional).abs() / prev.directional < rel_change
            }
            None => false,
        };
        current = Some(res);
        if done || dims.iter().any(|&n| n * 2 > max_n) {
            break;
        }
        for n in &mut dims {
            *n *= 2;
        }
    }
    Ok((current.expect("at least one resolution solved"), trace))
}
