//! Builders and validators for the gallery of periodic incompressible flows:
//! shear, cellular, checkerboard, gapped-cellular and two truly 3D cellular
//! families, plus user-supplied stream functions or velocity samples.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::TorusGrid;
use crate::spectral::Spectral;

/// Profile of a horizontal shear flow u = (profile(x2), 0).
#[derive(Debug, Clone)]
pub enum ShearProfile {
    /// sin(2 pi x2 / L2)
    Sine,
    /// user samples along x2, projected to mean zero
    Samples(Vec<f64>),
}

/// Description of a flow to build on a grid.
#[derive(Debug, Clone)]
pub enum FlowSpec {
    /// u = (profile(x2), 0)
    Shear { profile: ShearProfile },
    /// stream function sin(2 pi x1/L1) sin(2 pi x2/L2), all streamlines closed
    Cellular2D,
    /// cellular flow vanishing on every other cell; exponent >= 2 keeps the
    /// velocity Lipschitz across the dead-cell boundaries
    Checkerboard { exponent: f64 },
    /// cellular flow with dead vertical strips of relative width `gap`
    GapFlow { gap: f64, exponent: f64 },
    /// cubic-cell 3D flow from the planform cos(x1) cos(x2) on [0, 2pi]^3
    Cellular3D,
    /// hexagonal honeycomb 3D flow on [0, 2pi/sqrt(3)] x [0, 2pi]^2
    Honeycomb3D,
    /// 2D stream-function samples; velocity is the spectral perp gradient
    CustomStream { stream: ScalarField },
    /// velocity samples; projected to mean zero, divergence checked not fixed
    CustomVelocity { velocity: VectorField },
}

impl FlowSpec {
    /// Short stable identifier used in reports and CSV output.
    pub fn id(&self) -> &'static str {
        match self {
            FlowSpec::Shear { .. } => "shear",
            FlowSpec::Cellular2D => "cellular2d",
            FlowSpec::Checkerboard { .. } => "checkerboard",
            FlowSpec::GapFlow { .. } => "gap",
            FlowSpec::Cellular3D => "cellular3d",
            FlowSpec::Honeycomb3D => "honeycomb3d",
            FlowSpec::CustomStream { .. } => "custom_stream",
            FlowSpec::CustomVelocity { .. } => "custom_velocity",
        }
    }

    /// Whether the velocity is smooth (analytic) rather than merely Lipschitz.
    /// Degenerate variants with dead regions are only Lipschitz, which sets
    /// the attainable discrete-divergence level and the solver refinement
    /// policy.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, FlowSpec::Checkerboard { .. } | FlowSpec::GapFlow { .. })
    }

    pub fn dim(&self) -> usize {
        match self {
            FlowSpec::Cellular3D | FlowSpec::Honeycomb3D => 3,
            FlowSpec::CustomStream { stream } => stream.grid().dim(),
            FlowSpec::CustomVelocity { velocity } => velocity.grid().dim(),
            _ => 2,
        }
    }

    /// The natural grid for the honeycomb flow: its smallest period box.
    pub fn honeycomb_grid(n: usize) -> Result<TorusGrid> {
        TorusGrid::new(&[n, n, n], &[2.0 * PI / 3.0f64.sqrt(), 2.0 * PI, 2.0 * PI])
    }
}

/// Validation evidence attached to a built flow.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// max pointwise spectral divergence
    pub max_divergence: f64,
    /// L2 divergence relative to the velocity scale `|u| * 2 pi / L_min`
    pub divergence_rel: f64,
    /// divergence level the variant's smoothness admits at this resolution
    pub divergence_limit: f64,
    pub component_means: Vec<f64>,
    /// forward-difference Lipschitz estimate, max over axes and components
    pub lipschitz: f64,
    pub passed: bool,
    pub failures: Vec<String>,
}

/// A periodic incompressible velocity field with its build spec and
/// validation evidence. Immutable after construction.
#[derive(Debug, Clone)]
pub struct FlowField {
    pub spec: FlowSpec,
    pub velocity: VectorField,
    pub validation: ValidationReport,
}

impl FlowField {
    pub fn grid(&self) -> &TorusGrid {
        self.velocity.grid()
    }

    pub fn grid_arc(&self) -> Arc<TorusGrid> {
        self.velocity.grid_arc()
    }

    pub fn dim(&self) -> usize {
        self.velocity.dim()
    }

    pub fn max_speed(&self) -> f64 {
        self.velocity.max_speed()
    }

    pub fn is_valid(&self) -> bool {
        self.validation.passed
    }

    pub fn require_valid(&self) -> Result<()> {
        if self.validation.passed {
            Ok(())
        } else {
            Err(Error::FlowInvalid(self.validation.failures.join("; ")))
        }
    }
}

const MEAN_LIMIT: f64 = 1e-10;
const CUSTOM_MEAN_LIMIT: f64 = 1e-6;
const SMOOTH_DIV_LIMIT: f64 = 1e-8;
const PLANFORM_LIMIT: f64 = 1e-8;

/// Build a flow on the given grid: analytic sampling wherever a closed-form
/// velocity exists, spectral perp gradient for stream-function input.
pub fn build_flow(spec: &FlowSpec, grid: &TorusGrid) -> Result<FlowField> {
    if grid.dim() != spec.dim() {
        return Err(Error::UnsupportedDim { dim: grid.dim(), context: "build_flow" });
    }
    let grid = Arc::new(grid.clone());
    let velocity = match spec {
        FlowSpec::Shear { profile } => build_shear(&grid, profile)?,
        FlowSpec::Cellular2D => build_cellular2d(&grid),
        FlowSpec::Checkerboard { exponent } => {
            check_exponent(*exponent)?;
            build_checkerboard(&grid, *exponent)
        }
        FlowSpec::GapFlow { gap, exponent } => {
            check_exponent(*exponent)?;
            if !(*gap > 0.0 && *gap < 1.0) {
                return Err(Error::InvalidParam {
                    name: "gap",
                    reason: format!("{gap} not in (0, 1)"),
                });
            }
            build_gap(&grid, *gap, *exponent)
        }
        FlowSpec::Cellular3D => build_cellular3d(&grid)?,
        FlowSpec::Honeycomb3D => build_honeycomb(&grid)?,
        FlowSpec::CustomStream { stream } => build_from_stream(&grid, stream)?,
        FlowSpec::CustomVelocity { velocity } => prepare_custom_velocity(&grid, velocity)?,
    };
    let mut flow = FlowField {
        spec: spec.clone(),
        validation: ValidationReport {
            max_divergence: 0.0,
            divergence_rel: 0.0,
            divergence_limit: 0.0,
            component_means: vec![],
            lipschitz: 0.0,
            passed: false,
            failures: vec![],
        },
        velocity,
    };
    // Remove any measurable mean. Skipped when the mean is already at the
    // floating-point floor so dead regions of degenerate flows stay exactly
    // zero.
    let scale = flow.max_speed().max(1e-300);
    for c in flow.velocity.components_mut() {
        let m = c.mean();
        if m.abs() > 1e-13 * scale {
            for v in c.values_mut() {
                *v -= m;
            }
        }
    }
    flow.validation = validate_flow(&flow);
    Ok(flow)
}

fn check_exponent(alpha: f64) -> Result<()> {
    if alpha >= 2.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParam { name: "exponent", reason: format!("{alpha} must be >= 2") })
    }
}

fn build_shear(grid: &Arc<TorusGrid>, profile: &ShearProfile) -> Result<VectorField> {
    let l2 = grid.periods()[1];
    let u1 = match profile {
        ShearProfile::Sine => {
            ScalarField::from_fn(Arc::clone(grid), |x| (2.0 * PI * x[1] / l2).sin())
        }
        ShearProfile::Samples(samples) => {
            if samples.len() != grid.dims()[1] {
                return Err(Error::InvalidParam {
                    name: "profile",
                    reason: format!(
                        "{} samples for {} points along x2",
                        samples.len(),
                        grid.dims()[1]
                    ),
                });
            }
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            let scale = samples.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            if mean.abs() / scale > CUSTOM_MEAN_LIMIT {
                return Err(Error::InvalidParam {
                    name: "profile",
                    reason: format!("mean {mean:e} exceeds the custom-spec limit"),
                });
            }
            let n2 = grid.dims()[1];
            let dx2 = grid.spacing(1);
            let samples = samples.clone();
            ScalarField::from_fn(Arc::clone(grid), move |x| {
                let j = (x[1] / dx2).round() as usize % n2;
                samples[j] - mean
            })
        }
    };
    VectorField::new(vec![u1, ScalarField::zeros(Arc::clone(grid))])
}

fn build_cellular2d(grid: &Arc<TorusGrid>) -> VectorField {
    let (l1, l2) = (grid.periods()[0], grid.periods()[1]);
    let (k1, k2) = (2.0 * PI / l1, 2.0 * PI / l2);
    let u1 = ScalarField::from_fn(Arc::clone(grid), move |x| {
        -k2 * (k1 * x[0]).sin() * (k2 * x[1]).cos()
    });
    let u2 = ScalarField::from_fn(Arc::clone(grid), move |x| {
        k1 * (k1 * x[0]).cos() * (k2 * x[1]).sin()
    });
    VectorField::new(vec![u1, u2]).expect("components share the grid")
}

/// Checkerboard stream function: s^alpha on the cells where
/// s = sin(k1 x1) sin(k2 x2) is positive, zero elsewhere. Continuous with
/// Lipschitz velocity for alpha >= 2; the velocity vanishes identically on
/// the dead cells.
fn build_checkerboard(grid: &Arc<TorusGrid>, alpha: f64) -> VectorField {
    let (l1, l2) = (grid.periods()[0], grid.periods()[1]);
    let (k1, k2) = (2.0 * PI / l1, 2.0 * PI / l2);
    let duct = move |x: &[f64]| {
        let s1 = (k1 * x[0]).sin();
        let s2 = (k2 * x[1]).sin();
        let s = s1 * s2;
        if s > 0.0 {
            // (dH/dx1, dH/dx2) with H = s^alpha
            let pre = alpha * s.powf(alpha - 1.0);
            let h1 = pre * k1 * (k1 * x[0]).cos() * s2;
            let h2 = pre * k2 * s1 * (k2 * x[1]).cos();
            (h1, h2)
        } else {
            (0.0, 0.0)
        }
    };
    let u1 = ScalarField::from_fn(Arc::clone(grid), move |x| -duct(x).1);
    let u2 = ScalarField::from_fn(Arc::clone(grid), move |x| duct(x).0);
    VectorField::new(vec![u1, u2]).expect("components share the grid")
}

/// Cellular flow with dead vertical strips: the stream function is
/// |sin(kx x1) sin(k2 x2)|^alpha on the active band x1/L1 mod 1 < 1 - gap
/// (kx stretches the band to a full cell period) and zero on the strips.
/// The absolute value extends the even-exponent formula to real alpha >= 2.
fn build_gap(grid: &Arc<TorusGrid>, gap: f64, alpha: f64) -> VectorField {
    let (l1, l2) = (grid.periods()[0], grid.periods()[1]);
    let k2 = 2.0 * PI / l2;
    let active = 1.0 - gap;
    let kx = 2.0 * PI / (active * l1);
    let duct = move |x: &[f64]| {
        let t = (x[0] / l1).fract();
        if t >= active {
            return (0.0, 0.0);
        }
        let s1 = (kx * x[0]).sin();
        let s2 = (k2 * x[1]).sin();
        let s = s1 * s2;
        if s == 0.0 {
            return (0.0, 0.0);
        }
        let pre = alpha * s.abs().powf(alpha - 1.0) * s.signum();
        let h1 = pre * kx * (kx * x[0]).cos() * s2;
        let h2 = pre * k2 * s1 * (k2 * x[1]).cos();
        (h1, h2)
    };
    let u1 = ScalarField::from_fn(Arc::clone(grid), move |x| -duct(x).1);
    let u2 = ScalarField::from_fn(Arc::clone(grid), move |x| duct(x).0);
    VectorField::new(vec![u1, u2]).expect("components share the grid")
}

/// The 2D planform of a 3D cellular flow must satisfy lap(phi) = -k phi on
/// the grid; that identity is what makes the assembled velocity divergence
/// free.
fn check_planform(
    grid: &Arc<TorusGrid>,
    planform: impl Fn(&[f64]) -> f64,
    k: f64,
) -> Result<()> {
    let slice = Arc::new(TorusGrid::new(&grid.dims()[..2], &grid.periods()[..2])?);
    let sp = Spectral::new(Arc::clone(&slice));
    let phi = ScalarField::from_fn(Arc::clone(&slice), planform);
    let lap = sp.laplacian(&phi)?;
    let scale = phi.max_abs().max(1e-300) * k;
    let mut defect = 0.0f64;
    for (l, p) in lap.values().iter().zip(phi.values()) {
        defect = defect.max((l + k * p).abs());
    }
    if defect / scale > PLANFORM_LIMIT {
        return Err(Error::FlowInvalid(format!(
            "planform violates lap(phi) = -{k} phi: relative defect {:.3e}",
            defect / scale
        )));
    }
    Ok(())
}

fn require_periods(grid: &TorusGrid, want: &[f64], what: &'static str) -> Result<()> {
    for (have, want) in grid.periods().iter().zip(want) {
        if (have - want).abs() > 1e-12 * want {
            return Err(Error::InvalidGrid(format!(
                "{what} requires periods {want:?}, grid has {:?}",
                grid.periods()
            )));
        }
    }
    Ok(())
}

/// Cubic-cell 3D flow: u = (phi_x1 w', phi_x2 w', k phi w) with
/// phi = cos x1 cos x2, w = sin x3, k = 2, on the period box [0, 2pi]^3.
fn build_cellular3d(grid: &Arc<TorusGrid>) -> Result<VectorField> {
    require_periods(grid, &[2.0 * PI, 2.0 * PI, 2.0 * PI], "cellular3d")?;
    check_planform(grid, |x| x[0].cos() * x[1].cos(), 2.0)?;
    let u1 = ScalarField::from_fn(Arc::clone(grid), |x| -x[0].sin() * x[1].cos() * x[2].cos());
    let u2 = ScalarField::from_fn(Arc::clone(grid), |x| -x[0].cos() * x[1].sin() * x[2].cos());
    let u3 = ScalarField::from_fn(Arc::clone(grid), |x| {
        2.0 * x[0].cos() * x[1].cos() * x[2].sin()
    });
    VectorField::new(vec![u1, u2, u3])
}

/// Honeycomb 3D flow: planform 2 cos(sqrt(3) x1) cos(x2) + cos(2 x2 - pi/2)
/// with w = sin x3. The planform eigenvalue k = 4 is forced by
/// lap(phi) = -k phi and is re-checked at build time.
fn build_honeycomb(grid: &Arc<TorusGrid>) -> Result<VectorField> {
    let r3 = 3.0f64.sqrt();
    require_periods(grid, &[2.0 * PI / r3, 2.0 * PI, 2.0 * PI], "honeycomb3d")?;
    let planform = move |x: &[f64]| {
        2.0 * (r3 * x[0]).cos() * x[1].cos() + (2.0 * x[1] - PI / 2.0).cos()
    };
    check_planform(grid, planform, 4.0)?;
    let u1 = ScalarField::from_fn(Arc::clone(grid), move |x| {
        -2.0 * r3 * (r3 * x[0]).sin() * x[1].cos() * x[2].cos()
    });
    let u2 = ScalarField::from_fn(Arc::clone(grid), move |x| {
        (-2.0 * (r3 * x[0]).cos() * x[1].sin() - 2.0 * (2.0 * x[1] - PI / 2.0).sin()) * x[2].cos()
    });
    let u3 = ScalarField::from_fn(Arc::clone(grid), move |x| 4.0 * planform(x) * x[2].sin());
    VectorField::new(vec![u1, u2, u3])
}

fn build_from_stream(grid: &Arc<TorusGrid>, stream: &ScalarField) -> Result<VectorField> {
    if grid.dim() != 2 {
        return Err(Error::UnsupportedDim { dim: grid.dim(), context: "stream function" });
    }
    if stream.grid() != grid.as_ref() {
        return Err(Error::GridMismatch);
    }
    stream.check_finite("stream function")?;
    let sp = Spectral::new(Arc::clone(grid));
    let g = sp.gradient(stream)?;
    VectorField::new(vec![g.component(1).scaled(-1.0), g.component(0).clone()])
}

fn prepare_custom_velocity(grid: &Arc<TorusGrid>, velocity: &VectorField) -> Result<VectorField> {
    if velocity.grid() != grid.as_ref() {
        return Err(Error::GridMismatch);
    }
    velocity.check_finite("custom velocity")?;
    let scale = velocity.max_speed().max(1e-300);
    for c in velocity.components() {
        let m = c.mean();
        if m.abs() / scale > CUSTOM_MEAN_LIMIT {
            return Err(Error::InvalidParam {
                name: "velocity",
                reason: format!(
                    "component mean {m:e} exceeds the custom-spec limit {CUSTOM_MEAN_LIMIT:e}"
                ),
            });
        }
    }
    Ok(velocity.clone())
}

/// Recompute the validation report of a flow: spectral divergence, component
/// means and a finite-difference Lipschitz estimate, judged against what the
/// variant's smoothness admits.
pub fn validate_flow(flow: &FlowField) -> ValidationReport {
    let grid = flow.grid_arc();
    let sp = Spectral::new(Arc::clone(&grid));
    let mut failures = Vec::new();

    let div = sp.divergence(&flow.velocity).expect("velocity lives on the grid");
    let max_divergence = div.max_abs();
    let k_min = grid
        .periods()
        .iter()
        .map(|&l| 2.0 * PI / l)
        .fold(f64::INFINITY, f64::min);
    let u_l2 = flow.velocity.l2sq_mean().sqrt().max(1e-300);
    let divergence_rel = div.l2_norm() / (k_min * u_l2);

    // Smooth flows are spectrally solenoidal to machine precision. Lipschitz
    // flows (dead cells or strips) sampled analytically carry an O(1/N)
    // divergence from the truncated kink; the 24/N envelope was measured
    // across the supported resolutions and doubles as a regression bound.
    let n_min = *grid.dims().iter().min().unwrap() as f64;
    let divergence_limit = if flow.spec.is_smooth() { SMOOTH_DIV_LIMIT } else { 24.0 / n_min };
    if divergence_rel > divergence_limit {
        failures.push(format!(
            "relative divergence {divergence_rel:.3e} exceeds {divergence_limit:.3e}"
        ));
    }

    let scale = flow.max_speed().max(1e-300);
    let component_means: Vec<f64> =
        flow.velocity.components().iter().map(|c| c.mean()).collect();
    for (a, m) in component_means.iter().enumerate() {
        if m.abs() / scale > MEAN_LIMIT {
            failures.push(format!("component {a} mean {m:e} exceeds {MEAN_LIMIT:e}"));
        }
    }

    let mut lipschitz = 0.0f64;
    let d = grid.dim();
    let mut idx = vec![0usize; d];
    for c in flow.velocity.components() {
        for a in 0..d {
            let h = grid.spacing(a);
            for flat in 0..grid.len() {
                grid.unravel(flat, &mut idx);
                idx[a] = (idx[a] + 1) % grid.dims()[a];
                let fwd = grid.flat_index(&idx);
                let diff = (c.values()[fwd] - c.values()[flat]).abs() / h;
                lipschitz = lipschitz.max(diff);
            }
        }
    }
    if !lipschitz.is_finite() {
        failures.push("non-finite Lipschitz estimate".into());
    }

    ValidationReport {
        max_divergence,
        divergence_rel,
        divergence_limit,
        component_means,
        lipschitz,
        passed: failures.is_empty(),
        failures,
    }
}
