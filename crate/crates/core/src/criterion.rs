//! Numerical realization of the finite-energy solvability test
//! u . grad(phi) = u . e and the resulting direction classification.
//!
//! A periodic finite-energy solution exists iff the effective diffusivity in
//! direction e stays bounded as the amplitude grows; nonexistence cannot be
//! proven numerically, so Diverging verdicts rest on measured diffusivity
//! growth (the sharp criterion), with the least-squares residual trend as
//! corroborating evidence only. All thresholds are surfaced in the report.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::flows::FlowField;
use crate::homogenize::directional_sweep;
use crate::krylov::{pcg, LinOp};
use crate::numeric::linear_fit;
use crate::spectral::Spectral;

/// Least-squares evidence per mode cutoff N: the minimum of the grid L2 norm
/// of u . grad(phi) - u . e over mean-zero phi supported on modes
/// |k|_inf <= N, its minimizer's gradient norm, and the minimizer itself.
#[derive(Debug, Clone)]
pub struct CriterionDiagnostics {
    pub direction: Vec<f64>,
    pub mode_cutoffs: Vec<usize>,
    pub residuals: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub minimizers: Vec<ScalarField>,
    /// Tikhonov shift added to the normal equations (reported, rerunnable)
    pub tikhonov_shift: f64,
    /// norm of the target u . e
    pub rhs_norm: f64,
    /// per-cutoff conditioning flags (CG failed to reach its tolerance)
    pub flagged: Vec<usize>,
}

/// Bounded/Diverging decision rules. Engineering choices: the theory gives no
/// quantitative rate at finite amplitude, so every threshold is carried in
/// the evidence rather than applied silently.
#[derive(Debug, Clone)]
pub struct ClassificationThresholds {
    /// Bounded requires D(A_last)/D(A_prev) <= 1 + this
    pub saturation_ratio: f64,
    /// Bounded requires residual reduction >= this from the first cutoff
    pub residual_collapse: f64,
    /// Bounded requires gradient growth <= this across cutoffs
    pub grad_growth_cap: f64,
    /// Diverging requires a fitted top-half log-log slope >= this
    pub min_slope: f64,
}

impl Default for ClassificationThresholds {
    fn default() -> Self {
        Self {
            saturation_ratio: 0.15,
            residual_collapse: 100.0,
            grad_growth_cap: 2.0,
            min_slope: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Bounded,
    Diverging,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Bounded => write!(f, "bounded"),
            Verdict::Diverging => write!(f, "diverging"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClassificationEvidence {
    pub amplitudes: Vec<f64>,
    pub diffusivities: Vec<f64>,
    /// least-squares slope of ln D vs ln A over the top half of the samples
    pub fitted_slope: f64,
    /// D at the last amplitude over D at the previous one
    pub growth_ratio: f64,
    pub residual_collapsed: bool,
    pub gradient_bounded: bool,
    pub criterion: CriterionDiagnostics,
    pub thresholds: ClassificationThresholds,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct DirectionClassification {
    pub verdict: Verdict,
    pub evidence: ClassificationEvidence,
}

// The reported residual is evaluated directly from the minimizer, so a CG
// iterate short of full convergence only over-states it; classification
// ratios stay honest at this tolerance.
const CG_TOL: f64 = 1e-8;
const CG_MAX_ITERS: usize = 1200;
const SHIFT_FACTOR: f64 = 1e-10;

/// Normal-equations operator P (T* T + eps) P on the band |k|_inf <= cutoff,
/// where T phi = u . grad(phi) with exact grid products so the discrete
/// adjoint is exact and the operator is symmetric positive semidefinite.
struct NormalOp<'a> {
    spectral: &'a Spectral,
    velocity: &'a VectorField,
    band: &'a [bool],
    shift: f64,
}

impl NormalOp<'_> {
    fn t_apply(&self, spec_phi: &[C64]) -> Vec<f64> {
        let sp = self.spectral;
        let n = sp.grid().len();
        let d = sp.grid().dim();
        let mut out = vec![0.0f64; n];
        for a in 0..d {
            let mut ca = spec_phi.to_vec();
            sp.mul_ik_axis(&mut ca, a);
            let da = sp.inverse(ca);
            let ua = self.velocity.component(a).values();
            for i in 0..n {
                out[i] += ua[i] * da[i];
            }
        }
        out
    }

    fn t_star_apply(&self, g: &[f64]) -> Vec<f64> {
        let sp = self.spectral;
        let n = sp.grid().len();
        let d = sp.grid().dim();
        let mut acc = vec![C64::new(0.0, 0.0); n];
        for a in 0..d {
            let ua = self.velocity.component(a).values();
            let w: Vec<f64> = ua.iter().zip(g).map(|(u, v)| u * v).collect();
            let mut cw = sp.forward(&w);
            sp.mul_ik_axis(&mut cw, a);
            for (s, c) in acc.iter_mut().zip(cw) {
                *s -= c;
            }
        }
        for (c, &keep) in acc.iter_mut().zip(self.band) {
            if !keep {
                *c = C64::new(0.0, 0.0);
            }
        }
        sp.inverse(acc)
    }
}

impl LinOp for NormalOp<'_> {
    fn len(&self) -> usize {
        self.spectral.grid().len()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let sp = self.spectral;
        let mut spec = sp.forward(x);
        for (c, &keep) in spec.iter_mut().zip(self.band) {
            if !keep {
                *c = C64::new(0.0, 0.0);
            }
        }
        let tphi = self.t_apply(&spec);
        let tstar = self.t_star_apply(&tphi);
        for i in 0..x.len() {
            y[i] = tstar[i] + self.shift * x[i];
        }
    }
}

struct DiagPrecond<'a> {
    spectral: &'a Spectral,
    table: Vec<C64>,
}

impl LinOp for DiagPrecond<'_> {
    fn len(&self) -> usize {
        self.spectral.grid().len()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.spectral.apply_table(x, &self.table));
    }
}

fn band_mask(sp: &Spectral, cutoff: usize) -> Vec<bool> {
    let grid = sp.grid();
    let dims = grid.dims();
    let d = dims.len();
    let mut strides = vec![1usize; d];
    for a in (0..d.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * dims[a + 1];
    }
    (0..grid.len())
        .map(|flat| {
            if flat == 0 {
                return false;
            }
            (0..d).all(|a| {
                let i = (flat / strides[a]) % dims[a];
                let m = if i <= dims[a] / 2 { i } else { dims[a] - i };
                m <= cutoff
            })
        })
        .collect()
}

/// Grid L2 norm of u . grad(phi) - u . dir for an arbitrary (not necessarily
/// unit) direction. Also the evaluator behind the linearity property of the
/// solvable-direction set.
pub fn advective_mismatch(flow: &FlowField, direction: &[f64], phi: &ScalarField) -> Result<f64> {
    if direction.len() != flow.dim() {
        return Err(Error::InvalidParam {
            name: "direction",
            reason: format!("{} components for dimension {}", direction.len(), flow.dim()),
        });
    }
    if phi.grid() != flow.grid() {
        return Err(Error::GridMismatch);
    }
    let sp = Spectral::new(flow.grid_arc());
    let grad = sp.gradient(phi)?;
    let n = flow.grid().len();
    let mut sum = 0.0f64;
    for i in 0..n {
        let mut r = 0.0;
        for a in 0..flow.dim() {
            let ua = flow.velocity.component(a).values()[i];
            r += ua * (grad.component(a).values()[i] - direction[a]);
        }
        sum += r * r;
    }
    Ok((sum / n as f64).sqrt())
}

/// Least-squares sweep over nested mode cutoffs. Conjugate gradient on the
/// Tikhonov-shifted normal equations, warm-started from the previous cutoff.
pub fn h1_least_squares(
    flow: &FlowField,
    e: &[f64],
    cutoffs: &[usize],
) -> Result<CriterionDiagnostics> {
    flow.require_valid()?;
    let e = crate::field::unit_direction(flow.dim(), e)?;
    let nyquist = flow.grid().dims().iter().min().unwrap() / 2;
    if cutoffs.is_empty() || cutoffs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParam {
            name: "cutoffs",
            reason: "must be nonempty and strictly increasing".into(),
        });
    }
    if *cutoffs.last().unwrap() >= nyquist {
        return Err(Error::InvalidParam {
            name: "cutoffs",
            reason: format!("largest cutoff must stay below Nyquist index {nyquist}"),
        });
    }

    let sp = Spectral::new(flow.grid_arc());
    let n = flow.grid().len();
    let d = flow.dim();
    let u_max = flow.max_speed();
    let shift = SHIFT_FACTOR * u_max * u_max;

    // target u . e
    let mut target = vec![0.0f64; n];
    for a in 0..d {
        if e[a] != 0.0 {
            for (t, &u) in target.iter_mut().zip(flow.velocity.component(a).values()) {
                *t += e[a] * u;
            }
        }
    }
    let rhs_norm = (target.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();

    let pre_table = sp.multiplier_table(|m| C64::new(1.0 / (shift + u_max * u_max * m.ksq), 0.0));

    let mut residuals = Vec::with_capacity(cutoffs.len());
    let mut grad_norms = Vec::with_capacity(cutoffs.len());
    let mut minimizers = Vec::with_capacity(cutoffs.len());
    let mut flagged = Vec::new();
    let mut warm: Option<Vec<f64>> = None;

    for (ci, &cutoff) in cutoffs.iter().enumerate() {
        let band = band_mask(&sp, cutoff);
        let op = NormalOp { spectral: &sp, velocity: &flow.velocity, band: &band, shift };
        let b = op.t_star_apply(&target);
        let pre = DiagPrecond { spectral: &sp, table: pre_table.clone() };
        let (x, stats) = pcg(&op, Some(&pre), &b, warm.as_deref(), CG_TOL, CG_MAX_ITERS);
        if !stats.converged {
            flagged.push(cutoff);
        }
        // clean the iterate back onto the band
        let mut spec = sp.forward(&x);
        for (c, &keep) in spec.iter_mut().zip(&band) {
            if !keep {
                *c = C64::new(0.0, 0.0);
            }
        }
        let phi = ScalarField::new(flow.grid_arc(), sp.inverse(spec))?;
        let grad = sp.gradient(&phi)?;
        let grad_norm = grad.l2sq_mean().sqrt();
        let residual = advective_mismatch(flow, &e, &phi)?;
        warm = Some(phi.values().to_vec());
        residuals.push(residual);
        grad_norms.push(grad_norm);
        minimizers.push(phi);
        let _ = ci;
    }

    Ok(CriterionDiagnostics {
        direction: e,
        mode_cutoffs: cutoffs.to_vec(),
        residuals,
        grad_norms,
        minimizers,
        tikhonov_shift: shift,
        rhs_norm,
        flagged,
    })
}

/// Default cutoff ladder for a grid: 4, 8, 16, ... staying below Nyquist.
pub fn default_cutoffs(grid_n: usize) -> Vec<usize> {
    let nyquist = grid_n / 2;
    let mut out = vec![];
    for c in [4usize, 8, 16, 32, 48, 96] {
        if c < nyquist {
            out.push(c);
        }
    }
    out
}

/// Classify one propagation direction by diffusivity growth, corroborated by
/// the least-squares solvability evidence.
pub fn classify_direction(
    flow: &FlowField,
    e: &[f64],
    amplitudes: &[f64],
    thresholds: &ClassificationThresholds,
    tol: f64,
) -> Result<DirectionClassification> {
    if amplitudes.len() < 3 {
        return Err(Error::InvalidParam {
            name: "amplitudes",
            reason: "need at least 3 increasing samples".into(),
        });
    }
    let e = crate::field::unit_direction(flow.dim(), e)?;
    let cutoffs = default_cutoffs(*flow.grid().dims().iter().min().unwrap());
    let criterion = h1_least_squares(flow, &e, &cutoffs)?;

    let mut notes = Vec::new();
    let sweep = match directional_sweep(flow, amplitudes, &e, tol) {
        Ok(s) => s,
        Err(err) => {
            notes.push(format!("diffusivity solve failed: {err}"));
            return Ok(DirectionClassification {
                verdict: Verdict::Inconclusive,
                evidence: ClassificationEvidence {
                    amplitudes: amplitudes.to_vec(),
                    diffusivities: vec![],
                    fitted_slope: f64::NAN,
                    growth_ratio: f64::NAN,
                    residual_collapsed: false,
                    gradient_bounded: false,
                    criterion,
                    thresholds: thresholds.clone(),
                    notes,
                },
            });
        }
    };
    let d_values: Vec<f64> = sweep.iter().map(|s| s.value).collect();
    classify_with_evidence(amplitudes, &d_values, criterion, thresholds, flow.max_speed())
}

/// Classifier core for callers that already hold the diffusivity samples
/// (sweep reuse across reports).
pub fn classify_direction_with(
    flow: &FlowField,
    e: &[f64],
    amplitudes: &[f64],
    d_values: &[f64],
    thresholds: &ClassificationThresholds,
) -> Result<DirectionClassification> {
    if amplitudes.len() < 3 || amplitudes.len() != d_values.len() {
        return Err(Error::InvalidParam {
            name: "amplitudes",
            reason: "need at least 3 samples matching the diffusivity values".into(),
        });
    }
    let e = crate::field::unit_direction(flow.dim(), e)?;
    let cutoffs = default_cutoffs(*flow.grid().dims().iter().min().unwrap());
    let criterion = h1_least_squares(flow, &e, &cutoffs)?;
    classify_with_evidence(amplitudes, d_values, criterion, thresholds, flow.max_speed())
}

fn classify_with_evidence(
    amplitudes: &[f64],
    d_values: &[f64],
    criterion: CriterionDiagnostics,
    thresholds: &ClassificationThresholds,
    u_scale: f64,
) -> Result<DirectionClassification> {
    let mut notes = Vec::new();

    // log-log slope over the top half of the samples
    let start = amplitudes.len() / 2;
    let xs: Vec<f64> = amplitudes[start..].iter().map(|a| a.ln()).collect();
    let ys: Vec<f64> = d_values[start..].iter().map(|d| d.ln()).collect();
    let (fitted_slope, _, _) = linear_fit(&xs, &ys);
    let growth_ratio = d_values[d_values.len() - 1] / d_values[d_values.len() - 2];

    // residual collapse with an absolute floor for trivially solvable
    // directions (u . e identically zero)
    let floor = 1e-12 * u_scale.max(1e-300);
    let r_first = criterion.residuals[0];
    let r_last = *criterion.residuals.last().unwrap();
    let residual_collapsed =
        r_last <= floor || (r_first > 0.0 && r_first / r_last.max(floor) >= thresholds.residual_collapse);
    let g_first = criterion.grad_norms[0];
    let g_last = *criterion.grad_norms.last().unwrap();
    let gradient_bounded = g_last <= 1e-12 || g_last / g_first.max(1e-12) <= thresholds.grad_growth_cap;

    let saturated = growth_ratio <= 1.0 + thresholds.saturation_ratio;
    let growing = fitted_slope >= thresholds.min_slope && !saturated;
    // Residual collapse with bounded gradients is direct evidence a
    // finite-energy solution exists, and is decisive for Bounded; growing
    // gradients under a collapsing residual are the pseudo-collapse signature
    // of a divergent minimizing sequence. Diffusivity growth is primary for
    // Diverging and advisory for Bounded: the sampled amplitudes can sit
    // before saturation, which is surfaced rather than vetoing the verdict.
    let solvable = residual_collapsed && gradient_bounded;

    let verdict = if solvable {
        if !saturated {
            notes.push(format!(
                "bounded by solvability evidence while the diffusivity still grows \
                 (ratio {growth_ratio:.3} over the last step): pre-asymptotic amplitudes"
            ));
        }
        Verdict::Bounded
    } else if growing {
        Verdict::Diverging
    } else {
        notes.push(format!(
            "no rule fired: slope {fitted_slope:.3}, growth ratio {growth_ratio:.3}, \
             collapse {residual_collapsed}, gradient bounded {gradient_bounded}"
        ));
        Verdict::Inconclusive
    };

    Ok(DirectionClassification {
        verdict,
        evidence: ClassificationEvidence {
            amplitudes: amplitudes.to_vec(),
            diffusivities: d_values.to_vec(),
            fitted_slope,
            growth_ratio,
            residual_collapsed,
            gradient_bounded,
            criterion,
            thresholds: thresholds.clone(),
            notes,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{build_flow, FlowSpec, ShearProfile};
    use crate::grid::TorusGrid;

    fn shear(n: usize) -> FlowField {
        build_flow(
            &FlowSpec::Shear { profile: ShearProfile::Sine },
            &TorusGrid::square(n).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn shear_crosswise_target_is_trivially_solvable() {
        // u . e2 is identically zero, so phi = 0 is exact at every cutoff
        let flow = shear(32);
        let diag = h1_least_squares(&flow, &[0.0, 1.0], &[4, 8]).unwrap();
        for (r, g) in diag.residuals.iter().zip(&diag.grad_norms) {
            assert!(*r < 1e-12, "residual {r}");
            assert!(*g < 1e-10, "gradient {g}");
        }
    }

    #[test]
    fn shear_streamwise_residual_is_pinned_by_closed_form() {
        // For u = (sin(2 pi x2), 0) and e1 the admissible derivative field is
        // mean-zero along each row, so the best residual is |sin|_L2 = 1/sqrt(2)
        // at every cutoff, attained by phi = 0.
        let flow = shear(32);
        let diag = h1_least_squares(&flow, &[1.0, 0.0], &[4, 8, 12]).unwrap();
        let want = 0.5f64.sqrt();
        for r in &diag.residuals {
            assert!((r - want).abs() < 1e-8, "residual {r} vs {want}");
        }
        for g in &diag.grad_norms {
            assert!(*g < 1e-6, "gradient {g}");
        }
    }

    #[test]
    fn residuals_nonincreasing_gradients_nondecreasing() {
        let flow = build_flow(
            &FlowSpec::GapFlow { gap: 0.25, exponent: 2.0 },
            &TorusGrid::square(64).unwrap(),
        )
        .unwrap();
        let diag = h1_least_squares(&flow, &[1.0, 0.0], &[4, 8, 16, 24]).unwrap();
        for w in diag.residuals.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-8), "residuals {:?}", diag.residuals);
        }
        for w in diag.grad_norms.windows(2) {
            assert!(w[1] >= w[0] * (1.0 - 1e-8), "grads {:?}", diag.grad_norms);
        }
        // the gap flow admits a genuine solution: the residual must fall
        // substantially with room to spare at these small cutoffs
        assert!(diag.residuals[3] < 0.2 * diag.residuals[0], "{:?}", diag.residuals);
    }

    #[test]
    fn linearity_upper_bound_is_respected() {
        // the sum of minimizers for e and e' bounds the residual for e + e'
        let flow = build_flow(
            &FlowSpec::GapFlow { gap: 0.25, exponent: 2.0 },
            &TorusGrid::square(32).unwrap(),
        )
        .unwrap();
        let d1 = h1_least_squares(&flow, &[1.0, 0.0], &[4, 8]).unwrap();
        let d2 = h1_least_squares(&flow, &[0.0, 1.0], &[4, 8]).unwrap();
        let grid = flow.grid_arc();
        for i in 0..2 {
            let sum = ScalarField::new(
                std::sync::Arc::clone(&grid),
                d1.minimizers[i]
                    .values()
                    .iter()
                    .zip(d2.minimizers[i].values())
                    .map(|(a, b)| a + b)
                    .collect(),
            )
            .unwrap();
            let r = advective_mismatch(&flow, &[1.0, 1.0], &sum).unwrap();
            assert!(
                r <= d1.residuals[i] + d2.residuals[i] + 1e-12,
                "cutoff {i}: {r} > {} + {}",
                d1.residuals[i],
                d2.residuals[i]
            );
        }
    }

    #[test]
    fn cutoffs_validated() {
        let flow = shear(16);
        assert!(h1_least_squares(&flow, &[1.0, 0.0], &[]).is_err());
        assert!(h1_least_squares(&flow, &[1.0, 0.0], &[4, 4]).is_err());
        assert!(h1_least_squares(&flow, &[1.0, 0.0], &[4, 8]).is_err(), "8 = Nyquist of n=16");
    }

    #[test]
    fn shear_crosswise_classifies_bounded() {
        let flow = shear(32);
        let out = classify_direction(
            &flow,
            &[0.0, 1.0],
            &[4.0, 16.0, 64.0],
            &ClassificationThresholds::default(),
            1e-10,
        )
        .unwrap();
        assert_eq!(out.verdict, Verdict::Bounded, "evidence: {:?}", out.evidence.notes);
        for d in &out.evidence.diffusivities {
            assert!((d - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn shear_streamwise_classifies_diverging() {
        let flow = shear(32);
        let out = classify_direction(
            &flow,
            &[1.0, 0.0],
            &[4.0, 16.0, 64.0],
            &ClassificationThresholds::default(),
            1e-10,
        )
        .unwrap();
        // D = 1 + A^2/(8 pi^2): slope tends to 2
        assert_eq!(out.verdict, Verdict::Diverging, "evidence: {:?}", out.evidence.notes);
        assert!(out.evidence.fitted_slope > 1.5);
    }
}
