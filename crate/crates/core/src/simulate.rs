//! Direct time integration of the reaction-advection-diffusion equation on a
//! long strip, as an independent check on the variational minimal speed.
//!
//! The strip is `periods` copies of the flow cell along x1 with zero-flux
//! ends, periodic crosswise. Diffusion is implicit (crosswise FFT +
//! tridiagonal solves along the strip), advection and reaction explicit, first
//! order in time. Deliberately a different discretization family from the
//! spectral solvers so the two speed measurements share no code path.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::flows::FlowField;
use crate::numeric::linear_fit;

/// Reaction term of KPP type: f(0) = f(1) = 0, f > 0 inside, f(s) <= f'(0) s.
#[derive(Clone)]
pub enum Reaction {
    /// rate * s * (1 - s)
    Logistic { rate: f64 },
    /// user-supplied f with its derivative at zero
    Custom { f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, f_prime0: f64 },
}

#[derive(Clone)]
pub struct KppNonlinearity {
    reaction: Reaction,
}

impl fmt::Debug for KppNonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.reaction {
            Reaction::Logistic { rate } => write!(f, "KppNonlinearity::logistic({rate})"),
            Reaction::Custom { f_prime0, .. } => {
                write!(f, "KppNonlinearity::custom(f'(0)={f_prime0})")
            }
        }
    }
}

impl KppNonlinearity {
    pub fn logistic(rate: f64) -> Result<Self> {
        let out = Self { reaction: Reaction::Logistic { rate } };
        out.validate()?;
        Ok(out)
    }

    pub fn custom(f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, f_prime0: f64) -> Result<Self> {
        let out = Self { reaction: Reaction::Custom { f, f_prime0 } };
        out.validate()?;
        Ok(out)
    }

    pub fn eval(&self, s: f64) -> f64 {
        match &self.reaction {
            Reaction::Logistic { rate } => rate * s * (1.0 - s),
            Reaction::Custom { f, .. } => f(s),
        }
    }

    pub fn f_prime0(&self) -> f64 {
        match &self.reaction {
            Reaction::Logistic { rate } => *rate,
            Reaction::Custom { f_prime0, .. } => *f_prime0,
        }
    }

    /// Sampled KPP conditions: zeros at the ends, positive inside, and
    /// f(s) <= f'(0) s on a fine interior grid.
    pub fn validate(&self) -> Result<()> {
        let fp0 = self.f_prime0();
        if !(fp0 > 0.0 && fp0.is_finite()) {
            return Err(Error::InvalidParam {
                name: "f_prime0",
                reason: format!("{fp0} must be > 0"),
            });
        }
        if self.eval(0.0).abs() > 1e-14 * fp0 || self.eval(1.0).abs() > 1e-14 * fp0 {
            return Err(Error::InvalidParam {
                name: "reaction",
                reason: "f(0) and f(1) must vanish".into(),
            });
        }
        let m = 257;
        for i in 1..m {
            let s = i as f64 / m as f64;
            let v = self.eval(s);
            if v <= 0.0 {
                return Err(Error::InvalidParam {
                    name: "reaction",
                    reason: format!("f({s}) = {v} not positive"),
                });
            }
            if v > fp0 * s * (1.0 + 1e-12) {
                return Err(Error::InvalidParam {
                    name: "reaction",
                    reason: format!("f({s}) = {v} exceeds f'(0) s"),
                });
            }
        }
        Ok(())
    }
}

/// Temperature snapshot on the strip, row-major with the crosswise index
/// fastest: values[i * n_cross + j].
#[derive(Debug, Clone)]
pub struct StripField {
    pub n_along: usize,
    pub n_cross: usize,
    /// spacing along the strip
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl StripField {
    /// Crosswise average profile along the strip.
    pub fn crosswise_mean(&self) -> Vec<f64> {
        (0..self.n_along)
            .map(|i| {
                self.values[i * self.n_cross..(i + 1) * self.n_cross]
                    .iter()
                    .sum::<f64>()
                    / self.n_cross as f64
            })
            .collect()
    }
}

/// Rightmost crossing of the crosswise-averaged profile through `level`,
/// located by linear interpolation between grid columns. Absent when the
/// profile never crosses (front left the domain or not yet formed).
pub fn front_position(field: &StripField, level: f64) -> Option<f64> {
    if !(0.0 < level && level < 1.0) {
        return None;
    }
    let profile = field.crosswise_mean();
    for i in (0..field.n_along - 1).rev() {
        if profile[i] >= level && profile[i + 1] < level {
            let frac = (profile[i] - level) / (profile[i] - profile[i + 1]);
            return Some((i as f64 + frac) * field.spacing);
        }
    }
    None
}

/// Flags accumulated during a run.
#[derive(Debug, Clone, Default)]
pub struct SimFlags {
    /// front approached the right end: the measured speed is invalidated
    pub reached_boundary: bool,
    /// worst violation of 0 <= T <= 1 seen at recorded steps
    pub max_overshoot: f64,
    pub positions_monotone: bool,
}

/// Measured front trajectory and its tail-fit speed.
#[derive(Debug, Clone)]
pub struct FrontTrajectory {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub speed: f64,
    pub speed_stderr: f64,
    pub flags: SimFlags,
}

/// Strip integrator for one (flow, amplitude, reaction).
pub struct StripSim {
    n_along: usize,
    n_cross: usize,
    h1: f64,
    h2: f64,
    dt: f64,
    u1: Vec<f64>,
    u2: Vec<f64>,
    reaction: KppNonlinearity,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
    /// crosswise FD symbol of -d2/dx2 per mode
    sigma2: Vec<f64>,
    strip_len: f64,
    period_len: f64,
}

impl StripSim {
    pub fn new(
        flow: &FlowField,
        amplitude: f64,
        reaction: KppNonlinearity,
        strip_periods: usize,
        dt: Option<f64>,
    ) -> Result<Self> {
        flow.require_valid()?;
        if flow.dim() != 2 {
            return Err(Error::UnsupportedDim { dim: flow.dim(), context: "strip simulation" });
        }
        if strip_periods < 2 {
            return Err(Error::InvalidParam {
                name: "strip_periods",
                reason: "need at least 2 periods".into(),
            });
        }
        let grid = flow.grid();
        let (n1, n2) = (grid.dims()[0], grid.dims()[1]);
        let (h1, h2) = (grid.spacing(0), grid.spacing(1));
        let n_along = n1 * strip_periods;
        let n_cross = n2;

        // tile the periodic velocity along the strip
        let mut u1 = vec![0.0f64; n_along * n_cross];
        let mut u2 = vec![0.0f64; n_along * n_cross];
        for i in 0..n_along {
            let src_i = i % n1;
            for j in 0..n_cross {
                let src = grid.flat_index(&[src_i, j]);
                u1[i * n_cross + j] = amplitude * flow.velocity.component(0).values()[src];
                u2[i * n_cross + j] = amplitude * flow.velocity.component(1).values()[src];
            }
        }

        let adv = amplitude.abs() * flow.max_speed();
        let rate = reaction.f_prime0();
        let dt = match dt {
            Some(v) if v > 0.0 && v.is_finite() => v,
            Some(v) => {
                return Err(Error::InvalidParam { name: "dt", reason: format!("{v}") });
            }
            None => {
                let h = h1.min(h2);
                (0.35 * h / (1.0 + adv)).min(0.2 / rate).min(0.5 * h)
            }
        };

        let mut planner = FftPlanner::<f64>::new();
        let fft_fwd = planner.plan_fft_forward(n_cross);
        let fft_inv = planner.plan_fft_inverse(n_cross);
        let sigma2: Vec<f64> = (0..n_cross)
            .map(|m| {
                let theta = 2.0 * std::f64::consts::PI * m as f64 / n_cross as f64;
                (2.0 - 2.0 * theta.cos()) / (h2 * h2)
            })
            .collect();

        Ok(Self {
            n_along,
            n_cross,
            h1,
            h2,
            dt,
            u1,
            u2,
            reaction,
            fft_fwd,
            fft_inv,
            sigma2,
            strip_len: n_along as f64 * h1,
            period_len: grid.periods()[0],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn strip_len(&self) -> f64 {
        self.strip_len
    }

    /// Smoothed indicator of the left 5% of the strip.
    pub fn initial_bump(&self) -> StripField {
        let x0 = 0.05 * self.strip_len;
        let w = 4.0 * self.h1;
        let mut values = vec![0.0f64; self.n_along * self.n_cross];
        for i in 0..self.n_along {
            let x = i as f64 * self.h1;
            let v = 0.5 * (1.0 - ((x - x0) / w).tanh());
            for j in 0..self.n_cross {
                values[i * self.n_cross + j] = v;
            }
        }
        StripField {
            n_along: self.n_along,
            n_cross: self.n_cross,
            spacing: self.h1,
            values,
        }
    }

    /// One implicit-diffusion / explicit-advection-reaction step.
    pub fn step(&self, field: &mut StripField) {
        let (na, nc) = (self.n_along, self.n_cross);
        let dt = self.dt;
        let t = &field.values;
        let mut rhs = vec![C64::new(0.0, 0.0); na * nc];

        // explicit advection (centered; mirrored ghosts at the strip ends,
        // periodic crosswise) and reaction
        for i in 0..na {
            let im = if i == 0 { 1 } else { i - 1 };
            let ip = if i + 1 == na { na - 2 } else { i + 1 };
            for j in 0..nc {
                let jm = (j + nc - 1) % nc;
                let jp = (j + 1) % nc;
                let here = i * nc + j;
                let dx = (t[ip * nc + j] - t[im * nc + j]) / (2.0 * self.h1);
                let dy = (t[i * nc + jp] - t[i * nc + jm]) / (2.0 * self.h2);
                let s = t[here];
                let v = s + dt * (-(self.u1[here] * dx + self.u2[here] * dy)
                    + self.reaction.eval(s.clamp(0.0, 1.0)));
                rhs[here] = C64::new(v, 0.0);
            }
        }

        // crosswise FFT per row
        let mut scratch = vec![C64::new(0.0, 0.0); self.fft_fwd.get_inplace_scratch_len()];
        for row in rhs.chunks_mut(nc) {
            self.fft_fwd.process_with_scratch(row, &mut scratch);
        }

        // tridiagonal solves along the strip per crosswise mode, zero-flux ends
        let r = dt / (self.h1 * self.h1);
        let mut diag = vec![0.0f64; na];
        let mut col = vec![C64::new(0.0, 0.0); na];
        let mut cp = vec![0.0f64; na];
        for m in 0..nc {
            let base = 1.0 + dt * self.sigma2[m];
            for i in 0..na {
                let ends = usize::from(i == 0) + usize::from(i == na - 1);
                diag[i] = base + r * (2 - ends) as f64;
                col[i] = rhs[i * nc + m];
            }
            // Thomas
            cp[0] = -r / diag[0];
            col[0] /= diag[0];
            for i in 1..na {
                let denom = diag[i] + r * cp[i - 1];
                cp[i] = -r / denom;
                col[i] = (col[i] + r * col[i - 1]) / denom;
            }
            for i in (0..na - 1).rev() {
                let next = col[i + 1];
                col[i] -= cp[i] * next;
            }
            for i in 0..na {
                rhs[i * nc + m] = col[i];
            }
        }

        // inverse FFT per row, unnormalized inverse divided by nc
        let mut scratch = vec![C64::new(0.0, 0.0); self.fft_inv.get_inplace_scratch_len()];
        let inv_nc = 1.0 / nc as f64;
        for row in rhs.chunks_mut(nc) {
            self.fft_inv.process_with_scratch(row, &mut scratch);
        }
        for (out, c) in field.values.iter_mut().zip(&rhs) {
            *out = c.re * inv_nc;
        }
    }

    /// Integrate from the standard bump to `t_end`, tracking the half-level
    /// front and fitting the speed on the final third of the trajectory.
    pub fn run(&self, t_end: f64) -> Result<FrontTrajectory> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidParam { name: "t_end", reason: format!("{t_end}") });
        }
        let steps = (t_end / self.dt).ceil() as usize;
        let record_every = (steps / 256).max(1);
        let mut field = self.initial_bump();
        let mut times = Vec::new();
        let mut positions = Vec::new();
        let mut flags = SimFlags { positions_monotone: true, ..Default::default() };
        let guard = self.strip_len - 2.0 * self.period_len;

        for step in 0..steps {
            self.step(&mut field);
            if (step + 1) % record_every == 0 || step + 1 == steps {
                let time = (step + 1) as f64 * self.dt;
                let over = field
                    .values
                    .iter()
                    .fold(0.0f64, |m, &v| m.max(-v).max(v - 1.0));
                flags.max_overshoot = flags.max_overshoot.max(over);
                if let Some(pos) = front_position(&field, 0.5) {
                    times.push(time);
                    positions.push(pos);
                    if pos > guard {
                        flags.reached_boundary = true;
                        break;
                    }
                }
            }
        }

        if times.len() < 8 {
            return Err(Error::NotConverged {
                context: "front never formed on the strip".into(),
                residual: f64::NAN,
                iterations: steps,
            });
        }

        // fit on the final third
        let start = times.len() * 2 / 3;
        let (speed, _, speed_stderr) = linear_fit(&times[start..], &positions[start..]);
        for w in positions[start..].windows(2) {
            if w[1] < w[0] - 1e-9 * self.strip_len {
                flags.positions_monotone = false;
            }
        }

        Ok(FrontTrajectory { times, positions, speed, speed_stderr, flags })
    }
}

/// Evolve the temperature field and measure the spreading speed.
pub fn evolve(
    flow: &FlowField,
    amplitude: f64,
    reaction: &KppNonlinearity,
    strip_periods: usize,
    t_end: f64,
    dt: Option<f64>,
) -> Result<FrontTrajectory> {
    let sim = StripSim::new(flow, amplitude, reaction.clone(), strip_periods, dt)?;
    sim.run(t_end)
}
