//! Matrix-free Krylov solvers: restarted GMRES for the non-symmetric cell and
//! resolvent operators, and preconditioned conjugate gradient for the normal
//! equations of the solvability criterion.

/// A linear map on flat f64 vectors.
pub trait LinOp {
    fn len(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinOp for (usize, F) {
    fn len(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.1)(x, y)
    }
}

#[derive(Debug, Clone)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iterations: usize,
    /// Convergence on the true relative residual |b - Ax| / |b|.
    pub tol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self { restart: 50, max_iterations: 10_000, tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Restarted GMRES with optional left preconditioning. The inner iteration
/// minimizes the preconditioned residual; convergence is decided on the true
/// residual, recomputed at every restart boundary.
pub fn gmres(
    op: &dyn LinOp,
    precond: Option<&dyn LinOp>,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &GmresOptions,
) -> (Vec<f64>, SolveStats) {
    let n = op.len();
    assert_eq!(b.len(), n);
    let b_norm = norm(b);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    if b_norm == 0.0 {
        return (vec![0.0; n], SolveStats { iterations: 0, residual: 0.0, converged: true });
    }

    let apply_prec = |v: &[f64], out: &mut Vec<f64>| match precond {
        Some(p) => {
            out.resize(n, 0.0);
            p.apply(v, out);
        }
        None => {
            out.clear();
            out.extend_from_slice(v);
        }
    };

    let m = opts.restart.max(1);
    let mut total_iters = 0usize;
    let mut scratch = vec![0.0; n];

    while total_iters < opts.max_iterations {
        // true residual r = b - A x
        op.apply(&x, &mut scratch);
        let r: Vec<f64> = b.iter().zip(&scratch).map(|(bi, ai)| bi - ai).collect();
        let true_res = norm(&r) / b_norm;
        if true_res <= opts.tol {
            return (x, SolveStats { iterations: total_iters, residual: true_res, converged: true });
        }

        let mut z = Vec::new();
        apply_prec(&r, &mut z);
        let beta = norm(&z);
        if beta == 0.0 {
            break;
        }
        for v in &mut z {
            *v /= beta;
        }

        let mut basis: Vec<Vec<f64>> = vec![z];
        let mut h = vec![vec![0.0f64; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut g = vec![0.0f64; m + 1];
        g[0] = beta;

        let mut k_done = 0;
        for k in 0..m {
            if total_iters >= opts.max_iterations {
                break;
            }
            total_iters += 1;

            op.apply(&basis[k], &mut scratch);
            let mut w = Vec::new();
            apply_prec(&scratch, &mut w);

            // modified Gram-Schmidt
            for (j, vj) in basis.iter().enumerate() {
                let hjk = dot(vj, &w);
                h[j][k] = hjk;
                axpy(-hjk, vj, &mut w);
            }
            let wn = norm(&w);
            h[k + 1][k] = wn;

            // apply stored Givens rotations to the new column
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + wn * wn).sqrt();
            if denom == 0.0 {
                k_done = k;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = wn / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_done = k + 1;

            let happy = wn <= 1e-280;
            if !happy {
                for v in &mut w {
                    *v /= wn;
                }
                basis.push(w);
            }

            // preconditioned residual estimate; leave early when well below
            // the target so the (cheap) true-residual check can confirm.
            if g[k + 1].abs() / beta <= 0.1 * opts.tol || happy {
                break;
            }
        }

        // solve the triangular system and update x
        let k = k_done;
        if k == 0 {
            break;
        }
        let mut y = vec![0.0f64; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for (j, yj) in y.iter().enumerate().skip(i + 1) {
                s -= h[i][j] * yj;
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            axpy(*yj, &basis[j], &mut x);
        }
    }

    op.apply(&x, &mut scratch);
    let r: Vec<f64> = b.iter().zip(&scratch).map(|(bi, ai)| bi - ai).collect();
    let true_res = norm(&r) / b_norm;
    let converged = true_res <= opts.tol;
    (x, SolveStats { iterations: total_iters, residual: true_res, converged })
}

/// Preconditioned conjugate gradient for symmetric positive definite systems.
pub fn pcg(
    op: &dyn LinOp,
    precond: Option<&dyn LinOp>,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iterations: usize,
) -> (Vec<f64>, SolveStats) {
    let n = op.len();
    let b_norm = norm(b);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    if b_norm == 0.0 {
        return (vec![0.0; n], SolveStats { iterations: 0, residual: 0.0, converged: true });
    }
    let mut ax = vec![0.0; n];
    op.apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z = vec![0.0; n];
    let apply_prec = |v: &[f64], out: &mut [f64]| match precond {
        Some(p) => p.apply(v, out),
        None => out.copy_from_slice(v),
    };
    apply_prec(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    let mut res = norm(&r) / b_norm;
    while res > tol && iterations < max_iterations {
        iterations += 1;
        op.apply(&p, &mut ax);
        let pap = dot(&p, &ax);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ax, &mut r);
        res = norm(&r) / b_norm;
        apply_prec(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    let converged = res <= tol;
    (x, SolveStats { iterations, residual: res, converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Dense {
        n: usize,
        a: Vec<f64>,
    }

    impl LinOp for Dense {
        fn len(&self) -> usize {
            self.n
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for i in 0..self.n {
                y[i] = (0..self.n).map(|j| self.a[i * self.n + j] * x[j]).sum();
            }
        }
    }

    fn lcg_seq(seed: u64, len: usize) -> Vec<f64> {
        let mut s = seed;
        (0..len)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 40;
        let mut a = lcg_seq(7, n * n);
        for (i, v) in a.iter_mut().enumerate() {
            *v *= 0.1;
            if i % (n + 1) == 0 {
                *v += 2.0;
            }
        }
        let op = Dense { n, a };
        let xt = lcg_seq(13, n);
        let mut b = vec![0.0; n];
        op.apply(&xt, &mut b);
        let (x, stats) = gmres(&op, None, &b, None, &GmresOptions::default());
        assert!(stats.converged, "residual {}", stats.residual);
        let err: f64 = x.iter().zip(&xt).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "max error {err}");
    }

    #[test]
    fn gmres_respects_warm_start() {
        let n = 16;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0 + i as f64;
        }
        let op = Dense { n, a };
        let xt: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; n];
        op.apply(&xt, &mut b);
        let (_, cold) = gmres(&op, None, &b, None, &GmresOptions::default());
        let (_, warm) = gmres(&op, None, &b, Some(&xt), &GmresOptions::default());
        assert!(warm.converged && cold.converged);
        assert!(warm.iterations <= 1);
    }

    #[test]
    fn gmres_hits_iteration_cap_without_lying() {
        let n = 30;
        let mut a = lcg_seq(3, n * n);
        for (i, v) in a.iter_mut().enumerate() {
            if i % (n + 1) == 0 {
                *v += 1.5;
            }
        }
        let op = Dense { n, a };
        let b = lcg_seq(5, n);
        let opts = GmresOptions { restart: 3, max_iterations: 4, tol: 1e-14 };
        let (_, stats) = gmres(&op, None, &b, None, &opts);
        assert!(!stats.converged);
        assert!(stats.iterations <= 4);
        assert!(stats.residual.is_finite());
    }

    #[test]
    fn pcg_solves_spd_system() {
        let n = 32;
        // SPD: A = M^T M + I
        let m = lcg_seq(11, n * n);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += m[k * n + i] * m[k * n + j];
                }
                a[i * n + j] = s + if i == j { 1.0 } else { 0.0 };
            }
        }
        let op = Dense { n, a };
        let xt = lcg_seq(17, n);
        let mut b = vec![0.0; n];
        op.apply(&xt, &mut b);
        let (x, stats) = pcg(&op, None, &b, None, 1e-12, 500);
        assert!(stats.converged);
        let err: f64 = x.iter().zip(&xt).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8);
    }
}
