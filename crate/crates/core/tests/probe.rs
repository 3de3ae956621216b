//! Exploratory measurements behind the acceptance-suite resolution choices.
//! Ignored by default; run e.g.
//!   cargo test -p frontflow --test probe -- --ignored --nocapture probe_gap

use std::time::Instant;

use frontflow::criterion::h1_least_squares;
use frontflow::flows::{build_flow, FlowSpec, ShearProfile};
use frontflow::frontspeed::EigenSolver;
use frontflow::homogenize::directional_sweep;
use frontflow::TorusGrid;

#[test]
#[ignore]
fn probe_gap_residual_collapse() {
    for n in [64usize, 128] {
        let flow = build_flow(
            &FlowSpec::GapFlow { gap: 0.25, exponent: 2.0 },
            &TorusGrid::square(n).unwrap(),
        )
        .unwrap();
        let cutoffs: Vec<usize> =
            [4usize, 8, 16, 24, 32, 48].iter().cloned().filter(|c| *c < n / 2).collect();
        let t = Instant::now();
        let diag = h1_least_squares(&flow, &[1.0, 0.0], &cutoffs).unwrap();
        println!("gap N={n} ({:?}):", t.elapsed());
        for ((c, r), g) in cutoffs.iter().zip(&diag.residuals).zip(&diag.grad_norms) {
            println!("  cutoff {c:3}: residual {r:.6e}  grad {g:.4}");
        }
        println!("  collapse r[0]/r[last] = {:.1}", diag.residuals[0] / diag.residuals.last().unwrap());
    }
}

#[test]
#[ignore]
fn probe_cell_solve_costs() {
    let t0 = Instant::now();
    let flow = build_flow(&FlowSpec::Cellular2D, &TorusGrid::square(128).unwrap()).unwrap();
    let sweep = directional_sweep(&flow, &[4.0, 16.0, 64.0], &[1.0, 0.0], 1e-10).unwrap();
    println!("cellular e1 N=128 ({:?}):", t0.elapsed());
    for d in &sweep {
        println!(
            "  A={:5}: D={:.6}  iters={}  res={:.2e}",
            d.amplitude, d.value, d.cell.iterations, d.cell.residual
        );
    }
    let slope = (sweep[2].value / sweep[1].value).ln() / 4.0f64.ln();
    println!("  slope 16->64: {slope:.3}");

    let t0 = Instant::now();
    let flow = build_flow(
        &FlowSpec::GapFlow { gap: 0.25, exponent: 2.0 },
        &TorusGrid::square(128).unwrap(),
    )
    .unwrap();
    let sweep = directional_sweep(&flow, &[16.0, 64.0, 256.0], &[1.0, 0.0], 1e-10).unwrap();
    println!("gap e1 N=128 ({:?}):", t0.elapsed());
    for d in &sweep {
        println!(
            "  A={:5}: D={:.6}  iters={}  res={:.2e}",
            d.amplitude, d.value, d.cell.iterations, d.cell.residual
        );
    }
    println!("  ratio D(256)/D(64) = {:.4}", sweep[2].value / sweep[1].value);

    let t0 = Instant::now();
    let sweep2 = directional_sweep(&flow, &[16.0, 64.0, 256.0], &[0.0, 1.0], 1e-10).unwrap();
    println!("gap e2 N=128 ({:?}):", t0.elapsed());
    for d in &sweep2 {
        println!(
            "  A={:5}: D={:.6}  iters={}  res={:.2e}",
            d.amplitude, d.value, d.cell.iterations, d.cell.residual
        );
    }

    let t0 = Instant::now();
    let flow = build_flow(
        &FlowSpec::Checkerboard { exponent: 2.0 },
        &TorusGrid::square(128).unwrap(),
    )
    .unwrap();
    let sweep = directional_sweep(&flow, &[4.0, 16.0, 64.0], &[1.0, 0.0], 1e-10).unwrap();
    println!("checkerboard e1 N=128 ({:?}):", t0.elapsed());
    for d in &sweep {
        println!(
            "  A={:5}: D={:.6}  iters={}  res={:.2e}",
            d.amplitude, d.value, d.cell.iterations, d.cell.residual
        );
    }
}

#[test]
#[ignore]
fn probe_cellular3d() {
    let t0 = Instant::now();
    let flow = build_flow(
        &FlowSpec::Cellular3D,
        &TorusGrid::cube(32, 2.0 * std::f64::consts::PI).unwrap(),
    )
    .unwrap();
    println!("3d flow built ({:?})", t0.elapsed());
    let t0 = Instant::now();
    let sweep = directional_sweep(&flow, &[2.0, 8.0, 32.0], &[1.0, 0.0, 0.0], 1e-9).unwrap();
    println!("cellular3d e1 N=32^3 ({:?}):", t0.elapsed());
    for d in &sweep {
        println!(
            "  A={:5}: D={:.6}  iters={}  res={:.2e}",
            d.amplitude, d.value, d.cell.iterations, d.cell.residual
        );
    }
    println!("  D(32)/D(2) = {:.3}", sweep[2].value / sweep[0].value);
}

#[test]
#[ignore]
fn probe_eigensolve_cost() {
    for n in [64usize, 128] {
        let flow = build_flow(&FlowSpec::Cellular2D, &TorusGrid::square(n).unwrap()).unwrap();
        for a in [8.0, 32.0] {
            let solver = EigenSolver::new(&flow, a, &[1.0, 0.0]).unwrap();
            let t0 = Instant::now();
            let p = solver.solve(0.05, 1e-8, None).unwrap();
            let cold = t0.elapsed();
            let t0 = Instant::now();
            let p2 = solver.solve(0.06, 1e-8, Some(&p.eigenfunction)).unwrap();
            let warm = t0.elapsed();
            println!(
                "N={n} A={a}: lambda=0.05 kappa={:.6e} outer={} inner={} cold={cold:?}; \
                 warm-neighbor outer={} inner={} {warm:?} (conv {} {})",
                p.kappa, p.iterations, p.inner_iterations, p2.iterations, p2.inner_iterations,
                p.converged, p2.converged
            );
        }
    }
    // shear at criterion-3 sizes
    let flow = build_flow(
        &FlowSpec::Shear { profile: ShearProfile::Sine },
        &TorusGrid::square(64).unwrap(),
    )
    .unwrap();
    let solver = EigenSolver::new(&flow, 4.0, &[1.0, 0.0]).unwrap();
    let t0 = Instant::now();
    let p = solver.solve(2.0, 1e-9, None).unwrap();
    println!(
        "shear N=64 A=4 lambda=2: kappa={:.8} outer={} inner={} ({:?})",
        p.kappa, p.iterations, p.inner_iterations, t0.elapsed()
    );
}

#[test]
#[ignore]
fn probe_gap_continuation() {
    for n in [128usize, 256] {
        let flow = build_flow(
            &FlowSpec::GapFlow { gap: 0.25, exponent: 2.0 },
            &TorusGrid::square(n).unwrap(),
        )
        .unwrap();
        let t0 = Instant::now();
        let sweep = directional_sweep(&flow, &[64.0, 256.0], &[1.0, 0.0], 1e-8).unwrap();
        println!(
            "gap e1 N={n}: D(64)={:.6} D(256)={:.6} ratio={:.4} ({:?})",
            sweep[0].value,
            sweep[1].value,
            sweep[1].value / sweep[0].value,
            t0.elapsed()
        );
    }
}

#[test]
#[ignore]
fn probe_no_collapse_flows() {
    for (name, spec) in [
        ("checkerboard", FlowSpec::Checkerboard { exponent: 2.0 }),
        ("cellular", FlowSpec::Cellular2D),
    ] {
        let flow = build_flow(&spec, &TorusGrid::square(128).unwrap()).unwrap();
        let t0 = Instant::now();
        let diag = h1_least_squares(&flow, &[1.0, 0.0], &[4, 8, 16, 32, 48]).unwrap();
        println!("{name} N=128 ({:?}):", t0.elapsed());
        for ((c, r), g) in diag.mode_cutoffs.iter().zip(&diag.residuals).zip(&diag.grad_norms) {
            println!("  cutoff {c:3}: residual {r:.6e}  grad {g:.4}");
        }
        println!(
            "  collapse factor {:.2}, grad growth {:.2}",
            diag.residuals[0] / diag.residuals.last().unwrap(),
            diag.grad_norms.last().unwrap() / diag.grad_norms[0].max(1e-12)
        );
    }
}
