//! One-dimensional quadrature: adaptive Gauss-Kronrod and Gauss-Hermite.
//!
//! These rules serve as the permanent numerical oracle for the analytic
//! preintegration path, so they stay in the library rather than in test
//! code. The adaptive driver is a globally adaptive bisection scheme over
//! the 15-point Kronrod / 7-point Gauss pair.

use crate::linalg::jacobi_eigen;

/// Kronrod-15 abscissae (positive half, descending).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];

/// Kronrod-15 weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];

/// Gauss-7 weights for the odd entries of `XGK` plus the midpoint.
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// One Gauss-Kronrod panel: returns (kronrod estimate, error estimate).
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let x = half * XGK[k];
        let sum = f(center - x) + f(center + x);
        kronrod += WGK[k] * sum;
        if k % 2 == 1 {
            gauss += WG[k / 2] * sum;
        }
    }
    kronrod *= half;
    gauss *= half;
    (kronrod, (kronrod - gauss).abs())
}

/// Globally adaptive integration of `f` over [a, b].
///
/// Subdivides the interval with the largest local error until the total
/// error estimate drops below `abs_tol + rel_tol * |integral|` or the
/// panel budget is exhausted; returns the integral estimate either way.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    // Start from several panels: a single panel on a (near-)symmetric
    // integrand can report a deceptively small error through pure
    // cancellation and freeze the refinement loop.
    const INITIAL_PANELS: usize = 8;
    let width = (b - a) / INITIAL_PANELS as f64;
    let mut panels = Vec::with_capacity(INITIAL_PANELS);
    for k in 0..INITIAL_PANELS {
        let lo = a + k as f64 * width;
        let hi = if k + 1 == INITIAL_PANELS { b } else { lo + width };
        let (i0, e0) = gk15(&mut f, lo, hi);
        panels.push((lo, hi, i0, e0));
    }
    for _ in 0..2000 {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= abs_tol + rel_tol * total.abs() {
            break;
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).expect("finite errors"))
            .map(|(i, _)| i)
            .expect("at least one panel");
        let (pa, pb, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (pa + pb);
        let (il, el) = gk15(&mut f, pa, mid);
        let (ir, er) = gk15(&mut f, mid, pb);
        panels.push((pa, mid, il, el));
        panels.push((mid, pb, ir, er));
    }
    panels.iter().map(|p| p.2).sum()
}

/// Gauss-Hermite rule for the weight 1/sqrt(2 pi) exp(-x^2/2).
///
/// Nodes and weights via Golub-Welsch on the Jacobi matrix of the monic
/// (probabilists') Hermite polynomials; the weights sum to one, so
/// `sum w_i f(x_i)` approximates the expectation of f under a standard
/// normal.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut jac = vec![0.0; n * n];
    for k in 1..n {
        let off = (k as f64).sqrt();
        jac[(k - 1) * n + k] = off;
        jac[k * n + (k - 1)] = off;
    }
    let e = jacobi_eigen(&jac, n);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let first = e.vectors[k]; // row 0, column k
            (e.values[k], first * first)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite nodes"));
    let nodes = pairs.iter().map(|p| p.0).collect();
    let weights = pairs.iter().map(|p| p.1).collect();
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_panel_is_exact_for_polynomials() {
        // A 15-point Kronrod rule integrates degree <= 22 exactly.
        let (i, _) = gk15(&mut |x: f64| x.powi(20), 0.0, 1.0);
        assert!((i - 1.0 / 21.0).abs() < 1e-15);
        let (i, _) = gk15(&mut |x: f64| 7.0 * x.powi(6) - x + 2.0, -1.0, 3.0);
        let exact = 3f64.powi(7) + 1.0 - (0.5 * 9.0 - 0.5) + 8.0;
        assert!((i - exact).abs() < 1e-11 * exact.abs());
    }

    #[test]
    fn adaptive_matches_closed_forms() {
        let i = integrate(|x| x.exp(), 0.0, 1.0, 1e-14, 0.0);
        assert!((i - (1f64.exp() - 1.0)).abs() < 1e-13);
        let i = integrate(|x| 1.0 / (1.0 + x * x), -1.0, 1.0, 1e-14, 0.0);
        assert!((i - std::f64::consts::FRAC_PI_2).abs() < 1e-13);
        // A sharply peaked integrand that forces subdivision.
        let i = integrate(|x: f64| (-(x * x) * 400.0).exp(), -10.0, 10.0, 1e-13, 0.0);
        let exact = (std::f64::consts::PI / 400.0).sqrt();
        assert!((i - exact).abs() < 1e-12, "i = {i}, exact = {exact}");
    }

    #[test]
    fn hermite_moments() {
        for &n in &[1usize, 2, 8, 64] {
            let (x, w) = gauss_hermite(n);
            let m0: f64 = w.iter().sum();
            assert!((m0 - 1.0).abs() < 1e-13, "n = {n}: mass {m0}");
            let m1: f64 = x.iter().zip(&w).map(|(x, w)| w * x).sum();
            assert!(m1.abs() < 1e-13, "n = {n}: mean {m1}");
            if n >= 2 {
                let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
                assert!((m2 - 1.0).abs() < 1e-12, "n = {n}: variance {m2}");
            }
            if n >= 3 {
                let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
                assert!((m4 - 3.0).abs() < 1e-11, "n = {n}: fourth moment {m4}");
            }
        }
    }

    #[test]
    fn hermite_two_nodes_are_plus_minus_one() {
        let (x, w) = gauss_hermite(2);
        assert!((x[0] + 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        assert!((w[0] - 0.5).abs() < 1e-14 && (w[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn hermite_integrates_smooth_expectation() {
        // E[cos(X)] = exp(-1/2) for X ~ N(0,1).
        let (x, w) = gauss_hermite(64);
        let e: f64 = x.iter().zip(&w).map(|(x, w)| w * x.cos()).sum();
        assert!((e - (-0.5f64).exp()).abs() < 1e-14);
    }
}
