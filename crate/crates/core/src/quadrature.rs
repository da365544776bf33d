//! Gauss–Legendre rules, composite integration, and cumulative Simpson tables.

use crate::linalg::C64;
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Cached 8-point rule used by the composite integrators.
pub fn gl8() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(8))
}

/// Composite 8-point Gauss–Legendre over `[a, b]` with `panels` equal panels.
pub fn composite_gl<F: FnMut(f64) -> C64>(a: f64, b: f64, panels: usize, mut f: F) -> C64 {
    let (x, w) = gl8();
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut acc = C64::new(0.0, 0.0);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let mut s = C64::new(0.0, 0.0);
        for (xi, wi) in x.iter().zip(w) {
            s += f(mid + 0.5 * h * xi) * *wi;
        }
        acc += s * (0.5 * h);
    }
    acc
}

/// Real-valued variant of [`composite_gl`].
pub fn composite_gl_real<F: FnMut(f64) -> f64>(a: f64, b: f64, panels: usize, mut f: F) -> f64 {
    composite_gl(a, b, panels, |x| C64::new(f(x), 0.0)).re
}

/// Composite integration with doubling until two successive estimates agree to
/// `tol`. Returns the finer estimate and the last difference.
pub fn composite_gl_adaptive<F: FnMut(f64) -> C64>(
    a: f64,
    b: f64,
    initial_panels: usize,
    max_panels: usize,
    tol: f64,
    mut f: F,
) -> (C64, f64) {
    let mut panels = initial_panels.max(1);
    let mut prev = composite_gl(a, b, panels, &mut f);
    loop {
        panels *= 2;
        let next = composite_gl(a, b, panels, &mut f);
        let err = (next - prev).norm();
        if err <= tol || panels >= max_panels {
            return (next, err);
        }
        prev = next;
    }
}

/// Cumulative integral of uniformly sampled values with step `h`, fourth-order
/// accurate at every node (Simpson on node pairs, a four-point cubic rule for
/// the odd nodes).
pub fn cumulative_simpson(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * h * (values[0] + values[1]);
        return out;
    }
    let f = values;
    for k in 1..n {
        out[k] = if k % 2 == 0 {
            out[k - 2] + h / 3.0 * (f[k - 2] + 4.0 * f[k - 1] + f[k])
        } else if n < 4 {
            out[k - 1] + h / 12.0 * (5.0 * f[k - 1] + 8.0 * f[k] - f[k + 1])
        } else if k + 2 < n {
            out[k - 1] + h / 24.0 * (9.0 * f[k - 1] + 19.0 * f[k] - 5.0 * f[k + 1] + f[k + 2])
        } else {
            out[k - 1] + h / 24.0 * (f[k - 3] - 5.0 * f[k - 2] + 19.0 * f[k - 1] + 9.0 * f[k])
        };
    }
    out
}

/// Cubic Hermite interpolation on `[x0, x0 + h]` given end values and slopes.
#[inline]
pub fn hermite(h: f64, s: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}
