//! One-dimensional interpolants for tabulated inputs.

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::quadrature::gl8;

fn check_abscissae(x: &[f64]) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::invalid("interpolation needs at least two points"));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("abscissae must be strictly increasing"));
    }
    Ok(())
}

fn locate(x: &[f64], t: f64) -> usize {
    match x.partition_point(|&xi| xi <= t) {
        0 => 0,
        k if k >= x.len() => x.len() - 2,
        k => k - 1,
    }
}

/// Natural cubic spline.
#[derive(Clone, Debug)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        check_abscissae(&x)?;
        if x.len() != y.len() {
            return Err(Error::invalid("spline abscissae and ordinates differ in length"));
        }
        let n = x.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm for the second derivatives.
            let mut c_prime = vec![0.0; n];
            let mut d_prime = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let a = h0 / 6.0;
                let b = (h0 + h1) / 3.0;
                let c = h1 / 6.0;
                let d = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
                let denom = b - a * c_prime[i - 1];
                c_prime[i] = c / denom;
                d_prime[i] = (d - a * d_prime[i - 1]) / denom;
            }
            for i in (1..n - 1).rev() {
                m[i] = d_prime[i] - c_prime[i] * m[i + 1];
            }
        }
        Ok(Self { x, y, m })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = locate(&self.x, t);
        let h = self.x[k + 1] - self.x[k];
        let a = (self.x[k + 1] - t) / h;
        let b = (t - self.x[k]) / h;
        a * self.y[k]
            + b * self.y[k + 1]
            + ((a * a * a - a) * self.m[k] + (b * b * b - b) * self.m[k + 1]) * h * h / 6.0
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson); keeps
/// nonnegative data nonnegative.
#[derive(Clone, Debug)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        check_abscissae(&x)?;
        if x.len() != y.len() {
            return Err(Error::invalid("interpolant abscissae and ordinates differ in length"));
        }
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { x, y, d })
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= *self.x.last().unwrap() {
            return *self.y.last().unwrap();
        }
        let k = locate(&self.x, t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        crate::quadrature::hermite(h, s, self.y[k], self.y[k + 1], self.d[k], self.d[k + 1])
    }

    pub fn x_max(&self) -> f64 {
        *self.x.last().unwrap()
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    /// `∫₀^{x_max} p(ω) e^{-iωt} dω`, with `p` held at its first value on
    /// `[0, x₀)`. Each cubic piece is integrated exactly by parts, or by
    /// 8-point Gauss–Legendre when its phase span `|t|h` is below 2.
    pub fn fourier(&self, t: f64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        if self.x[0] > 0.0 {
            acc += piece_fourier(0.0, self.x[0], [self.y[0], 0.0, 0.0, 0.0], t);
        }
        for k in 0..self.x.len() - 1 {
            let h = self.x[k + 1] - self.x[k];
            let (y0, y1, d0, d1) = (self.y[k], self.y[k + 1], self.d[k], self.d[k + 1]);
            let c = [y0, h * d0, 3.0 * (y1 - y0) - h * (2.0 * d0 + d1), 2.0 * (y0 - y1) + h * (d0 + d1)];
            acc += piece_fourier(self.x[k], h, c, t);
        }
        acc
    }
}

/// `∫_a^{a+h} q((ω−a)/h) e^{-iωt} dω` for the cubic `q(u) = Σ c_k u^k`.
fn piece_fourier(a: f64, h: f64, c: [f64; 4], t: f64) -> C64 {
    let q = |u: f64| c[0] + u * (c[1] + u * (c[2] + u * c[3]));
    if (t * h).abs() < 2.0 {
        let (xs, ws) = gl8();
        let mut acc = C64::new(0.0, 0.0);
        for (x, w) in xs.iter().zip(ws) {
            let u = 0.5 * (x + 1.0);
            acc += C64::from_polar(w * q(u), -(a + h * u) * t);
        }
        return acc * (0.5 * h);
    }
    // ∫ p e^{sω} = e^{sω} (p/s − p′/s² + p″/s³ − p‴/s⁴), s = −it.
    let s = C64::new(0.0, -t);
    let ends = |u: f64| {
        let p0 = q(u);
        let p1 = (c[1] + u * (2.0 * c[2] + 3.0 * u * c[3])) / h;
        let p2 = (2.0 * c[2] + 6.0 * u * c[3]) / (h * h);
        let p3 = 6.0 * c[3] / (h * h * h);
        C64::from_polar(1.0, -(a + h * u) * t) * (p0 / s - p1 / (s * s) + p2 / (s * s * s) - p3 / (s * s * s * s))
    };
    ends(1.0) - ends(0.0)
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}
