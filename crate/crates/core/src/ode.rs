//! Time integrators: an adaptive Dormand–Prince 5(4) scheme for large complex
//! systems and a fourth-order Magnus stepper for small matrix generators.

use crate::error::{Error, Result};
use crate::linalg::{commutator, expm, identity, CMat, C64, I};

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Adaptive embedded Runge–Kutta 5(4) with FSAL. The local error estimate is
/// the Euclidean norm of the embedded difference, compared against
/// `tol · |h|` (error per unit time).
#[derive(Clone, Debug)]
pub struct Dopri5 {
    pub tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self { tol: 1e-10, h_init: 1e-4, h_min: 1e-13, h_max: f64::INFINITY, max_steps: 50_000_000 }
    }
}

impl Dopri5 {
    /// Integrates `y' = f(t, y)` from `t0` through each time in `outputs`
    /// (monotone in the direction of integration), calling `observe` at each.
    pub fn integrate<F, O>(&self, mut f: F, t0: f64, y: &mut [C64], outputs: &[f64], mut observe: O) -> Result<StepStats>
    where
        F: FnMut(f64, &[C64], &mut [C64]),
        O: FnMut(f64, &[C64]) -> Result<()>,
    {
        let n = y.len();
        let mut k: Vec<Vec<C64>> = (0..7).map(|_| vec![C64::new(0.0, 0.0); n]).collect();
        let mut tmp = vec![C64::new(0.0, 0.0); n];
        let mut y_new = vec![C64::new(0.0, 0.0); n];
        let mut stats = StepStats::default();
        let mut t = t0;
        let dir = match outputs.last() {
            Some(&last) if last < t0 => -1.0,
            _ => 1.0,
        };
        let mut h = self.h_init.abs().min(self.h_max) * dir;
        f(t, y, &mut k[0]);

        for &target in outputs {
            while (target - t) * dir > 1e-15 * (1.0 + t.abs()) {
                if stats.accepted + stats.rejected >= self.max_steps {
                    return Err(Error::Stiffness { time: t, step: h.abs() });
                }
                let clipped = (target - t) * dir <= h.abs();
                let step = if clipped { target - t } else { h };

                macro_rules! stage {
                    ($dst:expr, $tt:expr, [$(($a:expr, $ki:expr)),*]) => {{
                        for i in 0..n {
                            let mut s = y[i];
                            $( s += k[$ki][i] * ($a * step); )*
                            tmp[i] = s;
                        }
                        let (head, tail) = k.split_at_mut($dst);
                        let _ = head;
                        f($tt, &tmp, &mut tail[0]);
                    }};
                }
                stage!(1, t + C2 * step, [(A21, 0)]);
                stage!(2, t + C3 * step, [(A31, 0), (A32, 1)]);
                stage!(3, t + C4 * step, [(A41, 0), (A42, 1), (A43, 2)]);
                stage!(4, t + C5 * step, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
                stage!(5, t + step, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
                for i in 0..n {
                    y_new[i] = y[i]
                        + (k[0][i] * B1 + k[2][i] * B3 + k[3][i] * B4 + k[4][i] * B5 + k[5][i] * B6) * step;
                }
                {
                    let (head, tail) = k.split_at_mut(6);
                    let _ = head;
                    f(t + step, &y_new, &mut tail[0]);
                }
                let mut err2 = 0.0;
                for i in 0..n {
                    let e = (k[0][i] * E1
                        + k[2][i] * E3
                        + k[3][i] * E4
                        + k[4][i] * E5
                        + k[5][i] * E6
                        + k[6][i] * E7)
                        * step;
                    err2 += e.norm_sqr();
                }
                let err = err2.sqrt() / (self.tol * step.abs());
                if err <= 1.0 || step.abs() <= self.h_min {
                    if !err.is_finite() {
                        return Err(Error::Stiffness { time: t, step: step.abs() });
                    }
                    t += step;
                    y.copy_from_slice(&y_new);
                    k.swap(0, 6);
                    stats.accepted += 1;
                    let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    if !clipped {
                        h = (h * grow).clamp(-self.h_max, self.h_max);
                    } else if grow < 1.0 {
                        h *= grow;
                    }
                } else {
                    stats.rejected += 1;
                    h = step * (0.9 * err.powf(-0.25)).clamp(0.1, 0.9);
                    if h.abs() < self.h_min {
                        return Err(Error::Stiffness { time: t, step: h.abs() });
                    }
                }
            }
            t = target;
            observe(t, y)?;
        }
        Ok(stats)
    }
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// One fourth-order Magnus step for `iε ∂ₜU = G(t) U` over `[t, t + h]`,
/// returning the step propagator.
pub fn magnus4_step<G: Fn(f64) -> CMat>(gen: &G, eps: f64, t: f64, h: f64) -> CMat {
    let t1 = t + h * (0.5 - SQRT3 / 6.0);
    let t2 = t + h * (0.5 + SQRT3 / 6.0);
    let scale = -I / eps;
    let m1 = gen(t1) * scale;
    let m2 = gen(t2) * scale;
    let omega = (&m1 + &m2) * C64::new(0.5 * h, 0.0) + commutator(&m2, &m1) * C64::new(SQRT3 * h * h / 12.0, 0.0);
    expm(&omega)
}

/// Propagator of `iε ∂ₜU = G(t) U` from `s` to `t` using `steps` Magnus steps.
pub fn magnus4_propagate<G: Fn(f64) -> CMat>(gen: &G, eps: f64, s: f64, t: f64, steps: usize, dim: usize) -> CMat {
    let mut u = identity(dim);
    if steps == 0 || t == s {
        return u;
    }
    let h = (t - s) / steps as f64;
    for k in 0..steps {
        u = magnus4_step(gen, eps, s + k as f64 * h, h) * u;
    }
    u
}

/// Classical RK4 for `∂ₜW = K(t) W`, with `steps` equal steps from `s` to `t`.
pub fn rk4_matrix<K: Fn(f64) -> CMat>(gen: &K, s: f64, t: f64, steps: usize, w0: CMat) -> CMat {
    let mut w = w0;
    if steps == 0 || t == s {
        return w;
    }
    let h = (t - s) / steps as f64;
    let hc = C64::new(h, 0.0);
    for k in 0..steps {
        let tk = s + k as f64 * h;
        let k1 = gen(tk) * &w;
        let k2 = gen(tk + 0.5 * h) * (&w + &k1 * (hc * 0.5));
        let k3 = gen(tk + 0.5 * h) * (&w + &k2 * (hc * 0.5));
        let k4 = gen(tk + h) * (&w + &k3 * hc);
        w += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * (hc / 6.0);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn dopri_harmonic_oscillator() {
        // y' = -i ω y
        let w = 3.0;
        let mut y = vec![c(1.0)];
        let outs: Vec<f64> = (1..=10).map(|k| k as f64 * 0.5).collect();
        let mut got = vec![];
        let solver = Dopri5 { tol: 1e-11, ..Default::default() };
        solver
            .integrate(
                |_, y, dy| dy[0] = -I * w * y[0],
                0.0,
                &mut y,
                &outs,
                |t, y| {
                    got.push((t, y[0]));
                    Ok(())
                },
            )
            .unwrap();
        for (t, v) in got {
            assert!((v - (-I * w * t).exp()).norm() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn dopri_backward() {
        let mut y = vec![c(2.0)];
        let solver = Dopri5::default();
        solver.integrate(|_, y, dy| dy[0] = y[0] * 0.5, 1.0, &mut y, &[0.0], |_, _| Ok(())).unwrap();
        assert!((y[0].re - 2.0 * (-0.5f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn magnus_constant_generator_is_exact() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0), c(0.3), c(0.3), c(2.0)]);
        let u = magnus4_propagate(&|_| a.clone(), 0.5, 0.0, 1.0, 7, 2);
        let exact = expm(&(a * (-I / 0.5)));
        assert!((u - exact).camax() < 1e-12);
    }
}
