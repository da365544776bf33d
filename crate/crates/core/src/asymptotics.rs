//! Closed-form leading-order dynamics: exponential decay of each
//! instantaneous level with rate `λ²β_j/ε`, Lamb-shifted dynamical phases,
//! Berry phases, the coupling regimes, and the time-independent semigroup.

use std::fmt;

use crate::atom::EigenFrame;
use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::linalg::{c, column_projector, hermitian_eigh, CMat, CVec, C64, I};
use crate::quadrature::{cumulative_simpson, hermite};

/// Per-level `α_j`, `β_j`, `α̃_j` on the frame grid and their cumulative
/// integrals from the start of the grid.
#[derive(Clone, Debug)]
pub struct LevelTables {
    t0: f64,
    h: f64,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub shift: Vec<Vec<f64>>,
    int_alpha: Vec<Vec<f64>>,
    int_beta: Vec<Vec<f64>>,
    int_shift: Vec<Vec<f64>>,
}

impl LevelTables {
    pub fn new(frame: &EigenFrame, bath: &BathSpec) -> Result<Self> {
        let d = frame.dim();
        let times = frame.times();
        let mut alpha = vec![Vec::with_capacity(times.len()); d];
        let mut beta = vec![Vec::with_capacity(times.len()); d];
        let mut shift = vec![Vec::with_capacity(times.len()); d];
        for (k, &t) in times.iter().enumerate() {
            let v = frame.atom().coupling(t);
            for j in 0..d {
                let a = frame.node_values(k)[j];
                let ds = bath.decay_and_shift(v[j], a)?;
                alpha[j].push(a);
                beta[j].push(ds.beta);
                shift[j].push(ds.shift);
            }
        }
        let h = frame.step();
        let cum = |x: &Vec<Vec<f64>>| x.iter().map(|row| cumulative_simpson(row, h)).collect::<Vec<_>>();
        Ok(Self {
            t0: times[0],
            h,
            int_alpha: cum(&alpha),
            int_beta: cum(&beta),
            int_shift: cum(&shift),
            alpha,
            beta,
            shift,
        })
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    fn lookup(&self, table: &[f64], rate: &[f64], t: f64) -> f64 {
        let n = table.len() - 1;
        let x = ((t - self.t0) / self.h).clamp(0.0, n as f64);
        let k = (x.floor() as usize).min(n - 1);
        hermite(self.h, x - k as f64, table[k], table[k + 1], rate[k], rate[k + 1])
    }

    /// `β_j(t)` by linear interpolation of the node table.
    pub fn beta_at(&self, j: usize, t: f64) -> f64 {
        let n = self.beta[j].len() - 1;
        let x = ((t - self.t0) / self.h).clamp(0.0, n as f64);
        let k = (x.floor() as usize).min(n - 1);
        let s = x - k as f64;
        (1.0 - s) * self.beta[j][k] + s * self.beta[j][k + 1]
    }

    /// `∫_{t0}^t α_j`.
    pub fn integral_alpha(&self, j: usize, t: f64) -> f64 {
        self.lookup(&self.int_alpha[j], &self.alpha[j], t)
    }

    /// `∫_{t0}^t β_j`.
    pub fn integral_beta(&self, j: usize, t: f64) -> f64 {
        self.lookup(&self.int_beta[j], &self.beta[j], t)
    }

    /// `∫_{t0}^t α̃_j`.
    pub fn integral_shift(&self, j: usize, t: f64) -> f64 {
        self.lookup(&self.int_shift[j], &self.shift[j], t)
    }
}

/// `Σ_j exp(−(i/ε)∫[α_j + λ²α̃_j]) exp(−(λ²/ε)∫β_j) e^{iξ_j(t)} z_j(0) φ_j(t)`
/// with `z_j(0) = ⟨φ_j(0), z0⟩`.
pub fn leading_order_z(
    frame: &EigenFrame,
    tables: &LevelTables,
    eps: f64,
    lambda: f64,
    z0: &CVec,
    t: f64,
) -> Result<CVec> {
    let d = frame.dim();
    let coeffs = frame.node_vectors(0).adjoint() * z0;
    let (_, phi) = frame.at(t);
    let l2 = lambda * lambda;
    let mut out = CVec::zeros(d);
    for j in 0..d {
        let phase = (tables.integral_alpha(j, t) + l2 * tables.integral_shift(j, t)) / eps;
        let decay = (-(l2 / eps) * tables.integral_beta(j, t)).exp();
        let berry = frame.berry_phase(j, t)?;
        let amp = C64::from_polar(decay, berry - phase) * coeffs[j];
        out += phi.column(j) * amp;
    }
    Ok(out)
}

/// `p_j(t) ≈ e^{−2(λ²/ε)∫₀^t β_j} p_j(0)`.
pub fn population_approx(tables: &LevelTables, eps: f64, lambda: f64, p0: f64, j: usize, t: f64) -> f64 {
    (-2.0 * lambda * lambda / eps * tables.integral_beta(j, t)).exp() * p0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Strong,
    Davies,
    WeakA,
    WeakB,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Strong => "strong",
            Regime::Davies => "davies",
            Regime::WeakA => "weak_a",
            Regime::WeakB => "weak_b",
        })
    }
}

/// Thresholds on `r = λ²/ε` separating the regimes.
pub const STRONG_RATIO: f64 = 10.0;
pub const WEAK_RATIO: f64 = 0.1;

/// `r ≥ 10` strong, `0.1 ≤ r < 10` Davies, `r < 0.1` weak, split by
/// `λ²/ε² ≥ 1` (weak_a) or below (weak_b).
pub fn regime_classify(eps: f64, lambda: f64) -> Regime {
    let l2 = lambda * lambda;
    let r = l2 / eps;
    if r >= STRONG_RATIO {
        Regime::Strong
    } else if r >= WEAK_RATIO {
        Regime::Davies
    } else if l2 / (eps * eps) >= 1.0 {
        Regime::WeakA
    } else {
        Regime::WeakB
    }
}

/// A regime's de-excitation prediction and its remainder scale.
#[derive(Clone, Debug)]
pub struct RegimePrediction {
    pub regime: Regime,
    pub ratio: f64,
    pub p_down: f64,
    pub remainder: f64,
    pub formula: &'static str,
}

/// Evaluates the regime's `p↓(t)` formula for initial amplitudes `z0`.
pub fn regime_prediction(
    frame: &EigenFrame,
    tables: &LevelTables,
    eps: f64,
    lambda: f64,
    z0: &CVec,
    t: f64,
) -> RegimePrediction {
    let regime = regime_classify(eps, lambda);
    let l2 = lambda * lambda;
    let r = l2 / eps;
    let coeffs = frame.node_vectors(0).adjoint() * z0;
    let weights: Vec<f64> = coeffs.iter().map(|z| z.norm_sqr()).collect();
    let survival: f64 =
        (0..frame.dim()).map(|j| (-2.0 * r * tables.integral_beta(j, t)).exp() * weights[j]).sum();
    match regime {
        Regime::Strong => RegimePrediction {
            regime,
            ratio: r,
            p_down: 1.0 - survival,
            remainder: l2.powi(4) / (eps * eps),
            formula: "p_down >= 1 - C lambda^8/eps^2 (virtually full de-excitation)",
        },
        Regime::Davies => RegimePrediction {
            regime,
            ratio: r,
            p_down: 1.0 - survival,
            remainder: eps,
            formula: "p_down = 1 - sum_j exp(-2 (lambda^2/eps) int beta_j) |z_j(0)|^2",
        },
        Regime::WeakA => RegimePrediction {
            regime,
            ratio: r,
            p_down: 2.0 * r * (0..frame.dim()).map(|j| weights[j] * tables.integral_beta(j, t)).sum::<f64>(),
            remainder: eps + l2 * l2 / (eps * eps),
            formula: "p_down = 2 (lambda^2/eps) sum_j |z_j(0)|^2 int beta_j",
        },
        Regime::WeakB => RegimePrediction {
            regime,
            ratio: r,
            p_down: 0.0,
            remainder: eps,
            formula: "p_down = O(eps)",
        },
    }
}

/// Eigenvalues `α_j` and corrections `α′_j = α̃_j − iβ_j` of a constant atom.
pub fn time_independent_levels(a: &CMat, v: &CVec, bath: &BathSpec) -> Result<(Vec<f64>, CMat, Vec<C64>)> {
    if a.nrows() != v.len() {
        return Err(Error::invalid("coupling length differs from the atomic dimension"));
    }
    let (vals, vecs) = hermitian_eigh(a);
    let mut corr = Vec::with_capacity(vals.len());
    for (j, &alpha) in vals.iter().enumerate() {
        let ds = bath.decay_and_shift(v[j], alpha)?;
        corr.push(C64::new(ds.shift, -ds.beta));
    }
    Ok((vals.iter().cloned().collect(), vecs, corr))
}

/// `L = −i Σ_j (α_j + λ²α′_j) P_j`.
pub fn semigroup_generator(a: &CMat, v: &CVec, bath: &BathSpec, lambda: f64) -> Result<CMat> {
    let (vals, vecs, corr) = time_independent_levels(a, v, bath)?;
    let d = vals.len();
    Ok((0..d).fold(CMat::zeros(d, d), |acc, j| {
        acc + column_projector(&vecs, j) * (-I * (c(vals[j]) + corr[j] * (lambda * lambda)))
    }))
}

/// `Σ_j e^{−it(α_j + λ²α′_j)} P_j z0` (physical time, `ε = 1`); `v_j` is the
/// coupling component along the `j`-th eigenvector of `a`.
pub fn semigroup_time_independent(a: &CMat, v: &CVec, bath: &BathSpec, lambda: f64, z0: &CVec, t: f64) -> Result<CVec> {
    let (vals, vecs, corr) = time_independent_levels(a, v, bath)?;
    let d = vals.len();
    let mut out = CVec::zeros(d);
    for j in 0..d {
        let e = (-I * t * (c(vals[j]) + corr[j] * (lambda * lambda))).exp();
        out += column_projector(&vecs, j) * z0 * e;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::{ConstantAtom, FrameOptions};
    use crate::linalg::expm;
    use std::sync::Arc;

    #[test]
    fn constant_beta_population() {
        let atom = ConstantAtom { a: CMat::from_element(1, 1, c(1.0)), v: CVec::from_vec(vec![c(1.0)]) };
        let frame = EigenFrame::new(Arc::new(atom), FrameOptions::default()).unwrap();
        let tables = LevelTables::new(&frame, &BathSpec::reference()).unwrap();
        let p = population_approx(&tables, 0.1, 0.1f64.sqrt(), 1.0, 0, 1.0);
        let expect = (-2.0 * std::f64::consts::PI / 1f64.exp()).exp();
        assert!((p - expect).abs() < 1e-10);
        assert!((p - 0.0990).abs() < 5e-4);
        assert_eq!(population_approx(&tables, 0.1, 0.0, 0.7, 0, 1.0), 0.7);
    }

    #[test]
    fn regimes() {
        assert_eq!(regime_classify(0.01, 0.1f64.sqrt()), Regime::Strong);
        assert_eq!(regime_classify(0.05, 0.05f64.sqrt()), Regime::Davies);
        assert_eq!(regime_classify(0.1, 0.001f64.sqrt()), Regime::WeakB);
        assert_eq!(regime_classify(0.01, 0.0005f64.sqrt()), Regime::WeakA);
    }

    #[test]
    fn semigroup_zero_coupling_is_exponential() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0), C64::new(0.2, 0.1), C64::new(0.2, -0.1), c(2.0)]);
        let v = CVec::from_vec(vec![c(1.0), c(1.0)]);
        let z0 = CVec::from_vec(vec![c(0.8), C64::new(0.0, 0.6)]);
        let bath = BathSpec::reference();
        let z = semigroup_time_independent(&a, &v, &bath, 0.0, &z0, 3.0).unwrap();
        let exact = expm(&(a.clone() * (-I * 3.0))) * &z0;
        assert!((z - exact).norm() < 1e-12);
        let z_start = semigroup_time_independent(&a, &v, &bath, 0.1, &z0, 0.0).unwrap();
        assert!((z_start - z0).norm() < 1e-14);
    }
}
