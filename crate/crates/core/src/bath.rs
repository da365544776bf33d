//! Field spectral densities, the correlation function `γ(t)` and its
//! transforms, decay rates and Lamb shifts.
//!
//! Fourier convention: `γ̂(α) = (2π)^{-1/2} ∫ e^{iαt} γ(t) dt`. With
//! `γ(t) = ∫₀^∞ ρ(ω) e^{-iωt} dω` this gives `γ̂(α) = √(2π) ρ(α)`.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Error, Result};
use crate::interp::Pchip;
use crate::linalg::{C64, I};
use crate::quadrature::{composite_gl_adaptive, composite_gl_real};

pub const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Requested accuracy of the oscillatory quadratures.
pub const QUAD_TOL: f64 = 1e-11;
/// Spectral weight allowed beyond the frequency cutoff.
pub const CUTOFF_TAIL: f64 = 1e-8;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type ComplexFn = Arc<dyn Fn(f64) -> C64 + Send + Sync>;

/// Spectral weight `ρ(ω)` on `ω ≥ 0`, after radial reduction.
#[derive(Clone)]
pub enum Density {
    /// `ρ(ω) = scale · ω^s · e^{-ω/ω_c}`; closed-form correlation.
    Ohmic { scale: f64, s: f64, omega_c: f64 },
    /// Tabulated `(ω, ρ)` pairs with monotone cubic interpolation.
    Tabulated(Pchip),
    /// Arbitrary nonnegative density supported on `[0, support_max]`.
    Custom(RealFn),
}

impl std::fmt::Debug for Density {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Density::Ohmic { scale, s, omega_c } => {
                write!(f, "Ohmic {{ scale: {scale}, s: {s}, omega_c: {omega_c} }}")
            }
            Density::Tabulated(_) => write!(f, "Tabulated"),
            Density::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BathSpec {
    pub name: String,
    pub density: Density,
    /// Frequency cutoff `Ω` used by every quadrature and by the mode grid.
    pub support_max: f64,
    /// Certified decay `|γ(t)| ≤ C_γ / (1 + t)^m`.
    pub decay_c: f64,
    pub decay_m: f64,
    l1_cache: OnceLock<f64>,
}

/// Test function `B(ω)` on emitted-excitation frequencies.
#[derive(Clone)]
pub enum Observable {
    Constant(f64),
    /// `B(ω) = coeff · ω^k`.
    Power { coeff: f64, k: u32 },
    Custom(ComplexFn),
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Observable::Constant(c) => write!(f, "Constant({c})"),
            Observable::Power { coeff, k } => write!(f, "Power {{ coeff: {coeff}, k: {k} }}"),
            Observable::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Observable {
    pub fn eval(&self, omega: f64) -> C64 {
        match self {
            Observable::Constant(c) => C64::new(*c, 0.0),
            Observable::Power { coeff, k } => C64::new(coeff * omega.powi(*k as i32), 0.0),
            Observable::Custom(f) => f(omega),
        }
    }
}

/// Decay rate `β` and Lamb shift `α̃` of one level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayShift {
    pub beta: f64,
    pub shift: f64,
    /// `γ̂(α) > 0`, i.e. the transition frequency lies in the spectral support.
    pub well_coupled: bool,
}

impl BathSpec {
    /// `ρ(ω) = ω² e^{-ω}`: `γ(t) = 2/(1+it)³`, `γ̂(α) = √(2π) α² e^{-α}`.
    pub fn reference() -> Self {
        Self::ohmic(1.0, 2.0, 1.0).expect("reference bath parameters are valid")
    }

    pub fn ohmic(scale: f64, s: f64, omega_c: f64) -> Result<Self> {
        if !(scale > 0.0 && omega_c > 0.0 && s > 1.0) {
            return Err(Error::invalid(format!(
                "ohmic bath needs scale > 0, omega_c > 0 and s > 1 (decay exponent s+1 > 2); got scale={scale}, s={s}, omega_c={omega_c}"
            )));
        }
        let m = s + 1.0;
        let amplitude = scale * gamma(s + 1.0) * omega_c.powf(s + 1.0);
        let decay_c = amplitude * (1.0 + omega_c.powi(-2)).powf(0.5 * m);
        // Smallest integer multiple of ω_c leaving less than CUTOFF_TAIL beyond it.
        let tail = |x: f64| amplitude * gamma_ur(s + 1.0, x);
        let mut x = 1.0;
        while tail(x) >= CUTOFF_TAIL {
            x += 1.0;
        }
        Ok(Self {
            name: if scale == 1.0 && s == 2.0 && omega_c == 1.0 { "reference".into() } else { "ohmic".into() },
            density: Density::Ohmic { scale, s, omega_c },
            support_max: x * omega_c,
            decay_c,
            decay_m: m,
            l1_cache: OnceLock::new(),
        })
    }

    /// Arbitrary density on `[0, support_max]` with supplied decay constants.
    pub fn custom(name: &str, rho: RealFn, support_max: f64, decay_c: f64, decay_m: f64) -> Result<Self> {
        let bath = Self {
            name: name.into(),
            density: Density::Custom(rho),
            support_max,
            decay_c,
            decay_m,
            l1_cache: OnceLock::new(),
        };
        bath.check_density()?;
        Ok(bath)
    }

    /// Tabulated density from `(ω, ρ)` pairs. When the decay constants are
    /// not supplied they are estimated from sampled `|γ(t)|` with `m = 3`.
    pub fn tabulated(omega: Vec<f64>, rho: Vec<f64>, decay: Option<(f64, f64)>) -> Result<Self> {
        if rho.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::invalid("tabulated density must be nonnegative"));
        }
        if omega.first().map_or(true, |w| *w < 0.0) {
            return Err(Error::invalid("tabulated frequencies must be nonnegative"));
        }
        let pchip = Pchip::new(omega, rho)?;
        let support_max = pchip.x_max();
        let mut bath = Self {
            name: "tabulated".into(),
            density: Density::Tabulated(pchip),
            support_max,
            decay_c: f64::INFINITY,
            decay_m: 3.0,
            l1_cache: OnceLock::new(),
        };
        match decay {
            Some((c, m)) => {
                bath.decay_c = c;
                bath.decay_m = m;
            }
            None => {
                let mut c: f64 = 0.0;
                for t in log_grid(200.0, 120) {
                    let g = bath.correlation_quadrature(t)?.norm();
                    c = c.max(g * (1.0 + t).powf(bath.decay_m));
                }
                bath.decay_c = 1.05 * c;
            }
        }
        Ok(bath)
    }

    /// Reads a CSV with header `omega,rho` and strictly increasing `omega`.
    pub fn from_csv(path: &Path, decay: Option<(f64, f64)>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::invalid(format!("bath CSV {} lacks column `{name}`", path.display())))
        };
        let (iw, ir) = (col("omega")?, col("rho")?);
        let mut omega = Vec::new();
        let mut rho = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::invalid(format!("bad number in bath CSV row {:?}", rec.position())))
            };
            omega.push(parse(iw)?);
            rho.push(parse(ir)?);
        }
        Self::tabulated(omega, rho, decay)
    }

    fn check_density(&self) -> Result<()> {
        let n = 2000;
        for k in 0..=n {
            let w = self.support_max * k as f64 / n as f64;
            let r = self.density(w);
            if !(r >= 0.0) {
                return Err(Error::invalid(format!("spectral density negative at ω = {w}: {r}")));
            }
        }
        if !(self.decay_m > 2.0 && self.decay_c > 0.0 && self.decay_c.is_finite()) {
            return Err(Error::invalid("decay constants need m > 2 and 0 < C_γ < ∞"));
        }
        Ok(())
    }

    pub fn density(&self, omega: f64) -> f64 {
        if omega < 0.0 {
            return 0.0;
        }
        match &self.density {
            Density::Ohmic { scale, s, omega_c } => scale * omega.powf(*s) * (-omega / omega_c).exp(),
            Density::Tabulated(p) => {
                if omega > p.x_max() {
                    0.0
                } else {
                    p.eval(omega)
                }
            }
            Density::Custom(f) => {
                if omega > self.support_max {
                    0.0
                } else {
                    f(omega)
                }
            }
        }
    }

    /// Time scale on which `γ` varies near the origin.
    fn time_scale(&self) -> f64 {
        match &self.density {
            Density::Ohmic { omega_c, .. } => 1.0 / omega_c,
            _ => 1.0 / self.support_max.max(1e-12) * 8.0,
        }
    }

    pub fn has_closed_form(&self) -> bool {
        matches!(self.density, Density::Ohmic { .. })
    }

    fn ohmic_power(&self, extra: u32, t: f64) -> Option<C64> {
        match &self.density {
            Density::Ohmic { scale, s, omega_c } => {
                let p = s + 1.0 + extra as f64;
                let z = C64::new(1.0 / omega_c, t);
                Some((-p * z.ln()).exp() * (scale * gamma(p)))
            }
            _ => None,
        }
    }

    /// `γ(t) = ∫₀^∞ ρ(ω) e^{-iωt} dω`.
    pub fn correlation(&self, t: f64) -> Result<C64> {
        if t < 0.0 {
            return Ok(self.correlation(-t)?.conj());
        }
        if let Some(g) = self.ohmic_power(0, t) {
            return Ok(g);
        }
        match &self.density {
            Density::Tabulated(p) => Ok(p.fourier(t)),
            _ => self.correlation_quadrature(t),
        }
    }

    /// `γ(t)` by composite Gauss–Legendre over the density, independent of any
    /// closed form. Panels are no wider than `π/(4|t|)`.
    pub fn correlation_quadrature(&self, t: f64) -> Result<C64> {
        if t < 0.0 {
            return Ok(self.correlation_quadrature(-t)?.conj());
        }
        self.spectral_integral("correlation", t, |w| C64::new(self.density(w), 0.0))
    }

    fn spectral_integral<F: Fn(f64) -> C64>(&self, what: &'static str, t: f64, weight: F) -> Result<C64> {
        let omega_max = self.support_max;
        let by_phase = (4.0 * t.abs() * omega_max / PI).ceil() as usize;
        let panels = by_phase.max(64);
        let scale = composite_gl_real(0.0, omega_max, 64, |w| self.density(w)).max(1e-300);
        let (v, err) = composite_gl_adaptive(0.0, omega_max, panels, panels * 64, QUAD_TOL * scale, |w| {
            weight(w) * (-I * w * t).exp()
        });
        if err > 1e3 * QUAD_TOL * scale {
            return Err(Error::Quadrature { what, achieved: err, tol: QUAD_TOL * scale });
        }
        Ok(v)
    }

    /// `γ̂(α) = √(2π) ρ(α)`; zero off the support, never negative.
    pub fn fourier_hat(&self, alpha: f64) -> f64 {
        SQRT_2PI * self.density(alpha).max(0.0)
    }

    /// `∫₀^T e^{iαx} γ(x) dx`; `T = ∞` is accepted.
    ///
    /// For `T = ∞` the real part is `√(π/2) γ̂(α) = π ρ(α)` and the imaginary
    /// part is the principal value `P∫ ρ(ω)/(α − ω) dω`. Finite horizons use
    /// the closed-form correlation in the time domain when available and the
    /// spectral representation otherwise.
    pub fn half_line_transform(&self, alpha: f64, horizon: f64) -> Result<C64> {
        if !(horizon >= 0.0) {
            return Err(Error::invalid(format!("half-line horizon must be ≥ 0, got {horizon}")));
        }
        if horizon == 0.0 {
            return Ok(C64::new(0.0, 0.0));
        }
        if horizon.is_infinite() {
            return Ok(C64::new(PI * self.density(alpha), self.principal_value(alpha)?));
        }
        if self.has_closed_form() {
            self.half_line_time_domain(alpha, horizon)
        } else {
            self.half_line_spectral(alpha, horizon)
        }
    }

    /// Time-domain quadrature of `∫₀^T e^{iαx} γ(x) dx` on the closed-form
    /// or quadrature correlation.
    pub fn half_line_time_domain(&self, alpha: f64, horizon: f64) -> Result<C64> {
        let width = (0.5 * self.time_scale()).min(PI / (4.0 * alpha.abs().max(1e-12)));
        let panels = ((horizon / width).ceil() as usize).max(4);
        let mut failure = None;
        let (v, err) = composite_gl_adaptive(0.0, horizon, panels, panels * 16, QUAD_TOL, |x| {
            match self.correlation(x) {
                Ok(g) => (I * alpha * x).exp() * g,
                Err(e) => {
                    failure.get_or_insert(e);
                    C64::new(0.0, 0.0)
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if err > 1e3 * QUAD_TOL {
            return Err(Error::Quadrature { what: "half-line transform", achieved: err, tol: QUAD_TOL });
        }
        Ok(v)
    }

    /// Spectral route: `∫ ρ(ω) (e^{i(α−ω)T} − 1) / (i(α−ω)) dω`.
    pub fn half_line_spectral(&self, alpha: f64, horizon: f64) -> Result<C64> {
        let kernel = |w: f64| {
            let x = (alpha - w) * horizon;
            // (e^{ix} − 1)/(i x) · T, with the series near x = 0.
            let k = if x.abs() < 1e-4 {
                C64::new(1.0 - x * x / 6.0, x / 2.0 - x * x * x / 24.0)
            } else {
                ((I * x).exp() - 1.0) / (I * x)
            };
            k * horizon
        };
        let by_phase = (4.0 * horizon * self.support_max / PI).ceil() as usize;
        let panels = by_phase.max(64);
        let (v, err) =
            composite_gl_adaptive(0.0, self.support_max, panels, panels * 64, QUAD_TOL, |w| kernel(w) * self.density(w));
        if err > 1e3 * QUAD_TOL {
            return Err(Error::Quadrature { what: "half-line transform (spectral)", achieved: err, tol: QUAD_TOL });
        }
        Ok(v)
    }

    /// Truncation length `X*` with `C_γ / ((m−1)(1+X*)^{m−1}) < tol` and the
    /// corresponding tail bound.
    pub fn truncation_length(&self, tol: f64) -> (f64, f64) {
        let m1 = self.decay_m - 1.0;
        let x = (self.decay_c / (m1 * tol)).powf(1.0 / m1) - 1.0;
        let x = x.max(1.0);
        (x, self.tail_bound(x))
    }

    /// `∫_X^∞ |γ| ≤ C_γ / ((m−1)(1+X)^{m−1})`.
    pub fn tail_bound(&self, x: f64) -> f64 {
        let m1 = self.decay_m - 1.0;
        self.decay_c / (m1 * (1.0 + x).powf(m1))
    }

    /// `P∫₀^Ω ρ(ω) / (α − ω) dω` with the singularity subtracted.
    fn principal_value(&self, alpha: f64) -> Result<f64> {
        let omega_max = self.support_max;
        let width = 0.25 * self.time_scale().recip().min(omega_max / 16.0).max(1e-3);
        let pieces = |a: f64, b: f64| ((b - a) / width).ceil().max(4.0) as usize;
        if alpha <= 0.0 || alpha >= omega_max {
            let n = pieces(0.0, omega_max);
            let (v, err) =
                composite_gl_adaptive(0.0, omega_max, n, n * 64, QUAD_TOL, |w| C64::new(self.density(w) / (alpha - w), 0.0));
            if err > 1e3 * QUAD_TOL {
                return Err(Error::Quadrature { what: "principal value", achieved: err, tol: QUAD_TOL });
            }
            return Ok(v.re);
        }
        let rho_a = self.density(alpha);
        let h = 1e-6 * (1.0 + alpha);
        let slope = (self.density(alpha + h) - self.density(alpha - h)) / (2.0 * h);
        let regular = |w: f64| {
            let dw = alpha - w;
            let v = if dw.abs() < 1e-7 * (1.0 + alpha) {
                -slope
            } else {
                (self.density(w) - rho_a) / dw
            };
            C64::new(v, 0.0)
        };
        // Tabulated densities are integrated knot interval by knot interval,
        // where the interpolant is a single cubic.
        let breaks: Vec<f64> = match &self.density {
            Density::Tabulated(p) => {
                let mut b: Vec<f64> = std::iter::once(0.0)
                    .chain(p.knots().iter().cloned().filter(|&x| x > 0.0 && x < omega_max))
                    .chain([alpha, omega_max])
                    .collect();
                b.sort_by(|x, y| x.partial_cmp(y).expect("finite knots"));
                b.dedup();
                b
            }
            _ => vec![0.0, alpha, omega_max],
        };
        let tabulated = matches!(self.density, Density::Tabulated(_));
        let mut total = 0.0;
        let mut err = 0.0;
        for w in breaks.windows(2) {
            let n = if tabulated { 1 } else { pieces(w[0], w[1]) };
            let (v, e) = composite_gl_adaptive(w[0], w[1], n, n * 64, QUAD_TOL / breaks.len() as f64, regular);
            total += v.re;
            err += e;
        }
        if err > 1e3 * QUAD_TOL {
            return Err(Error::Quadrature { what: "principal value", achieved: err, tol: QUAD_TOL });
        }
        Ok(total + rho_a * (alpha / (omega_max - alpha)).ln())
    }

    /// `β = √(π/2)|v|² γ̂(α)` and `α̃ = √(2π)|v|² Im (χ₊γ)^(α)`.
    pub fn decay_and_shift(&self, coupling: C64, alpha: f64) -> Result<DecayShift> {
        let v2 = coupling.norm_sqr();
        let hat = self.fourier_hat(alpha);
        let well_coupled = hat > 0.0;
        if v2 == 0.0 {
            return Ok(DecayShift { beta: 0.0, shift: 0.0, well_coupled });
        }
        let pv = self.principal_value(alpha)?;
        Ok(DecayShift { beta: (PI / 2.0).sqrt() * v2 * hat, shift: v2 * pv, well_coupled })
    }

    /// `‖γ‖_{L¹(ℝ)} = 2 ∫₀^∞ |γ(t)| dt`.
    ///
    /// With a closed-form correlation the half line is mapped to `[0, 1)` by
    /// `t = x/(1−x)`. Otherwise the integral is taken up to `t = 200` and the
    /// certified tail bound is added, giving an upper estimate.
    pub fn l1_norm(&self) -> Result<f64> {
        if let Some(v) = self.l1_cache.get() {
            return Ok(*v);
        }
        let v = self.compute_l1_norm()?;
        Ok(*self.l1_cache.get_or_init(|| v))
    }

    fn compute_l1_norm(&self) -> Result<f64> {
        if !self.has_closed_form() {
            let x = 200.0;
            let panels = (x / (0.25 * self.time_scale())).ceil() as usize;
            let mut failure = None;
            let v = composite_gl_real(0.0, x, panels, |t| match self.correlation(t) {
                Ok(g) => g.norm(),
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            });
            return match failure {
                Some(e) => Err(e),
                None => Ok(2.0 * (v + self.tail_bound(x))),
            };
        }
        let mut failure = None;
        let mut integrate = |panels: usize| {
            composite_gl_real(0.0, 1.0, panels, |x| {
                let t = x / (1.0 - x);
                match self.correlation(t) {
                    Ok(g) => g.norm() / ((1.0 - x) * (1.0 - x)),
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                }
            })
        };
        let coarse = integrate(128);
        let fine = integrate(256);
        if let Some(e) = failure {
            return Err(e);
        }
        let err = (fine - coarse).abs();
        if err > 1e-8 {
            return Err(Error::Quadrature { what: "L1 norm", achieved: err, tol: 1e-8 });
        }
        Ok(2.0 * fine)
    }

    /// Checks `|γ(t)| ≤ C_γ/(1+t)^m` on a log-spaced grid up to `t_max`.
    pub fn certify_decay(&self, t_max: f64, points: usize) -> Result<()> {
        for t in log_grid(t_max, points) {
            let g = self.correlation(t)?.norm();
            let bound = self.decay_c / (1.0 + t).powf(self.decay_m);
            if g > bound * (1.0 + 1e-12) {
                return Err(Error::invalid(format!(
                    "decay bound violated at t = {t}: |γ| = {g:.3e} > {bound:.3e}"
                )));
            }
        }
        Ok(())
    }

    /// `ρ_B(ω) = B(ω) ρ(ω)`.
    pub fn weighted_density(&self, obs: &Observable, omega: f64) -> C64 {
        obs.eval(omega) * self.density(omega)
    }

    /// `γ_B(t) = ∫ B(ω) ρ(ω) e^{-iωt} dω`.
    pub fn weighted_correlation(&self, obs: &Observable, t: f64) -> Result<C64> {
        match obs {
            Observable::Constant(c) => Ok(self.correlation(t)? * *c),
            Observable::Power { coeff, k } if self.has_closed_form() => {
                Ok(self.ohmic_power(*k, t).expect("closed form available") * *coeff)
            }
            _ => self.spectral_integral("weighted correlation", t, |w| self.weighted_density(obs, w)),
        }
    }

    /// `γ̂_B(α) = √(2π) B(α) ρ(α)`.
    pub fn weighted_hat(&self, obs: &Observable, alpha: f64) -> C64 {
        self.weighted_density(obs, alpha) * SQRT_2PI
    }

    /// Numerical `∫|γ_B|` over `[-t_max, t_max]`, used to check that the test
    /// function gives an integrable weighted correlation.
    pub fn weighted_l1(&self, obs: &Observable, t_max: f64) -> Result<f64> {
        let panels = (t_max / (0.25 * self.time_scale())).ceil() as usize;
        let mut failure = None;
        let v = composite_gl_real(0.0, t_max, panels.max(8), |t| match self.weighted_correlation(obs, t) {
            Ok(g) => g.norm(),
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(2.0 * v),
        }
    }
}

/// `points` log-spaced times in `[0.01, t_max]`, plus the origin.
pub fn log_grid(t_max: f64, points: usize) -> Vec<f64> {
    let lo = 0.01f64.ln();
    let hi = t_max.ln();
    std::iter::once(0.0)
        .chain((0..points).map(|k| (lo + (hi - lo) * k as f64 / (points - 1).max(1) as f64).exp()))
        .collect()
}
