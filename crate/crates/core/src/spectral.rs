//! Spectral perturbation theory for the non-Hermitian generator
//! `G_{ε,λ}(t)`: matched eigenvalues and rank-one projections, first-order
//! eigenvalue corrections, Riesz contour projections, and the adiabatic
//! evolution `V_{ε,λ} = W_{ε,λ} Ψ_{ε,λ}` as a diagnostic.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use crate::atom::{derivative4, EigenFrame};
use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::hilbert::fmt;
use crate::linalg::{c, eig, identity, op_norm, CMat, C64, I};
use crate::ode::rk4_matrix;
use crate::reduced::EffectiveGenerator;

/// Eigenvalues and projections of `G_{ε,λ}(t)`, indexed by unperturbed level.
#[derive(Clone, Debug)]
pub struct PerturbedSpectrum {
    pub values: Vec<C64>,
    /// `P_j = |r_j⟩⟨l_j|` with `⟨l_j, r_j⟩ = 1`.
    pub projections: Vec<CMat>,
}

impl PerturbedSpectrum {
    /// `Σ_j α_j P_j`.
    pub fn reconstruct(&self) -> CMat {
        let d = self.projections.len();
        self.values.iter().zip(&self.projections).fold(CMat::zeros(d, d), |acc, (v, p)| acc + p * *v)
    }
}

/// Dense eigendecomposition of `g`, with eigenvalues matched greedily to the
/// unperturbed levels `alpha` by distance; equal distances are resolved by
/// the overlap `|⟨φ_j, r⟩|` with the unperturbed eigenvectors (columns of
/// `phi`).
pub fn perturbed_spectrum(g: &CMat, alpha: &[f64], phi: &CMat) -> Result<PerturbedSpectrum> {
    let d = g.nrows();
    let e = eig(g).ok_or_else(|| Error::Contour("eigendecomposition failed".into()))?;
    // Two eigenvalues both within 1e-12 of the same level cannot be told apart.
    for (j, &a) in alpha.iter().enumerate() {
        let close = e.values.iter().filter(|mu| (**mu - a).norm() < 1e-12).count();
        if close > 1 {
            return Err(Error::Matching { level: j + 1 });
        }
    }
    let overlap = |j: usize, k: usize| phi.column(j).dotc(&e.right.column(k)).norm();
    let mut pairs: Vec<(usize, usize, f64)> = Vec::with_capacity(d * d);
    for j in 0..d {
        for k in 0..d {
            pairs.push((j, k, (e.values[k] - alpha[j]).norm()));
        }
    }
    pairs.sort_by(|x, y| {
        if (x.2 - y.2).abs() <= 1e-12 {
            overlap(y.0, y.1).total_cmp(&overlap(x.0, x.1))
        } else {
            x.2.total_cmp(&y.2)
        }
    });
    let mut level_of = vec![None; d];
    let mut used = vec![false; d];
    for (j, k, _) in pairs {
        if level_of[j].is_none() && !used[k] {
            level_of[j] = Some(k);
            used[k] = true;
        }
    }
    let mut values = Vec::with_capacity(d);
    let mut projections = Vec::with_capacity(d);
    for (j, k) in level_of.iter().enumerate() {
        let k = k.ok_or(Error::Matching { level: j + 1 })?;
        values.push(e.values[k]);
        projections.push(e.projection(k));
    }
    Ok(PerturbedSpectrum { values, projections })
}

/// `α′_j(t, ε) = −i |v_j|² ∫₀^{t/ε} e^{ixα_j} γ(x) dx`; `ε = 0` gives the
/// `t/ε → ∞` limit `α̃_j − iβ_j`.
pub fn first_order_correction(bath: &BathSpec, v_j: C64, alpha_j: f64, eps: f64, t: f64) -> Result<C64> {
    if t == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let horizon = if eps == 0.0 { f64::INFINITY } else { t / eps };
    Ok(-I * v_j.norm_sqr() * bath.half_line_transform(alpha_j, horizon)?)
}

/// `(1/2πi) ∮ f(z) dz` over the circle `|z − center| = radius` by the
/// `m`-node trapezoid rule.
pub fn contour_integral<F: FnMut(C64) -> C64>(center: C64, radius: f64, m: usize, mut f: F) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..m {
        let e = C64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64);
        acc += f(center + e * radius) * e;
    }
    acc * (radius / m as f64)
}

/// Riesz projection `−(1/2πi) ∮ (G − z)^{-1} dz` on the circle of radius
/// `radius` about `center`, starting from `m` nodes and doubling until two
/// successive rules agree to 1e-13.
pub fn riesz_projection(g: &CMat, center: C64, radius: f64, m: usize) -> Result<CMat> {
    let d = g.nrows();
    if let Some(e) = eig(g) {
        for mu in &e.values {
            let gap = ((*mu - center).norm() - radius).abs();
            if gap < 1e-8 {
                return Err(Error::Contour(format!(
                    "eigenvalue {mu} lies {gap:.2e} from the contour |z − {center}| = {radius}"
                )));
            }
        }
    }
    let rule = |m: usize| -> Option<CMat> {
        let mut acc = CMat::zeros(d, d);
        for k in 0..m {
            let e = C64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64);
            let z = center + e * radius;
            let res = (g - identity(d) * z).try_inverse()?;
            acc += res * e;
        }
        Some(acc * c(-radius / m as f64))
    };
    let mut m = m.max(4);
    let mut prev: Option<CMat> = None;
    while m <= 1 << 14 {
        match rule(m) {
            Some(p) => {
                if let Some(q) = &prev {
                    if (&p - q).camax() < 1e-13 * (1.0 + p.camax()) {
                        return Ok(p);
                    }
                }
                prev = Some(p);
            }
            None => prev = None,
        }
        m *= 2;
    }
    Err(Error::Contour("trapezoid rule on the contour did not converge".into()))
}

/// Perturbed spectrum of `G_{ε,λ}(t)` matched to the frame at `t`.
pub fn spectrum_at(gen: &EffectiveGenerator<'_>, t: f64) -> Result<PerturbedSpectrum> {
    let g = gen.at(t)?;
    let (alpha, phi) = gen.frame.at(t);
    perturbed_spectrum(&g, &alpha, &phi)
}

/// Diagnostic CSV `t, level, re, im, projection_distance` where the distance
/// is the operator norm `‖P_j(t,ε,λ) − P_j(t)‖`.
pub fn write_spectrum_diagnostics(path: &Path, gen: &EffectiveGenerator<'_>, times: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,level,re,im,projection_distance")?;
    for &t in times {
        let spec = spectrum_at(gen, t)?;
        for (j, (value, p)) in spec.values.iter().zip(&spec.projections).enumerate() {
            let dist = op_norm(&(p - gen.frame.projection(j, t)));
            writeln!(out, "{},{},{},{},{}", fmt(t), j + 1, fmt(value.re), fmt(value.im), fmt(dist))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `V_{ε,λ}(t, s) = W_{ε,λ}(t, s) Ψ_{ε,λ}(t, s)`, with `W_{ε,λ}` generated by
/// `K_{ε,λ} = Σ_j (∂_t P_j) P_j` of the perturbed projections and
/// `Ψ_{ε,λ} = Σ_j P_j(s) exp(−(i/ε) ∫_s^t [α_j + λ²α′_j])`.
pub fn adiabatic_evolution_diagnostic(
    frame: &EigenFrame,
    bath: &BathSpec,
    eps: f64,
    lambda: f64,
    t: f64,
    s: f64,
) -> Result<CMat> {
    let d = frame.dim();
    if t == s {
        return Ok(identity(d));
    }
    if t < s {
        return Err(Error::invalid("adiabatic evolution needs s ≤ t"));
    }
    let gen = EffectiveGenerator::new(frame, bath, eps, lambda);
    let (lo, hi) = frame.t_range();
    let h = frame.step().min(eps / 64.0);
    let projection = |j: usize, u: f64| -> Result<CMat> { Ok(spectrum_at(&gen, u)?.projections[j].clone()) };
    let failure = std::cell::RefCell::new(None);
    let dproj = |j: usize, u: f64, h: f64| {
        derivative4(
            |x| match projection(j, x) {
                Ok(p) => p,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    CMat::zeros(d, d)
                }
            },
            u,
            h,
            lo,
            hi,
        )
    };
    // Finite-difference consistency under step halving.
    for u in [s, 0.5 * (s + t), t] {
        for j in 0..d {
            let d1 = dproj(j, u, h);
            let d2 = dproj(j, u, 0.5 * h);
            let diff = (&d1 - &d2).camax();
            if diff > 1e-5 * (1.0 + d2.camax()) {
                return Err(Error::FrameSmoothness(format!(
                    "perturbed projection {} has inconsistent derivative at t = {u}: step halving changes it by {diff:.3e}",
                    j + 1
                )));
            }
        }
    }
    let kato = |u: f64| {
        (0..d).fold(CMat::zeros(d, d), |acc, j| {
            let p = projection(j, u).unwrap_or_else(|e| {
                failure.borrow_mut().get_or_insert(e);
                CMat::zeros(d, d)
            });
            acc + dproj(j, u, h) * p
        })
    };
    let steps = ((t - s) / h).ceil() as usize;
    let w = rk4_matrix(&kato, s, t, steps, identity(d));
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }

    // Phase exponents by composite Simpson.
    let n = 2 * steps.max(1);
    let hh = (t - s) / n as f64;
    let mut phases = vec![C64::new(0.0, 0.0); d];
    for k in 0..=n {
        let u = s + k as f64 * hh;
        let wgt = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        let alpha = frame.values_at(u);
        let v = frame.atom().coupling(u);
        for j in 0..d {
            let corr = first_order_correction(bath, v[j], alpha[j], eps, u)?;
            phases[j] += (c(alpha[j]) + corr * (lambda * lambda)) * (wgt * hh / 3.0);
        }
    }
    let ps = spectrum_at(&gen, s)?;
    let psi = (0..d).fold(CMat::zeros(d, d), |acc, j| acc + &ps.projections[j] * (-I * phases[j] / eps).exp());
    Ok(w * psi)
}
