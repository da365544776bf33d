//! Observable averages of the emitted excitation and their limit laws.

use std::io::Write;
use std::path::Path;

use crate::asymptotics::LevelTables;
use crate::atom::EigenFrame;
use crate::bath::{BathSpec, Observable};
use crate::error::{Error, Result};
use crate::hilbert::{fmt, ModeGrid, Trajectory};
use crate::linalg::C64;

/// `⟨B⟩_t = Σ_i B(ω_i)|f_t(ω_i)|²` per stored sample.
pub fn observable_average(traj: &Trajectory, grid: &ModeGrid, obs: &Observable) -> Result<Vec<C64>> {
    let field = traj.field.as_ref().ok_or_else(|| Error::invalid("trajectory carries no field amplitudes"))?;
    let b: Vec<C64> = grid.omega.iter().map(|&o| obs.eval(o)).collect();
    Ok(field.iter().map(|f| f.iter().zip(&b).map(|(fi, bi)| bi * fi.norm_sqr()).sum()).collect())
}

/// `γ̂_B(α_j(0)) / γ̂(α_j(0))`.
pub fn regime_a_limit(frame: &EigenFrame, bath: &BathSpec, obs: &Observable, j: usize) -> Result<C64> {
    let alpha = frame.node_values(0)[j];
    let hat = bath.fourier_hat(alpha);
    if hat <= 0.0 {
        return Err(Error::WellCoupledness { level: j + 1 });
    }
    Ok(bath.weighted_hat(obs, alpha) / hat)
}

/// Simpson intervals per segment of the graded mesh.
const SEGMENT_INTERVALS: usize = 64;
/// Decay factor below which the remaining integrand is dropped.
const NEGLIGIBLE_DECAY: f64 = 1e-18;

/// `√(2π) r ∫₀^t |⟨w(s), φ_j(s)⟩|² e^{−2r∫₀^s β_j} γ̂_B(α_j(s)) ds`.
///
/// Each Simpson segment spans at most two local decay lengths `1/(2rβ_j)`,
/// so the initial layer of width `O(1/r)` is resolved at any `r`.
pub fn regime_b_limit(
    frame: &EigenFrame,
    bath: &BathSpec,
    tables: &LevelTables,
    obs: &Observable,
    j: usize,
    r: f64,
    t: f64,
) -> Result<C64> {
    if r <= 0.0 {
        return Err(Error::invalid(format!("r must be positive, got {r}")));
    }
    if t <= 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let integrand = |s: f64| {
        let alpha = frame.values_at(s)[j];
        let v2 = frame.atom().coupling(s)[j].norm_sqr();
        let decay = (-2.0 * r * tables.integral_beta(j, s)).exp();
        bath.weighted_hat(obs, alpha) * (v2 * decay)
    };
    let mut a = 0.0;
    let mut acc = C64::new(0.0, 0.0);
    while a < t {
        if (-2.0 * r * tables.integral_beta(j, a)).exp() < NEGLIGIBLE_DECAY {
            break;
        }
        let kappa = 2.0 * r * tables.beta_at(j, a);
        let b = if kappa > 0.0 { (a + 2.0 / kappa).min(t) } else { t };
        acc += simpson(a, b, SEGMENT_INTERVALS, &integrand);
        a = b;
    }
    Ok(acc * (crate::bath::SQRT_2PI * r))
}

fn simpson(a: f64, b: f64, n: usize, f: &impl Fn(f64) -> C64) -> C64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        acc += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * (h / 3.0)
}

/// Coupling ratios used for the `r → ∞` extrapolation.
pub const EXTRAPOLATION_RATIOS: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];

/// Regime-B limits at [`EXTRAPOLATION_RATIOS`] and their `r → ∞` value from
/// a first-order fit in `1/r` through the two largest ratios.
pub fn regime_b_extrapolated(
    frame: &EigenFrame,
    bath: &BathSpec,
    tables: &LevelTables,
    obs: &Observable,
    j: usize,
    t: f64,
) -> Result<(Vec<C64>, C64)> {
    let values = EXTRAPOLATION_RATIOS
        .iter()
        .map(|&r| regime_b_limit(frame, bath, tables, obs, j, r, t))
        .collect::<Result<Vec<_>>>()?;
    let (r1, r2) = (EXTRAPOLATION_RATIOS[2], EXTRAPOLATION_RATIOS[3]);
    let limit = (values[3] * r2 - values[2] * r1) / (r2 - r1);
    Ok((values, limit))
}

/// `(λ²/ε²) ∫₀^t∫₀^t conj(y(s)) y(s') γ_B((s−s')/ε) ds ds'` with
/// `y = ⟨w, z⟩`, by the product trapezoid rule on the stored samples up to
/// index `k`. Cross-check of the mode sum.
pub fn double_integral_average(
    traj: &Trajectory,
    frame: &EigenFrame,
    bath: &BathSpec,
    obs: &Observable,
    eps: f64,
    lambda: f64,
    k: usize,
) -> Result<C64> {
    let times = &traj.times[..=k];
    if k == 0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let mut weighted = Vec::with_capacity(times.len());
    for (m, &s) in times.iter().enumerate() {
        let left = if m > 0 { s - times[m - 1] } else { 0.0 };
        let right = if m < k { times[m + 1] - s } else { 0.0 };
        weighted.push(frame.w_vector(s).dotc(&traj.z[m]) * (0.5 * (left + right)));
    }
    let mut acc = C64::new(0.0, 0.0);
    for (a, &sa) in times.iter().enumerate() {
        for (b, &sb) in times.iter().enumerate() {
            acc += weighted[a].conj() * weighted[b] * bath.weighted_correlation(obs, (sa - sb) / eps)?;
        }
    }
    Ok(acc * (lambda * lambda / (eps * eps)))
}

/// Spectrum CSV `t, omega, abs2, b` followed by one summary row
/// `t, avg, ⟨B⟩_t, limit` for the final sample.
pub fn write_spectrum_csv(
    path: &Path,
    traj: &Trajectory,
    grid: &ModeGrid,
    obs: &Observable,
    limit: f64,
) -> Result<()> {
    let field = traj.field.as_ref().ok_or_else(|| Error::invalid("trajectory carries no field amplitudes"))?;
    let averages = observable_average(traj, grid, obs)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,omega,abs2,b")?;
    for (t, f) in traj.times.iter().zip(field) {
        for (o, fi) in grid.omega.iter().zip(f) {
            writeln!(out, "{},{},{},{}", fmt(*t), fmt(*o), fmt(fi.norm_sqr()), fmt(obs.eval(*o).re))?;
        }
    }
    let last = traj.times.len() - 1;
    writeln!(out, "{},avg,{},{}", fmt(traj.times[last]), fmt(averages[last].re), fmt(limit))?;
    out.flush()?;
    Ok(())
}
