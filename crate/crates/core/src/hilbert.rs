//! Exact single-excitation dynamics on a discretized field.
//!
//! The field is replaced by modes `ω_i` with couplings `g_i = √(u_i ρ(ω_i))`
//! and the system
//!
//! ```text
//! iε ż   = A(t) z + λ w(t) ⟨g, f⟩
//! iε ḟ_i = ω_i f_i + λ ⟨w(t), z⟩ g_i
//! ```
//!
//! is integrated in the interaction picture of the field,
//! `h_i = e^{iω_i t/ε} f_i`, which removes the fast mode phases.

use std::io::Write;
use std::path::Path;

use crate::atom::EigenFrame;
use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::linalg::{CVec, C64, I};
use crate::ode::{Dopri5, StepStats};
use crate::quadrature::gl8;

/// Weighted field modes.
#[derive(Clone, Debug)]
pub struct ModeGrid {
    pub omega: Vec<f64>,
    pub weights: Vec<f64>,
    pub g: Vec<f64>,
    /// `‖γ‖_{L¹}` of the underlying bath, carried for the smallness check.
    pub gamma_l1: f64,
    /// Physical time horizon on which `γ_N` was verified.
    pub horizon: f64,
    /// Achieved `max_t |γ_N(t) − γ(t)|` on the horizon.
    pub achieved: f64,
}

impl ModeGrid {
    /// Composite 8-point Gauss–Legendre on `[0, Ω]` with panel width `2πε`,
    /// i.e. mean node spacing `πε/4` and `N ≈ 4Ω/(πε)` modes. The grid is
    /// refined (panel width halved, at most three times) until
    /// `|γ_N − γ| ≤ tol_corr` on `t ≤ 1/ε`.
    pub fn discretize(bath: &BathSpec, eps: f64, tol_corr: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::invalid(format!("ε must lie in (0, 1], got {eps}")));
        }
        Self::for_horizon(bath, 1.0 / eps, tol_corr)
    }

    /// As [`ModeGrid::discretize`] for an arbitrary physical horizon `T`
    /// (panel width `2π/T`).
    pub fn for_horizon(bath: &BathSpec, horizon: f64, tol_corr: f64) -> Result<Self> {
        let l1 = bath.l1_norm()?;
        let mut width = 2.0 * std::f64::consts::PI / horizon;
        let mut last = None;
        for _ in 0..4 {
            let panels = (bath.support_max / width).ceil() as usize;
            let mut grid = Self::gauss_legendre(bath, panels, l1);
            grid.horizon = horizon;
            let achieved = grid.correlation_error(bath, horizon)?;
            grid.achieved = achieved;
            if achieved <= tol_corr {
                return Ok(grid);
            }
            last = Some((achieved, grid.len()));
            width *= 0.5;
        }
        let (achieved, modes) = last.expect("at least one attempt");
        Err(Error::Discretization { achieved, tol: tol_corr, modes })
    }

    /// Composite 8-point rule with a fixed number of panels, unverified.
    pub fn gauss_legendre(bath: &BathSpec, panels: usize, gamma_l1: f64) -> Self {
        let (x, w) = gl8();
        let panels = panels.max(1);
        let h = bath.support_max / panels as f64;
        let mut omega = Vec::with_capacity(8 * panels);
        let mut weights = Vec::with_capacity(8 * panels);
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for (xi, wi) in x.iter().zip(w) {
                omega.push(mid + 0.5 * h * xi);
                weights.push(0.5 * h * wi);
            }
        }
        let g = omega.iter().zip(&weights).map(|(o, u)| (u * bath.density(*o)).sqrt()).collect();
        Self { omega, weights, g, gamma_l1, horizon: 0.0, achieved: f64::NAN }
    }

    /// One mode at `ω₀` carrying the whole spectral weight `γ(0)`.
    pub fn single_mode(bath: &BathSpec, omega0: f64) -> Result<Self> {
        let total = bath.correlation(0.0)?.re;
        Ok(Self {
            omega: vec![omega0],
            weights: vec![1.0],
            g: vec![total.sqrt()],
            gamma_l1: bath.l1_norm()?,
            horizon: 0.0,
            achieved: f64::NAN,
        })
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// `γ_N(t) = Σ g_i² e^{-iω_i t}`.
    pub fn correlation(&self, t: f64) -> C64 {
        self.omega.iter().zip(&self.g).map(|(o, g)| (-I * o * t).exp() * (g * g)).sum()
    }

    /// `max |γ_N(t) − γ(t)|` on `t ∈ [0, horizon]`, sampled at spacing ≤ 0.05.
    pub fn correlation_error(&self, bath: &BathSpec, horizon: f64) -> Result<f64> {
        let samples = ((horizon / 0.05).ceil() as usize).max(16);
        let mut worst: f64 = 0.0;
        for k in 0..=samples {
            let t = horizon * k as f64 / samples as f64;
            worst = worst.max((self.correlation(t) - bath.correlation(t)?).norm());
        }
        Ok(worst)
    }
}

/// Sampled solution with populations and diagnostics.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub z: Vec<CVec>,
    /// `p_j(t) = |⟨φ_j(t), z(t)⟩|²` per sample.
    pub populations: Vec<Vec<f64>>,
    /// `1 − ‖z(t)‖²`.
    pub p_down: Vec<f64>,
    /// `|‖z‖² + ‖f‖² − 1|`; absent for reduced descriptions.
    pub norm_defect: Option<Vec<f64>>,
    /// Field amplitudes `f_t(ω_i)` per sample, when stored.
    pub field: Option<Vec<Vec<C64>>>,
    pub steps: StepStats,
}

impl Trajectory {
    /// Builds a trajectory from samples, computing populations on `frame`.
    pub fn from_samples(times: Vec<f64>, z: Vec<CVec>, frame: &EigenFrame) -> Self {
        let (populations, p_down) = populations(&times, &z, frame);
        Self { times, z, populations, p_down, ..Default::default() }
    }

    pub fn final_z(&self) -> &CVec {
        self.z.last().expect("nonempty trajectory")
    }

    /// `sup_k ‖self.z_k − other.z_k‖` over common sample times.
    pub fn sup_distance(&self, other: &Trajectory) -> Result<f64> {
        if self.times.len() != other.times.len()
            || self.times.iter().zip(&other.times).any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(Error::invalid("trajectories are sampled on different grids"));
        }
        Ok(self.z.iter().zip(&other.z).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    /// CSV with columns `t, z1_re, z1_im, …, p_1 … p_d, p_down, norm_defect`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let d = self.z.first().map_or(0, |z| z.len());
        let mut header = vec!["t".to_string()];
        for j in 1..=d {
            header.push(format!("z{j}_re"));
            header.push(format!("z{j}_im"));
        }
        for j in 1..=d {
            header.push(format!("p_{j}"));
        }
        header.push("p_down".into());
        header.push("norm_defect".into());
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.times.len() {
            let mut row = vec![fmt(self.times[k])];
            for z in self.z[k].iter() {
                row.push(fmt(z.re));
                row.push(fmt(z.im));
            }
            for p in &self.populations[k] {
                row.push(fmt(*p));
            }
            row.push(fmt(self.p_down[k]));
            row.push(self.norm_defect.as_ref().map_or("nan".into(), |d| fmt(d[k])));
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Field snapshot CSV `t, omega, abs2`.
    pub fn write_field_csv(&self, path: &Path, grid: &ModeGrid) -> Result<()> {
        let field = self.field.as_ref().ok_or_else(|| Error::invalid("trajectory carries no field amplitudes"))?;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t,omega,abs2")?;
        for (t, f) in self.times.iter().zip(field) {
            for (o, fi) in grid.omega.iter().zip(f) {
                writeln!(out, "{},{},{}", fmt(*t), fmt(*o), fmt(fi.norm_sqr()))?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Fixed-width scientific formatting used by every CSV writer.
pub fn fmt(x: f64) -> String {
    format!("{x:.12e}")
}

/// `p_j(t) = |⟨φ_j(t), z(t)⟩|²` and `p↓(t) = 1 − ‖z(t)‖²`.
pub fn populations(times: &[f64], z: &[CVec], frame: &EigenFrame) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut pops = Vec::with_capacity(times.len());
    let mut down = Vec::with_capacity(times.len());
    for (t, zt) in times.iter().zip(z) {
        let (_, vecs) = frame.at(*t);
        let amps = vecs.adjoint() * zt;
        pops.push(amps.iter().map(|a| a.norm_sqr()).collect());
        down.push(1.0 - zt.norm_squared());
    }
    (pops, down)
}

/// `n` equal steps of size close to `dt_out` covering `[0, t_end]`.
pub fn output_times(t_end: f64, dt_out: f64) -> Vec<f64> {
    let n = ((t_end / dt_out).round() as usize).max(1);
    (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
}

#[derive(Clone, Debug)]
pub struct ExactOptions {
    pub dt_out: f64,
    /// Error tolerance per unit time of the embedded Runge–Kutta pair.
    pub tol: f64,
    pub override_smallness: bool,
    pub store_field: bool,
    pub norm_limit: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self { dt_out: 1.0 / 200.0, tol: 1e-10, override_smallness: false, store_field: false, norm_limit: 1e-6 }
    }
}

/// `4λ²‖v‖²_∞‖γ‖_{L¹}/Δ₀`, rejecting values ≥ 1 unless overridden.
pub fn check_smallness(frame: &EigenFrame, gamma_l1: f64, lambda: f64, override_smallness: bool) -> Result<f64> {
    let v = frame.coupling_sup();
    let value = 4.0 * lambda * lambda * v * v * gamma_l1 / frame.gap();
    if value >= 1.0 && !override_smallness {
        return Err(Error::Smallness { value });
    }
    Ok(value)
}

/// State of the discretized system: atomic amplitudes and mode amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleExcitationState {
    pub z: CVec,
    pub f: Vec<C64>,
}

impl SingleExcitationState {
    pub fn norm_squared(&self) -> f64 {
        self.z.norm_squared() + self.f.iter().map(|x| x.norm_sqr()).sum::<f64>()
    }
}

/// Integrates from `state` at `t_from` to each of `outputs`, calling
/// `observe(t, z, f)` at each.
#[allow(clippy::too_many_arguments)]
pub fn evolve<O>(
    frame: &EigenFrame,
    grid: &ModeGrid,
    eps: f64,
    lambda: f64,
    state: &SingleExcitationState,
    t_from: f64,
    outputs: &[f64],
    tol: f64,
    mut observe: O,
) -> Result<StepStats>
where
    O: FnMut(f64, &[C64], &[C64]) -> Result<()>,
{
    let d = frame.dim();
    let n = grid.len();
    if state.z.len() != d || state.f.len() != n {
        return Err(Error::invalid("state dimensions do not match atom and mode grid"));
    }
    let atom = frame.atom().clone();
    let mut y: Vec<C64> = state.z.iter().cloned().collect();
    y.extend(state.f.iter().zip(&grid.omega).map(|(f, o)| (I * o * t_from / eps).exp() * f));
    let mut phase = vec![C64::new(0.0, 0.0); n];
    let mut f_buf = vec![C64::new(0.0, 0.0); n];
    let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
        let a = atom.hamiltonian(t);
        let w = frame.w_vector(t);
        let (z, h) = y.split_at(d);
        let mut gf = C64::new(0.0, 0.0);
        for i in 0..n {
            let p = C64::from_polar(1.0, grid.omega[i] * t / eps);
            phase[i] = p;
            gf += p.conj() * h[i] * grid.g[i];
        }
        let mut wz = C64::new(0.0, 0.0);
        for j in 0..d {
            wz += w[j].conj() * z[j];
        }
        let (dz, dh) = dy.split_at_mut(d);
        for r in 0..d {
            let mut s = w[r] * (gf * lambda);
            for col in 0..d {
                s += a[(r, col)] * z[col];
            }
            dz[r] = -I * s / eps;
        }
        let scale = -I * (lambda / eps) * wz;
        for i in 0..n {
            dh[i] = scale * phase[i] * grid.g[i];
        }
    };
    let solver = Dopri5 { tol, h_init: 1e-3 * eps, ..Default::default() };
    solver.integrate(rhs, t_from, &mut y, outputs, |t, y| {
        let (z, h) = y.split_at(d);
        for i in 0..n {
            f_buf[i] = (-I * grid.omega[i] * t / eps).exp() * h[i];
        }
        observe(t, z, &f_buf)
    })
}

/// Exact trajectory from `z0` with the field initially empty.
#[allow(clippy::too_many_arguments)]
pub fn propagate_exact(
    frame: &EigenFrame,
    grid: &ModeGrid,
    z0: &CVec,
    eps: f64,
    lambda: f64,
    t_end: f64,
    opts: &ExactOptions,
) -> Result<Trajectory> {
    if (z0.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("initial state must be normalized, ‖z0‖ = {}", z0.norm())));
    }
    let (lo, hi) = frame.t_range();
    if lo > 0.0 || hi < t_end - 1e-12 {
        return Err(Error::invalid(format!("eigenframe covers [{lo}, {hi}], need [0, {t_end}]")));
    }
    check_smallness(frame, grid.gamma_l1, lambda, opts.override_smallness)?;
    let outputs = output_times(t_end, opts.dt_out);
    let state = SingleExcitationState { z: z0.clone(), f: vec![C64::new(0.0, 0.0); grid.len()] };
    let mut times = Vec::with_capacity(outputs.len());
    let mut zs = Vec::with_capacity(outputs.len());
    let mut defects = Vec::with_capacity(outputs.len());
    let mut field = opts.store_field.then(Vec::new);
    // Initial sample.
    times.push(0.0);
    zs.push(z0.clone());
    defects.push(0.0);
    if let Some(f) = field.as_mut() {
        f.push(state.f.clone());
    }
    let stats = evolve(frame, grid, eps, lambda, &state, 0.0, &outputs[1..], opts.tol, |t, z, f| {
        let norm2: f64 = z.iter().map(|x| x.norm_sqr()).sum::<f64>() + f.iter().map(|x| x.norm_sqr()).sum::<f64>();
        let defect = (norm2 - 1.0).abs();
        if defect > opts.norm_limit {
            return Err(Error::Integrator { time: t, defect, limit: opts.norm_limit });
        }
        times.push(t);
        zs.push(CVec::from_column_slice(z));
        defects.push(defect);
        if let Some(store) = field.as_mut() {
            store.push(f.to_vec());
        }
        Ok(())
    })?;
    let mut traj = Trajectory::from_samples(times, zs, frame);
    traj.norm_defect = Some(defects);
    traj.field = field;
    traj.steps = stats;
    Ok(traj)
}

/// Final state of the exact dynamics from `state` at `t_from` to `t_to`
/// (either direction).
pub fn evolve_state(
    frame: &EigenFrame,
    grid: &ModeGrid,
    eps: f64,
    lambda: f64,
    state: &SingleExcitationState,
    t_from: f64,
    t_to: f64,
    tol: f64,
) -> Result<SingleExcitationState> {
    let mut out = state.clone();
    evolve(frame, grid, eps, lambda, state, t_from, &[t_to], tol, |_, z, f| {
        out.z = CVec::from_column_slice(z);
        out.f = f.to_vec();
        Ok(())
    })?;
    Ok(out)
}

/// `f_t(ω_i) = −i(λ/ε) g_i ∫₀^t ⟨w(s), z(s)⟩ e^{-i(t−s)ω_i/ε} ds` by the
/// trapezoid rule on the stored history, evaluated at the sample indices
/// `at`.
pub fn field_amplitude_closed_form(
    traj: &Trajectory,
    grid: &ModeGrid,
    frame: &EigenFrame,
    eps: f64,
    lambda: f64,
    at: &[usize],
) -> Result<Vec<Vec<C64>>> {
    let omega_max = grid.omega.iter().cloned().fold(0.0, f64::max);
    let dt_max = traj.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let phase_step = omega_max * dt_max / eps;
    if phase_step > 0.5 {
        return Err(Error::Resolution(format!(
            "history spacing {dt_max:.3e} gives phase step {phase_step:.3} rad > 0.5 at ω = {omega_max}; need dt ≤ {:.3e}",
            0.5 * eps / omega_max
        )));
    }
    let coupling: Vec<C64> =
        traj.times.iter().zip(&traj.z).map(|(t, z)| frame.w_vector(*t).dotc(z)).collect();
    let mut out = Vec::with_capacity(at.len());
    for &k in at {
        let t = traj.times[k];
        let mut f = vec![C64::new(0.0, 0.0); grid.len()];
        if k > 0 {
            for (i, fi) in f.iter_mut().enumerate() {
                let kappa = grid.omega[i] / eps;
                let mut acc = C64::new(0.0, 0.0);
                for m in 0..k {
                    let (s0, s1) = (traj.times[m], traj.times[m + 1]);
                    let a = coupling[m] * (-I * kappa * (t - s0)).exp();
                    let b = coupling[m + 1] * (-I * kappa * (t - s1)).exp();
                    acc += (a + b) * (0.5 * (s1 - s0));
                }
                *fi = -I * (lambda / eps) * grid.g[i] * acc;
            }
        }
        out.push(f);
    }
    Ok(out)
}
