//! Reduced atomic dynamics: the free propagator `U_ε`, the exact Volterra
//! equation for the interaction-picture amplitudes, and the effective
//! non-Hermitian generator `G_{ε,λ}(t)`.

use crate::atom::EigenFrame;
use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::hilbert::{output_times, Trajectory};
use crate::linalg::{c, column_projector, identity, unitarity_defect, CMat, CVec, C64, I};
use crate::ode::{magnus4_propagate, magnus4_step};
use crate::quadrature::gl8;

/// Largest phase `‖A‖ h/ε` allowed in one Magnus step.
pub const MAX_PHASE: f64 = 0.1;

fn magnus_steps(frame: &EigenFrame, eps: f64, span: f64) -> usize {
    let norm_a = frame.hamiltonian_sup().max(1e-12);
    ((span.abs() * norm_a / (MAX_PHASE * eps)).ceil() as usize).max(1)
}

/// `U_ε(t, s)` solving `iε ∂_t U = A(t) U`, `U(s, s) = 1`.
pub fn atomic_propagator(frame: &EigenFrame, eps: f64, t: f64, s: f64) -> Result<CMat> {
    let atom = frame.atom().clone();
    let steps = if t == s { 0 } else { magnus_steps(frame, eps, t - s) };
    let u = magnus4_propagate(&|u| atom.hamiltonian(u), eps, s, t, steps, frame.dim());
    let defect = unitarity_defect(&u);
    if defect > 1e-8 {
        return Err(Error::StepSize { time: t, defect });
    }
    Ok(u)
}

/// `U_ε(t_k, 0)` on a uniform grid; off-grid values take one Magnus substep
/// from the preceding node.
#[derive(Clone, Debug)]
pub struct PropagatorTable {
    pub step: f64,
    pub eps: f64,
    pub values: Vec<CMat>,
}

impl PropagatorTable {
    pub fn new(frame: &EigenFrame, eps: f64, step: f64, nodes: usize) -> Result<Self> {
        let atom = frame.atom().clone();
        let gen = |u: f64| atom.hamiltonian(u);
        let sub = magnus_steps(frame, eps, step);
        let mut values = Vec::with_capacity(nodes + 1);
        let mut u = identity(frame.dim());
        values.push(u.clone());
        for k in 0..nodes {
            let t0 = k as f64 * step;
            u = magnus4_propagate(&gen, eps, t0, t0 + step, sub, frame.dim()) * u;
            values.push(u.clone());
        }
        let defect = unitarity_defect(&u);
        if defect > 1e-8 {
            return Err(Error::StepSize { time: nodes as f64 * step, defect });
        }
        Ok(Self { step, eps, values })
    }

    pub fn at(&self, frame: &EigenFrame, t: f64) -> CMat {
        let x = t / self.step;
        let k = (x.floor().max(0.0) as usize).min(self.values.len() - 1);
        let dt = t - k as f64 * self.step;
        if dt.abs() < 1e-14 {
            return self.values[k].clone();
        }
        let atom = frame.atom().clone();
        magnus4_step(&|u| atom.hamiltonian(u), self.eps, k as f64 * self.step, dt) * &self.values[k]
    }
}

#[derive(Clone, Debug)]
pub struct VolterraOptions {
    pub dt_out: f64,
    /// Target spacing of the rescaled memory variable `x = (t − s)/ε`.
    pub dx: f64,
    pub kernel_cutoff: f64,
}

impl Default for VolterraOptions {
    fn default() -> Self {
        Self { dt_out: 1.0 / 200.0, dx: 1.0 / 64.0, kernel_cutoff: 1e-12 }
    }
}

/// Diagnostics of a Volterra solve.
#[derive(Clone, Debug)]
pub struct VolterraReport {
    pub dx: f64,
    pub steps: usize,
    /// Memory length in units of `x` kept after the kernel cutoff.
    pub memory: f64,
    /// `∫_{x_cut}^∞ |γ|`, the certified contribution of the dropped history.
    pub tail_bound: f64,
}

/// Solves `∂_t y = −(λ²/ε²) β(t) ∫₀^t ⟨β(s), y(s)⟩ γ((t−s)/ε) ds`,
/// `β = U_ε^{-1} w`, and returns `z = U_ε y`.
///
/// The memory integral is written in `x = (t−s)/ε` and discretized by the
/// product trapezoid rule (the product `⟨β, y⟩` is linear between nodes and
/// integrated exactly against `γ`); time stepping is the implicit trapezoid
/// rule, whose rank-one structure gives a scalar update.
#[allow(clippy::too_many_arguments)]
pub fn volterra_solve(
    frame: &EigenFrame,
    bath: &BathSpec,
    eps: f64,
    lambda: f64,
    z0: &CVec,
    t_end: f64,
    opts: &VolterraOptions,
) -> Result<(Trajectory, VolterraReport)> {
    if (z0.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("initial state must be normalized, ‖z0‖ = {}", z0.norm())));
    }
    let outputs = output_times(t_end, opts.dt_out);
    let dt_out = outputs[1] - outputs[0];
    let sub = (dt_out / (eps * opts.dx)).ceil() as usize;
    let delta = dt_out / sub as f64;
    let dx = delta / eps;
    let n_steps = sub * (outputs.len() - 1);

    let norm_a = frame.hamiltonian_sup();
    if norm_a * dx > 0.5 {
        return Err(Error::Resolution(format!(
            "phase per memory node ‖A‖δx = {:.3} exceeds 0.5; decrease dx",
            norm_a * dx
        )));
    }

    // Kernel moments on [x_m, x_m + δx]: a_m against (1 − s), b_m against s.
    let cutoff_x = memory_cutoff(bath, opts.kernel_cutoff);
    let n_mem = ((cutoff_x / dx).ceil() as usize).min(n_steps);
    let (gx, gw) = gl8();
    let mut a = Vec::with_capacity(n_mem);
    let mut b = Vec::with_capacity(n_mem);
    let mut gmax: f64 = 0.0;
    let mut prev = bath.correlation(0.0)?;
    for m in 0..n_mem {
        let x0 = m as f64 * dx;
        let mut am = C64::new(0.0, 0.0);
        let mut bm = C64::new(0.0, 0.0);
        for (xi, wi) in gx.iter().zip(gw) {
            let s = 0.5 * (1.0 + xi);
            let g = bath.correlation(x0 + s * dx)?;
            am += g * (wi * 0.5 * dx * (1.0 - s));
            bm += g * (wi * 0.5 * dx * s);
        }
        a.push(am);
        b.push(bm);
        let next = bath.correlation(x0 + dx)?;
        gmax = gmax.max(prev.norm());
        if (next - prev).norm() > 0.5 * gmax.max(next.norm()) {
            return Err(Error::Resolution(format!(
                "kernel changes by {:.3} between x = {x0:.4} and x = {:.4}; decrease dx",
                (next - prev).norm(),
                x0 + dx
            )));
        }
        prev = next;
    }
    let tail_bound = bath.tail_bound(n_mem as f64 * dx);

    let table = PropagatorTable::new(frame, eps, delta, n_steps)?;
    let rate = lambda * lambda / eps;
    let mut q: Vec<C64> = Vec::with_capacity(n_steps + 1);
    let mut y = z0.clone();
    q.push(frame.w_vector(0.0).dotc(&y));

    // Σ_m a_m q_{n−m} + b_m q_{n−m−1} over the stored history q_0 … q_{n−1}
    // (the a_0 q_n term is handled implicitly).
    let memory_sum = |n: usize, q: &[C64]| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for m in 0..n.min(n_mem) {
            if m > 0 {
                acc += a[m] * q[n - m];
            }
            acc += b[m] * q[n - m - 1];
        }
        acc
    };

    let a0 = a.first().copied().unwrap_or(C64::new(0.0, 0.0));
    let mut times = vec![0.0];
    let mut zs = vec![z0.clone()];
    let mut f_prev = CVec::zeros(frame.dim());
    for n in 0..n_steps {
        let t1 = (n + 1) as f64 * delta;
        let u1 = &table.values[n + 1];
        let beta1 = u1.adjoint() * frame.w_vector(t1);
        let hist = memory_sum(n + 1, &q);
        let r = &y + &f_prev * c(0.5 * delta);
        let nb = beta1.norm_squared();
        let kappa = 0.5 * delta * rate * a0;
        let q1 = (beta1.dotc(&r) - hist * (0.5 * delta * rate * nb)) / (c(1.0) + kappa * nb);
        let f1 = -(beta1 * ((a0 * q1 + hist) * rate));
        y = r + &f1 * c(0.5 * delta);
        q.push(q1);
        f_prev = f1;
        if (n + 1) % sub == 0 {
            times.push(t1);
            zs.push(u1 * &y);
        }
    }
    let traj = Trajectory::from_samples(times, zs, frame);
    Ok((traj, VolterraReport { dx, steps: n_steps, memory: n_mem as f64 * dx, tail_bound }))
}

/// Smallest `x` beyond which the certified bound gives `|γ| < cutoff`.
fn memory_cutoff(bath: &BathSpec, cutoff: f64) -> f64 {
    (bath.decay_c / cutoff).powf(1.0 / bath.decay_m) - 1.0
}

/// `G_{ε,λ}(t) = A(t) − iλ² |w(t)⟩⟨w(t)| Γ_ε(t)` with
/// `Γ_ε(t) = Σ_j (∫₀^{t/ε} e^{ixα_j(t)} γ(x) dx) P_j(t)`.
#[derive(Clone, Debug)]
pub struct EffectiveGenerator<'a> {
    pub frame: &'a EigenFrame,
    pub bath: &'a BathSpec,
    pub eps: f64,
    pub lambda: f64,
}

impl<'a> EffectiveGenerator<'a> {
    pub fn new(frame: &'a EigenFrame, bath: &'a BathSpec, eps: f64, lambda: f64) -> Self {
        Self { frame, bath, eps, lambda }
    }

    /// Per-level half-line integrals `∫₀^{t/ε} e^{ixα_j(t)} γ(x) dx`.
    pub fn level_integrals(&self, t: f64) -> Result<Vec<C64>> {
        self.frame.values_at(t).iter().map(|&alpha| self.bath.half_line_transform(alpha, t / self.eps)).collect()
    }

    /// `Γ_ε(t)`.
    pub fn gamma_operator(&self, t: f64) -> Result<CMat> {
        let ints = self.level_integrals(t)?;
        let (_, vecs) = self.frame.at(t);
        let d = self.frame.dim();
        Ok((0..d).fold(CMat::zeros(d, d), |acc, j| acc + column_projector(&vecs, j) * ints[j]))
    }

    pub fn at(&self, t: f64) -> Result<CMat> {
        let a = self.frame.atom().hamiltonian(t);
        if self.lambda == 0.0 {
            return Ok(a);
        }
        let w = self.frame.w_vector(t);
        let wg = w.adjoint() * self.gamma_operator(t)?;
        Ok(a - (&w * wg) * (I * self.lambda * self.lambda))
    }
}

/// `G_{ε,λ}(t)`.
pub fn effective_generator(frame: &EigenFrame, bath: &BathSpec, eps: f64, lambda: f64, t: f64) -> Result<CMat> {
    EffectiveGenerator::new(frame, bath, eps, lambda).at(t)
}

/// Integrates `iε ∂_t z = G_{ε,λ}(t) z` with fourth-order Magnus steps.
pub fn effective_solve(
    frame: &EigenFrame,
    bath: &BathSpec,
    eps: f64,
    lambda: f64,
    z0: &CVec,
    t_end: f64,
    dt_out: f64,
) -> Result<Trajectory> {
    if (z0.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("initial state must be normalized, ‖z0‖ = {}", z0.norm())));
    }
    let gen = EffectiveGenerator::new(frame, bath, eps, lambda);
    let outputs = output_times(t_end, dt_out);
    let sub = magnus_steps(frame, eps, outputs[1] - outputs[0]);
    let mut z = z0.clone();
    let mut zs = vec![z0.clone()];
    let failure = std::cell::RefCell::new(None);
    let g = |t: f64| match gen.at(t) {
        Ok(m) => m,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            CMat::zeros(frame.dim(), frame.dim())
        }
    };
    for w in outputs.windows(2) {
        let h = (w[1] - w[0]) / sub as f64;
        for k in 0..sub {
            z = magnus4_step(&g, eps, w[0] + k as f64 * h, h) * z;
        }
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        zs.push(z.clone());
    }
    Ok(Trajectory::from_samples(outputs, zs, frame))
}
