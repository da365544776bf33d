//! Time-dependent atomic Hamiltonians, smooth eigenframes, Berry phases and
//! the Kato intertwiner.

use std::path::Path;
use std::sync::Arc;

use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::interp::CubicSpline;
use crate::linalg::{c, hermitian_defect, hermitian_eigh, identity, op_norm, outer, unitarity_defect, CMat, CVec, C64};
use crate::ode::rk4_matrix;
use crate::quadrature::{cumulative_simpson, hermite};

/// `A(t)` (Hermitian, positive, gapped) and the coupling amplitudes `v_j(t)`
/// of the excited levels, indexed like the ascending eigenvalues of `A(t)`.
pub trait AtomPath: Send + Sync {
    fn dim(&self) -> usize;
    fn hamiltonian(&self, t: f64) -> CMat;
    fn coupling(&self, t: f64) -> CVec;
}

/// Real polynomial in `t`, coefficients in increasing degree.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn constant(a: f64) -> Self {
        Poly(vec![a])
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, a| acc * t + a)
    }
}

/// `A(t) = R(θ(t)) diag(α(t)) R(θ(t))ᵀ`, with `R` a rotation in the plane of
/// the first two basis vectors.
#[derive(Clone, Debug)]
pub struct DiagRotation {
    pub levels: Vec<Poly>,
    pub theta: Poly,
    /// Complex polynomial per level, coefficients in increasing degree.
    pub coupling: Vec<Vec<C64>>,
}

impl DiagRotation {
    /// `A(t) = R(πt/4) diag(1, 2 + 0.3t) R(πt/4)ᵀ`, `v = (1, 1)`.
    pub fn reference_two_level() -> Self {
        Self {
            levels: vec![Poly::constant(1.0), Poly(vec![2.0, 0.3])],
            theta: Poly(vec![0.0, std::f64::consts::FRAC_PI_4]),
            coupling: vec![vec![c(1.0)], vec![c(1.0)]],
        }
    }

    fn rotation(&self, t: f64) -> CMat {
        let d = self.levels.len();
        let mut r = identity(d);
        if d >= 2 {
            let (s, co) = self.theta.eval(t).sin_cos();
            r[(0, 0)] = c(co);
            r[(0, 1)] = c(-s);
            r[(1, 0)] = c(s);
            r[(1, 1)] = c(co);
        }
        r
    }
}

impl AtomPath for DiagRotation {
    fn dim(&self) -> usize {
        self.levels.len()
    }

    fn hamiltonian(&self, t: f64) -> CMat {
        let d = self.dim();
        let diag = CMat::from_diagonal(&CVec::from_iterator(d, self.levels.iter().map(|p| c(p.eval(t)))));
        let r = self.rotation(t);
        &r * diag * r.transpose()
    }

    fn coupling(&self, t: f64) -> CVec {
        CVec::from_iterator(
            self.dim(),
            self.coupling.iter().map(|p| p.iter().rev().fold(C64::new(0.0, 0.0), |acc, a| acc * t + a)),
        )
    }
}

/// Time-independent `A` and `v`.
#[derive(Clone, Debug)]
pub struct ConstantAtom {
    pub a: CMat,
    pub v: CVec,
}

impl AtomPath for ConstantAtom {
    fn dim(&self) -> usize {
        self.a.nrows()
    }
    fn hamiltonian(&self, _t: f64) -> CMat {
        self.a.clone()
    }
    fn coupling(&self, _t: f64) -> CVec {
        self.v.clone()
    }
}

/// Atom given by closures.
#[derive(Clone)]
pub struct FnAtom {
    pub dim: usize,
    pub a: Arc<dyn Fn(f64) -> CMat + Send + Sync>,
    pub v: Arc<dyn Fn(f64) -> CVec + Send + Sync>,
}

impl AtomPath for FnAtom {
    fn dim(&self) -> usize {
        self.dim
    }
    fn hamiltonian(&self, t: f64) -> CMat {
        (self.a)(t)
    }
    fn coupling(&self, t: f64) -> CVec {
        (self.v)(t)
    }
}

/// Matrix and coupling samples interpolated entrywise by natural cubic splines.
#[derive(Clone, Debug)]
pub struct TabulatedAtom {
    dim: usize,
    a_re: Vec<CubicSpline>,
    a_im: Vec<CubicSpline>,
    v_re: Vec<CubicSpline>,
    v_im: Vec<CubicSpline>,
}

impl TabulatedAtom {
    /// `matrices[k]` and `couplings[k]` are the samples at `times[k]`.
    pub fn new(times: Vec<f64>, matrices: Vec<CMat>, couplings: Vec<CVec>) -> Result<Self> {
        if times.len() != matrices.len() || times.len() != couplings.len() {
            return Err(Error::invalid("tabulated atom: sample counts differ"));
        }
        let d = matrices.first().map(|m| m.nrows()).ok_or_else(|| Error::invalid("tabulated atom: no samples"))?;
        for (t, m) in times.iter().zip(&matrices) {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::invalid("tabulated atom: inconsistent matrix size"));
            }
            let defect = hermitian_defect(m);
            if defect > 1e-12 * (1.0 + m.camax()) {
                return Err(Error::NotHermitian { time: *t, defect });
            }
        }
        let spline = |f: &dyn Fn(usize) -> f64| CubicSpline::new(times.clone(), (0..times.len()).map(f).collect());
        let mut a_re = Vec::with_capacity(d * d);
        let mut a_im = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                a_re.push(spline(&|k| matrices[k][(i, j)].re)?);
                a_im.push(spline(&|k| matrices[k][(i, j)].im)?);
            }
        }
        let mut v_re = Vec::with_capacity(d);
        let mut v_im = Vec::with_capacity(d);
        for j in 0..d {
            if couplings.iter().any(|v| v.len() != d) {
                return Err(Error::invalid("tabulated atom: coupling length differs from matrix size"));
            }
            v_re.push(spline(&|k| couplings[k][j].re)?);
            v_im.push(spline(&|k| couplings[k][j].im)?);
        }
        Ok(Self { dim: d, a_re, a_im, v_re, v_im })
    }

    /// CSV rows `t, (re, im) of A row-major, (re, im) of v`, with a header row.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let mut times = Vec::new();
        let mut matrices = Vec::new();
        let mut couplings = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::invalid(format!("atom CSV {}: {e}", path.display())))?;
            // 1 + 2d² + 2d columns.
            let cols = vals.len();
            let d = (((1.0 + 2.0 * (cols as f64 - 1.0)).sqrt() - 1.0) / 2.0).round() as usize;
            if d == 0 || 1 + 2 * d * d + 2 * d != cols {
                return Err(Error::invalid(format!(
                    "atom CSV {}: {cols} columns do not match 1 + 2d² + 2d",
                    path.display()
                )));
            }
            times.push(vals[0]);
            let mut m = CMat::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    let k = 1 + 2 * (i * d + j);
                    m[(i, j)] = C64::new(vals[k], vals[k + 1]);
                }
            }
            let off = 1 + 2 * d * d;
            let v = CVec::from_iterator(d, (0..d).map(|j| C64::new(vals[off + 2 * j], vals[off + 2 * j + 1])));
            matrices.push(m);
            couplings.push(v);
        }
        Self::new(times, matrices, couplings)
    }
}

impl AtomPath for TabulatedAtom {
    fn dim(&self) -> usize {
        self.dim
    }

    fn hamiltonian(&self, t: f64) -> CMat {
        let d = self.dim;
        let m = CMat::from_fn(d, d, |i, j| C64::new(self.a_re[i * d + j].eval(t), self.a_im[i * d + j].eval(t)));
        (&m + m.adjoint()) * c(0.5)
    }

    fn coupling(&self, t: f64) -> CVec {
        CVec::from_iterator(self.dim, (0..self.dim).map(|j| C64::new(self.v_re[j].eval(t), self.v_im[j].eval(t))))
    }
}

pub type FrameProvider = Arc<dyn Fn(f64) -> (Vec<f64>, CMat) + Send + Sync>;
pub type GaugeFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum FrameSource {
    Diagonalize,
    Explicit(FrameProvider),
}

#[derive(Clone, Copy, Debug)]
pub struct FrameOptions {
    pub t_start: f64,
    pub t_end: f64,
    pub intervals: usize,
    pub gap_min: f64,
}

impl Default for FrameOptions {
    fn default() -> Self {
        Self { t_start: 0.0, t_end: 1.0, intervals: 200, gap_min: 1e-6 }
    }
}

/// Eigenvalues and continuity-fixed eigenvectors of `A(t)` on a uniform grid.
/// Off-grid queries re-diagonalize and align phases against a cubic
/// interpolant of the neighbouring nodes.
#[derive(Clone)]
pub struct EigenFrame {
    atom: Arc<dyn AtomPath>,
    source: FrameSource,
    gauge: Option<GaugeFn>,
    times: Vec<f64>,
    h: f64,
    values: Vec<Vec<f64>>,
    raw_vectors: Vec<CMat>,
    vectors: Vec<CMat>,
    gap: f64,
    berry: Vec<Vec<f64>>,
    berry_rate: Vec<Vec<f64>>,
    berry_residue: Vec<Vec<f64>>,
}

impl std::fmt::Debug for EigenFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EigenFrame")
            .field("dim", &self.dim())
            .field("t_range", &self.t_range())
            .field("nodes", &self.times.len())
            .field("gap", &self.gap)
            .finish()
    }
}

impl EigenFrame {
    pub fn new(atom: Arc<dyn AtomPath>, opts: FrameOptions) -> Result<Self> {
        Self::build(atom, FrameSource::Diagonalize, opts)
    }

    /// Frame supplied directly as `t ↦ (α(t), [φ_1(t) … φ_d(t)])`; no phase
    /// alignment is applied, so the provider's gauge is kept.
    pub fn explicit(atom: Arc<dyn AtomPath>, provider: FrameProvider, opts: FrameOptions) -> Result<Self> {
        Self::build(atom, FrameSource::Explicit(provider), opts)
    }

    fn build(atom: Arc<dyn AtomPath>, source: FrameSource, opts: FrameOptions) -> Result<Self> {
        if opts.intervals < 4 || !(opts.t_end > opts.t_start) {
            return Err(Error::invalid("eigenframe grid needs at least 4 intervals on a nonempty range"));
        }
        let d = atom.dim();
        if d == 0 {
            return Err(Error::invalid("atom has no excited levels"));
        }
        let n = opts.intervals;
        let h = (opts.t_end - opts.t_start) / n as f64;
        let times: Vec<f64> = (0..=n).map(|k| opts.t_start + k as f64 * h).collect();
        let mut values = Vec::with_capacity(n + 1);
        let mut vectors: Vec<CMat> = Vec::with_capacity(n + 1);
        let mut gap = f64::INFINITY;
        for (k, &t) in times.iter().enumerate() {
            let a = atom.hamiltonian(t);
            let defect = hermitian_defect(&a);
            if defect > 1e-12 * (1.0 + a.camax()) {
                return Err(Error::NotHermitian { time: t, defect });
            }
            let (vals, mut vecs) = match &source {
                FrameSource::Diagonalize => {
                    let (v, m) = hermitian_eigh(&a);
                    (v.iter().cloned().collect::<Vec<f64>>(), m)
                }
                FrameSource::Explicit(p) => p(t),
            };
            if vals[0] <= 0.0 {
                return Err(Error::NonPositiveLevel { time: t, level: 1, value: vals[0] });
            }
            let local_gap = vals.windows(2).map(|w| w[1] - w[0]).fold(vals[0], f64::min);
            if local_gap < opts.gap_min {
                return Err(Error::GapViolation { time: t, gap: local_gap, min: opts.gap_min });
            }
            gap = gap.min(local_gap);
            if let FrameSource::Diagonalize = source {
                if k == 0 {
                    for j in 0..d {
                        let (imax, _) = vecs
                            .column(j)
                            .iter()
                            .enumerate()
                            .fold((0, -1.0), |best, (i, z)| if z.norm() > best.1 { (i, z.norm()) } else { best });
                        let z = vecs[(imax, j)];
                        let phase = z.conj() / z.norm();
                        for i in 0..d {
                            vecs[(i, j)] *= phase;
                        }
                    }
                } else {
                    let prev = &vectors[k - 1];
                    for j in 0..d {
                        let ov = prev.column(j).dotc(&vecs.column(j));
                        if ov.norm() < 0.5 {
                            return Err(Error::FrameSmoothness(format!(
                                "eigenvector {} turns by more than 60° between t = {} and t = {}; refine the grid",
                                j + 1,
                                times[k - 1],
                                t
                            )));
                        }
                        let phase = ov.conj() / ov.norm();
                        for i in 0..d {
                            vecs[(i, j)] *= phase;
                        }
                    }
                }
            }
            values.push(vals);
            vectors.push(vecs);
        }
        let mut frame = Self {
            atom,
            source,
            gauge: None,
            times,
            h,
            values,
            raw_vectors: vectors.clone(),
            vectors,
            gap,
            berry: vec![],
            berry_rate: vec![],
            berry_residue: vec![],
        };
        frame.tabulate_berry();
        Ok(frame)
    }

    /// Same frame with `φ_j(t) → e^{iχ_j(t)} φ_j(t)`.
    pub fn regauge(&self, chi: GaugeFn) -> Self {
        let mut out = self.clone();
        for (k, &t) in self.times.iter().enumerate() {
            let mut m = self.raw_vectors[k].clone();
            for j in 0..self.dim() {
                let p = C64::from_polar(1.0, chi(j, t));
                for i in 0..self.dim() {
                    m[(i, j)] *= p;
                }
            }
            out.vectors[k] = m;
        }
        out.gauge = Some(chi);
        out.tabulate_berry();
        out
    }

    fn tabulate_berry(&mut self) {
        let d = self.dim();
        let n = self.times.len();
        self.berry = Vec::with_capacity(d);
        self.berry_rate = Vec::with_capacity(d);
        self.berry_residue = Vec::with_capacity(d);
        for j in 0..d {
            let mut rate = vec![0.0; n];
            let mut re = vec![0.0; n];
            for k in 0..n {
                let deriv = node_derivative(n, self.h, k, |i| self.vectors[i].column(j).into_owned());
                let b = self.vectors[k].column(j).dotc(&deriv);
                // ξ = i∫⟨φ, ∂φ⟩ = −∫Im b + i∫Re b.
                rate[k] = -b.im;
                re[k] = b.re;
            }
            self.berry.push(cumulative_simpson(&rate, self.h));
            self.berry_residue.push(cumulative_simpson(&re, self.h));
            self.berry_rate.push(rate);
        }
    }

    pub fn dim(&self) -> usize {
        self.atom.dim()
    }

    pub fn atom(&self) -> &Arc<dyn AtomPath> {
        &self.atom
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn t_range(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    /// Uniform gap `Δ₀` over the grid, including the distance to the ground level 0.
    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn node_values(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn node_vectors(&self, k: usize) -> &CMat {
        &self.vectors[k]
    }

    fn node_index(&self, t: f64) -> Option<usize> {
        let x = (t - self.times[0]) / self.h;
        let k = x.round();
        if (x - k).abs() < 1e-9 && k >= 0.0 && (k as usize) < self.times.len() {
            Some(k as usize)
        } else {
            None
        }
    }

    fn bracket(&self, t: f64) -> (usize, f64) {
        let n = self.times.len() - 1;
        let x = ((t - self.times[0]) / self.h).clamp(0.0, n as f64);
        let k = (x.floor() as usize).min(n - 1);
        (k, x - k as f64)
    }

    /// `(α(t), Φ(t))` with eigenvectors as columns in the frame's gauge.
    pub fn at(&self, t: f64) -> (Vec<f64>, CMat) {
        if let Some(k) = self.node_index(t) {
            return (self.values[k].clone(), self.vectors[k].clone());
        }
        let d = self.dim();
        let (vals, mut vecs) = match &self.source {
            FrameSource::Explicit(p) => p(t),
            FrameSource::Diagonalize => {
                let (v, m) = hermitian_eigh(&self.atom.hamiltonian(t));
                let vals: Vec<f64> = v.iter().cloned().collect();
                let reference = self.lagrange_raw(t);
                let mut m = m;
                for j in 0..d {
                    let ov = reference.column(j).dotc(&m.column(j));
                    let phase = if ov.norm() > 0.0 { ov.conj() / ov.norm() } else { c(1.0) };
                    for i in 0..d {
                        m[(i, j)] *= phase;
                    }
                }
                (vals, m)
            }
        };
        if let Some(chi) = &self.gauge {
            for j in 0..d {
                let p = C64::from_polar(1.0, chi(j, t));
                for i in 0..d {
                    vecs[(i, j)] *= p;
                }
            }
        }
        (vals, vecs)
    }

    fn lagrange_raw(&self, t: f64) -> CMat {
        let n = self.times.len();
        let (k, _) = self.bracket(t);
        let i0 = k.saturating_sub(1).min(n - 4);
        let nodes: Vec<f64> = (i0..i0 + 4).map(|i| self.times[i]).collect();
        let mut out = CMat::zeros(self.dim(), self.dim());
        for a in 0..4 {
            let mut w = 1.0;
            for b in 0..4 {
                if a != b {
                    w *= (t - nodes[b]) / (nodes[a] - nodes[b]);
                }
            }
            out += &self.raw_vectors[i0 + a] * c(w);
        }
        out
    }

    pub fn values_at(&self, t: f64) -> Vec<f64> {
        if let Some(k) = self.node_index(t) {
            return self.values[k].clone();
        }
        match &self.source {
            FrameSource::Explicit(p) => p(t).0,
            FrameSource::Diagonalize => hermitian_eigh(&self.atom.hamiltonian(t)).0.iter().cloned().collect(),
        }
    }

    /// Orthogonal projection `P_j(t) = |φ_j(t)⟩⟨φ_j(t)|` (gauge independent).
    pub fn projection(&self, j: usize, t: f64) -> CMat {
        let (_, vecs) = self.at(t);
        let v = vecs.column(j).into_owned();
        outer(&v, &v)
    }

    /// Rotated coupling `w(t) = Σ_ℓ v_ℓ(t) φ_ℓ(t)`, in the basis of `A`.
    /// Its components equal `Σ_ℓ v_ℓ ⟨φ_j(0), φ_ℓ(t)⟩` whenever `A(0)` is
    /// diagonal (so that `φ_j(0)` is the j-th basis vector).
    pub fn w_vector(&self, t: f64) -> CVec {
        let (_, vecs) = self.at(t);
        &vecs * self.atom.coupling(t)
    }

    /// `Σ_ℓ v_ℓ ⟨φ_j(0), φ_ℓ(t)⟩`, the components of `w(t)` on the initial frame.
    pub fn w_on_initial_frame(&self, t: f64) -> CVec {
        self.vectors[0].adjoint() * self.w_vector(t)
    }

    /// `ξ_j(t) = i ∫_{t_start}^t ⟨φ_j(u), ∂_u φ_j(u)⟩ du`.
    pub fn berry_phase(&self, j: usize, t: f64) -> Result<f64> {
        let (k, s) = self.bracket(t);
        let residue = interp_table(&self.berry_residue[j], None, self.h, k, s);
        if residue.abs() > 1e-8 {
            return Err(Error::FrameSmoothness(format!(
                "Berry phase of level {} has imaginary residue {residue:.3e} at t = {t}",
                j + 1
            )));
        }
        Ok(interp_table(&self.berry[j], Some(&self.berry_rate[j]), self.h, k, s))
    }

    /// Fourth-order finite-difference `∂_t P_j(t)` with step equal to the grid step.
    pub fn projection_derivative(&self, j: usize, t: f64) -> CMat {
        let (lo, hi) = self.t_range();
        derivative4(|u| self.projection(j, u), t, self.h, lo, hi)
    }

    /// Kato generator `K(t) = Σ_j (∂_t P_j(t)) P_j(t)`.
    pub fn kato_generator(&self, t: f64) -> CMat {
        let d = self.dim();
        (0..d).fold(CMat::zeros(d, d), |acc, j| acc + self.projection_derivative(j, t) * self.projection(j, t))
    }

    /// `W(t, s)` solving `∂_t W = K(t) W`, `W(s, s) = 1`, by RK4 at the grid step.
    pub fn kato_intertwiner(&self, t: f64, s: f64) -> Result<CMat> {
        let steps = ((t - s).abs() / self.h).ceil() as usize;
        let w = rk4_matrix(&|u| self.kato_generator(u), s, t, steps, identity(self.dim()));
        let defect = unitarity_defect(&w);
        if defect > 1e-8 {
            return Err(Error::StepSize { time: t, defect });
        }
        Ok(w)
    }

    /// `sup_t ‖v(t)‖` over the grid nodes.
    pub fn coupling_sup(&self) -> f64 {
        self.times.iter().map(|&t| self.atom.coupling(t).norm()).fold(0.0, f64::max)
    }

    /// `sup_t ‖A(t)‖` over the grid nodes.
    pub fn hamiltonian_sup(&self) -> f64 {
        self.values.iter().map(|v| v.iter().fold(0.0f64, |a, x| a.max(x.abs()))).fold(0.0, f64::max)
    }
}

/// Value of a cumulative table at `t = t_k + s·h`, using cubic Hermite
/// interpolation when the integrand samples are given.
fn interp_table(table: &[f64], rate: Option<&[f64]>, h: f64, k: usize, s: f64) -> f64 {
    match rate {
        Some(r) => hermite(h, s, table[k], table[k + 1], r[k], r[k + 1]),
        None => table[k] + s * (table[k + 1] - table[k]),
    }
}

/// Five-point derivative of node samples: centered in the interior, one-sided
/// near the ends.
fn node_derivative(n: usize, h: f64, k: usize, f: impl Fn(usize) -> CVec) -> CVec {
    if k >= 2 && k + 2 < n {
        (f(k - 2) - f(k - 1) * c(8.0) + f(k + 1) * c(8.0) - f(k + 2)) * c(1.0 / (12.0 * h))
    } else if k < 2 {
        let b = k;
        // Derivative at offset b within the stencil k-b .. k-b+4.
        let w = one_sided_weights(b);
        (0..5).fold(CVec::zeros(f(k).len()), |acc, i| acc + f(k - b + i) * c(w[i] / h))
    } else {
        let b = 4 - (n - 1 - k);
        let w = one_sided_weights(b);
        let start = n - 5;
        (0..5).fold(CVec::zeros(f(k).len()), |acc, i| acc + f(start + i) * c(w[i] / h))
    }
}

/// Weights of the derivative at node `b` of a 5-node equispaced stencil.
fn one_sided_weights(b: usize) -> [f64; 5] {
    match b {
        0 => [-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -1.0 / 4.0],
        1 => [-1.0 / 4.0, -5.0 / 6.0, 3.0 / 2.0, -1.0 / 2.0, 1.0 / 12.0],
        2 => [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0],
        3 => [-1.0 / 12.0, 1.0 / 2.0, -3.0 / 2.0, 5.0 / 6.0, 1.0 / 4.0],
        _ => [1.0 / 4.0, -4.0 / 3.0, 3.0, -4.0, 25.0 / 12.0],
    }
}

/// Fourth-order derivative of a matrix-valued function on `[lo, hi]`.
pub fn derivative4<F: Fn(f64) -> CMat>(f: F, t: f64, h: f64, lo: f64, hi: f64) -> CMat {
    let slack = 1e-12 * (1.0 + hi.abs());
    let b = if t - 2.0 * h >= lo - slack && t + 2.0 * h <= hi + slack {
        2
    } else if t - 2.0 * h < lo - slack {
        (((t - lo) / h).floor().max(0.0) as usize).min(1)
    } else {
        4 - (((hi - t) / h).floor().max(0.0) as usize).min(1)
    };
    let w = one_sided_weights(b);
    let start = t - b as f64 * h;
    let mut acc = f(start) * c(w[0] / h);
    for (i, wi) in w.iter().enumerate().skip(1) {
        if *wi != 0.0 {
            acc += f(start + i as f64 * h) * c(wi / h);
        }
    }
    acc
}

/// Outcome of the coupling checks.
#[derive(Clone, Debug)]
pub struct CouplingReport {
    /// `4λ²‖v‖²_∞‖γ‖_{L¹}/Δ₀`.
    pub smallness_value: f64,
    pub smallness_ok: bool,
    /// `1 − smallness_value`.
    pub smallness_margin: f64,
    /// `inf_t β_j(t)` per level.
    pub beta_inf: Vec<f64>,
    pub well_coupled: Vec<bool>,
}

impl CouplingReport {
    pub fn ok(&self) -> bool {
        self.smallness_ok && self.well_coupled.iter().all(|&b| b)
    }

    pub fn failing_levels(&self) -> Vec<usize> {
        self.well_coupled.iter().enumerate().filter(|(_, ok)| !**ok).map(|(j, _)| j + 1).collect()
    }
}

/// Smallness `4λ²‖v‖²_∞‖γ‖_{L¹}/Δ₀ < 1` and well-coupledness `inf_t β_j > 0`.
pub fn validate_coupling(frame: &EigenFrame, bath: &BathSpec, lambda: f64) -> Result<CouplingReport> {
    let v_sup = frame.coupling_sup();
    let l1 = bath.l1_norm()?;
    let value = 4.0 * lambda * lambda * v_sup * v_sup * l1 / frame.gap();
    let d = frame.dim();
    let mut beta_inf = vec![f64::INFINITY; d];
    for (k, &t) in frame.times().iter().enumerate() {
        let v = frame.atom().coupling(t);
        for j in 0..d {
            let ds = bath.decay_and_shift(v[j], frame.node_values(k)[j])?;
            beta_inf[j] = beta_inf[j].min(ds.beta);
        }
    }
    let well_coupled = beta_inf.iter().map(|b| *b > 0.0).collect();
    Ok(CouplingReport {
        smallness_value: value,
        smallness_ok: value < 1.0,
        smallness_margin: 1.0 - value,
        beta_inf,
        well_coupled,
    })
}

/// Operator norm of `W(t,s)`, exposed for diagnostics.
pub fn intertwiner_norm(w: &CMat) -> f64 {
    op_norm(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_frame() -> EigenFrame {
        EigenFrame::new(Arc::new(DiagRotation::reference_two_level()), FrameOptions::default()).unwrap()
    }

    #[test]
    fn diagonal_atom_frame_is_standard_basis() {
        let atom = ConstantAtom {
            a: CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(2.0)])),
            v: CVec::from_vec(vec![c(1.0), c(1.0)]),
        };
        let f = EigenFrame::new(Arc::new(atom), FrameOptions::default()).unwrap();
        let (vals, vecs) = f.at(0.37);
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 2.0).abs() < 1e-14);
        assert!((vecs - identity(2)).camax() < 1e-14);
        assert!((f.gap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rotating_frame_follows_rotation() {
        let atom = DiagRotation {
            levels: vec![Poly::constant(1.0), Poly::constant(2.0)],
            theta: Poly(vec![0.0, std::f64::consts::FRAC_PI_4]),
            coupling: vec![vec![c(1.0)], vec![c(0.0)]],
        };
        let f = EigenFrame::new(Arc::new(atom), FrameOptions::default()).unwrap();
        for t in [0.0, 0.3, 0.515, 1.0] {
            let (vals, vecs) = f.at(t);
            let th = std::f64::consts::FRAC_PI_4 * t;
            assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 2.0).abs() < 1e-12);
            assert!((vecs[(0, 0)] - c(th.cos())).norm() < 1e-12, "t={t}");
            assert!((vecs[(1, 0)] - c(th.sin())).norm() < 1e-12, "t={t}");
        }
        // v = (1, 0) gives w(1) = φ₁(1).
        let w = f.w_vector(1.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((w[0] - c(s)).norm() < 1e-12 && (w[1] - c(s)).norm() < 1e-12);
        assert!(f.berry_phase(0, 1.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn w_at_zero_is_v_and_norm_preserved() {
        let f = reference_frame();
        let w0 = f.w_on_initial_frame(0.0);
        assert!((w0 - CVec::from_vec(vec![c(1.0), c(1.0)])).norm() < 1e-14);
        for t in [0.2, 0.77, 1.0] {
            assert!((f.w_vector(t).norm() - 2f64.sqrt()).abs() < 1e-13);
        }
    }

    #[test]
    fn kato_identity_and_berry_at_zero() {
        let f = reference_frame();
        assert!((f.kato_intertwiner(0.4, 0.4).unwrap() - identity(2)).camax() == 0.0);
        assert_eq!(f.berry_phase(1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn gap_violation_reported() {
        let atom = DiagRotation {
            levels: vec![Poly::constant(1.0), Poly(vec![1.5, -1.0])],
            theta: Poly::constant(0.0),
            coupling: vec![vec![c(1.0)], vec![c(1.0)]],
        };
        match EigenFrame::new(Arc::new(atom), FrameOptions::default()) {
            Err(Error::GapViolation { time, .. }) => assert!((time - 0.5).abs() < 0.01),
            other => panic!("expected gap violation, got {other:?}"),
        }
    }

    #[test]
    fn non_positive_level_rejected() {
        let atom = ConstantAtom {
            a: CMat::from_diagonal(&CVec::from_vec(vec![c(-1.0), c(2.0)])),
            v: CVec::from_vec(vec![c(1.0), c(1.0)]),
        };
        assert!(matches!(
            EigenFrame::new(Arc::new(atom), FrameOptions::default()),
            Err(Error::NonPositiveLevel { .. })
        ));
    }

    #[test]
    fn smallness_margin_reference() {
        let f = reference_frame();
        let r = validate_coupling(&f, &BathSpec::reference(), 0.125).unwrap();
        assert!((r.smallness_margin - 0.5).abs() < 1e-6);
        assert!(r.ok());
        let r0 = validate_coupling(&f, &BathSpec::reference(), 0.0).unwrap();
        assert!(r0.smallness_ok && r0.well_coupled.iter().all(|&b| b));
    }

    #[test]
    fn well_coupledness_fails_outside_support() {
        let atom = ConstantAtom {
            a: CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(6.0)])),
            v: CVec::from_vec(vec![c(1.0), c(1.0)]),
        };
        let f = EigenFrame::new(Arc::new(atom), FrameOptions::default()).unwrap();
        let bath = BathSpec::custom("bump", Arc::new(|w: f64| w * w * (5.0 - w).powi(2)), 5.0, 200.0, 3.0).unwrap();
        let r = validate_coupling(&f, &bath, 0.01).unwrap();
        assert_eq!(r.failing_levels(), vec![2]);
    }
}
