//! Subcommand drivers. Every driver writes CSV files into an output
//! directory and returns the computed summary.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use wwlab_core::asymptotics::{
    leading_order_z, population_approx, regime_prediction, LevelTables, Regime, STRONG_RATIO, WEAK_RATIO,
};
use wwlab_core::atom::{validate_coupling, EigenFrame};
use wwlab_core::bath::BathSpec;
use wwlab_core::emission::{observable_average, regime_a_limit, regime_b_limit, write_spectrum_csv};
use wwlab_core::hilbert::{check_smallness, fmt, propagate_exact, ExactOptions, ModeGrid, Trajectory};
use wwlab_core::reduced::{effective_solve, volterra_solve, VolterraOptions};

use crate::config::{FitVariable, Point, Scenario, SolverSettings};
use crate::error::{Context, HarnessError, Result};
use crate::fit::{loglog_slope, SlopeFit};

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides `output.dir`.
    pub out_dir: Option<PathBuf>,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    pub override_smallness: bool,
}

/// Shared per-scenario state.
pub struct Setup {
    pub scenario: Scenario,
    pub frame: EigenFrame,
    pub bath: BathSpec,
    pub tables: LevelTables,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub override_smallness: bool,
}

impl Setup {
    pub fn new(scenario: Scenario, opts: &RunOptions) -> Result<Self> {
        let frame = scenario.frame()?;
        let bath = scenario.bath_spec()?;
        let tables = LevelTables::new(&frame, &bath).context(|| "tabulating level integrals".to_string())?;
        let out_dir = opts.out_dir.clone().unwrap_or_else(|| scenario.output_dir.clone());
        std::fs::create_dir_all(&out_dir)?;
        let override_smallness = opts.override_smallness || scenario.override_smallness;
        Ok(Self { scenario, frame, bath, tables, out_dir, threads: opts.threads, override_smallness })
    }

    fn solver(&self) -> &SolverSettings {
        &self.scenario.solver
    }

    /// Field grid resolving the physical horizon `t_end/ε`.
    pub fn grid(&self, eps: f64) -> Result<ModeGrid> {
        ModeGrid::for_horizon(&self.bath, self.scenario.t_end / eps, self.solver().tol_corr)
            .context(|| format!("discretizing the bath at ε = {eps}"))
    }

    pub fn exact(&self, grid: &ModeGrid, p: &Point, store_field: bool) -> Result<Trajectory> {
        let opts = ExactOptions {
            dt_out: self.solver().dt_out,
            tol: self.solver().tol,
            override_smallness: self.override_smallness,
            store_field,
            ..Default::default()
        };
        propagate_exact(&self.frame, grid, &self.scenario.z0, p.eps, p.lambda, self.scenario.t_end, &opts)
            .context(|| format!("exact dynamics at ε = {}, λ = {}", p.eps, p.lambda))
    }

    pub fn volterra(&self, p: &Point) -> Result<Trajectory> {
        let opts = VolterraOptions { dt_out: self.solver().dt_out, dx: self.solver().volterra_dx, ..Default::default() };
        volterra_solve(&self.frame, &self.bath, p.eps, p.lambda, &self.scenario.z0, self.scenario.t_end, &opts)
            .map(|(traj, _)| traj)
            .context(|| format!("Volterra dynamics at ε = {}, λ = {}", p.eps, p.lambda))
    }

    pub fn effective(&self, p: &Point) -> Result<Trajectory> {
        effective_solve(&self.frame, &self.bath, p.eps, p.lambda, &self.scenario.z0, self.scenario.t_end, self.solver().dt_out)
            .context(|| format!("effective dynamics at ε = {}, λ = {}", p.eps, p.lambda))
    }

    /// Leading-order amplitudes on the sample times of `like`.
    pub fn leading(&self, p: &Point, like: &Trajectory) -> Result<Trajectory> {
        let z = like
            .times
            .iter()
            .map(|&t| leading_order_z(&self.frame, &self.tables, p.eps, p.lambda, &self.scenario.z0, t))
            .collect::<wwlab_core::Result<Vec<_>>>()
            .context(|| "leading-order amplitudes".to_string())?;
        Ok(Trajectory::from_samples(like.times.clone(), z, &self.frame))
    }

    /// Initial level populations `|⟨φ_j(0), z0⟩|²`.
    pub fn initial_populations(&self) -> Vec<f64> {
        (self.frame.node_vectors(0).adjoint() * &self.scenario.z0).iter().map(|a| a.norm_sqr()).collect()
    }

    /// Rejects points that violate smallness unless overridden.
    pub fn check_points(&self, points: &[Point]) -> Result<()> {
        let l1 = self.bath.l1_norm().context(|| "bath L¹ norm".to_string())?;
        for p in points {
            check_smallness(&self.frame, l1, p.lambda, self.override_smallness).map_err(|e| {
                HarnessError::Config(format!(
                    "point {} (ε = {}, λ = {}): {e}; set sweep.override_smallness or pass --override-smallness",
                    p.index, p.eps, p.lambda
                ))
            })?;
        }
        Ok(())
    }

    fn map_points<T: Send>(&self, points: &[Point], f: impl Fn(&Point) -> T + Sync + Send) -> Result<Vec<T>> {
        let run = || points.par_iter().map(&f).collect::<Vec<T>>();
        match self.threads {
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| HarnessError::Failed(format!("thread pool: {e}")))?;
                Ok(pool.install(run))
            }
            None => Ok(run()),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write_metadata(&self, points: &[Point], modes: &[usize]) -> Result<()> {
        #[derive(Serialize)]
        struct PointMeta {
            index: usize,
            eps: f64,
            lambda: f64,
            modes: usize,
        }
        #[derive(Serialize)]
        struct Meta<'a> {
            scenario: &'a str,
            direction: &'a str,
            fit_variable: FitVariable,
            t_end: f64,
            override_smallness: bool,
            strong_ratio: f64,
            weak_ratio: f64,
            solver: &'a SolverSettings,
            points: Vec<PointMeta>,
        }
        let meta = Meta {
            scenario: &self.scenario.name,
            direction: &self.scenario.direction,
            fit_variable: self.scenario.fit_variable,
            t_end: self.scenario.t_end,
            override_smallness: self.override_smallness,
            strong_ratio: STRONG_RATIO,
            weak_ratio: WEAK_RATIO,
            solver: &self.scenario.solver,
            points: points
                .iter()
                .zip(modes)
                .map(|(p, &modes)| PointMeta { index: p.index, eps: p.eps, lambda: p.lambda, modes })
                .collect(),
        };
        let text = toml::to_string(&meta).map_err(|e| HarnessError::Failed(format!("metadata: {e}")))?;
        std::fs::write(self.path("metadata.toml"), text)?;
        Ok(())
    }
}

/// Error metrics of one `(ε, λ)` point.
#[derive(Clone, Debug)]
pub struct PointMetrics {
    pub point: Point,
    pub modes: usize,
    pub regime: Regime,
    pub ratio: f64,
    /// `sup_t ‖z_exact − z_lead‖`.
    pub e_lead: f64,
    pub e_volt: f64,
    pub e_eff: f64,
    /// `max_{t,j} |p_j(t) − e^{−2(λ²/ε)∫β_j} p_j(0)|`.
    pub e_pop: f64,
    /// `e_pop / (ε + λ² + λ⁴/ε)`.
    pub k_pop: f64,
    pub p_down: f64,
    pub p_down_predicted: f64,
    pub remainder: f64,
    pub norm_defect: f64,
}

pub struct PointRun {
    pub metrics: PointMetrics,
    pub exact: Trajectory,
    pub volterra: Trajectory,
    pub effective: Trajectory,
    pub leading: Trajectory,
}

fn sup_diff(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    a.sup_distance(b).context(|| "comparing trajectories".to_string())
}

pub fn run_point(setup: &Setup, p: &Point) -> Result<PointRun> {
    let grid = setup.grid(p.eps)?;
    let exact = setup.exact(&grid, p, false)?;
    let volterra = setup.volterra(p)?;
    let effective = setup.effective(p)?;
    let leading = setup.leading(p, &exact)?;
    let p0 = setup.initial_populations();
    let mut e_pop: f64 = 0.0;
    for (k, &t) in exact.times.iter().enumerate() {
        for (j, &pj0) in p0.iter().enumerate() {
            let approx = population_approx(&setup.tables, p.eps, p.lambda, pj0, j, t);
            e_pop = e_pop.max((exact.populations[k][j] - approx).abs());
        }
    }
    let l2 = p.lambda * p.lambda;
    let scale = p.eps + l2 + l2 * l2 / p.eps;
    let pred = regime_prediction(&setup.frame, &setup.tables, p.eps, p.lambda, &setup.scenario.z0, setup.scenario.t_end);
    let metrics = PointMetrics {
        point: *p,
        modes: grid.len(),
        regime: pred.regime,
        ratio: pred.ratio,
        e_lead: sup_diff(&exact, &leading)?,
        e_volt: sup_diff(&exact, &volterra)?,
        e_eff: sup_diff(&exact, &effective)?,
        e_pop,
        k_pop: e_pop / scale,
        p_down: *exact.p_down.last().expect("nonempty"),
        p_down_predicted: pred.p_down,
        remainder: pred.remainder,
        norm_defect: exact.norm_defect.as_ref().map_or(f64::NAN, |d| d.iter().cloned().fold(0.0, f64::max)),
    };
    Ok(PointRun { metrics, exact, volterra, effective, leading })
}

fn write_lines(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(())
}

/// One point: exact, Volterra, effective and leading-order trajectories plus
/// their pointwise comparison.
pub fn run_simulate(setup: &Setup) -> Result<PointMetrics> {
    let points = setup.scenario.points();
    let p = points[0];
    setup.check_points(&[p])?;
    let run = run_point(setup, &p)?;
    let csv = |name: &str, traj: &Trajectory| {
        traj.write_csv(&setup.path(name)).context(|| format!("writing {name}"))
    };
    csv("exact.csv", &run.exact)?;
    csv("volterra.csv", &run.volterra)?;
    csv("effective.csv", &run.effective)?;
    csv("leading.csv", &run.leading)?;
    let rows = (0..run.exact.times.len()).map(|k| {
        let e = &run.exact.z[k];
        format!(
            "{},{},{},{}",
            fmt(run.exact.times[k]),
            fmt((e - &run.leading.z[k]).norm()),
            fmt((e - &run.volterra.z[k]).norm()),
            fmt((e - &run.effective.z[k]).norm())
        )
    });
    write_lines(&setup.path("comparison.csv"), "t,err_lead,err_volt,err_eff", rows)?;
    setup.write_metadata(&[p], &[run.metrics.modes])?;
    Ok(run.metrics)
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub points: Vec<Point>,
    /// Per point, in configuration order.
    pub results: Vec<std::result::Result<PointMetrics, String>>,
    /// Per metric name.
    pub fits: Vec<(String, std::result::Result<SlopeFit, String>)>,
}

impl SweepReport {
    pub fn metrics(&self) -> impl Iterator<Item = &PointMetrics> {
        self.results.iter().filter_map(|r| r.as_ref().ok())
    }

    pub fn failed(&self) -> usize {
        self.results.iter().filter(|r| r.is_err()).count()
    }

    pub fn fit(&self, metric: &str) -> Option<&SlopeFit> {
        self.fits.iter().find(|(m, _)| m == metric).and_then(|(_, f)| f.as_ref().ok())
    }
}

pub const SWEEP_METRICS: [&str; 4] = ["e_lead", "e_volt", "e_eff", "e_pop"];

fn metric_value(m: &PointMetrics, name: &str) -> f64 {
    match name {
        "e_lead" => m.e_lead,
        "e_volt" => m.e_volt,
        "e_eff" => m.e_eff,
        _ => m.e_pop,
    }
}

/// All points concurrently, merged by point index, with log-log slope fits
/// of each error metric against the configured fit variable.
pub fn run_sweep(setup: &Setup) -> Result<SweepReport> {
    let points = setup.scenario.points();
    if points.len() < 3 {
        return Err(HarnessError::Config("need ≥ 3 points for slope fit".into()));
    }
    setup.check_points(&points)?;
    let results: Vec<_> =
        setup.map_points(&points, |p| run_point(setup, p).map(|r| r.metrics).map_err(|e| e.to_string()))?;

    let ok: Vec<&PointMetrics> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let x: Vec<f64> = ok
        .iter()
        .map(|m| match setup.scenario.fit_variable {
            FitVariable::Epsilon => m.point.eps,
            FitVariable::Lambda => m.point.lambda,
        })
        .collect();
    let fits = SWEEP_METRICS
        .iter()
        .map(|name| {
            let y: Vec<f64> = ok.iter().map(|m| metric_value(m, name)).collect();
            (name.to_string(), loglog_slope(&x, &y).map_err(|e| e.to_string()))
        })
        .collect();
    let report = SweepReport { points: points.clone(), results, fits };

    let rows = report.points.iter().zip(&report.results).map(|(p, r)| match r {
        Ok(m) => format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},ok",
            p.index,
            fmt(p.eps),
            fmt(p.lambda),
            m.regime,
            fmt(m.ratio),
            m.modes,
            fmt(m.e_lead),
            fmt(m.e_volt),
            fmt(m.e_eff),
            fmt(m.e_pop),
            fmt(m.k_pop),
            fmt(m.p_down),
            fmt(m.p_down_predicted),
            fmt(m.remainder),
            fmt(m.norm_defect)
        ),
        Err(e) => format!(
            "{},{},{},,,,nan,nan,nan,nan,nan,nan,nan,nan,nan,\"failed: {}\"",
            p.index,
            fmt(p.eps),
            fmt(p.lambda),
            e.replace('"', "'")
        ),
    });
    write_lines(
        &setup.path("sweep.csv"),
        "index,eps,lambda,regime,ratio,modes,e_lead,e_volt,e_eff,e_pop,k_pop,p_down,p_down_predicted,remainder,norm_defect,status",
        rows,
    )?;
    let var = match setup.scenario.fit_variable {
        FitVariable::Epsilon => "epsilon",
        FitVariable::Lambda => "lambda",
    };
    let rows = report.fits.iter().map(|(name, f)| match f {
        Ok(f) => format!(
            "{name},{var},{},{},{},{},{},{}",
            setup.scenario.direction,
            fmt(f.slope),
            fmt(f.stderr),
            fmt(f.ci_low),
            fmt(f.ci_high),
            f.points
        ),
        Err(_) => format!("{name},{var},{},nan,nan,nan,nan,{}", setup.scenario.direction, x.len()),
    });
    write_lines(&setup.path("slopes.csv"), "metric,variable,direction,slope,stderr,ci_low,ci_high,points", rows)?;
    let modes: Vec<usize> = report.results.iter().map(|r| r.as_ref().map_or(0, |m| m.modes)).collect();
    setup.write_metadata(&points, &modes)?;
    Ok(report)
}

/// Emission summary of one point.
#[derive(Clone, Debug)]
pub struct EmissionResult {
    pub point: Point,
    pub ratio: f64,
    /// `⟨B⟩` at `t_end`.
    pub average: f64,
    pub limit_a: f64,
    pub limit_b: f64,
    /// `limit_a` when `λ²/ε ≥ STRONG_RATIO`, otherwise `limit_b`.
    pub limit: f64,
}

impl EmissionResult {
    pub fn relative_error(&self) -> f64 {
        (self.average - self.limit).abs() / self.limit.abs()
    }
}

fn emission_point(setup: &Setup, p: &Point) -> Result<EmissionResult> {
    let obs = setup.scenario.emission.observable();
    let grid = setup.grid(p.eps)?;
    let traj = setup.exact(&grid, p, true)?;
    let t_end = setup.scenario.t_end;
    let weights = setup.initial_populations();
    let r = p.lambda * p.lambda / p.eps;
    let (mut limit_a, mut limit_b) = (0.0, 0.0);
    for (j, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        limit_a += w * regime_a_limit(&setup.frame, &setup.bath, &obs, j).context(|| format!("regime A limit, level {}", j + 1))?.re;
        if r > 0.0 {
            limit_b += w
                * regime_b_limit(&setup.frame, &setup.bath, &setup.tables, &obs, j, r, t_end)
                    .context(|| format!("regime B limit, level {}", j + 1))?
                    .re;
        }
    }
    let limit = if r >= STRONG_RATIO { limit_a } else { limit_b };
    let averages = observable_average(&traj, &grid, &obs).context(|| "observable average".to_string())?;
    write_spectrum_csv(&setup.path(&format!("spectrum_{}.csv", p.index)), &traj, &grid, &obs, limit)
        .context(|| "writing spectrum".to_string())?;
    Ok(EmissionResult {
        point: *p,
        ratio: r,
        average: averages.last().expect("nonempty").re,
        limit_a,
        limit_b,
        limit,
    })
}

/// Emitted spectra of every point against the two limit laws.
pub fn run_emission(setup: &Setup) -> Result<Vec<EmissionResult>> {
    let points = setup.scenario.points();
    setup.check_points(&points)?;
    let results = setup.map_points(&points, |p| emission_point(setup, p))?.into_iter().collect::<Result<Vec<_>>>()?;
    let rows = results.iter().map(|e| {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            e.point.index,
            fmt(e.point.eps),
            fmt(e.point.lambda),
            fmt(e.ratio),
            fmt(e.average),
            fmt(e.limit_a),
            fmt(e.limit_b),
            fmt(e.limit),
            fmt(e.relative_error())
        )
    });
    write_lines(&setup.path("emission.csv"), "index,eps,lambda,ratio,average,limit_a,limit_b,limit,rel_err", rows)?;
    Ok(results)
}

#[derive(Clone, Debug)]
pub struct RegimeResult {
    pub point: Point,
    pub regime: Regime,
    pub ratio: f64,
    pub formula: &'static str,
    pub p_down_predicted: f64,
    pub remainder: f64,
    pub p_down: f64,
}

/// Regime classification, predicted and measured `p↓(t_end)` per point.
pub fn run_regimes(setup: &Setup) -> Result<Vec<RegimeResult>> {
    let points = setup.scenario.points();
    setup.check_points(&points)?;
    let results = setup
        .map_points(&points, |p| -> Result<RegimeResult> {
            let grid = setup.grid(p.eps)?;
            let traj = setup.exact(&grid, p, false)?;
            let pred = regime_prediction(&setup.frame, &setup.tables, p.eps, p.lambda, &setup.scenario.z0, setup.scenario.t_end);
            Ok(RegimeResult {
                point: *p,
                regime: pred.regime,
                ratio: pred.ratio,
                formula: pred.formula,
                p_down_predicted: pred.p_down,
                remainder: pred.remainder,
                p_down: *traj.p_down.last().expect("nonempty"),
            })
        })?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let rows = results.iter().map(|r| {
        format!(
            "{},{},{},{},{},{},{},{},\"{}\"",
            r.point.index,
            fmt(r.point.eps),
            fmt(r.point.lambda),
            r.regime,
            fmt(r.ratio),
            fmt(r.p_down),
            fmt(r.p_down_predicted),
            fmt(r.remainder),
            r.formula
        )
    });
    write_lines(
        &setup.path("regimes.csv"),
        "index,eps,lambda,regime,ratio,p_down,p_down_predicted,remainder,formula",
        rows,
    )?;
    Ok(results)
}

#[derive(Clone, Debug)]
pub struct ValidationRow {
    pub point: Point,
    pub smallness: f64,
    pub smallness_ok: bool,
    pub well_coupled: bool,
    pub beta_inf: Vec<f64>,
    pub modes: usize,
    pub corr_error: f64,
}

/// Coupling checks and mode discretization per point; fails with a
/// configuration error when a point violates smallness without override
/// or is not well coupled.
pub fn run_validate(setup: &Setup) -> Result<Vec<ValidationRow>> {
    let points = setup.scenario.points();
    let mut rows = Vec::with_capacity(points.len());
    for p in &points {
        let report = validate_coupling(&setup.frame, &setup.bath, p.lambda).context(|| "coupling checks".to_string())?;
        let grid = setup.grid(p.eps)?;
        rows.push(ValidationRow {
            point: *p,
            smallness: report.smallness_value,
            smallness_ok: report.smallness_ok,
            well_coupled: report.well_coupled.iter().all(|&b| b),
            beta_inf: report.beta_inf,
            modes: grid.len(),
            corr_error: grid.achieved,
        });
    }
    let lines = rows.iter().map(|r| {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            r.point.index,
            fmt(r.point.eps),
            fmt(r.point.lambda),
            fmt(r.smallness),
            r.smallness_ok,
            r.well_coupled,
            r.beta_inf.iter().map(|b| fmt(*b)).collect::<Vec<_>>().join(";"),
            r.modes,
            fmt(r.corr_error)
        )
    });
    write_lines(
        &setup.path("validate.csv"),
        "index,eps,lambda,smallness,smallness_ok,well_coupled,beta_inf,modes,corr_error",
        lines,
    )?;
    if let Some(r) = rows.iter().find(|r| !r.well_coupled) {
        return Err(HarnessError::Config(format!("point {}: a level is not well coupled", r.point.index)));
    }
    if !setup.override_smallness {
        if let Some(r) = rows.iter().find(|r| !r.smallness_ok) {
            return Err(HarnessError::Config(format!(
                "point {} (ε = {}, λ = {}): smallness value {:.4} ≥ 1",
                r.point.index, r.point.eps, r.point.lambda, r.smallness
            )));
        }
    }
    Ok(rows)
}
