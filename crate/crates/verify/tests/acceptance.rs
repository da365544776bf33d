//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::f64::consts::{E, PI};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use wwlab::config::Point;
use wwlab::fit::loglog_slope;
use wwlab::run::{run_emission, run_point, PointRun, RunOptions, Setup};
use wwlab::Scenario;
use wwlab_core::asymptotics::{population_approx, semigroup_time_independent};
use wwlab_core::atom::{EigenFrame, FnAtom, FrameOptions, FrameProvider};
use wwlab_core::bath::{BathSpec, Observable};
use wwlab_core::emission::{regime_a_limit, regime_b_limit};
use wwlab_core::linalg::{c, eig, op_norm, outer, CMat, CVec, C64};
use wwlab_core::quadrature::{composite_gl, composite_gl_real};
use wwlab_core::reduced::EffectiveGenerator;
use wwlab_core::spectral::{contour_integral, riesz_projection, spectrum_at};

type Outcome = Result<(bool, String), String>;

fn setup(text: &str, out: &Path) -> Result<Setup, String> {
    let scenario = Scenario::parse(text, Path::new(".")).map_err(|e| e.to_string())?;
    let opts = RunOptions { out_dir: Some(out.to_path_buf()), threads: None, override_smallness: false };
    Setup::new(scenario, &opts).map_err(|e| e.to_string())
}

fn reference(extra: &str, out: &Path) -> Result<Setup, String> {
    setup(&format!("scenario = \"ww-ref-2level\"\n{extra}"), out)
}

/// Reference sweep along `λ² = ε`, shared by criteria 1, 2, 3 and 9.
struct Sweep {
    eps: Vec<f64>,
    runs: Vec<PointRun>,
    setup: Setup,
}

fn reference_sweep(out: &Path) -> Result<Sweep, String> {
    let setup = reference("", out)?;
    let points = setup.scenario.points();
    let runs = std::thread::scope(|s| {
        let handles: Vec<_> = points.iter().map(|p| s.spawn(|| run_point(&setup, p))).collect();
        handles.into_iter().map(|h| h.join().expect("worker")).collect::<Result<Vec<_>, _>>()
    })
    .map_err(|e| e.to_string())?;
    Ok(Sweep { eps: points.iter().map(|p| p.eps).collect(), runs, setup })
}

fn criterion1(sw: &Sweep) -> Outcome {
    let k = sw.eps.iter().position(|&e| e == 0.05).ok_or("ε = 0.05 missing")?;
    let m = &sw.runs[k].metrics;
    Ok((m.norm_defect < 1e-8, format!("norm defect {:.2e} < 1e-8 at ε=0.05, N={} modes", m.norm_defect, m.modes)))
}

fn criterion2(sw: &Sweep) -> Outcome {
    let e: Vec<f64> = sw.runs.iter().map(|r| r.metrics.e_lead).collect();
    let monotone = e.windows(2).all(|w| w[1] < w[0]);
    let fit = loglog_slope(&sw.eps, &e).map_err(|e| e.to_string())?;
    let ok = monotone && (0.7..=1.3).contains(&fit.slope);
    let list = e.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ");
    Ok((ok, format!("E_lead [{list}] monotone={monotone}, slope {:.3} in [0.7, 1.3]", fit.slope)))
}

fn criterion3(sw: &Sweep) -> Outcome {
    let p0 = sw.setup.initial_populations()[0];
    let k: Vec<f64> = sw
        .runs
        .iter()
        .map(|r| {
            let (eps, lambda) = (r.metrics.point.eps, r.metrics.point.lambda);
            let l2 = lambda * lambda;
            let err = r
                .exact
                .times
                .iter()
                .zip(&r.exact.populations)
                .map(|(&t, p)| (p[0] - population_approx(&sw.setup.tables, eps, lambda, p0, 0, t)).abs())
                .fold(0.0, f64::max);
            err / (eps + l2 + l2 * l2 / eps)
        })
        .collect();
    let (lo, hi) = k.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    let list = k.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ");
    Ok((hi / lo <= 2.0, format!("K [{list}], max/min {:.3} <= 2", hi / lo)))
}

fn criterion4(out: &Path) -> Outcome {
    let p_down = |eps: f64, l2: f64| -> Result<f64, String> {
        let s = reference(
            &format!("sweep.epsilons = [{eps}]\nsweep.lambda_rule = \"explicit\"\nsweep.lambdas = [{}]\n", l2.sqrt()),
            out,
        )?;
        let p = Point { index: 0, eps, lambda: l2.sqrt() };
        let grid = s.grid(eps).map_err(|e| e.to_string())?;
        let traj = s.exact(&grid, &p, false).map_err(|e| e.to_string())?;
        Ok(*traj.p_down.last().expect("nonempty"))
    };
    let strong = p_down(0.01, 0.1)?;
    let weak = p_down(0.1, 1e-3)?;
    Ok((
        strong > 0.9 && weak < 0.5,
        format!("strong p_down(1) {strong:.4} > 0.9, weak p_down(1) {weak:.3e} < 5ε = 0.5"),
    ))
}

fn criterion5(out: &Path) -> Outcome {
    let s = setup("scenario = \"ww-const-2level\"\n", out)?;
    let a = CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(2.0)]));
    let v = CVec::from_vec(vec![c(1.0), c(1.0)]);
    let points = s.scenario.points();
    let mut errs = Vec::new();
    for p in &points {
        let grid = s.grid(p.eps).map_err(|e| e.to_string())?;
        let exact = s.exact(&grid, p, false).map_err(|e| e.to_string())?;
        let mut sup: f64 = 0.0;
        for (&t, z) in exact.times.iter().zip(&exact.z) {
            let semi = semigroup_time_independent(&a, &v, &s.bath, p.lambda, &s.scenario.z0, t / p.eps)
                .map_err(|e| e.to_string())?;
            sup = sup.max((z - semi).norm());
        }
        errs.push(sup);
    }
    let lambdas: Vec<f64> = points.iter().map(|p| p.lambda).collect();
    let fit = loglog_slope(&lambdas, &errs).map_err(|e| e.to_string())?;
    let list = errs.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ");
    Ok(((fit.slope - 2.0).abs() <= 0.3, format!("sup error [{list}], slope {:.3} = 2 ± 0.3", fit.slope)))
}

/// Eigenvectors `(cos θ, e^{it} sin θ)`, `(−sin θ, e^{it} cos θ)` with `θ = π/4`.
fn complex_frame() -> Result<EigenFrame, String> {
    let th = PI / 4.0;
    let phis = move |t: f64| {
        let e = C64::from_polar(1.0, t);
        (CVec::from_vec(vec![c(th.cos()), e * th.sin()]), CVec::from_vec(vec![c(-th.sin()), e * th.cos()]))
    };
    let atom = FnAtom {
        dim: 2,
        a: Arc::new(move |t: f64| {
            let (p1, p2) = phis(t);
            outer(&p1, &p1) + outer(&p2, &p2) * c(2.0)
        }),
        v: Arc::new(|_t: f64| CVec::from_vec(vec![c(1.0), c(1.0)])),
    };
    let provider: FrameProvider = Arc::new(move |t: f64| {
        let (p1, p2) = phis(t);
        (vec![1.0, 2.0], CMat::from_columns(&[p1, p2]))
    });
    EigenFrame::explicit(Arc::new(atom), provider, FrameOptions::default()).map_err(|e| e.to_string())
}

fn criterion6(sw: &Sweep) -> Outcome {
    let frame = &sw.setup.frame;
    let mut worst: f64 = 0.0;
    for t in [0.25, 0.5, 1.0] {
        let w = frame.kato_intertwiner(t, 0.0).map_err(|e| e.to_string())?;
        let (_, phi_t) = frame.at(t);
        for j in 0..2 {
            let xi = frame.berry_phase(j, t).map_err(|e| e.to_string())?;
            let d = (&w * frame.node_vectors(0).column(j) - phi_t.column(j) * C64::from_polar(1.0, xi)).norm();
            worst = worst.max(d);
        }
    }
    let xi = complex_frame()?.berry_phase(0, 1.0).map_err(|e| e.to_string())?;
    Ok((
        worst < 1e-6 && (xi + 0.5).abs() < 1e-8,
        format!("transport defect {worst:.2e} < 1e-6, complex-frame ξ₁(1) {xi:.10} vs -0.5 to 1e-8"),
    ))
}

fn criterion7(sw: &Sweep) -> Outcome {
    // Residue identity on the level pair {1, 2}.
    let alpha = [1.0, 2.0];
    let mut residue: f64 = 0.0;
    for (j, &aj) in alpha.iter().enumerate() {
        for (l, &al) in alpha.iter().enumerate() {
            let val = -contour_integral(c(aj), 0.5, 64, |z| z / ((c(al) - z) * (c(al) - z)));
            let expect = if j == l { -1.0 } else { 0.0 };
            residue = residue.max((val - c(expect)).norm());
        }
    }

    let frame = &sw.setup.frame;
    let bath = &sw.setup.bath;
    let eps = 0.05;
    let v2 = frame.coupling_sup().powi(2);
    let l1 = bath.l1_norm().map_err(|e| e.to_string())?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let (mut riesz, mut ratio): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let t: f64 = rng.gen_range(0.0..1.0);
        let l2: f64 = rng.gen_range(1e-4..1.0 / 40.0);
        let gen = EffectiveGenerator::new(frame, bath, eps, l2.sqrt());
        let g = gen.at(t).map_err(|e| e.to_string())?;
        let spec = spectrum_at(&gen, t).map_err(|e| e.to_string())?;
        let e = eig(&g).ok_or("eigensolver failed")?;
        for j in 0..2 {
            let p = riesz_projection(&g, spec.values[j], 0.5 * frame.gap(), 64).map_err(|e| e.to_string())?;
            let k = (0..2)
                .min_by(|&a, &b| (e.values[a] - spec.values[j]).norm().total_cmp(&(e.values[b] - spec.values[j]).norm()))
                .expect("two eigenvalues");
            riesz = riesz.max((p - e.projection(k)).camax());
            let dist = op_norm(&(&spec.projections[j] - frame.projection(j, t)));
            ratio = ratio.max(dist / (4.0 * l2 * v2 * l1 / frame.gap()));
        }
    }
    Ok((
        residue < 1e-10 && riesz < 1e-8 && ratio <= 1.0,
        format!(
            "residue defect {residue:.2e} < 1e-10, Riesz vs eigensolver {riesz:.2e} < 1e-8, \
             projection distance / bound max {ratio:.3} <= 1 over 50 samples"
        ),
    ))
}

fn criterion8(out: &Path) -> Outcome {
    let s = reference("sweep.epsilons = [0.05, 0.02]\n", out)?;
    let res = run_emission(&s).map_err(|e| e.to_string())?;
    let rel: Vec<f64> = res.iter().map(|e| e.relative_error()).collect();

    let obs = Observable::Constant(1.0);
    let j = 0;
    let a = regime_a_limit(&s.frame, &s.bath, &obs, j).map_err(|e| e.to_string())?.re;
    let b = regime_b_limit(&s.frame, &s.bath, &s.tables, &obs, j, 1000.0, 1.0).map_err(|e| e.to_string())?.re;
    let consistency = (b - a).abs() / a.abs();
    Ok((
        rel[0] < 0.2 && rel[1] < rel[0] && consistency < 0.01,
        format!(
            "rel error {:.4} (ε=0.05) < 0.2 and {:.4} (ε=0.02) smaller; B limit at r=1000 vs A limit {consistency:.2e} < 1%",
            rel[0], rel[1]
        ),
    ))
}

fn criterion9(sw: &Sweep) -> Outcome {
    let at = |e: f64| sw.eps.iter().position(|&x| x == e).map(|k| sw.runs[k].metrics.e_volt).ok_or("missing ε");
    let (a, b) = (at(0.1)?, at(0.05)?);
    Ok((a / b >= 1.5, format!("E_volt {a:.3e} (ε=0.1) / {b:.3e} (ε=0.05) = {:.3} >= 1.5", a / b)))
}

fn criterion10() -> Outcome {
    let bath = BathSpec::reference();
    let gamma = |t: f64| bath.correlation(t).expect("closed form");
    let g0 = bath.correlation_quadrature(0.0).map_err(|e| e.to_string())?;
    // t = tan u maps the half line onto [0, π/2).
    let l1_quad = 2.0 * composite_gl_real(0.0, PI / 2.0, 256, |u| gamma(u.tan()).norm() / (u.cos() * u.cos()));
    let l1 = bath.l1_norm().map_err(|e| e.to_string())?;
    // ∫_0^T e^{it} γ(t) dt; the tail is O(T⁻³).
    let half = composite_gl(0.0, 400.0, 4000, |t| C64::from_polar(1.0, t) * gamma(t));
    let hat_quad = 2.0 * half.re / (2.0 * PI).sqrt();
    let hat = bath.fourier_hat(1.0);
    let beta = bath.decay_and_shift(c(1.0), 1.0).map_err(|e| e.to_string())?.beta;
    let d = [
        (g0 - c(2.0)).norm().max((bath.correlation(0.0).map_err(|e| e.to_string())? - g0).norm()),
        (l1_quad - 4.0).abs().max((l1 - l1_quad).abs()),
        (hat_quad - (2.0 * PI).sqrt() / E).abs().max((hat - hat_quad).abs()),
        (half.re - PI / E).abs().max((beta - half.re).abs()),
    ];
    Ok((
        d.iter().all(|&x| x < 1e-6),
        format!(
            "deviations from quadrature: γ(0) {:.1e}, ‖γ‖₁ {:.1e}, γ̂(1) {:.1e}, β(1,1) {:.1e}, each < 1e-6",
            d[0], d[1], d[2], d[3]
        ),
    ))
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = |name: &str| dir.path().join(name);
    let started = Instant::now();
    let sweep = reference_sweep(&out("sweep"));

    let shared = |f: fn(&Sweep) -> Outcome| -> Outcome {
        match &sweep {
            Ok(sw) => f(sw),
            Err(e) => Err(format!("reference sweep failed: {e}")),
        }
    };
    let results: Vec<(usize, &str, Outcome)> = vec![
        (1, "norm conservation", shared(criterion1)),
        (2, "leading-order convergence along λ²=ε", shared(criterion2)),
        (3, "population bound constant", shared(criterion3)),
        (4, "regime taxonomy", criterion4(&out("regimes"))),
        (5, "time-independent semigroup order", criterion5(&out("const"))),
        (6, "Berry phase and Kato transport", shared(criterion6)),
        (7, "spectral machinery", shared(criterion7)),
        (8, "emission limits", criterion8(&out("emission"))),
        (9, "Volterra oracle refinement", shared(criterion9)),
        (10, "bath identities", criterion10()),
    ];

    let mut failed = 0;
    for (n, name, r) in &results {
        let (ok, detail) = match r {
            Ok((ok, d)) => (*ok, d.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!("criterion {n}: {} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
    println!("{} of {} criteria passed in {:.1} s", results.len() - failed, results.len(), started.elapsed().as_secs_f64());
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
