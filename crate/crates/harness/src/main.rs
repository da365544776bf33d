use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wwlab::run::{run_emission, run_regimes, run_simulate, run_sweep, run_validate, RunOptions, Setup};
use wwlab::{Result, Scenario};

#[derive(Parser)]
#[command(name = "wwlab", version, about = "Adiabatic Wigner-Weisskopf simulations and convergence studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (flat dotted keys, TOML syntax).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory, overriding `output.dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for sweep points.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Run points that violate the coupling smallness condition.
    #[arg(long)]
    override_smallness: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Exact, Volterra, effective and leading-order dynamics at the first point.
    Simulate(Common),
    /// All points with error metrics and log-log slope fits.
    Sweep(Common),
    /// Emitted spectra and their limit laws.
    Emission(Common),
    /// Regime classification with predicted and measured de-excitation.
    Regimes(Common),
    /// Coupling and discretization checks without time stepping.
    Validate(Common),
}

fn setup(c: &Common) -> Result<Setup> {
    let scenario = Scenario::from_path(&c.config)?;
    let opts = RunOptions { out_dir: c.out.clone(), threads: c.threads, override_smallness: c.override_smallness };
    Setup::new(scenario, &opts)
}

fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Simulate(c) => {
            let s = setup(c)?;
            let m = run_simulate(&s)?;
            println!(
                "eps={} lambda={} regime={} modes={} e_lead={:.4e} e_volt={:.4e} e_eff={:.4e} norm_defect={:.3e}",
                m.point.eps, m.point.lambda, m.regime, m.modes, m.e_lead, m.e_volt, m.e_eff, m.norm_defect
            );
            println!("wrote {}", s.out_dir.display());
        }
        Command::Sweep(c) => {
            let s = setup(c)?;
            let report = run_sweep(&s)?;
            for m in report.metrics() {
                println!(
                    "[{}] eps={} lambda={} {} e_lead={:.4e} e_volt={:.4e} e_eff={:.4e} K={:.3}",
                    m.point.index, m.point.eps, m.point.lambda, m.regime, m.e_lead, m.e_volt, m.e_eff, m.k_pop
                );
            }
            for (name, fit) in &report.fits {
                match fit {
                    Ok(f) => println!("{name}: slope {:.3} ± {:.3} ({} points)", f.slope, f.stderr, f.points),
                    Err(e) => println!("{name}: {e}"),
                }
            }
            println!("wrote {}", s.out_dir.display());
            if report.failed() > 0 {
                return Err(wwlab::HarnessError::Failed(format!(
                    "{} of {} points failed; partial results written",
                    report.failed(),
                    report.points.len()
                )));
            }
        }
        Command::Emission(c) => {
            let s = setup(c)?;
            for e in run_emission(&s)? {
                println!(
                    "[{}] eps={} lambda={} r={:.3} <B>={:.6} limit={:.6} rel_err={:.3e}",
                    e.point.index,
                    e.point.eps,
                    e.point.lambda,
                    e.ratio,
                    e.average,
                    e.limit,
                    e.relative_error()
                );
            }
            println!("wrote {}", s.out_dir.display());
        }
        Command::Regimes(c) => {
            let s = setup(c)?;
            for r in run_regimes(&s)? {
                println!(
                    "[{}] eps={} lambda={} {} p_down={:.4} predicted={:.4} (+/- {:.2e})",
                    r.point.index, r.point.eps, r.point.lambda, r.regime, r.p_down, r.p_down_predicted, r.remainder
                );
            }
            println!("wrote {}", s.out_dir.display());
        }
        Command::Validate(c) => {
            let s = setup(c)?;
            let rows = run_validate(&s)?;
            for r in &rows {
                println!(
                    "[{}] eps={} lambda={} smallness={:.4} modes={} corr_error={:.2e}",
                    r.point.index, r.point.eps, r.point.lambda, r.smallness, r.modes, r.corr_error
                );
            }
            println!("ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
