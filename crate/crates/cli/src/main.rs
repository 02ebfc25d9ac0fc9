use acflow_cli::config::{parse_continuity, ConfigError, OrderChoice, RunConfig};
use acflow_cli::drivers::{
    default_ladder, run_audit, run_comparison, run_ode_demo, run_single, AuditCase,
    ComparisonOutcome, ConvergenceEntry, OdeDemo, SingleRun, COMPARISON_SPAN,
};
use acflow_cli::report::{render_csv, render_ode_csv, write_text};
use acflow_cli::scenario::Scenario;
use acflow_core::{OdeError, StepError};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "acflow",
    version,
    about = "Doubly-adaptive artificially compressed incompressible-flow integrator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file, flat `key = value` lines
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV output path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized audit schedules
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Cells per edge
    #[arg(long)]
    grid: Option<usize>,
    /// Accepted order: 1, 2, or var
    #[arg(long)]
    order: Option<String>,
    /// Continuity coupling: ga or min
    #[arg(long)]
    continuity: Option<String>,
    /// Integrate to this time instead of the scenario's own horizon
    #[arg(long)]
    t_final: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Scalar-problem demonstration: convergence slopes and estimator decay
    OdeDemo(Common),
    /// Tolerance-ladder temporal convergence against the exact solution
    MmsConvergence {
        #[command(flatten)]
        common: Common,
        /// Keep the first-order step estimate inside (tol/10, tol)
        #[arg(long)]
        band_rule: bool,
        /// Comma-separated tolerance ladder, at least three rungs
        #[arg(long, value_delimiter = ',')]
        tols: Vec<f64>,
    },
    /// Machine-precision energy-balance audits on randomized schedules
    EnergyAudit(Common),
    /// Continuity-coupling comparison at constant step
    CompareContinuity(Common),
    /// Qualitative rotational-flow run, diagnostics only
    DrivenFlow(Common),
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("audit residual {residual:.3e} exceeds 1e-8 ({name})")]
    AuditFailed { name: &'static str, residual: f64 },
    #[error("{0}")]
    BadFlag(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::BadFlag(_) => 3,
            CliError::Step(StepError::Solver(_)) => 2,
            CliError::Ode(OdeError::NewtonStall { .. })
            | CliError::Ode(OdeError::SingularJacobian { .. }) => 2,
            _ => 1,
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            eprintln!("{e}");
            std::process::exit(3);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

/// Build the effective config: file (if given), then flag overrides.
fn effective_config(common: &Common, scenario: Option<Scenario>) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(sc) = scenario {
        cfg.scenario = sc;
    }
    if let Some(n) = common.grid {
        cfg.nx = n;
        cfg.ny = n;
    }
    if let Some(o) = &common.order {
        cfg.order = OrderChoice::parse(o)
            .ok_or_else(|| CliError::BadFlag(format!("--order must be 1, 2, or var, got `{o}`")))?;
    }
    if let Some(c) = &common.continuity {
        cfg.continuity = parse_continuity(c)
            .ok_or_else(|| CliError::BadFlag(format!("--continuity must be ga or min, got `{c}`")))?;
    }
    if let Some(t) = common.t_final {
        cfg.t_final = Some(t);
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

/// Sibling path with `-tag` appended to the file stem.
fn tagged_path(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    path.with_file_name(format!("{stem}-{tag}.{ext}"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::OdeDemo(common) => ode_demo(&common),
        Command::MmsConvergence {
            common,
            band_rule,
            tols,
        } => mms_convergence(&common, band_rule, &tols),
        Command::EnergyAudit(common) => energy_audit(&common),
        Command::CompareContinuity(common) => compare_continuity(&common),
        Command::DrivenFlow(common) => driven_flow(&common),
    }
}

fn ode_demo(common: &Common) -> Result<(), CliError> {
    let demo: OdeDemo = run_ode_demo()?;
    println!("decay problem y' = -y on [0, 2], errors at the final time:");
    println!("{:>12} {:>14} {:>14}", "k", "err(be)", "err(filtered)");
    for i in 0..demo.ks.len() {
        println!(
            "{:>12.6} {:>14.3e} {:>14.3e}",
            demo.ks[i], demo.errs_be[i], demo.errs_filtered[i]
        );
    }
    println!(
        "slopes: be {:.3}, filtered {:.3}",
        demo.slope_be, demo.slope_filtered
    );
    println!(
        "estimator decay under step halving at t = 0.5: est1 x{:.2}, est2 x{:.2}",
        demo.est1_ratio, demo.est2_ratio
    );
    println!(
        "variable-order run accepted {:.0}% of steps at order 2",
        100.0 * demo.order2_fraction
    );
    if let Some(out) = &common.out {
        write_text(out, &render_ode_csv(&demo.adaptive_records))?;
        println!("adaptive step records written to {}", out.display());
    }
    Ok(())
}

fn mms_convergence(common: &Common, band_rule: bool, tols: &[f64]) -> Result<(), CliError> {
    let mut cfg = effective_config(common, Some(Scenario::Manufactured))?;
    if common.grid.is_none() && common.config.is_none() {
        cfg.nx = 64;
        cfg.ny = 64;
    }
    let ladder = if tols.is_empty() {
        default_ladder()
    } else if tols.len() >= 3 {
        tols.to_vec()
    } else {
        return Err(CliError::BadFlag(format!(
            "--tols needs at least three rungs, got {}",
            tols.len()
        )));
    };
    let entries = acflow_cli::drivers::run_convergence(&cfg, &ladder, band_rule)?;
    print_convergence(&entries);
    let ks: Vec<f64> = entries.iter().map(|e| e.run.avg_k).collect();
    let errs: Vec<f64> = entries
        .iter()
        .map(|e| e.run.final_err_u.expect("manufactured runs carry errors"))
        .collect();
    let max_errs: Vec<f64> = entries
        .iter()
        .map(|e| e.run.max_err_u.expect("manufactured runs carry errors"))
        .collect();
    println!(
        "velocity-error slope vs average k: final {:.3}, max-over-run {:.3}",
        acflow_cli::drivers::log_log_slope(&ks, &errs),
        acflow_cli::drivers::log_log_slope(&ks, &max_errs)
    );
    if let Some(out) = &cfg.out {
        for entry in &entries {
            let path = tagged_path(out, &format!("tol{:.2e}", entry.tol));
            write_text(&path, &render_csv(&entry.run.rows))?;
        }
        println!("per-tolerance series written next to {}", out.display());
    }
    Ok(())
}

fn print_convergence(entries: &[ConvergenceEntry]) {
    println!(
        "{:>10} {:>12} {:>12} {:>12} {:>10} {:>10} {:>7} {:>7}",
        "tol", "err_u", "max_err_u", "err_p", "avg_k", "avg_eps", "steps", "rej"
    );
    for e in entries {
        println!(
            "{:>10.3e} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.4e} {:>10.4e} {:>7} {:>7}",
            e.tol,
            e.run.final_err_u.unwrap_or(f64::NAN),
            e.run.max_err_u.unwrap_or(f64::NAN),
            e.run.final_err_p.unwrap_or(f64::NAN),
            e.run.avg_k,
            e.run.avg_eps,
            e.run.steps,
            e.run.rejections
        );
    }
}

fn energy_audit(common: &Common) -> Result<(), CliError> {
    let cfg = effective_config(common, Some(Scenario::Manufactured))?;
    // effective_config already validated the flags; narrow the case list by them
    let order_flag = common.order.is_some().then_some(cfg.order);
    let cont_flag = common.continuity.is_some().then_some(cfg.continuity);
    let cases: Vec<AuditCase> = AuditCase::all()
        .into_iter()
        .filter(|c| {
            let order_ok = match order_flag {
                None => true,
                Some(OrderChoice::First) => *c != AuditCase::SecondOrderGa,
                Some(_) => *c == AuditCase::SecondOrderGa,
            };
            let cont_ok = match cont_flag {
                None => true,
                Some(acflow_core::ContinuityVariant::Min) => *c == AuditCase::FirstOrderMin,
                Some(acflow_core::ContinuityVariant::GeometricAverage) => {
                    *c != AuditCase::FirstOrderMin
                }
            };
            order_ok && cont_ok
        })
        .collect();
    let mut worst: Option<(&'static str, f64)> = None;
    for case in cases {
        let report = run_audit(case, common.seed, cfg.nx)?;
        println!(
            "{}: {} steps, lhs {:.12e}, rhs {:.12e}, residual {:.3e} (rel {:.3e})",
            case.name(),
            report.steps,
            report.lhs,
            report.rhs,
            report.residual_abs,
            report.residual_rel
        );
        if worst.is_none_or(|(_, r)| report.residual_rel > r) {
            worst = Some((case.name(), report.residual_rel));
        }
    }
    if let Some((name, residual)) = worst {
        if residual > 1e-8 {
            return Err(CliError::AuditFailed { name, residual });
        }
    }
    println!("all audited balances closed to 1e-8 relative");
    Ok(())
}

fn compare_continuity(common: &Common) -> Result<(), CliError> {
    let cfg = effective_config(common, Some(Scenario::Manufactured))?;
    let outcome: ComparisonOutcome = run_comparison(cfg.nx, cfg.ny, COMPARISON_SPAN)?;
    let line = |name: &str, run: &SingleRun| {
        println!(
            "{name}: avg eps {:.4e}, avg |div u| {:.4e}, final err_u {:.4e}, steps {}",
            run.avg_eps,
            run.avg_div,
            run.final_err_u.unwrap_or(f64::NAN),
            run.steps
        );
    };
    line("geometric average", &outcome.ga);
    line("min coupling     ", &outcome.min_run);
    println!(
        "constant-epsilon control runs identical: {}",
        outcome.control_identical
    );
    if let Some(out) = &cfg.out {
        write_text(&tagged_path(out, "ga"), &render_csv(&outcome.ga.rows))?;
        write_text(&tagged_path(out, "min"), &render_csv(&outcome.min_run.rows))?;
        println!("series written next to {}", out.display());
    }
    Ok(())
}

fn driven_flow(common: &Common) -> Result<(), CliError> {
    let mut cfg = effective_config(common, Some(Scenario::Driven))?;
    if common.config.is_none() {
        // the driven square needs looser tolerances than the smooth exact-flow defaults
        cfg.tol_m = 1e-2;
        cfg.tol_c = 1e-2;
    }
    let run = run_single(&cfg)?;
    println!(
        "driven flow on [-1,1]^2: {} steps, {} rejections, final energy {:.6e}",
        run.steps, run.rejections, run.final_energy
    );
    println!("center-cell pressure samples:");
    println!("{:>10} {:>14}", "t", "p(center)");
    let stride = (run.rows.len() / 10).max(1);
    for (row, p) in run.rows.iter().zip(&run.center_pressure).step_by(stride) {
        println!("{:>10.4} {:>14.6e}", row.t, p);
    }
    if let Some(out) = &cfg.out {
        write_text(out, &render_csv(&run.rows))?;
        println!("series written to {}", out.display());
    }
    Ok(())
}
