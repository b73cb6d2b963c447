use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use kirchhoff_core::attractor::{absorbing_report, pullback_cloud, semicontinuity_sweep};
use kirchhoff_core::energy::{
    solve_feasibility, verify_decay_inequality, ChosenPoint, ConstraintSummary, DecayOptions,
    DecayReport,
};
use kirchhoff_core::model::{validate_hypotheses, HypothesisReport};
use kirchhoff_core::{
    EnergyLedger, EnergyParams, FeasibilityProblem, FeasibilityReport, GridSpec, Solver, Trajectory,
};

use crate::config::{ConfigError, ExperimentConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] kirchhoff_core::Error),
    #[error("{0}")]
    Property(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Property(_) => 1,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(kirchhoff_core::Error::Precondition(_)) => 1,
            CliError::Config(_) | CliError::Core(_) | CliError::Io(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Successful run; `failure` carries a property violation that still produced artifacts.
pub struct Outcome {
    pub failure: Option<String>,
}

impl Outcome {
    fn check(passed: bool, message: impl FnOnce() -> String) -> Self {
        Self {
            failure: (!passed).then(message),
        }
    }
}

fn log(stage: &str, msg: impl AsRef<str>) {
    eprintln!("[{stage}] {}", msg.as_ref());
}

struct Artifacts<'a> {
    dir: PathBuf,
    cfg: &'a ExperimentConfig,
}

impl<'a> Artifacts<'a> {
    fn new(cfg: &'a ExperimentConfig, out: Option<&Path>) -> Result<Self> {
        let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.directory.clone());
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, cfg })
    }

    fn csv(&self, name: &str, write: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<()> {
        if !self.cfg.output.csv {
            return Ok(());
        }
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        write(&mut w)?;
        w.flush()?;
        log("write", path.display().to_string());
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        if !self.cfg.output.json {
            return Ok(());
        }
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::from)?;
        text.push('\n');
        fs::write(&path, text)?;
        log("write", path.display().to_string());
        Ok(())
    }
}

fn solver(cfg: &ExperimentConfig) -> Result<Solver> {
    Ok(Solver::new(cfg.spec.clone(), cfg.basis.clone())?)
}

fn feasibility_report(cfg: &ExperimentConfig, grid: &GridSpec) -> FeasibilityReport {
    let problem = FeasibilityProblem::from_spec(&cfg.spec, cfg.basis.lambda1(), cfg.energy.c0);
    solve_feasibility(&problem, grid)
}

/// Energy parameters from the config, with `(rho, chi)` taken from the
/// feasibility scan when not given.
fn energy_params(cfg: &ExperimentConfig) -> Result<EnergyParams> {
    let lambda1 = cfg.basis.lambda1();
    let e = &cfg.energy;
    let (rho, chi, sigma1) = match (e.rho, e.chi) {
        (Some(rho), Some(chi)) => (rho, chi, e.sigma1.unwrap_or(chi / 2.0)),
        _ => {
            let report = feasibility_report(cfg, &e.grid);
            let p = report.chosen.ok_or_else(|| {
                CliError::Property(format!(
                    "no feasible (rho, chi) on the scan grid; binding constraint: {}",
                    report.binding.unwrap_or("none")
                ))
            })?;
            log("energy", format!("rho = {}, chi = {} from the feasibility scan", p.rho, p.chi));
            (p.rho, p.chi, e.sigma1.unwrap_or(p.sigma1))
        }
    };
    let mut params = EnergyParams::new(rho, chi, lambda1);
    params.sigma1 = sigma1;
    if let Some(xi) = e.xi {
        params.xi = xi;
    }
    params.c0 = e.c0;
    params.c5 = e.c5.unwrap_or(0.0);
    params.c14 = e.c14;
    params.validate(&cfg.spec)?;
    Ok(params)
}

pub fn validate(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Outcome> {
    let art = Artifacts::new(cfg, out)?;
    let t_range = (cfg.step.t_start, cfg.step.t_end.max(cfg.step.t_start + cfg.step.dt));
    let report: HypothesisReport =
        validate_hypotheses(&cfg.spec, cfg.validate_u_range, t_range, cfg.validate_samples)?;
    for c in &report.checks {
        log("validate", format!("{:<32} {} (margin {:.3e})", c.name, if c.passed { "ok" } else { "FAILED" }, c.margin));
    }
    art.json("hypotheses.json", &report)?;
    Ok(Outcome::check(report.all_passed, || {
        let names: Vec<_> = report.failed().map(|c| c.name).collect();
        format!("hypotheses violated: {}", names.join(", "))
    }))
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    t_start: f64,
    t_end: f64,
    dt: f64,
    records: usize,
    final_xt_norm_sq: f64,
    /// Largest `residual - c5` over the ledger; `null` when the check could not run.
    decay_residual_max: Option<f64>,
    params: &'a EnergyParams,
    decay: Option<DecaySummary>,
    decay_skipped: Option<String>,
}

#[derive(Serialize)]
struct DecaySummary {
    passed: bool,
    c5: f64,
    c5_fitted: bool,
    max_excess: f64,
    violations: usize,
    energy_bound_violations: usize,
    c6: f64,
    c9: f64,
    c10: f64,
    sandwich_violations: usize,
    c11: f64,
    c12: f64,
    c13: f64,
    norm_bound_ratio: f64,
    norm_bound_violations: usize,
}

impl From<&DecayReport> for DecaySummary {
    fn from(r: &DecayReport) -> Self {
        Self {
            passed: r.passed,
            c5: r.c5,
            c5_fitted: r.c5_fitted,
            max_excess: r.max_excess,
            violations: r.violations.len(),
            energy_bound_violations: r.energy_bound_violations.len(),
            c6: r.sandwich.c6,
            c9: r.sandwich.c9,
            c10: r.sandwich.c10,
            sandwich_violations: r.sandwich.violations.len(),
            c11: r.c11,
            c12: r.c12,
            c13: r.c13,
            norm_bound_ratio: r.norm_bound_ratio,
            norm_bound_violations: r.norm_bound_violations.len(),
        }
    }
}

fn run_trajectory(cfg: &ExperimentConfig, solver: &Solver) -> Result<Trajectory> {
    let x0 = cfg.initial.state(&cfg.basis, cfg.step.t_start)?;
    let traj = solver.run(&x0, &cfg.step)?;
    log("simulate", format!("{} records on [{}, {}]", traj.len(), cfg.step.t_start, cfg.step.t_end));
    Ok(traj)
}

pub fn simulate(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Outcome> {
    let art = Artifacts::new(cfg, out)?;
    let params = energy_params(cfg)?;
    let solver = solver(cfg)?;
    let traj = run_trajectory(cfg, &solver)?;
    // the difference energy is measured against the delta = 0 run from the same data
    let reference = if cfg.spec.delta != 0.0 {
        let s0 = Solver::new(cfg.spec.clone().with_delta(0.0), cfg.basis.clone())?;
        Some(run_trajectory(cfg, &s0)?)
    } else {
        None
    };
    let ledger = EnergyLedger::build(&solver, &traj, &params, Some(reference.as_ref().unwrap_or(&traj)))?;
    art.csv("trajectory.csv", |w| traj.write_csv(&cfg.basis, w))?;
    art.csv("ledger.csv", |w| ledger.write_csv(w))?;

    let opts = DecayOptions {
        c5: cfg.energy.c5,
        slack_factor: cfg.energy.slack_factor,
        ..DecayOptions::default()
    };
    let (decay, skipped) = match verify_decay_inequality(&solver, &traj, &ledger, &params, &opts) {
        Ok(r) => (Some(r), None),
        Err(kirchhoff_core::Error::Precondition(msg)) => (None, Some(msg)),
        Err(e) => return Err(e.into()),
    };
    let e_end = cfg.spec.epsilon.eval(traj.last().t)?.0;
    let summary = SimulationSummary {
        t_start: cfg.step.t_start,
        t_end: cfg.step.t_end,
        dt: cfg.step.dt,
        records: traj.len(),
        final_xt_norm_sq: cfg.basis.xt_norm_sq_with(traj.last(), e_end),
        decay_residual_max: decay.as_ref().map(|r| r.max_needed_slack),
        params: &params,
        decay: decay.as_ref().map(DecaySummary::from),
        decay_skipped: skipped.clone(),
    };
    art.json("summary.json", &summary)?;
    if let Some(r) = &decay {
        log("energy", format!("decay inequality {} (max residual {:.3e})", if r.passed { "holds" } else { "FAILS" }, r.max_needed_slack));
    }
    Ok(match (decay, skipped) {
        (Some(r), _) => Outcome::check(r.passed, || {
            format!("decay inequality violated at {} records", r.violations.len())
        }),
        (None, msg) => Outcome::check(false, || format!("decay check skipped: {}", msg.unwrap_or_default())),
    })
}

#[derive(Serialize)]
struct FeasibilitySummary<'a> {
    problem: &'a FeasibilityProblem,
    grid: &'a GridSpec,
    constraints: &'a [ConstraintSummary],
    feasible_count: usize,
    sandwich_feasible: usize,
    chosen: Option<ChosenPoint>,
    empty: bool,
    binding: Option<&'static str>,
    feasible: &'a [[f64; 2]],
}

pub fn feasibility(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Outcome> {
    let art = Artifacts::new(cfg, out)?;
    let report = feasibility_report(cfg, &cfg.energy.grid);
    log("feasibility", format!("{} of {} grid points feasible", report.feasible.len(), report.failures.len()));
    if let Some(p) = report.chosen {
        log("feasibility", format!("chosen rho = {}, chi = {}, sigma1 = {}", p.rho, p.chi, p.sigma1));
    }
    art.json(
        "feasibility.json",
        &FeasibilitySummary {
            problem: &report.problem,
            grid: &report.grid,
            constraints: &report.constraints,
            feasible_count: report.feasible.len(),
            sandwich_feasible: report.sandwich_feasible,
            chosen: report.chosen,
            empty: report.empty,
            binding: report.binding,
            feasible: &report.feasible,
        },
    )?;
    Ok(Outcome::check(!report.empty, || {
        format!("feasible set is empty; binding constraint: {}", report.binding.unwrap_or("none"))
    }))
}

fn tau_label(tau: f64) -> String {
    format!("{tau}").replace('.', "p")
}

pub fn pullback(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Outcome> {
    let art = Artifacts::new(cfg, out)?;
    let params = energy_params(cfg)?;
    let solver = solver(cfg)?;
    let at = &cfg.attractor;
    let mut clouds = Vec::with_capacity(at.ensemble.taus.len());
    for &tau in &at.ensemble.taus {
        let cloud = pullback_cloud(&solver, &params, &at.ensemble, at.t_star, tau)?;
        log("pullback", format!("tau = {tau}: {} members evolved to t = {}", cloud.points.len(), at.t_star));
        art.csv(&format!("cloud_tau_{}.csv", tau_label(tau)), |w| cloud.write_csv(&cfg.basis, w))?;
        clouds.push(cloud);
    }
    let report = absorbing_report(&solver, &params, at.t_star, &clouds)?;
    for r in &report.rows {
        log("pullback", format!("tau = {}: fraction inside {:.4}", r.tau, r.fraction_inside));
    }
    art.json("absorbing.json", &report)?;
    Ok(Outcome::check(report.passed, || {
        "ensemble from the largest horizon is not absorbed".to_string()
    }))
}

pub fn semicontinuity(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Outcome> {
    let art = Artifacts::new(cfg, out)?;
    let params = energy_params(cfg)?;
    let at = &cfg.attractor;
    let table = semicontinuity_sweep(&cfg.spec, &cfg.basis, &at.deltas, &params, &at.ensemble, at.t_star, at.tau)?;
    for r in &table.rows {
        log("semicontinuity", format!("delta = {}: dist = {:.6e}", r.delta, r.distance));
    }
    art.csv("sweep.csv", |w| table.write_csv(w))?;
    art.json("sweep.json", &table)?;
    Ok(Outcome::check(table.non_increasing, || {
        format!("distance column grows by more than {} as delta decreases", table.noise_band)
    }))
}

#[derive(Serialize)]
struct DecompositionSummary<'a> {
    k: f64,
    residual_tol: f64,
    max_residual: f64,
    sup_laplacian_u2: f64,
    worst_decay_ratio: f64,
    warnings: &'a [kirchhoff_core::integrator::DecompositionWarning],
}

/// Allowed excess of the `u1` decay ratio over one.
const DECAY_RATIO_TOL: f64 = 1e-3;

pub fn decompose(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Outcome> {
    let art = Artifacts::new(cfg, out)?;
    let solver = solver(cfg)?;
    let traj = run_trajectory(cfg, &solver)?;
    let pair = solver.run_decomposition(&traj, cfg.residual_tol)?;
    let basis = &cfg.basis;
    let first = pair.u1.first();
    let g0 = basis.grad_norm_sq(&first.u);
    art.csv("decomposition.csv", |w| {
        writeln!(w, "t,residual,grad_u1_sq,grad_u1_bound,laplacian_u2_sq")?;
        for (n, (a, b)) in pair.u1.states.iter().zip(&pair.u2.states).enumerate() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                a.t,
                pair.residuals[n],
                basis.grad_norm_sq(&a.u),
                (-2.0 * (a.t - first.t)).exp() * g0,
                basis.laplacian_norm_sq(&b.u)
            )?;
        }
        Ok(())
    })?;
    let summary = DecompositionSummary {
        k: pair.k,
        residual_tol: pair.residual_tol,
        max_residual: pair.max_residual(),
        sup_laplacian_u2: pair.sup_laplacian_u2(basis),
        worst_decay_ratio: pair.worst_decay_ratio(basis),
        warnings: &pair.warnings,
    };
    log(
        "decompose",
        format!(
            "max residual {:.3e}, sup |lap u2|^2 {:.6e}, decay ratio {:.6}",
            summary.max_residual, summary.sup_laplacian_u2, summary.worst_decay_ratio
        ),
    );
    art.json("decomposition.json", &summary)?;
    let ok = pair.warnings.is_empty() && summary.worst_decay_ratio <= 1.0 + DECAY_RATIO_TOL;
    Ok(Outcome::check(ok, || {
        format!(
            "{} residual warnings, decay ratio {}",
            pair.warnings.len(),
            summary.worst_decay_ratio
        )
    }))
}
