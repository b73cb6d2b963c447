//! Energy functionals along trajectories and checks of the inequalities
//! they satisfy.

mod feasibility;

pub use feasibility::{
    solve_feasibility, ChosenPoint, Constraint, ConstraintGroup, ConstraintSummary,
    FeasibilityProblem, FeasibilityReport, GridSpec, CONSTRAINTS,
};

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{Solver, Trajectory};
use crate::model::{ForcingKind, ForcingSpec, ModelSpec};
use crate::quadrature::{integrate, weighted_tail_integral};
use crate::spectral::{Basis, ModalState};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyParams {
    pub rho: f64,
    pub chi: f64,
    pub sigma1: f64,
    /// Multiplier in the energy of the difference system.
    pub xi: f64,
    pub c0: f64,
    pub c5: f64,
    /// Scale of the absorbing radius.
    pub c14: f64,
}

impl EnergyParams {
    /// `sigma1 = chi / 2`, `c0 = c5 = 0`, `c14 = 1`, `xi` from [`Self::default_xi`].
    pub fn new(rho: f64, chi: f64, lambda1: f64) -> Self {
        Self {
            rho,
            chi,
            sigma1: chi / 2.0,
            xi: Self::default_xi(lambda1),
            c0: 0.0,
            c5: 0.0,
            c14: 1.0,
        }
    }

    pub fn default_xi(lambda1: f64) -> f64 {
        0.1f64.min(lambda1.sqrt() / 4.0)
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if !(self.rho > 0.0 && self.chi > 0.0) {
            return Err(Error::Config("rho and chi must be positive".into()));
        }
        if !(self.sigma1 > 0.0 && self.sigma1 < self.chi) {
            return Err(Error::Config(format!(
                "sigma1 = {} must lie strictly inside (0, chi = {})",
                self.sigma1, self.chi
            )));
        }
        if !(self.xi >= 0.0) || !(self.c0 >= 0.0) || !(self.c5 >= 0.0) {
            return Err(Error::Config("xi, c0 and c5 must be non-negative".into()));
        }
        if !(self.c14 > 0.0) {
            return Err(Error::Config("c14 must be positive".into()));
        }
        let c4 = spec.nonlinearity.structure.c4;
        if self.c0 > c4 {
            return Err(Error::Config(format!("c0 = {} exceeds c4 = {c4}", self.c0)));
        }
        Ok(())
    }
}

/// `E = eps ||v + rho u||^2 - rho^2 eps ||u||^2 + (1 + rho) ||grad u||^2
///  + delta/2 ||grad u||^4 + lambda ||u||^2 - 2 (G(u), 1) + 2 c0`.
pub fn eval_e(solver: &Solver, state: &ModalState, params: &EnergyParams) -> Result<f64> {
    let spec = &solver.spec;
    let eps = spec.epsilon.eval(state.t)?.0;
    let rho = params.rho;
    let grad = solver.basis.grad_norm_sq(&state.u);
    let mixed = state.v.axpy(rho, &state.u).norm_sq();
    let u2 = state.u.norm_sq();
    let pot = solver.colloc.potential_integral(&spec.nonlinearity, &state.u)?;
    Ok(eps * mixed - rho * rho * eps * u2
        + (1.0 + rho) * grad
        + 0.5 * spec.delta * grad * grad
        + spec.lambda * u2
        - 2.0 * pot
        + 2.0 * params.c0)
}

/// `I = rho/2 ||grad u||^2 + 2 delta rho ||grad u||^4 - 2 rho (g(u), u)
///  + rho (2 eps - rho) ||v + rho u||^2 - chi E`.
pub fn eval_i(solver: &Solver, state: &ModalState, params: &EnergyParams) -> Result<f64> {
    let spec = &solver.spec;
    let eps = spec.epsilon.eval(state.t)?.0;
    let rho = params.rho;
    let grad = solver.basis.grad_norm_sq(&state.u);
    let work = solver.colloc.work_integral(&spec.nonlinearity, &state.u)?;
    let mixed = state.v.axpy(rho, &state.u).norm_sq();
    let e = eval_e(solver, state, params)?;
    Ok(0.5 * rho * grad + 2.0 * spec.delta * rho * grad * grad - 2.0 * rho * work
        + rho * (2.0 * eps - rho) * mixed
        - params.chi * e)
}

/// `K = 1/2 ||grad v||^2 + rho ||grad u||^2 - 8 rho^2 eps / lambda1 ||v||^2
///  - rho^2 lambda1 eps / 2 ||u||^2`.
pub fn eval_k_with(basis: &Basis, state: &ModalState, eps: f64, rho: f64) -> f64 {
    let l1 = basis.lambda1();
    0.5 * basis.grad_norm_sq(&state.v) + rho * basis.grad_norm_sq(&state.u)
        - 8.0 * rho * rho * eps / l1 * state.v.norm_sq()
        - 0.5 * rho * rho * l1 * eps * state.u.norm_sq()
}

pub fn eval_k(solver: &Solver, state: &ModalState, params: &EnergyParams) -> Result<f64> {
    let eps = solver.spec.epsilon.eval(state.t)?.0;
    Ok(eval_k_with(&solver.basis, state, eps, params.rho))
}

/// Second-order energy with `w = u_t`:
/// `eps ||w_t||_{-1}^2 + 2 rho eps (w_t, w) + ||w||^2 + rho ||grad w||^2 + lambda ||w||_{-1}^2`,
/// where `w_t` is rebuilt from the equation.
pub fn eval_l_state(solver: &Solver, state: &ModalState, params: &EnergyParams) -> Result<f64> {
    let eps = solver.spec.epsilon.eval(state.t)?.0;
    let w = &state.v;
    let wt = solver.acceleration(state)?;
    let b = &solver.basis;
    Ok(eps * b.dual_norm_sq(&wt)
        + 2.0 * params.rho * eps * wt.dot(w)
        + w.norm_sq()
        + params.rho * b.grad_norm_sq(w)
        + solver.spec.lambda * b.dual_norm_sq(w))
}

pub fn eval_l(solver: &Solver, traj: &Trajectory, params: &EnergyParams, t: f64) -> Result<f64> {
    if !traj.accel_available {
        return Err(Error::Precondition("trajectory has no reconstructable acceleration".into()));
    }
    let i = traj.index_of(t)?;
    eval_l_state(solver, &traj.states[i], params)
}

/// Quantity compared with `L`: `eps ||w_t||_{-1}^2 + ||grad w||^2`.
pub fn l_reference(solver: &Solver, state: &ModalState) -> Result<f64> {
    let eps = solver.spec.epsilon.eval(state.t)?.0;
    let wt = solver.acceleration(state)?;
    Ok(eps * solver.basis.dual_norm_sq(&wt) + solver.basis.grad_norm_sq(&state.v))
}

/// `eps ||z_t||^2 + 2 xi eps (z_t, z) + (1 + xi) ||grad z||^2 + lambda ||z||^2`.
pub fn eval_etilde_with(basis: &Basis, z: &ModalState, eps: f64, xi: f64, lambda: f64) -> f64 {
    eps * z.v.norm_sq()
        + 2.0 * xi * eps * z.v.dot(&z.u)
        + (1.0 + xi) * basis.grad_norm_sq(&z.u)
        + lambda * z.u.norm_sq()
}

pub fn eval_etilde(solver: &Solver, z: &ModalState, params: &EnergyParams) -> Result<f64> {
    let eps = solver.spec.epsilon.eval(z.t)?.0;
    Ok(eval_etilde_with(&solver.basis, z, eps, params.xi, solver.spec.lambda))
}

/// `e^{-sigma t} int_{-inf}^t e^{sigma s} ||h(s)||^2 ds`, in closed form for the
/// separable profile and by quadrature otherwise.
pub fn weighted_forcing_integral(forcing: &ForcingSpec, sigma: f64, t: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Integrability(format!("weight sigma = {sigma} must be positive")));
    }
    match &forcing.kind {
        ForcingKind::Zero => Ok(0.0),
        ForcingKind::Separable {
            amplitude, rate, ..
        } => {
            let (a2, beta) = (amplitude * amplitude, *rate);
            if !(sigma + 2.0 * beta > 0.0) {
                return Err(Error::Integrability(format!(
                    "forcing grows like e^(2 * {beta} |t|) into the past, faster than the weight e^({sigma} t) decays"
                )));
            }
            let up = sigma + 2.0 * beta;
            if t <= 0.0 {
                return Ok(a2 * (2.0 * beta * t).exp() / up);
            }
            let down = sigma - 2.0 * beta;
            let tail = if down == 0.0 {
                t
            } else {
                ((down * t).exp() - 1.0) / down
            };
            Ok((-sigma * t).exp() * a2 * (1.0 / up + tail))
        }
        ForcingKind::ModalTable { times, .. } => {
            // compactly supported: integrate over the support only
            let (lo, hi) = (times[0], times[times.len() - 1].min(t));
            if hi <= lo {
                return Ok(0.0);
            }
            let f = |s: f64| (sigma * (s - t)).exp() * forcing.norm_sq(s);
            let scale = f(hi).max(f(lo)).max(1e-300);
            Ok(integrate(&f, lo, hi, 1e-14 * scale * (hi - lo)))
        }
    }
}

/// Same integral by adaptive quadrature of the tail, for any profile.
pub fn weighted_forcing_integral_quadrature(forcing: &ForcingSpec, sigma: f64, t: f64) -> Result<f64> {
    if let ForcingKind::ModalTable { .. } = forcing.kind {
        return weighted_forcing_integral(forcing, sigma, t);
    }
    weighted_tail_integral(&|s| forcing.norm_sq(s), sigma, t)
}

/// Absorbing radius `B(t) = (c14 J(t) + c14)^{1/2}` with `J` the weighted
/// forcing integral at rate `sigma1`.
pub fn eval_b(forcing: &ForcingSpec, params: &EnergyParams, t: f64) -> Result<f64> {
    let j = weighted_forcing_integral(forcing, params.sigma1, t)?;
    Ok((params.c14 * j + params.c14).sqrt())
}

/// Per-record energies of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    pub e: Vec<f64>,
    pub i: Vec<f64>,
    pub k: Vec<f64>,
    pub l: Vec<f64>,
    /// Energy of the difference from a reference run; `NaN` without one.
    pub etilde: Vec<f64>,
    pub xt_norm_sq: Vec<f64>,
    pub b: Vec<f64>,
    pub h_sq: Vec<f64>,
    /// `(E_{n+1} - E_n) / dt + chi E_n - ||h_n||^2 / rho`; `NaN` at the last record.
    pub residuals: Vec<f64>,
}

impl EnergyLedger {
    pub fn build(
        solver: &Solver,
        traj: &Trajectory,
        params: &EnergyParams,
        reference: Option<&Trajectory>,
    ) -> Result<Self> {
        if let Some(r) = reference {
            if r.len() != traj.len() || r.states.iter().zip(&traj.states).any(|(a, b)| a.t != b.t) {
                return Err(Error::Config("reference trajectory is on a different time grid".into()));
            }
        }
        let rows: Vec<[f64; 9]> = traj
            .states
            .par_iter()
            .enumerate()
            .map(|(n, s)| -> Result<[f64; 9]> {
                let eps = solver.spec.epsilon.eval(s.t)?.0;
                let etilde = match reference {
                    Some(r) => eval_etilde(solver, &s.sub(&r.states[n]), params)?,
                    None => f64::NAN,
                };
                let l = if traj.accel_available {
                    eval_l_state(solver, s, params)?
                } else {
                    f64::NAN
                };
                Ok([
                    s.t,
                    eval_e(solver, s, params)?,
                    eval_i(solver, s, params)?,
                    eval_k_with(&solver.basis, s, eps, params.rho),
                    l,
                    etilde,
                    solver.basis.xt_norm_sq_with(s, eps),
                    eval_b(&solver.spec.forcing, params, s.t)?,
                    solver.spec.forcing.norm_sq(s.t),
                ])
            })
            .collect::<Result<_>>()?;
        let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
        let (times, e, h_sq) = (col(0), col(1), col(8));
        let mut residuals = vec![f64::NAN; rows.len()];
        for n in 0..rows.len().saturating_sub(1) {
            let dt = times[n + 1] - times[n];
            residuals[n] = (e[n + 1] - e[n]) / dt + params.chi * e[n] - h_sq[n] / params.rho;
        }
        Ok(Self {
            times,
            i: col(2),
            k: col(3),
            l: col(4),
            etilde: col(5),
            xt_norm_sq: col(6),
            b: col(7),
            e,
            h_sq,
            residuals,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Smallest `c5 >= 0` with `I >= -c5` on the ledger.
    pub fn i_floor(&self) -> f64 {
        self.i.iter().fold(0.0f64, |m, &i| m.max(-i))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,E,I,K,L,Etilde,xt_norm_sq,B,decay_residual")?;
        for n in 0..self.len() {
            let row = [
                self.times[n],
                self.e[n],
                self.i[n],
                self.k[n],
                self.l[n],
                self.etilde[n],
                self.xt_norm_sq[n],
                self.b[n],
                self.residuals[n],
            ];
            let cells: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayOptions {
    /// `None` fits `c5` as the floor of `I` plus `margin`.
    pub c5: Option<f64>,
    /// Slack per record is `slack_factor * dt * max(|E_n|, |E_{n+1}|)`.
    pub slack_factor: f64,
    /// Relative margin added to every fitted constant.
    pub margin: f64,
    /// Leading fraction of the records used to fit the norm bounds. The
    /// upper bound's ratio keeps growing as the state decays, so anything
    /// short of the full run undershoots it.
    pub calibration_fraction: f64,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self {
            c5: None,
            slack_factor: 10.0,
            margin: 0.05,
            calibration_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub t: f64,
    pub excess: f64,
}

/// Constants of `X / c6 <= E <= c9 (X + ||grad u||^q + delta ||grad u||^4) + 2 c10`,
/// `X = ||grad u||^2 + eps ||v||^2`, `q` the critical exponent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormSandwich {
    pub c6: f64,
    pub c9: f64,
    pub c10: f64,
    pub calibration_records: usize,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub c5: f64,
    pub c5_fitted: bool,
    /// Largest `residual - c5 - slack`; non-positive when the inequality holds.
    pub max_excess: f64,
    /// Largest `residual - c5` (the slack actually needed).
    pub max_needed_slack: f64,
    pub violations: Vec<Violation>,
    pub min_energy: f64,
    /// Violations of `E(t) <= e^{-sigma1 (t - t0)} E(t0) + J(t) / rho + c5 / sigma1`.
    pub energy_bound_violations: Vec<Violation>,
    pub sandwich: NormSandwich,
    /// Front constant `c11 = c6 c9` of the norm bound, with `c12 = c6 / rho`
    /// and `c13 = 2 c6 c10 + c5 c6 / sigma1`.
    pub c11: f64,
    pub c12: f64,
    pub c13: f64,
    /// Largest ratio of `X(t)` to the norm bound.
    pub norm_bound_ratio: f64,
    pub norm_bound_violations: Vec<Violation>,
    pub passed: bool,
}

/// `e^{-sigma t_n} int_{t0}^{t_n} e^{sigma s} ||h||^2 ds` on the ledger grid.
fn windowed_forcing_integrals(forcing: &ForcingSpec, sigma: f64, times: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; times.len()];
    for n in 1..times.len() {
        let (a, b) = (times[n - 1], times[n]);
        let f = |s: f64| (sigma * (s - b)).exp() * forcing.norm_sq(s);
        let scale = f(a).max(f(b)).max(1e-300);
        out[n] = (-sigma * (b - a)).exp() * out[n - 1] + integrate(&f, a, b, 1e-14 * scale * (b - a));
    }
    out
}

/// Checks the dissipative inequality `dE/dt <= -chi E + ||h||^2 / rho + c5` on
/// consecutive records, its integrated form, and the norm bound built from the
/// fitted constants.
pub fn verify_decay_inequality(
    solver: &Solver,
    traj: &Trajectory,
    ledger: &EnergyLedger,
    params: &EnergyParams,
    opts: &DecayOptions,
) -> Result<DecayReport> {
    params.validate(&solver.spec)?;
    let problem = FeasibilityProblem::from_spec(&solver.spec, solver.basis.lambda1(), params.c0);
    if let Some(name) = problem.first_decay_failure(params.rho, params.chi) {
        return Err(Error::Precondition(format!(
            "(rho, chi) = ({}, {}) violates {name}",
            params.rho, params.chi
        )));
    }
    if ledger.len() != traj.len() {
        return Err(Error::Config("ledger and trajectory lengths differ".into()));
    }
    let n = ledger.len();
    let (c5, c5_fitted) = match opts.c5 {
        Some(c) => (c, false),
        None => (ledger.i_floor() * (1.0 + opts.margin), true),
    };

    let mut violations = Vec::new();
    let mut max_excess = f64::NEG_INFINITY;
    let mut max_needed = f64::NEG_INFINITY;
    for k in 0..n.saturating_sub(1) {
        let dt = ledger.times[k + 1] - ledger.times[k];
        let scale = ledger.e[k].abs().max(ledger.e[k + 1].abs());
        let slack = opts.slack_factor * dt * scale;
        let need = ledger.residuals[k] - c5;
        let excess = need - slack;
        max_needed = max_needed.max(need);
        max_excess = max_excess.max(excess);
        if excess > 0.0 {
            violations.push(Violation {
                t: ledger.times[k],
                excess,
            });
        }
    }
    let min_energy = ledger.e.iter().copied().fold(f64::INFINITY, f64::min);

    // integrated energy bound
    let sigma = params.sigma1;
    let t0 = ledger.times[0];
    let j = windowed_forcing_integrals(&solver.spec.forcing, sigma, &ledger.times);
    let mut energy_bound_violations = Vec::new();
    for k in 0..n {
        let bound = (-sigma * (ledger.times[k] - t0)).exp() * ledger.e[0] + j[k] / params.rho + c5 / sigma;
        let tol = 1e-9 * bound.abs().max(1.0);
        if ledger.e[k] > bound + tol {
            energy_bound_violations.push(Violation {
                t: ledger.times[k],
                excess: ledger.e[k] - bound,
            });
        }
    }

    let sandwich = fit_norm_sandwich(solver, traj, ledger, params, opts)?;
    let (c6, c9, c10) = (sandwich.c6, sandwich.c9, sandwich.c10);
    let c11 = c6 * c9;
    let c12 = c6 / params.rho;
    let c13 = 2.0 * c6 * c10 + c5 * c6 / sigma;
    let w0 = sandwich_upper_arg(solver, &traj.states[0], ledger.xt_norm_sq[0]);
    let mut norm_bound_ratio = 0.0f64;
    let mut norm_bound_violations = Vec::new();
    for k in 0..n {
        let bound = c11 * (-sigma * (ledger.times[k] - t0)).exp() * w0 + c12 * j[k] + c13;
        let x = ledger.xt_norm_sq[k];
        if bound > 0.0 {
            norm_bound_ratio = norm_bound_ratio.max(x / bound);
        } else if x > 0.0 {
            norm_bound_ratio = f64::INFINITY;
        }
        if x > bound * (1.0 + 1e-12) {
            norm_bound_violations.push(Violation {
                t: ledger.times[k],
                excess: x - bound,
            });
        }
    }

    let passed = violations.is_empty()
        && min_energy >= 0.0
        && energy_bound_violations.is_empty()
        && sandwich.violations.is_empty()
        && norm_bound_violations.is_empty();
    Ok(DecayReport {
        c5,
        c5_fitted,
        max_excess: if n > 1 { max_excess } else { 0.0 },
        max_needed_slack: if n > 1 { max_needed } else { 0.0 },
        violations,
        min_energy,
        energy_bound_violations,
        sandwich,
        c11,
        c12,
        c13,
        norm_bound_ratio,
        norm_bound_violations,
        passed,
    })
}

/// `X + ||grad u||^q + delta ||grad u||^4`.
fn sandwich_upper_arg(solver: &Solver, state: &ModalState, x: f64) -> f64 {
    let grad = solver.basis.grad_norm_sq(&state.u);
    let q = solver.spec.critical_exponent();
    x + grad.powf(q / 2.0) + solver.spec.delta * grad * grad
}

/// Fits `c6`, `c9` on the calibration prefix (with `c10 = (1 + margin) c0`)
/// and checks the two-sided bound at every record.
pub fn fit_norm_sandwich(
    solver: &Solver,
    traj: &Trajectory,
    ledger: &EnergyLedger,
    params: &EnergyParams,
    opts: &DecayOptions,
) -> Result<NormSandwich> {
    let n = ledger.len();
    let m = ((n as f64 * opts.calibration_fraction).ceil() as usize).clamp(1, n.max(1));
    let c10 = params.c0 * (1.0 + opts.margin);
    let upper_args: Vec<f64> = (0..n)
        .map(|k| sandwich_upper_arg(solver, &traj.states[k], ledger.xt_norm_sq[k]))
        .collect();

    let mut c6 = 0.0f64;
    let mut c9 = 0.0f64;
    for k in 0..m {
        let (x, e) = (ledger.xt_norm_sq[k], ledger.e[k]);
        if x > 0.0 {
            if !(e > 0.0) {
                return Err(Error::Precondition(format!(
                    "energy {e} is not positive at t = {} although the state is not zero",
                    ledger.times[k]
                )));
            }
            c6 = c6.max(x / e);
        }
        if upper_args[k] > 0.0 {
            c9 = c9.max((e - 2.0 * c10) / upper_args[k]);
        }
    }
    c6 *= 1.0 + opts.margin;
    c9 *= 1.0 + opts.margin;

    let mut violations = Vec::new();
    for k in 0..n {
        let (x, e) = (ledger.xt_norm_sq[k], ledger.e[k]);
        let lower = x / c6.max(f64::MIN_POSITIVE);
        let upper = c9 * upper_args[k] + 2.0 * c10;
        let tol = 1e-12 * e.abs().max(1e-300);
        if (x > 0.0 && lower > e + tol) || e > upper + tol {
            let excess = (lower - e).max(e - upper);
            violations.push(Violation {
                t: ledger.times[k],
                excess,
            });
        }
    }
    Ok(NormSandwich {
        c6,
        c9,
        c10,
        calibration_records: m,
        violations,
    })
}

/// Two-sided bound `c18 R <= L <= c19 R`, `R = eps ||w_t||_{-1}^2 + ||grad w||^2`,
/// fitted on a prefix and checked everywhere.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LSandwich {
    pub c18: f64,
    pub c19: f64,
    pub violations: Vec<Violation>,
}

pub fn fit_l_sandwich(
    solver: &Solver,
    traj: &Trajectory,
    params: &EnergyParams,
    calibration_fraction: f64,
    margin: f64,
) -> Result<LSandwich> {
    let pairs: Vec<(f64, f64, f64)> = traj
        .states
        .par_iter()
        .map(|s| Ok((s.t, eval_l_state(solver, s, params)?, l_reference(solver, s)?)))
        .collect::<Result<_>>()?;
    let m = ((pairs.len() as f64 * calibration_fraction).ceil() as usize).clamp(1, pairs.len().max(1));
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &(_, l, r) in &pairs[..m] {
        if r > 0.0 {
            lo = lo.min(l / r);
            hi = hi.max(l / r);
        }
    }
    let c18 = if lo.is_finite() { lo / (1.0 + margin) } else { 0.0 };
    let c19 = hi * (1.0 + margin);
    let violations = pairs
        .iter()
        .filter(|&&(_, l, r)| r > 0.0 && (l < c18 * r * (1.0 - 1e-12) || l > c19 * r * (1.0 + 1e-12)))
        .map(|&(t, l, r)| Violation {
            t,
            excess: (c18 * r - l).max(l - c19 * r),
        })
        .collect();
    Ok(LSandwich { c18, c19, violations })
}
