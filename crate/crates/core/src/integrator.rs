//! Time integration of the modal system
//!
//! ```text
//! eps(t) a_m'' + mu_m a_m' + (1 + delta S) mu_m a_m + lambda a_m = g_m + h_m,
//! S = sum_j mu_j a_j^2,
//! ```
//!
//! with the diagonal linear part (damping, stiffness, `lambda`) and the
//! forcing treated by the trapezoidal rule and the Kirchhoff modulation
//! `delta S mu_m a_m` together with `g` by second-order Adams-Bashforth.
//! The first step of a run has no history and falls back to explicit Euler
//! for those terms.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::spectral::{Basis, Collocation, ModalField, ModalState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Imex2,
    BackwardEulerImex1,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepConfig {
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub record_every: usize,
}

impl StepConfig {
    pub fn new(dt: f64, t_start: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_start,
            t_end,
            scheme: Scheme::Imex2,
            record_every: 1,
        }
    }

    pub fn recording(mut self, record_every: usize) -> Self {
        self.record_every = record_every;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// Number of steps; the window must be a whole number of steps and of records.
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt = {} must be positive", self.dt)));
        }
        if self.t_end < self.t_start {
            return Err(Error::Config("t_end must not precede t_start".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        let span = self.t_end - self.t_start;
        let n = (span / self.dt).round();
        if (n * self.dt - span).abs() > 1e-9 * span.abs().max(1.0) {
            return Err(Error::Config(format!(
                "window [{}, {}] is not a whole number of steps of {}",
                self.t_start, self.t_end, self.dt
            )));
        }
        let n = n as usize;
        if n % self.record_every != 0 {
            return Err(Error::Config(format!(
                "{n} steps are not a multiple of record_every = {}",
                self.record_every
            )));
        }
        Ok(n)
    }
}

/// Recorded states of one run, uniformly spaced by `dt * record_every`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub states: Vec<ModalState>,
    pub spacing: f64,
    /// The acceleration can be rebuilt from the equation at every record.
    pub accel_available: bool,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn first(&self) -> &ModalState {
        &self.states[0]
    }

    pub fn last(&self) -> &ModalState {
        &self.states[self.states.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Record at grid time `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let t0 = self.first().t;
        let i = if self.spacing > 0.0 {
            ((t - t0) / self.spacing).round()
        } else {
            0.0
        };
        let tol = 1e-9 * self.spacing.max(1e-12).max(t.abs() * 1e-6);
        if i < 0.0 || i as usize >= self.len() || (self.states[i as usize].t - t).abs() > tol {
            return Err(Error::Domain(format!("t = {t} is not on the recorded grid")));
        }
        Ok(i as usize)
    }

    /// CSV with columns `t`, `u_<mode>`..., `v_<mode>`... and 17 significant digits.
    pub fn write_csv<W: Write>(&self, basis: &Basis, mut out: W) -> io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((0..basis.len()).map(|i| format!("u_{}", basis.label(i))));
        header.extend((0..basis.len()).map(|i| format!("v_{}", basis.label(i))));
        writeln!(out, "{}", header.join(","))?;
        for s in &self.states {
            write!(out, "{:.16e}", s.t)?;
            for x in s.u.0.iter().chain(&s.v.0) {
                write!(out, ",{x:.16e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Integrator state that survives between segments, so that a run split on
/// the step grid reproduces the unsplit run bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: ModalState,
    origin: f64,
    index: u64,
    dt: f64,
    prev_nonlinear: Option<ModalField>,
}

impl Checkpoint {
    pub fn new(state: ModalState, dt: f64) -> Self {
        Self {
            origin: state.t,
            index: 0,
            dt,
            state,
            prev_nonlinear: None,
        }
    }

    fn time(&self, steps_ahead: u64) -> f64 {
        self.origin + (self.index + steps_ahead) as f64 * self.dt
    }
}

/// Galerkin system of one problem instance on one basis.
#[derive(Debug, Clone)]
pub struct Solver {
    pub spec: ModelSpec,
    pub basis: Basis,
    pub colloc: Collocation,
}

impl Solver {
    pub fn new(spec: ModelSpec, basis: Basis) -> Result<Self> {
        spec.validate()?;
        if spec.dim != basis.dim {
            return Err(Error::Config(format!(
                "model dimension {} differs from basis dimension {}",
                spec.dim, basis.dim
            )));
        }
        spec.forcing.check_basis(&basis)?;
        let colloc = Collocation::dealiased(&basis);
        Ok(Self {
            spec,
            basis,
            colloc,
        })
    }

    fn check_state(&self, state: &ModalState) -> Result<()> {
        if state.u.len() != self.basis.len() || state.v.len() != self.basis.len() {
            return Err(Error::Config(format!(
                "state has {}/{} coefficients, basis has {}",
                state.u.len(),
                state.v.len(),
                self.basis.len()
            )));
        }
        Ok(())
    }

    /// Explicitly treated terms: `g_m(u) - delta S mu_m a_m`.
    pub fn nonlinear_term(&self, u: &ModalField) -> Result<ModalField> {
        let mut out = self.colloc.eval_nonlinearity(&self.spec.nonlinearity, u)?;
        if self.spec.delta != 0.0 {
            let s = self.basis.grad_norm_sq(u);
            let c = self.spec.delta * s;
            for ((o, a), mu) in out.0.iter_mut().zip(&u.0).zip(self.basis.eigenvalues()) {
                *o -= c * mu * a;
            }
        }
        Ok(out)
    }

    pub fn forcing(&self, t: f64) -> Result<ModalField> {
        self.spec.forcing.eval(&self.basis, t).map(|(h, _)| h)
    }

    /// `u_tt` from the equation at `state`.
    pub fn acceleration(&self, state: &ModalState) -> Result<ModalField> {
        self.check_state(state)?;
        let (eps, _) = self.spec.epsilon.eval(state.t)?;
        let g = self.colloc.eval_nonlinearity(&self.spec.nonlinearity, &state.u)?;
        let h = self.forcing(state.t)?;
        let stiff = 1.0 + self.spec.delta * self.basis.grad_norm_sq(&state.u);
        let lambda = self.spec.lambda;
        Ok(ModalField(
            (0..self.basis.len())
                .map(|m| {
                    let mu = self.basis.eigenvalues()[m];
                    let (a, v) = (state.u.0[m], state.v.0[m]);
                    (g.0[m] + h.0[m] - stiff * mu * a - mu * v - lambda * a) / eps
                })
                .collect(),
        ))
    }

    /// One step from `state` without multistep history.
    pub fn step(&self, state: &ModalState, dt: f64, scheme: Scheme) -> Result<ModalState> {
        self.check_state(state)?;
        let mut ck = Checkpoint::new(state.clone(), dt);
        self.advance(&mut ck, scheme)?;
        Ok(ck.state)
    }

    fn advance(&self, ck: &mut Checkpoint, scheme: Scheme) -> Result<()> {
        let dt = ck.dt;
        let t0 = ck.time(0);
        let t1 = ck.time(1);
        let nl = self.nonlinear_term(&ck.state.u)?;
        let lambda = self.spec.lambda;
        let (a, v) = (&ck.state.u.0, &ck.state.v.0);
        let mut a_new = vec![0.0; a.len()];
        let mut v_new = vec![0.0; a.len()];
        match scheme {
            Scheme::Imex2 => {
                let eps = self.spec.epsilon.eval(t0 + 0.5 * dt)?.0;
                let h0 = self.forcing(t0)?;
                let h1 = self.forcing(t1)?;
                for m in 0..a.len() {
                    let mu = self.basis.eigenvalues()[m];
                    let kappa = mu + lambda;
                    let explicit = match &ck.prev_nonlinear {
                        Some(prev) => 1.5 * nl.0[m] - 0.5 * prev.0[m],
                        None => nl.0[m],
                    };
                    let damp = 0.5 * dt * mu + 0.25 * dt * dt * kappa;
                    let rhs = v[m] * (eps - damp) - dt * kappa * a[m]
                        + dt * (explicit + 0.5 * (h0.0[m] + h1.0[m]));
                    v_new[m] = rhs / (eps + damp);
                    a_new[m] = a[m] + 0.5 * dt * (v[m] + v_new[m]);
                }
            }
            Scheme::BackwardEulerImex1 => {
                let eps = self.spec.epsilon.eval(t1)?.0;
                let h1 = self.forcing(t1)?;
                for m in 0..a.len() {
                    let mu = self.basis.eigenvalues()[m];
                    let kappa = mu + lambda;
                    let rhs = eps * v[m] - dt * kappa * a[m] + dt * (nl.0[m] + h1.0[m]);
                    v_new[m] = rhs / (eps + dt * mu + dt * dt * kappa);
                    a_new[m] = a[m] + dt * v_new[m];
                }
            }
        }
        let next = ModalState {
            t: t1,
            u: ModalField(a_new),
            v: ModalField(v_new),
        };
        if !next.is_finite() {
            return Err(Error::BlowUp { t: t1 });
        }
        ck.state = next;
        ck.index += 1;
        ck.prev_nonlinear = Some(nl);
        Ok(())
    }

    /// Advances `ck` by `n_steps`, recording every `record_every` steps
    /// (the starting state is not included).
    pub fn run_segment(
        &self,
        ck: &mut Checkpoint,
        n_steps: usize,
        record_every: usize,
        scheme: Scheme,
    ) -> Result<Vec<ModalState>> {
        self.check_state(&ck.state)?;
        let mut out = Vec::with_capacity(n_steps / record_every.max(1));
        for i in 1..=n_steps {
            self.advance(ck, scheme)?;
            if i % record_every == 0 {
                out.push(ck.state.clone());
            }
        }
        Ok(out)
    }

    /// Solution from `initial` (placed at `cfg.t_start`) to `cfg.t_end`.
    pub fn run(&self, initial: &ModalState, cfg: &StepConfig) -> Result<Trajectory> {
        let n = cfg.n_steps()?;
        let start = ModalState {
            t: cfg.t_start,
            ..initial.clone()
        };
        self.check_state(&start)?;
        let mut ck = Checkpoint::new(start.clone(), cfg.dt);
        let mut states = vec![start];
        states.extend(self.run_segment(&mut ck, n, cfg.record_every, cfg.scheme)?);
        Ok(Trajectory {
            states,
            spacing: cfg.dt * cfg.record_every as f64,
            accel_available: true,
        })
    }

    /// Final state only; avoids storing the path.
    pub fn evolve(&self, initial: &ModalState, cfg: &StepConfig) -> Result<ModalState> {
        let n = cfg.n_steps()?;
        let start = ModalState {
            t: cfg.t_start,
            ..initial.clone()
        };
        self.check_state(&start)?;
        let mut ck = Checkpoint::new(start, cfg.dt);
        for _ in 0..n {
            self.advance(&mut ck, cfg.scheme)?;
        }
        Ok(ck.state)
    }

    /// `u_tt` at a recorded time of `traj`.
    pub fn reconstruct_accel(&self, traj: &Trajectory, t: f64) -> Result<ModalField> {
        let i = traj.index_of(t)?;
        self.acceleration(&traj.states[i])
    }
}

/// Split `u = u1 + u2` of a parent trajectory: `u1` carries the initial
/// displacement and decays, `u2` starts from zero and collects the forcing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionPair {
    pub u1: Trajectory,
    pub u2: Trajectory,
    /// Decay constant `k` used in `phi(s) = g(s) - k s`.
    pub k: f64,
    /// Modal 2-norm of the residual of the `u2` equation at each record;
    /// `NaN` at the two end points where no central difference exists.
    pub residuals: Vec<f64>,
    /// Records where the residual exceeds `residual_tol`.
    pub warnings: Vec<DecompositionWarning>,
    pub residual_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionWarning {
    pub t: f64,
    pub residual: f64,
}

/// Smallest `k` used by the decomposition; `phi(s) = g(s) - k s` must be
/// strictly decreasing.
pub const DECOMPOSITION_MIN_K: f64 = 1e-3;

impl DecompositionPair {
    pub fn max_residual(&self) -> f64 {
        self.residuals
            .iter()
            .filter(|r| r.is_finite())
            .fold(0.0, |m, &r| m.max(r))
    }

    /// `sup_t ||Delta u2(t)||^2`.
    pub fn sup_laplacian_u2(&self, basis: &Basis) -> f64 {
        self.u2
            .states
            .iter()
            .map(|s| basis.laplacian_norm_sq(&s.u))
            .fold(0.0, f64::max)
    }

    /// Worst ratio `||grad u1(t)||^2 / (e^{-2(t - t0)} ||grad u1(t0)||^2)`.
    pub fn worst_decay_ratio(&self, basis: &Basis) -> f64 {
        let first = self.u1.first();
        let g0 = basis.grad_norm_sq(&first.u);
        if g0 == 0.0 {
            return if self.u1.states.iter().all(|s| basis.grad_norm_sq(&s.u) == 0.0) {
                0.0
            } else {
                f64::INFINITY
            };
        }
        self.u1
            .states
            .iter()
            .map(|s| basis.grad_norm_sq(&s.u) / ((-2.0 * (s.t - first.t)).exp() * g0))
            .fold(0.0, f64::max)
    }
}

impl Solver {
    /// Integrates the `u1` equation
    /// `mu_m a1' = f_m - ((1 + delta S) mu_m + lambda) a1` with
    /// `f = phi(u) - phi(u - u1)` along the parent's recorded grid, sets
    /// `u2 = u - u1`, and evaluates the residual of the `u2` equation.
    ///
    /// The linear part of `f` (`-k u1`) is integrated exactly together with
    /// the diagonal damping; the rest of `f` is explicit.
    pub fn run_decomposition(&self, parent: &Trajectory, residual_tol: f64) -> Result<DecompositionPair> {
        if parent.len() < 2 || !parent.accel_available {
            return Err(Error::Precondition("decomposition needs a parent trajectory with at least two records".into()));
        }
        let k = self.spec.nonlinearity.k.max(DECOMPOSITION_MIN_K);
        let g = &self.spec.nonlinearity;
        let mus = self.basis.eigenvalues();
        let lambda = self.spec.lambda;
        let delta = self.spec.delta;
        let dt = parent.spacing;

        // f_g = g(u) - g(u - u1), projected
        let f_nonlinear = |u: &ModalField, u1: &ModalField| -> Result<ModalField> {
            if g.is_zero() {
                return Ok(ModalField::zeros(u.len()));
            }
            let gu = self.colloc.eval_nonlinearity(g, u)?;
            let gu2 = self.colloc.eval_nonlinearity(g, &u.sub(u1))?;
            Ok(gu.sub(&gu2))
        };
        let rates = |s: f64| -> Vec<f64> {
            mus.iter().map(|mu| 1.0 + delta * s + (lambda + k) / mu).collect()
        };

        let mut a1 = vec![parent.first().u.clone()];
        for n in 0..parent.len() - 1 {
            let (p0, p1) = (&parent.states[n], &parent.states[n + 1]);
            let s_mid = 0.5 * (self.basis.grad_norm_sq(&p0.u) + self.basis.grad_norm_sq(&p1.u));
            let r = rates(s_mid);
            let f = f_nonlinear(&p0.u, &a1[n])?;
            let next: Vec<f64> = (0..mus.len())
                .map(|m| {
                    let decay = (-r[m] * dt).exp();
                    decay * a1[n].0[m] + (1.0 - decay) / r[m] * f.0[m] / mus[m]
                })
                .collect();
            let next = ModalField(next);
            if !next.is_finite() {
                return Err(Error::BlowUp { t: p1.t });
            }
            a1.push(next);
        }

        // velocities of u1 from its own equation
        let mut u1_states = Vec::with_capacity(a1.len());
        let mut u2_states = Vec::with_capacity(a1.len());
        for (p, a) in parent.states.iter().zip(&a1) {
            let r = rates(self.basis.grad_norm_sq(&p.u));
            let f = f_nonlinear(&p.u, a)?;
            let v1 = ModalField((0..mus.len()).map(|m| f.0[m] / mus[m] - r[m] * a.0[m]).collect());
            u2_states.push(ModalState {
                t: p.t,
                u: p.u.sub(a),
                v: p.v.sub(&v1),
            });
            u1_states.push(ModalState {
                t: p.t,
                u: a.clone(),
                v: v1,
            });
        }

        // residual of -(1+dS) Lap u2 - Lap u2_t + lambda u2 = phi(u2) + psi,
        // psi = -eps u_tt + k u + h, with u2_t from central differences of u1
        let mut residuals = vec![f64::NAN; parent.len()];
        let mut warnings = Vec::new();
        for n in 1..parent.len().saturating_sub(1) {
            let p = &parent.states[n];
            let eps = self.spec.epsilon.eval(p.t)?.0;
            let accel = self.acceleration(p)?;
            let h = self.forcing(p.t)?;
            let u2 = &u2_states[n].u;
            let g_u2 = self.colloc.eval_nonlinearity(g, u2)?;
            let stiff = 1.0 + delta * self.basis.grad_norm_sq(&p.u);
            let mut sum = 0.0;
            for m in 0..mus.len() {
                let mu = mus[m];
                let da1 = (a1[n + 1].0[m] - a1[n - 1].0[m]) / (2.0 * dt);
                let du2 = p.v.0[m] - da1;
                let phi_u2 = g_u2.0[m] - k * u2.0[m];
                let psi = -eps * accel.0[m] + k * p.u.0[m] + h.0[m];
                let res = stiff * mu * u2.0[m] + mu * du2 + lambda * u2.0[m] - phi_u2 - psi;
                sum += res * res;
            }
            let r = sum.sqrt();
            residuals[n] = r;
            if r > residual_tol {
                warnings.push(DecompositionWarning { t: p.t, residual: r });
            }
        }

        Ok(DecompositionPair {
            u1: Trajectory {
                states: u1_states,
                spacing: dt,
                accel_available: false,
            },
            u2: Trajectory {
                states: u2_states,
                spacing: dt,
                accel_available: false,
            },
            k,
            residuals,
            warnings,
            residual_tol,
        })
    }
}

/// Two solutions differing only in the Kirchhoff coefficient and their difference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifferenceRun {
    pub a: Trajectory,
    pub b: Trajectory,
    /// `z = u_a - u_b` with `z_t`, on the common grid.
    pub z: Vec<ModalState>,
}

fn same_except_delta(a: &ModelSpec, b: &ModelSpec) -> bool {
    let mut b = b.clone();
    b.delta = a.delta;
    *a == b
}

/// Runs both problems from their data and returns the difference trajectory.
pub fn run_difference(
    spec_a: &ModelSpec,
    spec_b: &ModelSpec,
    basis: &Basis,
    x_a: &ModalState,
    x_b: &ModalState,
    cfg: &StepConfig,
) -> Result<DifferenceRun> {
    if !same_except_delta(spec_a, spec_b) {
        return Err(Error::Config("the two problems must differ only in delta".into()));
    }
    if x_a.u.len() != basis.len() || x_b.u.len() != basis.len() {
        return Err(Error::Config("initial data must live on the common basis".into()));
    }
    let sa = Solver::new(spec_a.clone(), basis.clone())?;
    let sb = Solver::new(spec_b.clone(), basis.clone())?;
    let (a, b) = rayon::join(|| sa.run(x_a, cfg), || sb.run(x_b, cfg));
    let (a, b) = (a?, b?);
    let z = a.states.iter().zip(&b.states).map(|(p, q)| p.sub(q)).collect();
    Ok(DifferenceRun { a, b, z })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EpsilonProfile, ForcingSpec, NonlinearitySpec};
    use std::f64::consts::PI;

    fn single_mode(a0: f64, v0: f64, n: usize) -> ModalState {
        let mut s = ModalState::zeros(n, 0.0);
        s.u.0[0] = a0;
        s.v.0[0] = v0;
        s
    }

    /// Closed form of `a'' + pi^2 a' + pi^2 a = 0`.
    fn closed_form(a0: f64, v0: f64, t: f64) -> (f64, f64) {
        let mu = PI * PI;
        let disc = (mu * mu - 4.0 * mu).sqrt();
        let (r1, r2) = ((-mu + disc) / 2.0, (-mu - disc) / 2.0);
        let c1 = (v0 - r2 * a0) / (r1 - r2);
        let c2 = a0 - c1;
        (
            c1 * (r1 * t).exp() + c2 * (r2 * t).exp(),
            c1 * r1 * (r1 * t).exp() + c2 * r2 * (r2 * t).exp(),
        )
    }

    #[test]
    fn step_config_validation() {
        assert!(StepConfig::new(0.0, 0.0, 1.0).n_steps().is_err());
        assert!(StepConfig::new(0.3, 0.0, 1.0).n_steps().is_err());
        assert!(StepConfig::new(0.1, 0.0, 1.0).recording(3).n_steps().is_err());
        assert_eq!(StepConfig::new(0.1, 0.0, 1.0).recording(5).n_steps().unwrap(), 10);
    }

    #[test]
    fn single_mode_linear_matches_closed_form() {
        let solver = Solver::new(ModelSpec::linear(1), Basis::new(1, 1)).unwrap();
        let traj = solver.run(&single_mode(1.0, 0.0, 1), &StepConfig::new(1e-3, 0.0, 1.0)).unwrap();
        let (exact, _) = closed_form(1.0, 0.0, 1.0);
        let err = ((traj.last().u.0[0] - exact) / exact).abs();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn zero_data_stays_zero() {
        let spec = ModelSpec {
            nonlinearity: NonlinearitySpec::cubic_soft(1.0),
            ..ModelSpec::linear(2).with_delta(0.5)
        };
        let solver = Solver::new(spec, Basis::new(2, 4)).unwrap();
        let traj = solver.run(&ModalState::zeros(16, 0.0), &StepConfig::new(1e-2, 0.0, 2.0)).unwrap();
        assert!(traj.states.iter().all(|s| s.u.norm_sq() == 0.0 && s.v.norm_sq() == 0.0));
    }

    #[test]
    fn kirchhoff_single_mode_matches_reference() {
        // reference: RK4 on a'' = -pi^2 a' - (1 + delta pi^2 a^2) pi^2 a at dt = 1e-5
        let delta = 0.5;
        let mu = PI * PI;
        let rhs = |a: f64, v: f64| (v, -mu * v - (1.0 + delta * mu * a * a) * mu * a);
        let (mut a, mut v) = (1.0, 0.0);
        let h = 1e-5;
        for _ in 0..100_000 {
            let k1 = rhs(a, v);
            let k2 = rhs(a + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
            let k3 = rhs(a + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
            let k4 = rhs(a + h * k3.0, v + h * k3.1);
            a += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        let solver = Solver::new(ModelSpec::linear(1).with_delta(delta), Basis::new(1, 1)).unwrap();
        let traj = solver.run(&single_mode(1.0, 0.0, 1), &StepConfig::new(1e-3, 0.0, 1.0)).unwrap();
        let err = ((traj.last().u.0[0] - a) / a).abs();
        assert!(err < 1e-4, "relative error {err}");
        // the reconstructed acceleration agrees with the reference right-hand side
        let acc = solver.acceleration(traj.last()).unwrap().0[0];
        let (_, acc_ref) = rhs(a, v);
        assert!(((acc - acc_ref) / acc_ref).abs() < 1e-4);
    }

    #[test]
    fn second_order_convergence() {
        let solver = Solver::new(ModelSpec::linear(1), Basis::new(1, 1)).unwrap();
        let (exact, _) = closed_form(1.0, 0.5, 1.0);
        let err = |dt| {
            let traj = solver.run(&single_mode(1.0, 0.5, 1), &StepConfig::new(dt, 0.0, 1.0)).unwrap();
            (traj.last().u.0[0] - exact).abs()
        };
        let ratio = err(2e-3) / err(1e-3);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn backward_euler_is_first_order() {
        let solver = Solver::new(ModelSpec::linear(1), Basis::new(1, 1)).unwrap();
        let (exact, _) = closed_form(1.0, 0.0, 1.0);
        let err = |dt| {
            let cfg = StepConfig::new(dt, 0.0, 1.0).with_scheme(Scheme::BackwardEulerImex1);
            let traj = solver.run(&single_mode(1.0, 0.0, 1), &cfg).unwrap();
            (traj.last().u.0[0] - exact).abs()
        };
        let ratio = err(2e-3) / err(1e-3);
        assert!((1.8..=2.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn empty_window_is_identity() {
        let solver = Solver::new(ModelSpec::linear(1), Basis::new(1, 3)).unwrap();
        let x = single_mode(0.3, -1.0, 3);
        let traj = solver.run(&x, &StepConfig::new(1e-2, 0.0, 0.0)).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.first(), &x);
    }

    #[test]
    fn split_run_is_bitwise_identical() {
        let spec = ModelSpec {
            nonlinearity: NonlinearitySpec::cubic_soft(1.0),
            forcing: ForcingSpec::separable(1.0, 0.5, vec![1, 1]),
            epsilon: EpsilonProfile::exp_decay(1.0, 0.5),
            ..ModelSpec::linear(2).with_delta(0.2)
        };
        let basis = Basis::new(2, 4);
        let solver = Solver::new(spec, basis).unwrap();
        let mut x = ModalState::zeros(16, -1.0);
        x.u.0[0] = 0.8;
        x.u.0[5] = -0.2;
        x.v.0[1] = 0.4;
        let whole = solver.run(&x, &StepConfig::new(1e-2, -1.0, 1.0)).unwrap();

        let mut ck = Checkpoint::new(x.clone(), 1e-2);
        let first = solver.run_segment(&mut ck, 100, 1, Scheme::Imex2).unwrap();
        let second = solver.run_segment(&mut ck, 100, 1, Scheme::Imex2).unwrap();
        let mut joined = vec![x];
        joined.extend(first);
        joined.extend(second);
        assert_eq!(joined, whole.states);
    }

    #[test]
    fn linear_decay_by_t20() {
        let basis = Basis::new(1, 8);
        let solver = Solver::new(ModelSpec::linear(1), basis.clone()).unwrap();
        let mut x = ModalState::zeros(8, 0.0);
        for m in 0..8 {
            x.u.0[m] = 1.0 / (m + 1) as f64;
            x.v.0[m] = 0.5;
        }
        let end = solver.evolve(&x, &StepConfig::new(1e-2, 0.0, 20.0)).unwrap();
        let eps = EpsilonProfile::constant(1.0);
        assert!(basis.xt_norm_sq(&end, &eps).unwrap() < 1e-6);
    }

    #[test]
    fn accel_matches_second_difference() {
        let solver = Solver::new(ModelSpec::linear(1), Basis::new(1, 1)).unwrap();
        let traj = solver.run(&single_mode(1.0, 0.0, 1), &StepConfig::new(1e-3, 0.0, 1.0)).unwrap();
        let i = 500;
        let fd = (traj.states[i + 1].u.0[0] - 2.0 * traj.states[i].u.0[0] + traj.states[i - 1].u.0[0]) / 1e-6;
        let acc = solver.reconstruct_accel(&traj, traj.states[i].t).unwrap().0[0];
        assert!((fd - acc).abs() < 1e-3 * acc.abs());
        assert!(solver.reconstruct_accel(&traj, 0.0005).is_err());
    }

    #[test]
    fn equilibrium_has_zero_acceleration() {
        let solver = Solver::new(ModelSpec::linear(2), Basis::new(2, 3)).unwrap();
        let acc = solver.acceleration(&ModalState::zeros(9, 1.0)).unwrap();
        assert!(acc.0.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn blow_up_is_reported_with_time() {
        // an anti-damped explicit term at a huge step overflows
        let spec = ModelSpec {
            nonlinearity: NonlinearitySpec::cubic_soft(1.0),
            ..ModelSpec::linear(1)
        };
        let solver = Solver::new(spec, Basis::new(1, 2)).unwrap();
        let x = single_mode(1e3, 0.0, 2);
        match solver.run(&x, &StepConfig::new(1.0, 0.0, 50.0)) {
            Err(Error::BlowUp { t }) => assert!(t > 0.0 && t <= 50.0),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn dissipation_without_forcing() {
        // delta = 0, lambda = 0: ||grad u||^2 + eps ||v||^2 never increases
        let basis = Basis::new(1, 16);
        let spec = ModelSpec {
            epsilon: EpsilonProfile::exp_decay(1.0, 1.0),
            ..ModelSpec::linear(1)
        };
        let solver = Solver::new(spec.clone(), basis.clone()).unwrap();
        let mut x = ModalState::zeros(16, 0.0);
        for m in 0..16 {
            x.u.0[m] = (-1f64).powi(m as i32) / (m + 1) as f64;
            x.v.0[m] = 1.0 / (m + 1) as f64;
        }
        for dt in [1e-2, 1e-3] {
            let traj = solver.run(&x, &StepConfig::new(dt, 0.0, 2.0)).unwrap();
            let norms: Vec<f64> = traj
                .states
                .iter()
                .map(|s| basis.xt_norm_sq(s, &spec.epsilon).unwrap())
                .collect();
            assert!(norms.windows(2).all(|w| w[1] <= w[0] + 1e-8), "dt {dt}");
        }
    }

    #[test]
    fn kirchhoff_energy_dissipation() {
        // with delta, lambda > 0 the dissipated quantity includes delta S^2 / 2 + lambda ||u||^2
        let basis = Basis::new(1, 8);
        let spec = ModelSpec {
            lambda: 0.5,
            ..ModelSpec::linear(1).with_delta(1.0)
        };
        let solver = Solver::new(spec, basis.clone()).unwrap();
        let mut x = ModalState::zeros(8, 0.0);
        x.u.0[0] = 0.5;
        x.u.0[1] = 0.2;
        x.v.0[0] = 1.0;
        let traj = solver.run(&x, &StepConfig::new(1e-3, 0.0, 2.0)).unwrap();
        let energy = |s: &ModalState| {
            let g = basis.grad_norm_sq(&s.u);
            g + 0.5 * g * g + 0.5 * s.u.norm_sq() + s.v.norm_sq()
        };
        let e: Vec<f64> = traj.states.iter().map(energy).collect();
        assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-8));
    }

    #[test]
    fn decomposition_of_zero_trajectory() {
        let solver = Solver::new(ModelSpec::linear(1), Basis::new(1, 4)).unwrap();
        let traj = solver.run(&ModalState::zeros(4, 0.0), &StepConfig::new(1e-2, 0.0, 1.0)).unwrap();
        let pair = solver.run_decomposition(&traj, 1e-3).unwrap();
        assert!(pair.u1.states.iter().chain(&pair.u2.states).all(|s| s.u.norm_sq() == 0.0));
        assert_eq!(pair.max_residual(), 0.0);
    }

    #[test]
    fn decomposition_linear_case() {
        let basis = Basis::new(1, 16);
        let spec = ModelSpec {
            forcing: ForcingSpec::separable(2.0, 0.5, vec![1]),
            ..ModelSpec::linear(1)
        };
        let solver = Solver::new(spec, basis.clone()).unwrap();
        let mut x = ModalState::zeros(16, 0.0);
        for m in 0..16 {
            x.u.0[m] = 1.0 / ((m + 1) * (m + 1)) as f64;
            x.v.0[m] = 0.5 / ((m + 1) * (m + 1)) as f64;
        }
        let traj = solver.run(&x, &StepConfig::new(1e-3, -2.0, 2.0)).unwrap();
        let pair = solver.run_decomposition(&traj, 1e-3).unwrap();
        for ((p, a), b) in traj.states.iter().zip(&pair.u1.states).zip(&pair.u2.states) {
            assert!(a.u.add(&b.u).sub(&p.u).norm_sq() < 1e-28);
        }
        assert!(pair.warnings.is_empty(), "max residual {}", pair.max_residual());
        assert!(pair.worst_decay_ratio(&basis) <= 1.0 + 1e-3);
        assert_eq!(pair.u2.first().u.norm_sq(), 0.0);
    }

    #[test]
    fn difference_of_identical_runs_vanishes() {
        let basis = Basis::new(1, 4);
        let spec = ModelSpec::linear(1).with_delta(0.3);
        let mut x = ModalState::zeros(4, 0.0);
        x.u.0[0] = 1.0;
        let run = run_difference(&spec, &spec, &basis, &x, &x, &StepConfig::new(1e-2, 0.0, 1.0)).unwrap();
        assert!(run.z.iter().all(|z| z.u.norm_sq() == 0.0 && z.v.norm_sq() == 0.0));
    }

    #[test]
    fn difference_rejects_mismatch() {
        let basis = Basis::new(1, 4);
        let a = ModelSpec::linear(1);
        let b = ModelSpec {
            lambda: 1.0,
            ..ModelSpec::linear(1)
        };
        let x = ModalState::zeros(4, 0.0);
        let cfg = StepConfig::new(1e-2, 0.0, 1.0);
        assert!(run_difference(&a, &b, &basis, &x, &x, &cfg).is_err());
        let short = ModalState::zeros(3, 0.0);
        assert!(run_difference(&a, &a, &basis, &x, &short, &cfg).is_err());
    }

    #[test]
    fn difference_responds_proportionally_to_initial_gap() {
        let basis = Basis::new(1, 8);
        let spec = ModelSpec {
            nonlinearity: NonlinearitySpec::cubic_soft(1.0),
            ..ModelSpec::linear(1).with_delta(0.1)
        };
        let mut xa = ModalState::zeros(8, 0.0);
        xa.u.0[0] = 0.5;
        let gap = |eta: f64| {
            let mut xb = xa.clone();
            xb.u.0[1] += eta;
            let run = run_difference(&spec, &spec, &basis, &xa, &xb, &StepConfig::new(1e-3, 0.0, 1.0)).unwrap();
            basis.xt_norm_sq_with(run.z.last().unwrap(), 1.0).sqrt()
        };
        let ratio = gap(1e-3) / gap(5e-4);
        assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
    }
}
