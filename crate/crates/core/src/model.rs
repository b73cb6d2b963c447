//! Problem instances: time-dependent mass coefficient, nonlinearity,
//! external forcing, and the sampled checks of the standing hypotheses.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::spectral::{Basis, ModalField};

/// Linear interpolation on a sorted table. Returns `(value, slope)`.
fn interp(xs: &[f64], ys: &[f64], x: f64, what: &'static str) -> Result<(f64, f64)> {
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    if !(x >= lo && x <= hi) {
        return Err(Error::OutOfRange {
            what,
            value: x,
            lo,
            hi,
        });
    }
    let i = match xs.partition_point(|&p| p <= x) {
        0 => 0,
        n if n >= xs.len() => xs.len() - 2,
        n => n - 1,
    };
    let slope = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
    Ok((ys[i] + slope * (x - xs[i]), slope))
}

fn check_table(xs: &[f64], ys: &[f64], what: &str) -> Result<()> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return Err(Error::Config(format!(
            "{what} table needs at least two (x, y) pairs of equal length"
        )));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(format!("{what} table abscissae must increase")));
    }
    if ys.iter().chain(xs).any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("{what} table has non-finite entries")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsilonKind {
    Constant,
    /// `alpha + amplitude * exp(-t)`.
    ExpDecayToLimit { amplitude: f64 },
    /// Piecewise-linear samples of the coefficient.
    Table { times: Vec<f64>, values: Vec<f64> },
}

/// Time-dependent coefficient of the acceleration term.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonProfile {
    pub kind: EpsilonKind,
    /// Limit value as t tends to infinity.
    pub alpha: f64,
    /// Declared bound on `|eps| + |eps'|`.
    pub bound: f64,
}

impl EpsilonProfile {
    pub fn constant(alpha: f64) -> Self {
        Self {
            kind: EpsilonKind::Constant,
            alpha,
            bound: alpha,
        }
    }

    /// `alpha + amplitude * exp(-t)`; the declared bound covers `t >= 0`.
    pub fn exp_decay(alpha: f64, amplitude: f64) -> Self {
        Self {
            kind: EpsilonKind::ExpDecayToLimit { amplitude },
            alpha,
            bound: alpha + 2.0 * amplitude,
        }
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = bound;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.bound.is_finite()) {
            return Err(Error::Config("epsilon limit and bound must be finite".into()));
        }
        match &self.kind {
            EpsilonKind::Constant => Ok(()),
            EpsilonKind::ExpDecayToLimit { amplitude } if *amplitude >= 0.0 => Ok(()),
            EpsilonKind::ExpDecayToLimit { .. } => {
                Err(Error::Config("epsilon amplitude must be non-negative".into()))
            }
            EpsilonKind::Table { times, values } => check_table(times, values, "epsilon"),
        }
    }

    /// Returns `(eps(t), eps'(t))`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        match &self.kind {
            EpsilonKind::Constant => Ok((self.alpha, 0.0)),
            EpsilonKind::ExpDecayToLimit { amplitude } => {
                let e = amplitude * (-t).exp();
                Ok((self.alpha + e, -e))
            }
            EpsilonKind::Table { times, values } => interp(times, values, t, "t"),
        }
    }

    /// Evaluation for the integrator, where the profile was validated on the run window.
    pub fn value(&self, t: f64) -> f64 {
        self.eval(t).map(|(e, _)| e).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonlinearityKind {
    Zero,
    /// `g(u) = -c u^3`.
    CubicSoft { c: f64 },
    /// `g(u) = amplitude * sin(u)`.
    LipschitzSine { amplitude: f64 },
    /// `g(u) = slope * u`.
    Linear { slope: f64 },
    /// Piecewise-linear `g` through the given samples.
    UserTable { u: Vec<f64>, g: Vec<f64> },
}

/// Constants of the one-sided bounds `u g - gamma G <= c1 u^2 + c2` and
/// `G <= c3 u^2 + c4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StructureConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonlinearitySpec {
    pub kind: NonlinearityKind,
    /// Declared upper bound on `g'`.
    pub k: f64,
    pub gamma: f64,
    /// Declared growth constant in `|g'(u)| <= C (1 + |u|^p)`.
    pub growth_c: f64,
    pub structure: StructureConstants,
    /// Cumulative antiderivative at the table knots (table kind only).
    #[serde(skip)]
    table_antiderivative: Vec<f64>,
}

impl NonlinearitySpec {
    pub fn zero() -> Self {
        Self::from_parts(
            NonlinearityKind::Zero,
            0.0,
            2.0,
            1.0,
            StructureConstants {
                c1: 0.0,
                c2: 0.0,
                c3: 0.0,
                c4: 0.0,
            },
        )
    }

    /// `g(u) = -c u^3` with the shipped constants: `gamma = 2`, `k = 0`,
    /// `c1 = c2 = c4 = 0` and a small `c3`.
    pub fn cubic_soft(c: f64) -> Self {
        Self::from_parts(
            NonlinearityKind::CubicSoft { c },
            0.0,
            2.0,
            3.0 * c,
            StructureConstants {
                c1: 0.0,
                c2: 0.0,
                c3: 0.01,
                c4: 0.0,
            },
        )
    }

    pub fn lipschitz_sine(amplitude: f64) -> Self {
        let a = amplitude.abs();
        Self::from_parts(
            NonlinearityKind::LipschitzSine { amplitude },
            a,
            2.0,
            a,
            StructureConstants {
                c1: a,
                c2: a,
                c3: 0.0,
                c4: 2.0 * a,
            },
        )
    }

    pub fn linear(slope: f64) -> Self {
        Self::from_parts(
            NonlinearityKind::Linear { slope },
            slope.max(0.0),
            2.0,
            slope.abs().max(f64::MIN_POSITIVE),
            StructureConstants {
                c1: 0.0,
                c2: 0.0,
                c3: (0.5 * slope).max(0.0),
                c4: 0.0,
            },
        )
    }

    pub fn user_table(u: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        check_table(&u, &g, "nonlinearity")?;
        let slopes = u.windows(2).zip(g.windows(2)).map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]));
        let k = slopes.clone().fold(f64::NEG_INFINITY, f64::max);
        let growth_c = slopes.map(f64::abs).fold(0.0, f64::max);
        Ok(Self::from_parts(
            NonlinearityKind::UserTable { u, g },
            k,
            2.0,
            growth_c,
            StructureConstants {
                c1: 0.0,
                c2: 0.0,
                c3: 0.0,
                c4: 0.0,
            },
        ))
    }

    pub fn from_parts(
        kind: NonlinearityKind,
        k: f64,
        gamma: f64,
        growth_c: f64,
        structure: StructureConstants,
    ) -> Self {
        let table_antiderivative = match &kind {
            NonlinearityKind::UserTable { u, g } => table_antiderivative(u, g),
            _ => Vec::new(),
        };
        Self {
            kind,
            k,
            gamma,
            growth_c,
            structure,
            table_antiderivative,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let NonlinearityKind::UserTable { u, g } = &self.kind {
            check_table(u, g, "nonlinearity")?;
            if !(u[0] <= 0.0 && u[u.len() - 1] >= 0.0) {
                return Err(Error::Config("nonlinearity table must bracket u = 0".into()));
            }
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config("gamma must be positive".into()));
        }
        if !(self.growth_c > 0.0) {
            return Err(Error::Config("growth constant C must be positive".into()));
        }
        let s = self.structure;
        if [s.c1, s.c2, s.c3, s.c4].iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::Config("structure constants c1..c4 must be non-negative".into()));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, NonlinearityKind::Zero)
    }

    /// Returns `(g(u), g'(u), G(u))` with `G(0) = 0`.
    pub fn eval(&self, u: f64) -> Result<(f64, f64, f64)> {
        Ok(match &self.kind {
            NonlinearityKind::Zero => (0.0, 0.0, 0.0),
            NonlinearityKind::CubicSoft { c } => {
                let u2 = u * u;
                (-c * u2 * u, -3.0 * c * u2, -0.25 * c * u2 * u2)
            }
            NonlinearityKind::LipschitzSine { amplitude: a } => {
                (a * u.sin(), a * u.cos(), a * (1.0 - u.cos()))
            }
            NonlinearityKind::Linear { slope } => (slope * u, *slope, 0.5 * slope * u * u),
            NonlinearityKind::UserTable { u: us, g: gs } => {
                let (g, dg) = interp(us, gs, u, "u")?;
                let i = match us.partition_point(|&p| p <= u) {
                    0 => 0,
                    n if n >= us.len() => us.len() - 2,
                    n => n - 1,
                };
                let big_g = self.table_antiderivative[i] + 0.5 * (gs[i] + g) * (u - us[i]);
                (g, dg, big_g)
            }
        })
    }

    /// `g(u)` alone; hot path of the pseudo-spectral evaluation.
    #[inline]
    pub fn g(&self, u: f64) -> Result<f64> {
        match &self.kind {
            NonlinearityKind::Zero => Ok(0.0),
            NonlinearityKind::CubicSoft { c } => Ok(-c * u * u * u),
            NonlinearityKind::LipschitzSine { amplitude } => Ok(amplitude * u.sin()),
            NonlinearityKind::Linear { slope } => Ok(slope * u),
            NonlinearityKind::UserTable { .. } => self.eval(u).map(|(g, _, _)| g),
        }
    }
}

fn table_antiderivative(u: &[f64], g: &[f64]) -> Vec<f64> {
    // cumulative trapezoid from the first knot, shifted so that G(0) = 0
    let mut acc = vec![0.0; u.len()];
    for i in 1..u.len() {
        acc[i] = acc[i - 1] + 0.5 * (g[i] + g[i - 1]) * (u[i] - u[i - 1]);
    }
    let zero = match interp(u, g, 0.0, "u") {
        Ok((g0, _)) => {
            let i = u.partition_point(|&p| p <= 0.0).clamp(1, u.len() - 1) - 1;
            acc[i] + 0.5 * (g[i] + g0) * (0.0 - u[i])
        }
        Err(_) => 0.0,
    };
    acc.iter().map(|a| a - zero).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForcingKind {
    Zero,
    /// `h(x, t) = amplitude * exp(-rate |t|) * phi_mode(x)`.
    Separable {
        amplitude: f64,
        rate: f64,
        mode: Vec<usize>,
    },
    /// Piecewise-linear in time coefficients on the listed modes, zero outside
    /// the tabulated window.
    ModalTable {
        modes: Vec<Vec<usize>>,
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForcingSpec {
    pub kind: ForcingKind,
    /// Declared weight in the integrability condition.
    pub sigma: f64,
}

/// One active mode of the forcing at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingTerm<'a> {
    pub mode: &'a [usize],
    pub value: f64,
    pub rate: f64,
}

impl ForcingSpec {
    pub fn zero() -> Self {
        Self {
            kind: ForcingKind::Zero,
            sigma: 1.0,
        }
    }

    pub fn separable(amplitude: f64, rate: f64, mode: Vec<usize>) -> Self {
        Self {
            kind: ForcingKind::Separable {
                amplitude,
                rate,
                mode,
            },
            sigma: rate,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, ForcingKind::Zero)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::Config("forcing sigma must be positive".into()));
        }
        let check_mode = |m: &[usize]| {
            if m.len() != dim || m.iter().any(|&k| k == 0) {
                Err(Error::Config(format!(
                    "forcing mode {m:?} is not a {dim}-dimensional multi-index with entries >= 1"
                )))
            } else {
                Ok(())
            }
        };
        match &self.kind {
            ForcingKind::Zero => Ok(()),
            ForcingKind::Separable { rate, mode, .. } => {
                if !(*rate > 0.0) {
                    return Err(Error::Config("forcing rate must be positive".into()));
                }
                check_mode(mode)
            }
            ForcingKind::ModalTable {
                modes,
                times,
                values,
            } => {
                for m in modes {
                    check_mode(m)?;
                }
                if times.len() < 2 || values.len() != times.len() {
                    return Err(Error::Config("forcing table needs one row per time, at least two".into()));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config("forcing table times must increase".into()));
                }
                if values.iter().any(|row| row.len() != modes.len()) {
                    return Err(Error::Config("forcing table rows must match the mode list".into()));
                }
                Ok(())
            }
        }
    }

    /// Active modes with `h` and `dh/dt` at time `t`.
    ///
    /// At the kink `t = 0` of the separable profile the right derivative is used.
    pub fn terms(&self, t: f64) -> Vec<ForcingTerm<'_>> {
        match &self.kind {
            ForcingKind::Zero => Vec::new(),
            ForcingKind::Separable {
                amplitude,
                rate,
                mode,
            } => {
                let value = amplitude * (-rate * t.abs()).exp();
                let rate = if t >= 0.0 { -rate * value } else { rate * value };
                vec![ForcingTerm { mode, value, rate }]
            }
            ForcingKind::ModalTable {
                modes,
                times,
                values,
            } => {
                let (lo, hi) = (times[0], times[times.len() - 1]);
                if t < lo || t > hi {
                    return Vec::new();
                }
                let i = match times.partition_point(|&p| p <= t) {
                    0 => 0,
                    n if n >= times.len() => times.len() - 2,
                    n => n - 1,
                };
                let w = (t - times[i]) / (times[i + 1] - times[i]);
                let dt = times[i + 1] - times[i];
                modes
                    .iter()
                    .enumerate()
                    .map(|(j, mode)| {
                        let (a, b) = (values[i][j], values[i + 1][j]);
                        ForcingTerm {
                            mode,
                            value: a + w * (b - a),
                            rate: (b - a) / dt,
                        }
                    })
                    .collect()
            }
        }
    }

    /// `||h(t)||^2` in L2 (the basis is orthonormal).
    pub fn norm_sq(&self, t: f64) -> f64 {
        self.terms(t).iter().map(|f| f.value * f.value).sum()
    }

    /// `||dh/dt(t)||^2`.
    pub fn rate_norm_sq(&self, t: f64) -> f64 {
        self.terms(t).iter().map(|f| f.rate * f.rate).sum()
    }

    /// Modal coefficients of `h(t)` and `dh/dt(t)` on `basis`.
    pub fn eval(&self, basis: &Basis, t: f64) -> Result<(ModalField, ModalField)> {
        let mut h = ModalField::zeros(basis.len());
        let mut dh = ModalField::zeros(basis.len());
        for term in self.terms(t) {
            let idx = basis.index_of(term.mode).ok_or_else(|| {
                Error::Config(format!(
                    "forcing mode {:?} is outside the basis ({} modes per dimension)",
                    term.mode, basis.modes_per_dim
                ))
            })?;
            h.0[idx] += term.value;
            dh.0[idx] += term.rate;
        }
        Ok((h, dh))
    }

    /// Checks that every forcing mode lies inside `basis`.
    pub fn check_basis(&self, basis: &Basis) -> Result<()> {
        let probe = match &self.kind {
            ForcingKind::ModalTable { times, .. } => times[0],
            _ => 0.0,
        };
        self.eval(basis, probe).map(|_| ())
    }
}

/// Full problem instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    pub delta: f64,
    pub lambda: f64,
    pub dim: usize,
    pub sobolev_p: f64,
    pub epsilon: EpsilonProfile,
    pub nonlinearity: NonlinearitySpec,
    pub forcing: ForcingSpec,
}

impl ModelSpec {
    /// Growth exponent `4 / (n - 2)` at `n = 3`, also used as the default for `d < 3`.
    pub const DEFAULT_SOBOLEV_P: f64 = 4.0;

    /// Linear, unforced problem with `eps = 1`.
    pub fn linear(dim: usize) -> Self {
        Self {
            delta: 0.0,
            lambda: 0.0,
            dim,
            sobolev_p: Self::DEFAULT_SOBOLEV_P,
            epsilon: EpsilonProfile::constant(1.0),
            nonlinearity: NonlinearitySpec::zero(),
            forcing: ForcingSpec::zero(),
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::Config(format!("dimension {} not in 1..=3", self.dim)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Config("delta must be finite and >= 0".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be finite and >= 0".into()));
        }
        if !(self.sobolev_p > 0.0) {
            return Err(Error::Config("sobolev_p must be positive".into()));
        }
        self.epsilon.validate()?;
        self.nonlinearity.validate()?;
        self.forcing.validate(self.dim)
    }

    /// Exponent `2n/(n-2)` of the gradient norm in the energy bounds, written
    /// as `2 + p` so that it stays defined for `d < 3`.
    pub fn critical_exponent(&self) -> f64 {
        2.0 + self.sobolev_p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Worst-case slack on the sampled grid; negative when violated.
    pub margin: f64,
    /// The check is a finite-range surrogate of an asymptotic condition.
    pub sampled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
    pub all_passed: bool,
}

impl HypothesisReport {
    pub fn failed(&self) -> impl Iterator<Item = &HypothesisCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Tolerance for asymptotic sign conditions tested at the edge of the sample range.
pub const LIMSUP_TOL: f64 = 1e-3;

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Sampled check of every standing hypothesis on `u_range x t_range`.
pub fn validate_hypotheses(
    spec: &ModelSpec,
    u_range: (f64, f64),
    t_range: (f64, f64),
    samples: usize,
) -> Result<HypothesisReport> {
    if samples < 2 {
        return Err(Error::Config("need at least two samples".into()));
    }
    if !(u_range.1 > u_range.0) || !(t_range.1 > t_range.0) {
        return Err(Error::Config("sampling ranges must be non-empty".into()));
    }
    spec.validate()?;

    let mut checks = Vec::new();
    let mut push = |name, margin: f64, tol: f64, sampled| {
        checks.push(HypothesisCheck {
            name,
            passed: margin >= -tol,
            margin,
            sampled,
        })
    };

    push("coefficients_nonnegative", spec.delta.min(spec.lambda), 0.0, false);

    let eps = &spec.epsilon;
    let ts = linspace(t_range.0, t_range.1, samples);
    let evals = ts.iter().map(|&t| eps.eval(t)).collect::<Result<Vec<_>>>()?;
    let scale = evals.iter().map(|(e, _)| e.abs()).fold(1.0, f64::max);
    let decreasing = evals
        .windows(2)
        .map(|w| w[0].0 - w[1].0)
        .fold(f64::INFINITY, f64::min);
    push("epsilon_decreasing", decreasing, 1e-12 * scale, false);
    push("epsilon_limit_at_least_one", eps.alpha - 1.0, 0.0, false);
    let far = match &eps.kind {
        EpsilonKind::Table { values, .. } => values[values.len() - 1],
        _ => eps.eval(t_range.1.max(0.0) + 1e3)?.0,
    };
    push(
        "epsilon_limit",
        -(far - eps.alpha).abs(),
        1e-9 * eps.alpha.abs().max(1.0),
        true,
    );
    let sup = evals.iter().map(|(e, de)| e.abs() + de.abs()).fold(0.0, f64::max);
    push(
        "epsilon_bound",
        (eps.bound - sup).min(eps.bound - eps.alpha),
        1e-12 * scale,
        false,
    );

    let g = &spec.nonlinearity;
    let us = linspace(u_range.0, u_range.1, samples);
    let gs = us.iter().map(|&u| g.eval(u)).collect::<Result<Vec<_>>>()?;
    let gscale = gs.iter().map(|(v, _, _)| v.abs()).fold(1.0, f64::max);
    push("g_vanishes_at_zero", -g.eval(0.0)?.0.abs(), 1e-14, false);
    let growth = us
        .iter()
        .zip(&gs)
        .map(|(u, (_, dg, _))| g.growth_c * (1.0 + u.abs().powf(spec.sobolev_p)) - dg.abs())
        .fold(f64::INFINITY, f64::min);
    push("g_derivative_growth", growth, 1e-12 * gscale, false);
    let upper = gs.iter().map(|(_, dg, _)| g.k - dg).fold(f64::INFINITY, f64::min);
    push("g_derivative_upper_bound", upper, 1e-12 * gscale, false);

    // asymptotic quotients at the two edges of the u-range
    let edges: Vec<f64> = [u_range.0, u_range.1].into_iter().filter(|u| *u != 0.0).collect();
    let mut dissip = f64::INFINITY;
    let mut potential = f64::INFINITY;
    for &u in &edges {
        let (gv, _, big_g) = g.eval(u)?;
        dissip = dissip.min(-(u * gv - g.gamma * big_g) / (u * u));
        potential = potential.min(-big_g / (u * u));
    }
    push("g_dissipative_limsup", dissip, LIMSUP_TOL, true);
    push("g_potential_limsup", potential, LIMSUP_TOL, true);

    let s = g.structure;
    let lower = us
        .iter()
        .zip(&gs)
        .map(|(u, (gv, _, big_g))| s.c1 * u * u + s.c2 - (u * gv - g.gamma * big_g))
        .fold(f64::INFINITY, f64::min);
    push("g_structure_dissipative", lower, 1e-12 * gscale * u_range.1.abs().max(u_range.0.abs()).max(1.0), false);
    let pot = us
        .iter()
        .zip(&gs)
        .map(|(u, (_, _, big_g))| s.c3 * u * u + s.c4 - big_g)
        .fold(f64::INFINITY, f64::min);
    push("g_structure_potential", pot, 1e-12 * gscale * u_range.1.abs().max(u_range.0.abs()).max(1.0), false);

    let h = &spec.forcing;
    let stab = weighted_integral_stabilization(h, t_range.1);
    push("forcing_weighted_integrable", 1e-6 - stab, 0.0, true);

    let mut worst = 0.0f64;
    for &t in &ts {
        if t.abs() < 1e-3 {
            continue;
        }
        let step = 1e-6 * t.abs().max(1.0);
        let plus = h.terms(t + step);
        let minus = h.terms(t - step);
        for (term, (p, m)) in h.terms(t).iter().zip(plus.iter().zip(&minus)) {
            let fd = (p.value - m.value) / (2.0 * step);
            let err = (fd - term.rate).abs() / term.rate.abs().max(1e-8);
            // table knots produce one-sided kinks; only smooth pieces count
            if p.rate == m.rate {
                worst = worst.max(err);
            }
        }
    }
    push("forcing_time_derivative", 1e-5 - worst, 0.0, true);

    let all_passed = checks.iter().all(|c| c.passed);
    Ok(HypothesisReport { checks, all_passed })
}

/// Relative change of `int_{-T0}^{t} e^{sigma s} ||h(s)||^2 ds` between the
/// two largest truncations `T0` tried; `INFINITY` when it fails to settle.
fn weighted_integral_stabilization(h: &ForcingSpec, t: f64) -> f64 {
    let f = |s: f64| h.norm_sq(s);
    let mut prev: Option<f64> = None;
    let mut t0 = 16.0;
    for _ in 0..8 {
        let val = integrate(&|s| (h.sigma * (s - t)).exp() * f(s), t - t0, t, 1e-13);
        if let Some(p) = prev {
            let change = (val - p).abs() / val.abs().max(1e-300);
            if change < 1e-6 || val == 0.0 {
                return if val == 0.0 { 0.0 } else { change };
            }
        }
        prev = Some(val);
        t0 *= 2.0;
    }
    f64::INFINITY
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn epsilon_closed_forms() {
        assert_eq!(EpsilonProfile::constant(1.0).eval(3.7).unwrap(), (1.0, 0.0));
        let p = EpsilonProfile::exp_decay(1.0, 1.0);
        assert_eq!(p.eval(0.0).unwrap(), (2.0, -1.0));
        let (e, de) = p.eval(4f64.ln()).unwrap();
        assert!((e - 1.25).abs() < 1e-15 && (de + 0.25).abs() < 1e-15);
    }

    #[test]
    fn epsilon_table_out_of_range() {
        let p = EpsilonProfile {
            kind: EpsilonKind::Table {
                times: vec![0.0, 1.0],
                values: vec![2.0, 1.0],
            },
            alpha: 1.0,
            bound: 3.0,
        };
        assert_eq!(p.eval(0.5).unwrap(), (1.5, -1.0));
        assert!(matches!(p.eval(2.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn nonlinearity_closed_forms() {
        let cubic = NonlinearitySpec::cubic_soft(1.0);
        assert_eq!(cubic.eval(0.0).unwrap(), (0.0, 0.0, 0.0));
        assert_eq!(cubic.eval(2.0).unwrap(), (-8.0, -12.0, -4.0));
        let (g, dg, big_g) = NonlinearitySpec::lipschitz_sine(1.0).eval(PI).unwrap();
        assert!(g.abs() < 1e-15 && (dg + 1.0).abs() < 1e-15 && (big_g - 2.0).abs() < 1e-15);
    }

    #[test]
    fn table_antiderivative_is_exact_for_piecewise_linear() {
        // g(u) = 2u on [-1, 0], u on [0, 2]
        let spec = NonlinearitySpec::user_table(vec![-1.0, 0.0, 2.0], vec![-2.0, 0.0, 2.0]).unwrap();
        assert_eq!(spec.eval(0.0).unwrap().2, 0.0);
        assert!((spec.eval(-1.0).unwrap().2 - 1.0).abs() < 1e-15);
        assert!((spec.eval(1.5).unwrap().2 - 1.125).abs() < 1e-15);
        assert!(matches!(spec.eval(3.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn separable_forcing_terms() {
        let basis = Basis::new(1, 4);
        let (h, dh) = ForcingSpec::zero().eval(&basis, 0.0).unwrap();
        assert!(h.0.iter().chain(&dh.0).all(|&c| c == 0.0));

        let f = ForcingSpec::separable(1.0, 1.0, vec![1]);
        let (h, dh) = f.eval(&basis, 0.0).unwrap();
        assert_eq!(h.0, vec![1.0, 0.0, 0.0, 0.0]);
        // right derivative at the kink
        assert_eq!(dh.0[0], -1.0);

        let f = ForcingSpec::separable(2.0, 0.5, vec![1]);
        let (h, dh) = f.eval(&basis, 2.0).unwrap();
        let e1 = (-1f64).exp();
        assert!((h.0[0] - 2.0 * e1).abs() < 1e-15);
        assert!((dh.0[0] + e1).abs() < 1e-15);
        assert_eq!(h.0.iter().filter(|c| **c != 0.0).count(), 1);
    }

    #[test]
    fn forcing_mode_outside_basis() {
        let f = ForcingSpec::separable(1.0, 1.0, vec![9]);
        assert!(matches!(f.eval(&Basis::new(1, 4), 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn degenerate_problem_passes_every_hypothesis() {
        let spec = ModelSpec {
            lambda: 1.0,
            ..ModelSpec::linear(3)
        };
        let report = validate_hypotheses(&spec, (-10.0, 10.0), (0.0, 10.0), 101).unwrap();
        assert!(report.all_passed, "{:?}", report.failed().collect::<Vec<_>>());
    }

    #[test]
    fn cubic_dissipative_quotient() {
        let spec = ModelSpec {
            nonlinearity: NonlinearitySpec::cubic_soft(1.0),
            ..ModelSpec::linear(3)
        };
        let report = validate_hypotheses(&spec, (-10.0, 10.0), (0.0, 10.0), 101).unwrap();
        let check = report.get("g_dissipative_limsup").unwrap();
        assert!(check.passed && check.sampled);
        // u g - 2 G = -u^4 / 2, quotient -u^2 / 2 at |u| = 10
        assert!((check.margin - 50.0).abs() < 1e-9);
        assert!(report.all_passed);
    }

    #[test]
    fn increasing_epsilon_is_reported() {
        let spec = ModelSpec {
            epsilon: EpsilonProfile {
                kind: EpsilonKind::Table {
                    times: vec![0.0, 10.0],
                    values: vec![1.0, 11.0],
                },
                alpha: 1.0,
                bound: 20.0,
            },
            ..ModelSpec::linear(1)
        };
        let report = validate_hypotheses(&spec, (-1.0, 1.0), (0.0, 10.0), 11).unwrap();
        assert!(!report.get("epsilon_decreasing").unwrap().passed);
        assert!(!report.all_passed);
    }

    #[test]
    fn validation_preconditions() {
        let spec = ModelSpec::linear(1);
        assert!(validate_hypotheses(&spec, (0.0, 1.0), (0.0, 1.0), 1).is_err());
        assert!(validate_hypotheses(&spec, (1.0, 1.0), (0.0, 1.0), 5).is_err());
    }

    #[test]
    fn validation_is_deterministic() {
        let spec = ModelSpec {
            nonlinearity: NonlinearitySpec::lipschitz_sine(0.5),
            forcing: ForcingSpec::separable(1.0, 0.5, vec![1, 1]),
            epsilon: EpsilonProfile::exp_decay(1.0, 0.5),
            ..ModelSpec::linear(2)
        };
        let a = validate_hypotheses(&spec, (-50.0, 50.0), (0.0, 5.0), 301).unwrap();
        let b = validate_hypotheses(&spec, (-50.0, 50.0), (0.0, 5.0), 301).unwrap();
        assert_eq!(a, b);
    }
}
