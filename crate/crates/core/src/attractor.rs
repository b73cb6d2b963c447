//! Finite-ensemble approximation of pullback attractors.
//!
//! Points of the absorbing ball at time `t - tau` are pushed forward to `t`;
//! the endpoints stand in for the attractor section at `t`.

use std::io::{self, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{eval_b, EnergyParams};
use crate::error::{Error, Result};
use crate::integrator::{Scheme, Solver, StepConfig};
use crate::model::{EpsilonProfile, ModelSpec};
use crate::spectral::{Basis, ModalField, ModalState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    SphereSurface,
    BallUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSpec {
    pub n_points: usize,
    pub sampling: Sampling,
    pub seed: u64,
    /// Increasing pullback horizons.
    pub taus: Vec<f64>,
    /// Integration step of every member.
    pub dt: f64,
    pub scheme: Scheme,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            n_points: 64,
            sampling: Sampling::SphereSurface,
            seed: 0,
            taus: vec![5.0, 10.0, 20.0],
            dt: 1e-2,
            scheme: Scheme::Imex2,
        }
    }
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(Error::Config("ensemble needs at least one point".into()));
        }
        if self.taus.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config("pullback horizons must be positive".into()));
        }
        if self.taus.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("pullback horizons must increase strictly".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("ensemble dt must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttractorCloud {
    pub t_star: f64,
    pub tau: f64,
    pub delta: f64,
    pub points: Vec<ModalState>,
}

impl AttractorCloud {
    /// One row per point: `t_star`, `delta`, then `u_*` and `v_*` coefficients.
    pub fn write_csv<W: Write>(&self, basis: &Basis, mut out: W) -> io::Result<()> {
        let mut header = vec!["t_star".to_string(), "delta".to_string()];
        header.extend((0..basis.len()).map(|i| format!("u_{}", basis.label(i))));
        header.extend((0..basis.len()).map(|i| format!("v_{}", basis.label(i))));
        writeln!(out, "{}", header.join(","))?;
        for p in &self.points {
            write!(out, "{:.16e},{:.16e}", self.t_star, self.delta)?;
            for x in p.u.0.iter().chain(&p.v.0) {
                write!(out, ",{x:.16e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Largest pairwise distance in the `X_{t_star}` metric.
    pub fn diameter(&self, basis: &Basis, eps: &EpsilonProfile) -> Result<f64> {
        let e = eps.eval(self.t_star)?.0;
        let pts = &self.points;
        Ok((0..pts.len())
            .into_par_iter()
            .map(|i| {
                pts[i + 1..]
                    .iter()
                    .map(|q| basis.xt_norm_sq_with(&pts[i].sub(q), e))
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
            .sqrt())
    }

    /// Largest `X_{t_star}` norm of a point.
    pub fn max_norm(&self, basis: &Basis, eps: &EpsilonProfile) -> Result<f64> {
        let e = eps.eval(self.t_star)?.0;
        Ok(self
            .points
            .iter()
            .map(|p| basis.xt_norm_sq_with(p, e))
            .fold(0.0, f64::max)
            .sqrt())
    }
}

/// Draws `n_points` states of `D(t)`, the `X_t` ball of radius `B(t)`.
///
/// Coefficients are Gaussian with variance `1 / mu_m` before rescaling, which
/// spreads the samples over the spectrum. Member `i` uses stream `i` of the
/// seeded generator, so samples do not depend on the thread count.
pub fn sample_absorbing_set(
    solver: &Solver,
    params: &EnergyParams,
    t: f64,
    ens: &EnsembleSpec,
) -> Result<Vec<ModalState>> {
    let radius = eval_b(&solver.spec.forcing, params, t)?;
    sample_ball(&solver.basis, &solver.spec.epsilon, radius, t, ens)
}

pub fn sample_ball(
    basis: &Basis,
    eps: &EpsilonProfile,
    radius: f64,
    t: f64,
    ens: &EnsembleSpec,
) -> Result<Vec<ModalState>> {
    if ens.n_points == 0 {
        return Err(Error::Config("ensemble needs at least one point".into()));
    }
    let e = eps.eval(t)?.0;
    let n = basis.len();
    let dim = 2 * n;
    let mus = basis.eigenvalues();
    Ok((0..ens.n_points)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(ens.seed);
            rng.set_stream(i as u64);
            let mut draw = || -> ModalField {
                ModalField(
                    mus.iter()
                        .map(|mu| rng.sample::<f64, _>(StandardNormal) / mu.sqrt())
                        .collect(),
                )
            };
            let mut s = ModalState {
                t,
                u: draw(),
                v: draw(),
            };
            let norm = basis.xt_norm_sq_with(&s, e).sqrt();
            let r = match ens.sampling {
                Sampling::SphereSurface => radius,
                Sampling::BallUniform => radius * rng.random::<f64>().powf(1.0 / dim as f64),
            };
            let scale = if norm > 0.0 { r / norm } else { 0.0 };
            s.u = s.u.scaled(scale);
            s.v = s.v.scaled(scale);
            s
        })
        .collect())
}

/// Evolves every member from `t_star - tau` to `t_star` in parallel; the first
/// failing member (by index) is reported.
pub fn evolve_ensemble(
    solver: &Solver,
    starts: &[ModalState],
    t_end: f64,
    ens: &EnsembleSpec,
) -> Result<Vec<ModalState>> {
    let results: Vec<Result<ModalState>> = starts
        .par_iter()
        .map(|x| {
            let cfg = StepConfig::new(ens.dt, x.t, t_end).with_scheme(ens.scheme);
            solver.evolve(x, &cfg)
        })
        .collect();
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::Member {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn pullback_cloud(
    solver: &Solver,
    params: &EnergyParams,
    ens: &EnsembleSpec,
    t_star: f64,
    tau: f64,
) -> Result<AttractorCloud> {
    if !(tau >= 0.0) {
        return Err(Error::Config(format!("pullback horizon {tau} must be non-negative")));
    }
    let starts = sample_absorbing_set(solver, params, t_star - tau, ens)?;
    let points = evolve_ensemble(solver, &starts, t_star, ens)?;
    Ok(AttractorCloud {
        t_star,
        tau,
        delta: solver.spec.delta,
        points,
    })
}

/// `sup_{a in A} inf_{b in B} ||a - b||_{X_t}` with `eps` frozen at the common time.
pub fn hausdorff_semidist(
    basis: &Basis,
    a: &AttractorCloud,
    b: &AttractorCloud,
    eps: &EpsilonProfile,
) -> Result<f64> {
    if a.points.is_empty() || b.points.is_empty() {
        return Err(Error::Domain("semi-distance of an empty cloud".into()));
    }
    if (a.t_star - b.t_star).abs() > 1e-12 * a.t_star.abs().max(1.0) {
        return Err(Error::Domain(format!(
            "clouds live at different times {} and {}",
            a.t_star, b.t_star
        )));
    }
    if a.points.iter().chain(&b.points).any(|p| p.u.len() != basis.len()) {
        return Err(Error::Domain("clouds live on different bases".into()));
    }
    let e = eps.eval(a.t_star)?.0;
    Ok(a
        .points
        .par_iter()
        .map(|p| {
            b.points
                .iter()
                .map(|q| basis.xt_norm_sq_with(&p.sub(q), e))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max)
        .sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsorbingRow {
    pub tau: f64,
    pub fraction_inside: f64,
    /// Largest `||x||_{X_t} / B(t) - 1` over the ensemble.
    pub worst_overshoot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsorbingReport {
    pub t: f64,
    pub radius: f64,
    pub rows: Vec<AbsorbingRow>,
    /// Smallest listed horizon from which every larger listed horizon is absorbed.
    pub entry_tau: Option<f64>,
    pub passed: bool,
}

/// Relative tolerance of the inclusion test; the surface samples at `tau = 0`
/// sit on the boundary up to rounding.
pub const INCLUSION_TOL: f64 = 1e-10;

/// Pushes samples of `D(t - tau)` to `t` for each horizon and counts how many
/// land in `D(t)`.
pub fn verify_absorbing(
    solver: &Solver,
    params: &EnergyParams,
    ens: &EnsembleSpec,
    t: f64,
    taus: &[f64],
) -> Result<AbsorbingReport> {
    let clouds = taus
        .iter()
        .map(|&tau| pullback_cloud(solver, params, ens, t, tau))
        .collect::<Result<Vec<_>>>()?;
    absorbing_report(solver, params, t, &clouds)
}

/// Inclusion statistics of already evolved clouds, all ending at `t`.
pub fn absorbing_report(
    solver: &Solver,
    params: &EnergyParams,
    t: f64,
    clouds: &[AttractorCloud],
) -> Result<AbsorbingReport> {
    let radius = eval_b(&solver.spec.forcing, params, t)?;
    let e = solver.spec.epsilon.eval(t)?.0;
    let mut rows = Vec::with_capacity(clouds.len());
    for cloud in clouds {
        if (cloud.t_star - t).abs() > 1e-12 * t.abs().max(1.0) {
            return Err(Error::Config(format!("cloud ends at {}, not {t}", cloud.t_star)));
        }
        let ratios: Vec<f64> = cloud
            .points
            .iter()
            .map(|p| solver.basis.xt_norm_sq_with(p, e).sqrt() / radius)
            .collect();
        let inside = ratios.iter().filter(|r| **r <= 1.0 + INCLUSION_TOL).count();
        rows.push(AbsorbingRow {
            tau: cloud.tau,
            fraction_inside: inside as f64 / ratios.len() as f64,
            worst_overshoot: ratios.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r - 1.0)),
        });
    }
    let mut entry_tau = None;
    for row in rows.iter().rev() {
        if row.fraction_inside < 1.0 {
            break;
        }
        entry_tau = Some(row.tau);
    }
    Ok(AbsorbingReport {
        t,
        radius,
        passed: entry_tau.is_some(),
        rows,
        entry_tau,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub delta: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub t_star: f64,
    pub tau: f64,
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `log dist` against `log delta` over positive rows.
    pub fitted_order: Option<f64>,
    /// Distances never grow by more than `noise_band` as delta decreases.
    pub non_increasing: bool,
    pub noise_band: f64,
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "delta,dist,fitted_order")?;
        let order = self.fitted_order.unwrap_or(f64::NAN);
        for r in &self.rows {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", r.delta, r.distance, order)?;
        }
        Ok(())
    }
}

pub const SWEEP_NOISE_BAND: f64 = 0.1;

/// Semi-distance from each `A_delta(t_star)` to `A_0(t_star)`, all clouds
/// grown from the same samples.
pub fn semicontinuity_sweep(
    base: &ModelSpec,
    basis: &Basis,
    deltas: &[f64],
    params: &EnergyParams,
    ens: &EnsembleSpec,
    t_star: f64,
    tau: f64,
) -> Result<SweepTable> {
    if deltas.is_empty() {
        return Err(Error::Config("delta list is empty".into()));
    }
    if deltas.iter().any(|d| !(*d >= 0.0)) || deltas.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::Config("delta list must be non-negative and strictly decreasing".into()));
    }
    let solver_for = |delta: f64| Solver::new(base.clone().with_delta(delta), basis.clone());
    let reference_solver = solver_for(0.0)?;
    let reference = pullback_cloud(&reference_solver, params, ens, t_star, tau)?;
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let distance = if delta == 0.0 {
            hausdorff_semidist(basis, &reference, &reference, &base.epsilon)?
        } else {
            let cloud = pullback_cloud(&solver_for(delta)?, params, ens, t_star, tau)?;
            hausdorff_semidist(basis, &cloud, &reference, &base.epsilon)?
        };
        rows.push(SweepRow { delta, distance });
    }
    let non_increasing = rows
        .windows(2)
        .all(|w| w[1].distance <= w[0].distance * (1.0 + SWEEP_NOISE_BAND));
    let fitted_order = log_log_slope(
        &rows
            .iter()
            .filter(|r| r.delta > 0.0 && r.distance > 0.0)
            .map(|r| (r.delta, r.distance))
            .collect::<Vec<_>>(),
    );
    Ok(SweepTable {
        t_star,
        tau,
        rows,
        fitted_order,
        non_increasing,
        noise_band: SWEEP_NOISE_BAND,
    })
}

/// Least-squares slope of `log y` against `log x`; `None` below two points.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ForcingSpec, NonlinearitySpec};
    use proptest::prelude::*;

    fn cloud(points: Vec<ModalState>) -> AttractorCloud {
        AttractorCloud {
            t_star: 0.0,
            tau: 0.0,
            delta: 0.0,
            points,
        }
    }

    fn state(u: &[f64], v: &[f64]) -> ModalState {
        ModalState {
            t: 0.0,
            u: ModalField(u.to_vec()),
            v: ModalField(v.to_vec()),
        }
    }

    fn linear_solver() -> Solver {
        Solver::new(ModelSpec::linear(1), Basis::new(1, 6)).unwrap()
    }

    fn params() -> EnergyParams {
        EnergyParams::new(1.0, 0.2, std::f64::consts::PI.powi(2))
    }

    #[test]
    fn single_sphere_sample_has_radius_b() {
        let s = linear_solver();
        let p = EnergyParams { c14: 3.0, ..params() };
        for seed in [0, 1, 99] {
            let ens = EnsembleSpec {
                n_points: 1,
                seed,
                ..EnsembleSpec::default()
            };
            let pts = sample_absorbing_set(&s, &p, 0.0, &ens).unwrap();
            let norm = s.basis.xt_norm_sq_with(&pts[0], 1.0).sqrt();
            assert!((norm - 3.0f64.sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn ball_samples_and_radial_law() {
        let s = Solver::new(ModelSpec::linear(1), Basis::new(1, 2)).unwrap();
        let ens = EnsembleSpec {
            n_points: 10_000,
            sampling: Sampling::BallUniform,
            seed: 5,
            ..EnsembleSpec::default()
        };
        let pts = sample_absorbing_set(&s, &params(), 0.0, &ens).unwrap();
        let dim = 2 * s.basis.len();
        let mut u: Vec<f64> = pts
            .iter()
            .map(|p| s.basis.xt_norm_sq_with(p, 1.0).sqrt().powi(dim as i32))
            .collect();
        assert!(u.iter().all(|&x| x <= 1.0 + 1e-12));
        // Kolmogorov-Smirnov against U(0, 1); critical value at 1% is 1.63 / sqrt(n)
        u.sort_by(f64::total_cmp);
        let n = u.len() as f64;
        let d = u
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
            .fold(0.0, f64::max);
        assert!(d < 1.63 / n.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let s = linear_solver();
        let ens = EnsembleSpec {
            n_points: 8,
            seed: 42,
            ..EnsembleSpec::default()
        };
        let a = sample_absorbing_set(&s, &params(), 1.0, &ens).unwrap();
        let b = sample_absorbing_set(&s, &params(), 1.0, &ens).unwrap();
        assert_eq!(a, b);
        let other = EnsembleSpec { seed: 43, ..ens };
        assert_ne!(a, sample_absorbing_set(&s, &params(), 1.0, &other).unwrap());
    }

    #[test]
    fn zero_horizon_is_identity() {
        let s = linear_solver();
        let ens = EnsembleSpec {
            n_points: 4,
            ..EnsembleSpec::default()
        };
        let c = pullback_cloud(&s, &params(), &ens, 2.0, 0.0).unwrap();
        assert_eq!(c.points, sample_absorbing_set(&s, &params(), 2.0, &ens).unwrap());
    }

    #[test]
    fn linear_cloud_collapses() {
        let s = linear_solver();
        let ens = EnsembleSpec {
            n_points: 16,
            ..EnsembleSpec::default()
        };
        let eps = &s.spec.epsilon;
        let mut last = f64::INFINITY;
        for tau in [1.0, 5.0, 10.0, 20.0] {
            let c = pullback_cloud(&s, &params(), &ens, 0.0, tau).unwrap();
            let d = c.diameter(&s.basis, eps).unwrap();
            assert!(d < last);
            last = d;
            // decay at least like e^{-tau / 2} from radius 1
            assert!(c.max_norm(&s.basis, eps).unwrap() <= (-0.5 * tau).exp());
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn forced_cloud_is_cauchy_in_tau() {
        let spec = ModelSpec {
            forcing: ForcingSpec::separable(1.0, 0.5, vec![1]),
            nonlinearity: NonlinearitySpec::cubic_soft(1.0),
            ..ModelSpec::linear(1)
        };
        let s = Solver::new(spec, Basis::new(1, 6)).unwrap();
        let ens = EnsembleSpec {
            n_points: 8,
            ..EnsembleSpec::default()
        };
        let a = pullback_cloud(&s, &params(), &ens, 5.0, 15.0).unwrap();
        let b = pullback_cloud(&s, &params(), &ens, 5.0, 20.0).unwrap();
        let d = hausdorff_semidist(&s.basis, &b, &a, &s.spec.epsilon).unwrap();
        assert!(d < 1e-5, "{d}");
    }

    #[test]
    fn semidistance_basics() {
        let b = Basis::new(1, 2);
        let eps = EpsilonProfile::constant(1.0);
        let x = state(&[1.0, 0.0], &[0.0, 1.0]);
        let y = state(&[0.0, 0.5], &[1.0, 0.0]);
        let a = cloud(vec![x.clone()]);
        let c = cloud(vec![y.clone()]);
        assert_eq!(hausdorff_semidist(&b, &a, &a, &eps).unwrap(), 0.0);
        let expected = b.xt_norm_sq_with(&x.sub(&y), 1.0).sqrt();
        assert!((hausdorff_semidist(&b, &a, &c, &eps).unwrap() - expected).abs() < 1e-12);
        // A inside B but not the other way round
        let both = cloud(vec![x, y]);
        assert_eq!(hausdorff_semidist(&b, &a, &both, &eps).unwrap(), 0.0);
        assert!(hausdorff_semidist(&b, &both, &a, &eps).unwrap() > 0.0);
        assert!(matches!(
            hausdorff_semidist(&b, &cloud(vec![]), &a, &eps),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn absorbing_without_forcing() {
        let s = linear_solver();
        let ens = EnsembleSpec {
            n_points: 8,
            ..EnsembleSpec::default()
        };
        let report = verify_absorbing(&s, &params(), &ens, 0.0, &[0.0, 1.0, 5.0]).unwrap();
        assert!(report.passed);
        assert_eq!(report.entry_tau, Some(0.0));
        assert!(report.rows.iter().all(|r| r.fraction_inside == 1.0));
    }

    #[test]
    fn small_c14_delays_absorption() {
        // forced linear problem: the response to h stays at a fixed size, so a
        // shrinking radius needs longer horizons (or never absorbs)
        let spec = ModelSpec {
            forcing: ForcingSpec::separable(1.0, 0.05, vec![1]),
            ..ModelSpec::linear(1)
        };
        let s = Solver::new(spec, Basis::new(1, 4)).unwrap();
        let ens = EnsembleSpec {
            n_points: 8,
            ..EnsembleSpec::default()
        };
        let taus = [0.5, 1.0, 2.0, 4.0, 8.0];
        let entry = |c14: f64| {
            let p = EnergyParams { c14, ..params() };
            verify_absorbing(&s, &p, &ens, 0.0, &taus).unwrap().entry_tau.unwrap_or(f64::INFINITY)
        };
        let (big, small) = (entry(1.0), entry(1e-3));
        assert!(small >= big, "{small} < {big}");
    }

    #[test]
    fn sweep_at_zero_only() {
        let s = linear_solver();
        let ens = EnsembleSpec {
            n_points: 4,
            ..EnsembleSpec::default()
        };
        let t = semicontinuity_sweep(&s.spec, &s.basis, &[0.0], &params(), &ens, 0.0, 1.0).unwrap();
        assert_eq!(t.rows, vec![SweepRow { delta: 0.0, distance: 0.0 }]);
        assert!(t.fitted_order.is_none());
        assert!(semicontinuity_sweep(&s.spec, &s.basis, &[0.1, 0.2], &params(), &ens, 0.0, 1.0).is_err());
    }

    #[test]
    fn member_failures_carry_index() {
        let spec = ModelSpec {
            nonlinearity: NonlinearitySpec::cubic_soft(1.0),
            ..ModelSpec::linear(1)
        };
        let s = Solver::new(spec, Basis::new(1, 2)).unwrap();
        let ens = EnsembleSpec {
            n_points: 3,
            dt: 1.0,
            ..EnsembleSpec::default()
        };
        let p = EnergyParams { c14: 1e8, ..params() };
        match pullback_cloud(&s, &p, &ens, 0.0, 50.0) {
            Err(Error::Member { index, source }) => {
                assert!(index < 3);
                assert!(source.is_numerical());
            }
            other => panic!("expected a member failure, got {other:?}"),
        }
    }

    #[test]
    fn slope_fit() {
        let pts: Vec<(f64, f64)> = [0.1, 0.01, 0.001].iter().map(|&d| (d, 3.0 * d * d)).collect();
        assert!((log_log_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert!(log_log_slope(&pts[..1]).is_none());
    }

    fn arb_cloud() -> impl Strategy<Value = AttractorCloud> {
        prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 4), 1..6).prop_map(|rows| {
            cloud(rows.into_iter().map(|r| state(&r[..2], &r[2..])).collect())
        })
    }

    proptest! {
        #[test]
        fn semidistance_triangle(a in arb_cloud(), b in arb_cloud(), c in arb_cloud()) {
            let basis = Basis::new(1, 2);
            let eps = EpsilonProfile::constant(0.7);
            let d = |x: &AttractorCloud, y: &AttractorCloud| hausdorff_semidist(&basis, x, y, &eps).unwrap();
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
            prop_assert_eq!(d(&a, &a), 0.0);
        }
    }
}
