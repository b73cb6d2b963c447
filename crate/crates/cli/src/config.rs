//! Flat `section.key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Lists are comma separated,
//! and list-of-lists (table forcing) separate rows with `;`.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `model.delta` | required | Kirchhoff coefficient |
//! | `model.lambda` | required | mass coefficient |
//! | `model.sobolev_p` | 4 | growth exponent of `g'` |
//! | `model.epsilon.kind` | required | `constant`, `exp_decay`, `table` |
//! | `model.epsilon.alpha` | 1 | limit value |
//! | `model.epsilon.amplitude` | 0 | `exp_decay` amplitude |
//! | `model.epsilon.bound` | per kind | declared bound on `eps + |eps'|` |
//! | `model.epsilon.times`, `.values` | | `table` samples |
//! | `model.nonlinearity.kind` | required | `zero`, `cubic_soft`, `lipschitz_sine`, `linear`, `table` |
//! | `model.nonlinearity.c`, `.amplitude`, `.slope` | 1 | kind parameter |
//! | `model.nonlinearity.u`, `.g` | | `table` samples |
//! | `model.nonlinearity.k`, `.gamma`, `.growth_c`, `.c1`..`.c4` | per kind | overrides of the declared constants |
//! | `model.forcing.kind` | required | `zero`, `separable`, `table` |
//! | `model.forcing.amplitude`, `.rate`, `.mode` | | `separable` parameters |
//! | `model.forcing.modes`, `.times`, `.values` | | `table` forcing, one row per time |
//! | `model.forcing.sigma` | rate | integrability weight |
//! | `discretization.dim` | required | spatial dimension |
//! | `discretization.modes` | required | modes per axis |
//! | `discretization.dt` | 0.01 | |
//! | `discretization.t_start`, `.t_end` | 0, 10 | |
//! | `discretization.record_every` | 1 | |
//! | `discretization.scheme` | `imex2` | or `backward_euler` |
//! | `initial.kind` | `smooth` | `zero`, `smooth`, `mode` |
//! | `initial.amplitude` | 1 | |
//! | `initial.mode` | 1,..,1 | excited mode for `mode` |
//! | `energy.rho`, `energy.chi` | `auto` | number, or `auto` for the feasibility choice |
//! | `energy.sigma1` | chi / 2 | |
//! | `energy.xi` | min(0.1, sqrt(lambda1) / 4) | |
//! | `energy.c0` | 0 | |
//! | `energy.c5` | `fit` | number or `fit` |
//! | `energy.c14` | 1 | |
//! | `energy.slack_factor` | 10 | |
//! | `energy.grid.rho_max`, `.chi_max`, `.n_rho`, `.n_chi` | 2, 0.5, 200, 200 | feasibility scan |
//! | `validate.u_max` | 10 | sampled `|u|` range of the hypothesis checks |
//! | `validate.samples` | 201 | |
//! | `attractor.n_points` | 64 | |
//! | `attractor.sampling` | `sphere_surface` | or `ball_uniform` |
//! | `attractor.seed` | 0 | |
//! | `attractor.taus` | 5,10,20 | pullback horizons |
//! | `attractor.deltas` | 0.2,0.1,0.05,0.01 | sweep values, decreasing |
//! | `attractor.t_star` | `discretization.t_end` | |
//! | `attractor.tau` | last horizon | sweep horizon |
//! | `attractor.dt` | `discretization.dt` | |
//! | `decompose.residual_tol` | 1e-3 | |
//! | `output.directory` | `out` | |
//! | `output.formats` | csv,json | |

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use kirchhoff_core::energy::GridSpec;
use kirchhoff_core::model::{
    EpsilonKind, EpsilonProfile, ForcingKind, ForcingSpec, ModelSpec, NonlinearitySpec,
};
use kirchhoff_core::{Basis, EnsembleSpec, ModalState, Sampling, Scheme, StepConfig};

const KEYS: &[&str] = &[
    "model.delta",
    "model.lambda",
    "model.sobolev_p",
    "model.epsilon.kind",
    "model.epsilon.alpha",
    "model.epsilon.amplitude",
    "model.epsilon.bound",
    "model.epsilon.times",
    "model.epsilon.values",
    "model.nonlinearity.kind",
    "model.nonlinearity.c",
    "model.nonlinearity.amplitude",
    "model.nonlinearity.slope",
    "model.nonlinearity.u",
    "model.nonlinearity.g",
    "model.nonlinearity.k",
    "model.nonlinearity.gamma",
    "model.nonlinearity.growth_c",
    "model.nonlinearity.c1",
    "model.nonlinearity.c2",
    "model.nonlinearity.c3",
    "model.nonlinearity.c4",
    "model.forcing.kind",
    "model.forcing.amplitude",
    "model.forcing.rate",
    "model.forcing.mode",
    "model.forcing.modes",
    "model.forcing.times",
    "model.forcing.values",
    "model.forcing.sigma",
    "discretization.dim",
    "discretization.modes",
    "discretization.dt",
    "discretization.t_start",
    "discretization.t_end",
    "discretization.record_every",
    "discretization.scheme",
    "initial.kind",
    "initial.amplitude",
    "initial.mode",
    "energy.rho",
    "energy.chi",
    "energy.sigma1",
    "energy.xi",
    "energy.c0",
    "energy.c5",
    "energy.c14",
    "energy.slack_factor",
    "energy.grid.rho_max",
    "energy.grid.chi_max",
    "energy.grid.n_rho",
    "energy.grid.n_chi",
    "validate.u_max",
    "validate.samples",
    "attractor.n_points",
    "attractor.sampling",
    "attractor.seed",
    "attractor.taus",
    "attractor.deltas",
    "attractor.t_star",
    "attractor.tau",
    "attractor.dt",
    "decompose.residual_tol",
    "output.directory",
    "output.formats",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn general(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self {
                line: Some(l),
                message,
            } => write!(f, "line {l}: {message}"),
            Self { line: None, message } => f.write_str(message),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<kirchhoff_core::Error> for ConfigError {
    fn from(e: kirchhoff_core::Error) -> Self {
        Self::general(e.to_string())
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

/// Key-value pairs with the line each came from.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::at(n, format!("expected `key = value`, got `{line}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::at(n, format!("unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(ConfigError::at(n, format!("`{key}` has no value")));
            }
            if let Some((first, _)) = entries.get(key) {
                return Err(ConfigError::at(n, format!("`{key}` already set on line {first}")));
            }
            entries.insert(key.to_string(), (n, value.to_string()));
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (0, value.into()));
    }

    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.entries.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn bad(&self, key: &str, what: &str, value: &str) -> ConfigError {
        let message = format!("`{key}`: expected {what}, got `{value}`");
        match self.raw(key) {
            Some((l, _)) if l > 0 => ConfigError::at(l, message),
            _ => ConfigError::general(message),
        }
    }

    fn require<T>(&self, key: &str, v: Option<T>) -> Result<T> {
        v.ok_or_else(|| ConfigError::general(format!("missing required key `{key}`")))
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.raw(key).map(|(_, v)| v)
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key)
            .map(|(_, v)| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| self.bad(key, "a finite number", v))
            })
            .transpose()
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.raw(key)
            .map(|(_, v)| v.parse::<usize>().map_err(|_| self.bad(key, "a non-negative integer", v)))
            .transpose()
    }

    /// Number, or `None` for the given keyword.
    fn f64_or_keyword(&self, key: &str, keyword: &str) -> Result<Option<f64>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) if v == keyword => Ok(None),
            Some(_) => self.f64(key),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<Vec<T>>> {
        self.raw(key)
            .map(|(_, v)| {
                v.split(',')
                    .map(|s| s.trim().parse::<T>())
                    .collect::<std::result::Result<Vec<T>, _>>()
                    .map_err(|_| self.bad(key, what, v))
            })
            .transpose()
    }

    fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.list::<f64>(key, "a comma-separated list of numbers")
    }

    fn rows<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<Vec<Vec<T>>>> {
        self.raw(key)
            .map(|(_, v)| {
                v.split(';')
                    .map(|row| {
                        row.split(',')
                            .map(|s| s.trim().parse::<T>())
                            .collect::<std::result::Result<Vec<T>, _>>()
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| self.bad(key, what, v))
            })
            .transpose()
    }

    fn choice<'a>(&'a self, key: &str, options: &[&str]) -> Result<Option<&'a str>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) if options.contains(&v) => Ok(Some(v)),
            Some(v) => Err(self.bad(key, &format!("one of {}", options.join(", ")), v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialKind {
    Zero,
    /// Coefficients `+-amplitude / |k|^4`, velocity half as large with the opposite sign.
    Smooth,
    Mode(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub kind: InitialKind,
    pub amplitude: f64,
}

impl InitialData {
    pub fn state(&self, basis: &Basis, t: f64) -> Result<ModalState> {
        let mut s = ModalState::zeros(basis.len(), t);
        match &self.kind {
            InitialKind::Zero => {}
            InitialKind::Smooth => {
                for m in 0..basis.len() {
                    let k2: usize = basis.mode(m).iter().map(|k| k * k).sum();
                    let w = self.amplitude / (k2 * k2) as f64;
                    s.u.0[m] = if m % 2 == 0 { w } else { -w };
                    s.v.0[m] = -0.5 * w;
                }
            }
            InitialKind::Mode(mode) => {
                let m = basis.index_of(mode).ok_or_else(|| {
                    ConfigError::general(format!("initial mode {mode:?} is outside the basis"))
                })?;
                s.u.0[m] = self.amplitude;
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergySection {
    /// `None` when the point comes from the feasibility scan.
    pub rho: Option<f64>,
    pub chi: Option<f64>,
    pub sigma1: Option<f64>,
    pub xi: Option<f64>,
    pub c0: f64,
    /// `None` fits the constant along the run.
    pub c5: Option<f64>,
    pub c14: f64,
    pub slack_factor: f64,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttractorSection {
    pub ensemble: EnsembleSpec,
    pub deltas: Vec<f64>,
    pub t_star: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub csv: bool,
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub spec: ModelSpec,
    pub basis: Basis,
    pub step: StepConfig,
    pub initial: InitialData,
    pub energy: EnergySection,
    pub validate_u_range: (f64, f64),
    pub validate_samples: usize,
    pub attractor: AttractorSection,
    pub residual_tol: f64,
    pub output: OutputSection,
}

fn epsilon(raw: &RawConfig) -> Result<EpsilonProfile> {
    let kind = raw.choice("model.epsilon.kind", &["constant", "exp_decay", "table"])?;
    let kind = raw.require("model.epsilon.kind", kind)?;
    let alpha = raw.f64_or("model.epsilon.alpha", 1.0)?;
    let profile = match kind {
        "constant" => EpsilonProfile::constant(alpha),
        "exp_decay" => EpsilonProfile::exp_decay(alpha, raw.f64_or("model.epsilon.amplitude", 0.0)?),
        _ => {
            let times = raw.require("model.epsilon.times", raw.f64_list("model.epsilon.times")?)?;
            let values = raw.require("model.epsilon.values", raw.f64_list("model.epsilon.values")?)?;
            let bound = values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
                + times
                    .windows(2)
                    .zip(values.windows(2))
                    .map(|(t, v)| ((v[1] - v[0]) / (t[1] - t[0])).abs())
                    .fold(0.0, f64::max);
            EpsilonProfile {
                kind: EpsilonKind::Table { times, values },
                alpha,
                bound,
            }
        }
    };
    Ok(match raw.f64("model.epsilon.bound")? {
        Some(b) => profile.with_bound(b),
        None => profile,
    })
}

fn nonlinearity(raw: &RawConfig) -> Result<NonlinearitySpec> {
    let kind = raw.choice(
        "model.nonlinearity.kind",
        &["zero", "cubic_soft", "lipschitz_sine", "linear", "table"],
    )?;
    let mut g = match raw.require("model.nonlinearity.kind", kind)? {
        "zero" => NonlinearitySpec::zero(),
        "cubic_soft" => NonlinearitySpec::cubic_soft(raw.f64_or("model.nonlinearity.c", 1.0)?),
        "lipschitz_sine" => {
            NonlinearitySpec::lipschitz_sine(raw.f64_or("model.nonlinearity.amplitude", 1.0)?)
        }
        "linear" => NonlinearitySpec::linear(raw.f64_or("model.nonlinearity.slope", 1.0)?),
        _ => NonlinearitySpec::user_table(
            raw.require("model.nonlinearity.u", raw.f64_list("model.nonlinearity.u")?)?,
            raw.require("model.nonlinearity.g", raw.f64_list("model.nonlinearity.g")?)?,
        )?,
    };
    let over = |key: &str, slot: &mut f64| -> Result<()> {
        if let Some(v) = raw.f64(key)? {
            *slot = v;
        }
        Ok(())
    };
    over("model.nonlinearity.k", &mut g.k)?;
    over("model.nonlinearity.gamma", &mut g.gamma)?;
    over("model.nonlinearity.growth_c", &mut g.growth_c)?;
    over("model.nonlinearity.c1", &mut g.structure.c1)?;
    over("model.nonlinearity.c2", &mut g.structure.c2)?;
    over("model.nonlinearity.c3", &mut g.structure.c3)?;
    over("model.nonlinearity.c4", &mut g.structure.c4)?;
    Ok(g)
}

fn forcing(raw: &RawConfig) -> Result<ForcingSpec> {
    let kind = raw.choice("model.forcing.kind", &["zero", "separable", "table"])?;
    let f = match raw.require("model.forcing.kind", kind)? {
        "zero" => ForcingSpec::zero(),
        "separable" => {
            let amplitude = raw.require("model.forcing.amplitude", raw.f64("model.forcing.amplitude")?)?;
            let rate = raw.require("model.forcing.rate", raw.f64("model.forcing.rate")?)?;
            let mode = raw.require(
                "model.forcing.mode",
                raw.list::<usize>("model.forcing.mode", "a comma-separated multi-index")?,
            )?;
            ForcingSpec::separable(amplitude, rate, mode)
        }
        _ => {
            let modes = raw.require(
                "model.forcing.modes",
                raw.rows::<usize>("model.forcing.modes", "multi-indices separated by `;`")?,
            )?;
            let times = raw.require("model.forcing.times", raw.f64_list("model.forcing.times")?)?;
            let values = raw.require(
                "model.forcing.values",
                raw.rows::<f64>("model.forcing.values", "rows of numbers separated by `;`")?,
            )?;
            ForcingSpec {
                kind: ForcingKind::ModalTable {
                    modes,
                    times,
                    values,
                },
                sigma: 1.0,
            }
        }
    };
    Ok(match raw.f64("model.forcing.sigma")? {
        Some(s) => f.with_sigma(s),
        None => f,
    })
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let dim = raw.require("discretization.dim", raw.usize("discretization.dim")?)?;
        let modes = raw.require("discretization.modes", raw.usize("discretization.modes")?)?;
        if dim == 0 || modes == 0 {
            return Err(ConfigError::general("`discretization.dim` and `.modes` must be positive"));
        }
        let spec = ModelSpec {
            delta: raw.require("model.delta", raw.f64("model.delta")?)?,
            lambda: raw.require("model.lambda", raw.f64("model.lambda")?)?,
            dim,
            sobolev_p: raw.f64_or("model.sobolev_p", ModelSpec::DEFAULT_SOBOLEV_P)?,
            epsilon: epsilon(raw)?,
            nonlinearity: nonlinearity(raw)?,
            forcing: forcing(raw)?,
        };
        spec.validate()?;
        let basis = Basis::new(dim, modes);
        spec.forcing.check_basis(&basis)?;

        let scheme = match raw.choice("discretization.scheme", &["imex2", "backward_euler"])? {
            Some("backward_euler") => Scheme::BackwardEulerImex1,
            _ => Scheme::Imex2,
        };
        let step = StepConfig::new(
            raw.f64_or("discretization.dt", 1e-2)?,
            raw.f64_or("discretization.t_start", 0.0)?,
            raw.f64_or("discretization.t_end", 10.0)?,
        )
        .recording(raw.usize("discretization.record_every")?.unwrap_or(1))
        .with_scheme(scheme);
        step.n_steps()?;

        let initial = InitialData {
            kind: match raw.choice("initial.kind", &["zero", "smooth", "mode"])? {
                Some("zero") => InitialKind::Zero,
                Some("mode") => InitialKind::Mode(
                    raw.list::<usize>("initial.mode", "a comma-separated multi-index")?
                        .unwrap_or_else(|| vec![1; dim]),
                ),
                _ => InitialKind::Smooth,
            },
            amplitude: raw.f64_or("initial.amplitude", 1.0)?,
        };
        initial.state(&basis, step.t_start)?;

        let defaults = GridSpec::default();
        let energy = EnergySection {
            rho: raw.f64_or_keyword("energy.rho", "auto")?,
            chi: raw.f64_or_keyword("energy.chi", "auto")?,
            sigma1: raw.f64("energy.sigma1")?,
            xi: raw.f64("energy.xi")?,
            c0: raw.f64_or("energy.c0", 0.0)?,
            c5: raw.f64_or_keyword("energy.c5", "fit")?,
            c14: raw.f64_or("energy.c14", 1.0)?,
            slack_factor: raw.f64_or("energy.slack_factor", 10.0)?,
            grid: GridSpec {
                rho_max: raw.f64_or("energy.grid.rho_max", defaults.rho_max)?,
                chi_max: raw.f64_or("energy.grid.chi_max", defaults.chi_max)?,
                n_rho: raw.usize("energy.grid.n_rho")?.unwrap_or(defaults.n_rho),
                n_chi: raw.usize("energy.grid.n_chi")?.unwrap_or(defaults.n_chi),
            },
        };
        if energy.rho.is_some() != energy.chi.is_some() {
            return Err(ConfigError::general("`energy.rho` and `energy.chi` must both be numbers or both `auto`"));
        }
        if !(energy.grid.rho_max > 0.0 && energy.grid.chi_max > 0.0)
            || energy.grid.n_rho == 0
            || energy.grid.n_chi == 0
        {
            return Err(ConfigError::general("feasibility grid must be non-empty"));
        }

        let ensemble = EnsembleSpec {
            n_points: raw.usize("attractor.n_points")?.unwrap_or(64),
            sampling: match raw.choice("attractor.sampling", &["sphere_surface", "ball_uniform"])? {
                Some("ball_uniform") => Sampling::BallUniform,
                _ => Sampling::SphereSurface,
            },
            seed: raw
                .raw("attractor.seed")
                .map(|(_, v)| v.parse::<u64>().map_err(|_| raw.bad("attractor.seed", "an unsigned integer", v)))
                .transpose()?
                .unwrap_or(0),
            taus: raw.f64_list("attractor.taus")?.unwrap_or_else(|| vec![5.0, 10.0, 20.0]),
            dt: raw.f64_or("attractor.dt", step.dt)?,
            scheme,
        };
        ensemble.validate()?;
        let tau = raw.f64_or("attractor.tau", *ensemble.taus.last().unwrap_or(&0.0))?;
        let attractor = AttractorSection {
            deltas: raw.f64_list("attractor.deltas")?.unwrap_or_else(|| vec![0.2, 0.1, 0.05, 0.01]),
            t_star: raw.f64_or("attractor.t_star", step.t_end)?,
            tau,
            ensemble,
        };

        let u_max = raw.f64_or("validate.u_max", 10.0)?;
        let validate_u_range = match &spec.nonlinearity.kind {
            kirchhoff_core::model::NonlinearityKind::UserTable { u, .. } => {
                (u[0].max(-u_max), u[u.len() - 1].min(u_max))
            }
            _ => (-u_max, u_max),
        };

        let formats = raw
            .list::<String>("output.formats", "a comma-separated list")?
            .unwrap_or_else(|| vec!["csv".into(), "json".into()]);
        if let Some(f) = formats.iter().find(|f| !matches!(f.as_str(), "csv" | "json")) {
            return Err(raw.bad("output.formats", "entries `csv` or `json`", f));
        }

        Ok(Self {
            spec,
            basis,
            step,
            initial,
            energy,
            validate_u_range,
            validate_samples: raw.usize("validate.samples")?.unwrap_or(201),
            attractor,
            residual_tol: raw.f64_or("decompose.residual_tol", 1e-3)?,
            output: OutputSection {
                directory: PathBuf::from(raw.str("output.directory").unwrap_or("out")),
                csv: formats.iter().any(|f| f == "csv"),
                json: formats.iter().any(|f| f == "json"),
            },
        })
    }
}
