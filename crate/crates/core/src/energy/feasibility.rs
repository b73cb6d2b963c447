//! Admissible `(rho, chi)` pairs for the energy estimate.
//!
//! Every constraint is scanned on a uniform grid. Constraints that depend on
//! the mass coefficient are linear in it and are checked at both ends of
//! `[alpha, L]`, so a pass holds for every time.

use serde::Serialize;

use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintGroup {
    /// Needed for the dissipative inequality; defines the feasible set.
    Decay,
    /// Needed only for the lower norm bound; reported separately.
    Sandwich,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Constraint {
    pub name: &'static str,
    pub group: ConstraintGroup,
}

const fn decay(name: &'static str) -> Constraint {
    Constraint {
        name,
        group: ConstraintGroup::Decay,
    }
}

const fn sandwich(name: &'static str) -> Constraint {
    Constraint {
        name,
        group: ConstraintGroup::Sandwich,
    }
}

/// Canonical order; the binding constraint of an empty set is the first
/// one here that no grid point satisfies.
pub const CONSTRAINTS: [Constraint; 16] = [
    decay("rho_energy_window"),
    decay("rho_k_nonnegative"),
    decay("energy_nonnegative"),
    decay("c0_le_c4"),
    decay("gradient_coefficient"),
    decay("quartic_coefficient"),
    decay("velocity_coefficient"),
    decay("mass_coefficient"),
    decay("constant_term"),
    decay("c3_le_half_lambda"),
    decay("rho_lower_window"),
    decay("chi_window"),
    sandwich("sandwich_l_large"),
    sandwich("sandwich_rho_lower"),
    sandwich("sandwich_rho_upper"),
    sandwich("sandwich_c3"),
];

pub const N_CONSTRAINTS: usize = CONSTRAINTS.len();

/// Data entering the constraints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityProblem {
    pub lambda1: f64,
    /// Lower and upper ends of the mass coefficient, `alpha` and `L`.
    pub eps_min: f64,
    pub eps_max: f64,
    pub lambda: f64,
    pub delta: f64,
    pub gamma: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl FeasibilityProblem {
    pub fn from_spec(spec: &ModelSpec, lambda1: f64, c0: f64) -> Self {
        let s = spec.nonlinearity.structure;
        Self {
            lambda1,
            eps_min: spec.epsilon.alpha,
            eps_max: spec.epsilon.bound,
            lambda: spec.lambda,
            delta: spec.delta,
            gamma: spec.nonlinearity.gamma,
            c0,
            c1: s.c1,
            c2: s.c2,
            c3: s.c3,
            c4: s.c4,
        }
    }

    /// Lower end of the `chi` window; `INFINITY` when no `chi > 0` works.
    pub fn chi_lower(&self, rho: f64) -> f64 {
        let (gamma, lambda) = (self.gamma, self.lambda);
        let first = lower_fraction(
            2.0 * rho * gamma * self.c3 + 2.0 * rho * self.c1,
            rho * rho - lambda + 2.0 * self.c3,
        );
        let second = lower_fraction(
            2.0 * rho * gamma * self.c4 + 2.0 * rho * self.c2,
            2.0 * self.c4 - 2.0 * self.c0,
        );
        first.max(second)
    }

    pub fn chi_upper(&self, rho: f64) -> f64 {
        (rho / (2.0 * (1.0 + rho)))
            .min(4.0 * rho)
            .min(rho * self.gamma)
            .min(2.0 * rho - rho * rho)
    }

    /// Pass flags in canonical order.
    pub fn evaluate(&self, rho: f64, chi: f64) -> [bool; N_CONSTRAINTS] {
        let Self {
            lambda1: l1,
            eps_min,
            eps_max,
            lambda,
            delta,
            gamma,
            c0,
            c1,
            c2,
            c3,
            c4,
        } = *self;
        let big_l = eps_max;
        let at_both = |f: &dyn Fn(f64) -> f64| f(eps_min) >= 0.0 && f(eps_max) >= 0.0;
        [
            (2.0 * lambda).sqrt() <= rho
                && rho <= (l1 / (4.0 * big_l)).min(((l1 + 4.0 * lambda) * big_l).sqrt() / (2.0 * big_l)),
            rho <= (2.0 / big_l).min(l1 * big_l.sqrt() / (4.0 * big_l)),
            l1 + rho * l1 - rho * rho * big_l - 2.0 * c3 + l1 >= 0.0,
            c0 <= c4,
            rho / 2.0 - chi - chi * rho >= 0.0,
            2.0 * delta * rho - chi * delta / 2.0 >= 0.0,
            at_both(&|eps| 2.0 * rho * eps - rho * rho - chi * eps),
            at_both(&|eps| {
                chi * rho * rho * eps - chi * lambda - 2.0 * rho * gamma * c3 + 2.0 * chi * c3
                    - 2.0 * rho * c1
            }),
            -(2.0 * rho * gamma - 2.0 * chi) * c4 - 2.0 * rho * c2 - 2.0 * chi * c0 >= 0.0,
            c3 <= lambda / 2.0,
            ((lambda - 2.0 * c3).max(0.0) * big_l).sqrt() / big_l <= rho && rho <= 2.0,
            self.chi_lower(rho) < chi && chi < self.chi_upper(rho),
            big_l >= 64.0 / l1,
            big_l >= 64.0 / l1
                && rho >= (l1 * big_l + ((l1 * l1 * big_l - 64.0 * l1) * big_l).sqrt()) / (8.0 * big_l),
            rho <= (lambda * big_l).max(0.0).sqrt() / big_l,
            c3 <= (lambda - rho * rho * big_l) / 2.0,
        ]
    }

    /// Whether `(rho, chi)` satisfies the decay group.
    pub fn decay_feasible(&self, rho: f64, chi: f64) -> bool {
        self.first_decay_failure(rho, chi).is_none()
    }

    pub fn first_decay_failure(&self, rho: f64, chi: f64) -> Option<&'static str> {
        let flags = self.evaluate(rho, chi);
        CONSTRAINTS
            .iter()
            .zip(flags)
            .find(|(c, ok)| c.group == ConstraintGroup::Decay && !ok)
            .map(|(c, _)| c.name)
    }
}

/// `chi > num / den` read as the row `chi * den >= num` with `num >= 0`:
/// `0 / 0` leaves the row inactive, a non-positive denominator with a
/// positive numerator (or a negative one with any) rules out every `chi > 0`.
fn lower_fraction(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if den == 0.0 && num <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Uniform scan box `(0, rho_max] x (0, chi_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub rho_max: f64,
    pub chi_max: f64,
    pub n_rho: usize,
    pub n_chi: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rho_max: 2.0,
            chi_max: 0.5,
            n_rho: 200,
            n_chi: 200,
        }
    }
}

impl GridSpec {
    /// `rho_i = rho_max * (i / n)`, `i = 1..=n`. The ratio is formed first so a
    /// refined grid reproduces the coarse nodes bit for bit.
    pub fn rho_values(&self) -> Vec<f64> {
        (1..=self.n_rho)
            .map(|i| self.rho_max * (i as f64 / self.n_rho as f64))
            .collect()
    }

    pub fn chi_values(&self) -> Vec<f64> {
        (1..=self.n_chi)
            .map(|j| self.chi_max * (j as f64 / self.n_chi as f64))
            .collect()
    }

    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n_rho: self.n_rho * factor,
            n_chi: self.n_chi * factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintSummary {
    pub name: &'static str,
    pub group: ConstraintGroup,
    pub pass_ratio: f64,
    pub fail_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChosenPoint {
    pub rho: f64,
    pub chi: f64,
    pub sigma1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub problem: FeasibilityProblem,
    pub grid: GridSpec,
    pub constraints: Vec<ConstraintSummary>,
    /// Failed-constraint bit masks, `rho` major (`index = i * n_chi + j`).
    pub failures: Vec<u32>,
    /// Points passing the decay group.
    pub feasible: Vec<[f64; 2]>,
    /// Decay-feasible points that also pass the sandwich group.
    pub sandwich_feasible: usize,
    pub chosen: Option<ChosenPoint>,
    pub empty: bool,
    pub binding: Option<&'static str>,
}

impl FeasibilityReport {
    pub fn contains(&self, rho: f64, chi: f64) -> bool {
        self.feasible.iter().any(|p| p[0] == rho && p[1] == chi)
    }
}

pub fn solve_feasibility(problem: &FeasibilityProblem, grid: &GridSpec) -> FeasibilityReport {
    let rhos = grid.rho_values();
    let chis = grid.chi_values();
    let decay_mask: u32 = CONSTRAINTS
        .iter()
        .enumerate()
        .filter(|(_, c)| c.group == ConstraintGroup::Decay)
        .fold(0, |m, (i, _)| m | (1 << i));

    let mut failures = Vec::with_capacity(rhos.len() * chis.len());
    let mut fail_counts = [0usize; N_CONSTRAINTS];
    let mut feasible = Vec::new();
    let mut sandwich_feasible = 0;
    for &rho in &rhos {
        for &chi in &chis {
            let flags = problem.evaluate(rho, chi);
            let mut mask = 0u32;
            for (k, ok) in flags.iter().enumerate() {
                if !ok {
                    mask |= 1 << k;
                    fail_counts[k] += 1;
                }
            }
            if mask & decay_mask == 0 {
                feasible.push([rho, chi]);
                if mask == 0 {
                    sandwich_feasible += 1;
                }
            }
            failures.push(mask);
        }
    }

    let total = failures.len().max(1);
    let constraints: Vec<ConstraintSummary> = CONSTRAINTS
        .iter()
        .zip(fail_counts)
        .map(|(c, fails)| ConstraintSummary {
            name: c.name,
            group: c.group,
            pass_ratio: 1.0 - fails as f64 / total as f64,
            fail_count: fails,
        })
        .collect();

    let empty = feasible.is_empty();
    let binding = if empty {
        let decay_rows = constraints.iter().filter(|c| c.group == ConstraintGroup::Decay);
        decay_rows
            .clone()
            .find(|c| c.fail_count == total)
            .or_else(|| decay_rows.min_by(|a, b| a.pass_ratio.total_cmp(&b.pass_ratio)))
            .map(|c| c.name)
    } else {
        None
    };
    let chosen = choose_point(&feasible, grid);

    FeasibilityReport {
        problem: problem.clone(),
        grid: *grid,
        constraints,
        failures,
        feasible,
        sandwich_feasible,
        chosen,
        empty,
        binding,
    }
}

/// Feasible point closest to the centroid of the feasible set, in box-scaled
/// coordinates; ties go to the earlier point.
fn choose_point(feasible: &[[f64; 2]], grid: &GridSpec) -> Option<ChosenPoint> {
    if feasible.is_empty() {
        return None;
    }
    let n = feasible.len() as f64;
    let cr = feasible.iter().map(|p| p[0]).sum::<f64>() / n;
    let cc = feasible.iter().map(|p| p[1]).sum::<f64>() / n;
    let dist = |p: &[f64; 2]| {
        ((p[0] - cr) / grid.rho_max).powi(2) + ((p[1] - cc) / grid.chi_max).powi(2)
    };
    let mut best = &feasible[0];
    for p in feasible {
        if dist(p) < dist(best) {
            best = p;
        }
    }
    Some(ChosenPoint {
        rho: best[0],
        chi: best[1],
        sigma1: best[1] / 2.0,
    })
}
