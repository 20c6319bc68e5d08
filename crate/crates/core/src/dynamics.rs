//! Exact probability evolution during a search.
//!
//! A search that has drawn `x_i` blue marbles from each urn `i` (and nothing
//! red) is summarised by the count vector alone. With `r_i = x_i / N_i`, the
//! probability of reaching that state is
//!
//! ```text
//! survival(x) = Σ_S (-1)^{|S|} φ_S ∏_{i∈S} r_i
//! ```
//!
//! and the posterior that every urn of `U` holds a red marble is
//!
//! ```text
//! P(U | x) = ∏_{i∈U} (1 - r_i) · Σ_{S⊇U} (-1)^{|S|-|U|} φ_S ∏_{j∈S∖U} r_j / survival(x)
//! ```
//!
//! Both sums are evaluated by one kernel, [`inclusion_exclusion`]. Terms
//! touching an urn with `x_j = 0` vanish, so only untouched-complement
//! subsets of the drawn urns are visited.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PriorKind, Problem, ValidProblem, VALIDATE_EPS};
use crate::subset::UrnSet;

/// Blue-draw counts per urn; the sufficient statistic for every posterior.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SearchState {
    drawn: Vec<u32>,
}

impl SearchState {
    /// Nothing drawn yet.
    pub fn fresh(urns: usize) -> Self {
        SearchState {
            drawn: vec![0; urns],
        }
    }

    pub fn from_counts(drawn: Vec<u32>) -> Self {
        SearchState { drawn }
    }

    pub fn drawn(&self) -> &[u32] {
        &self.drawn
    }

    pub fn count(&self, urn: usize) -> u32 {
        self.drawn[urn]
    }

    /// Total number of draws so far, `t`.
    pub fn stage(&self) -> u32 {
        self.drawn.iter().sum()
    }

    /// Records one more blue draw from `urn`.
    pub fn advance(&mut self, urn: usize) {
        self.drawn[urn] += 1;
    }

    /// The state after one more blue draw from `urn`.
    pub fn after(&self, urn: usize) -> SearchState {
        let mut next = self.clone();
        next.advance(urn);
        next
    }

    /// Urns from which at least one marble has been drawn.
    pub fn touched(&self) -> UrnSet {
        self.drawn
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn check(&self, problem: &Problem) -> Result<()> {
        if self.drawn.len() != problem.urn_count() {
            return Err(Error::StateShape {
                expected: problem.urn_count(),
                got: self.drawn.len(),
            });
        }
        for (urn, (&drawn, u)) in self.drawn.iter().zip(problem.urns()).enumerate() {
            if drawn > u.marbles {
                return Err(Error::CountExceedsMarbles {
                    urn,
                    drawn,
                    marbles: u.marbles,
                });
            }
        }
        Ok(())
    }

    fn ratios(&self, problem: &Problem) -> Vec<f64> {
        self.drawn
            .iter()
            .zip(problem.urns())
            .map(|(&x, u)| f64::from(x) / f64::from(u.marbles))
            .collect()
    }
}

/// Outcome distribution of a single draw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawDistribution {
    pub p_red: f64,
    pub p_blue: f64,
}

/// Clamps a derived probability to `[0, 1]`, rejecting values that stray
/// further than [`VALIDATE_EPS`] outside.
pub(crate) fn clamp_probability(value: f64) -> Result<f64> {
    if value.is_nan() || !(-VALIDATE_EPS..=1.0 + VALIDATE_EPS).contains(&value) {
        Err(Error::NumericalRange(value))
    } else {
        Ok(value.clamp(0.0, 1.0))
    }
}

/// `Σ_{T ⊆ active∖base} (-1)^{|T|} φ_{base ∪ T} ∏_{j∈T} ratios[j]`.
///
/// The summation order is fixed by the masks alone, so equal inputs give
/// bit-identical output.
pub(crate) fn inclusion_exclusion(
    problem: &Problem,
    base: UrnSet,
    active: UrnSet,
    ratios: &[f64],
) -> f64 {
    let prior = problem.prior();
    let mut sum = 0.0;
    for extra in active.difference(base).subsets() {
        let phi = prior.phi_raw(base.union(extra));
        if phi == 0.0 {
            continue;
        }
        let weight: f64 = extra.iter().map(|j| ratios[j]).product();
        sum += extra.parity_sign() * phi * weight;
    }
    sum
}

pub(crate) fn raw_survival(problem: &Problem, state: &SearchState) -> f64 {
    let ratios = state.ratios(problem);
    inclusion_exclusion(problem, UrnSet::EMPTY, state.touched(), &ratios)
}

/// Probability of reaching `state` without drawing a red marble.
pub fn survival(problem: &ValidProblem, state: &SearchState) -> Result<f64> {
    state.check(problem)?;
    clamp_probability(raw_survival(problem, state))
}

pub(crate) fn reachable_survival(problem: &Problem, state: &SearchState) -> Result<f64> {
    let s = raw_survival(problem, state);
    if s <= VALIDATE_EPS {
        return Err(Error::ImpossibleState { survival: s });
    }
    clamp_probability(s)
}

/// Posterior probability that every urn of `subset` holds a red marble,
/// given that `state` was reached with only blue draws.
pub fn posterior(problem: &ValidProblem, state: &SearchState, subset: UrnSet) -> Result<f64> {
    state.check(problem)?;
    problem.check_subset(subset)?;
    let denominator = reachable_survival(problem, state)?;
    posterior_given_survival(problem, state, subset, denominator)
}

pub(crate) fn posterior_given_survival(
    problem: &Problem,
    state: &SearchState,
    subset: UrnSet,
    survival: f64,
) -> Result<f64> {
    let ratios = state.ratios(problem);
    let remaining: f64 = subset.iter().map(|i| 1.0 - ratios[i]).product();
    if remaining == 0.0 {
        return Ok(0.0);
    }
    let numerator = inclusion_exclusion(problem, subset, state.touched(), &ratios);
    clamp_probability(remaining * numerator / survival)
}

/// Posterior marginal of every urn at `state`, sharing one survival evaluation.
pub fn posterior_marginals(problem: &ValidProblem, state: &SearchState) -> Result<Vec<f64>> {
    state.check(problem)?;
    let denominator = reachable_survival(problem, state)?;
    (0..problem.urn_count())
        .map(|i| posterior_given_survival(problem, state, UrnSet::singleton(i), denominator))
        .collect()
}

/// Distribution of the next draw from `urn` at `state`.
pub fn draw_distribution(
    problem: &ValidProblem,
    state: &SearchState,
    urn: usize,
) -> Result<DrawDistribution> {
    state.check(problem)?;
    problem.check_subset(UrnSet::singleton(urn))?;
    let left = problem.marbles(urn) - state.count(urn);
    if left == 0 {
        return Err(Error::EmptyUrn(urn));
    }
    let p_urn = posterior(problem, state, UrnSet::singleton(urn))?;
    let p_red = p_urn / f64::from(left);
    Ok(DrawDistribution {
        p_red,
        p_blue: 1.0 - p_red,
    })
}

fn require_kind(problem: &Problem, expected: PriorKind) -> Result<()> {
    if problem.kind() == expected {
        Ok(())
    } else {
        Err(Error::WrongKind {
            expected,
            actual: problem.kind(),
        })
    }
}

/// Closed-form posterior marginal for single-marble priors:
/// `(1 - x_i/N_i) φ_i / (1 - Σ_j x_j φ_j / N_j)`.
pub fn posterior_single_marble(
    problem: &ValidProblem,
    state: &SearchState,
    urn: usize,
) -> Result<f64> {
    require_kind(problem, PriorKind::SingleMarble)?;
    state.check(problem)?;
    problem.check_subset(UrnSet::singleton(urn))?;
    let ratios = state.ratios(problem);
    let phi = problem.prior().marginals();
    let survival = 1.0 - ratios.iter().zip(phi).map(|(r, p)| r * p).sum::<f64>();
    if survival <= VALIDATE_EPS {
        return Err(Error::ImpossibleState { survival });
    }
    clamp_probability((1.0 - ratios[urn]) * phi[urn] / survival)
}

/// Closed-form posterior marginal for independent priors:
/// `φ_i (1 - x_i/N_i) / (1 - φ_i x_i/N_i)`, unaffected by other urns.
pub fn posterior_independent(
    problem: &ValidProblem,
    state: &SearchState,
    urn: usize,
) -> Result<f64> {
    require_kind(problem, PriorKind::Independent)?;
    state.check(problem)?;
    problem.check_subset(UrnSet::singleton(urn))?;
    let ratios = state.ratios(problem);
    let phi = problem.prior().marginals();
    let survival: f64 = ratios.iter().zip(phi).map(|(r, p)| 1.0 - r * p).product();
    if survival <= VALIDATE_EPS {
        return Err(Error::ImpossibleState { survival });
    }
    let r = ratios[urn];
    clamp_probability(phi[urn] * (1.0 - r) / (1.0 - phi[urn] * r))
}
