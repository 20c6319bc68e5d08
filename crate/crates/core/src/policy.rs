//! Policies, block policies and their exact expected cost.
//!
//! The expected number of blue draws is `E[C] = Σ_{k=0}^{N-1} P(C > k)`, where
//! `P(C > k)` is the survival probability of the state reached after `k + 1`
//! draws of the policy.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, posterior_given_survival, raw_survival, SearchState};
use crate::error::{Error, Result};
use crate::model::{PriorKind, Problem, ValidProblem, VALIDATE_EPS};
use crate::subset::UrnSet;

/// A full draw sequence `u(0), …, u(N-1)` using urn `i` exactly `N_i` times.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Policy {
    sequence: Vec<usize>,
}

impl Policy {
    pub fn new(problem: &Problem, sequence: Vec<usize>) -> Result<Self> {
        let mut counts = vec![0u32; problem.urn_count()];
        for &urn in &sequence {
            match counts.get_mut(urn) {
                Some(c) => *c += 1,
                None => {
                    return Err(Error::InvalidPolicy(format!(
                        "urn index {urn} out of range"
                    )))
                }
            }
        }
        for (i, (&c, u)) in counts.iter().zip(problem.urns()).enumerate() {
            if c != u.marbles {
                return Err(Error::InvalidPolicy(format!(
                    "urn `{}` is drawn {c} times but holds {} marbles",
                    problem.label(i),
                    u.marbles
                )));
            }
        }
        Ok(Policy { sequence })
    }

    /// Parses comma-separated urn labels, e.g. `"u2,u1,u2"`.
    pub fn parse(problem: &Problem, text: &str) -> Result<Self> {
        Policy::new(problem, parse_labels(problem, text)?)
    }

    pub fn sequence(&self) -> &[usize] {
        &self.sequence
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    /// The urn ordering if every urn's draws are contiguous.
    pub fn as_block(&self) -> Option<BlockPolicy> {
        let mut order: Vec<usize> = Vec::new();
        for &urn in &self.sequence {
            if order.last() != Some(&urn) {
                if order.contains(&urn) {
                    return None;
                }
                order.push(urn);
            }
        }
        Some(BlockPolicy { order })
    }

    pub fn is_block(&self) -> bool {
        self.as_block().is_some()
    }

    pub fn to_text(&self, problem: &Problem) -> String {
        labels_text(problem, &self.sequence)
    }

    /// States `x(0), …, x(N)` visited while executing the policy.
    pub fn states(&self, urns: usize) -> Vec<SearchState> {
        let mut state = SearchState::fresh(urns);
        let mut states = Vec::with_capacity(self.sequence.len() + 1);
        states.push(state.clone());
        for &urn in &self.sequence {
            state.advance(urn);
            states.push(state.clone());
        }
        states
    }
}

/// An urn ordering `v¹, …, vⁿ`; each urn is exhausted before the next.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockPolicy {
    order: Vec<usize>,
}

impl BlockPolicy {
    pub fn new(problem: &Problem, order: Vec<usize>) -> Result<Self> {
        let n = problem.urn_count();
        let mut seen = vec![false; n];
        for &urn in &order {
            if urn >= n {
                return Err(Error::InvalidPolicy(format!(
                    "urn index {urn} out of range"
                )));
            }
            if std::mem::replace(&mut seen[urn], true) {
                return Err(Error::InvalidPolicy(format!(
                    "urn `{}` appears twice in the ordering",
                    problem.label(urn)
                )));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPolicy(format!(
                "urn `{}` is missing from the ordering",
                problem.label(missing)
            )));
        }
        Ok(BlockPolicy { order })
    }

    pub fn parse(problem: &Problem, text: &str) -> Result<Self> {
        BlockPolicy::new(problem, parse_labels(problem, text)?)
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Full draw sequence: urn `vⁱ` occupies stages `τ(i) .. τ(i) + N_{vⁱ}`.
    pub fn expand(&self, problem: &Problem) -> Policy {
        let sequence = self
            .order
            .iter()
            .flat_map(|&urn| std::iter::repeat_n(urn, problem.marbles(urn) as usize))
            .collect();
        Policy { sequence }
    }

    /// First stage `τ(i)` of each block.
    pub fn block_starts(&self, problem: &Problem) -> Vec<u32> {
        self.order
            .iter()
            .scan(0u32, |acc, &urn| {
                let start = *acc;
                *acc += problem.marbles(urn);
                Some(start)
            })
            .collect()
    }

    pub fn to_text(&self, problem: &Problem) -> String {
        labels_text(problem, &self.order)
    }
}

fn parse_labels(problem: &Problem, text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|label| {
            problem
                .index_of(label)
                .ok_or_else(|| Error::UnknownUrn(label.to_string()))
        })
        .collect()
}

fn labels_text(problem: &Problem, urns: &[usize]) -> String {
    urns.iter()
        .map(|&u| problem.label(u))
        .collect::<Vec<_>>()
        .join(",")
}

/// Exact evaluation of one policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// Expected number of blue draws.
    pub expected_cost: f64,
    /// `P(C > k)` for `k = 0..N`.
    pub survival_curve: Vec<f64>,
    /// Probability that the stage-`t` draw is red, given it is reached.
    pub stage_red_probs: Vec<f64>,
    /// First stage whose state cannot be reached without a red draw; from
    /// there on `stage_red_probs` holds zeros.
    pub unreachable_from: Option<usize>,
}

/// Exact expected cost, survival curve and per-stage red probabilities.
pub fn expected_cost(problem: &ValidProblem, policy: &Policy) -> Result<CostReport> {
    if policy.len() != problem.total_marbles() as usize {
        return Err(Error::InvalidPolicy(format!(
            "policy has {} draws, problem has {} marbles",
            policy.len(),
            problem.total_marbles()
        )));
    }
    let policy = Policy::new(problem, policy.sequence.clone())?;
    let states = policy.states(problem.urn_count());
    let survivals = states
        .iter()
        .map(|s| dynamics::clamp_probability(raw_survival(problem, s)))
        .collect::<Result<Vec<f64>>>()?;

    let mut stage_red_probs = Vec::with_capacity(policy.len());
    let mut unreachable_from = None;
    for (t, &urn) in policy.sequence.iter().enumerate() {
        let s = survivals[t];
        if unreachable_from.is_some() || s <= VALIDATE_EPS {
            unreachable_from.get_or_insert(t);
            stage_red_probs.push(0.0);
            continue;
        }
        let state = &states[t];
        let p_urn = posterior_given_survival(problem, state, UrnSet::singleton(urn), s)?;
        let left = problem.marbles(urn) - state.count(urn);
        stage_red_probs.push(p_urn / f64::from(left));
    }

    let survival_curve = survivals[1..].to_vec();
    let expected_cost = survival_curve.iter().sum();
    Ok(CostReport {
        expected_cost,
        survival_curve,
        stage_red_probs,
        unreachable_from,
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

/// Urn contribution `N - (N + 1) φ / 2` of a block, ignoring earlier blocks.
fn block_term(n: u32, phi: f64) -> f64 {
    f64::from(n) - f64::from(n + 1) * phi / 2.0
}

/// Closed-form block-policy cost for independent priors:
/// `Σ_i (N_{vⁱ} - (N_{vⁱ}+1) φ_{vⁱ}/2) ∏_{j<i} (1 - φ_{vʲ})`.
pub fn block_cost_independent(problem: &ValidProblem, block: &BlockPolicy) -> Result<f64> {
    require_kind(problem, PriorKind::Independent)?;
    let phi = problem.prior().marginals();
    let mut carried = 1.0;
    let mut total = 0.0;
    for &urn in &block.order {
        total += block_term(problem.marbles(urn), phi[urn]) * carried;
        carried *= 1.0 - phi[urn];
    }
    Ok(total)
}

/// Closed-form block-policy cost for single-marble priors:
/// `Σ_i (N_{vⁱ} - (N_{vⁱ}+1) φ_{vⁱ}/2) - Σ_{i<j} N_{vʲ} φ_{vⁱ}`.
pub fn block_cost_single_marble(problem: &ValidProblem, block: &BlockPolicy) -> Result<f64> {
    require_kind(problem, PriorKind::SingleMarble)?;
    let phi = problem.prior().marginals();
    let mut earlier_mass = 0.0;
    let mut total = 0.0;
    for &urn in &block.order {
        let n = problem.marbles(urn);
        total += block_term(n, phi[urn]) - f64::from(n) * earlier_mass;
        earlier_mass += phi[urn];
    }
    Ok(total)
}

/// One row of a stage-by-stage trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub stage: usize,
    pub drawn: Vec<u32>,
    pub survival: f64,
    /// Posterior marginal per urn; `None` once the state is unreachable.
    pub marginals: Option<Vec<f64>>,
    /// Posterior pairwise joints `(i, j, P(A_i ∩ A_j | x))` for `i < j`.
    pub pair_joints: Option<Vec<(usize, usize, f64)>>,
    /// Urn commanded at this stage (`None` at the final, exhausted state).
    pub next_urn: Option<usize>,
    pub p_red: Option<f64>,
}

/// Pairwise joints are only listed up to this many urns.
pub const TRACE_PAIR_LIMIT: usize = 8;

/// Posterior summaries at every state `x(0), …, x(N)` along `policy`.
pub fn trace(problem: &ValidProblem, policy: &Policy) -> Result<Vec<TraceRow>> {
    let policy = Policy::new(problem, policy.sequence.clone())?;
    let n = problem.urn_count();
    let states = policy.states(n);
    let mut rows = Vec::with_capacity(states.len());
    for (stage, state) in states.into_iter().enumerate() {
        let s = dynamics::clamp_probability(raw_survival(problem, &state))?;
        let next_urn = policy.sequence.get(stage).copied();
        let reachable = s > VALIDATE_EPS;
        let (marginals, pair_joints, p_red) = if reachable {
            let marginals = dynamics::posterior_marginals(problem, &state)?;
            let pairs = if n <= TRACE_PAIR_LIMIT {
                let mut pairs = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        let p = posterior_given_survival(
                            problem,
                            &state,
                            UrnSet::from_indices([i, j]),
                            s,
                        )?;
                        pairs.push((i, j, p));
                    }
                }
                Some(pairs)
            } else {
                None
            };
            let p_red =
                next_urn.map(|u| marginals[u] / f64::from(problem.marbles(u) - state.count(u)));
            (Some(marginals), pairs, p_red)
        } else {
            (None, None, None)
        };
        rows.push(TraceRow {
            stage,
            drawn: state.drawn().to_vec(),
            survival: s,
            marginals,
            pair_joints,
            next_urn,
            p_red,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PriorModel, Urn};

    fn problem(marbles: &[u32], prior: PriorModel) -> ValidProblem {
        let urns = marbles
            .iter()
            .enumerate()
            .map(|(i, &n)| Urn::new(format!("u{}", i + 1), n))
            .collect();
        Problem::new(urns, prior).unwrap().validated().unwrap()
    }

    fn greedy_example() -> ValidProblem {
        problem(
            &[1, 2],
            PriorModel::independent(vec![9.0 / 16.0, 1.0]).unwrap(),
        )
    }

    #[test]
    fn expansion() {
        let p = greedy_example();
        let b = BlockPolicy::new(&p, vec![1, 0]).unwrap();
        assert_eq!(b.expand(&p).sequence(), &[1, 1, 0]);
        assert_eq!(b.block_starts(&p), vec![0, 2]);
        let b = BlockPolicy::new(&p, vec![0, 1]).unwrap();
        assert_eq!(b.expand(&p).sequence(), &[0, 1, 1]);

        let single = problem(&[4], PriorModel::independent(vec![0.3]).unwrap());
        let b = BlockPolicy::new(&single, vec![0]).unwrap();
        assert_eq!(b.expand(&single).sequence(), &[0, 0, 0, 0]);
    }

    #[test]
    fn greedy_versus_optimal_costs() {
        let p = greedy_example();
        let good = expected_cost(&p, &Policy::parse(&p, "u2,u2,u1").unwrap()).unwrap();
        let greedy = expected_cost(&p, &Policy::parse(&p, "u1,u2,u2").unwrap()).unwrap();
        assert!((good.expected_cost - 0.5).abs() < 1e-12);
        assert!((greedy.expected_cost - 21.0 / 32.0).abs() < 1e-12);
        assert_eq!(greedy.stage_red_probs[0], 9.0 / 16.0);
    }

    #[test]
    fn hopeless_urn_costs_every_draw() {
        let p = problem(&[5], PriorModel::independent(vec![0.0]).unwrap());
        let policy = BlockPolicy::new(&p, vec![0]).unwrap().expand(&p);
        let report = expected_cost(&p, &policy).unwrap();
        assert_eq!(report.expected_cost, 5.0);
        assert_eq!(report.survival_curve, vec![1.0; 5]);
        assert_eq!(report.unreachable_from, None);
    }

    #[test]
    fn unreachable_tail_is_flagged() {
        let p = problem(&[2, 1], PriorModel::independent(vec![1.0, 0.5]).unwrap());
        let report = expected_cost(&p, &Policy::parse(&p, "u1,u1,u2").unwrap()).unwrap();
        assert_eq!(report.unreachable_from, Some(2));
        assert_eq!(report.stage_red_probs[2], 0.0);
        assert!((report.expected_cost - 0.5).abs() < 1e-12);
    }

    #[test]
    fn independent_closed_form_examples() {
        let p = greedy_example();
        let b = BlockPolicy::new(&p, vec![1, 0]).unwrap();
        assert!((block_cost_independent(&p, &b).unwrap() - 0.5).abs() < 1e-12);

        let q = problem(&[1, 1], PriorModel::independent(vec![0.5, 0.5]).unwrap());
        for order in [vec![0, 1], vec![1, 0]] {
            let b = BlockPolicy::new(&q, order).unwrap();
            assert!((block_cost_independent(&q, &b).unwrap() - 0.75).abs() < 1e-12);
        }

        let r = problem(&[2], PriorModel::independent(vec![1.0]).unwrap());
        let b = BlockPolicy::new(&r, vec![0]).unwrap();
        assert!((block_cost_independent(&r, &b).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_marble_closed_form_examples() {
        let p = problem(&[2, 1], PriorModel::single_marble(vec![0.6, 0.4]).unwrap());
        let b21 = BlockPolicy::new(&p, vec![1, 0]).unwrap();
        let b12 = BlockPolicy::new(&p, vec![0, 1]).unwrap();
        assert!((block_cost_single_marble(&p, &b21).unwrap() - 0.9).abs() < 1e-12);
        assert!((block_cost_single_marble(&p, &b12).unwrap() - 1.1).abs() < 1e-12);
        let general21 = expected_cost(&p, &b21.expand(&p)).unwrap().expected_cost;
        assert!((general21 - 0.9).abs() < 1e-12);

        let q = problem(&[3], PriorModel::single_marble(vec![1.0]).unwrap());
        let b = BlockPolicy::new(&q, vec![0]).unwrap();
        assert!((block_cost_single_marble(&q, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_reject_other_kinds() {
        let p = greedy_example();
        let b = BlockPolicy::new(&p, vec![0, 1]).unwrap();
        assert!(matches!(
            block_cost_single_marble(&p, &b),
            Err(Error::WrongKind { .. })
        ));
    }

    #[test]
    fn policy_validation() {
        let p = greedy_example();
        assert!(matches!(
            Policy::parse(&p, "u1,u2"),
            Err(Error::InvalidPolicy(_))
        ));
        assert!(matches!(
            Policy::parse(&p, "u1,u3,u2"),
            Err(Error::UnknownUrn(_))
        ));
        assert!(matches!(
            BlockPolicy::parse(&p, "u1,u1"),
            Err(Error::InvalidPolicy(_))
        ));
        assert!(matches!(
            BlockPolicy::parse(&p, "u2"),
            Err(Error::InvalidPolicy(_))
        ));
        let inter = Policy::parse(&p, "u2,u1,u2").unwrap();
        assert!(!inter.is_block());
        let block = Policy::parse(&p, "u2,u2,u1").unwrap();
        assert_eq!(block.as_block().unwrap().order(), &[1, 0]);
        assert_eq!(block.to_text(&p), "u2,u2,u1");
    }

    #[test]
    fn trace_rows() {
        let p = greedy_example();
        let rows = trace(&p, &Policy::parse(&p, "u1,u2,u2").unwrap()).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].marginals.as_deref(), Some(&[9.0 / 16.0, 1.0][..]));
        assert_eq!(rows[0].next_urn, Some(0));
        assert_eq!(rows[3].next_urn, None);
        assert!(rows[3].marginals.is_none());
    }
}
