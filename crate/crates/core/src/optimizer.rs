//! Optimal policy construction.
//!
//! Two prior families have index rules: independent priors sort urns by
//! ascending `N_i (2 - φ_i) / φ_i`, single-marble priors by descending
//! `φ_i / N_i`. For everything else block orderings are enumerated, which is
//! exact because some block policy is always optimal. Full enumeration over
//! interleaved policies is kept as an oracle that certifies that fact.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::raw_survival;
use crate::dynamics::SearchState;
use crate::error::{Error, Result};
use crate::model::{PriorKind, Problem, ValidProblem};
use crate::policy::{
    block_cost_independent, block_cost_single_marble, expected_cost, BlockPolicy, Policy,
};

/// Absolute cost tolerance for counting ties.
pub const TIE_TOL: f64 = 1e-9;

/// Default cap on block orderings (`10!`).
pub const DEFAULT_BLOCK_CAP: u128 = 3_628_800;

/// Default cap on interleaved policies for full enumeration.
pub const DEFAULT_FULL_CAP: u128 = 12_600;

/// Orderings are enumerated with closed-form costs to count ties exactly up to this many urns.
const EXACT_TIE_URNS: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SortedIndependent,
    SortedSingle,
    BlockEnum,
    FullEnum,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::SortedIndependent => "sorted-independent",
            Method::SortedSingle => "sorted-single",
            Method::BlockEnum => "block-enum",
            Method::FullEnum => "full-enum",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_policy: Policy,
    pub best_block: Option<BlockPolicy>,
    pub expected_cost: f64,
    pub method: Method,
    /// Candidates whose cost is within [`TIE_TOL`] of the optimum.
    pub ties: u64,
    /// `false` when `ties` is a lower bound rather than an exact count.
    pub ties_exact: bool,
    /// Full enumeration only: whether an optimal policy is a block policy.
    pub block_certified: Option<bool>,
    pub warnings: Vec<String>,
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

fn factorial_saturating(n: usize) -> u128 {
    (1..=n as u128)
        .try_fold(1u128, |acc, k| acc.checked_mul(k))
        .unwrap_or(u128::MAX)
}

/// Number of valid interleaved policies, `N! / ∏ N_i!`, saturating.
pub fn full_policy_count(problem: &Problem) -> u128 {
    // Product of binomials C(n_1 + … + n_k, n_k).
    let mut total: u128 = 1;
    let mut placed: u128 = 0;
    for urn in problem.urns() {
        for k in 1..=u128::from(urn.marbles) {
            placed += 1;
            total = match total.checked_mul(placed) {
                Some(v) => v / k,
                None => return u128::MAX,
            };
        }
    }
    total
}

/// Count of block orderings, `|V|!`.
pub fn block_order_count(problem: &Problem) -> u128 {
    factorial_saturating(problem.urn_count())
}

fn same_index(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Tie count for an index-sorted ordering: exact via closed-form enumeration
/// for small rosters, otherwise the product of equal-index group factorials.
fn sorted_ties<F>(problem: &ValidProblem, sorted_keys: &[f64], cost: F) -> (u64, bool)
where
    F: Fn(&BlockPolicy) -> f64 + Sync,
{
    let n = problem.urn_count();
    if n <= EXACT_TIE_URNS {
        let costs = block_costs(n, |order| {
            cost(&BlockPolicy::new(problem, order.to_vec()).expect("permutation"))
        });
        let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
        let ties = costs.iter().filter(|&&c| c <= best + TIE_TOL).count() as u64;
        return (ties, true);
    }
    let mut ties: u128 = 1;
    let mut run = 1usize;
    for w in sorted_keys.windows(2) {
        if same_index(w[0], w[1]) {
            run += 1;
        } else {
            ties = ties.saturating_mul(factorial_saturating(run));
            run = 1;
        }
    }
    ties = ties.saturating_mul(factorial_saturating(run));
    (u64::try_from(ties).unwrap_or(u64::MAX), false)
}

fn finish_sorted(
    problem: &ValidProblem,
    order: Vec<usize>,
    keys: Vec<f64>,
    method: Method,
    warnings: Vec<String>,
) -> Result<OptimizationResult> {
    let block = BlockPolicy::new(problem, order)?;
    let policy = block.expand(problem);
    let report = expected_cost(problem, &policy)?;
    let (ties, ties_exact) = match method {
        Method::SortedIndependent => sorted_ties(problem, &keys, |b| {
            block_cost_independent(problem, b).expect("kind checked")
        }),
        _ => sorted_ties(problem, &keys, |b| {
            block_cost_single_marble(problem, b).expect("kind checked")
        }),
    };
    Ok(OptimizationResult {
        best_policy: policy,
        best_block: Some(block),
        expected_cost: report.expected_cost,
        method,
        ties,
        ties_exact,
        block_certified: None,
        warnings,
    })
}

/// Independence index `N_i (2 - φ_i) / φ_i`; infinite when `φ_i = 0`.
pub fn independence_index(marbles: u32, phi: f64) -> f64 {
    if phi == 0.0 {
        f64::INFINITY
    } else {
        f64::from(marbles) * (2.0 - phi) / phi
    }
}

/// Single-marble index `φ_i / N_i`.
pub fn single_marble_index(marbles: u32, phi: f64) -> f64 {
    phi / f64::from(marbles)
}

/// Block ordering by ascending independence index, ties by urn index.
/// Urns with `φ_i = 0` go last, by ascending marble count.
pub fn optimal_block_independent(problem: &ValidProblem) -> Result<OptimizationResult> {
    require_kind(problem, PriorKind::Independent)?;
    let phi = problem.prior().marginals();
    let mut order: Vec<usize> = (0..problem.urn_count()).collect();
    let index = |i: usize| independence_index(problem.marbles(i), phi[i]);
    order.sort_by(|&a, &b| {
        let (ka, kb) = (index(a), index(b));
        match (ka.is_infinite(), kb.is_infinite()) {
            (true, true) => problem.marbles(a).cmp(&problem.marbles(b)),
            _ => ka.partial_cmp(&kb).unwrap_or(Ordering::Equal),
        }
        .then(a.cmp(&b))
    });
    let warnings = order
        .iter()
        .filter(|&&i| phi[i] == 0.0)
        .map(|&i| {
            format!(
                "urn `{}` has zero probability; its index is undefined and it is searched last",
                problem.label(i)
            )
        })
        .collect();
    let keys = order.iter().map(|&i| index(i)).collect();
    finish_sorted(problem, order, keys, Method::SortedIndependent, warnings)
}

/// Block ordering by descending `φ_i / N_i`, ties by urn index.
pub fn optimal_block_single_marble(problem: &ValidProblem) -> Result<OptimizationResult> {
    require_kind(problem, PriorKind::SingleMarble)?;
    let phi = problem.prior().marginals();
    let mut order: Vec<usize> = (0..problem.urn_count()).collect();
    let index = |i: usize| single_marble_index(problem.marbles(i), phi[i]);
    order.sort_by(|&a, &b| {
        index(b)
            .partial_cmp(&index(a))
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let warnings = order
        .iter()
        .filter(|&&i| phi[i] == 0.0)
        .map(|&i| {
            format!(
                "urn `{}` has zero probability and is searched last",
                problem.label(i)
            )
        })
        .collect();
    let keys = order.iter().map(|&i| index(i)).collect();
    finish_sorted(problem, order, keys, Method::SortedSingle, warnings)
}

/// Expected cost of a raw draw sequence, summing survival after each draw.
fn sequence_cost(problem: &Problem, sequence: &[u8]) -> f64 {
    let mut state = SearchState::fresh(problem.urn_count());
    let mut total = 0.0;
    for &urn in sequence {
        state.advance(urn as usize);
        total += raw_survival(problem, &state).clamp(0.0, 1.0);
    }
    total
}

/// Rearranges `items` into the next lexicographic permutation; `false` after the last.
fn next_permutation<T: Ord>(items: &mut [T]) -> bool {
    if items.len() < 2 {
        return false;
    }
    let mut i = items.len() - 1;
    while i > 0 && items[i - 1] >= items[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = items.len() - 1;
    while items[j] <= items[i - 1] {
        j -= 1;
    }
    items.swap(i - 1, j);
    items[i..].reverse();
    true
}

/// Every distinct permutation of `start` (sorted ascending), flattened.
fn permutations_flat(mut items: Vec<u8>) -> Vec<u8> {
    items.sort_unstable();
    let mut flat = items.clone();
    while next_permutation(&mut items) {
        flat.extend_from_slice(&items);
    }
    flat
}

/// Costs of all block orderings in lexicographic order.
fn block_costs<F>(n: usize, cost: F) -> Vec<f64>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    let flat = permutations_flat((0..n as u8).collect());
    flat.par_chunks(n.max(1))
        .map(|chunk| {
            let order: Vec<usize> = chunk.iter().map(|&u| u as usize).collect();
            cost(&order)
        })
        .collect()
}

/// Minimum cost, the lexicographically first candidate within [`TIE_TOL`] of
/// it, and the number of such candidates.
fn select_best(costs: &[f64]) -> (usize, u64) {
    let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut first = None;
    let mut ties = 0u64;
    for (k, &c) in costs.iter().enumerate() {
        if c <= best + TIE_TOL {
            first.get_or_insert(k);
            ties += 1;
        }
    }
    (first.expect("at least one candidate"), ties)
}

/// Exhaustive search over block orderings; exact for every prior kind.
pub fn optimal_block_enum(problem: &ValidProblem, cap: u128) -> Result<OptimizationResult> {
    let count = block_order_count(problem);
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    let n = problem.urn_count();
    let flat = permutations_flat((0..n as u8).collect());
    let costs: Vec<f64> = flat
        .par_chunks(n)
        .map(|order| {
            let seq: Vec<u8> = order
                .iter()
                .flat_map(|&u| std::iter::repeat_n(u, problem.marbles(u as usize) as usize))
                .collect();
            sequence_cost(problem, &seq)
        })
        .collect();
    let (best, ties) = select_best(&costs);
    let order: Vec<usize> = flat[best * n..(best + 1) * n]
        .iter()
        .map(|&u| u as usize)
        .collect();
    let block = BlockPolicy::new(problem, order)?;
    let policy = block.expand(problem);
    let report = expected_cost(problem, &policy)?;
    Ok(OptimizationResult {
        best_policy: policy,
        best_block: Some(block),
        expected_cost: report.expected_cost,
        method: Method::BlockEnum,
        ties,
        ties_exact: true,
        block_certified: None,
        warnings: Vec::new(),
    })
}

/// One enumerated policy with its exact cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedPolicy {
    pub policy: Policy,
    pub expected_cost: f64,
    pub is_block: bool,
    /// Within [`TIE_TOL`] of the optimum.
    pub optimal: bool,
}

/// Every valid interleaved policy, ranked by cost (ties in lexicographic order).
pub fn rank_policies(problem: &ValidProblem, cap: u128) -> Result<Vec<RankedPolicy>> {
    let count = full_policy_count(problem);
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    let len = problem.total_marbles() as usize;
    let multiset: Vec<u8> = problem
        .urns()
        .iter()
        .enumerate()
        .flat_map(|(i, u)| std::iter::repeat_n(i as u8, u.marbles as usize))
        .collect();
    let flat = permutations_flat(multiset);
    let costs: Vec<f64> = flat
        .par_chunks(len)
        .map(|seq| sequence_cost(problem, seq))
        .collect();
    let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut ranked: Vec<RankedPolicy> = flat
        .chunks(len)
        .zip(&costs)
        .map(|(seq, &c)| {
            let policy = Policy::new(problem, seq.iter().map(|&u| u as usize).collect())
                .expect("enumerated policies are valid");
            RankedPolicy {
                is_block: policy.is_block(),
                policy,
                expected_cost: c,
                optimal: c <= best + TIE_TOL,
            }
        })
        .collect();
    // Stable: equal costs keep lexicographic order; optimal-tier first.
    ranked.sort_by(|a, b| {
        b.optimal
            .cmp(&a.optimal)
            .then_with(|| match (a.optimal, b.optimal) {
                (true, true) => Ordering::Equal,
                _ => a.expected_cost.total_cmp(&b.expected_cost),
            })
    });
    Ok(ranked)
}

/// Exhaustive search over every valid interleaved policy.
pub fn optimal_full_enum(problem: &ValidProblem, cap: u128) -> Result<OptimizationResult> {
    let ranked = rank_policies(problem, cap)?;
    let optimal: Vec<&RankedPolicy> = ranked.iter().filter(|r| r.optimal).collect();
    let best = optimal[0];
    let best_block = optimal
        .iter()
        .find(|r| r.is_block)
        .and_then(|r| r.policy.as_block());
    let report = expected_cost(problem, &best.policy)?;
    Ok(OptimizationResult {
        best_policy: best.policy.clone(),
        block_certified: Some(best_block.is_some()),
        best_block,
        expected_cost: report.expected_cost,
        method: Method::FullEnum,
        ties: optimal.len() as u64,
        ties_exact: true,
        warnings: Vec::new(),
    })
}

/// Sorted index rule for independent and single-marble priors, block enumeration otherwise.
pub fn optimize_auto(problem: &ValidProblem, block_cap: u128) -> Result<OptimizationResult> {
    match problem.kind() {
        PriorKind::Independent => optimal_block_independent(problem),
        PriorKind::SingleMarble => optimal_block_single_marble(problem),
        PriorKind::General => optimal_block_enum(problem, block_cap),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PriorModel, Urn};
    use crate::subset::UrnSet;

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
    fn permutations_in_lexicographic_order() {
        let flat = permutations_flat(vec![0, 1, 1]);
        assert_eq!(flat, vec![0, 1, 1, 1, 0, 1, 1, 1, 0]);
        assert_eq!(permutations_flat(vec![2, 0, 1]).len(), 18);
    }

    #[test]
    fn policy_counts() {
        let p = problem(
            &[4, 3, 2, 1],
            PriorModel::independent(vec![0.5; 4]).unwrap(),
        );
        assert_eq!(full_policy_count(&p), 12_600);
        let q = problem(
            &[3, 3, 3, 3],
            PriorModel::independent(vec![0.5; 4]).unwrap(),
        );
        assert_eq!(full_policy_count(&q), 369_600);
        assert_eq!(block_order_count(&q), 24);
    }

    #[test]
    fn independent_sort_prefers_certain_urn() {
        let p = greedy_example();
        let r = optimal_block_independent(&p).unwrap();
        assert_eq!(r.best_block.unwrap().order(), &[1, 0]);
        assert!((r.expected_cost - 0.5).abs() < 1e-12);
        assert_eq!(r.ties, 1);
        assert_eq!(independence_index(1, 9.0 / 16.0), 23.0 / 9.0);
        assert_eq!(independence_index(2, 1.0), 2.0);
    }

    #[test]
    fn independent_sort_by_index() {
        let p = problem(&[3, 1], PriorModel::independent(vec![0.75, 0.25]).unwrap());
        let r = optimal_block_independent(&p).unwrap();
        assert_eq!(r.best_block.unwrap().order(), &[0, 1]);
        let full = optimal_full_enum(&p, DEFAULT_FULL_CAP).unwrap();
        assert!((full.expected_cost - r.expected_cost).abs() < 1e-9);
    }

    #[test]
    fn symmetric_urns_tie() {
        let p = problem(&[2, 2, 2], PriorModel::independent(vec![0.4; 3]).unwrap());
        let r = optimal_block_independent(&p).unwrap();
        assert_eq!(r.best_block.unwrap().order(), &[0, 1, 2]);
        assert_eq!(r.ties, 6);
        let q = problem(&[2, 2], PriorModel::single_marble(vec![0.3, 0.3]).unwrap());
        assert_eq!(optimal_block_single_marble(&q).unwrap().ties, 2);
    }

    #[test]
    fn zero_probability_urns_go_last() {
        let p = problem(
            &[3, 1, 2],
            PriorModel::independent(vec![0.0, 0.5, 0.0]).unwrap(),
        );
        let r = optimal_block_independent(&p).unwrap();
        assert_eq!(r.best_block.unwrap().order(), &[1, 2, 0]);
        assert_eq!(r.warnings.len(), 2);
        let e = optimal_block_enum(&p, DEFAULT_BLOCK_CAP).unwrap();
        assert!((e.expected_cost - r.expected_cost).abs() < 1e-12);
    }

    #[test]
    fn single_marble_sort() {
        let p = problem(&[2, 1], PriorModel::single_marble(vec![0.6, 0.4]).unwrap());
        let r = optimal_block_single_marble(&p).unwrap();
        assert_eq!(r.best_block.unwrap().order(), &[1, 0]);
        assert!((r.expected_cost - 0.9).abs() < 1e-12);

        let q = problem(&[1, 1], PriorModel::single_marble(vec![0.7, 0.2]).unwrap());
        let r = optimal_block_single_marble(&q).unwrap();
        assert_eq!(r.best_block.unwrap().order(), &[0, 1]);
        let e = optimal_block_enum(&q, DEFAULT_BLOCK_CAP).unwrap();
        assert_eq!(e.best_block.unwrap().order(), &[0, 1]);
    }

    #[test]
    fn block_enum_on_correlated_urns() {
        let third = 1.0 / 3.0;
        let joints = UrnSet::all(3)
            .filter(|s| s.len() >= 2)
            .map(|s| (s, third))
            .collect::<Vec<_>>();
        let p = problem(
            &[1, 1, 1],
            PriorModel::general(vec![0.5; 3], joints).unwrap(),
        );
        let r = optimal_block_enum(&p, DEFAULT_BLOCK_CAP).unwrap();
        assert_eq!(r.ties, 6);
        assert_eq!(r.best_block.unwrap().order(), &[0, 1, 2]);
        assert_eq!(r.method, Method::BlockEnum);
    }

    #[test]
    fn full_enum_ranks_interleavings() {
        let p = greedy_example();
        let ranked = rank_policies(&p, DEFAULT_FULL_CAP).unwrap();
        assert_eq!(ranked.len(), 3);
        assert_eq!(ranked[0].policy.sequence(), &[1, 1, 0]);
        assert!(ranked[0].is_block);
        assert_eq!(ranked[1].policy.sequence(), &[0, 1, 1]);
        assert!((ranked[1].expected_cost - 21.0 / 32.0).abs() < 1e-12);
        assert!(!ranked[2].is_block);
        assert!((ranked[2].expected_cost - 23.0 / 32.0).abs() < 1e-12);
        let r = optimal_full_enum(&p, DEFAULT_FULL_CAP).unwrap();
        assert_eq!(r.block_certified, Some(true));
        assert_eq!(r.ties, 1);
    }

    #[test]
    fn caps_are_enforced() {
        let p = problem(
            &[3, 3, 3, 3],
            PriorModel::independent(vec![0.5; 4]).unwrap(),
        );
        assert!(matches!(
            optimal_full_enum(&p, DEFAULT_FULL_CAP),
            Err(Error::CapExceeded { count: 369_600, .. })
        ));
        assert!(matches!(
            optimal_block_enum(&p, 10),
            Err(Error::CapExceeded { count: 24, .. })
        ));
    }

    #[test]
    fn single_urn_has_one_policy() {
        let p = problem(&[3], PriorModel::independent(vec![0.5]).unwrap());
        let r = optimal_full_enum(&p, DEFAULT_FULL_CAP).unwrap();
        assert_eq!(r.best_policy.sequence(), &[0, 0, 0]);
        assert_eq!(r.ties, 1);
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let p = greedy_example();
        assert!(matches!(
            optimal_block_single_marble(&p),
            Err(Error::WrongKind { .. })
        ));
    }
}
