//! Test-only oracles and instance generators.
//!
//! The oracles here never call the library's inclusion-exclusion kernel: they
//! enumerate placements and red-marble positions explicitly, or replay
//! Bayesian updates one draw at a time.

#![allow(dead_code)]

use rand::Rng;
use urn_search::{PriorKind, PriorModel, Problem, Urn, UrnSet, ValidProblem};

pub fn labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("u{i}")).collect()
}

pub fn make(marbles: &[u32], prior: PriorModel) -> ValidProblem {
    let urns = labels(marbles.len())
        .into_iter()
        .zip(marbles)
        .map(|(id, &n)| Urn::new(id, n))
        .collect();
    Problem::new(urns, prior)
        .expect("well-formed")
        .validated()
        .expect("consistent")
}

pub fn independent(marbles: &[u32], phi: &[f64]) -> ValidProblem {
    make(marbles, PriorModel::independent(phi.to_vec()).unwrap())
}

pub fn single(marbles: &[u32], phi: &[f64]) -> ValidProblem {
    make(marbles, PriorModel::single_marble(phi.to_vec()).unwrap())
}

/// General prior generated from an explicit distribution over exact placements.
pub fn general_from_atomic(marbles: &[u32], atomic: &[f64]) -> ValidProblem {
    let n = marbles.len();
    assert_eq!(atomic.len(), 1 << n);
    let phi_of = |s: UrnSet| -> f64 {
        UrnSet::all(n)
            .filter(|t| s.is_subset_of(*t))
            .map(|t| atomic[t.bits() as usize])
            .sum::<f64>()
            // Normalized weights can overshoot 1 by an ulp.
            .min(1.0)
    };
    let marginals = (0..n).map(|i| phi_of(UrnSet::singleton(i))).collect();
    let joints: Vec<(UrnSet, f64)> = UrnSet::all(n)
        .filter(|s| s.len() >= 2)
        .map(|s| (s, phi_of(s)))
        .collect();
    make(marbles, PriorModel::general(marginals, joints).unwrap())
}

/// The three-urn correlated example: all marginals 1/2, all joints 1/3.
pub fn correlated_three() -> ValidProblem {
    let third = 1.0 / 3.0;
    let joints = UrnSet::all(3).filter(|s| s.len() >= 2).map(|s| (s, third));
    make(
        &[1, 1, 1],
        PriorModel::general(vec![0.5; 3], joints).unwrap(),
    )
}

pub fn greedy_example() -> ValidProblem {
    independent(&[1, 2], &[9.0 / 16.0, 1.0])
}

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

pub fn random_marbles<R: Rng>(rng: &mut R, n: usize, max_marbles: u32) -> Vec<u32> {
    (0..n).map(|_| rng.random_range(1..=max_marbles)).collect()
}

pub fn random_independent<R: Rng>(rng: &mut R, max_urns: usize, max_marbles: u32) -> ValidProblem {
    let n = rng.random_range(1..=max_urns);
    let marbles = random_marbles(rng, n, max_marbles);
    let phi: Vec<f64> = (0..n)
        .map(|_| match rng.random_range(0..10) {
            0 => 1.0,
            _ => rng.random_range(0.02..1.0),
        })
        .collect();
    independent(&marbles, &phi)
}

pub fn random_single<R: Rng>(rng: &mut R, max_urns: usize, max_marbles: u32) -> ValidProblem {
    let n = rng.random_range(1..=max_urns);
    let marbles = random_marbles(rng, n, max_marbles);
    let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.02..1.0)).collect();
    // Sometimes the marble is surely present, sometimes possibly absent.
    let mass = if rng.random_bool(0.3) {
        1.0
    } else {
        rng.random_range(0.1..1.0)
    };
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x *= mass / total);
    single(&marbles, &w)
}

/// A random exact-placement distribution; roughly `zero_rate` of placements get no mass.
pub fn random_atomic<R: Rng>(rng: &mut R, n: usize, zero_rate: f64) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..1usize << n)
            .map(|_| {
                if rng.random_bool(zero_rate) {
                    0.0
                } else {
                    rng.random_range(0.0..1.0)
                }
            })
            .collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            return w.into_iter().map(|x| x / total).collect();
        }
    }
}

pub fn random_general<R: Rng>(rng: &mut R, max_urns: usize, max_marbles: u32) -> ValidProblem {
    let n = rng.random_range(1..=max_urns);
    let marbles = random_marbles(rng, n, max_marbles);
    let atomic = random_atomic(rng, n, 0.3);
    general_from_atomic(&marbles, &atomic)
}

/// General prior whose exact-placement probabilities are all positive.
pub fn random_positive_general<R: Rng>(
    rng: &mut R,
    max_urns: usize,
    max_marbles: u32,
) -> ValidProblem {
    let n = rng.random_range(1..=max_urns);
    let marbles = random_marbles(rng, n, max_marbles);
    let w: Vec<f64> = (0..1usize << n)
        .map(|_| rng.random_range(0.05..1.0))
        .collect();
    let total: f64 = w.iter().sum();
    let atomic: Vec<f64> = w.into_iter().map(|x| x / total).collect();
    general_from_atomic(&marbles, &atomic)
}

pub fn random_any<R: Rng>(
    rng: &mut R,
    k: usize,
    max_urns: usize,
    max_marbles: u32,
) -> ValidProblem {
    match k % 3 {
        0 => random_general(rng, max_urns, max_marbles),
        1 => random_independent(rng, max_urns, max_marbles),
        _ => random_single(rng, max_urns, max_marbles),
    }
}

/// A uniformly shuffled valid policy sequence.
pub fn random_sequence<R: Rng>(rng: &mut R, problem: &Problem) -> Vec<usize> {
    let mut seq: Vec<usize> = problem
        .urns()
        .iter()
        .enumerate()
        .flat_map(|(i, u)| std::iter::repeat_n(i, u.marbles as usize))
        .collect();
    for i in (1..seq.len()).rev() {
        let j = rng.random_range(0..=i);
        seq.swap(i, j);
    }
    seq
}

pub fn kind_name(p: &Problem) -> &'static str {
    match p.kind() {
        PriorKind::Independent => "independent",
        PriorKind::SingleMarble => "single",
        PriorKind::General => "general",
    }
}

// ---------------------------------------------------------------------------
// Brute-force oracle: explicit placements and red positions
// ---------------------------------------------------------------------------

/// `Σ_{S ⊇ U} (-1)^{|S|-|U|} φ_S`, summed term by term from `phi`.
pub fn atomic_by_hand(problem: &Problem, subset: UrnSet) -> f64 {
    UrnSet::all(problem.urn_count())
        .filter(|s| subset.is_subset_of(*s))
        .map(|s| {
            let sign = if (s.len() - subset.len()).is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            sign * problem.phi(s).unwrap()
        })
        .sum()
}

/// Every world: (probability, placement, red draw number per urn, 0 if none).
pub fn worlds(problem: &Problem) -> Vec<(f64, UrnSet, Vec<u32>)> {
    let n = problem.urn_count();
    let mut out = Vec::new();
    for placement in UrnSet::all(n) {
        let a = atomic_by_hand(problem, placement).max(0.0);
        if a == 0.0 {
            continue;
        }
        let members: Vec<usize> = placement.iter().collect();
        let combos: u32 = members.iter().map(|&i| problem.marbles(i)).product();
        let weight = a / f64::from(combos);
        for mut code in 0..combos {
            let mut pos = vec![0u32; n];
            for &i in &members {
                let ni = problem.marbles(i);
                pos[i] = code % ni + 1;
                code /= ni;
            }
            out.push((weight, placement, pos));
        }
    }
    out
}

fn unseen(pos: &[u32], counts: &[u32]) -> bool {
    pos.iter().zip(counts).all(|(&p, &x)| p == 0 || p > x)
}

pub fn brute_survival(problem: &Problem, counts: &[u32]) -> f64 {
    worlds(problem)
        .iter()
        .filter(|(_, _, pos)| unseen(pos, counts))
        .map(|(w, _, _)| w)
        .sum()
}

pub fn brute_posterior(problem: &Problem, counts: &[u32], subset: UrnSet) -> f64 {
    let ws = worlds(problem);
    let alive: f64 = ws
        .iter()
        .filter(|(_, _, pos)| unseen(pos, counts))
        .map(|(w, _, _)| w)
        .sum();
    let hit: f64 = ws
        .iter()
        .filter(|(_, pl, pos)| unseen(pos, counts) && subset.is_subset_of(*pl))
        .map(|(w, _, _)| w)
        .sum();
    hit / alive
}

/// Expected blue draws of a full sequence over every world.
pub fn brute_expected_cost(problem: &Problem, sequence: &[usize]) -> f64 {
    worlds(problem)
        .iter()
        .map(|(w, _, pos)| {
            let mut drawn = vec![0u32; problem.urn_count()];
            let mut cost = sequence.len();
            for (t, &u) in sequence.iter().enumerate() {
                drawn[u] += 1;
                if pos[u] == drawn[u] {
                    cost = t;
                    break;
                }
            }
            w * cost as f64
        })
        .sum()
}

// ---------------------------------------------------------------------------
// Sequential-update oracle
// ---------------------------------------------------------------------------

/// Posterior table for every subset, obtained by replaying one Bayesian update
/// per blue draw. `None` once a state is reached with probability zero.
pub fn sequential_posteriors(problem: &Problem, draws: &[usize]) -> Option<Vec<f64>> {
    let n = problem.urn_count();
    let mut table: Vec<f64> = UrnSet::all(n).map(|s| problem.phi(s).unwrap()).collect();
    let mut drawn = vec![0u32; n];
    for &u in draws {
        let left = f64::from(problem.marbles(u) - drawn[u]);
        let p_u = table[1 << u];
        let denom = 1.0 - p_u / left;
        if denom <= 1e-12 {
            return None;
        }
        let bit = 1usize << u;
        table = (0..table.len())
            .map(|s| (table[s] - table[s | bit] / left) / denom)
            .collect();
        drawn[u] += 1;
    }
    Some(table)
}
