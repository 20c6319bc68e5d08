//! Seeded Monte Carlo execution of policies.
//!
//! Each trial samples an exact red-marble placement from the inclusion-exclusion
//! distribution, then, for every urn holding a red marble, the draw number at
//! which it surfaces (uniform over `1..=N_i`). Trial `i` draws from ChaCha8
//! stream `i` of the run's seed, so results do not depend on how trials are
//! split across threads.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ValidProblem;
use crate::policy::Policy;
use crate::subset::UrnSet;

const CHUNK: u64 = 4096;

/// Categorical sampler over exact placements.
#[derive(Clone, Debug)]
pub struct PlacementSampler {
    outcomes: Vec<UrnSet>,
    cumulative: Vec<f64>,
}

impl PlacementSampler {
    pub fn new(problem: &ValidProblem) -> Self {
        let mut outcomes = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (bits, &p) in problem.atomic_table().iter().enumerate() {
            if p > 0.0 {
                acc += p;
                outcomes.push(UrnSet::from_bits(bits as u32));
                cumulative.push(acc);
            }
        }
        PlacementSampler {
            outcomes,
            cumulative,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> UrnSet {
        let total = *self.cumulative.last().expect("validated prior has mass");
        let target = rng.random::<f64>() * total;
        let k = self.cumulative.partition_point(|&c| c <= target);
        self.outcomes[k.min(self.outcomes.len() - 1)]
    }
}

/// Draws one exact placement with probability `atomic(U)`.
pub fn sample_placement<R: Rng + ?Sized>(problem: &ValidProblem, rng: &mut R) -> UrnSet {
    PlacementSampler::new(problem).sample(rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Blue draws made before the search stopped.
    pub cost: u32,
    pub found: bool,
}

fn execute<R: Rng + ?Sized>(
    problem: &ValidProblem,
    sampler: &PlacementSampler,
    policy: &Policy,
    rng: &mut R,
) -> TrialOutcome {
    let placement = sampler.sample(rng);
    let mut red_at = vec![0u32; problem.urn_count()];
    for urn in placement.iter() {
        red_at[urn] = rng.random_range(1..=problem.marbles(urn));
    }
    let mut drawn = vec![0u32; problem.urn_count()];
    for (t, &urn) in policy.sequence().iter().enumerate() {
        drawn[urn] += 1;
        if drawn[urn] == red_at[urn] {
            return TrialOutcome {
                cost: t as u32,
                found: true,
            };
        }
    }
    TrialOutcome {
        cost: problem.total_marbles(),
        found: false,
    }
}

/// Runs `policy` once against a freshly sampled placement.
pub fn run_trial<R: Rng + ?Sized>(
    problem: &ValidProblem,
    policy: &Policy,
    rng: &mut R,
) -> Result<TrialOutcome> {
    let policy = Policy::new(problem, policy.sequence().to_vec())?;
    Ok(execute(
        problem,
        &PlacementSampler::new(problem),
        &policy,
        rng,
    ))
}

/// The generator used for trial `index` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub trials: u64,
    pub seed: u64,
    pub mean_cost: f64,
    /// Sample standard deviation over `√trials`.
    pub std_error: f64,
    pub found_rate: f64,
    /// Cost value to number of trials.
    pub histogram: BTreeMap<u32, u64>,
}

impl SimulationReport {
    /// Fraction of trials still searching after `k + 1` draws, `k = 0..N`.
    pub fn empirical_survival(&self, total_marbles: u32) -> Vec<f64> {
        (0..total_marbles)
            .map(|k| {
                let alive: u64 = self.histogram.range(k + 1..).map(|(_, &c)| c).sum();
                alive as f64 / self.trials as f64
            })
            .collect()
    }
}

/// Runs `trials` independent trials of `policy`.
///
/// Aggregates are formed from integer counts only, so the report is
/// bit-identical for a given `(problem, policy, trials, seed)`.
pub fn simulate(
    problem: &ValidProblem,
    policy: &Policy,
    trials: u64,
    seed: u64,
) -> Result<SimulationReport> {
    if trials == 0 {
        return Err(Error::NoTrials);
    }
    let policy = Policy::new(problem, policy.sequence().to_vec())?;
    let sampler = PlacementSampler::new(problem);
    let bins = problem.total_marbles() as usize + 1;
    let base = ChaCha8Rng::seed_from_u64(seed);

    let chunks = trials.div_ceil(CHUNK);
    let (counts, found) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut counts = vec![0u64; bins];
            let mut found = 0u64;
            for i in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let mut rng = base.clone();
                rng.set_stream(i);
                let outcome = execute(problem, &sampler, &policy, &mut rng);
                counts[outcome.cost as usize] += 1;
                found += u64::from(outcome.found);
            }
            (counts, found)
        })
        .reduce(
            || (vec![0u64; bins], 0u64),
            |(mut a, fa), (b, fb)| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                (a, fa + fb)
            },
        );

    let n = u128::from(trials);
    let (sum, sum_sq) = counts
        .iter()
        .enumerate()
        .fold((0u128, 0u128), |(s, q), (cost, &c)| {
            let (cost, c) = (cost as u128, u128::from(c));
            (s + cost * c, q + cost * cost * c)
        });
    let mean_cost = sum as f64 / trials as f64;
    let std_error = if trials > 1 {
        // n Σc² - (Σc)² is exact in integers.
        let spread = (n * sum_sq - sum * sum) as f64;
        let variance = spread / (trials as f64 * (trials - 1) as f64);
        (variance / trials as f64).sqrt()
    } else {
        0.0
    };
    let histogram = counts
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .map(|(cost, c)| (cost as u32, c))
        .collect();
    Ok(SimulationReport {
        trials,
        seed,
        mean_cost,
        std_error,
        found_rate: found as f64 / trials as f64,
        histogram,
    })
}
