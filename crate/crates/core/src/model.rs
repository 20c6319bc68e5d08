//! Search instances: urns, marble counts and the joint prior over where red
//! marbles sit.
//!
//! A prior assigns `φ_U`, the probability that every urn in `U` holds a red
//! marble, to each subset `U` (with `φ_∅ = 1`). The probability of an exact
//! placement, red marbles in precisely the urns of `U`, follows by
//! inclusion-exclusion:
//!
//! ```text
//! atomic(U) = Σ_{S ⊇ U} (-1)^{|S|-|U|} φ_S
//! ```
//!
//! [`Problem`] is what the builder produces; [`ValidProblem`] is a problem whose
//! prior passed [`Problem::validate`] and is the only input the dynamics,
//! evaluation, optimisation and simulation code accepts.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subset::{UrnSet, MAX_URNS};

/// Tolerance for negative atomic probabilities and other consistency checks.
pub const VALIDATE_EPS: f64 = 1e-9;

/// An urn and the number of marbles it holds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Urn {
    pub id: String,
    pub marbles: u32,
}

impl Urn {
    pub fn new(id: impl Into<String>, marbles: u32) -> Self {
        Urn {
            id: id.into(),
            marbles,
        }
    }
}

/// Correlation structure of the prior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PriorKind {
    /// `φ_U = ∏_{i∈U} φ_i`.
    #[serde(rename = "independent")]
    Independent,
    /// At most one red marble overall: `φ_U = 0` whenever `|U| > 1`.
    #[serde(rename = "single")]
    SingleMarble,
    /// Arbitrary joint probabilities.
    #[serde(rename = "general")]
    General,
}

impl fmt::Display for PriorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriorKind::Independent => "independent",
            PriorKind::SingleMarble => "single-marble",
            PriorKind::General => "general",
        })
    }
}

/// Joint red-marble probabilities `φ_U` over urn subsets.
///
/// The full table of `2^n` values is materialised at construction so lookups
/// are constant time.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorModel {
    kind: PriorKind,
    marginals: Vec<f64>,
    joints: BTreeMap<UrnSet, f64>,
    table: Vec<f64>,
}

fn check_probability(what: impl FnOnce() -> String, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::ProbabilityOutOfRange {
            what: what(),
            value,
        })
    }
}

impl PriorModel {
    pub fn independent(marginals: Vec<f64>) -> Result<Self> {
        Self::with_joints(PriorKind::Independent, marginals, BTreeMap::new())
    }

    pub fn single_marble(marginals: Vec<f64>) -> Result<Self> {
        Self::with_joints(PriorKind::SingleMarble, marginals, BTreeMap::new())
    }

    /// General prior; any subset of size ≥ 2 not listed in `joints` gets `φ = 0`.
    pub fn general<I>(marginals: Vec<f64>, joints: I) -> Result<Self>
    where
        I: IntoIterator<Item = (UrnSet, f64)>,
    {
        let mut map = BTreeMap::new();
        for (set, p) in joints {
            if set.len() < 2 {
                return Err(Error::JointTooSmall(set.to_string()));
            }
            if map.insert(set, p).is_some() {
                return Err(Error::DuplicateJoint(set.to_string()));
            }
        }
        Self::with_joints(PriorKind::General, marginals, map)
    }

    fn with_joints(
        kind: PriorKind,
        marginals: Vec<f64>,
        joints: BTreeMap<UrnSet, f64>,
    ) -> Result<Self> {
        let n = marginals.len();
        if n == 0 {
            return Err(Error::NoUrns);
        }
        if n > MAX_URNS {
            return Err(Error::TooManyUrns(n));
        }
        for (i, &p) in marginals.iter().enumerate() {
            check_probability(|| format!("marginal of urn {i}"), p)?;
        }
        let universe = UrnSet::full(n);
        for (&set, &p) in &joints {
            if !set.is_subset_of(universe) {
                return Err(Error::UrnIndexOutOfRange {
                    index: set.span() - 1,
                    count: n,
                });
            }
            check_probability(|| format!("joint over {set}"), p)?;
        }

        let size = 1usize << n;
        let mut table = vec![0.0; size];
        table[0] = 1.0;
        for bits in 1..size {
            let set = UrnSet::from_bits(bits as u32);
            table[bits] = match kind {
                PriorKind::Independent => {
                    // Ascending-index product, shared with `phi` for bit-exact agreement.
                    let high = set.span() - 1;
                    table[set.without(high).bits() as usize] * marginals[high]
                }
                PriorKind::SingleMarble => {
                    if set.len() == 1 {
                        marginals[set.span() - 1]
                    } else {
                        0.0
                    }
                }
                PriorKind::General => {
                    if set.len() == 1 {
                        marginals[set.span() - 1]
                    } else {
                        joints.get(&set).copied().unwrap_or(0.0)
                    }
                }
            };
        }
        Ok(PriorModel {
            kind,
            marginals,
            joints,
            table,
        })
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn urn_count(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[f64] {
        &self.marginals
    }

    /// Explicitly specified joints (general priors only).
    pub fn joints(&self) -> &BTreeMap<UrnSet, f64> {
        &self.joints
    }

    /// `φ_U` without range checking. `subset` must lie within the urn range.
    #[inline]
    pub(crate) fn phi_raw(&self, subset: UrnSet) -> f64 {
        self.table[subset.bits() as usize]
    }

    pub(crate) fn table(&self) -> &[f64] {
        &self.table
    }
}

/// A search instance: an ordered urn roster and its prior.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    urns: Vec<Urn>,
    prior: PriorModel,
    total_marbles: u32,
}

impl Problem {
    /// Assembles a problem from urns and a prior indexed the same way.
    /// Structural checks only; see [`Problem::validate`] for consistency.
    pub fn new(urns: Vec<Urn>, prior: PriorModel) -> Result<Self> {
        if urns.is_empty() {
            return Err(Error::NoUrns);
        }
        if urns.len() > MAX_URNS {
            return Err(Error::TooManyUrns(urns.len()));
        }
        if prior.urn_count() != urns.len() {
            return Err(Error::MarginalCount {
                expected: urns.len(),
                got: prior.urn_count(),
            });
        }
        let mut seen = HashSet::new();
        for urn in &urns {
            if !seen.insert(urn.id.as_str()) {
                return Err(Error::DuplicateLabel(urn.id.clone()));
            }
            if urn.marbles == 0 {
                return Err(Error::ZeroMarbles(urn.id.clone()));
            }
        }
        let total_marbles = urns.iter().map(|u| u.marbles).sum();
        Ok(Problem {
            urns,
            prior,
            total_marbles,
        })
    }

    pub fn urns(&self) -> &[Urn] {
        &self.urns
    }

    pub fn urn_count(&self) -> usize {
        self.urns.len()
    }

    pub fn marbles(&self, urn: usize) -> u32 {
        self.urns[urn].marbles
    }

    pub fn total_marbles(&self) -> u32 {
        self.total_marbles
    }

    pub fn prior(&self) -> &PriorModel {
        &self.prior
    }

    pub fn kind(&self) -> PriorKind {
        self.prior.kind
    }

    /// Set of all urn indices.
    pub fn universe(&self) -> UrnSet {
        UrnSet::full(self.urns.len())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.urns.iter().position(|u| u.id == id)
    }

    pub fn label(&self, urn: usize) -> &str {
        &self.urns[urn].id
    }

    /// Human-readable `{a,b}` form using urn labels.
    pub fn describe_set(&self, set: UrnSet) -> String {
        let labels: Vec<&str> = set.iter().map(|i| self.label(i)).collect();
        format!("{{{}}}", labels.join(","))
    }

    pub(crate) fn check_subset(&self, subset: UrnSet) -> Result<()> {
        if subset.is_subset_of(self.universe()) {
            Ok(())
        } else {
            Err(Error::UrnIndexOutOfRange {
                index: subset.span() - 1,
                count: self.urn_count(),
            })
        }
    }

    /// Prior probability `φ_U` that every urn of `subset` holds a red marble.
    pub fn phi(&self, subset: UrnSet) -> Result<f64> {
        self.check_subset(subset)?;
        Ok(self.prior.phi_raw(subset))
    }

    /// Raw inclusion-exclusion probabilities for every exact placement, indexed by bitmask.
    /// Uses the superset Möbius transform, `O(n 2^n)`.
    fn raw_atomic_table(&self) -> Vec<f64> {
        let n = self.urn_count();
        let mut a = self.prior.table().to_vec();
        for i in 0..n {
            let bit = 1usize << i;
            for s in 0..a.len() {
                if s & bit == 0 {
                    a[s] -= a[s | bit];
                }
            }
        }
        a
    }

    /// Checks that the prior describes a genuine probability law.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for (i, &p) in self.prior.marginals.iter().enumerate() {
            if p == 0.0 {
                report.warnings.push(Warning::ZeroMarginal { urn: i });
            }
        }

        let atomic = self.raw_atomic_table();
        let mut sum = 0.0;
        for (bits, &p) in atomic.iter().enumerate() {
            sum += p;
            if p < -VALIDATE_EPS {
                report.violations.push(Violation::NegativeAtomic {
                    subset: UrnSet::from_bits(bits as u32),
                    probability: p,
                });
            }
        }
        if (sum - 1.0).abs() > VALIDATE_EPS {
            report.violations.push(Violation::AtomicSum { sum });
        }

        let n = self.urn_count();
        let table = self.prior.table();
        for bits in 0..table.len() {
            let subset = UrnSet::from_bits(bits as u32);
            for i in 0..n {
                if subset.contains(i) {
                    continue;
                }
                let superset = subset.with(i);
                let (p_sub, p_sup) = (table[bits], table[superset.bits() as usize]);
                if p_sup > p_sub + VALIDATE_EPS {
                    report.violations.push(Violation::Nesting {
                        subset,
                        superset,
                        subset_probability: p_sub,
                        superset_probability: p_sup,
                    });
                }
            }
        }

        if self.kind() == PriorKind::SingleMarble {
            let total: f64 = self.prior.marginals.iter().sum();
            if total > 1.0 + VALIDATE_EPS {
                report
                    .violations
                    .push(Violation::SingleMarbleMass { total });
            }
        }
        report
    }

    /// Validates and, on success, wraps the problem for use by the dynamics.
    pub fn validated(self) -> Result<ValidProblem> {
        let report = self.validate();
        if !report.is_valid() {
            let summary: Vec<String> = report
                .violations
                .iter()
                .take(3)
                .map(|v| v.describe(&self))
                .collect();
            let more = report.violations.len().saturating_sub(3);
            let mut msg = summary.join("; ");
            if more > 0 {
                msg.push_str(&format!("; and {more} more"));
            }
            return Err(Error::InvalidModel(msg));
        }
        let atomic = self
            .raw_atomic_table()
            .into_iter()
            .map(|p| p.clamp(0.0, 1.0))
            .collect();
        Ok(ValidProblem {
            problem: self,
            atomic,
            warnings: report.warnings,
        })
    }

    /// Label-keyed interchange form of this problem.
    pub fn to_file(&self) -> ProblemFile {
        let marginals = self
            .urns
            .iter()
            .zip(&self.prior.marginals)
            .map(|(u, &p)| (u.id.clone(), p))
            .collect();
        let joints = self
            .prior
            .joints
            .iter()
            .map(|(set, &prob)| JointSpec {
                urns: set.iter().map(|i| self.urns[i].id.clone()).collect(),
                prob,
            })
            .collect();
        ProblemFile {
            urns: self
                .urns
                .iter()
                .map(|u| UrnSpec {
                    id: u.id.clone(),
                    marbles: u.marbles,
                })
                .collect(),
            prior: PriorSpec {
                kind: self.kind(),
                marginals,
                joints,
            },
        }
    }
}

/// A consistency failure found by [`Problem::validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NegativeAtomic {
        subset: UrnSet,
        probability: f64,
    },
    AtomicSum {
        sum: f64,
    },
    /// `φ_superset > φ_subset` although `subset ⊂ superset`.
    Nesting {
        subset: UrnSet,
        superset: UrnSet,
        subset_probability: f64,
        superset_probability: f64,
    },
    SingleMarbleMass {
        total: f64,
    },
}

impl Violation {
    pub fn describe(&self, problem: &Problem) -> String {
        match *self {
            Violation::NegativeAtomic {
                subset,
                probability,
            } => format!(
                "probability of red marbles in exactly {} is {probability} < 0",
                problem.describe_set(subset)
            ),
            Violation::AtomicSum { sum } => {
                format!("exact-placement probabilities sum to {sum}, not 1")
            }
            Violation::Nesting {
                subset,
                superset,
                subset_probability,
                superset_probability,
            } => format!(
                "phi{} = {superset_probability} exceeds phi{} = {subset_probability}",
                problem.describe_set(superset),
                problem.describe_set(subset)
            ),
            Violation::SingleMarbleMass { total } => {
                format!("single-marble marginals sum to {total} > 1")
            }
        }
    }
}

/// Non-fatal observations about a prior.
#[derive(Clone, Debug, PartialEq)]
pub enum Warning {
    /// The urn can never hold the red marble.
    ZeroMarginal { urn: usize },
}

impl Warning {
    pub fn describe(&self, problem: &Problem) -> String {
        match *self {
            Warning::ZeroMarginal { urn } => {
                format!("urn `{}` has zero prior probability", problem.label(urn))
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Warning>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Probability of one exact red-marble placement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AtomicOutcome {
    pub subset: UrnSet,
    pub probability: f64,
}

/// A [`Problem`] whose prior passed validation.
///
/// Caches the exact-placement distribution, with values in `[-ε, 0)` clamped to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidProblem {
    problem: Problem,
    atomic: Vec<f64>,
    warnings: Vec<Warning>,
}

impl ValidProblem {
    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn into_inner(self) -> Problem {
        self.problem
    }

    pub fn warnings(&self) -> &[Warning] {
        &self.warnings
    }

    /// Inclusion-exclusion probability of each exact placement, one entry per subset.
    pub fn atomic_outcomes(&self) -> Vec<AtomicOutcome> {
        self.atomic
            .iter()
            .enumerate()
            .map(|(bits, &probability)| AtomicOutcome {
                subset: UrnSet::from_bits(bits as u32),
                probability,
            })
            .collect()
    }

    /// Probability that red marbles sit in exactly the urns of `subset`.
    pub fn atomic(&self, subset: UrnSet) -> Result<f64> {
        self.problem.check_subset(subset)?;
        Ok(self.atomic[subset.bits() as usize])
    }

    pub(crate) fn atomic_table(&self) -> &[f64] {
        &self.atomic
    }
}

impl Deref for ValidProblem {
    type Target = Problem;

    fn deref(&self) -> &Problem {
        &self.problem
    }
}

// ---------------------------------------------------------------------------
// Interchange format
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UrnSpec {
    pub id: String,
    pub marbles: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub urns: Vec<String>,
    pub prob: f64,
}

/// Label-keyed prior description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub kind: PriorKind,
    pub marginals: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub joints: Vec<JointSpec>,
}

impl PriorSpec {
    pub fn new<I, S>(kind: PriorKind, marginals: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        PriorSpec {
            kind,
            marginals: marginals.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            joints: Vec::new(),
        }
    }

    pub fn joint<I, S>(mut self, urns: I, prob: f64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.joints.push(JointSpec {
            urns: urns.into_iter().map(Into::into).collect(),
            prob,
        });
        self
    }
}

/// The JSON problem file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub urns: Vec<UrnSpec>,
    pub prior: PriorSpec,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem file serializes")
    }

    pub fn build(&self) -> Result<Problem> {
        let urns: Vec<(&str, u32)> = self
            .urns
            .iter()
            .map(|u| (u.id.as_str(), u.marbles))
            .collect();
        build_problem(&urns, &self.prior)
    }
}

/// Builds a problem from labelled urns and a label-keyed prior.
///
/// Performs structural checks only; consistency is left to [`Problem::validate`].
pub fn build_problem<S: AsRef<str>>(urns: &[(S, u32)], prior: &PriorSpec) -> Result<Problem> {
    if urns.is_empty() {
        return Err(Error::NoUrns);
    }
    if urns.len() > MAX_URNS {
        return Err(Error::TooManyUrns(urns.len()));
    }
    let roster: Vec<Urn> = urns
        .iter()
        .map(|(id, n)| Urn::new(id.as_ref(), *n))
        .collect();
    let index = |label: &str| -> Result<usize> {
        roster
            .iter()
            .position(|u| u.id == label)
            .ok_or_else(|| Error::UnknownUrn(label.to_string()))
    };

    let mut checked = HashSet::new();
    for urn in &roster {
        if !checked.insert(urn.id.as_str()) {
            return Err(Error::DuplicateLabel(urn.id.clone()));
        }
        if urn.marbles == 0 {
            return Err(Error::ZeroMarbles(urn.id.clone()));
        }
    }

    let mut marginals = vec![None; roster.len()];
    for (label, &p) in &prior.marginals {
        let i = index(label)?;
        check_probability(|| format!("marginal of `{label}`"), p)?;
        marginals[i] = Some(p);
    }
    let marginals: Vec<f64> = marginals
        .into_iter()
        .zip(&roster)
        .map(|(p, u)| p.ok_or_else(|| Error::MissingMarginal(u.id.clone())))
        .collect::<Result<_>>()?;

    let model = match prior.kind {
        PriorKind::Independent | PriorKind::SingleMarble if !prior.joints.is_empty() => {
            return Err(Error::JointsNotAllowed)
        }
        PriorKind::Independent => PriorModel::independent(marginals)?,
        PriorKind::SingleMarble => PriorModel::single_marble(marginals)?,
        PriorKind::General => {
            let mut joints = Vec::with_capacity(prior.joints.len());
            for joint in &prior.joints {
                let mut set = UrnSet::EMPTY;
                for label in &joint.urns {
                    set = set.with(index(label)?);
                }
                if set.len() < 2 {
                    return Err(Error::JointTooSmall(joint.urns.join(",")));
                }
                check_probability(
                    || format!("joint over {}", joint.urns.join(",")),
                    joint.prob,
                )?;
                joints.push((set, joint.prob));
            }
            PriorModel::general(marginals, joints)?
        }
    };
    Problem::new(roster, model)
}
