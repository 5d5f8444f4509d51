//! Comparison schemes: full activation, random subsets and an exhaustive
//! oracle over all binary states.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{audit, ActivationState, Audit, QosTargets};
use crate::scenario::Scenario;

/// Largest subarray count the oracle accepts.
pub const ORACLE_MAX_SUBARRAYS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    AllSubarrays,
    Random,
    Oracle,
}

impl Scheme {
    pub fn tag(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::AllSubarrays => "all_subarrays",
            Scheme::Random => "random",
            Scheme::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub scheme: Scheme,
    pub activation: ActivationState,
    pub power_w: f64,
    pub feasible: bool,
    /// States audited by the oracle.
    pub evaluations: Option<u64>,
    pub audit: Audit,
}

impl BaselineResult {
    fn new(sc: &Scenario, targets: &QosTargets, scheme: Scheme, activation: ActivationState) -> Self {
        let audit = audit(sc, targets, &activation);
        Self { scheme, power_w: audit.power_w, feasible: audit.feasible, evaluations: None, activation, audit }
    }
}

pub fn all_subarrays(sc: &Scenario, targets: &QosTargets) -> BaselineResult {
    BaselineResult::new(sc, targets, Scheme::AllSubarrays, ActivationState::all_on(sc.s()))
}

/// Activates a uniform random subset of `n_start` subarrays for every role,
/// growing the subset by one with a fresh draw while the audit fails.
pub fn random_activation<R: Rng + ?Sized>(
    sc: &Scenario,
    targets: &QosTargets,
    rng: &mut R,
    n_start: usize,
) -> BaselineResult {
    let s = sc.s();
    let mut n = n_start.clamp(1, s);
    loop {
        let mut on = vec![false; s];
        for i in sample(rng, s, n) {
            on[i] = true;
        }
        let result = BaselineResult::new(sc, targets, Scheme::Random, ActivationState::from_binary(&on, &on));
        if result.feasible || n == s {
            return result;
        }
        n += 1;
    }
}

fn decode(code: u64, s: usize) -> ActivationState {
    let bit = |i: usize| code >> i & 1 == 1;
    let bar: Vec<bool> = (0..s).map(|i| bit(2 * s - 1 - i)).collect();
    let tilde: Vec<bool> = (0..s).map(|i| bit(s - 1 - i)).collect();
    ActivationState::from_binary(&bar, &tilde)
}

/// Minimum-power feasible state over all `4^S` pairs `(ā, ã)`; ties go to
/// the lexicographically smallest `[ā, ã, a]`.
pub fn exhaustive_oracle(sc: &Scenario, targets: &QosTargets) -> Result<BaselineResult> {
    let s = sc.s();
    if s > ORACLE_MAX_SUBARRAYS {
        return Err(Error::TooLarge(s, ORACLE_MAX_SUBARRAYS));
    }
    let total = 1u64 << (2 * s);
    let better = |a: &(f64, ActivationState), b: &(f64, ActivationState)| {
        a.0 < b.0 || (a.0 == b.0 && a.1.to_vector() < b.1.to_vector())
    };
    let best = (0..total)
        .into_par_iter()
        .filter_map(|code| {
            let state = decode(code, s);
            let report = audit(sc, targets, &state);
            report.feasible.then_some((report.power_w, state))
        })
        .reduce_with(|a, b| if better(&b, &a) { b } else { a });
    let (_, state) = best.ok_or_else(|| Error::Infeasible("no binary state meets the QoS targets".into()))?;
    let mut result = BaselineResult::new(sc, targets, Scheme::Oracle, state);
    result.evaluations = Some(total);
    Ok(result)
}
