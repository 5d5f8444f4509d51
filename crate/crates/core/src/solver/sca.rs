//! Penalized SCA loop and binary recovery.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{audit, total_power, ActivationState, Audit, QosTargets};
use crate::scenario::Scenario;
use crate::solver::subproblem::{assemble_subproblem, solve_subproblem_with, ProblemCounts, SurrogatePoint};
use crate::solver::ipm::IpmSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Subproblem optimum `P_C1`.
    pub penalized_objective: f64,
    /// Exact `P_C` of the relaxed iterate.
    pub power_w: f64,
    pub binarity_gap: f64,
    pub penalty: f64,
    pub counts: ProblemCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub activation: ActivationState,
    pub relaxed_final: ActivationState,
    pub objective_trace: Vec<TraceRow>,
    pub power_w: f64,
    pub iterations: usize,
    pub converged: bool,
    /// A subproblem failed mid-run; the last good iterate was used.
    pub degraded: bool,
    pub feasible: bool,
    pub audit: Audit,
}

impl SolveResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    /// `iteration,penalized_objective,power_w,binarity_gap,penalty`.
    pub fn write_trace_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "penalized_objective", "power_w", "binarity_gap", "penalty"])?;
        for r in &self.objective_trace {
            w.write_record([
                r.iteration.to_string(),
                r.penalized_objective.to_string(),
                r.power_w.to_string(),
                r.binarity_gap.to_string(),
                r.penalty.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the penalized SCA from full activation, then rounds and repairs.
pub fn run_sca(sc: &Scenario, targets: &QosTargets) -> Result<SolveResult> {
    run_sca_with(sc, targets, &IpmSettings::default())
}

pub fn run_sca_with(sc: &Scenario, targets: &QosTargets, settings: &IpmSettings) -> Result<SolveResult> {
    let cfg = &sc.config;
    let on = ActivationState::all_on(sc.s());
    if !audit(sc, targets, &on).feasible {
        return Err(Error::Infeasible("full activation violates the QoS targets".into()));
    }
    let mut state = on;
    let mut penalty = cfg.penalty_init;
    let mut previous: Option<f64> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut degraded = false;

    for iteration in 1..=cfg.max_iterations {
        let point = SurrogatePoint::new(&state, penalty);
        let step = assemble_subproblem(sc, targets, &point)
            .and_then(|sp| solve_subproblem_with(&sp, settings).map(|sol| (sp.counts(), sol)));
        let (counts, (next, objective)) = match step {
            Ok(v) => v,
            Err(e) => {
                log::warn!("SCA iteration {iteration} failed: {e}");
                degraded = true;
                break;
            }
        };
        trace.push(TraceRow {
            iteration,
            penalized_objective: objective,
            power_w: total_power(sc, &next),
            binarity_gap: next.binarity_gap(),
            penalty,
            counts,
        });
        state = next;
        if let Some(prev) = previous {
            if ((objective - prev) / prev).abs() < cfg.tol_eps1 {
                converged = true;
                break;
            }
        }
        previous = Some(objective);
        penalty = (penalty * cfg.penalty_growth).min(cfg.penalty_cap);
    }

    let activation = round_and_repair(sc, targets, &state);
    let report = audit(sc, targets, &activation);
    Ok(SolveResult {
        power_w: report.power_w,
        feasible: report.feasible,
        iterations: trace.len(),
        relaxed_final: state,
        activation,
        objective_trace: trace,
        converged,
        degraded,
        audit: report,
    })
}

/// Thresholds `ā`, `ã` at 0.5, sets `a = min(1, ā + ã)`, then switches on
/// the inactive entry with the largest relaxed value until the exact audit
/// passes. Ties go to the lowest index, `ā` before `ã`.
pub fn round_and_repair(sc: &Scenario, targets: &QosTargets, relaxed: &ActivationState) -> ActivationState {
    let s = relaxed.len();
    let mut bar: Vec<bool> = relaxed.a_bar.iter().map(|&v| v >= 0.5).collect();
    let mut tilde: Vec<bool> = relaxed.a_tilde.iter().map(|&v| v >= 0.5).collect();
    loop {
        let state = ActivationState::from_binary(&bar, &tilde);
        if audit(sc, targets, &state).feasible {
            return state;
        }
        let candidate = (0..2 * s)
            .filter(|&i| if i < s { !bar[i] } else { !tilde[i - s] })
            .map(|i| (i, if i < s { relaxed.a_bar[i] } else { relaxed.a_tilde[i - s] }))
            .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((i, v)),
            });
        match candidate {
            Some((i, _)) if i < s => bar[i] = true,
            Some((i, _)) => tilde[i - s] = true,
            None => return state,
        }
    }
}
