//! Seeded Monte Carlo experiments with CSV output and a JSON manifest.
//!
//! Jobs run on a rayon pool; results are gathered in (sweep point, seed)
//! order before anything is written, so the bytes on disk never depend on the
//! worker count.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{all_subarrays, exhaustive_oracle, random_activation, BaselineResult, Scheme};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::metrics::derive_qos_targets;
use crate::rng::{stream, Stream};
use crate::scenario::Scenario;
use crate::solver::{run_sca, SolveResult};

/// Largest subarray count for which the harness runs the oracle.
pub const HARNESS_ORACLE_MAX_SUBARRAYS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    #[serde(rename = "convergence")]
    Convergence,
    #[serde(rename = "power_vs_S")]
    PowerVsS,
    #[serde(rename = "power_vs_users")]
    PowerVsUsers,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Convergence => "convergence",
            Experiment::PowerVsS => "power_vs_S",
            Experiment::PowerVsUsers => "power_vs_users",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "convergence" => Ok(Experiment::Convergence),
            "power_vs_s" => Ok(Experiment::PowerVsS),
            "power_vs_users" => Ok(Experiment::PowerVsUsers),
            _ => Err(Error::Config(format!("unknown experiment {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::Config(format!("unknown profile {s:?}"))),
        }
    }
}

/// Values swept by an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    /// `(M_x, M_y)` at fixed `M_s`.
    Arrays { m_s: usize, shapes: Vec<(usize, usize)> },
    /// Subarray counts at fixed `M_t`.
    Subarrays(Vec<usize>),
    /// `(K_N, K_F)` pairs.
    Users(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub profile: Profile,
    pub base: SystemConfig,
    pub sweep: Sweep,
    pub seeds: Vec<u64>,
    pub with_oracle: bool,
}

impl ExperimentSpec {
    /// Applies the profile's array sizes and sweep values to `base`.
    pub fn new(experiment: Experiment, profile: Profile, base: SystemConfig, seeds: Vec<u64>, with_oracle: bool) -> Result<Self> {
        let mut base = base;
        let sweep = match (experiment, profile) {
            (Experiment::Convergence, Profile::Desk) => Sweep::Arrays { m_s: 4, shapes: vec![(8, 6), (8, 8), (16, 5)] },
            (Experiment::Convergence, Profile::Paper) => {
                Sweep::Arrays { m_s: 50, shapes: vec![(20, 20), (25, 20), (30, 20)] }
            }
            (Experiment::PowerVsS, Profile::Desk) => {
                base = reshape(&base, 8, 8, 4)?;
                Sweep::Subarrays(vec![4, 8, 16])
            }
            (Experiment::PowerVsS, Profile::Paper) => {
                base = reshape(&base, 30, 20, 12)?;
                Sweep::Subarrays(vec![4, 6, 10, 12, 20])
            }
            (Experiment::PowerVsUsers, Profile::Desk) => {
                base = reshape(&base, 8, 8, 8)?;
                Sweep::Users(user_mixes())
            }
            (Experiment::PowerVsUsers, Profile::Paper) => {
                base = reshape(&base, 20, 20, 8)?;
                Sweep::Users(user_mixes())
            }
        };
        let spec = Self { experiment, profile, base, sweep, seeds, with_oracle };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        for cfg in self.points()? {
            cfg.validate()?;
        }
        Ok(())
    }

    /// Base configuration of every sweep point, in sweep order.
    pub fn points(&self) -> Result<Vec<SystemConfig>> {
        match &self.sweep {
            Sweep::Arrays { m_s, shapes } => shapes
                .iter()
                .map(|&(m_x, m_y)| {
                    if (m_x * m_y) % m_s != 0 {
                        return Err(Error::Config(format!("M_s = {m_s} does not divide {m_x} x {m_y}")));
                    }
                    reshape(&self.base, m_x, m_y, m_x * m_y / m_s)
                })
                .collect(),
            Sweep::Subarrays(list) => list.iter().map(|&s| self.base.with_subarrays(s)).collect(),
            Sweep::Users(list) => Ok(list.iter().map(|&(k_n, k_f)| self.base.with_users(k_n, k_f)).collect()),
        }
    }
}

fn user_mixes() -> Vec<(usize, usize)> {
    vec![(0, 2), (1, 1), (2, 0), (1, 3), (2, 2), (3, 1)]
}

fn reshape(base: &SystemConfig, m_x: usize, m_y: usize, s: usize) -> Result<SystemConfig> {
    let m_t = m_x * m_y;
    if s == 0 || m_t % s != 0 {
        return Err(Error::Config(format!("S = {s} does not divide M_t = {m_t}")));
    }
    let mut cfg = base.clone();
    cfg.m_x = m_x;
    cfg.m_y = m_y;
    cfg.s = s;
    cfg.m_s = m_t / s;
    Ok(cfg)
}

/// Every scheme evaluated on one seeded instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub seed: u64,
    pub proposed: SolveResult,
    pub all_subarrays: BaselineResult,
    pub random: BaselineResult,
    pub oracle: Option<BaselineResult>,
}

/// Builds the seeded instance for `base` and runs every scheme on it.
pub fn run_instance(base: &SystemConfig, seed: u64, with_oracle: bool) -> Result<InstanceOutcome> {
    let cfg = base.with_random_placement(seed);
    let sc = Scenario::build(&cfg)?;
    let targets = derive_qos_targets(&sc);
    let proposed = run_sca(&sc, &targets)?;
    let all_on = all_subarrays(&sc, &targets);
    let mut rng = stream(seed, Stream::RandomBaseline);
    let random = random_activation(&sc, &targets, &mut rng, proposed.activation.active_count().max(1));
    let oracle = if with_oracle && sc.s() <= HARNESS_ORACLE_MAX_SUBARRAYS {
        Some(exhaustive_oracle(&sc, &targets)?)
    } else {
        None
    };
    Ok(InstanceOutcome { seed, proposed, all_subarrays: all_on, random, oracle })
}

/// Runs `f` over `jobs` on `workers` threads (all cores when `None`),
/// returning results in job order.
fn run_jobs<J, T, F>(jobs: &[J], workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| jobs.par_iter().map(&f).collect());
    results.into_iter().collect()
}

/// One output file: name and CSV text.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub text: String,
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn scheme_rows(o: &InstanceOutcome) -> Vec<(Scheme, f64, bool, usize)> {
    let mut v = vec![
        (Scheme::Proposed, o.proposed.power_w, o.proposed.feasible, o.proposed.activation.active_count()),
        (Scheme::AllSubarrays, o.all_subarrays.power_w, o.all_subarrays.feasible, o.all_subarrays.activation.active_count()),
        (Scheme::Random, o.random.power_w, o.random.feasible, o.random.activation.active_count()),
    ];
    if let Some(or) = &o.oracle {
        v.push((Scheme::Oracle, or.power_w, or.feasible, or.activation.active_count()));
    }
    v
}

/// Runs an experiment and returns its tables; nothing touches the disk.
pub fn run_experiment(spec: &ExperimentSpec, workers: Option<usize>) -> Result<Vec<Table>> {
    let points = spec.points()?;
    let jobs: Vec<(usize, u64)> =
        (0..points.len()).flat_map(|p| spec.seeds.iter().map(move |&s| (p, s))).collect();
    let with_oracle = spec.with_oracle && spec.experiment != Experiment::Convergence;
    let outcomes: Vec<InstanceOutcome> = if spec.experiment == Experiment::Convergence {
        run_jobs(&jobs, workers, |&(p, seed)| {
            let cfg = points[p].with_random_placement(seed);
            let sc = Scenario::build(&cfg)?;
            let targets = derive_qos_targets(&sc);
            let proposed = run_sca(&sc, &targets)?;
            let all_on = all_subarrays(&sc, &targets);
            Ok(InstanceOutcome { seed, proposed, random: all_on.clone(), all_subarrays: all_on, oracle: None })
        })?
    } else {
        run_jobs(&jobs, workers, |&(p, seed)| run_instance(&points[p], seed, with_oracle))?
    };

    let label = |p: usize| -> Vec<String> {
        let c = &points[p];
        match spec.experiment {
            Experiment::Convergence => vec![c.m_t().to_string()],
            Experiment::PowerVsS => vec![c.s.to_string()],
            Experiment::PowerVsUsers => vec![c.k_n.to_string(), c.k_f.to_string()],
        }
    };
    let label_header: Vec<&str> = match spec.experiment {
        Experiment::Convergence => vec!["M_t"],
        Experiment::PowerVsS => vec!["S"],
        Experiment::PowerVsUsers => vec!["K_N", "K_F"],
    };

    if spec.experiment == Experiment::Convergence {
        let mut rows = Vec::new();
        for (&(p, seed), o) in jobs.iter().zip(&outcomes) {
            for t in &o.proposed.objective_trace {
                let mut r = label(p);
                r.extend([
                    seed.to_string(),
                    t.iteration.to_string(),
                    t.penalized_objective.to_string(),
                    t.power_w.to_string(),
                    t.binarity_gap.to_string(),
                    t.penalty.to_string(),
                ]);
                rows.push(r);
            }
        }
        let header = ["M_t", "seed", "iteration", "P_C1", "P_C", "binarity_gap", "penalty"];
        let mut summary = Vec::new();
        for (&(p, seed), o) in jobs.iter().zip(&outcomes) {
            let mut r = label(p);
            r.extend([
                seed.to_string(),
                o.proposed.iterations.to_string(),
                o.proposed.converged.to_string(),
                o.proposed.power_w.to_string(),
                o.all_subarrays.power_w.to_string(),
            ]);
            summary.push(r);
        }
        let summary_header = ["M_t", "seed", "iterations", "converged", "final_power_w", "all_subarrays_power_w"];
        return Ok(vec![
            Table { name: "convergence.csv".into(), text: csv_text(&header, &rows)? },
            Table { name: "convergence_runs.csv".into(), text: csv_text(&summary_header, &summary)? },
        ]);
    }

    let mut run_rows = Vec::new();
    for (&(p, seed), o) in jobs.iter().zip(&outcomes) {
        for (scheme, power, feasible, active) in scheme_rows(o) {
            let mut r = label(p);
            r.extend([
                seed.to_string(),
                scheme.tag().to_string(),
                power.to_string(),
                feasible.to_string(),
                active.to_string(),
            ]);
            run_rows.push(r);
        }
    }
    let mut run_header = label_header.clone();
    run_header.extend(["seed", "scheme", "power_w", "feasible", "active_subarrays"]);

    let mut summary = Vec::new();
    for p in 0..points.len() {
        let per_point: Vec<&InstanceOutcome> =
            jobs.iter().zip(&outcomes).filter(|((q, _), _)| *q == p).map(|(_, o)| o).collect();
        for scheme in [Scheme::Proposed, Scheme::AllSubarrays, Scheme::Random, Scheme::Oracle] {
            let powers: Vec<f64> = per_point
                .iter()
                .flat_map(|o| scheme_rows(o))
                .filter(|(s, ..)| *s == scheme)
                .map(|(_, power, ..)| power)
                .collect();
            if powers.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&powers);
            let mut r = label(p);
            r.extend([scheme.tag().to_string(), mean.to_string(), std.to_string(), powers.len().to_string()]);
            summary.push(r);
        }
    }
    let mut summary_header = label_header;
    summary_header.extend(["scheme", "mean_power_w", "std_power_w", "runs"]);
    let name = spec.experiment.name();
    Ok(vec![
        Table { name: format!("{name}.csv"), text: csv_text(&summary_header, &summary)? },
        Table { name: format!("{name}_runs.csv"), text: csv_text(&run_header, &run_rows)? },
    ])
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: Experiment,
    pub profile: Profile,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub with_oracle: bool,
    pub files: Vec<FileDigest>,
    /// Digest over the file digests in order.
    pub content_digest: String,
    pub version: String,
}

pub fn manifest(spec: &ExperimentSpec, tables: &[Table]) -> Manifest {
    let files: Vec<FileDigest> =
        tables.iter().map(|t| FileDigest { name: t.name.clone(), sha256: sha256_hex(t.text.as_bytes()) }).collect();
    let joined: String = files.iter().map(|f| format!("{}  {}\n", f.sha256, f.name)).collect();
    Manifest {
        experiment: spec.experiment,
        profile: spec.profile,
        config_sha256: sha256_hex(spec.base.to_json().as_bytes()),
        seeds: spec.seeds.clone(),
        with_oracle: spec.with_oracle,
        files,
        content_digest: sha256_hex(joined.as_bytes()),
        version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// Runs the experiment and writes its CSV files plus `manifest.json` to
/// `out_dir`. Returns the written paths.
pub fn write_experiment(spec: &ExperimentSpec, out_dir: &Path, workers: Option<usize>) -> Result<Vec<PathBuf>> {
    let tables = run_experiment(spec, workers)?;
    fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();
    for t in &tables {
        let path = out_dir.join(&t.name);
        fs::write(&path, &t.text)?;
        paths.push(path);
    }
    let m = manifest(spec, &tables);
    let path = out_dir.join(format!("{}_manifest.json", spec.experiment.name()));
    fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")?;
    paths.push(path);
    Ok(paths)
}

/// Parses `a..b` (half-open), `a..=b`, or a comma list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seeds {text:?}"));
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    if let Some((a, b)) = text.split_once("..=") {
        let (a, b) = (num(a)?, num(b)?);
        return if a <= b { Ok((a..=b).collect()) } else { Err(bad()) };
    }
    if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        return if a < b { Ok((a..b).collect()) } else { Err(bad()) };
    }
    text.split(',').map(num).collect()
}
