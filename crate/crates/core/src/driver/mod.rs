//! Penetration sweeps and daily time series over Monte Carlo PV scenarios,
//! with per-run records, summary metrics and file output.

mod analysis;
mod config;
mod output;

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use analysis::{
    aggregate, classify_trend, detect_reverse_flow, unbalance_factor, Aggregates, BusTrend, FlowFlags, LevelAggregate,
    PccAggregate, SlackAbsorption, Trend,
};
pub use config::{parse_list, AttachmentSpec, Inputs, Mode, RunConfig};
pub use output::{emit, write_scenarios};

use crate::coupler::{CoSimResult, CoSimSystem, TraceRecord};
use crate::error::{Error, Result};
use crate::feeder::FeederModel;
use crate::netmodel::{phases_to_sequence, sequence_branches};
use crate::oracle::{compare, solve_unified, UnifiedSolution};
use crate::scenarios::{derive_seed, generate, ScenarioSet};

/// Which model produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Cosim,
    Oracle,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Model::Cosim => "cosim",
            Model::Oracle => "oracle",
        })
    }
}

/// PCC values of one transmission bus: voltages and the power of all
/// attachments at that bus summed, per-unit, system phase order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PccRecord {
    pub bus: i64,
    pub voltage: [Complex64; 3],
    pub power: [Complex64; 3],
}

/// Outcome of one (scenario, level, hour) run. Failed runs carry an error
/// and no solution values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: usize,
    pub level: u32,
    pub hour: usize,
    pub model: Model,
    /// Fixed-point iterations (co-simulation) or Z-bus iterations (oracle).
    pub iterations: usize,
    /// Final boundary error (co-simulation) or nodal mismatch (oracle).
    pub residual: f64,
    pub pcc: Vec<PccRecord>,
    pub slack_power: Complex64,
    /// Total active power at each branch's from end, network branch order.
    pub branch_p: Vec<f64>,
    pub error: Option<String>,
    pub error_tag: Option<String>,
    pub wall_ms: f64,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn key(&self) -> (usize, u32, usize) {
        (self.scenario, self.level, self.hour)
    }

    fn failed(key: (usize, u32, usize), model: Model, iterations: usize, err: &Error, wall_ms: f64) -> Self {
        Self {
            scenario: key.0,
            level: key.1,
            hour: key.2,
            model,
            iterations,
            residual: f64::NAN,
            pcc: Vec::new(),
            slack_power: Complex64::new(f64::NAN, f64::NAN),
            branch_p: Vec::new(),
            error: Some(err.to_string()),
            error_tag: Some(err.tag().to_string()),
            wall_ms,
        }
    }
}

/// Co-simulation vs oracle PCC voltage difference for one run and bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRecord {
    pub scenario: usize,
    pub level: u32,
    pub hour: usize,
    pub bus: i64,
    pub cosim_v1: f64,
    pub oracle_v1: f64,
    pub diff: f64,
    pub cosim_angle_deg: f64,
    pub oracle_angle_deg: f64,
    pub pass: bool,
}

/// Everything a sweep produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub mode: Mode,
    pub master_seed: u64,
    pub n_scenarios: usize,
    pub levels: Vec<u32>,
    pub hours: Vec<usize>,
    pub compare_threshold: f64,
    /// Convergence tolerances of the two models, reported with comparisons.
    pub cosim_tol: f64,
    pub oracle_tol: f64,
    pub pcc_buses: Vec<i64>,
    pub branches: Vec<(i64, i64)>,
    /// No-PV runs, one per hour, level 0.
    pub baselines: Vec<RunRecord>,
    pub records: Vec<RunRecord>,
    pub comparisons: Vec<CompareRecord>,
    /// Comparison failures (either model failed) keyed by run.
    pub compare_failures: Vec<(usize, u32, usize, String)>,
    pub traces: Vec<TraceRecord>,
}

impl ResultSet {
    pub fn aggregates(&self) -> Aggregates {
        aggregate(self)
    }

    pub fn failures(&self) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(|r| !r.is_ok())
    }
}

/// Groups per-attachment boundary values by bus, summing powers.
pub fn pcc_by_bus(items: impl IntoIterator<Item = (i64, [Complex64; 3], [Complex64; 3])>) -> Vec<PccRecord> {
    let mut out: Vec<PccRecord> = Vec::new();
    for (bus, voltage, power) in items {
        match out.iter_mut().find(|r| r.bus == bus) {
            Some(r) => {
                for p in 0..3 {
                    r.power[p] += power[p];
                }
            }
            None => out.push(PccRecord { bus, voltage, power }),
        }
    }
    out.sort_by_key(|r| r.bus);
    out
}

fn pcc_buses(system: &CoSimSystem) -> Vec<i64> {
    let mut b: Vec<i64> = system.attachments.iter().map(|a| a.bus).collect();
    b.sort_unstable();
    b.dedup();
    b
}

fn cosim_record(key: (usize, u32, usize), res: &CoSimResult, wall_ms: f64) -> RunRecord {
    RunRecord {
        scenario: key.0,
        level: key.1,
        hour: key.2,
        model: Model::Cosim,
        iterations: res.fpi_iterations,
        residual: res.final_error(),
        pcc: pcc_by_bus(res.final_state().pcc.iter().map(|p| (p.bus, p.voltage, p.power))),
        slack_power: res.transmission.slack_power,
        branch_p: res.transmission.branch_flows.iter().map(|b| b.from_total().re).collect(),
        error: None,
        error_tag: None,
        wall_ms,
    }
}

/// From-end active power of every branch for a phase-frame solution.
fn oracle_branch_p(system: &CoSimSystem, us: &UnifiedSolution) -> Vec<f64> {
    let v: Vec<[Complex64; 3]> = us.bus_voltages.iter().map(|&v| phases_to_sequence(v).to_array()).collect();
    sequence_branches(&system.net)
        .iter()
        .map(|br| {
            (0..3)
                .map(|seq| {
                    let (i_f, _) = br.end_currents(seq, &v[br.from], &v[br.to]);
                    (v[br.from][seq] * i_f.conj()).re
                })
                .sum()
        })
        .collect()
}

fn oracle_record(key: (usize, u32, usize), system: &CoSimSystem, us: &UnifiedSolution, wall_ms: f64) -> RunRecord {
    RunRecord {
        scenario: key.0,
        level: key.1,
        hour: key.2,
        model: Model::Oracle,
        iterations: us.iterations,
        residual: us.mismatch,
        pcc: pcc_by_bus(us.pcc.iter().map(|p| (p.bus, p.voltage, p.power))),
        slack_power: us.slack_power,
        branch_p: oracle_branch_p(system, us),
        error: None,
        error_tag: None,
        wall_ms,
    }
}

struct JobOutput {
    record: RunRecord,
    trace: Vec<TraceRecord>,
    comparisons: Vec<CompareRecord>,
    compare_failure: Option<String>,
}

/// Scenario sets for every attachment; attachment `i` draws from
/// `derive_seed(master_seed, i)`.
pub fn scenario_sets(cfg: &RunConfig, system: &CoSimSystem) -> Result<Vec<ScenarioSet>> {
    system
        .attachments
        .iter()
        .enumerate()
        .map(|(i, a)| {
            generate(
                &a.feeder,
                &cfg.levels,
                cfg.n_scenarios,
                derive_seed(cfg.master_seed, i as u64),
                cfg.placement,
                &cfg.factors,
            )
        })
        .collect()
}

fn run_job(
    cfg: &RunConfig,
    inputs: &Inputs,
    sets: &[ScenarioSet],
    key: (usize, u32, usize),
) -> Result<JobOutput> {
    let system = &inputs.system;
    let (scenario, level, hour) = key;
    let scen: Vec<_> = if level == 0 {
        vec![None; sets.len()]
    } else {
        sets.iter()
            .map(|s| {
                s.get(scenario, level)
                    .map(Some)
                    .ok_or_else(|| Error::Mismatch(format!("no scenario {scenario} at level {level}")))
            })
            .collect::<Result<_>>()?
    };
    // Scenario application errors are configuration errors, not run failures.
    let feeders: Vec<FeederModel> = system.feeders_for(hour, &scen, &inputs.profile)?;
    let step = format!("s{scenario}/L{level}/h{hour}");
    let mut out = JobOutput {
        record: RunRecord::failed(key, Model::Cosim, 0, &Error::Mismatch("not run".into()), 0.0),
        trace: Vec::new(),
        comparisons: Vec::new(),
        compare_failure: None,
    };

    let mut cosim = None;
    if cfg.mode != Mode::Oracle {
        let t = Instant::now();
        let res = system.run_step(&feeders, &cfg.cosim);
        let ms = t.elapsed().as_secs_f64() * 1e3;
        match res {
            Ok(r) => {
                out.record = cosim_record(key, &r, ms);
                if cfg.trace {
                    out.trace = r.trace(&step);
                }
                cosim = Some(r);
            }
            Err(e) => {
                log::warn!("{step}: {e}");
                let iterations = match &e {
                    Error::FpiNonConvergence { iterations, history, .. } => {
                        if cfg.trace {
                            out.trace = history.iter().map(|s| TraceRecord::new(&step, s, None)).collect();
                        }
                        *iterations
                    }
                    _ => 0,
                };
                out.record = RunRecord::failed(key, Model::Cosim, iterations, &e, ms);
            }
        }
    }
    if cfg.mode != Mode::Cosim {
        let t = Instant::now();
        let res = solve_unified(system, &feeders, &cfg.oracle);
        let ms = t.elapsed().as_secs_f64() * 1e3;
        match (cfg.mode, res) {
            (Mode::Oracle, Ok(us)) => out.record = oracle_record(key, system, &us, ms),
            (Mode::Oracle, Err(e)) => {
                log::warn!("{step}: {e}");
                out.record = RunRecord::failed(key, Model::Oracle, 0, &e, ms);
            }
            (_, Ok(us)) => match &cosim {
                Some(cs) => {
                    let report = compare(cs, &us, cfg.compare_threshold)?;
                    let mut seen = Vec::new();
                    for row in report.rows {
                        if seen.contains(&row.bus) {
                            continue;
                        }
                        seen.push(row.bus);
                        out.comparisons.push(CompareRecord {
                            scenario,
                            level,
                            hour,
                            bus: row.bus,
                            cosim_v1: row.cosim_v1,
                            oracle_v1: row.oracle_v1,
                            diff: row.diff,
                            cosim_angle_deg: row.cosim_angle_deg,
                            oracle_angle_deg: row.oracle_angle_deg,
                            pass: row.diff < cfg.compare_threshold,
                        });
                    }
                    out.comparisons.sort_by_key(|c| c.bus);
                }
                None => out.compare_failure = Some("co-simulation failed".into()),
            },
            (_, Err(e)) => {
                log::warn!("{step}: oracle: {e}");
                out.compare_failure = Some(format!("oracle: {e}"));
            }
        }
    }
    Ok(out)
}

/// Runs every (scenario, level, hour) of the configuration plus one no-PV
/// baseline per hour. Solver failures are recorded per run; configuration
/// and data errors abort.
pub fn run(cfg: &RunConfig) -> Result<ResultSet> {
    let inputs = cfg.load_inputs()?;
    run_with(cfg, &inputs)
}

/// [`run`] with already-loaded inputs.
pub fn run_with(cfg: &RunConfig, inputs: &Inputs) -> Result<ResultSet> {
    cfg.validate()?;
    let sets = scenario_sets(cfg, &inputs.system)?;
    let mut levels = cfg.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    let mut hours = cfg.hours.clone();
    hours.sort_unstable();
    hours.dedup();

    let mut keys: Vec<(usize, u32, usize)> = hours.iter().map(|&h| (0, 0, h)).collect();
    for s in 0..cfg.n_scenarios {
        for &l in &levels {
            for &h in &hours {
                keys.push((s, l, h));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    let mut outputs: Vec<((usize, u32, usize), JobOutput)> = pool.install(|| {
        keys.par_iter()
            .map(|&k| run_job(cfg, inputs, &sets, k).map(|o| (k, o)))
            .collect::<Result<_>>()
    })?;
    outputs.sort_by_key(|(k, _)| *k);

    let mut rs = ResultSet {
        mode: cfg.mode,
        master_seed: cfg.master_seed,
        n_scenarios: cfg.n_scenarios,
        levels,
        hours,
        compare_threshold: cfg.compare_threshold,
        cosim_tol: cfg.cosim.tol_boundary,
        oracle_tol: cfg.oracle.tol,
        pcc_buses: pcc_buses(&inputs.system),
        branches: inputs.system.net.branches.iter().map(|b| (b.from, b.to)).collect(),
        baselines: Vec::new(),
        records: Vec::new(),
        comparisons: Vec::new(),
        compare_failures: Vec::new(),
        traces: Vec::new(),
    };
    for (k, o) in outputs {
        if k.1 == 0 {
            rs.baselines.push(o.record);
        } else {
            rs.records.push(o.record);
        }
        rs.traces.extend(o.trace);
        rs.comparisons.extend(o.comparisons);
        if let Some(f) = o.compare_failure {
            rs.compare_failures.push((k.0, k.1, k.2, f));
        }
    }
    Ok(rs)
}
