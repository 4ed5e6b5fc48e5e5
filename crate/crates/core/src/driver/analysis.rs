use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{RunRecord, ResultSet};
use crate::error::{Error, Result};
use crate::feeder::PHASE_NAMES;
use crate::netmodel::phases_to_sequence;

/// Voltage unbalance factor `100·|V2|/|V1|`, percent.
pub fn unbalance_factor(v: &[Complex64]) -> Result<f64> {
    for p in 0..3 {
        match v.get(p) {
            Some(x) if x.norm() > 0.0 && x.is_finite() => {}
            _ => return Err(Error::MissingPhase(PHASE_NAMES[p])),
        }
    }
    let s = phases_to_sequence([v[0], v[1], v[2]]);
    Ok(100.0 * s.negative.norm() / s.positive.norm())
}

/// Reverse-flow flags of one record against the no-PV baseline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowFlags {
    /// Branch from-end active power has the opposite sign to the baseline.
    pub reversed: Vec<bool>,
    /// The slack bus consumes active power.
    pub slack_absorbing: bool,
}

impl FlowFlags {
    pub fn any(&self) -> bool {
        self.slack_absorbing || self.reversed.iter().any(|&r| r)
    }
}

/// Flags for each record, compared with the baseline of the same hour.
/// Failed records, or records without a baseline, get no flags.
pub fn detect_reverse_flow(records: &[RunRecord], baselines: &[RunRecord]) -> Vec<FlowFlags> {
    records
        .iter()
        .map(|r| {
            let base = baselines.iter().find(|b| b.hour == r.hour && b.is_ok());
            let reversed = match base {
                Some(b) if r.is_ok() && b.branch_p.len() == r.branch_p.len() => r
                    .branch_p
                    .iter()
                    .zip(&b.branch_p)
                    .map(|(p, q)| p.signum() != q.signum() && *p != 0.0 && *q != 0.0)
                    .collect(),
                _ => vec![false; r.branch_p.len()],
            };
            FlowFlags {
                reversed,
                slack_absorbing: r.is_ok() && r.slack_power.re < 0.0,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Rising,
    PeakThenDecline,
    Declining,
    Flat,
    Mixed,
}

/// Shape of a series ordered by level.
pub fn classify_trend(values: &[f64]) -> Trend {
    let d: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    if d.iter().all(|&x| x == 0.0) {
        return Trend::Flat;
    }
    if d.iter().all(|&x| x > 0.0) {
        return Trend::Rising;
    }
    if d.iter().all(|&x| x < 0.0) {
        return Trend::Declining;
    }
    let first_down = d.iter().position(|&x| x < 0.0).unwrap_or(d.len());
    if first_down > 0 && d[..first_down].iter().all(|&x| x > 0.0) && d[first_down..].iter().all(|&x| x < 0.0) {
        return Trend::PeakThenDecline;
    }
    Trend::Mixed
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PccAggregate {
    pub bus: i64,
    pub mean_v: [f64; 3],
    pub mean_v1: f64,
    pub mean_p: [f64; 3],
    pub mean_q: [f64; 3],
    pub mean_unbalance_pct: f64,
    pub max_unbalance_pct: f64,
}

/// Means over the successful runs of one (hour, level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelAggregate {
    pub hour: usize,
    pub level: u32,
    pub runs: usize,
    pub failures: usize,
    pub mean_iterations: f64,
    pub max_iterations: usize,
    pub mean_slack_p: f64,
    pub slack_absorbing_runs: usize,
    pub reverse_flow_runs: usize,
    pub pcc: Vec<PccAggregate>,
}

/// Mean positive-sequence voltage of one PCC across levels (0 is the
/// baseline).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusTrend {
    pub hour: usize,
    pub bus: i64,
    pub levels: Vec<u32>,
    pub mean_v1: Vec<f64>,
    pub trend: Trend,
    pub peak_level: u32,
    /// Mean active power drawn strictly decreases with level, per phase.
    pub p_strictly_decreasing: [bool; 3],
}

/// Where the mean slack active power turns negative for good.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackAbsorption {
    pub hour: usize,
    /// First level from which the mean slack power stays negative.
    pub onset_level: Option<u32>,
    /// Once the mean flag appears it holds at every higher level.
    pub monotone_stable: bool,
    /// Scenarios whose own flag never clears once set, over those that
    /// completed every level.
    pub stable_scenarios: usize,
    pub complete_scenarios: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub mode: super::Mode,
    pub master_seed: u64,
    pub records: usize,
    pub failures: usize,
    pub levels: Vec<LevelAggregate>,
    pub trends: Vec<BusTrend>,
    pub slack_absorption: Vec<SlackAbsorption>,
    pub max_unbalance_pct: f64,
    /// Runs with any PCC unbalance above 1%.
    pub unbalance_flagged_runs: usize,
    pub max_fpi_iterations: usize,
    pub compare_max_diff: Option<f64>,
    pub compare_pass: Option<bool>,
    pub compare_failures: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn level_aggregate(hour: usize, level: u32, recs: &[&RunRecord], flags: &[&FlowFlags], buses: &[i64]) -> LevelAggregate {
    let ok: Vec<&RunRecord> = recs.iter().copied().filter(|r| r.is_ok()).collect();
    let pcc = buses
        .iter()
        .enumerate()
        .map(|(k, &bus)| {
            let at = |r: &RunRecord| r.pcc[k];
            let vuf: Vec<f64> = ok
                .iter()
                .map(|r| unbalance_factor(&at(r).voltage).unwrap_or(f64::NAN))
                .collect();
            PccAggregate {
                bus,
                mean_v: std::array::from_fn(|p| mean(ok.iter().map(|r| at(r).voltage[p].norm()))),
                mean_v1: mean(ok.iter().map(|r| phases_to_sequence(at(r).voltage).positive.norm())),
                mean_p: std::array::from_fn(|p| mean(ok.iter().map(|r| at(r).power[p].re))),
                mean_q: std::array::from_fn(|p| mean(ok.iter().map(|r| at(r).power[p].im))),
                mean_unbalance_pct: mean(vuf.iter().copied()),
                max_unbalance_pct: vuf.iter().fold(0.0f64, |m, &x| m.max(x)),
            }
        })
        .collect();
    LevelAggregate {
        hour,
        level,
        runs: ok.len(),
        failures: recs.len() - ok.len(),
        mean_iterations: mean(ok.iter().map(|r| r.iterations as f64)),
        max_iterations: recs.iter().map(|r| r.iterations).max().unwrap_or(0),
        mean_slack_p: mean(ok.iter().map(|r| r.slack_power.re)),
        slack_absorbing_runs: flags.iter().filter(|f| f.slack_absorbing).count(),
        reverse_flow_runs: flags.iter().filter(|f| f.reversed.iter().any(|&x| x)).count(),
        pcc,
    }
}

/// Summary metrics of a result set. Means run over successful records in
/// record order, so recomputing them from `results.csv` reproduces them.
pub fn aggregate(rs: &ResultSet) -> Aggregates {
    let flags = detect_reverse_flow(&rs.records, &rs.baselines);
    let base_flags = detect_reverse_flow(&rs.baselines, &rs.baselines);
    let mut levels = Vec::new();
    let mut trends = Vec::new();
    let mut absorption = Vec::new();

    for &hour in &rs.hours {
        let mut per_hour = Vec::new();
        let base: Vec<usize> = (0..rs.baselines.len()).filter(|&i| rs.baselines[i].hour == hour).collect();
        per_hour.push(level_aggregate(
            hour,
            0,
            &base.iter().map(|&i| &rs.baselines[i]).collect::<Vec<_>>(),
            &base.iter().map(|&i| &base_flags[i]).collect::<Vec<_>>(),
            &rs.pcc_buses,
        ));
        for &level in &rs.levels {
            let idx: Vec<usize> = (0..rs.records.len())
                .filter(|&i| rs.records[i].hour == hour && rs.records[i].level == level)
                .collect();
            per_hour.push(level_aggregate(
                hour,
                level,
                &idx.iter().map(|&i| &rs.records[i]).collect::<Vec<_>>(),
                &idx.iter().map(|&i| &flags[i]).collect::<Vec<_>>(),
                &rs.pcc_buses,
            ));
        }

        let lv: Vec<u32> = per_hour.iter().map(|a| a.level).collect();
        for (k, &bus) in rs.pcc_buses.iter().enumerate() {
            let v1: Vec<f64> = per_hour.iter().map(|a| a.pcc[k].mean_v1).collect();
            let peak = v1
                .iter()
                .enumerate()
                .fold(0, |best, (i, &x)| if x > v1[best] { i } else { best });
            trends.push(BusTrend {
                hour,
                bus,
                levels: lv.clone(),
                trend: classify_trend(&v1),
                peak_level: lv[peak],
                mean_v1: v1,
                p_strictly_decreasing: std::array::from_fn(|p| {
                    per_hour.windows(2).all(|w| w[1].pcc[k].mean_p[p] < w[0].pcc[k].mean_p[p])
                }),
            });
        }

        let neg: Vec<bool> = per_hour.iter().map(|a| a.mean_slack_p < 0.0).collect();
        let first = neg.iter().position(|&x| x);
        let monotone_stable = first.is_some_and(|f| neg[f..].iter().all(|&x| x));
        let onset_level = neg
            .iter()
            .rposition(|&x| !x)
            .map_or(Some(0), |last_pos| lv.get(last_pos + 1).copied());

        let (mut stable, mut complete) = (0, 0);
        for s in 0..rs.n_scenarios {
            let seq: Vec<&RunRecord> = rs
                .levels
                .iter()
                .filter_map(|&l| rs.records.iter().find(|r| r.key() == (s, l, hour)))
                .collect();
            if seq.len() != rs.levels.len() || seq.iter().any(|r| !r.is_ok()) {
                continue;
            }
            complete += 1;
            let f: Vec<bool> = seq.iter().map(|r| r.slack_power.re < 0.0).collect();
            if f.windows(2).all(|w| !w[0] || w[1]) {
                stable += 1;
            }
        }
        absorption.push(SlackAbsorption {
            hour,
            onset_level,
            monotone_stable,
            stable_scenarios: stable,
            complete_scenarios: complete,
        });
        levels.extend(per_hour);
    }

    let vufs = rs.records.iter().filter(|r| r.is_ok()).map(|r| {
        r.pcc
            .iter()
            .map(|p| unbalance_factor(&p.voltage).unwrap_or(f64::NAN))
            .fold(0.0f64, f64::max)
    });
    let (max_unbalance_pct, unbalance_flagged_runs) =
        vufs.fold((0.0f64, 0), |(m, n), x| (m.max(x), n + usize::from(x > 1.0)));
    let compare_max_diff = (!rs.comparisons.is_empty()).then(|| rs.comparisons.iter().fold(0.0f64, |m, c| m.max(c.diff)));

    Aggregates {
        mode: rs.mode,
        master_seed: rs.master_seed,
        records: rs.records.len(),
        failures: rs.failures().count(),
        levels,
        trends,
        slack_absorption: absorption,
        max_unbalance_pct,
        unbalance_flagged_runs,
        max_fpi_iterations: rs.records.iter().map(|r| r.iterations).max().unwrap_or(0),
        compare_max_diff,
        compare_pass: compare_max_diff.map(|d| d < rs.compare_threshold && rs.compare_failures.is_empty()),
        compare_failures: rs.compare_failures.len(),
    }
}
