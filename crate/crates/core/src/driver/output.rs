use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::analysis::{detect_reverse_flow, unbalance_factor, Aggregates};
use super::{ResultSet, RunRecord};
use crate::error::{Error, Result};
use crate::netmodel::phases_to_sequence;
use crate::scenarios::ScenarioSet;

const PH: [&str; 3] = ["a", "b", "c"];

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn record_header(rs: &ResultSet) -> Vec<String> {
    let mut h: Vec<String> = [
        "scenario",
        "level",
        "hour",
        "model",
        "status",
        "error",
        "iterations",
        "residual",
        "slack_p",
        "slack_q",
        "slack_absorbing",
        "reversed_branches",
    ]
    .map(String::from)
    .to_vec();
    for b in &rs.pcc_buses {
        for q in ["v", "ang"] {
            for p in PH {
                h.push(format!("bus{b}_{q}{p}"));
            }
        }
        h.push(format!("bus{b}_v1"));
        h.push(format!("bus{b}_vuf_pct"));
        for q in ["p", "q"] {
            for p in PH {
                h.push(format!("bus{b}_{q}{p}"));
            }
        }
    }
    for (f, t) in &rs.branches {
        h.push(format!("branch{f}_{t}_p"));
    }
    h
}

fn record_row(rs: &ResultSet, r: &RunRecord, reversed: &[bool]) -> Vec<String> {
    let mut row = vec![
        r.scenario.to_string(),
        r.level.to_string(),
        r.hour.to_string(),
        r.model.to_string(),
        r.error_tag.clone().unwrap_or_else(|| "ok".into()),
        r.error.clone().unwrap_or_default(),
        r.iterations.to_string(),
        num(r.residual),
        num(r.slack_power.re),
        num(r.slack_power.im),
    ];
    if r.is_ok() {
        row.push((r.slack_power.re < 0.0).to_string());
        let names: Vec<String> = rs
            .branches
            .iter()
            .zip(reversed)
            .filter(|(_, &x)| x)
            .map(|((f, t), _)| format!("{f}-{t}"))
            .collect();
        row.push(names.join(";"));
    } else {
        row.extend([String::new(), String::new()]);
    }
    for (k, _) in rs.pcc_buses.iter().enumerate() {
        match r.pcc.get(k) {
            Some(p) => {
                row.extend(p.voltage.iter().map(|v| num(v.norm())));
                row.extend(p.voltage.iter().map(|v| num(v.arg().to_degrees())));
                row.push(num(phases_to_sequence(p.voltage).positive.norm()));
                row.push(num(unbalance_factor(&p.voltage).unwrap_or(f64::NAN)));
                row.extend(p.power.iter().map(|s| num(s.re)));
                row.extend(p.power.iter().map(|s| num(s.im)));
            }
            None => row.extend(std::iter::repeat_n(String::new(), 14)),
        }
    }
    for k in 0..rs.branches.len() {
        row.push(r.branch_p.get(k).map(|&p| num(p)).unwrap_or_default());
    }
    row
}

fn write_records(rs: &ResultSet, records: &[RunRecord], path: &Path) -> Result<()> {
    let flags = detect_reverse_flow(records, &rs.baselines);
    let mut w = writer(path)?;
    w.write_record(record_header(rs))?;
    for (r, f) in records.iter().zip(&flags) {
        w.write_record(record_row(rs, r, &f.reversed))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes every output of a sweep into `dir` and returns the paths written:
/// `results.csv`, `baseline.csv`, `aggregates.json`, `plot_voltage.csv`,
/// `plot_iterations.csv`, `trace.jsonl`, `compare.csv`, `compare.json` and
/// `timing.csv`. Wall times appear only in `timing.csv`.
pub fn emit(rs: &ResultSet, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let agg = rs.aggregates();
    let p = |name: &str| dir.join(name);
    let mut written = Vec::new();

    write_records(rs, &rs.records, &p("results.csv"))?;
    write_records(rs, &rs.baselines, &p("baseline.csv"))?;
    write_json(&agg, &p("aggregates.json"))?;
    write_plots(&agg, dir)?;

    let trace = p("trace.jsonl");
    let f = File::create(&trace).map_err(|e| Error::io(&trace, e))?;
    let mut w = BufWriter::new(f);
    for t in &rs.traces {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n").map_err(|e| Error::io(&trace, e))?;
    }
    w.flush().map_err(|e| Error::io(&trace, e))?;

    let mut w = writer(&p("compare.csv"))?;
    w.write_record([
        "scenario",
        "level",
        "hour",
        "bus",
        "cosim_v1",
        "oracle_v1",
        "diff",
        "cosim_angle_deg",
        "oracle_angle_deg",
        "pass",
    ])?;
    for c in &rs.comparisons {
        w.write_record([
            c.scenario.to_string(),
            c.level.to_string(),
            c.hour.to_string(),
            c.bus.to_string(),
            num(c.cosim_v1),
            num(c.oracle_v1),
            num(c.diff),
            num(c.cosim_angle_deg),
            num(c.oracle_angle_deg),
            c.pass.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(p("compare.csv"), e))?;
    write_json(
        &serde_json::json!({
            "threshold": rs.compare_threshold,
            "cosim_tol_boundary": rs.cosim_tol,
            "oracle_tol": rs.oracle_tol,
            "max_abs_diff": agg.compare_max_diff,
            "pass": agg.compare_pass,
            "failures": rs.compare_failures,
        }),
        &p("compare.json"),
    )?;

    let mut w = writer(&p("timing.csv"))?;
    w.write_record(["scenario", "level", "hour", "model", "wall_ms"])?;
    for r in rs.baselines.iter().chain(&rs.records) {
        w.write_record([
            r.scenario.to_string(),
            r.level.to_string(),
            r.hour.to_string(),
            r.model.to_string(),
            num(r.wall_ms),
        ])?;
    }
    w.flush().map_err(|e| Error::io(p("timing.csv"), e))?;

    for name in [
        "results.csv",
        "baseline.csv",
        "aggregates.json",
        "plot_voltage.csv",
        "plot_iterations.csv",
        "trace.jsonl",
        "compare.csv",
        "compare.json",
        "timing.csv",
    ] {
        written.push(p(name));
    }
    Ok(written)
}

fn write_plots(agg: &Aggregates, dir: &Path) -> Result<()> {
    let path = dir.join("plot_voltage.csv");
    let mut w = writer(&path)?;
    w.write_record(["hour", "level", "bus", "mean_va", "mean_vb", "mean_vc", "mean_v1", "mean_pa", "mean_pb", "mean_pc"])?;
    for a in &agg.levels {
        for p in &a.pcc {
            let mut row = vec![a.hour.to_string(), a.level.to_string(), p.bus.to_string()];
            row.extend(p.mean_v.iter().map(|&x| num(x)));
            row.push(num(p.mean_v1));
            row.extend(p.mean_p.iter().map(|&x| num(x)));
            w.write_record(row)?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("plot_iterations.csv");
    let mut w = writer(&path)?;
    w.write_record(["hour", "level", "runs", "failures", "mean_iterations", "max_iterations"])?;
    for a in &agg.levels {
        w.write_record([
            a.hour.to_string(),
            a.level.to_string(),
            a.runs.to_string(),
            a.failures.to_string(),
            num(a.mean_iterations),
            a.max_iterations.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Writes the scenario sets, one per attachment, as a JSON array.
pub fn write_scenarios(sets: &[ScenarioSet], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_json(&sets, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::Mode;

    fn empty() -> ResultSet {
        ResultSet {
            mode: Mode::Cosim,
            master_seed: 0,
            n_scenarios: 0,
            levels: vec![],
            hours: vec![],
            compare_threshold: 1e-3,
            cosim_tol: 1e-4,
            oracle_tol: 1e-10,
            pcc_buses: vec![5, 8],
            branches: vec![(4, 5)],
            baselines: vec![],
            records: vec![],
            comparisons: vec![],
            compare_failures: vec![],
            traces: vec![],
        }
    }

    #[test]
    fn empty_set_gives_header_only_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit(&empty(), dir.path()).unwrap();
        assert_eq!(files.len(), 9);
        let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("scenario,level,hour"));
        assert!(text.contains("bus8_vuf_pct") && text.contains("branch4_5_p"));
        let cmp = std::fs::read_to_string(dir.path().join("compare.csv")).unwrap();
        assert_eq!(cmp.lines().count(), 1);
        let agg: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("aggregates.json")).unwrap()).unwrap();
        assert_eq!(agg["records"], 0);
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1 + 0.2, 1e-300, -1.0499999999999998, 12345.678e10] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(f64::NAN), "");
    }
}
