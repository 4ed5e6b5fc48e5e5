//! Transmission case data: buses, branches and generators, loaded from the
//! JSON case-file format and validated on construction.

use std::collections::{HashMap, HashSet, VecDeque};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: i64,
    pub kind: BusKind,
    pub base_kv: f64,
    #[serde(default)]
    pub v_setpoint: Option<f64>,
    #[serde(default)]
    pub load_p: f64,
    #[serde(default)]
    pub load_q: f64,
    #[serde(default)]
    pub shunt_g: f64,
    #[serde(default)]
    pub shunt_b: f64,
}

impl Bus {
    pub fn load(&self) -> Complex64 {
        Complex64::new(self.load_p, self.load_q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchEnd {
    From,
    To,
}

/// Off-diagonal entry of a branch's 3×3 sequence impedance matrix
/// (untransposed-line coupling between sequence circuits).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceCoupling {
    pub row: usize,
    pub col: usize,
    pub z: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: i64,
    pub to: i64,
    pub z1: Complex64,
    /// Defaults to `z1`.
    #[serde(default)]
    pub z2: Option<Complex64>,
    /// Defaults to `z1`.
    #[serde(default)]
    pub z0: Option<Complex64>,
    #[serde(default)]
    pub b1: f64,
    /// Defaults to `b1`.
    #[serde(default)]
    pub b0: Option<f64>,
    #[serde(default = "unit_tap")]
    pub tap: f64,
    /// Transformer connection that blocks zero-sequence current through the
    /// branch.
    #[serde(default)]
    pub zero_seq_open: bool,
    /// For a blocked branch, the end whose grounded-wye winding still ties
    /// zero sequence to ground through `z0`.
    #[serde(default)]
    pub zero_seq_grounded: Option<BranchEnd>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coupling: Vec<SequenceCoupling>,
}

fn unit_tap() -> f64 {
    1.0
}

impl Branch {
    /// Series impedance of sequence `seq` (0, 1 or 2).
    pub fn z(&self, seq: usize) -> Complex64 {
        match seq {
            0 => self.z0.unwrap_or(self.z1),
            1 => self.z1,
            2 => self.z2.unwrap_or(self.z1),
            _ => panic!("sequence index {seq} out of range"),
        }
    }

    /// Total line-charging susceptance of sequence `seq`.
    pub fn b(&self, seq: usize) -> f64 {
        match seq {
            0 => self.b0.unwrap_or(self.b1),
            1 | 2 => self.b1,
            _ => panic!("sequence index {seq} out of range"),
        }
    }

    pub fn is_transposed(&self) -> bool {
        self.coupling.iter().all(|c| c.z == Complex64::new(0.0, 0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: i64,
    #[serde(default)]
    pub p_set: f64,
    #[serde(default)]
    pub v_set: Option<f64>,
    /// Negative-sequence source impedance; absent means open.
    #[serde(default)]
    pub z2: Option<Complex64>,
    /// Zero-sequence grounding impedance; absent means open.
    #[serde(default)]
    pub z0: Option<Complex64>,
}

#[derive(Debug, Deserialize)]
struct CaseFile {
    #[serde(default)]
    name: Option<String>,
    #[serde(default = "default_mva")]
    mva_base: f64,
    buses: Vec<Bus>,
    #[serde(default)]
    branches: Vec<Branch>,
    #[serde(default)]
    generators: Vec<Generator>,
}

fn default_mva() -> f64 {
    100.0
}

/// Validated transmission network. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionNetwork {
    pub name: String,
    pub mva_base: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    index: HashMap<i64, usize>,
    slack: usize,
}

/// Parses and validates a JSON case file.
pub fn load_network(text: &str) -> Result<TransmissionNetwork> {
    let file: CaseFile = serde_json::from_str(text).map_err(Error::from_json)?;
    TransmissionNetwork::new(
        file.name.unwrap_or_default(),
        file.mva_base,
        file.buses,
        file.branches,
        file.generators,
    )
}

impl TransmissionNetwork {
    pub fn new(
        name: String,
        mva_base: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self> {
        let v = |msg: String| Err(Error::Validation(msg));
        if !(mva_base > 0.0 && mva_base.is_finite()) {
            return v(format!("mva_base must be positive, got {mva_base}"));
        }
        if buses.is_empty() {
            return v("network has no buses".into());
        }
        let mut index = HashMap::with_capacity(buses.len());
        for (i, b) in buses.iter().enumerate() {
            if index.insert(b.id, i).is_some() {
                return v(format!("duplicate bus id {}", b.id));
            }
            if !(b.base_kv > 0.0 && b.base_kv.is_finite()) {
                return v(format!("bus {} base_kv must be positive", b.id));
            }
            let finite = [b.load_p, b.load_q, b.shunt_g, b.shunt_b]
                .iter()
                .all(|x| x.is_finite());
            if !finite {
                return v(format!("bus {} has non-finite data", b.id));
            }
        }
        let slacks: Vec<usize> = buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Slack)
            .map(|(i, _)| i)
            .collect();
        let slack = match slacks.as_slice() {
            [s] => *s,
            [] => return v("network has no slack bus".into()),
            _ => return v(format!("network has {} slack buses, expected exactly one", slacks.len())),
        };

        for g in &generators {
            let Some(&i) = index.get(&g.bus) else {
                return v(format!("generator at unknown bus {}", g.bus));
            };
            if buses[i].kind == BusKind::Pq {
                return v(format!("generator at pq bus {}", g.bus));
            }
        }
        for b in &buses {
            if b.kind == BusKind::Pq {
                continue;
            }
            let has_gen = generators.iter().any(|g| g.bus == b.id);
            if b.kind == BusKind::Pv && !has_gen {
                return v(format!("pv bus {} carries no generator setpoint", b.id));
            }
            let gen_v = generators.iter().find(|g| g.bus == b.id).and_then(|g| g.v_set);
            match (b.v_setpoint, gen_v) {
                (None, None) => return v(format!("bus {} has no voltage setpoint", b.id)),
                (Some(x), Some(y)) if (x - y).abs() > 1e-9 => {
                    return v(format!("bus {} setpoint {x} disagrees with generator v_set {y}", b.id))
                }
                (Some(x), _) | (None, Some(x)) if !(x > 0.0) => {
                    return v(format!("bus {} voltage setpoint must be positive", b.id))
                }
                _ => {}
            }
        }

        for br in &branches {
            if !index.contains_key(&br.from) {
                return v(format!("branch references unknown bus {}", br.from));
            }
            if !index.contains_key(&br.to) {
                return v(format!("branch references unknown bus {}", br.to));
            }
            if br.from == br.to {
                return v(format!("branch {}-{} connects a bus to itself", br.from, br.to));
            }
            if br.z1.norm() == 0.0 || !br.z1.norm().is_finite() {
                return v(format!("branch {}-{} has |z1| = 0", br.from, br.to));
            }
            if !(br.tap > 0.0) {
                return v(format!("branch {}-{} tap must be positive", br.from, br.to));
            }
            for seq in [0, 2] {
                if br.z(seq).norm() == 0.0 && !(seq == 0 && br.zero_seq_open) {
                    return v(format!("branch {}-{} has zero z{seq}", br.from, br.to));
                }
            }
            for c in &br.coupling {
                if c.row > 2 || c.col > 2 || c.row == c.col {
                    return v(format!(
                        "branch {}-{} coupling entry ({}, {}) is not an off-diagonal sequence pair",
                        br.from, br.to, c.row, c.col
                    ));
                }
            }
        }

        let net = Self {
            name,
            mva_base,
            buses,
            branches,
            generators,
            index,
            slack,
        };
        if let Some(island) = net.unreached_from_slack().first() {
            return v(format!(
                "network is not connected over positive-sequence branches (bus {island} unreachable)"
            ));
        }
        Ok(net)
    }

    fn unreached_from_slack(&self) -> Vec<i64> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            let (f, t) = (self.index[&br.from], self.index[&br.to]);
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([self.slack]);
        seen[self.slack] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        (0..n).filter(|&i| !seen[i]).map(|i| self.buses[i].id).collect()
    }

    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    pub fn bus_index(&self, id: i64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn bus(&self, id: i64) -> Option<&Bus> {
        self.bus_index(id).map(|i| &self.buses[i])
    }

    pub fn slack_index(&self) -> usize {
        self.slack
    }

    /// Voltage magnitude setpoint of a slack or pv bus.
    pub fn setpoint(&self, idx: usize) -> Option<f64> {
        let b = &self.buses[idx];
        b.v_setpoint.or_else(|| {
            self.generators
                .iter()
                .find(|g| g.bus == b.id)
                .and_then(|g| g.v_set)
        })
    }

    /// Scheduled generation at each bus (sum over generators).
    pub fn scheduled_generation(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.len()];
        for g in &self.generators {
            p[self.index[&g.bus]] += g.p_set;
        }
        p
    }

    /// Buses that carry a static load.
    pub fn load_buses(&self) -> HashSet<i64> {
        self.buses
            .iter()
            .filter(|b| b.load_p != 0.0 || b.load_q != 0.0)
            .map(|b| b.id)
            .collect()
    }

    /// Copy of the network with the static loads of `ids` set to zero.
    pub fn without_loads(&self, ids: &[i64]) -> Result<Self> {
        let mut net = self.clone();
        for id in ids {
            let i = self.bus_index(*id).ok_or(Error::UnknownBus(*id))?;
            net.buses[i].load_p = 0.0;
            net.buses[i].load_q = 0.0;
        }
        Ok(net)
    }

    /// Copy with every static load multiplied by `factor`.
    pub fn with_load_scale(&self, factor: f64) -> Self {
        let mut net = self.clone();
        for b in &mut net.buses {
            b.load_p *= factor;
            b.load_q *= factor;
        }
        net
    }

    /// Copy with the given bus loads replaced (per-unit on the system base).
    pub fn with_bus_load(&self, id: i64, load: Complex64) -> Result<Self> {
        let mut net = self.clone();
        let i = self.bus_index(id).ok_or(Error::UnknownBus(id))?;
        net.buses[i].load_p = load.re;
        net.buses[i].load_q = load.im;
        Ok(net)
    }

    pub fn is_transposed(&self) -> bool {
        self.branches.iter().all(Branch::is_transposed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = r#"{
        "mva_base": 100,
        "buses": [
            {"id": 1, "kind": "slack", "base_kv": 230, "v_setpoint": 1.0},
            {"id": 2, "kind": "pq", "base_kv": 230, "load_p": 1.0, "load_q": 0.5}
        ],
        "branches": [{"from": 1, "to": 2, "z1": [0.01, 0.1]}],
        "generators": [{"bus": 1}]
    }"#;

    #[test]
    fn parses_minimal_case_with_defaults() {
        let net = load_network(TWO_BUS).unwrap();
        assert_eq!(net.len(), 2);
        let br = &net.branches[0];
        assert_eq!(br.z(2), br.z1);
        assert_eq!(br.z(0), br.z1);
        assert_eq!(br.tap, 1.0);
        assert_eq!(net.setpoint(0), Some(1.0));
    }

    #[test]
    fn bundled_nine_bus_case() {
        let net = load_network(crate::fixtures::IEEE9_JSON).unwrap();
        assert_eq!(net.buses.len(), 9);
        assert_eq!(net.branches.len(), 9);
        assert_eq!(net.generators.len(), 3);
        assert_eq!(net.buses[net.slack_index()].id, 1);
    }

    #[test]
    fn empty_bus_list_is_rejected() {
        let err = load_network(r#"{"buses": []}"#).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("no buses")), "{err}");
    }

    #[test]
    fn duplicate_bus_id_is_rejected() {
        let text = TWO_BUS.replace(r#""id": 2"#, r#""id": 1"#);
        let err = load_network(&text).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("duplicate")), "{err}");
    }

    #[test]
    fn two_slack_buses_are_rejected() {
        let text = TWO_BUS.replace(r#""kind": "pq""#, r#""kind": "slack", "v_setpoint": 1.0"#);
        let err = load_network(&text).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("slack")), "{err}");
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = load_network("{\n  \"buses\": [\n  oops\n]}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn zero_impedance_branch_is_rejected() {
        let text = TWO_BUS.replace("[0.01, 0.1]", "[0.0, 0.0]");
        assert!(matches!(load_network(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn disconnected_bus_is_rejected() {
        let text = TWO_BUS.replace(r#""branches": [{"from": 1, "to": 2, "z1": [0.01, 0.1]}],"#, "");
        let err = load_network(&text).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("connected")), "{err}");
    }

    #[test]
    fn pv_bus_without_generator_is_rejected() {
        let text = TWO_BUS.replace(r#""kind": "pq""#, r#""kind": "pv", "v_setpoint": 1.0"#);
        let err = load_network(&text).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("generator")), "{err}");
    }
}
