use std::collections::{BTreeMap, HashMap, VecDeque};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PHASE_NAMES: [char; 3] = ['a', 'b', 'c'];

/// Subset of phases {a, b, c}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PhaseSet([bool; 3]);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet([true; 3]);

    pub fn single(ph: usize) -> Self {
        let mut s = [false; 3];
        s[ph] = true;
        PhaseSet(s)
    }

    pub fn contains(&self, ph: usize) -> bool {
        self.0[ph]
    }

    pub fn is_subset(&self, other: &PhaseSet) -> bool {
        (0..3).all(|p| !self.0[p] || other.0[p])
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..3).filter(|&p| self.0[p])
    }

    pub fn count(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut set = [false; 3];
        for ch in s.chars() {
            let p = PHASE_NAMES
                .iter()
                .position(|&c| c == ch.to_ascii_lowercase())
                .ok_or_else(|| Error::Validation(format!("invalid phase letter `{ch}` in `{s}`")))?;
            set[p] = true;
        }
        Ok(PhaseSet(set))
    }
}

impl std::fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for p in self.iter() {
            write!(f, "{}", PHASE_NAMES[p])?;
        }
        Ok(())
    }
}

impl Serialize for PhaseSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PhaseSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PhaseSet::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CustomerClass {
    Residential,
    Commercial,
}

/// How the load points at a node are grouped into customers: one customer
/// per loaded phase, or a single customer spanning all loaded phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Service {
    SinglePhase,
    #[default]
    ThreePhase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeederNode {
    pub id: String,
    pub phases: PhaseSet,
    /// Constant-power load per phase, kW + j kvar.
    pub loads: [Complex64; 3],
    /// PV generation per phase currently applied, kW (unity power factor).
    pub pv_kw: [f64; 3],
    /// Fixed shunt capacitors per phase, kvar at 1 pu (constant impedance).
    pub shunt_kvar: [f64; 3],
    pub customer_class: CustomerClass,
    pub service: Service,
    /// Customers per loaded phase (single-phase service) or per node
    /// (three-phase service); the node's load is shared equally among them.
    pub customers: usize,
}

impl FeederNode {
    pub fn load_phases(&self) -> PhaseSet {
        let mut s = [false; 3];
        for (p, l) in self.loads.iter().enumerate() {
            s[p] = *l != Complex64::new(0.0, 0.0);
        }
        PhaseSet(s)
    }

    /// Load minus PV generation, kW + j kvar.
    pub fn net_load(&self) -> [Complex64; 3] {
        std::array::from_fn(|p| self.loads[p] - self.pv_kw[p])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeederLine {
    pub from: String,
    pub to: String,
    /// Series phase-impedance matrix, ohms (already length-scaled).
    pub z_abc: [[Complex64; 3]; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvUnit {
    pub node: String,
    pub phases: PhaseSet,
    pub rating_kw: f64,
    #[serde(default)]
    pub profile_id: Option<String>,
}

/// Substation transformer: ideal off-nominal tap on the PCC side followed by
/// a per-phase series impedance on its own rating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubstationTransformer {
    pub mva_rating: f64,
    pub r_pu: f64,
    pub x_pu: f64,
    #[serde(default = "unit_tap")]
    pub tap: f64,
}

fn unit_tap() -> f64 {
    1.0
}

/// One PV-eligible customer of a feeder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Customer {
    pub node: String,
    pub phases: PhaseSet,
    pub class: CustomerClass,
}

/// Validated radial three-phase feeder.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederModel {
    pub name: String,
    pub kv_base: f64,
    pub peak_kw: f64,
    pub transformer: SubstationTransformer,
    pub nodes: Vec<FeederNode>,
    pub lines: Vec<FeederLine>,
    pub pv_units: Vec<PvUnit>,
    pub(crate) topo: Topology,
}

/// Radial structure rooted at the substation node.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Topology {
    pub root: usize,
    /// Breadth-first order from the root.
    pub order: Vec<usize>,
    /// Parent node and line index for every non-root node.
    pub parent: Vec<Option<(usize, usize)>>,
    pub index: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct NodeFile {
    id: String,
    phases: PhaseSet,
    #[serde(default)]
    loads: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    shunt_kvar: BTreeMap<String, f64>,
    #[serde(default)]
    customer_class: Option<CustomerClass>,
    #[serde(default)]
    service: Service,
    #[serde(default = "one")]
    customers: usize,
}

fn one() -> usize {
    1
}

#[derive(Deserialize)]
struct LineFile {
    from: String,
    to: String,
    z_abc: [[[f64; 2]; 3]; 3],
}

#[derive(Deserialize)]
struct FeederFile {
    #[serde(default)]
    name: Option<String>,
    kv_base: f64,
    peak_kw: f64,
    transformer: SubstationTransformer,
    #[serde(default)]
    substation: Option<String>,
    nodes: Vec<NodeFile>,
    #[serde(default)]
    lines: Vec<LineFile>,
    #[serde(default)]
    pv_units: Vec<PvUnit>,
}

/// Parses and validates a JSON feeder file.
pub fn load_feeder(text: &str) -> Result<FeederModel> {
    let file: FeederFile = serde_json::from_str(text).map_err(Error::from_json)?;
    let mut nodes = Vec::with_capacity(file.nodes.len());
    for n in file.nodes {
        let mut loads = [Complex64::new(0.0, 0.0); 3];
        for (ph, pq) in &n.loads {
            let set = PhaseSet::parse(ph)?;
            if set.count() != 1 {
                return Err(Error::Validation(format!("node {} load key `{ph}` must name one phase", n.id)));
            }
            let p = set.iter().next().unwrap();
            loads[p] = Complex64::new(pq[0], pq[1]);
        }
        let mut shunt_kvar = [0.0; 3];
        for (ph, q) in &n.shunt_kvar {
            let set = PhaseSet::parse(ph)?;
            if set.count() != 1 {
                return Err(Error::Validation(format!("node {} shunt key `{ph}` must name one phase", n.id)));
            }
            shunt_kvar[set.iter().next().unwrap()] = *q;
        }
        nodes.push(FeederNode {
            id: n.id,
            phases: n.phases,
            loads,
            pv_kw: [0.0; 3],
            shunt_kvar,
            customer_class: n.customer_class.unwrap_or(CustomerClass::Residential),
            service: n.service,
            customers: n.customers,
        });
    }
    let lines = file
        .lines
        .into_iter()
        .map(|l| FeederLine {
            from: l.from,
            to: l.to,
            z_abc: l.z_abc.map(|row| row.map(|[re, im]| Complex64::new(re, im))),
        })
        .collect();
    FeederModel::new(
        file.name.unwrap_or_default(),
        file.kv_base,
        file.peak_kw,
        file.transformer,
        file.substation,
        nodes,
        lines,
        file.pv_units,
    )
}

impl FeederModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: String,
        kv_base: f64,
        peak_kw: f64,
        transformer: SubstationTransformer,
        substation: Option<String>,
        nodes: Vec<FeederNode>,
        lines: Vec<FeederLine>,
        pv_units: Vec<PvUnit>,
    ) -> Result<Self> {
        let v = |m: String| Err(Error::Validation(m));
        if nodes.is_empty() {
            return v("feeder has no nodes".into());
        }
        if !(kv_base > 0.0) {
            return v("kv_base must be positive".into());
        }
        if !(peak_kw >= 0.0) {
            return v("peak_kw must be non-negative".into());
        }
        let t = &transformer;
        if !(t.mva_rating > 0.0 && t.tap > 0.0) || Complex64::new(t.r_pu, t.x_pu).norm() == 0.0 {
            return v("substation transformer needs positive rating, tap and impedance".into());
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return v(format!("duplicate node id {}", n.id));
            }
            if n.phases.is_empty() {
                return v(format!("node {} has no phases", n.id));
            }
            if !n.load_phases().is_subset(&n.phases) {
                return v(format!("node {} has a load on a phase it does not carry", n.id));
            }
            if (0..3).any(|p| n.shunt_kvar[p] != 0.0 && !n.phases.contains(p)) {
                return v(format!("node {} has a shunt on a phase it does not carry", n.id));
            }
            if n.customers == 0 {
                return v(format!("node {} must have at least one customer", n.id));
            }
        }
        let root = match &substation {
            Some(id) => *index.get(id).ok_or_else(|| Error::UnknownNode(id.clone()))?,
            None => 0,
        };
        if nodes[root].phases != PhaseSet::ABC {
            return v("substation node must carry all three phases".into());
        }

        // Union-find over undirected edges detects loops.
        let mut uf: Vec<usize> = (0..nodes.len()).collect();
        fn find(uf: &mut [usize], mut x: usize) -> usize {
            while uf[x] != x {
                uf[x] = uf[uf[x]];
                x = uf[x];
            }
            x
        }
        let mut adj = vec![Vec::new(); nodes.len()];
        for (k, l) in lines.iter().enumerate() {
            let f = *index.get(&l.from).ok_or_else(|| Error::UnknownNode(l.from.clone()))?;
            let to = *index.get(&l.to).ok_or_else(|| Error::UnknownNode(l.to.clone()))?;
            if f == to {
                return v(format!("line {}-{} connects a node to itself", l.from, l.to));
            }
            let (rf, rt) = (find(&mut uf, f), find(&mut uf, to));
            if rf == rt {
                return v(format!("cycle detected at line {}-{}; feeder must be radial", l.from, l.to));
            }
            uf[rf] = rt;
            adj[f].push((to, k));
            adj[to].push((f, k));
        }

        let mut parent = vec![None; nodes.len()];
        let mut seen = vec![false; nodes.len()];
        let mut order = Vec::with_capacity(nodes.len());
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &(j, k) in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    parent[j] = Some((i, k));
                    queue.push_back(j);
                }
            }
        }
        if let Some(lost) = (0..nodes.len()).find(|&i| !seen[i]) {
            return v(format!("node {} is disconnected from the substation", nodes[lost].id));
        }

        for (child, p) in parent.iter().enumerate() {
            let Some((par, k)) = *p else { continue };
            let line = &lines[k];
            let phases = nodes[child].phases;
            if !phases.is_subset(&nodes[par].phases) {
                return v(format!("node {} carries a phase its parent does not", nodes[child].id));
            }
            for r in 0..3 {
                for c in 0..3 {
                    let present = phases.contains(r) && phases.contains(c);
                    let z = line.z_abc[r][c];
                    if !present && z != Complex64::new(0.0, 0.0) {
                        return v(format!(
                            "line {}-{} has impedance on absent phase {}{}",
                            line.from, line.to, PHASE_NAMES[r], PHASE_NAMES[c]
                        ));
                    }
                    if r == c && present && z.norm() == 0.0 {
                        return v(format!("line {}-{} has zero self impedance", line.from, line.to));
                    }
                }
            }
        }

        for u in &pv_units {
            let i = *index.get(&u.node).ok_or_else(|| Error::UnknownNode(u.node.clone()))?;
            if !(u.rating_kw > 0.0) {
                return v(format!("pv unit at {} must have positive rating", u.node));
            }
            if u.phases.is_empty() || !u.phases.is_subset(&nodes[i].phases) {
                return v(format!("pv unit at {} injects on a phase the node does not carry", u.node));
            }
        }

        Ok(Self {
            name,
            kv_base,
            peak_kw,
            transformer,
            nodes,
            lines,
            pv_units,
            topo: Topology {
                root,
                order,
                parent,
                index,
            },
        })
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.topo.index.get(id).copied()
    }

    pub fn root(&self) -> usize {
        self.topo.root
    }

    /// Nodes in breadth-first order from the substation.
    pub fn order(&self) -> &[usize] {
        &self.topo.order
    }

    /// `(parent node, line index)` for each node; `None` at the root.
    pub fn parent(&self, node: usize) -> Option<(usize, usize)> {
        self.topo.parent[node]
    }

    /// Impedance base of the feeder on a 1 MVA three-phase base, ohms.
    pub fn z_base(&self) -> f64 {
        self.kv_base * self.kv_base / FEEDER_MVA_BASE
    }

    /// Transformer series impedance on the feeder's 1 MVA base.
    pub fn transformer_z_pu(&self) -> Complex64 {
        Complex64::new(self.transformer.r_pu, self.transformer.x_pu) * (FEEDER_MVA_BASE / self.transformer.mva_rating)
    }

    pub fn line_z_pu(&self, line: usize) -> [[Complex64; 3]; 3] {
        let zb = self.z_base();
        self.lines[line].z_abc.map(|row| row.map(|z| z / zb))
    }

    /// Total load, kW + j kvar.
    pub fn total_load(&self) -> Complex64 {
        self.nodes.iter().flat_map(|n| n.loads).sum()
    }

    /// Shunt capacitor admittance to ground, per-phase per-unit.
    pub fn shunt_admittance_pu(&self, node: usize, phase: usize) -> Complex64 {
        Complex64::new(0.0, self.nodes[node].shunt_kvar[phase] / (FEEDER_MVA_BASE * 1000.0 / 3.0))
    }

    /// Total PV generation currently applied, kW.
    pub fn total_pv_kw(&self) -> f64 {
        self.nodes.iter().flat_map(|n| n.pv_kw).sum()
    }

    /// PV-eligible customers in file order. A single-phase service node
    /// yields `customers` per loaded phase, a three-phase node `customers`
    /// spanning all loaded phases.
    pub fn customers(&self) -> Vec<Customer> {
        let mut out = Vec::new();
        for n in &self.nodes {
            let lp = n.load_phases();
            if lp.is_empty() {
                continue;
            }
            let groups: Vec<PhaseSet> = match n.service {
                Service::SinglePhase => lp.iter().map(PhaseSet::single).collect(),
                Service::ThreePhase => vec![lp],
            };
            for phases in groups {
                for _ in 0..n.customers {
                    out.push(Customer {
                        node: n.id.clone(),
                        phases,
                        class: n.customer_class,
                    });
                }
            }
        }
        out
    }
}

/// Three-phase power base the sweep works in, MVA.
pub const FEEDER_MVA_BASE: f64 = 1.0;
