//! Fixed-point co-simulation of one transmission network and the radial
//! feeders attached at its PCC buses.
//!
//! Each iteration solves the transmission side with the last known feeder
//! powers, then every feeder with the fresh PCC voltages, and compares the
//! two most recent boundary states.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Side};
use crate::feeder::{apply_scenario, solve_feeder, FeederModel, FeederSolution, SweepOptions};
use crate::netmodel::{balanced, phases_to_sequence, sequence_to_phase, BusKind, SequenceSet, TransmissionNetwork};
use crate::scenarios::{GenerationProfile, PvScenario};
use crate::seq_solver::{load_sequence_currents, PccLoad, SeqSolution, SequenceModel, SolverOptions};

/// A feeder (or `copies` identical feeders in parallel) connected at a
/// transmission bus.
#[derive(Debug, Clone, PartialEq)]
pub struct Attachment {
    pub bus: i64,
    pub feeder: FeederModel,
    /// Number of identical feeders represented; powers scale by this count.
    pub copies: f64,
    /// Feeder source voltage per transmission per-unit voltage.
    pub voltage_ratio: f64,
    /// Feeder phase `p` connects to system phase `(p + rotation) % 3`.
    pub rotation: usize,
}

impl Attachment {
    pub fn new(bus: i64, feeder: FeederModel, copies: f64) -> Self {
        Self {
            bus,
            feeder,
            copies,
            voltage_ratio: 1.0,
            rotation: 0,
        }
    }

    pub fn rotated(mut self, rotation: usize) -> Self {
        self.rotation = rotation;
        self
    }

    /// System phase that feeder phase `p` is connected to.
    pub fn system_phase(&self, p: usize) -> usize {
        (p + self.rotation) % 3
    }

    /// kW on the feeder to per-unit on a system of base `mva_base`.
    pub fn power_factor(&self, mva_base: f64) -> f64 {
        self.copies / (1000.0 * mva_base)
    }
}

/// Boundary values at one PCC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PccBoundary {
    pub bus: i64,
    /// Phase voltages from the transmission side, per-unit.
    pub voltage: [Complex64; 3],
    /// Per-phase power drawn by the feeders, per-unit on the system base.
    pub power: [Complex64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryState {
    pub iteration: usize,
    pub pcc: Vec<PccBoundary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryNorm {
    /// Voltages and powers in one infinity norm.
    #[default]
    Combined,
    VoltageOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoSimOptions {
    pub tol_boundary: f64,
    pub max_fpi: usize,
    /// Relaxation factor on the power update, in (0, 1].
    pub under_relaxation: f64,
    pub norm: BoundaryNorm,
    pub solver: SolverOptions,
    pub sweep: SweepOptions,
}

impl Default for CoSimOptions {
    fn default() -> Self {
        Self {
            tol_boundary: 1e-4,
            max_fpi: 20,
            under_relaxation: 1.0,
            norm: BoundaryNorm::Combined,
            solver: SolverOptions::default(),
            sweep: SweepOptions::default(),
        }
    }
}

impl CoSimOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_boundary > 0.0) {
            return Err(Error::Validation("tol_boundary must be positive".into()));
        }
        if self.max_fpi == 0 {
            return Err(Error::Validation("max_fpi must be positive".into()));
        }
        if !(self.under_relaxation > 0.0 && self.under_relaxation <= 1.0) {
            return Err(Error::Validation("under_relaxation must lie in (0, 1]".into()));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoSimResult {
    pub transmission: SeqSolution,
    pub feeders: Vec<FeederSolution>,
    /// Boundary states; entry 0 is the starting point.
    pub history: Vec<BoundaryState>,
    /// Boundary error after each iteration.
    pub errors: Vec<f64>,
    pub fpi_iterations: usize,
}

impl CoSimResult {
    pub fn final_state(&self) -> &BoundaryState {
        self.history.last().expect("history is never empty")
    }

    pub fn final_error(&self) -> f64 {
        self.errors.last().copied().unwrap_or(0.0)
    }

    /// Positive-sequence PCC voltage of each attachment.
    pub fn pcc_positive(&self) -> Vec<Complex64> {
        self.final_state()
            .pcc
            .iter()
            .map(|p| phases_to_sequence(p.voltage).positive)
            .collect()
    }

    pub fn trace(&self, step: &str) -> Vec<TraceRecord> {
        self.history
            .iter()
            .enumerate()
            .map(|(k, s)| TraceRecord::new(step, s, if k == 0 { None } else { Some(self.errors[k - 1]) }))
            .collect()
    }
}

/// One line of the per-iteration convergence trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: String,
    pub fpi_iteration: usize,
    pub pcc: Vec<TracePcc>,
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePcc {
    pub bus: i64,
    pub v_mag: [f64; 3],
    pub v_ang_deg: [f64; 3],
    pub p: [f64; 3],
    pub q: [f64; 3],
}

impl TraceRecord {
    pub fn new(step: &str, state: &BoundaryState, error: Option<f64>) -> Self {
        Self {
            step: step.to_string(),
            fpi_iteration: state.iteration,
            pcc: state
                .pcc
                .iter()
                .map(|b| TracePcc {
                    bus: b.bus,
                    v_mag: b.voltage.map(|v| v.norm()),
                    v_ang_deg: b.voltage.map(|v| v.arg().to_degrees()),
                    p: b.power.map(|s| s.re),
                    q: b.power.map(|s| s.im),
                })
                .collect(),
            error,
        }
    }
}

/// Infinity norm of the change in all boundary variables.
pub fn boundary_error(prev: &BoundaryState, curr: &BoundaryState, norm: BoundaryNorm) -> Result<f64> {
    if prev.pcc.len() != curr.pcc.len() || prev.pcc.iter().zip(&curr.pcc).any(|(a, b)| a.bus != b.bus) {
        return Err(Error::Mismatch("boundary states cover different attachments".into()));
    }
    let mut e = 0.0f64;
    for (a, b) in prev.pcc.iter().zip(&curr.pcc) {
        for p in 0..3 {
            e = e.max((a.voltage[p] - b.voltage[p]).norm());
            if norm == BoundaryNorm::Combined {
                e = e.max((a.power[p] - b.power[p]).norm());
            }
        }
    }
    Ok(e)
}

/// Per-phase PCC power of a feeder solution on the system per-unit base.
pub fn equivalent_load(fs: &FeederSolution, att: &Attachment, mva_base: f64) -> [Complex64; 3] {
    let k = att.power_factor(mva_base);
    let mut out = [Complex64::new(0.0, 0.0); 3];
    for p in 0..3 {
        out[att.system_phase(p)] = fs.pcc_power[p] * k;
    }
    out
}

/// Sequence currents drawn by an equivalent load at the given PCC phase
/// voltages.
pub fn equivalent_currents(bus: i64, power: [Complex64; 3], voltage: [Complex64; 3]) -> Result<SequenceSet> {
    load_sequence_currents(
        &PccLoad {
            bus,
            phase_power: power,
        },
        &phases_to_sequence(voltage),
    )
}

/// Phase voltages applied at the feeder head, in feeder phase order.
pub fn source_voltage(ts: &SeqSolution, att: &Attachment) -> Result<[Complex64; 3]> {
    let v = ts.voltage(att.bus).ok_or(Error::UnknownBus(att.bus))?;
    let sys = sequence_to_phase(&v);
    Ok(std::array::from_fn(|p| sys[att.system_phase(p)] * att.voltage_ratio))
}

/// A transmission network with feeders replacing the static load at every
/// attached bus.
#[derive(Debug, Clone)]
pub struct CoSimSystem {
    pub net: TransmissionNetwork,
    pub attachments: Vec<Attachment>,
    model: SequenceModel,
}

impl CoSimSystem {
    pub fn new(net: &TransmissionNetwork, attachments: Vec<Attachment>) -> Result<Self> {
        let mut buses = Vec::new();
        for a in &attachments {
            let b = net.bus(a.bus).ok_or(Error::UnknownBus(a.bus))?;
            if b.kind != BusKind::Pq {
                return Err(Error::Validation(format!("feeder attached at non-pq bus {}", a.bus)));
            }
            if !(a.copies > 0.0 && a.voltage_ratio > 0.0) || a.rotation > 2 {
                return Err(Error::Validation(format!(
                    "attachment at bus {} needs positive copies and ratio and a rotation of 0, 1 or 2",
                    a.bus
                )));
            }
            if !buses.contains(&a.bus) {
                buses.push(a.bus);
            }
        }
        let net = net.without_loads(&buses)?;
        let model = SequenceModel::new(&net);
        Ok(Self {
            net,
            attachments,
            model,
        })
    }

    pub fn model(&self) -> &SequenceModel {
        &self.model
    }

    /// Feeders with the given scenarios applied for `hour`; `None` leaves a
    /// feeder without PV.
    pub fn feeders_for(
        &self,
        hour: usize,
        scenarios: &[Option<&PvScenario>],
        profile: &GenerationProfile,
    ) -> Result<Vec<FeederModel>> {
        if scenarios.len() != self.attachments.len() {
            return Err(Error::Mismatch(format!(
                "{} scenarios for {} attachments",
                scenarios.len(),
                self.attachments.len()
            )));
        }
        self.attachments
            .iter()
            .zip(scenarios)
            .map(|(a, s)| match s {
                Some(s) => apply_scenario(&a.feeder, s, profile, hour),
                None => {
                    let mut f = a.feeder.clone();
                    for n in &mut f.nodes {
                        n.pv_kw = [0.0; 3];
                    }
                    f.pv_units.clear();
                    Ok(f)
                }
            })
            .collect()
    }

    fn solve_feeders(
        &self,
        feeders: &[FeederModel],
        sources: &[[Complex64; 3]],
        opts: &SweepOptions,
    ) -> Result<Vec<FeederSolution>> {
        feeders
            .par_iter()
            .zip(sources.par_iter())
            .map(|(f, v)| solve_feeder(f, *v, opts).map_err(|e| e.on(Side::Distribution)))
            .collect()
    }

    fn state(&self, iteration: usize, voltages: &[[Complex64; 3]], sols: &[FeederSolution]) -> BoundaryState {
        BoundaryState {
            iteration,
            pcc: self
                .attachments
                .iter()
                .zip(voltages)
                .zip(sols)
                .map(|((a, v), fs)| {
                    let mut voltage = [Complex64::new(0.0, 0.0); 3];
                    for p in 0..3 {
                        voltage[a.system_phase(p)] = v[p] / a.voltage_ratio;
                    }
                    PccBoundary {
                        bus: a.bus,
                        voltage,
                        power: equivalent_load(fs, a, self.net.mva_base),
                    }
                })
                .collect(),
        }
    }

    /// One co-simulation time step with the given (already scenario-applied)
    /// feeders, one per attachment.
    pub fn run_step(&self, feeders: &[FeederModel], opts: &CoSimOptions) -> Result<CoSimResult> {
        opts.validate()?;
        if feeders.len() != self.attachments.len() {
            return Err(Error::Mismatch(format!(
                "{} feeders for {} attachments",
                feeders.len(),
                self.attachments.len()
            )));
        }
        let nominal = vec![balanced(Complex64::new(1.0, 0.0)); feeders.len()];
        let start = self.solve_feeders(feeders, &nominal, &opts.sweep)?;
        let mut history = vec![self.state(0, &nominal, &start)];
        let mut errors = Vec::new();
        let mut warm: Option<Vec<SequenceSet>> = None;

        loop {
            let k = history.len();
            let prev = history.last().expect("non-empty");
            let loads: Vec<PccLoad> = prev
                .pcc
                .iter()
                .map(|p| PccLoad {
                    bus: p.bus,
                    phase_power: p.power,
                })
                .collect();
            let ts = self
                .model
                .solve(&loads, warm.as_deref(), &opts.solver)
                .map_err(|e| e.on(Side::Transmission))?;
            let sources: Vec<[Complex64; 3]> = self
                .attachments
                .iter()
                .map(|a| source_voltage(&ts, a))
                .collect::<Result<_>>()?;
            let sols = self.solve_feeders(feeders, &sources, &opts.sweep)?;
            let mut next = self.state(k, &sources, &sols);
            if opts.under_relaxation < 1.0 {
                for (n, p) in next.pcc.iter_mut().zip(&prev.pcc) {
                    for ph in 0..3 {
                        n.power[ph] = p.power[ph] + (n.power[ph] - p.power[ph]) * opts.under_relaxation;
                    }
                }
            }
            let err = boundary_error(prev, &next, opts.norm)?;
            errors.push(err);
            history.push(next);
            warm = Some(ts.voltages.clone());
            if err <= opts.tol_boundary {
                return Ok(CoSimResult {
                    transmission: ts,
                    feeders: sols,
                    fpi_iterations: history.len() - 1,
                    history,
                    errors,
                });
            }
            if k >= opts.max_fpi {
                return Err(Error::FpiNonConvergence {
                    iterations: k,
                    error: err,
                    history,
                });
            }
        }
    }
}

/// Convenience wrapper: applies scenarios for `hour`, then runs the step.
pub fn run_step(
    system: &CoSimSystem,
    hour: usize,
    scenarios: &[Option<&PvScenario>],
    profile: &GenerationProfile,
    opts: &CoSimOptions,
) -> Result<CoSimResult> {
    let feeders = system.feeders_for(hour, scenarios, profile)?;
    system.run_step(&feeders, opts)
}
