//! Polar Newton-Raphson power flow on the positive-sequence network.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SparseMatrix};
use crate::netmodel::{build_sequence_admittance, BusKind, TransmissionNetwork};

use super::SolverOptions;

/// Result of one Newton-Raphson solve.
#[derive(Debug, Clone)]
pub struct NrOutcome {
    pub voltages: Vec<Complex64>,
    pub iterations: usize,
    /// Max-abs power mismatch before each iteration and after the last one.
    pub mismatch_history: Vec<f64>,
}

impl NrOutcome {
    pub fn final_mismatch(&self) -> f64 {
        *self.mismatch_history.last().unwrap_or(&0.0)
    }
}

/// Net specified complex power injection at every bus: scheduled generation
/// minus static load plus `extra`.
pub(crate) fn specified_injection(net: &TransmissionNetwork, extra: &[Complex64]) -> Vec<Complex64> {
    let gen = net.scheduled_generation();
    net.buses
        .iter()
        .zip(gen)
        .zip(extra)
        .map(|((b, g), e)| Complex64::new(g, 0.0) - b.load() + e)
        .collect()
}

/// Flat start: setpoint magnitude at slack and pv buses, 1.0 elsewhere, all
/// at angle zero.
pub fn flat_start(net: &TransmissionNetwork) -> Vec<Complex64> {
    (0..net.len())
        .map(|i| {
            let mag = match net.buses[i].kind {
                BusKind::Pq => 1.0,
                _ => net.setpoint(i).expect("validated"),
            };
            Complex64::new(mag, 0.0)
        })
        .collect()
}

/// Solves the positive-sequence network for per-bus voltages, with
/// `extra_injections` (per-unit complex power, positive into the bus) added
/// to the scheduled injections.
pub fn solve_positive_nr(
    net: &TransmissionNetwork,
    extra_injections: &[Complex64],
    opts: &SolverOptions,
) -> Result<Vec<Complex64>> {
    let y1 = build_sequence_admittance(net, 1);
    Ok(solve_positive_nr_from(net, &y1, extra_injections, None, opts)?.voltages)
}

/// Newton-Raphson with an explicit admittance matrix and optional warm
/// start. Slack and pv-bus magnitudes are reset to their setpoints.
pub fn solve_positive_nr_from(
    net: &TransmissionNetwork,
    y1: &SparseMatrix,
    extra_injections: &[Complex64],
    initial: Option<&[Complex64]>,
    opts: &SolverOptions,
) -> Result<NrOutcome> {
    let n = net.len();
    assert_eq!(extra_injections.len(), n);
    let s_spec = specified_injection(net, extra_injections);

    let mut v: Vec<Complex64> = match initial {
        Some(v0) => {
            assert_eq!(v0.len(), n);
            v0.to_vec()
        }
        None => flat_start(net),
    };
    for (i, b) in net.buses.iter().enumerate() {
        if b.kind != BusKind::Pq {
            let mag = net.setpoint(i).expect("validated");
            let ang = if b.kind == BusKind::Slack { 0.0 } else { v[i].arg() };
            v[i] = Complex64::from_polar(mag, ang);
        }
    }

    let pvpq: Vec<usize> = (0..n).filter(|&i| net.buses[i].kind != BusKind::Slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&i| net.buses[i].kind == BusKind::Pq).collect();
    let np = pvpq.len();
    let nq = pq.len();
    let dense_y = y1.to_dense();

    let mismatch = |v: &[Complex64]| -> (Vec<f64>, f64) {
        let i_bus = y1.mul_vec(v);
        let mis: Vec<Complex64> = (0..n).map(|k| v[k] * i_bus[k].conj() - s_spec[k]).collect();
        let f: Vec<f64> = pvpq
            .iter()
            .map(|&k| mis[k].re)
            .chain(pq.iter().map(|&k| mis[k].im))
            .collect();
        let norm = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        (f, norm)
    };

    let (mut f, mut norm) = mismatch(&v);
    let mut history = vec![norm];
    let mut iterations = 0;
    while norm > opts.tol_nr {
        if iterations >= opts.max_nr {
            return Err(Error::NonConvergence {
                solver: "positive-sequence Newton-Raphson",
                iterations,
                residual: norm,
            });
        }
        iterations += 1;

        let i_bus = y1.mul_vec(&v);
        let vnorm: Vec<Complex64> = v.iter().map(|x| x / x.norm()).collect();
        // dS/dθ = j·diag(V)·conj(diag(I) − Y·diag(V))
        // dS/d|V| = diag(V)·conj(Y·diag(V/|V|)) + conj(diag(I))·diag(V/|V|)
        let ds_dva = |r: usize, c: usize| -> Complex64 {
            let mut t = -dense_y[(r, c)] * v[c];
            if r == c {
                t += i_bus[r];
            }
            Complex64::i() * v[r] * t.conj()
        };
        let ds_dvm = |r: usize, c: usize| -> Complex64 {
            let mut t = v[r] * (dense_y[(r, c)] * vnorm[c]).conj();
            if r == c {
                t += i_bus[r].conj() * vnorm[r];
            }
            t
        };
        let mut jac = DenseMatrix::<f64>::zeros(np + nq, np + nq);
        for (r, &br) in pvpq.iter().enumerate() {
            for (c, &bc) in pvpq.iter().enumerate() {
                jac[(r, c)] = ds_dva(br, bc).re;
            }
            for (c, &bc) in pq.iter().enumerate() {
                jac[(r, np + c)] = ds_dvm(br, bc).re;
            }
        }
        for (r, &br) in pq.iter().enumerate() {
            for (c, &bc) in pvpq.iter().enumerate() {
                jac[(np + r, c)] = ds_dva(br, bc).im;
            }
            for (c, &bc) in pq.iter().enumerate() {
                jac[(np + r, np + c)] = ds_dvm(br, bc).im;
            }
        }
        let lu = jac.lu().map_err(|k| {
            let bus = if k < np { pvpq[k] } else { pq[k - np] };
            Error::SingularJacobian {
                bus: net.buses[bus].id,
            }
        })?;
        let dx = lu.solve(&f);
        for (k, &b) in pvpq.iter().enumerate() {
            let (mag, ang) = v[b].to_polar();
            v[b] = Complex64::from_polar(mag, ang - dx[k]);
        }
        for (k, &b) in pq.iter().enumerate() {
            let (mag, ang) = v[b].to_polar();
            v[b] = Complex64::from_polar(mag - dx[np + k], ang);
        }
        (f, norm) = mismatch(&v);
        history.push(norm);
    }
    Ok(NrOutcome {
        voltages: v,
        iterations,
        mismatch_history: history,
    })
}
