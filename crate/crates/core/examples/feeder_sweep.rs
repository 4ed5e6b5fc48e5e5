//! Backward/forward sweep of the bundled 13-node feeder with an energy audit.

use num_complex::Complex64;
use tdcosim::feeder::{energy_audit, solve_feeder, SweepOptions, PHASE_NAMES};
use tdcosim::fixtures;
use tdcosim::netmodel::balanced;

fn main() -> tdcosim::Result<()> {
    let f = fixtures::ieee13();
    let sol = solve_feeder(&f, balanced(Complex64::new(1.04, 0.0)), &SweepOptions::default())?;
    println!("{} sweeps, last change {:.1e}", sol.iterations, sol.max_change);
    for (node, v) in f.nodes.iter().zip(&sol.voltages) {
        let mags: Vec<String> = node
            .phases
            .iter()
            .map(|p| format!("{}={:.4}", PHASE_NAMES[p], v[p].norm()))
            .collect();
        println!("  {:>4}: {}", node.id, mags.join(" "));
    }
    for (p, s) in sol.pcc_power.iter().enumerate() {
        println!("PCC phase {}: {:8.1} kW {:8.1} kvar", PHASE_NAMES[p], s.re, s.im);
    }
    let audit = energy_audit(&f, &sol);
    println!(
        "losses: lines {:.2} kW, transformer {:.2} kW; audit residual {:.1e} kVA",
        audit.line_losses.re,
        audit.transformer_losses.re,
        audit.residual().norm()
    );
    Ok(())
}
