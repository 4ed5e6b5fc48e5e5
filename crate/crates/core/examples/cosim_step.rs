//! One co-simulation step of the desk system at noon with 50% PV, showing
//! the boundary error at each fixed-point iteration.

use tdcosim::coupler::{run_step, CoSimOptions};
use tdcosim::driver::{scenario_sets, RunConfig};
use tdcosim::fixtures;
use tdcosim::netmodel::phases_to_sequence;

fn main() -> tdcosim::Result<()> {
    let system = fixtures::desk_system();
    let cfg = RunConfig {
        levels: vec![50],
        n_scenarios: 1,
        ..RunConfig::default()
    };
    let sets = scenario_sets(&cfg, &system)?;
    let scen: Vec<_> = sets.iter().map(|s| s.get(0, 50)).collect();
    let res = run_step(&system, 12, &scen, &fixtures::pv_profile(), &CoSimOptions::default())?;
    for (k, e) in res.errors.iter().enumerate() {
        println!("iteration {}: boundary error {e:.3e}", k + 1);
    }
    for b in res.final_state().pcc.iter().step_by(6) {
        let s = phases_to_sequence(b.voltage);
        let p: f64 = b.power.iter().map(|x| x.re).sum();
        println!("bus {} group 0: |V1| {:.5}  P {:+.4} pu", b.bus, s.positive.norm(), p);
    }
    println!("slack {:.4}", res.transmission.slack_power);
    Ok(())
}
