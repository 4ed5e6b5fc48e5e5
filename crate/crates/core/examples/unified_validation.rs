//! Co-simulation against the monolithic phase-frame solve across PV levels.

use tdcosim::coupler::CoSimOptions;
use tdcosim::driver::{scenario_sets, RunConfig};
use tdcosim::fixtures;
use tdcosim::oracle::{compare, solve_unified, OracleOptions};

fn main() -> tdcosim::Result<()> {
    let system = fixtures::desk_system();
    let profile = fixtures::pv_profile();
    let cfg = RunConfig {
        n_scenarios: 1,
        ..RunConfig::default()
    };
    let sets = scenario_sets(&cfg, &system)?;
    let opts = CoSimOptions::default();
    println!("level  fpi  oracle-iters  max|dV1|");
    for &level in &cfg.levels {
        let scen: Vec<_> = sets.iter().map(|s| s.get(0, level)).collect();
        let feeders = system.feeders_for(12, &scen, &profile)?;
        let cs = system.run_step(&feeders, &opts)?;
        let us = solve_unified(&system, &feeders, &OracleOptions::default())?;
        let r = compare(&cs, &us, 1e-3)?;
        println!("{level:>4}%  {:>3}  {:>12}  {:.2e}", cs.fpi_iterations, us.iterations, r.max_abs_diff);
    }
    Ok(())
}
