//! A day of hourly co-simulation steps for one 40% scenario.

use tdcosim::driver::{run, RunConfig};

fn main() -> tdcosim::Result<()> {
    let cfg = RunConfig {
        levels: vec![40],
        n_scenarios: 1,
        hours: (0..24).collect(),
        ..RunConfig::default()
    };
    let rs = run(&cfg)?;
    println!("hour  slack P   bus5 |Va|  bus8 |Va|  fpi");
    for r in &rs.records {
        if !r.is_ok() {
            println!("{:>4}  failed: {}", r.hour, r.error.as_deref().unwrap_or(""));
            continue;
        }
        println!(
            "{:>4}  {:+.4}   {:.4}     {:.4}     {}",
            r.hour,
            r.slack_power.re,
            r.pcc[0].voltage[0].norm(),
            r.pcc[2].voltage[0].norm(),
            r.iterations
        );
    }
    Ok(())
}
