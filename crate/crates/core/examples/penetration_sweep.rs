//! The desk-scale penetration study: scenarios × levels at noon, written to
//! `out/penetration` with mean PCC voltage and slack power per level.

use std::path::Path;

use tdcosim::driver::{emit, run, RunConfig};

fn main() -> tdcosim::Result<()> {
    let cfg = RunConfig {
        n_scenarios: 20,
        ..RunConfig::default()
    };
    let rs = run(&cfg)?;
    let dir = Path::new("out/penetration");
    emit(&rs, dir)?;
    let agg = rs.aggregates();
    for a in &agg.levels {
        let v: Vec<String> = a.pcc.iter().map(|p| format!("{}:{:.4}", p.bus, p.mean_v1)).collect();
        println!("{:>3}%  slack P {:+.3}  {}", a.level, a.mean_slack_p, v.join(" "));
    }
    for t in &agg.trends {
        println!("bus {} voltage {:?}, peak at {}%", t.bus, t.trend, t.peak_level);
    }
    println!("results in {}", dir.display());
    Ok(())
}
