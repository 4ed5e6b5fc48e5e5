//! Monte Carlo PV placements on the 13-node feeder.

use tdcosim::fixtures;
use tdcosim::scenarios::{generate, PlacementMode, RatingFactors};

fn main() -> tdcosim::Result<()> {
    let f = fixtures::ieee13();
    let levels: Vec<u32> = (1..=10).map(|l| l * 10).collect();
    let set = generate(&f, &levels, 3, 2024, PlacementMode::Incremental, &RatingFactors::default())?;
    println!("{} customers, feeder peak {} kW", set.customer_count, f.peak_kw);
    for sid in 0..3 {
        let line: Vec<String> = levels
            .iter()
            .map(|&l| {
                let s = set.get(sid, l).expect("generated");
                format!("{:>3}%:{:>2}u/{:>5.0}kW", l, s.placements.len(), s.total_rating())
            })
            .collect();
        println!("scenario {sid}: {}", line.join(" "));
    }
    let top = set.get(0, 30).expect("generated");
    for u in &top.placements {
        println!("  node {:>4} phases {:<3} {:6.1} kW", u.node, u.phases, u.rating_kw);
    }
    Ok(())
}
