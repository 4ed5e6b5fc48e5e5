//! Three-sequence power flow of the bundled 9-bus case, first balanced and
//! then with a 5% phase imbalance at bus 5.

use num_complex::Complex64;
use tdcosim::fixtures;
use tdcosim::seq_solver::{solve_three_sequence, PccLoad, SolverOptions};

fn main() -> tdcosim::Result<()> {
    let net = fixtures::ieee9();
    let opts = SolverOptions::default();

    let sol = solve_three_sequence(&net, &[], &opts)?;
    println!("balanced: {} outer / {} NR iterations", sol.iterations_outer, sol.iterations_nr);
    for (id, v) in sol.bus_ids.iter().zip(&sol.voltages) {
        println!(
            "  bus {id}: |V1| {:.5} ∠ {:7.3}°  |V2| {:.1e}  |V0| {:.1e}",
            v.positive.norm(),
            v.positive.arg().to_degrees(),
            v.negative.norm(),
            v.zero.norm()
        );
    }
    println!("  slack {:.4}", sol.slack_power);

    // Move bus 5's load onto a PCC with phase a 5% heavier.
    let base = net.bus(5).expect("bus 5").load() / 3.0;
    let unbalanced = net.with_bus_load(5, Complex64::new(0.0, 0.0))?;
    let pcc = PccLoad {
        bus: 5,
        phase_power: [base * 1.05, base, base * 0.95],
    };
    let sol = solve_three_sequence(&unbalanced, &[pcc], &opts)?;
    let v = sol.voltage(5).expect("bus 5");
    println!(
        "unbalanced: bus 5 |V2|/|V1| = {:.4}%, {} outer iterations",
        100.0 * v.negative.norm() / v.positive.norm(),
        sol.iterations_outer
    );
    for f in &sol.branch_flows {
        println!("  {}-{}: P {:+.4}", f.from, f.to, f.from_total().re);
    }
    Ok(())
}
