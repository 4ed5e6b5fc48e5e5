use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tdcosim::coupler::CoSimOptions;
use tdcosim::driver::{self, parse_list, Mode, RunConfig};
use tdcosim::oracle::{compare, solve_unified_nominal};
use tdcosim::Result;

#[derive(Parser)]
#[command(name = "tdcosim", version, about = "Transmission and distribution co-simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a penetration sweep and write results into the output directory.
    Run(Overrides),
    /// Run co-simulation and oracle side by side and report their gap.
    Compare(Overrides),
    /// Generate the PV scenarios only and write them as JSON.
    GenScenarios(Overrides),
    /// Check the configuration and data files and solve the no-PV case.
    Validate(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// TOML run configuration; defaults describe the bundled desk system.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Penetration levels in percent, e.g. `10-100:10` or `20,50`.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    scenarios: Option<usize>,
    /// Hours of day, e.g. `12` or `0-23`.
    #[arg(long)]
    hours: Option<String>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

impl Overrides {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(l) = &self.levels {
            cfg.levels = parse_list(l)?.into_iter().map(|x| x as u32).collect();
        }
        if let Some(n) = self.scenarios {
            cfg.n_scenarios = n;
        }
        if let Some(h) = &self.hours {
            cfg.hours = parse_list(h)?.into_iter().map(|x| x as usize).collect();
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        Ok(cfg)
    }
}

fn run(cfg: &RunConfig) -> Result<bool> {
    let rs = driver::run(cfg)?;
    driver::emit(&rs, &cfg.out_dir)?;
    let agg = rs.aggregates();
    println!(
        "{} runs ({} failed), max fpi iterations {}, max unbalance {:.3}%",
        agg.records, agg.failures, agg.max_fpi_iterations, agg.max_unbalance_pct
    );
    for a in agg.levels.iter() {
        let v: Vec<String> = a.pcc.iter().map(|p| format!("bus{} {:.4}", p.bus, p.mean_v1)).collect();
        println!(
            "h{:02} L{:3}%  slack P {:+.4}  iters {:.2}  {}",
            a.hour,
            a.level,
            a.mean_slack_p,
            a.mean_iterations,
            v.join("  ")
        );
    }
    for s in &agg.slack_absorption {
        match s.onset_level {
            Some(l) => println!("h{:02} slack absorbs active power from {l}%", s.hour),
            None => println!("h{:02} slack never absorbs active power", s.hour),
        }
    }
    if let Some(d) = agg.compare_max_diff {
        println!("co-simulation vs oracle: max |dV1| = {d:.3e} pu (threshold {:.0e})", cfg.compare_threshold);
    }
    println!("outputs in {}", cfg.out_dir.display());
    Ok(agg.failures == 0 && agg.compare_pass.unwrap_or(true))
}

fn gen_scenarios(cfg: &RunConfig) -> Result<bool> {
    let inputs = cfg.load_inputs()?;
    let sets = driver::scenario_sets(cfg, &inputs.system)?;
    let path = cfg.out_dir.join("scenarios.json");
    driver::write_scenarios(&sets, &path)?;
    println!(
        "{} attachment sets × {} scenarios × {} levels written to {}",
        sets.len(),
        cfg.n_scenarios,
        cfg.levels.len(),
        path.display()
    );
    Ok(true)
}

fn validate(cfg: &RunConfig) -> Result<bool> {
    let inputs = cfg.load_inputs()?;
    let sys = &inputs.system;
    println!(
        "network `{}`: {} buses, {} branches; feeder `{}`: {} nodes, {} customers, peak {} kW",
        inputs.network.name,
        inputs.network.len(),
        inputs.network.branches.len(),
        inputs.feeder.name,
        inputs.feeder.nodes.len(),
        inputs.feeder.customers().len(),
        inputs.feeder.peak_kw
    );
    println!("{} attachments", sys.attachments.len());
    let feeders: Vec<_> = sys.attachments.iter().map(|a| a.feeder.clone()).collect();
    let opts: CoSimOptions = cfg.cosim;
    let cs = sys.run_step(&feeders, &opts)?;
    println!("no-PV co-simulation converged in {} iterations", cs.fpi_iterations);
    let us = solve_unified_nominal(sys, &cfg.oracle)?;
    let report = compare(&cs, &us, cfg.compare_threshold)?;
    println!(
        "oracle converged in {} iterations; max |dV1| = {:.3e} pu ({})",
        us.iterations,
        report.max_abs_diff,
        if report.pass { "pass" } else { "FAIL" }
    );
    Ok(report.pass)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(o) => o.config().and_then(|c| run(&c)),
        Command::Compare(o) => o.config().and_then(|mut c| {
            c.mode = Mode::Both;
            run(&c)
        }),
        Command::GenScenarios(o) => o.config().and_then(|c| gen_scenarios(&c)),
        Command::Validate(o) => o.config().and_then(|c| validate(&c)),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
