//! Compares all exploration strategies on the 5x5 environment, printing
//! success rate, mean steps, responder observations and planning time.
//!
//! cargo run --release --example small_environment_table [-- <samples> <trials>]

use sar_pomcp::{run_experiment, EnvironmentFamily, ExperimentConfig, ExplorationStrategy, PlannerConfig};

fn main() -> sar_pomcp::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u32>());
    let samples = args.next().transpose().ok().flatten().unwrap_or(1000);
    let trials = args.next().transpose().ok().flatten().unwrap_or(100);

    println!("{samples} samples, {trials} trials, depth 14");
    println!("{:6} {:>8} {:>7} {:>6} {:>9}", "", "success", "steps", "RObs", "time (s)");
    for strategy in ExplorationStrategy::ALL {
        let planner =
            PlannerConfig { num_samples: samples, max_depth: 14, exploration_strategy: strategy, ..Default::default() };
        let mut config = ExperimentConfig::new(EnvironmentFamily::Small, planner);
        config.trials = trials;
        let s = run_experiment(&config)?.summary;
        println!(
            "{:6} {:>8.2} {:>7.2} {:>6} {:>9.1}",
            strategy.to_string(),
            s.success_rate,
            s.mean_steps,
            s.total_robs,
            s.total_time_s
        );
    }
    Ok(())
}
