//! Default versus entropy-driven exploration on the 11x11 environment with
//! 64 initial conditions and a 40-step budget.
//!
//! cargo run --release --example large_environment [-- <trials>]

use sar_pomcp::{run_experiment, EnvironmentFamily, ExperimentConfig, ExplorationStrategy, PlannerConfig};

fn main() -> sar_pomcp::Result<()> {
    let trials: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    for strategy in
        [ExplorationStrategy::Default, ExplorationStrategy::ResponderReward, ExplorationStrategy::CompleteEntropy]
    {
        let planner =
            PlannerConfig { num_samples: 100, max_depth: 25, exploration_strategy: strategy, ..Default::default() };
        let mut config = ExperimentConfig::new(EnvironmentFamily::Large, planner);
        config.trials = trials;
        let s = run_experiment(&config)?.summary;
        println!(
            "{strategy}: success {:.2} over {trials} trials, mean steps {:.1}, {:.1}s planning",
            s.success_rate, s.mean_steps, s.total_time_s
        );
    }
    Ok(())
}
