//! Sweeps rollout policy, rollout action, exploration strategy, entropy
//! flavour and filter on the building map with 100 samples, writing a CSV
//! and printing the rows ranked by reward per second of planning.
//!
//! cargo run --release --example building_sweep [-- <trials> <out.csv>]

use std::fs::File;

use sar_pomcp::harness::{sweep, write_summaries};
use sar_pomcp::{
    BeliefFilter, EntropyMode, EnvironmentFamily, ExperimentConfig, ExplorationStrategy, PlannerConfig, RolloutAction,
    RolloutPolicy,
};

fn main() -> sar_pomcp::Result<()> {
    let mut args = std::env::args().skip(1);
    let trials: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let out = args.next().unwrap_or_else(|| "building_sweep.csv".to_string());

    let mut configs = Vec::new();
    for policy in [RolloutPolicy::SampledTarget, RolloutPolicy::StochasticNearest, RolloutPolicy::MostProbable] {
        for action in [RolloutAction::Best, RolloutAction::Stochastic] {
            for strategy in
                [ExplorationStrategy::Default, ExplorationStrategy::TreeEntropy, ExplorationStrategy::EndTreeEntropy]
            {
                let modes: &[EntropyMode] = if strategy.uses_entropy() {
                    &[EntropyMode::Full, EntropyMode::Goal]
                } else {
                    &[EntropyMode::Goal]
                };
                for &mode in modes {
                    for filter in [BeliefFilter::Complete, BeliefFilter::Truncated] {
                        let planner = PlannerConfig {
                            num_samples: 100,
                            max_depth: 30,
                            exploration_strategy: strategy,
                            entropy_mode: mode,
                            rollout_policy: policy,
                            rollout_action_mode: action,
                            belief_filter: filter,
                            ..Default::default()
                        };
                        let mut config = ExperimentConfig::new(EnvironmentFamily::Building, planner);
                        config.trials = trials;
                        configs.push(config);
                    }
                }
            }
        }
    }

    eprintln!("running {} configurations x {trials} trials", configs.len());
    let mut rows = sweep(&configs);
    write_summaries(File::create(&out)?, &rows)?;
    rows.sort_by(|a, b| b.reward_per_time.total_cmp(&a.reward_per_time));
    println!(
        "{:>4} {:>5} {:>4} {:>5} {:>3} {:>6} {:>8} {:>7} {:>9}",
        "filt", "pol", "act", "expl", "H", "steps", "time", "reward", "reward/s"
    );
    for r in &rows {
        println!(
            "{:>4} {:>5} {:>4} {:>5} {:>3} {:>6} {:>8.1} {:>7} {:>9.3}",
            r.belief_filter,
            r.rollout_policy,
            r.rollout_action_mode,
            r.exploration_strategy,
            r.entropy_mode,
            r.total_steps,
            r.total_time_s,
            r.total_reward,
            r.reward_per_time
        );
    }
    println!("full table written to {out}");
    Ok(())
}
