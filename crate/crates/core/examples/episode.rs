//! Runs single seeded episodes and narrates them step by step using the
//! same building blocks as the harness.
//!
//! cargo run --release --example episode [-- <family> <strategy> <seed>]
//! e.g. `-- BUILDING ehES 4`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sar_pomcp::harness::filter_step;
use sar_pomcp::{
    EntropyMode, EnvironmentFamily, ExperimentConfig, ExplorationStrategy, Planner, PlannerConfig, TargetSet,
};

fn main() -> sar_pomcp::Result<()> {
    let mut args = std::env::args().skip(1);
    let family: EnvironmentFamily = args.next().map_or(Ok(EnvironmentFamily::Small), |s| s.parse())?;
    let strategy: ExplorationStrategy = args.next().map_or(Ok(ExplorationStrategy::Default), |s| s.parse())?;
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let config = ExperimentConfig::new(family, PlannerConfig { exploration_strategy: strategy, ..Default::default() });
    let model = config.build_model()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut belief = model.initial_belief();
    let mut truth = belief.sample(&mut rng);
    let mut visited = TargetSet::default();
    let mut planner = Planner::new(&model, config.planner.clone())?;
    println!("{family} with {strategy}: target at {}, responder at {}", truth.target, truth.responder);

    for step in 1..=config.max_steps() {
        let action = planner.plan(&belief, visited, &mut rng)?;
        let (next, obs, reward) = model.step(truth, action, &mut rng);
        truth = next;
        if let Some(i) = model.target_slot(obs.drone) {
            visited.insert(i);
        }
        println!(
            "{step:2}: {action:5} -> drone {} responder {}{}  H={:.2}",
            obs.drone,
            truth.responder,
            if obs.responder_seen { " (seen)" } else { "" },
            belief.entropy(EntropyMode::Goal)
        );
        if reward > 0.0 {
            println!("found the target after {step} steps");
            return Ok(());
        }
        let (b, regenerated) = filter_step(
            &model,
            &belief,
            action,
            &obs,
            visited,
            config.planner.belief_filter,
            config.planner.truncation_size,
        )?;
        if regenerated {
            println!("    belief regenerated");
        }
        belief = b;
    }
    println!("step cap reached");
    Ok(())
}
