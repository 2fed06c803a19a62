//! One planning decision from the small environment's prior, comparing
//! exploration strategies by their root statistics.
//!
//! cargo run --release --example plan_step [-- <samples>]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sar_pomcp::{
    make_environment, EnvironmentFamily, ExplorationStrategy, Model, ModelParams, Planner, PlannerConfig, TargetSet,
};

fn main() -> sar_pomcp::Result<()> {
    let samples: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let model = Model::new(make_environment(EnvironmentFamily::Small, 0)?, ModelParams::default())?;
    let root = model.initial_belief();

    for strategy in ExplorationStrategy::ALL {
        let config = PlannerConfig { num_samples: samples, exploration_strategy: strategy, ..Default::default() };
        let mut planner = Planner::new(&model, config)?;
        let out = planner.plan_detailed(&root, TargetSet::default(), &mut ChaCha8Rng::seed_from_u64(1))?;
        let arms: Vec<String> = out.root.iter().map(|a| format!("{}:{}/{:+.3}", a.action, a.visits, a.value)).collect();
        println!(
            "{strategy}  pick {:5}  {}  ({} nodes, {} entropy terms)",
            out.action.to_string(),
            arms.join(" "),
            out.stats.nodes,
            out.stats.tree_entropy_terms + out.stats.rollout_entropy_terms
        );
    }
    Ok(())
}
