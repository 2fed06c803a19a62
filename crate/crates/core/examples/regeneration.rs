//! Rebuilds a belief after observations the filter ruled out: an empty
//! target cell, and a responder met far from where it was expected.
//!
//! cargo run --example regeneration

use sar_pomcp::belief::{regenerate_empty_target, regenerate_unexpected_responder, Sighting, SightingMeta};
use sar_pomcp::{make_environment, EnvironmentFamily, Model, ModelParams, Position, TargetSet};

fn main() -> sar_pomcp::Result<()> {
    let model = Model::new(make_environment(EnvironmentFamily::Large, 0)?, ModelParams::default())?;
    let n = model.n_targets();
    let targets = model.map().target_candidates().to_vec();

    // Responder last seen two steps ago just east of the start, the planner
    // still believing every target equally likely.
    let meta = SightingMeta {
        time: 4,
        last_responder: Some(Sighting { position: Position::new(6, 5), time: 2 }),
        goal_snapshot: vec![1.0 / n as f64; n].into(),
    };
    let visited = TargetSet::default().with(0);

    let rebuilt = regenerate_empty_target(&model, &meta, targets[0], visited)?;
    println!("after finding target 0 empty: {} states", rebuilt.len());
    print_marginal(&targets, &rebuilt.target_marginal());

    let met = Position::new(8, 2);
    let rebuilt = regenerate_unexpected_responder(&model, &meta, met, Position::new(6, 5), TargetSet::default())?;
    println!("after meeting the responder at {met}:");
    print_marginal(&targets, &rebuilt.target_marginal());
    Ok(())
}

fn print_marginal(targets: &[Position], marginal: &[f64]) {
    for (t, p) in targets.iter().zip(marginal) {
        if *p > 0.0 {
            println!("  {t}: {p:.3}");
        }
    }
}
