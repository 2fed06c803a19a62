//! Follows the exact Bayes filter through a short scripted flight over the
//! small environment, printing the target marginal and both entropies.
//!
//! cargo run --example belief_filter

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sar_pomcp::{make_environment, Action, EntropyMode, EnvironmentFamily, Model, ModelParams};

fn main() -> sar_pomcp::Result<()> {
    let model = Model::new(make_environment(EnvironmentFamily::Small, 0)?, ModelParams::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut belief = model.initial_belief();
    let mut truth = belief.sample(&mut rng);
    println!("hidden target at {}, responder starts at {}", truth.target, truth.responder);

    let show = |step: usize, b: &sar_pomcp::Belief| {
        let marginal: Vec<String> = b.target_marginal().iter().map(|p| format!("{p:.3}")).collect();
        println!(
            "t={step} drone {} states {:3} bH {:.3} gH {:.3} targets [{}]",
            b.drone(),
            b.len(),
            b.entropy(EntropyMode::Full),
            b.entropy(EntropyMode::Goal),
            marginal.join(", ")
        );
    };
    show(0, &belief);

    for (step, action) in [Action::North, Action::North, Action::West, Action::West].into_iter().enumerate() {
        let (next, obs, reward) = model.step(truth, action, &mut rng);
        truth = next;
        belief = match belief.filter(&model, action, &obs) {
            Ok(b) => b,
            Err(e) => {
                println!("observation contradicts the belief ({e}); see the regeneration example");
                break;
            }
        };
        if obs.responder_seen {
            println!("  responder seen at {}", obs.drone);
        }
        show(step + 1, &belief);
        if reward > 0.0 {
            println!("  target found");
            break;
        }
    }

    let top = belief.truncate(5);
    println!("five most probable states keep {} of {} entries:", top.len(), belief.len());
    for (s, p) in top.iter() {
        println!("  responder {} target {}  {p:.3}", s.responder, s.target);
    }
    Ok(())
}
