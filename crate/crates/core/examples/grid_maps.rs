//! Builds every environment family, prints it in the ASCII map format and
//! shows a few shortest-path costs and first moves.
//!
//! cargo run --example grid_maps [-- <seed>]

use sar_pomcp::{make_environment, CostTable, EnvironmentFamily, GridMap};

fn main() -> sar_pomcp::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(0), |s| s.parse()).unwrap_or(0);
    use EnvironmentFamily::*;
    for family in [Small, Large, Cross, Building, Random] {
        let map = make_environment(family, seed)?;
        let costs = CostTable::compute(&map);
        println!(
            "{family}: {}x{}, {} target candidates, {} initial conditions",
            map.width(),
            map.height(),
            map.target_candidates().len(),
            map.initial_condition_count()
        );
        if map.width() <= 15 {
            print!("{}", map.to_ascii());
        }
        for (i, &t) in map.target_candidates().iter().enumerate().take(4) {
            let start = map.drone_start();
            println!(
                "  start {start} -> target {t}: {} steps, first move {:?}",
                costs.cost(start, t),
                costs.best_action(start, i)
            );
        }
        println!();
    }

    let custom = GridMap::parse("T.#.T\n..#..\n.RD..\n.....\n")?;
    let around: Vec<String> = custom.neighbors(custom.drone_start())?.iter().map(|p| p.to_string()).collect();
    println!("parsed custom map, neighbours of the start: {}", around.join(" "));
    Ok(())
}
