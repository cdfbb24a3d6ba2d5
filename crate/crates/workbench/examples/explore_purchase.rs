//! Runs Purchase agents over a simulated network: every interleaving, then one seeded run.

use std::sync::Arc;

use workbench::enactment::{instance_views, is_complete, log_from_histories, print_log};
use workbench::filter::BsplAgent;
use workbench::fixtures;
use workbench::netsim::{explore, histories_of, run_one, Delivery, Limits, SimPolicy};

fn main() {
    let p = fixtures::bspl("purchase");
    let candidates = fixtures::purchase_messages();
    let shared = Arc::new(vec![p.clone()]);
    let agents: Vec<BsplAgent> = p
        .roles
        .iter()
        .map(|r| BsplAgent::new(r, shared.clone(), candidates.iter().filter(|m| m.sender == *r).cloned().collect()))
        .collect();

    let ex = explore(agents.clone(), &SimPolicy::new(Delivery::Unordered), &Limits::default());
    println!("{} states, {} maximal enactments", ex.stats.states, ex.completed.len());
    for a in &ex.completed {
        let hs = histories_of(a);
        for v in instance_views(&hs, &p).unwrap() {
            let schemas: Vec<&str> = v.contributing.iter().map(|m| m.schema.as_str()).collect();
            println!("  {:?} complete={} via {}", v.key, is_complete(&v, &p), schemas.join(" "));
        }
    }

    let run = run_one(agents, &SimPolicy { seed: 42, ..SimPolicy::new(Delivery::FifoPairwise) }, 1000);
    println!("\nseed 42 ({:?}):\n{}", run.end, print_log(&log_from_histories(&run.histories)));
}
