//! A state-machine protocol with variable bindings: runs it and checks for values
//! rebound without an explicit unbind.

use workbench::enactment::MessageInstance;
use workbench::fixtures;
use workbench::hapn::{accepts, hapn_integrity_check};

fn main() {
    let m = fixtures::hapn("alt_pricing");
    let req = |item: &str| MessageInstance::new("Request", "Buyer", "Seller", &[("ID", "1"), ("item", item)]);
    let offer = |item: &str| MessageInstance::new("Offer", "Seller", "Buyer", &[("ID", "1"), ("item", item), ("price", "5")]);

    let consistent = [req("fig"), offer("fig")];
    let conflicting = [req("fig"), offer("jam")];
    for (name, run) in [("consistent", &consistent[..]), ("conflicting", &conflicting[..])] {
        let integrity = match hapn_integrity_check(&m, run) {
            Ok(()) => "no rebinding".to_string(),
            Err(e) => e.to_string(),
        };
        println!("{name}: accepted={} {integrity}", accepts(&m, run));
    }
}
