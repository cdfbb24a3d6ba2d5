//! An agent-side filter that checks each emission against the information protocol
//! before it leaves.

use workbench::enactment::{print_log, MessageInstance};
use workbench::filter::{Backend, FilterState};
use workbench::fixtures;
use workbench::realizability::Reception;

fn msg(schema: &str, from: &str, to: &str, b: &[(&str, &str)]) -> MessageInstance {
    MessageInstance::new(schema, from, to, b)
}

fn main() {
    let protocol = fixtures::bspl("alt_pricing");
    let mut buyer = FilterState::new("Buyer", Backend::Bspl(vec![protocol]), Reception::Anytime);

    let attempts = [
        msg("Request", "Buyer", "Seller", &[("ID", "1"), ("item", "fig")]),
        // Same key, different item.
        msg("Request", "Buyer", "Seller", &[("ID", "1"), ("item", "jam")]),
        msg("Request", "Buyer", "Seller", &[("ID", "2"), ("item", "jam")]),
        // Not the Buyer's to send.
        msg("Offer", "Seller", "Buyer", &[("ID", "2"), ("item", "jam"), ("price", "3")]),
    ];
    for m in &attempts {
        match buyer.request_emission(m) {
            Ok(()) => println!("sent     {m}"),
            Err(r) => println!("refused  {m}: {r}"),
        }
    }
    buyer.on_delivery(&msg("Offer", "Seller", "Buyer", &[("ID", "1"), ("item", "fig"), ("price", "5")]));
    print!("\nlog:\n{}", print_log(&buyer.log()));
}
