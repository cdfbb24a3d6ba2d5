//! Commitment states over a Purchase enactment as the days go by.

use workbench::commitments::commitment_states;
use workbench::enactment::{MessageInstance, Observation};
use workbench::enactment::History;
use workbench::fixtures;

fn main() {
    let p = fixtures::bspl("purchase");
    let spec = &fixtures::cupid("deliver_payment")[0];
    let by_schema = |s: &str| -> MessageInstance {
        fixtures::purchase_messages().into_iter().find(|m| m.schema == s).unwrap()
    };
    // Accept on day 1, Deliver on day 2, Payment on day 7.
    let mut buyer = History::new("Buyer");
    let mut seller = History::new("Seller");
    for (i, (schema, day)) in [("Request", 0), ("Offer", 0), ("Accept", 1), ("Deliver", 2), ("Payment", 7)].into_iter().enumerate() {
        let m = by_schema(schema);
        let tick = 2 * i as u64;
        let (from, to) = if m.sender == "Buyer" { (&mut buyer, &mut seller) } else { (&mut seller, &mut buyer) };
        from.observations.push(Observation::emit(m.clone(), tick).on_day(day));
        to.observations.push(Observation::recv(m, tick + 1).on_day(day));
    }
    let hs = [buyer, seller];
    for now in 0..=8 {
        for c in commitment_states(spec, &hs, now, &p).unwrap() {
            println!("day {now}: {} {:?}", c.name, c.state);
        }
    }
}
