//! Bundled protocols and hand-written enactments used by the scenarios, examples and
//! tests. Every file under `fixtures/` is compiled in.

use crate::bspl::{parse_bspl, InfoProtocol};
use crate::cfp::{parse_scribble_unchecked, parse_trace, CfpExpr, ScribbleProtocol};
use crate::commitments::{parse_cupid, CommitmentSpec};
use crate::enactment::{History, MessageInstance};
use crate::hapn::{parse_hapn, HapnMachine};

macro_rules! bundle {
    ($($name:literal),* $(,)?) => {
        pub const FILES: &[(&str, &str)] = &[$(($name, include_str!(concat!("../fixtures/", $name)))),*];
    };
}

bundle!(
    "alt_pricing.bspl",
    "alt_pricing.hapn",
    "alt_pricing.scr",
    "alt_pricing.trace",
    "alt_pricing_star.trace",
    "book_journey.scr",
    "catalog.bspl",
    "catalog.trace",
    "concurrent_pricing.hapn",
    "concurrent_pricing.scr",
    "concurrent_pricing.trace",
    "concurrent_pricing_star.trace",
    "deliver_payment.cupid",
    "flexible_purchase.bspl",
    "flexible_purchase.hapn",
    "flexible_purchase.scr",
    "flexible_purchase.trace",
    "flexible_purchase_choice.trace",
    "indirect_payment.bspl",
    "indirect_payment.hapn",
    "indirect_payment.scr",
    "indirect_payment.trace",
    "interleaved_pricing.trace",
    "interleaved_recursive_pricing.trace",
    "one_receiver.trace",
    "pricing.bspl",
    "pricing.trace",
    "pricing_catalog.trace",
    "purchase.bspl",
    "purchase.hapn",
    "purchase.scr",
    "purchase.trace",
    "two_receivers.trace",
    "want_willpay.bspl",
    "want_willpay.hapn",
    "want_willpay.scr",
    "want_willpay.trace",
);

pub fn text(name: &str) -> &'static str {
    FILES.iter().find(|f| f.0 == name).map(|f| f.1).unwrap_or_else(|| panic!("no fixture `{name}`"))
}

pub fn bspl(name: &str) -> InfoProtocol {
    parse_bspl(text(&format!("{name}.bspl"))).expect("bundled protocol parses")
}

pub fn trace(name: &str) -> CfpExpr {
    parse_trace(text(&format!("{name}.trace"))).expect("bundled trace expression parses")
}

/// Parsed without validation: some bundled protocols are deliberately ill-formed.
pub fn scribble(name: &str) -> ScribbleProtocol {
    parse_scribble_unchecked(text(&format!("{name}.scr"))).expect("bundled protocol parses")
}

pub fn hapn(name: &str) -> HapnMachine {
    parse_hapn(text(&format!("{name}.hapn"))).expect("bundled machine parses")
}

pub fn cupid(name: &str) -> Vec<CommitmentSpec> {
    parse_cupid(text(&format!("{name}.cupid"))).expect("bundled commitments parse")
}

fn msg(schema: &str, sender: &str, receiver: &str, b: &[(&str, &str)]) -> MessageInstance {
    MessageInstance::new(schema, sender, receiver, b)
}

/// A named enactment: one history per agent.
pub struct Enactment {
    pub name: &'static str,
    pub histories: Vec<History>,
}

fn request(id: &str, item: &str) -> MessageInstance {
    msg("Request", "Buyer", "Seller", &[("ID", id), ("item", item)])
}

fn alt_offer(id: &str, item: &str, price: &str) -> MessageInstance {
    msg("Offer", "Seller", "Buyer", &[("ID", id), ("item", item), ("price", price)])
}

/// Two pricing instances, (1, fig, 5) and (2, jam, 6), in four interleavings. Buyer first.
pub fn two_pricing_instances() -> Vec<Enactment> {
    let (r1, r2) = (request("1", "fig"), request("2", "jam"));
    let (o1, o2) = (alt_offer("1", "fig", "5"), alt_offer("2", "jam", "6"));
    let b = || History::new("Buyer");
    let s = || History::new("Seller");
    vec![
        Enactment {
            name: "lockstep",
            histories: vec![
                b().emit(r1.clone()).recv(o1.clone()).emit(r2.clone()).recv(o2.clone()),
                s().recv(r1.clone()).emit(o1.clone()).recv(r2.clone()).emit(o2.clone()),
            ],
        },
        Enactment {
            name: "newest_answered_first",
            histories: vec![
                b().emit(r1.clone()).emit(r2.clone()).recv(o2.clone()).recv(o1.clone()),
                s().recv(r1.clone()).recv(r2.clone()).emit(o2.clone()).emit(o1.clone()),
            ],
        },
        Enactment {
            name: "requests_batched",
            histories: vec![
                b().emit(r1.clone()).emit(r2.clone()).recv(o1.clone()).recv(o2.clone()),
                s().recv(r1.clone()).emit(o1.clone()).recv(r2.clone()).emit(o2.clone()),
            ],
        },
        Enactment {
            name: "requests_reordered",
            histories: vec![
                b().emit(r1.clone()).emit(r2.clone()).recv(o2.clone()).recv(o1.clone()),
                s().recv(r2.clone()).emit(o2.clone()).recv(r1.clone()).emit(o1.clone()),
            ],
        },
    ]
}

/// The item is changed between request and offer within one instance.
pub fn conflicting_offer() -> Vec<History> {
    let (r, o) = (request("1", "fig"), alt_offer("1", "jam", "5"));
    vec![History::new("Buyer").emit(r.clone()).recv(o.clone()), History::new("Seller").recv(r).emit(o)]
}

/// A second request reuses the first one's ID with a different item.
pub fn reused_key() -> Vec<History> {
    let (r1, o1) = (request("1", "fig"), alt_offer("1", "fig", "5"));
    let (r2, o2) = (request("1", "jam"), alt_offer("1", "jam", "6"));
    vec![
        History::new("Buyer").emit(r1.clone()).recv(o1.clone()).emit(r2.clone()).recv(o2.clone()),
        History::new("Seller").recv(r1).emit(o1).recv(r2).emit(o2),
    ]
}

/// Flexible purchase: shipment and payment in each order, and crossing in flight.
pub fn flexible_purchase_runs() -> Vec<Enactment> {
    let req = request("1", "fig");
    let ship = msg("Shipment", "Seller", "Buyer", &[("ID", "1"), ("item", "fig"), ("shipped", "T")]);
    let pay = msg("Payment", "Buyer", "Seller", &[("ID", "1"), ("item", "fig"), ("paid", "T")]);
    let b = || History::new("Buyer").emit(req.clone());
    let s = || History::new("Seller").recv(req.clone());
    vec![
        Enactment {
            name: "ship_then_pay",
            histories: vec![b().recv(ship.clone()).emit(pay.clone()), s().emit(ship.clone()).recv(pay.clone())],
        },
        Enactment {
            name: "pay_then_ship",
            histories: vec![b().emit(pay.clone()).recv(ship.clone()), s().recv(pay.clone()).emit(ship.clone())],
        },
        Enactment {
            name: "crossing",
            histories: vec![b().emit(pay.clone()).recv(ship.clone()), s().emit(ship.clone()).recv(pay.clone())],
        },
    ]
}

/// The Seller plays pricing and catalog at once. Buyer, Seller, Provider.
pub fn pricing_with_catalog() -> Vec<History> {
    let req = request("1", "fig");
    let offer = msg("Offer", "Seller", "Buyer", &[("ID", "1"), ("price", "5")]);
    let query = msg("Query", "Seller", "Provider", &[("qID", "q1"), ("req", "new")]);
    let newest = msg("Newest", "Provider", "Seller", &[("qID", "q1"), ("req", "new"), ("products", "fig")]);
    vec![
        History::new("Buyer").emit(req.clone()).recv(offer.clone()),
        History::new("Seller").emit(query.clone()).recv(req).emit(offer).recv(newest.clone()),
        History::new("Provider").recv(query).emit(newest),
    ]
}

pub fn want() -> MessageInstance {
    msg("Want", "Buyer", "Seller", &[("ID", "1"), ("item", "fig")])
}

pub fn will_pay() -> MessageInstance {
    msg("WillPay", "Buyer", "Seller", &[("ID", "1"), ("item", "fig"), ("price", "5")])
}

/// Want then WillPay, received in and out of order. Buyer, Seller.
pub fn want_willpay_runs() -> Vec<Enactment> {
    let b = History::new("Buyer").emit(want()).emit(will_pay());
    vec![
        Enactment { name: "in_order", histories: vec![b.clone(), History::new("Seller").recv(want()).recv(will_pay())] },
        Enactment { name: "reordered", histories: vec![b, History::new("Seller").recv(will_pay()).recv(want())] },
    ]
}

pub fn indirect_payment_messages() -> [MessageInstance; 4] {
    [
        msg("Offer", "Seller", "Buyer", &[("ID", "1"), ("item", "fig"), ("price", "5")]),
        msg("Accept", "Buyer", "Seller", &[("ID", "1"), ("item", "fig"), ("price", "5"), ("decision", "yes")]),
        msg("Instruct", "Buyer", "Bank", &[("ID", "1"), ("price", "5"), ("decision", "yes"), ("instruction", "pay")]),
        msg("Transfer", "Bank", "Seller", &[("ID", "1"), ("price", "5"), ("instruction", "pay"), ("OK", "y")]),
    ]
}

/// Everything the Purchase roles might send for one instance, both decisions included.
pub fn purchase_messages() -> Vec<MessageInstance> {
    let base = [("ID", "1"), ("item", "fig")];
    let with = |extra: &[(&'static str, &'static str)]| {
        let mut b = base.to_vec();
        b.extend_from_slice(extra);
        b
    };
    vec![
        msg("Request", "Buyer", "Seller", &base),
        msg("Offer", "Seller", "Buyer", &with(&[("price", "5")])),
        msg("Accept", "Buyer", "Seller", &with(&[("price", "5"), ("decision", "yes"), ("address", "home")])),
        msg("Reject", "Buyer", "Seller", &with(&[("price", "5"), ("decision", "no"), ("OK", "y")])),
        msg("Deliver", "Seller", "Buyer", &with(&[("address", "home"), ("dropOff", "porch")])),
        msg("Payment", "Buyer", "Seller", &[("ID", "1"), ("price", "5"), ("dropOff", "porch"), ("OK", "y")]),
    ]
}

/// Indirect payment with the Seller receiving Accept and Transfer in each order.
/// Buyer, Seller, Bank.
pub fn indirect_payment_runs() -> Vec<Enactment> {
    let [offer, accept, instruct, transfer] = indirect_payment_messages();
    let buyer = History::new("Buyer").recv(offer.clone()).emit(accept.clone()).emit(instruct.clone());
    let bank = History::new("Bank").recv(instruct).emit(transfer.clone());
    let seller = History::new("Seller").emit(offer);
    vec![
        Enactment {
            name: "accept_first",
            histories: vec![buyer.clone(), seller.clone().recv(accept.clone()).recv(transfer.clone()), bank.clone()],
        },
        Enactment { name: "transfer_first", histories: vec![buyer, seller.recv(transfer).recv(accept), bank] },
    ]
}
