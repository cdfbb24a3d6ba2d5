//! Parses one file of each format, prints it back and lists diagnostics.

use workbench::bspl::{parse_bspl, print_bspl, validate_bspl};
use workbench::cfp::{parse_scribble, parse_trace, print_scribble, print_trace, trace_diagnostics};
use workbench::commitments::{parse_cupid, print_cupid};
use workbench::fixtures::text;
use workbench::hapn::{parse_hapn, print_hapn};

fn main() {
    let p = parse_bspl(text("purchase.bspl")).unwrap();
    print!("{}", print_bspl(&p));
    for d in validate_bspl(&p) {
        println!("  {d}");
    }

    let t = parse_trace(text("flexible_purchase.trace")).unwrap();
    println!("\n{}", print_trace(&t));
    for d in trace_diagnostics(&t) {
        println!("  {d}");
    }

    let s = parse_scribble(text("purchase.scr")).unwrap();
    println!("\n{}", print_scribble(&s));

    let h = parse_hapn(text("alt_pricing.hapn")).unwrap();
    println!("{}", print_hapn(&h));

    let c = parse_cupid(text("deliver_payment.cupid")).unwrap();
    print!("{}", print_cupid(&c));

    // Syntax errors carry a location.
    if let Err(e) = parse_bspl("protocol P { roles A B parameters out ID key A -> B: M[out ID }") {
        println!("\n{e}");
    }
}
