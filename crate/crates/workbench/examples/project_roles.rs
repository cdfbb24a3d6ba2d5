//! Local views of Flexible Purchase under each projection doctrine, and the Buyer's
//! type-level state machine.

use workbench::fixtures;
use workbench::projection::{extract_fsm, payload_signatures, project, Doctrine};

fn main() {
    let e = fixtures::trace("flexible_purchase");
    for role in e.roles() {
        for d in [Doctrine::TraceC, Doctrine::TraceF, Doctrine::Scribble] {
            match project(&e, &role, d) {
                Ok(l) => println!("{role:>6} {d:?}: {l}"),
                Err(f) => println!("{role:>6} {d:?}: {f}"),
            }
        }
    }
    let l = project(&e, "Buyer", Doctrine::TraceF).unwrap();
    print!("\n{}", extract_fsm(&l, &payload_signatures(&e)).to_dot("Buyer"));
}
