//! Realizability of small protocols across delivery models and sequencing interpretations.

use workbench::cfp::DEFAULT_BOUND;
use workbench::fixtures;
use workbench::netsim::Delivery;
use workbench::realizability::{check_realizability, language_preset, CommConfig, Interpretation, Language};

fn main() {
    for name in ["two_receivers", "one_receiver", "want_willpay"] {
        let e = fixtures::trace(name);
        println!("{name}: {}", fixtures::text(&format!("{name}.trace")).trim());
        for d in [Delivery::Unordered, Delivery::FifoPairwise] {
            for i in Interpretation::ALL {
                let v = check_realizability(&e, &CommConfig::trace_f(d, i), DEFAULT_BOUND);
                println!("  {d:?} {i:?}: {v}");
            }
        }
    }

    println!("\nflexible_purchase under each language preset:");
    let e = fixtures::trace("flexible_purchase");
    for l in [Language::TraceC, Language::TraceF, Language::Hapn] {
        println!("  {l:?}: {}", check_realizability(&e, &language_preset(l), DEFAULT_BOUND));
    }
    let s = fixtures::scribble("flexible_purchase").body;
    let v = check_realizability(&s, &language_preset(Language::Scribble), DEFAULT_BOUND);
    println!("  Scribble: {v}");
    if let Some(w) = v.witness {
        println!("  witness: {w:?}");
    }
}
