//! Grades each protocol language on each criterion and shows the evidence behind one cell.

use workbench::matrix::{run_matrix, Criterion, Lang};

fn main() {
    let m = run_matrix(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    print!("{}", m.render_text());

    let r = m.reports.iter().find(|r| r.language == Lang::TraceF && r.criterion == Criterion::Integrity).unwrap();
    println!("\n{} / {:?}: {}", r.language.label(), r.criterion, r.verdict);
    for e in &r.evidence {
        println!("  {} -> {} ({})", e.scenario, if e.supports { "supports" } else { "against" }, e.outcome);
    }
}
