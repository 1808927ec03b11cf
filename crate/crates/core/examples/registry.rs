//! Solves every registry problem and prints its table.

use l1sqp::report::render_table;
use l1sqp::{problems, solve, Config};

fn main() {
    for entry in problems::all() {
        let report = solve(&entry.problem, &entry.x0, &entry.config(Config::default()));
        println!("{}", render_table(&report));
    }
}
