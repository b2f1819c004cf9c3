//! Runs the hierarchy on a problem file, as the binary does, and prints the text report.
//!
//! `cargo run --example hierarchy_report -- problems/ring.json`

use momentsos::cli::{render_text, run, ProblemFile, RunOptions};

fn main() -> momentsos::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/problems/ring.json").into());
    let problem = ProblemFile::read(path.as_ref())?;
    let report = run(&problem, &RunOptions::default())?;
    print!("{}", render_text(&report));
    println!("exit code would be {}", report.exit_code());
    Ok(())
}
