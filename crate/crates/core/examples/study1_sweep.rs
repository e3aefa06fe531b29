//! Mean Study 1 widths for several dose-gap penalties.
//!
//! `cargo run --release -p ivmatch-core --example study1_sweep -- 20 0.2 0.3`

use ivmatch_core::sim::{run_study1, Study1Config};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let reps: usize = args[1].parse().unwrap();
    for lam in args[2..].iter().map(|s| s.parse::<f64>().unwrap()) {
        let cfg = Study1Config { replicates: reps, dose_penalty: lam, ..Study1Config::default() };
        let t0 = std::time::Instant::now();
        let t = run_study1(&cfg).unwrap();
        println!("lambda {lam} ({:.1}s)", t0.elapsed().as_secs_f64());
        for r in &t.rows {
            println!("  {:?} {:?} {:.3?}", r.dose, r.effect, r.mean_widths);
        }
    }
}
