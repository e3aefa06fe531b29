//! Study 2 coverage table; any second argument switches to binary outcomes.
//!
//! `cargo run --release -p ivmatch-core --example study2_sweep -- 200`

use ivmatch_core::sim::{run_study2, DosePool, OutcomeType, Study2Config};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let reps: usize = args[1].parse().unwrap();
    let binary = args.get(2).is_some();
    let cfg = Study2Config {
        replicates: reps,
        outcomes: vec![if binary { OutcomeType::Binary } else { OutcomeType::Continuous }],
        ..Study2Config::default()
    };
    let t0 = std::time::Instant::now();
    let t = run_study2(&cfg, &DosePool::synthetic()).unwrap();
    println!("{:.1}s", t0.elapsed().as_secs_f64());
    for r in &t.rows {
        let c = r.cell;
        println!(
            "{:?} s{} I={:5} g={:.3}  rand {:.3} biased {:.3} consv {:.3} failed {}",
            c.mechanism, c.scenario, c.pairs, c.gamma, r.coverage_randomization, r.coverage_biased, r.conservative_variance_rate, r.failed
        );
    }
}
