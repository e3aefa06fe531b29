//! Times one design build and matching solve on a random cohort.
//!
//! `cargo run --release -p ivmatch-core --example solve_timing -- 1000 15`

use std::time::Instant;

use ivmatch_core::design::{build_discrepancy_matrix, DesignConfig};
use ivmatch_core::matching::min_weight_perfect_matching;
use ivmatch_core::Unit;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(1000, |a| a.parse().expect("n"));
    let caliper: f64 = args.next().map_or(15.0, |a| a.parse().expect("caliper"));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let units: Vec<Unit> = (0..n)
        .map(|i| {
            let x: Vec<f64> = (0..5).map(|_| rng.random()).collect();
            let dose = 5.0 + 45.0 * rng.random::<f64>();
            Unit::new(format!("u{i}"), x, dose, false, 0.0).unwrap()
        })
        .collect();
    let t = Instant::now();
    let cfg = DesignConfig::with_dose_caliper(caliper, 1.0);
    let m = build_discrepancy_matrix(&units, None, &cfg).unwrap();
    let built = t.elapsed();
    let p = min_weight_perfect_matching(&m).unwrap();
    let solved = t.elapsed() - built;
    let cert = p.certificate.as_ref().unwrap().verify(&m, &p.partner).is_ok();
    println!("n={n} build={built:?} solve={solved:?} total={} certificate={cert}", p.total_weight);
}
