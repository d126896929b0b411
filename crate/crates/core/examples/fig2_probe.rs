//! Quick probe of the desk-scale NMSE sweep with a reduced trial count.

use riscade_core::harness::{build_preset, run_experiment};

fn main() {
    let mut spec = build_preset("fig2-desk").unwrap();
    let trials: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(30);
    spec.trials = trials;
    let t0 = std::time::Instant::now();
    let rows = run_experiment(&spec).unwrap();
    println!("elapsed: {:.1} s for {} trials/cell", t0.elapsed().as_secs_f64(), trials);
    println!("{:<6} {:<22} {:>10} {:>8}", "J", "variant", "nmse_db", "used");
    for r in &rows {
        println!("{:<6} {:<22} {:>10.2} {:>8}", r.sweep_value, r.variant, r.nmse_db, r.trials_used);
    }
}
