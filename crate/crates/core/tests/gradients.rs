#[path = "support/gradcheck.rs"]
mod gradcheck;

use gradcheck::{fd_mismatch, random_instance};
use twoport_core::diffsim::{loss_and_grad, CandidateConfig};
use twoport_core::sim::{default_grid, simulate};
use twoport_core::{Configuration, CurrentProbe, Setup, Termination};

#[test]
fn tape_gradient_matches_central_differences() {
    let grid = default_grid();
    let setups = [
        Setup::new(Termination::Load(1.0), CurrentProbe::Input),
        Setup::new(Termination::OpenCircuit, CurrentProbe::Input),
    ];
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let setup = setups[seed as usize % 2];
        let (cand, gold) = random_instance(seed);
        let target = simulate(&gold, &grid, &setup).unwrap();
        let m = fd_mismatch(&cand, &target, &setup);
        assert!(m <= 1.0, "seed {seed} {gold}: mismatch {m:e} of allowed");
        worst = worst.max(m);
    }
    eprintln!("worst mismatch {worst:e} of allowed");
}

#[test]
fn series_resistor_gradient_points_to_two_ohms() {
    let grid = default_grid();
    let setup = Setup::default();
    let target = simulate(&"S:R:2".parse().unwrap(), &grid, &setup).unwrap();
    let structure: Configuration = "S:R:1".parse().unwrap();
    for r in [0.5f64, 1.0, 1.9, 2.1, 4.0, 40.0] {
        let c = CandidateConfig::with_log_values(&structure, vec![r.ln()]).unwrap();
        let (_, g) = loss_and_grad(&c, &target, &setup).unwrap();
        // descent moves log R towards log 2
        assert_eq!(g[0] > 0.0, r > 2.0, "R = {r}");
    }
}
