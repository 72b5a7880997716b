//! Transport from switching between two unbiased periodic potentials.
//!
//! `cargo run --release --example flashing_ratchet`

use effham::hamiltonian::{velocity_of, SolverParams};
use effham::presets;
use effham::simulate::{simulate_batch, BatchConfig, Scale};

fn main() -> effham::Result<()> {
    let model = presets::two_state_flashing().into();
    let (v, _) = velocity_of(&model, &SolverParams::default(), 0.05)?;
    println!("cell problem: DH(0) = {:.5}", v.velocity[0]);

    let mut cfg = BatchConfig::new(2.0, 200, 9);
    cfg.dt_fraction = 1.0 / 400.0;
    for eps in [0.1, 0.05] {
        let batch = simulate_batch(&model, Scale::Epsilon(eps), &cfg)?;
        println!("eps {eps}: mean velocity {:.4} +- {:.4} ({} switches)", batch.mean, batch.se, batch.switches);
    }
    Ok(())
}
