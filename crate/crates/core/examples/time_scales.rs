//! Fast switching: the comparable-rate Hamiltonian with rates scaled by
//! gamma approaches the averaged one as gamma grows.

use effham::hamiltonian::{hamiltonian_at, SolverParams};
use effham::model::Regime;
use effham::presets;

fn main() -> effham::Result<()> {
    let base = presets::two_state_flashing();
    let params = SolverParams::default();
    let p = [0.8];
    let (averaged, _) = hamiltonian_at(&base.clone().with_regime(Regime::Averaged).into(), &p, &params)?;
    println!("averaged: H = {averaged:.6}");
    for gamma in [1.0, 10.0, 100.0, 1000.0] {
        let (h, _) = hamiltonian_at(&base.clone().with_gamma(gamma).into(), &p, &params)?;
        println!("gamma {gamma:>6}: H = {h:.6}  diff {:.2e}", (h - averaged).abs());
    }
    Ok(())
}
