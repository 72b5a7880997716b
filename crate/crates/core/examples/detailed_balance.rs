//! Under detailed balance H is even; without it, it need not be.

use effham::chain::detailed_balance_report;
use effham::hamiltonian::{convexity_report, sweep, symmetry_check, SolverParams};
use effham::model::Model;
use effham::presets;

fn report(name: &str, model: &Model) -> effham::Result<()> {
    let table = sweep(model, -2.0, 2.0, 21, &SolverParams::default())?;
    let sym = symmetry_check(&table);
    let convex = convexity_report(&table);
    println!("{name}: max |H(p) - H(-p)| = {:.3e}, max midpoint excess {:.1e} (<= 0 is convex)", sym.max_residual, convex.max_violation);
    Ok(())
}

fn main() -> effham::Result<()> {
    let pair = presets::detailed_balance_pair();
    println!("detailed balance holds: {}", detailed_balance_report(&pair, 128).holds);
    report("balanced", &pair.into())?;
    report("tilted", &presets::tilted_cosine(0.5).into())?;
    report("flashing", &presets::two_state_flashing().into())?;
    Ok(())
}
