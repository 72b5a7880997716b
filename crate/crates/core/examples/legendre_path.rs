//! Lagrangian by Legendre transform and the cost of a few paths.

use effham::hamiltonian::{legendre, path_rate, sweep, SolverParams};
use effham::presets;

fn main() -> effham::Result<()> {
    let model = presets::discrete_asymmetric(2.0, 1.0).into();
    let table = sweep(&model, -4.0, 4.0, 161, &SolverParams::default())?;
    let vs: Vec<f64> = (0..=10).map(|k| 0.3 * k as f64).collect();
    let lag = legendre(&table, &vs)?;
    for ((v, l), p) in lag.velocities.iter().zip(&lag.values).zip(&lag.pstar) {
        println!("v {v:.1}  L {l:.5}  p* {p:+.3}");
    }
    let typical = [(0.0, 0.0), (1.0, 1.0)];
    let detour = [(0.0, 0.0), (0.5, 1.0), (1.0, 1.0)];
    println!("typical path {:.5}", path_rate(&typical, &lag, 0.0)?);
    println!("detour       {:.5}", path_rate(&detour, &lag, 0.0)?);
    Ok(())
}
