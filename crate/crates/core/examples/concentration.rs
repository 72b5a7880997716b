//! Empirical velocities concentrate at DH(0) as the scale shrinks.
//!
//! `cargo run --release --example concentration`

use effham::hamiltonian::SolverParams;
use effham::presets;
use effham::simulate::{concentration_with_prediction, BatchConfig, Scale};

fn main() -> effham::Result<()> {
    let cfg = BatchConfig::new(1.0, 200, 2024);
    let model = presets::tilted_cosine(1.0).into();
    let scales = [Scale::Epsilon(0.1), Scale::Epsilon(0.05), Scale::Epsilon(0.025)];
    let report = concentration_with_prediction(&model, &scales, &cfg, &SolverParams::default(), 0.0)?;
    report.write_csv(std::io::stdout())?;
    println!("sd decreasing: {}", report.sd_monotone);

    let walk = presets::discrete_asymmetric(2.0, 1.0).into();
    let scales = [Scale::Lattice(10), Scale::Lattice(40), Scale::Lattice(160)];
    let report = concentration_with_prediction(&walk, &scales, &cfg, &SolverParams::default(), 0.0)?;
    report.write_csv(std::io::stdout())?;
    Ok(())
}
