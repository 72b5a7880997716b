//! Lattice walk with site-dependent hop rates and two chemical states.

use effham::hamiltonian::{sweep, velocity, SolverParams};
use effham::model::{DiscreteModel, Regime};
use effham::presets;

fn main() -> effham::Result<()> {
    let walk = presets::discrete_asymmetric(2.0, 1.0);
    let table = sweep(&walk.into(), -2.0, 2.0, 41, &SolverParams::default())?;
    println!("constant walk: DH(0) = {:.6} (r+ - r- = 1)", velocity(&table)?.velocity[0]);

    // state 0 pushes right on even sites, state 1 pushes left everywhere
    let model = DiscreteModel::new(
        vec![vec![3.0, 1.0, 3.0, 1.0], vec![0.5; 4]],
        vec![vec![1.0; 4], vec![1.5; 4]],
        vec![vec![vec![0.0; 4], vec![0.8, 0.2, 0.8, 0.2]], vec![vec![0.4; 4], vec![0.0; 4]]],
        Regime::Comparable,
    );
    for regime in [Regime::Comparable, Regime::Averaged] {
        let m = model.clone().with_regime(regime).into();
        let table = sweep(&m, -2.0, 2.0, 41, &SolverParams::default())?;
        let v = velocity(&table)?;
        println!("regime {regime}: DH(0) = {:.6}, H(1) = {:.6}", v.velocity[0], table.value_at(&[1.0]).unwrap());
    }
    Ok(())
}
