//! Sweep H(p) for a constant force and compare with the closed form.

use effham::hamiltonian::{sweep, SolverParams};
use effham::presets;

fn main() -> effham::Result<()> {
    let force = 1.0;
    let model = presets::constant_drift(force).into();
    let table = sweep(&model, -3.0, 3.0, 13, &SolverParams::default().with_grid(256))?;
    println!("{:>6} {:>12} {:>12} {:>10}", "p", "H", "exact", "gap");
    for (p, h) in table.axis_line(0) {
        let exact = 0.5 * p * p + force * p;
        println!("{p:>6.2} {h:>12.6} {exact:>12.6} {:>10.1e}", (h - exact).abs());
    }
    println!("max cw gap {:.2e}", table.max_cw_gap());
    Ok(())
}
