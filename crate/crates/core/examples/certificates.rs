//! Inspect one eigen solve: Collatz-Wielandt bracket, residual, and the
//! operator itself as `row,col,value` triplets.

use effham::eigen::{assemble, principal_eigenpair, Discretization, EigenMethod, EigenParams};
use effham::presets;

fn main() -> effham::Result<()> {
    let model = presets::detailed_balance_pair().into();
    let op = assemble(&model, &[0.5], 64, Discretization::ExponentialTilt)?;
    println!("n = {}, nnz = {}, irreducible = {}", op.len(), op.nnz(), op.is_irreducible());
    for method in [EigenMethod::Power, EigenMethod::ShiftInvert] {
        let cert = principal_eigenpair(&op, &EigenParams::default().with_method(method))?;
        println!(
            "{method:?}: lambda {:.12} in [{:.12}, {:.12}], residual {:.1e}, {} iterations",
            cert.eigenvalue, cert.cw_lower, cert.cw_upper, cert.residual, cert.iterations
        );
    }
    let path = std::env::temp_dir().join("effham_operator.csv");
    op.write_triplets(std::fs::File::create(&path)?)?;
    println!("triplets in {}", path.display());
    Ok(())
}
