//! Evaluate the Huber and arctan contrasts and check their axioms on a grid.

use robust_lpa::contrast::{validate_contrast, ContrastSpec};

fn main() -> robust_lpa::Result<()> {
    for c in [ContrastSpec::huber(1.0), ContrastSpec::arctan(1.0)] {
        println!("{:?} gamma = {}, sup |rho'| = {:.6}", c.kind, c.gamma, c.rho_prime_sup());
        for z in [-3.0, -1.0, -0.5, 0.0, 0.5, 1.0, 3.0] {
            println!("  z = {z:>5}: rho = {:>9.6}  rho' = {:>9.6}  rho'' = {:>9.6}", c.rho(z), c.rho_prime(z), c.rho_second(z));
        }
        let v = validate_contrast(&c, 10.0, 2001)?;
        for chk in &v.checks {
            println!("  {:?}: worst violation {:.2e}", chk.axiom, chk.worst_violation);
        }
        println!("  all axioms hold: {}", v.all_passed());
    }
    Ok(())
}
