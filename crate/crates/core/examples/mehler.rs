//! Truncated Mehler series against the closed form.

use extrap_cert::hermite::{density_recovery_error, mehler_grid_error, HermiteBasis};

fn main() -> extrap_cert::Result<()> {
    let basis = HermiteBasis::default();
    println!("{:>6} {:>6} {:>12}", "rho", "terms", "grid error");
    for rho in [0.2, 0.5, 0.9] {
        for n in [20, 60, 120] {
            let e = mehler_grid_error(&basis, &[rho, -rho], 61, 3.0, n)?;
            println!("{rho:>6} {n:>6} {e:>12.3e}");
        }
    }
    let d = density_recovery_error(&[-0.9, -0.5, 0.2, 0.9], 61, 3.0)?;
    println!("density recovery error {d:.3e}");
    Ok(())
}
