//! Orthonormality of the normalized Hermite functions by quadrature.

use extrap_cert::hermite::{orthonormality_error, quadrature_gram, HermiteBasis};

fn main() -> extrap_cert::Result<()> {
    let b = HermiteBasis::new(10)?;
    for x in [-1.0, 0.0, 0.5] {
        let v: Vec<String> = b.psi_all(x).iter().take(5).map(|p| format!("{p:+.5}")).collect();
        println!("psi_0..4({x:+}) = {}", v.join(" "));
    }
    let g = quadrature_gram(3, 12.0, 4001);
    println!("gram (n <= 3):\n{g:.2e}");
    println!("max |gram - I| for n <= 10: {:.2e}", orthonormality_error(10, 12.0, 4001));
    Ok(())
}
