//! Exact error ratio for pairwise-Gaussian features vs the `d / λ_min` bound.

use extrap_cert::gaussian::{exact_kappa, random_correlation, rer_bound_pairwise, CorrelationSpec};
use extrap_cert::numerics::SymMatrix;
use extrap_cert::rng::BoxMuller;

fn main() -> extrap_cert::Result<()> {
    let p = CorrelationSpec::standard(SymMatrix::identity(2))?;
    let q = CorrelationSpec::standard(SymMatrix::new(nalgebra::dmatrix![1.0, 0.8; 0.8, 1.0])?)?;
    let k = exact_kappa(&p, &q, 60)?;
    println!("independent P, rho_Q = 0.8: kappa = {} at level {}", k.kappa, k.argmax_level);

    let mut g = BoxMuller::from_seed(5);
    for d in [2, 3, 5] {
        let p = CorrelationSpec::standard(random_correlation(d, 0.1, &mut g)?)?;
        let q = CorrelationSpec::standard(random_correlation(d, 0.0, &mut g)?)?;
        let k = exact_kappa(&p, &q, 60)?;
        let b = rer_bound_pairwise(&p)?;
        println!(
            "d = {d}: kappa {:.4} (level {}), certified {:.4}, bound {:.4}",
            k.kappa,
            k.argmax_level,
            k.certified(),
            b.bound
        );
    }
    Ok(())
}
