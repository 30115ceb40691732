//! Matrix identities behind the Gaussian bounds, on random instances.

use extrap_cert::gaussian::{lemma3_check, lemma4_check, lemma5_check, random_correlation, random_sigma12};
use extrap_cert::rng::BoxMuller;

fn main() -> extrap_cert::Result<()> {
    let mut g = BoxMuller::from_seed(11);
    let sigma = random_correlation(4, 0.0, &mut g)?;
    let r = lemma3_check(&sigma, 6)?;
    println!("lambda_min(Sigma) = {:.4}", r.lambda_min);
    for (k, l) in r.lambda_min_powers.iter().enumerate() {
        println!("  elementwise power {}: {l:.4}", k + 1);
    }
    let s12 = random_sigma12(4, 3, 1.0, &mut g)?;
    println!("sigma_max <= 1: {}", lemma4_check(&s12)?);
    let r5 = lemma5_check(&s12)?;
    println!(
        "lambda_min(block) {:.6} vs 1 - sigma_max {:.6} (residual {:.1e})",
        r5.lambda_min,
        1.0 - r5.sigma_max,
        r5.residual
    );
    Ok(())
}
