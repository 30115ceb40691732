//! Connectivity of the source support graph decides whether the bound is finite.

use extrap_cert::discrete::{
    is_connected, lambda2_normalized, random_block_diagonal, random_joint, rer_upper_bound_discrete,
};
use extrap_cert::rng::seeded;

fn main() -> extrap_cert::Result<()> {
    let mut rng = seeded(7);
    println!("{:<14} {:>9} {:>12} {:>10}", "joint", "connected", "lambda_2", "bound");
    for i in 0..4 {
        let p = if i % 2 == 0 {
            random_joint(&[5, 5], 0.8, &mut rng)?
        } else {
            random_block_diagonal(5, 5, 2, &mut rng)?
        };
        let kind = if i % 2 == 0 { "dense random" } else { "two clusters" };
        let bound = rer_upper_bound_discrete(&p, &p)?.bound;
        println!("{kind:<14} {:>9} {:>12.3e} {bound:>10.4}", is_connected(&p)?, lambda2_normalized(&p));
    }
    Ok(())
}
