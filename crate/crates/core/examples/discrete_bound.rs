//! Spectral bound vs exact error ratio for discrete features.
//!
//! `cargo run --example discrete_bound [-- p.txt q.txt]`

use std::path::Path;

use extrap_cert::discrete::{exact_rer_discrete, random_pair_shared_support, rer_upper_bound_discrete, DiscreteJoint};
use extrap_cert::rng::seeded;

fn show(name: &str, p: &DiscreteJoint, q: &DiscreteJoint) -> extrap_cert::Result<()> {
    let b = rer_upper_bound_discrete(p, q)?;
    let e = exact_rer_discrete(p, q)?;
    println!(
        "{name:<24} exact {:<10.6} bound {:<10.6} (lambda_{} = {:.4}, marginal ratio {:.3})",
        e.tau, b.bound, b.num_features, b.lambda_k, b.marginal_ratio
    );
    Ok(())
}

fn main() -> extrap_cert::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let [p, q] = args.as_slice() {
        return show("files", &DiscreteJoint::load(Path::new(p))?, &DiscreteJoint::load(Path::new(q))?);
    }
    let u = DiscreteJoint::uniform(vec![2, 2])?;
    show("uniform 2x2", &u, &u)?;

    let mut rng = seeded(1);
    for (i, arities) in [vec![4, 5], vec![6, 6], vec![3, 3, 4]].into_iter().enumerate() {
        let (p, q) = random_pair_shared_support(&arities, 0.7, &mut rng)?;
        show(&format!("random #{i} {arities:?}"), &p, &q)?;
    }
    Ok(())
}
