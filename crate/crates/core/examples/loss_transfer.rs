//! Target loss of an additive model bounded by source loss and the error ratio.

use extrap_cert::discrete::{check_prop1, AdditiveCoefficients, DiscreteJoint, ProductTable};

fn main() -> extrap_cert::Result<()> {
    let p = DiscreteJoint::uniform(vec![3, 3])?;
    let q = DiscreteJoint::from_weights(vec![3, 3], vec![3.0, 1.0, 1.0, 1.0, 3.0, 1.0, 1.0, 1.0, 3.0])?;
    // A labeling that is additive plus a small interaction.
    let y = ProductTable::from_fn(vec![3, 3], |x| x[0] as f64 - 0.5 * x[1] as f64 + 0.1 * (x[0] * x[1]) as f64)?;
    let fstar = AdditiveCoefficients::new(&[3, 3], vec![0.0, 1.1, 2.2, 0.0, -0.4, -0.8])?;
    let f = AdditiveCoefficients::new(&[3, 3], vec![0.1, 1.0, 2.3, 0.0, -0.5, -0.7])?;
    let r = check_prop1(&p, &q, &y, &fstar, &f)?;
    println!("tau          {:.4}", r.tau);
    println!("eps_F        {:.4e}", r.eps_f);
    println!("source loss  {:.4e}", r.source_loss);
    println!("target loss  {:.4e}  <=  {:.4e}  ({})", r.lhs, r.rhs, r.holds);
    Ok(())
}
