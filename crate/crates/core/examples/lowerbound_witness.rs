//! A ReLU network that is zero on the source support and large on the target.

use extrap_cert::lowerbound::{build_witness, random_band, random_cap};
use extrap_cert::rng::BoxMuller;

fn main() -> extrap_cert::Result<()> {
    let mut g = BoxMuller::from_seed(4);
    // Source: a band around the equator of S^2; target: a polar cap.
    let p = random_band(3, 500, 0.3, &mut g);
    let q = random_cap(3, 200, 0.9, &mut g);
    for c in [1.0, 10.0, 100.0] {
        let (net, r) = build_witness(&p, &q, 0.5, c)?;
        println!(
            "c = {c:>5}: {} neurons, max |f| on P = {}, min f on Q = {:.3}, E_Q f^2 = {:.3e}",
            net.len(),
            r.max_abs_on_p,
            r.min_on_q,
            r.mean_sq_on_q
        );
    }
    Ok(())
}
