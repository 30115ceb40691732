//! Library results against independent constructions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;

use extrap_cert::discrete::{exact_rer_discrete, random_joint, random_pair_shared_support, rer_upper_bound_discrete, DiscreteJoint};
use extrap_cert::experiments::{compare, ExperimentConfig};
use extrap_cert::gaussian::{
    exact_kappa, mc_ratio_estimate, random_correlation, rer_bound_two_block, BlockGaussianSpec, CorrelationSpec,
    GaussianSampler,
};
use extrap_cert::hermite::{mehler_closed_form, mehler_series, HermiteBasis};
use extrap_cert::numerics::SymMatrix;
use extrap_cert::rng::{seeded, BoxMuller};

/// Second-moment matrix of the one-hot encoding, summed cell by cell.
fn moment_matrix(p: &DiscreteJoint) -> DMatrix<f64> {
    let ar = p.arities().to_vec();
    let n: usize = ar.iter().sum();
    let mut k = DMatrix::zeros(n, n);
    for (idx, m) in p.table().cells() {
        if m == 0.0 {
            continue;
        }
        let mut e = DVector::zeros(n);
        let mut off = 0;
        for (i, &x) in idx.iter().enumerate() {
            e[off + x] = 1.0;
            off += ar[i];
        }
        k += m * &e * e.transpose();
    }
    k
}

/// `sup vᵀBv / vᵀAv` by whitening on the range of `A`.
fn oracle_ratio(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(a.clone());
    let top = eig.eigenvalues.max();
    let tol = 1e-10 * top.max(1.0);
    let (range, null): (Vec<usize>, Vec<usize>) = (0..a.nrows()).partition(|&i| eig.eigenvalues[i] > tol);
    let v = |idx: &[usize]| DMatrix::from_columns(&idx.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    if !null.is_empty() {
        let n = v(&null);
        if (n.transpose() * b * &n).norm() > 1e-8 {
            return f64::INFINITY;
        }
    }
    let r = v(&range);
    let w = DMatrix::from_diagonal(&DVector::from_iterator(range.len(), range.iter().map(|&i| eig.eigenvalues[i].powf(-0.5))));
    let m = &w * r.transpose() * b * &r * &w;
    SymmetricEigen::new((&m + m.transpose()) * 0.5).eigenvalues.max()
}

#[test]
fn exact_ratio_matches_whitened_oracle() {
    let mut rng = seeded(31);
    for i in 0..60 {
        let k = 2 + i % 2;
        let ar: Vec<usize> = (0..k).map(|_| rng.gen_range(2..=4)).collect();
        let (p, q) = if i % 4 == 0 {
            (random_joint(&ar, 0.7, &mut rng).unwrap(), random_joint(&ar, 0.7, &mut rng).unwrap())
        } else {
            random_pair_shared_support(&ar, 0.8, &mut rng).unwrap()
        };
        let got = exact_rer_discrete(&p, &q).unwrap().tau;
        let want = oracle_ratio(&moment_matrix(&p), &moment_matrix(&q));
        if want.is_infinite() {
            assert!(got.is_infinite(), "instance {i}: {got} vs inf");
        } else {
            assert!((got - want).abs() <= 1e-7 * want.max(1.0), "instance {i}: {got} vs {want}");
        }
    }
}

#[test]
fn kappa_with_independent_source_is_top_level_eigenvalue() {
    let mut g = BoxMuller::from_seed(9);
    for d in [2, 3, 4] {
        let q_sigma = random_correlation(d, 0.2, &mut g).unwrap();
        let p = CorrelationSpec::standard(SymMatrix::identity(d)).unwrap();
        let q = CorrelationSpec::standard(q_sigma.clone()).unwrap();
        let k = exact_kappa(&p, &q, 40).unwrap().kappa;
        let want = (1..=40)
            .map(|n| {
                let m = q_sigma.as_matrix().map(|x| x.powi(n));
                SymmetricEigen::new(m).eigenvalues.max()
            })
            .fold(1.0, f64::max);
        assert!((k - want).abs() < 1e-9, "d {d}: {k} vs {want}");
    }
}

#[test]
fn two_block_bound_for_diagonal_cross_covariance() {
    let s = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.75, 0.1]));
    let b = rer_bound_two_block(&BlockGaussianSpec::new(s).unwrap()).unwrap();
    assert!((b.bound - 8.0).abs() < 1e-12);
    assert!((b.lambda_min_block - 0.25).abs() < 1e-12);
}

#[test]
fn monte_carlo_ratio_of_identical_distributions_is_one() {
    let spec = BlockGaussianSpec::new(DMatrix::from_element(2, 2, 0.3)).unwrap();
    let s = GaussianSampler::standard(&spec.block_matrix(), 0).unwrap();
    let r = mc_ratio_estimate(|x| x[0] * x[1] - 0.3, |x| x[0].powi(2), 2, &s, &s, 200_000, 5).unwrap();
    assert!((r.ratio - 1.0).abs() < 4.0 * r.stderr, "{} ± {}", r.ratio, r.stderr);
}

#[test]
fn mehler_series_at_high_order_matches_closed_form() {
    // Tail decays like 0.9^n: 60 terms leave ~3e-4, 120 terms below 1e-6.
    let basis = HermiteBasis::default();
    for (x1, x2) in [(0.0, 0.0), (1.0, 1.0), (-2.0, 1.5), (3.0, 3.0)] {
        let exact = mehler_closed_form(0.9, x1, x2).unwrap();
        let approx = mehler_series(&basis, 0.9, x1, x2, 120).unwrap();
        assert!((exact - approx).abs() < 5e-6, "({x1}, {x2}): {exact} vs {approx}");
    }
}

#[test]
fn structured_discrepancy_respects_block_bound() {
    let kv = extrap_cert::config::KeyValues::load(std::path::Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/data/quick.cfg"
    )))
    .unwrap();
    for seed in 0..3 {
        let cfg = ExperimentConfig::from_config(&kv, &[]).unwrap().with_seed(seed);
        let c = compare(&cfg).unwrap();
        let d = c.discrepancy;
        assert!(d.ratio <= c.certified_bound * (1.0 + 3.0 * d.stderr), "{} vs {}", d.ratio, c.certified_bound);
        assert!(c.structured.id_loss.is_finite() && c.structured.id_loss >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_ratio_is_at_least_one_and_one_for_equal_joints(
        seed in any::<u64>(),
        r1 in 2usize..5,
        r2 in 2usize..5,
        density in 0.3f64..1.0,
    ) {
        let mut rng = seeded(seed);
        let (p, q) = random_pair_shared_support(&[r1, r2], density, &mut rng).unwrap();
        let t = exact_rer_discrete(&p, &q).unwrap().tau;
        prop_assert!(t >= 1.0 - 1e-9);
        prop_assert!(t <= rer_upper_bound_discrete(&p, &q).unwrap().bound + 1e-8);
        let same = exact_rer_discrete(&p, &p).unwrap().tau;
        prop_assert!((same - 1.0).abs() < 1e-8);
    }

    #[test]
    fn mixing_toward_the_source_shrinks_the_ratio(seed in any::<u64>(), w in 0.0f64..1.0) {
        // τ(P, (1-w)Q + wP) ≤ (1-w)τ(P, Q) + w, since the numerator is linear in Q.
        let mut rng = seeded(seed);
        let (p, q) = random_pair_shared_support(&[3, 3], 0.8, &mut rng).unwrap();
        let mix: Vec<f64> = p.table().values().iter().zip(q.table().values()).map(|(a, b)| w * a + (1.0 - w) * b).collect();
        let m = DiscreteJoint::new(vec![3, 3], mix).unwrap();
        let t = exact_rer_discrete(&p, &q).unwrap().tau;
        let tm = exact_rer_discrete(&p, &m).unwrap().tau;
        prop_assert!(tm <= (1.0 - w) * t + w + 1e-8);
    }
}
