use rand::seq::SliceRandom;
use rand::Rng;

use super::DiscreteJoint;
use crate::error::{Error, Result};

fn check_density(density: f64) -> Result<()> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::invalid(format!("density {density} outside (0, 1]")));
    }
    Ok(())
}

/// Random support pattern: each cell kept with probability `density`,
/// never empty.
fn random_support<R: Rng>(cells: usize, density: f64, rng: &mut R) -> Vec<bool> {
    let mut keep: Vec<bool> = (0..cells).map(|_| rng.gen::<f64>() < density).collect();
    if !keep.iter().any(|&k| k) {
        keep[rng.gen_range(0..cells)] = true;
    }
    keep
}

fn weights_on<R: Rng>(support: &[bool], rng: &mut R) -> Vec<f64> {
    support
        .iter()
        .map(|&s| if s { rng.gen_range(0.05..1.0) } else { 0.0 })
        .collect()
}

/// Joint with a random sparse support and random weights on it.
pub fn random_joint<R: Rng>(arities: &[usize], density: f64, rng: &mut R) -> Result<DiscreteJoint> {
    check_density(density)?;
    let cells = arities.iter().product();
    let support = random_support(cells, density, rng);
    DiscreteJoint::from_weights(arities.to_vec(), weights_on(&support, rng))
}

/// Two joints with the same random support and independent weights.
pub fn random_pair_shared_support<R: Rng>(
    arities: &[usize],
    density: f64,
    rng: &mut R,
) -> Result<(DiscreteJoint, DiscreteJoint)> {
    check_density(density)?;
    let cells = arities.iter().product();
    let support = random_support(cells, density, rng);
    let p = DiscreteJoint::from_weights(arities.to_vec(), weights_on(&support, rng))?;
    let q = DiscreteJoint::from_weights(arities.to_vec(), weights_on(&support, rng))?;
    Ok((p, q))
}

/// Clusterable two-feature joint: rows and columns are split into
/// `clusters` groups and mass only sits on matching groups, so the
/// bipartite graph has exactly `clusters` components. Group membership is
/// shuffled, so the block structure is hidden behind a permutation.
pub fn random_block_diagonal<R: Rng>(
    r1: usize,
    r2: usize,
    clusters: usize,
    rng: &mut R,
) -> Result<DiscreteJoint> {
    if clusters < 2 || clusters > r1.min(r2) {
        return Err(Error::invalid(format!(
            "need 2 <= clusters <= min(r1, r2), got {clusters}"
        )));
    }
    let row_group = random_partition(r1, clusters, rng);
    let col_group = random_partition(r2, clusters, rng);
    let mut w = vec![0.0; r1 * r2];
    for a in 0..r1 {
        for b in 0..r2 {
            if row_group[a] == col_group[b] {
                w[a * r2 + b] = rng.gen_range(0.05..1.0);
            }
        }
    }
    DiscreteJoint::from_weights(vec![r1, r2], w)
}

/// Surjective random assignment of `n` items to `groups` labels.
fn random_partition<R: Rng>(n: usize, groups: usize, rng: &mut R) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..groups).collect();
    labels.extend((groups..n).map(|_| rng.gen_range(0..groups)));
    labels.shuffle(rng);
    labels
}
