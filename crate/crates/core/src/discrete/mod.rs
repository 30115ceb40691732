//! Extrapolation of additive models over discrete features.
//!
//! For `f(x) = Σ_i f_i(x_i)` over features `x_i ∈ [r_i]`, write `f` in the
//! indicator basis `b_{i,t}(x) = 1{x_i = t}` with coefficient vector `v`.
//! Then `E_P[f²] = vᵀ K_P v`, where `K_P` is the block kernel whose diagonal
//! blocks hold the marginals of `P` and whose off-diagonal blocks hold the
//! pairwise joints. For two features `K_P` is the signless Laplacian of the
//! bipartite graph with adjacency equal to the density matrix.
//!
//! The error ratio is `τ = sup_v vᵀK_Q v / vᵀK_P v` ([`exact_rer_discrete`]),
//! and it is bounded by
//!
//! ```text
//! τ ≤ k · λ_k(K̄_P)^{-1} · max_{i,t} Q(x_i = t) / P(x_i = t)
//! ```
//!
//! ([`rer_upper_bound_discrete`]), where `K̄_P = D^{-1/2} K_P D^{-1/2}`.
//! The `k - 1` sign vectors `u_t` (+1 on block `t`, -1 on block `t+1`) are
//! null for every kernel, which is why `λ_k` rather than `λ_1` appears.

mod random;
mod table;

pub use random::{random_block_diagonal, random_joint, random_pair_shared_support};
pub use table::{Cells, ProductTable};

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{self, SymMatrix, DEFAULT_NULL_TOL};

pub const MAX_FEATURES: usize = 5;
pub const MAX_ARITY: usize = 12;
const MASS_SUM_TOL: f64 = 1e-12;
const EDGE_TOL: f64 = 1e-15;

/// A probability table over `k` discrete features.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    table: ProductTable,
}

impl DiscreteJoint {
    pub fn new(arities: Vec<usize>, masses: Vec<f64>) -> Result<Self> {
        Self::from_table(ProductTable::new(arities, masses)?)
    }

    pub fn from_table(table: ProductTable) -> Result<Self> {
        let k = table.arities().len();
        if !(2..=MAX_FEATURES).contains(&k) {
            return Err(Error::invalid(format!(
                "need 2..={MAX_FEATURES} features, got {k}"
            )));
        }
        if let Some(r) = table.arities().iter().find(|&&r| r > MAX_ARITY) {
            return Err(Error::invalid(format!("arity {r} exceeds {MAX_ARITY}")));
        }
        if table.values().iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("probability masses must be nonnegative"));
        }
        let total: f64 = table.values().iter().sum();
        if (total - 1.0).abs() > MASS_SUM_TOL {
            return Err(Error::invalid(format!("masses sum to {total}, expected 1")));
        }
        Ok(Self { table })
    }

    /// Normalizes nonnegative weights into a joint.
    pub fn from_weights(arities: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("weights must have positive total"));
        }
        Self::new(arities, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(arities: Vec<usize>) -> Result<Self> {
        let cells: usize = arities.iter().product();
        Self::from_weights(arities, vec![1.0; cells])
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        Self::from_table(ProductTable::parse(text, source)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_table(ProductTable::load(path)?)
    }

    pub fn table(&self) -> &ProductTable {
        &self.table
    }

    pub fn arities(&self) -> &[usize] {
        self.table.arities()
    }

    pub fn num_features(&self) -> usize {
        self.arities().len()
    }

    /// `r = Σ r_i`, the dimension of the indicator basis.
    pub fn basis_dim(&self) -> usize {
        self.arities().iter().sum()
    }

    /// Prefix sums of the arities (length `k + 1`).
    pub fn block_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.num_features() + 1);
        out.push(0);
        for r in self.arities() {
            out.push(out.last().unwrap() + r);
        }
        out
    }

    pub fn mass(&self, idx: &[usize]) -> f64 {
        self.table.get(idx)
    }

    pub fn marginal(&self, feature: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.arities()[feature]];
        for (idx, m) in self.table.cells() {
            out[idx[feature]] += m;
        }
        out
    }

    /// `r_i x r_j` matrix of `P(x_i = a, x_j = b)` for `i != j`.
    pub fn pairwise(&self, i: usize, j: usize) -> DMatrix<f64> {
        let ar = self.arities();
        let mut out = DMatrix::zeros(ar[i], ar[j]);
        for (idx, m) in self.table.cells() {
            out[(idx[i], idx[j])] += m;
        }
        out
    }

    /// Relabels the values of one feature: new value `perm[t]` carries the
    /// mass of old value `t`.
    pub fn relabel(&self, feature: usize, perm: &[usize]) -> Result<Self> {
        let r = self.arities()[feature];
        let mut check = perm.to_vec();
        check.sort_unstable();
        if check != (0..r).collect::<Vec<_>>() {
            return Err(Error::invalid("not a permutation of the feature's values"));
        }
        let mut values = vec![0.0; self.table.len()];
        let mut target = vec![0; self.num_features()];
        for (idx, m) in self.table.cells() {
            target.copy_from_slice(&idx);
            target[feature] = perm[idx[feature]];
            values[self.table.flat_index(&target)] = m;
        }
        Self::new(self.arities().to_vec(), values)
    }

    fn same_shape(&self, other: &DiscreteJoint) -> Result<()> {
        if self.arities() != other.arities() {
            return Err(Error::shape(format!(
                "arities differ: {:?} vs {:?}",
                self.arities(),
                other.arities()
            )));
        }
        Ok(())
    }
}

/// Block kernel `K_P` and its normalization.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub block_offsets: Vec<usize>,
    pub k: SymMatrix,
    /// `D^{-1/2} K D^{-1/2}`; rows and columns of zero-mass coordinates are zero.
    pub kbar: SymMatrix,
    /// Marginal masses, i.e. the diagonal of `K`.
    pub diag: Vec<f64>,
}

impl KernelMatrix {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Coordinates with positive marginal mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&t| self.diag[t] > 0.0).collect()
    }

    /// Ascending spectrum of `K̄` restricted to positive-mass coordinates.
    ///
    /// Zero-mass coordinates only add decoupled zero rows to `K̄`; dropping
    /// them keeps the eigenvalue index meaningful.
    pub fn normalized_spectrum(&self) -> Vec<f64> {
        let support = self.support();
        let sub = DMatrix::from_fn(support.len(), support.len(), |i, j| {
            self.kbar.get(support[i], support[j])
        });
        numerics::sym_eig(&SymMatrix::new(sub).expect("principal submatrix of a symmetric matrix"))
            .values
    }
}

pub fn build_kernel(joint: &DiscreteJoint) -> KernelMatrix {
    let offsets = joint.block_offsets();
    let k_feat = joint.num_features();
    let r = joint.basis_dim();
    let mut k = DMatrix::<f64>::zeros(r, r);
    for (idx, m) in joint.table().cells() {
        if m == 0.0 {
            continue;
        }
        for i in 0..k_feat {
            let a = offsets[i] + idx[i];
            k[(a, a)] += m;
            for j in (i + 1)..k_feat {
                let b = offsets[j] + idx[j];
                k[(a, b)] += m;
                k[(b, a)] += m;
            }
        }
    }
    let diag: Vec<f64> = (0..r).map(|t| k[(t, t)]).collect();
    let inv_sqrt: Vec<f64> = diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let kbar = DMatrix::from_fn(r, r, |i, j| k[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    KernelMatrix {
        block_offsets: offsets,
        k: SymMatrix::new(k).expect("kernel assembled symmetrically"),
        kbar: SymMatrix::new(kbar).expect("kernel assembled symmetrically"),
        diag,
    }
}

/// Coefficients of an additive function in the indicator basis:
/// `v[offset_i + t] = f_i(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveCoefficients {
    arities: Vec<usize>,
    v: Vec<f64>,
}

impl AdditiveCoefficients {
    pub fn new(arities: &[usize], v: Vec<f64>) -> Result<Self> {
        let r: usize = arities.iter().sum();
        if v.len() != r {
            return Err(Error::shape(format!("expected {r} coefficients, got {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("coefficients must be finite"));
        }
        Ok(Self {
            arities: arities.to_vec(),
            v,
        })
    }

    pub fn zeros(arities: &[usize]) -> Self {
        Self {
            arities: arities.to_vec(),
            v: vec![0.0; arities.iter().sum()],
        }
    }

    /// Whitespace-separated numbers; `#` starts a comment.
    pub fn parse(arities: &[usize], text: &str, source: &str) -> Result<Self> {
        let mut v = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("");
            for tok in line.split_whitespace() {
                v.push(tok.parse::<f64>().map_err(|_| {
                    Error::parse(format!("{source}:{}", lineno + 1), format!("bad number `{tok}`"))
                })?);
            }
        }
        Self::new(arities, v)
    }

    pub fn load(arities: &[usize], path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(arities, &text, &path.display().to_string())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.v)
    }

    /// `Σ_i f_i(x_i)` at a 0-based point.
    pub fn eval(&self, x: &[usize]) -> f64 {
        let mut off = 0;
        let mut s = 0.0;
        for (i, &r) in self.arities.iter().enumerate() {
            s += self.v[off + x[i]];
            off += r;
        }
        s
    }
}

/// `max_{i,t} Q(x_i = t) / P(x_i = t)` with `0/0 = 0` and `c/0 = +inf`.
pub fn marginal_ratio_max(p: &DiscreteJoint, q: &DiscreteJoint) -> Result<f64> {
    p.same_shape(q)?;
    let mut best = 0.0_f64;
    for i in 0..p.num_features() {
        for (pm, qm) in p.marginal(i).into_iter().zip(q.marginal(i)) {
            let ratio = if pm > 0.0 {
                qm / pm
            } else if qm > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            best = best.max(ratio);
        }
    }
    Ok(best)
}

/// Spectral upper bound on `τ` together with its ingredients.
#[derive(Debug, Clone)]
pub struct DiscreteBound {
    pub bound: f64,
    /// `k`-th smallest eigenvalue of `K̄_P` (on positive-mass coordinates).
    pub lambda_k: f64,
    pub marginal_ratio: f64,
    pub num_features: usize,
}

pub fn rer_upper_bound_discrete(p: &DiscreteJoint, q: &DiscreteJoint) -> Result<DiscreteBound> {
    let ratio = marginal_ratio_max(p, q)?;
    let k = p.num_features();
    let kernel = build_kernel(p);
    let spectrum = kernel.normalized_spectrum();
    let lambda_k = spectrum.get(k - 1).copied().unwrap_or(0.0);
    let lam_max = spectrum.last().copied().unwrap_or(0.0);
    let bound = if ratio.is_infinite() || lambda_k <= DEFAULT_NULL_TOL * lam_max {
        f64::INFINITY
    } else {
        k as f64 / lambda_k * ratio
    };
    Ok(DiscreteBound {
        bound,
        lambda_k,
        marginal_ratio: ratio,
        num_features: k,
    })
}

/// Exact error ratio with a maximizing coefficient vector.
#[derive(Debug, Clone)]
pub struct ExactDiscrete {
    pub tau: f64,
    pub witness: Option<AdditiveCoefficients>,
    /// Dimension of the numerical null space of `K_P`.
    pub null_dim: usize,
}

pub fn exact_rer_discrete(p: &DiscreteJoint, q: &DiscreteJoint) -> Result<ExactDiscrete> {
    p.same_shape(q)?;
    let kp = build_kernel(p);
    let kq = build_kernel(q);
    let g = numerics::generalized_max_eig(&kq.k, &kp.k)?;
    let witness = g
        .witness
        .map(|w| AdditiveCoefficients::new(p.arities(), w.iter().copied().collect()))
        .transpose()?;
    Ok(ExactDiscrete {
        tau: g.value,
        witness,
        null_dim: g.null_dim,
    })
}

/// Null directions of `K_P`.
#[derive(Debug, Clone)]
pub struct NullBasis {
    /// The `k - 1` sign vectors shared by every kernel on these arities.
    pub analytic: Vec<DVector<f64>>,
    /// Orthonormal null directions of `K_P` beyond the span of `analytic`.
    pub extra: Vec<DVector<f64>>,
}

pub fn sign_vectors(arities: &[usize]) -> Vec<DVector<f64>> {
    let r: usize = arities.iter().sum();
    let mut offsets = vec![0];
    for a in arities {
        offsets.push(offsets.last().unwrap() + a);
    }
    (0..arities.len() - 1)
        .map(|t| {
            let mut u = DVector::zeros(r);
            for s in offsets[t]..offsets[t + 1] {
                u[s] = 1.0;
            }
            for s in offsets[t + 1]..offsets[t + 2] {
                u[s] = -1.0;
            }
            u
        })
        .collect()
}

pub fn null_basis(p: &DiscreteJoint) -> NullBasis {
    let analytic = sign_vectors(p.arities());
    let kernel = build_kernel(p);
    let spec = numerics::sym_eig(&kernel.k);
    let lam_max = spec.values.last().copied().unwrap_or(0.0).max(0.0);

    let mut ortho: Vec<DVector<f64>> = Vec::new();
    for u in &analytic {
        push_orthonormal(&mut ortho, u.clone(), 1e-8);
    }
    let n_analytic = ortho.len();
    for (i, &lam) in spec.values.iter().enumerate() {
        if lam <= DEFAULT_NULL_TOL * lam_max {
            push_orthonormal(&mut ortho, spec.vector(i), 1e-6);
        }
    }
    let extra = ortho.split_off(n_analytic);
    NullBasis { analytic, extra }
}

fn push_orthonormal(basis: &mut Vec<DVector<f64>>, mut v: DVector<f64>, tol: f64) {
    let norm0 = v.norm();
    for _ in 0..2 {
        for b in basis.iter() {
            let c = b.dot(&v);
            v -= b * c;
        }
    }
    let norm = v.norm();
    if norm > tol * norm0 {
        basis.push(v / norm);
    }
}

/// Connectivity of the bipartite graph of a two-feature joint, over the
/// vertices with positive marginal mass.
pub fn is_connected(p: &DiscreteJoint) -> Result<bool> {
    if p.num_features() != 2 {
        return Err(Error::Unsupported(format!(
            "connectivity is defined for two features, got {}",
            p.num_features()
        )));
    }
    let (r1, r2) = (p.arities()[0], p.arities()[1]);
    let joint = p.pairwise(0, 1);
    let m1 = p.marginal(0);
    let m2 = p.marginal(1);
    let active: Vec<bool> = m1.iter().chain(&m2).map(|&m| m > 0.0).collect();
    let Some(start) = active.iter().position(|&a| a) else {
        return Ok(false);
    };
    let mut seen = vec![false; r1 + r2];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(v) = queue.pop_front() {
        let neighbours: Vec<usize> = if v < r1 {
            (0..r2).filter(|&b| joint[(v, b)] > EDGE_TOL).map(|b| r1 + b).collect()
        } else {
            (0..r1).filter(|&a| joint[(a, v - r1)] > EDGE_TOL).collect()
        };
        for w in neighbours {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    Ok(active.iter().zip(&seen).all(|(&a, &s)| !a || s))
}

/// Second smallest eigenvalue of `K̄_P` on positive-mass coordinates.
pub fn lambda2_normalized(p: &DiscreteJoint) -> f64 {
    build_kernel(p)
        .normalized_spectrum()
        .get(1)
        .copied()
        .unwrap_or(0.0)
}

/// Loss-transfer check for a labeling `y` on the full product space.
#[derive(Debug, Clone)]
pub struct LossTransferReport {
    /// `E_{(P+Q)/2}[(y - f*)²]`.
    pub eps_f: f64,
    pub tau: f64,
    /// `E_Q[(y - f)²]`.
    pub lhs: f64,
    /// `(8τ + 4) ε_F + 4τ E_P[(y - f)²]`; infinite when `τ` is.
    pub rhs: f64,
    pub source_loss: f64,
    pub holds: bool,
}

pub fn check_prop1(
    p: &DiscreteJoint,
    q: &DiscreteJoint,
    y: &ProductTable,
    fstar: &AdditiveCoefficients,
    f: &AdditiveCoefficients,
) -> Result<LossTransferReport> {
    p.same_shape(q)?;
    if y.arities() != p.arities() {
        return Err(Error::shape("label table arities differ from the joints"));
    }
    let r = p.basis_dim();
    if fstar.as_slice().len() != r || f.as_slice().len() != r {
        return Err(Error::shape(format!("coefficient vectors must have length {r}")));
    }
    let tau = exact_rer_discrete(p, q)?.tau;

    let (mut eps_f, mut lhs, mut source_loss) = (0.0, 0.0, 0.0);
    for (idx, label) in y.cells() {
        let pm = p.mass(&idx);
        let qm = q.mass(&idx);
        let star_err = (label - fstar.eval(&idx)).powi(2);
        let model_err = (label - f.eval(&idx)).powi(2);
        eps_f += 0.5 * (pm + qm) * star_err;
        lhs += qm * model_err;
        source_loss += pm * model_err;
    }
    let rhs = if tau.is_infinite() {
        f64::INFINITY
    } else {
        (8.0 * tau + 4.0) * eps_f + 4.0 * tau * source_loss
    };
    Ok(LossTransferReport {
        eps_f,
        tau,
        lhs,
        rhs,
        source_loss,
        holds: lhs <= rhs + 1e-9,
    })
}
