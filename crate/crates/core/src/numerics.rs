//! Dense linear algebra used throughout the crate.
//!
//! Matrices are stored as [`nalgebra::DMatrix`]; the decompositions themselves
//! are implemented here so that tolerances and convergence criteria are under
//! our control:
//!
//! - [`sym_eig`]: cyclic Jacobi, stopping once the off-diagonal Frobenius norm
//!   falls below `1e-12 * ||A||_F`.
//! - [`svd`]: one-sided (Hestenes) Jacobi.
//! - [`generalized_max_eig`]: `sup_v vᵀBv / vᵀAv` for PSD pencils with the
//!   `0/0 = 0` convention and an explicit `+inf` outcome.
//! - [`cholesky`] and [`random_orthonormal`].
//!
//! All routines are pure functions; they target desk-scale dimensions
//! (a few hundred at most).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::BoxMuller;

/// Relative tolerance below which eigenvalues count as zero.
pub const DEFAULT_NULL_TOL: f64 = 1e-10;
/// Relative PSD slack: eigenvalues in `[-PSD_TOL * ||A||_2, 0)` are clipped to 0.
pub const PSD_TOL: f64 = 1e-10;
/// Relative threshold on the numerator over the denominator's null space.
pub const DEFAULT_INFINITY_TOL: f64 = 1e-8;

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// A real symmetric matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates and symmetrizes `m` as `(m + mᵀ)/2`.
    ///
    /// Rejects non-square input, non-finite entries, and asymmetry larger
    /// than `1e-8 * (1 + max|m_ij|)`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::shape(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::invalid("matrix dimension must be positive"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        let scale = 1.0 + m.amax();
        let n = m.nrows();
        let mut out = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (out[(i, j)], out[(j, i)]);
                if (a - b).abs() > 1e-8 * scale {
                    return Err(Error::invalid(format!(
                        "matrix is not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
                let avg = 0.5 * (a + b);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        Ok(Self(out))
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(n, n, f))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    /// Entrywise `k`-th power (`[M^{⊙k}]_ij = M_ij^k`).
    pub fn elementwise_pow(&self, k: u32) -> Self {
        Self(self.0.map(|v| v.powi(k as i32)))
    }

    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.0 * v))
    }

    /// Largest absolute off-diagonal entry.
    pub fn max_abs_off_diagonal(&self) -> f64 {
        let n = self.dim();
        let mut m = 0.0_f64;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    m = m.max(self.0[(i, j)].abs());
                }
            }
        }
        m
    }

    pub fn lambda_min(&self) -> f64 {
        sym_eig_unchecked(&self.0).values[0]
    }

    pub fn lambda_max(&self) -> f64 {
        *sym_eig_unchecked(&self.0).values.last().unwrap()
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in the order of `values`.
    pub vectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.vectors.column(i).into_owned()
    }

    /// Spectral norm `max |λ_i|`.
    pub fn norm2(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let lam = DMatrix::from_diagonal(&DVector::from_column_slice(&self.values));
        &self.vectors * lam * self.vectors.transpose()
    }
}

/// Full symmetric eigen-decomposition by cyclic Jacobi rotations.
pub fn sym_eig(a: &SymMatrix) -> Spectrum {
    sym_eig_unchecked(a.as_matrix())
}

fn sym_eig_unchecked(a: &DMatrix<f64>) -> Spectrum {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let fro = m.norm();
    let target = JACOBI_TOL * fro;

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&m) <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    let new_kp = c * akp - s * akq;
                    let new_kq = s * akp + c * akq;
                    m[(k, p)] = new_kp;
                    m[(p, k)] = new_kp;
                    m[(k, q)] = new_kq;
                    m[(q, k)] = new_kq;
                }
                m[(p, p)] -= t * apq;
                m[(q, q)] += t * apq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Spectrum { values, vectors }
}

fn off_diagonal_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ`.
///
/// For a `d1 x d2` input with `p = min(d1, d2)`, `u` is `d1 x p`, `v` is
/// `d2 x p`, and `singular_values` has length `p`, descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let s = DMatrix::from_diagonal(&DVector::from_column_slice(&self.singular_values));
        &self.u * s * self.v.transpose()
    }
}

pub fn svd(a: &DMatrix<f64>) -> Result<Svd> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::invalid("matrix dimensions must be positive"));
    }
    if a.nrows() < a.ncols() {
        let t = one_sided_jacobi(&a.transpose());
        return Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }
    Ok(one_sided_jacobi(a))
}

/// Hestenes one-sided Jacobi for `m >= n`.
fn one_sided_jacobi(a: &DMatrix<f64>) -> Svd {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let alpha = w.column(i).norm_squared();
                let beta = w.column(j).norm_squared();
                let gamma = w.column(i).dot(&w.column(j));
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta.abs() > 1e150 {
                    0.5 / zeta
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..m {
                    let wi = w[(k, i)];
                    let wj = w[(k, j)];
                    w[(k, i)] = c * wi - s * wj;
                    w[(k, j)] = s * wi + c * wj;
                }
                for k in 0..n {
                    let vi = v[(k, i)];
                    let vj = v[(k, j)];
                    v[(k, i)] = c * vi - s * vj;
                    v[(k, j)] = s * vi + c * vj;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let singular_values: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let sigma_max = singular_values[0];

    let mut u = DMatrix::<f64>::zeros(m, n);
    let mut missing = Vec::new();
    for (c, &j) in order.iter().enumerate() {
        let s = norms[j];
        if s > 1e-10 * sigma_max && s > 0.0 {
            u.set_column(c, &(w.column(j) / s));
        } else {
            missing.push(c);
        }
    }
    complete_orthonormal_columns(&mut u, &missing);
    let v_sorted = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Svd {
        u,
        singular_values,
        v: v_sorted,
    }
}

/// Fills the listed columns of `q` with unit vectors orthogonal to all
/// other columns, using Gram–Schmidt over the standard basis.
fn complete_orthonormal_columns(q: &mut DMatrix<f64>, missing: &[usize]) {
    let m = q.nrows();
    let mut filled: Vec<usize> = (0..q.ncols()).filter(|c| !missing.contains(c)).collect();
    for &target in missing {
        for k in 0..m {
            let mut cand = DVector::<f64>::zeros(m);
            cand[k] = 1.0;
            for _ in 0..2 {
                for &c in &filled {
                    let col = q.column(c).into_owned();
                    let proj = col.dot(&cand);
                    cand -= col * proj;
                }
            }
            let norm = cand.norm();
            if norm > 0.5 {
                q.set_column(target, &(cand / norm));
                filled.push(target);
                break;
            }
        }
    }
}

/// Tolerances for [`generalized_max_eig_with`].
#[derive(Debug, Clone, Copy)]
pub struct GenEigOptions {
    /// Eigenvalues of the denominator at most `null_tol * λ_max` are null.
    pub null_tol: f64,
    /// Numerator mass above `infinity_tol * λ_max(B)` on the denominator's
    /// null space yields `+inf`.
    pub infinity_tol: f64,
}

impl Default for GenEigOptions {
    fn default() -> Self {
        Self {
            null_tol: DEFAULT_NULL_TOL,
            infinity_tol: DEFAULT_INFINITY_TOL,
        }
    }
}

/// Value of `sup_v vᵀBv / vᵀAv` together with a maximizing direction.
#[derive(Debug, Clone)]
pub struct GeneralizedMax {
    /// Possibly `f64::INFINITY`.
    pub value: f64,
    /// A maximizer; for an infinite value, a null direction of `A` with
    /// positive numerator. `None` when both forms vanish identically.
    pub witness: Option<DVector<f64>>,
    /// Dimension of the numerically detected null space of `A`.
    pub null_dim: usize,
}

pub fn generalized_max_eig(b: &SymMatrix, a: &SymMatrix) -> Result<GeneralizedMax> {
    generalized_max_eig_with(b, a, &GenEigOptions::default())
}

pub fn generalized_max_eig_with(
    b: &SymMatrix,
    a: &SymMatrix,
    opts: &GenEigOptions,
) -> Result<GeneralizedMax> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!(
            "pencil dimensions differ: {} vs {}",
            b.dim(),
            a.dim()
        )));
    }
    let spec_a = sym_eig(a);
    let spec_b = sym_eig(b);
    check_psd(&spec_a, "denominator")?;
    check_psd(&spec_b, "numerator")?;

    let n = a.dim();
    let lam_max_a = spec_a.values[n - 1].max(0.0);
    let lam_max_b = spec_b.values[n - 1].max(0.0);
    let threshold = opts.null_tol * lam_max_a;

    let (null_idx, range_idx): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&i| spec_a.values[i] <= threshold);

    if !null_idx.is_empty() {
        let null_basis = columns(&spec_a.vectors, &null_idx);
        let restricted = SymMatrix::new(null_basis.transpose() * b.as_matrix() * &null_basis)?;
        let sr = sym_eig(&restricted);
        let top = *sr.values.last().unwrap();
        if lam_max_b > 0.0 && top > opts.infinity_tol * lam_max_b {
            let y = sr.vector(sr.values.len() - 1);
            return Ok(GeneralizedMax {
                value: f64::INFINITY,
                witness: Some(null_basis * y),
                null_dim: null_idx.len(),
            });
        }
    }

    if range_idx.is_empty() {
        return Ok(GeneralizedMax {
            value: 0.0,
            witness: None,
            null_dim: null_idx.len(),
        });
    }

    // Restrict both forms to range(A) and whiten by the Cholesky factor of
    // the restricted denominator.
    let range = columns(&spec_a.vectors, &range_idx);
    let a_r = SymMatrix::new(range.transpose() * a.as_matrix() * &range)?;
    let b_r = range.transpose() * b.as_matrix() * &range;
    let l = cholesky_with_floor(&a_r, 0.0)?;
    let l_inv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(l.nrows(), l.nrows()))
        .ok_or_else(|| Error::NotPositiveDefinite("restricted denominator".into()))?;
    let whitened = SymMatrix::new(&l_inv * b_r * l_inv.transpose())?;
    let sw = sym_eig(&whitened);
    let last = sw.values.len() - 1;
    let value = sw.values[last].max(0.0);
    let y = sw.vector(last);
    let witness = range * l_inv.transpose() * y;

    Ok(GeneralizedMax {
        value,
        witness: Some(witness),
        null_dim: null_idx.len(),
    })
}

fn columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
}

/// Fails when the most negative eigenvalue is below `-PSD_TOL * ||A||_2`.
pub fn check_psd(spec: &Spectrum, what: &str) -> Result<()> {
    let norm = spec.norm2();
    let min = spec.values[0];
    if min < -PSD_TOL * norm {
        return Err(Error::invalid(format!(
            "{what} is not positive semidefinite (λ_min = {min:e})"
        )));
    }
    Ok(())
}

/// Lower-triangular `L` with `L Lᵀ = A`.
pub fn cholesky(a: &SymMatrix) -> Result<DMatrix<f64>> {
    cholesky_with_floor(a, 1e-12)
}

fn cholesky_with_floor(a: &SymMatrix, floor: f64) -> Result<DMatrix<f64>> {
    let n = a.dim();
    let m = a.as_matrix();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d.is_nan() || d <= floor {
            return Err(Error::NotPositiveDefinite(format!(
                "pivot {j} is {d:e}"
            )));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Haar-distributed orthonormal `d x d` matrix: QR of a standard normal
/// matrix with the sign convention `diag(R) > 0`.
pub fn random_orthonormal(d: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mut g = BoxMuller::from_seed(seed);
    random_orthonormal_from(d, &mut g)
}

pub fn random_orthonormal_from(d: usize, g: &mut BoxMuller) -> Result<DMatrix<f64>> {
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    let mut q = DMatrix::<f64>::zeros(d, d);
    for c in 0..d {
        for r in 0..d {
            q[(r, c)] = g.next_normal();
        }
    }
    // Modified Gram–Schmidt, applied twice per column.
    for c in 0..d {
        for _ in 0..2 {
            for prev in 0..c {
                let p = q.column(prev).into_owned();
                let proj = p.dot(&q.column(c));
                let mut col = q.column_mut(c);
                col -= p * proj;
            }
        }
        let norm = q.column(c).norm();
        if norm < 1e-12 {
            return Err(Error::NoConvergence("degenerate Gaussian draw".into()));
        }
        let mut col = q.column_mut(c);
        col /= norm;
    }
    Ok(q)
}

/// `[[I, S], [Sᵀ, I]]` for a `d1 x d2` cross block `S`.
pub fn unit_block_matrix(cross: &DMatrix<f64>) -> Result<SymMatrix> {
    let (d1, d2) = cross.shape();
    let n = d1 + d2;
    SymMatrix::from_fn(n, |i, j| {
        if i == j {
            1.0
        } else if i < d1 && j >= d1 {
            cross[(i, j - d1)]
        } else if i >= d1 && j < d1 {
            cross[(j, i - d1)]
        } else {
            0.0
        }
    })
}
