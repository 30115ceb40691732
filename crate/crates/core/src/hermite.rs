//! Hermite functions and Gaussian (Mehler) kernels.
//!
//! The functions
//!
//! ```text
//! ψ_n(x) = H_n(x/√2) · e^{-x²/4} · (2π)^{-1/4} · (2ⁿ n!)^{-1/2}
//! ```
//!
//! form an orthonormal basis of `L²(R)` and diagonalize the bivariate
//! Gaussian kernel
//!
//! ```text
//! K_ρ(x₁, x₂) = P(x₁, x₂) / √(P(x₁)P(x₂)) = Σ_k ρ^k ψ_k(x₁) ψ_k(x₂).
//! ```
//!
//! ψ_n is evaluated by the normalized three-term recurrence
//! `ψ_{n+1} = (x ψ_n − √n ψ_{n−1}) / √(n+1)`, which never forms `H_n` or `n!`
//! and so stays finite long after the raw formula overflows.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics;

pub const MAX_ORDER: usize = 120;
pub const DEFAULT_TRUNCATION: usize = 60;
/// Monomial lists longer than this are refused by [`block_kernel_eigs`].
pub const MAX_EIG_LIST: usize = 2_000_000;

const SQRT_TAU: f64 = 2.506_628_274_631_000_5;

/// Physicists' Hermite polynomial `H_n(x)`.
pub fn hermite_h(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 2.0 * x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = 2.0 * x * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Evaluator for `ψ_0 .. ψ_N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermiteBasis {
    max_order: usize,
}

impl HermiteBasis {
    pub fn new(max_order: usize) -> Result<Self> {
        if max_order > MAX_ORDER {
            return Err(Error::OrderTooLarge {
                order: max_order,
                max: MAX_ORDER,
            });
        }
        Ok(Self { max_order })
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn psi(&self, n: usize, x: f64) -> Result<f64> {
        self.check(n)?;
        Ok(psi_upto(n, x)[n])
    }

    /// `[ψ_0(x), …, ψ_N(x)]`.
    pub fn psi_all(&self, x: f64) -> Vec<f64> {
        psi_upto(self.max_order, x)
    }

    fn check(&self, n: usize) -> Result<()> {
        if n > self.max_order {
            return Err(Error::OrderTooLarge {
                order: n,
                max: self.max_order,
            });
        }
        Ok(())
    }
}

impl Default for HermiteBasis {
    fn default() -> Self {
        Self {
            max_order: MAX_ORDER,
        }
    }
}

fn psi_upto(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push((-x * x / 4.0).exp() / SQRT_TAU.sqrt());
    if n >= 1 {
        out.push(x * out[0]);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = (x * out[k] - kf.sqrt() * out[k - 1]) / (kf + 1.0).sqrt();
        out.push(next);
    }
    out
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-x * x / 2.0).exp() / SQRT_TAU
}

/// Density of the standard bivariate normal with correlation `rho`.
pub fn bivariate_normal_pdf(rho: f64, x1: f64, x2: f64) -> Result<f64> {
    check_rho(rho)?;
    let s = 1.0 - rho * rho;
    let q = (x1 * x1 + x2 * x2 - 2.0 * rho * x1 * x2) / s;
    Ok((-q / 2.0).exp() / (std::f64::consts::TAU * s.sqrt()))
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.abs() < 1.0) {
        return Err(Error::DegenerateCorrelation(rho.abs()));
    }
    Ok(())
}

pub fn mehler_closed_form(rho: f64, x1: f64, x2: f64) -> Result<f64> {
    check_rho(rho)?;
    let s = 1.0 - rho * rho;
    let e = -(x1 * x1 + x2 * x2 - 2.0 * rho * x1 * x2) / (2.0 * s) + x1 * x1 / 4.0 + x2 * x2 / 4.0;
    Ok(e.exp() / (std::f64::consts::TAU * s).sqrt())
}

/// `Σ_{k=0}^{n} ρ^k ψ_k(x₁) ψ_k(x₂)`.
pub fn mehler_series(basis: &HermiteBasis, rho: f64, x1: f64, x2: f64, n: usize) -> Result<f64> {
    check_rho(rho)?;
    basis.check(n)?;
    let a = psi_upto(n, x1);
    let b = psi_upto(n, x2);
    let mut pow = 1.0;
    let mut sum = 0.0;
    for k in 0..=n {
        sum += pow * a[k] * b[k];
        pow *= rho;
    }
    Ok(sum)
}

/// Largest `|series − closed form|` over a `grid × grid` lattice on
/// `[-half_width, half_width]²` for each `rho`.
pub fn mehler_grid_error(
    basis: &HermiteBasis,
    rhos: &[f64],
    grid: usize,
    half_width: f64,
    n: usize,
) -> Result<f64> {
    let pts = linspace(-half_width, half_width, grid);
    let mut worst = 0.0_f64;
    for &rho in rhos {
        for &x1 in &pts {
            for &x2 in &pts {
                let d = mehler_series(basis, rho, x1, x2, n)? - mehler_closed_form(rho, x1, x2)?;
                worst = worst.max(d.abs());
            }
        }
    }
    Ok(worst)
}

/// Largest `|K_ρ(x₁,x₂)·√(φ(x₁)φ(x₂)) − P_ρ(x₁,x₂)|` on the same lattice.
pub fn density_recovery_error(rhos: &[f64], grid: usize, half_width: f64) -> Result<f64> {
    let pts = linspace(-half_width, half_width, grid);
    let mut worst = 0.0_f64;
    for &rho in rhos {
        for &x1 in &pts {
            for &x2 in &pts {
                let lhs = mehler_closed_form(rho, x1, x2)? * (normal_pdf(x1) * normal_pdf(x2)).sqrt();
                worst = worst.max((lhs - bivariate_normal_pdf(rho, x1, x2)?).abs());
            }
        }
    }
    Ok(worst)
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Composite trapezoid rule with `points` nodes on `[a, b]`.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, points: usize) -> f64 {
    assert!(points >= 2, "trapezoid needs at least two nodes");
    let h = (b - a) / (points - 1) as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..points - 1 {
        s += f(a + h * i as f64);
    }
    s * h
}

/// Gram matrix `∫ψ_m ψ_n` for `m, n ≤ max_n` by trapezoid quadrature.
pub fn quadrature_gram(max_n: usize, half_width: f64, points: usize) -> DMatrix<f64> {
    let h = 2.0 * half_width / (points - 1) as f64;
    let mut g = DMatrix::zeros(max_n + 1, max_n + 1);
    for i in 0..points {
        let x = -half_width + h * i as f64;
        let w = if i == 0 || i == points - 1 { 0.5 * h } else { h };
        let v = DVector::from_vec(psi_upto(max_n, x));
        g += (&v * v.transpose()) * w;
    }
    g
}

/// `max_{m,n} |∫ψ_m ψ_n − δ_{mn}|`.
pub fn orthonormality_error(max_n: usize, half_width: f64, points: usize) -> f64 {
    let g = quadrature_gram(max_n, half_width, points);
    (g - DMatrix::identity(max_n + 1, max_n + 1)).amax()
}

/// Singular values of `Σ₁₂` after checking that `[[I, Σ₁₂], [Σ₁₂ᵀ, I]]` is
/// PSD, i.e. `σ_max ≤ 1`.
pub fn admissible_singular_values(sigma12: &DMatrix<f64>) -> Result<numerics::Svd> {
    let svd = numerics::svd(sigma12)?;
    if svd.sigma_max() > 1.0 + 1e-10 {
        return Err(Error::NotPositiveDefinite(format!(
            "block covariance has sigma_max(Sigma12) = {} > 1",
            svd.sigma_max()
        )));
    }
    Ok(svd)
}

/// Eigenvalues `Π σ_i^{n_i}` (`Σ n_i ≤ n`) of the block Gaussian kernel,
/// descending.
pub fn block_kernel_eigs(sigma12: &DMatrix<f64>, n: usize) -> Result<Vec<f64>> {
    let sv: Vec<f64> = admissible_singular_values(sigma12)?
        .singular_values
        .iter()
        .map(|s| s.min(1.0))
        .collect();
    let count = binomial(n + sv.len(), sv.len());
    if count > MAX_EIG_LIST as f64 {
        return Err(Error::Unsupported(format!(
            "{count} eigenvalues requested; limit is {MAX_EIG_LIST}"
        )));
    }
    let mut out = Vec::with_capacity(count as usize);
    enumerate_monomials(&sv, n, 1.0, &mut out);
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

fn enumerate_monomials(sv: &[f64], budget: usize, acc: f64, out: &mut Vec<f64>) {
    let Some((&s, rest)) = sv.split_first() else {
        out.push(acc);
        return;
    };
    let mut p = acc;
    for used in 0..=budget {
        enumerate_monomials(rest, budget - used, p, out);
        p *= s;
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `P(x₁, x₂) / √(P(x₁)P(x₂))` for the block Gaussian with cross
/// covariance `Σ₁₂`, evaluated from the joint density.
pub fn block_kernel_closed_form(sigma12: &DMatrix<f64>, x1: &[f64], x2: &[f64]) -> Result<f64> {
    let (d1, d2) = sigma12.shape();
    if x1.len() != d1 || x2.len() != d2 {
        return Err(Error::shape("point dimensions do not match Sigma12"));
    }
    let sigma = numerics::unit_block_matrix(sigma12)?;
    let l = numerics::cholesky(&sigma)?;
    let x = DVector::from_iterator(d1 + d2, x1.iter().chain(x2).copied());
    let z = l
        .solve_lower_triangular(&x)
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let d = (d1 + d2) as f64;
    let log_joint = -0.5 * z.norm_squared() - 0.5 * log_det - 0.5 * d * SQRT_TAU.powi(2).ln();
    let log_marg = |v: &[f64]| -0.5 * v.iter().map(|t| t * t).sum::<f64>() - 0.5 * v.len() as f64 * SQRT_TAU.powi(2).ln();
    Ok((log_joint - 0.5 * (log_marg(x1) + log_marg(x2))).exp())
}

/// Series form of the block kernel in rotated coordinates
/// `t₁ = Uᵀx₁`, `t₂ = Vᵀx₂`: a product of one-dimensional Mehler series
/// with `ρ = σ_i` (each truncated at `n`) times `ψ_0` factors for the
/// coordinates beyond the rank of `Σ₁₂`.
pub fn block_kernel_series(
    basis: &HermiteBasis,
    sigma12: &DMatrix<f64>,
    x1: &[f64],
    x2: &[f64],
    n: usize,
) -> Result<f64> {
    let (d1, d2) = sigma12.shape();
    if x1.len() != d1 || x2.len() != d2 {
        return Err(Error::shape("point dimensions do not match Sigma12"));
    }
    let svd = admissible_singular_values(sigma12)?;
    let m = svd.singular_values.len();
    let t1 = svd.u.transpose() * DVector::from_column_slice(x1);
    let t2 = svd.v.transpose() * DVector::from_column_slice(x2);
    let mut value = 1.0;
    for i in 0..m {
        value *= mehler_series(basis, svd.singular_values[i], t1[i], t2[i], n)?;
    }
    // Remaining orthogonal directions are independent of the other block.
    let rest = |x: &[f64], t: &DVector<f64>| {
        let full: f64 = x.iter().map(|v| v * v).sum();
        let used: f64 = t.iter().map(|v| v * v).sum();
        let extra_dim = x.len() - m;
        (full - used).max(0.0) / -4.0 - extra_dim as f64 * SQRT_TAU.ln() / 2.0
    };
    value *= (rest(x1, &t1) + rest(x2, &t2)).exp();
    Ok(value)
}
