//! Extrapolation bounds for additive models over Gaussian features.
//!
//! Two settings are covered.
//!
//! * Pairwise: every pair `(x_i, x_j)` is jointly Gaussian with correlation
//!   matrix `Σ` after standardization. Writing each `g_i` in the normalized
//!   Hermite basis, `E[(Σ_i g_i)²] = Σ_n α⁽ⁿ⁾ᵀ Σ^{⊙n} α⁽ⁿ⁾`, so the error ratio
//!   is `κ = sup_n λ_max(Σ_Q^{⊙n}, Σ_P^{⊙n})` ([`exact_kappa`]) and is at most
//!   `d / λ_min(Σ_P)` ([`rer_bound_pairwise`]).
//! * Two blocks: `(x₁, x₂) ~ N(0, [[I, Σ₁₂], [Σ₁₂ᵀ, I]])` with matching
//!   marginals, for which `τ ≤ 2 / (1 − σ_max(Σ₁₂))` ([`rer_bound_two_block`]).

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::numerics::{self, SymMatrix, PSD_TOL};
use crate::rng::{substream, BoxMuller};

const UNIT_DIAG_TOL: f64 = 1e-12;
const LAMBDA_FLOOR: f64 = 1e-12;
const KAPPA_PD_FLOOR: f64 = 1e-10;
const KAPPA_STOP: f64 = 1e-12;
pub const MIN_MC_SAMPLES: usize = 1000;

/// Correlation matrix of standardized features plus the original means and
/// standard deviations. The latter never change a certified value.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSpec {
    sigma: SymMatrix,
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl CorrelationSpec {
    pub fn new(sigma: SymMatrix, means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        let d = sigma.dim();
        if means.len() != d || stds.len() != d {
            return Err(Error::shape(format!("means/stds must have length {d}")));
        }
        if stds.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("stds must be strictly positive"));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("means must be finite"));
        }
        let mut m = sigma.into_inner();
        for i in 0..d {
            if (m[(i, i)] - 1.0).abs() > UNIT_DIAG_TOL {
                return Err(Error::invalid(format!("Sigma[{i}][{i}] = {} is not 1", m[(i, i)])));
            }
            m[(i, i)] = 1.0;
        }
        if m.iter().any(|v| v.abs() > 1.0) {
            return Err(Error::invalid("correlations must lie in [-1, 1]"));
        }
        let sigma = SymMatrix::new(m)?;
        ensure_psd(&sigma, "Sigma")?;
        Ok(Self { sigma, means, stds })
    }

    /// Zero means and unit standard deviations.
    pub fn standard(sigma: SymMatrix) -> Result<Self> {
        let d = sigma.dim();
        Self::new(sigma, vec![0.0; d], vec![1.0; d])
    }

    /// Keys: `d`, `sigma` (row-major `d*d` numbers), optional `means`, `stds`.
    pub fn from_config(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(&["d", "sigma", "means", "stds"])?;
        let d: usize = kv.require("d")?;
        let flat: Vec<f64> = kv.require_list("sigma")?;
        if flat.len() != d * d {
            return Err(Error::shape(format!("sigma needs {} entries, got {}", d * d, flat.len())));
        }
        let sigma = SymMatrix::new(DMatrix::from_row_slice(d, d, &flat))?;
        let means = kv.get_list("means")?.unwrap_or_else(|| vec![0.0; d]);
        let stds = kv.get_list("stds")?.unwrap_or_else(|| vec![1.0; d]);
        Self::new(sigma, means, stds)
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn is_standard(&self) -> bool {
        self.means.iter().all(|&m| m == 0.0) && self.stds.iter().all(|&s| s == 1.0)
    }

    pub fn with_moments(&self, means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        Self::new(self.sigma.clone(), means, stds)
    }
}

fn ensure_psd(m: &SymMatrix, what: &str) -> Result<numerics::Spectrum> {
    let spec = numerics::sym_eig(m);
    if spec.values[0] < -PSD_TOL * spec.norm2().max(1.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "{what} has λ_min = {:e}",
            spec.values[0]
        )));
    }
    Ok(spec)
}

/// Cross covariance of two unit-covariance blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGaussianSpec {
    sigma12: DMatrix<f64>,
}

impl BlockGaussianSpec {
    pub fn new(sigma12: DMatrix<f64>) -> Result<Self> {
        if sigma12.nrows() == 0 || sigma12.ncols() == 0 {
            return Err(Error::invalid("Sigma12 must be nonempty"));
        }
        if sigma12.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("Sigma12 has non-finite entries"));
        }
        ensure_psd(&numerics::unit_block_matrix(&sigma12)?, "block covariance")?;
        Ok(Self { sigma12 })
    }

    /// Keys: `d1`, `d2`, `sigma12` (row-major `d1*d2` numbers).
    pub fn from_config(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(&["d1", "d2", "sigma12"])?;
        let d1: usize = kv.require("d1")?;
        let d2: usize = kv.require("d2")?;
        let flat: Vec<f64> = kv.require_list("sigma12")?;
        if flat.len() != d1 * d2 {
            return Err(Error::shape(format!("sigma12 needs {} entries, got {}", d1 * d2, flat.len())));
        }
        Self::new(DMatrix::from_row_slice(d1, d2, &flat))
    }

    pub fn d1(&self) -> usize {
        self.sigma12.nrows()
    }

    pub fn d2(&self) -> usize {
        self.sigma12.ncols()
    }

    pub fn sigma12(&self) -> &DMatrix<f64> {
        &self.sigma12
    }

    pub fn block_matrix(&self) -> SymMatrix {
        numerics::unit_block_matrix(&self.sigma12).expect("validated on construction")
    }
}

/// Additive function `Σ_i g_i(x_i)` over standardized features with
/// `g_i(x)·√φ(x) = Σ_n α_i⁽ⁿ⁾ ψ_n(x)`; row `n` of `alpha` is `α⁽ⁿ⁾`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteAdditiveFunction {
    alpha: DMatrix<f64>,
}

impl HermiteAdditiveFunction {
    pub fn new(alpha: DMatrix<f64>) -> Result<Self> {
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coefficients must be finite"));
        }
        if alpha.nrows() == 0 || alpha.ncols() == 0 {
            return Err(Error::invalid("need at least one level and one feature"));
        }
        Ok(Self { alpha })
    }

    pub fn random<R: Rng>(levels: usize, d: usize, rng: &mut R) -> Self {
        Self {
            alpha: DMatrix::from_fn(levels + 1, d, |_, _| rng.gen_range(-1.0..1.0)),
        }
    }

    /// Keeps only level `n`.
    pub fn single_level(levels: usize, n: usize, coeffs: &[f64]) -> Result<Self> {
        let mut alpha = DMatrix::zeros(levels + 1, coeffs.len());
        alpha.row_mut(n).copy_from_slice(coeffs);
        Self::new(alpha)
    }

    pub fn max_level(&self) -> usize {
        self.alpha.nrows() - 1
    }

    pub fn dim(&self) -> usize {
        self.alpha.ncols()
    }

    pub fn alpha(&self) -> &DMatrix<f64> {
        &self.alpha
    }

    pub fn level(&self, n: usize) -> DVector<f64> {
        self.alpha.row(n).transpose()
    }

    /// `g_i(x_i)` summed over features at a standardized point.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut h = vec![0.0; self.alpha.nrows()];
        for (i, &xi) in x.iter().enumerate() {
            normalized_he(xi, &mut h);
            total += h.iter().enumerate().map(|(n, hn)| self.alpha[(n, i)] * hn).sum::<f64>();
        }
        total
    }
}

/// `He_n(x)/√n!` for `n < out.len()`: the Hermite functions with the
/// Gaussian weight divided out, orthonormal under `N(0, 1)`.
pub fn normalized_he(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for k in 1..out.len().saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = (x * out[k] - kf.sqrt() * out[k - 1]) / (kf + 1.0).sqrt();
    }
}

/// `Σ_n α⁽ⁿ⁾ᵀ Σ^{⊙n} α⁽ⁿ⁾`, the second moment of an additive function.
pub fn additive_norm_sq(f: &HermiteAdditiveFunction, sigma: &SymMatrix) -> Result<f64> {
    if f.dim() != sigma.dim() {
        return Err(Error::shape(format!(
            "function has {} features, Sigma is {}x{}",
            f.dim(),
            sigma.dim(),
            sigma.dim()
        )));
    }
    Ok((0..=f.max_level())
        .map(|n| sigma.elementwise_pow(n as u32).quad_form(&f.level(n)))
        .sum())
}

#[derive(Debug, Clone)]
pub struct PairwiseBound {
    pub bound: f64,
    pub lambda_min: f64,
    pub dim: usize,
}

pub fn rer_bound_pairwise(p: &CorrelationSpec) -> Result<PairwiseBound> {
    let lambda_min = ensure_psd(&p.sigma, "Sigma_P")?.values[0];
    let d = p.dim();
    let bound = if lambda_min > LAMBDA_FLOOR {
        d as f64 / lambda_min
    } else {
        f64::INFINITY
    };
    Ok(PairwiseBound {
        bound,
        lambda_min,
        dim: d,
    })
}

#[derive(Debug, Clone)]
pub struct TwoBlockBound {
    pub bound: f64,
    pub sigma_max: f64,
    /// Smallest eigenvalue of the assembled block covariance.
    pub lambda_min_block: f64,
    /// `|λ_min(block) − (1 − σ_max)|`.
    pub identity_residual: f64,
}

pub fn rer_bound_two_block(b: &BlockGaussianSpec) -> Result<TwoBlockBound> {
    let sigma_max = numerics::svd(&b.sigma12)?.sigma_max();
    let lambda_min_block = ensure_psd(&b.block_matrix(), "block covariance")?.values[0];
    let identity_residual = (lambda_min_block - (1.0 - sigma_max)).abs();
    if identity_residual > 1e-9 {
        return Err(Error::NoConvergence(format!(
            "λ_min(block) = {lambda_min_block} disagrees with 1 - σ_max = {}",
            1.0 - sigma_max
        )));
    }
    let bound = if sigma_max < 1.0 - LAMBDA_FLOOR {
        2.0 / (1.0 - sigma_max)
    } else {
        f64::INFINITY
    };
    Ok(TwoBlockBound {
        bound,
        sigma_max,
        lambda_min_block,
        identity_residual,
    })
}

/// Generalized top eigenvalue at a single Hermite level `n`.
pub fn kappa_level(p: &SymMatrix, q: &SymMatrix, n: u32) -> Result<f64> {
    let g = numerics::generalized_max_eig(&q.elementwise_pow(n), &p.elementwise_pow(n))?;
    Ok(g.value)
}

#[derive(Debug, Clone)]
pub struct KappaReport {
    /// `max(1, max_n λ_max(Σ_Q^{⊙n}, Σ_P^{⊙n}))` over the evaluated levels.
    pub kappa: f64,
    /// Level attaining the maximum (0 when the maximum is the constant level).
    pub argmax_level: usize,
    pub per_level: Vec<f64>,
    /// Level after which both powers were numerically diagonal.
    pub stopped_at: Option<usize>,
    /// Certified bound for every level past the last evaluated one:
    /// `(1 + d·m_Q^n)/(1 − d·m_P^n)` with `m` the largest off-diagonal entry.
    pub tail_bound: Option<f64>,
}

impl KappaReport {
    /// The larger of `kappa` and the tail certificate.
    pub fn certified(&self) -> f64 {
        self.tail_bound.map_or(f64::INFINITY, |t| self.kappa.max(t))
    }
}

/// Exact error ratio of the pairwise-Gaussian model, truncated at level
/// `max_level`. Attained by putting all coefficients on the maximizing
/// level; see [`KappaReport`] for the tail beyond the truncation.
pub fn exact_kappa(p: &CorrelationSpec, q: &CorrelationSpec, max_level: usize) -> Result<KappaReport> {
    if p.dim() != q.dim() {
        return Err(Error::shape(format!("dimensions differ: {} vs {}", p.dim(), q.dim())));
    }
    if p.means != q.means || p.stds != q.stds {
        return Err(Error::invalid(
            "P and Q must share means and stds (the marginals must match)",
        ));
    }
    let lam = p.sigma.lambda_min();
    if lam <= KAPPA_PD_FLOOR {
        return Err(Error::NotPositiveDefinite(format!("Sigma_P has λ_min = {lam:e}")));
    }
    let d = p.dim() as f64;
    let m_p = p.sigma.max_abs_off_diagonal();
    let m_q = q.sigma.max_abs_off_diagonal();

    let mut kappa = 1.0_f64;
    let mut argmax_level = 0;
    let mut per_level = Vec::new();
    let mut stopped_at = None;
    let mut last = 0;
    for n in 1..=max_level {
        let v = kappa_level(&p.sigma, &q.sigma, n as u32)?;
        per_level.push(v);
        last = n;
        if v > kappa {
            kappa = v;
            argmax_level = n;
        }
        if m_p.powi(n as i32) < KAPPA_STOP && m_q.powi(n as i32) < KAPPA_STOP {
            stopped_at = Some(n);
            break;
        }
    }
    let tail_bound = (last > 0 && d * m_p.powi(last as i32) < 1.0)
        .then(|| (1.0 + d * m_q.powi(last as i32)) / (1.0 - d * m_p.powi(last as i32)));
    Ok(KappaReport {
        kappa,
        argmax_level,
        per_level,
        stopped_at,
        tail_bound,
    })
}

/// Multivariate normal sampler `mean + L z`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    /// Row-major factor; row `i` is nonzero only in `0..extent[i]`.
    rows: Vec<f64>,
    extent: Vec<usize>,
    mean: DVector<f64>,
    normals: BoxMuller,
    z: Vec<f64>,
}

impl GaussianSampler {
    pub fn new(sigma: &SymMatrix, mean: &[f64], seed: u64) -> Result<Self> {
        if mean.len() != sigma.dim() {
            return Err(Error::shape("mean length differs from Sigma"));
        }
        let factor = match numerics::cholesky(sigma) {
            Ok(l) => l,
            Err(_) => {
                // Singular but PSD: use V·√Λ.
                let spec = ensure_psd(sigma, "Sigma")?;
                let mut f = spec.vectors.clone();
                for (j, &lam) in spec.values.iter().enumerate() {
                    let s = lam.max(0.0).sqrt();
                    f.column_mut(j).scale_mut(s);
                }
                f
            }
        };
        let d = sigma.dim();
        let rows: Vec<f64> = (0..d * d).map(|k| factor[(k / d, k % d)]).collect();
        let extent = (0..d)
            .map(|i| (0..d).rev().find(|&j| factor[(i, j)] != 0.0).map_or(0, |j| j + 1))
            .collect();
        Ok(Self {
            rows,
            extent,
            mean: DVector::from_column_slice(mean),
            normals: BoxMuller::from_seed(seed),
            z: vec![0.0; sigma.dim()],
        })
    }

    pub fn standard(sigma: &SymMatrix, seed: u64) -> Result<Self> {
        Self::new(sigma, &vec![0.0; sigma.dim()], seed)
    }

    /// Same distribution, fresh stream.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self {
            normals: BoxMuller::from_seed(seed),
            ..self.clone()
        }
    }

    pub fn with_stream(&self, seed: u64, stream: u64) -> Self {
        Self {
            normals: BoxMuller::new(substream(seed, stream)),
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample_into(&mut self, out: &mut [f64]) {
        self.normals.fill(&mut self.z);
        let d = self.z.len();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.rows[i * d..i * d + self.extent[i]];
            *o = self.mean[i] + row.iter().zip(&self.z).map(|(l, z)| l * z).sum::<f64>();
        }
    }

    pub fn sample(&mut self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(&mut out);
        out
    }
}

/// Sample covariance (divisor `n`) of `n` draws.
pub fn empirical_covariance(sampler: &mut GaussianSampler, n: usize) -> DMatrix<f64> {
    let d = sampler.dim();
    let mut x = vec![0.0; d];
    let mut mean = DVector::zeros(d);
    let mut second = DMatrix::zeros(d, d);
    for _ in 0..n {
        sampler.sample_into(&mut x);
        let v = DVector::from_column_slice(&x);
        mean += &v;
        second += &v * v.transpose();
    }
    mean /= n as f64;
    second / n as f64 - &mean * mean.transpose()
}

#[derive(Debug, Clone, Copy)]
pub struct McRatio {
    pub ratio: f64,
    /// Delta-method standard error of `ratio`.
    pub stderr: f64,
    pub num: f64,
    pub den: f64,
}

/// Monte Carlo estimate of `E_Q[(f₁(x₁) + f₂(x₂))²] / E_P[(f₁ + f₂)²]`, where
/// `x₁` is the first `split` coordinates. `P` and `Q` draw from independent
/// substreams of `seed`.
pub fn mc_ratio_estimate(
    f1: impl Fn(&[f64]) -> f64,
    f2: impl Fn(&[f64]) -> f64,
    split: usize,
    p: &GaussianSampler,
    q: &GaussianSampler,
    n_samples: usize,
    seed: u64,
) -> Result<McRatio> {
    if n_samples < MIN_MC_SAMPLES {
        return Err(Error::invalid(format!("need at least {MIN_MC_SAMPLES} samples")));
    }
    if p.dim() != q.dim() || split > p.dim() {
        return Err(Error::shape("sampler dimensions or split are inconsistent"));
    }
    let f = |x: &[f64]| {
        let v = f1(&x[..split]) + f2(&x[split..]);
        v * v
    };
    let moments = |mut s: GaussianSampler| {
        let mut x = vec![0.0; s.dim()];
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n_samples {
            s.sample_into(&mut x);
            let v = f(&x);
            m1 += v;
            m2 += v * v;
        }
        let n = n_samples as f64;
        let mean = m1 / n;
        (mean, ((m2 / n - mean * mean).max(0.0)) * n / (n - 1.0))
    };
    let (den, var_den) = moments(p.with_stream(seed, 0));
    let (num, var_num) = moments(q.with_stream(seed, 1));
    if !(den > 0.0) {
        return Err(Error::DegenerateDenominator);
    }
    let ratio = num / den;
    let n = n_samples as f64;
    let rel = if num > 0.0 {
        var_num / (n * num * num) + var_den / (n * den * den)
    } else {
        0.0
    };
    Ok(McRatio {
        ratio,
        stderr: ratio * rel.sqrt(),
        num,
        den,
    })
}

#[derive(Debug, Clone)]
pub struct Lemma3Report {
    pub lambda_min: f64,
    /// `λ_min(Σ^{⊙k})` for `k = 1..=k_max`.
    pub lambda_min_powers: Vec<f64>,
    pub holds: bool,
}

/// `λ_min(Σ^{⊙k}) ≥ λ_min(Σ)` for unit-diagonal PSD `Σ`.
pub fn lemma3_check(sigma: &SymMatrix, k_max: u32) -> Result<Lemma3Report> {
    let spec = CorrelationSpec::standard(sigma.clone())?;
    let lambda_min = spec.sigma.lambda_min();
    let lambda_min_powers: Vec<f64> = (1..=k_max)
        .map(|k| spec.sigma.elementwise_pow(k).lambda_min())
        .collect();
    let holds = lambda_min_powers.iter().all(|&l| l >= lambda_min - 1e-10);
    Ok(Lemma3Report {
        lambda_min,
        lambda_min_powers,
        holds,
    })
}

/// `σ_max(Σ₁₂) ≤ 1` whenever `[[I, Σ₁₂], [Σ₁₂ᵀ, I]]` is PSD.
pub fn lemma4_check(sigma12: &DMatrix<f64>) -> Result<bool> {
    let spec = BlockGaussianSpec::new(sigma12.clone())?;
    Ok(numerics::svd(&spec.sigma12)?.sigma_max() <= 1.0 + 1e-10)
}

#[derive(Debug, Clone)]
pub struct Lemma5Report {
    pub lambda_min: f64,
    pub sigma_max: f64,
    pub residual: f64,
    pub holds: bool,
}

/// `λ_min([[I, Σ₁₂], [Σ₁₂ᵀ, I]]) = 1 − σ_max(Σ₁₂)`.
pub fn lemma5_check(sigma12: &DMatrix<f64>) -> Result<Lemma5Report> {
    let spec = BlockGaussianSpec::new(sigma12.clone())?;
    let lambda_min = spec.block_matrix().lambda_min();
    let sigma_max = numerics::svd(&spec.sigma12)?.sigma_max();
    let residual = (lambda_min - (1.0 - sigma_max)).abs();
    Ok(Lemma5Report {
        lambda_min,
        sigma_max,
        residual,
        holds: residual <= 1e-9,
    })
}

/// Random correlation matrix `(1 − a)C + aI` with `C` a normalized Wishart
/// draw and `a` uniform in `[floor, 1)`, so `λ_min ≥ floor`.
pub fn random_correlation(d: usize, floor: f64, g: &mut BoxMuller) -> Result<SymMatrix> {
    if !(0.0..1.0).contains(&floor) {
        return Err(Error::invalid("floor must lie in [0, 1)"));
    }
    let w = DMatrix::from_fn(d, d, |_, _| g.next_normal());
    let gram = &w * w.transpose();
    let scale: Vec<f64> = (0..d).map(|i| 1.0 / gram[(i, i)].sqrt()).collect();
    let a = floor + (1.0 - floor) * g.uniform();
    SymMatrix::from_fn(d, |i, j| {
        if i == j {
            1.0
        } else {
            (1.0 - a) * gram[(i, j)] * scale[i] * scale[j]
        }
    })
}

/// `γ · U₁ᵀ diag(s) U₂` with Haar `U₁`, `U₂` and `s_i` uniform in `[0, 0.95]`.
pub fn random_sigma12(d1: usize, d2: usize, gamma: f64, g: &mut BoxMuller) -> Result<DMatrix<f64>> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid("gamma must lie in [0, 1]"));
    }
    let u1 = numerics::random_orthonormal_from(d1, g)?;
    let u2 = numerics::random_orthonormal_from(d2, g)?;
    let mut s = DMatrix::zeros(d1, d2);
    for i in 0..d1.min(d2) {
        s[(i, i)] = 0.95 * g.uniform();
    }
    Ok(u1.transpose() * s * u2 * gamma)
}
