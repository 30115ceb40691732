//! Lower bounds: without overlap, two-layer ReLU networks do not extrapolate.
//!
//! On the unit sphere a single neuron
//! `f(x) = a·ReLU(tᵀx + b)` with `b = −1 + ε²/2`, `a = 8/(3ε²)` equals
//! `(a/2)(ε² − ‖x − t‖²)⁺`: it vanishes outside the ε-cap around `t` and is at
//! least 1 inside the ε/2-cap. Summing such bumps over a cover of the target
//! points that stay ε away from the source support gives a network that is
//! zero on the source and as large as we like on the target.

use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::BoxMuller;

const UNIT_TOL: f64 = 1e-12;
const RENORMALIZE_WARN: f64 = 1e-6;
/// Bumps are built slightly narrower than ε so that points at distance
/// exactly ε from a center evaluate to an exact zero in floating point.
const WIDTH_MARGIN: f64 = 1e-9;
/// The cover radius sits slightly inside ε/2 so covered points clear 1.
const COVER_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Neuron {
    pub a: f64,
    pub w: Vec<f64>,
    pub b: f64,
}

/// `x ↦ Σ a·ReLU(wᵀx + b)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BumpNetwork {
    pub neurons: Vec<Neuron>,
}

impl BumpNetwork {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.neurons
            .iter()
            .map(|n| n.a * (dot(&n.w, x) + n.b).max(0.0))
            .sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            neurons: self
                .neurons
                .iter()
                .map(|n| Neuron {
                    a: n.a * c,
                    ..n.clone()
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Single-neuron bump of width `eps` centered at the unit vector `t`.
pub fn bump(t: &[f64], eps: f64) -> Result<BumpNetwork> {
    if (norm(t) - 1.0).abs() > UNIT_TOL {
        return Err(Error::invalid(format!("center has norm {}, expected 1", norm(t))));
    }
    if !(eps > 0.0 && eps <= 2.0) {
        return Err(Error::invalid(format!("eps = {eps} outside (0, 2]")));
    }
    Ok(BumpNetwork {
        neurons: vec![Neuron {
            a: 8.0 / (3.0 * eps * eps),
            w: t.to_vec(),
            b: -1.0 + eps * eps / 2.0,
        }],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereCover {
    pub centers: Vec<Vec<f64>>,
    /// Positions of the centers in the input list.
    pub center_indices: Vec<usize>,
    pub radius: f64,
}

/// Farthest-point cover: repeatedly promote the point farthest from the
/// current centers until every point is within `radius`.
pub fn greedy_cover(points: &[Vec<f64>], radius: f64) -> Result<SphereCover> {
    if points.is_empty() {
        return Err(Error::invalid("cannot cover an empty point set"));
    }
    if !(radius > 0.0) {
        return Err(Error::invalid("cover radius must be positive"));
    }
    let mut nearest: Vec<f64> = vec![f64::INFINITY; points.len()];
    let mut center_indices = Vec::new();
    let mut next = 0;
    loop {
        center_indices.push(next);
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(dist(p, &points[next]));
        }
        let (far, &d) = nearest
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        if d <= radius {
            break;
        }
        next = far;
    }
    Ok(SphereCover {
        centers: center_indices.iter().map(|&i| points[i].clone()).collect(),
        center_indices,
        radius,
    })
}

#[derive(Debug, Clone)]
pub struct WitnessReport {
    /// `max |f|` over the source support; exactly zero by construction.
    pub max_abs_on_p: f64,
    pub min_on_q: f64,
    pub mean_sq_on_q: f64,
    pub num_centers: usize,
    pub scale: f64,
    pub eps: f64,
}

/// Network that is zero on `p_support` and at least `scale` on `q_points`.
///
/// Every target point must be at distance at least `eps` from every source
/// point.
pub fn build_witness(
    p_support: &[Vec<f64>],
    q_points: &[Vec<f64>],
    eps: f64,
    scale: f64,
) -> Result<(BumpNetwork, WitnessReport)> {
    if q_points.is_empty() {
        return Err(Error::invalid("no target points"));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid("scale must be positive"));
    }
    if !(eps > 0.0 && eps <= 2.0) {
        return Err(Error::invalid(format!("eps = {eps} outside (0, 2]")));
    }
    let d = q_points[0].len();
    for (i, x) in p_support.iter().chain(q_points).enumerate() {
        if x.len() != d {
            return Err(Error::shape(format!("point {i} has dimension {}, expected {d}", x.len())));
        }
        if (norm(x) - 1.0).abs() > UNIT_TOL {
            return Err(Error::invalid(format!("point {i} is not a unit vector")));
        }
    }
    for (qi, q) in q_points.iter().enumerate() {
        for (pi, p) in p_support.iter().enumerate() {
            let distance = dist(p, q);
            if distance < eps {
                return Err(Error::SeparationViolated {
                    q_index: qi,
                    p_index: pi,
                    distance,
                    eps,
                });
            }
        }
    }

    let width = eps * (1.0 - WIDTH_MARGIN);
    let cover = greedy_cover(q_points, 0.5 * width * (1.0 - COVER_MARGIN))?;
    let mut net = BumpNetwork::default();
    for center in &cover.centers {
        net.neurons.extend(bump(center, width)?.neurons);
    }
    let net = net.scaled(scale);

    let max_abs_on_p = p_support.iter().map(|p| net.eval(p).abs()).fold(0.0, f64::max);
    let values: Vec<f64> = q_points.iter().map(|q| net.eval(q)).collect();
    let report = WitnessReport {
        max_abs_on_p,
        min_on_q: values.iter().copied().fold(f64::INFINITY, f64::min),
        mean_sq_on_q: values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64,
        num_centers: cover.centers.len(),
        scale,
        eps,
    };
    Ok((net, report))
}

/// Reads one whitespace-separated vector per line (`#` starts a comment) and
/// rescales each to unit norm. Returns a warning for every vector whose norm
/// was off by more than 1e-6.
pub fn parse_points(text: &str, source: &str) -> Result<(Vec<Vec<f64>>, Vec<String>)> {
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut warnings = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let loc = format!("{source}:{}", i + 1);
        let v = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(&loc, format!("bad number `{t}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = points.first() {
            if first.len() != v.len() {
                return Err(Error::parse(&loc, format!("expected {} coordinates", first.len())));
            }
        }
        let n = norm(&v);
        if n == 0.0 {
            return Err(Error::parse(&loc, "zero vector cannot be normalized"));
        }
        if (n - 1.0).abs() > RENORMALIZE_WARN {
            warnings.push(format!("{loc}: norm {n} rescaled to 1"));
        }
        points.push(v.iter().map(|x| x / n).collect());
    }
    Ok((points, warnings))
}

pub fn load_points(path: &Path) -> Result<(Vec<Vec<f64>>, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_points(&text, &path.display().to_string())
}

/// Uniform point on the unit sphere in `R^d`.
pub fn random_unit(d: usize, g: &mut BoxMuller) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| g.next_normal()).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Uniform points on `S^{d-1}` with `|x_last| ≤ half_height` (an equatorial
/// band), by rejection.
pub fn random_band(d: usize, n: usize, half_height: f64, g: &mut BoxMuller) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v = random_unit(d, g);
        if v[d - 1].abs() <= half_height {
            out.push(v);
        }
    }
    out
}

/// Uniform points on `S^{d-1}` with `x_last ≥ min_height` (a polar cap).
pub fn random_cap(d: usize, n: usize, min_height: f64, g: &mut BoxMuller) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut v = random_unit(d, g);
        if v[d - 1] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        if v[d - 1] >= min_height {
            out.push(v);
        }
    }
    out
}
