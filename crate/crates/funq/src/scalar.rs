//! Optimal scalar quantization of N(0,1).
//!
//! The standard normal has a log-concave density, so it admits exactly one
//! stationary n-quantizer, which is therefore the optimal one. Stationarity
//! means every point equals the conditional mean of its Voronoi cell:
//!
//! ```text
//! a_i = E[Z | m_{i-1} < Z < m_i],   m_i = (a_i + a_{i+1})/2.
//! ```
//!
//! We solve the system by Newton-Raphson with a tridiagonal Jacobian, seeded
//! at the quantiles Φ⁻¹((2i-1)/2n), falling back to a Lloyd step whenever a
//! Newton step leaves the ordered region. Distortion and cell probabilities
//! come from closed forms in Φ and the normal density, so no quadrature is
//! involved anywhere.

use crate::error::FunqError;
use crate::special::{normal_cdf_interval, normal_pdf, normal_quantile};
use crate::Result;
use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

const MAX_ITERATIONS: usize = 200;
const RESIDUAL_TOL: f64 = 1e-12;
// contractual stationarity bound; iteration may stall between the two when
// the conditional-mean evaluation hits its rounding floor (large n, far cells)
const RESIDUAL_CONTRACT: f64 = 1e-10;

/// Optimal n-point quantizer of N(0,1).
#[derive(Debug, Clone)]
pub struct Codebook1D {
    points: Vec<f64>,
    probs: Vec<f64>,
    distortion: f64,
}

impl Codebook1D {
    pub fn n(&self) -> usize {
        self.points.len()
    }

    /// Strictly increasing codebook points.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Cell probabilities (sum to 1).
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Quadratic distortion E min_i (Z - a_i)².
    pub fn distortion(&self) -> f64 {
        self.distortion
    }

    /// Index of the cell containing `z` (nearest point).
    pub fn cell_of(&self, z: f64) -> usize {
        // cells are separated by midpoints; binary search keeps n=10^4 cheap
        let pts = &self.points;
        match pts.binary_search_by(|p| p.partial_cmp(&z).unwrap()) {
            Ok(i) => i,
            Err(i) => {
                if i == 0 {
                    0
                } else if i == pts.len() {
                    pts.len() - 1
                } else if z - pts[i - 1] <= pts[i] - z {
                    i - 1
                } else {
                    i
                }
            }
        }
    }

    /// Rebuild from stored fields (used by the codebook file loader).
    pub fn from_parts(points: Vec<f64>, probs: Vec<f64>, distortion: f64) -> Result<Self> {
        validate_sorted(&points)?;
        if probs.len() != points.len() {
            return Err(FunqError::Parse {
                location: "codebook".into(),
                message: "points/probs length mismatch".into(),
            });
        }
        Ok(Codebook1D {
            points,
            probs,
            distortion,
        })
    }
}

fn validate_sorted(points: &[f64]) -> Result<()> {
    if points.is_empty() {
        return Err(FunqError::EmptyBudget);
    }
    for (i, pair) in points.windows(2).enumerate() {
        // negated comparison also rejects NaN
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(pair[0] < pair[1]) {
            return Err(FunqError::UnsortedPoints { position: i + 1 });
        }
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(FunqError::UnsortedPoints { position: 0 });
    }
    Ok(())
}

#[inline]
fn x_phi(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        x * normal_pdf(x)
    }
}

#[inline]
fn pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        normal_pdf(x)
    }
}

// Midpoints with infinite sentinels: m_0 = -inf, m_n = +inf.
fn midpoints(points: &[f64]) -> Vec<f64> {
    let n = points.len();
    let mut m = Vec::with_capacity(n + 1);
    m.push(f64::NEG_INFINITY);
    for i in 0..n - 1 {
        m.push(0.5 * (points[i] + points[i + 1]));
    }
    m.push(f64::INFINITY);
    m
}

/// Exact distortion and cell probabilities of an arbitrary strictly
/// increasing codebook (not necessarily stationary).
pub fn distortion_of(points: &[f64]) -> Result<(f64, Vec<f64>)> {
    validate_sorted(points)?;
    let m = midpoints(points);
    let n = points.len();
    let mut probs = Vec::with_capacity(n);
    let mut total = 0.0;
    for i in 0..n {
        let (lo, hi) = (m[i], m[i + 1]);
        let p = normal_cdf_interval(lo, hi);
        // cell moments: int z phi = pdf(lo)-pdf(hi); int z^2 phi = p + lo*phi(lo) - hi*phi(hi)
        let first = pdf(lo) - pdf(hi);
        let second = p + x_phi(lo) - x_phi(hi);
        let a = points[i];
        total += second - 2.0 * a * first + a * a * p;
        probs.push(p);
    }
    Ok((total, probs))
}

/// Gradient of the distortion seen as a function of the codebook:
/// ∂D/∂a_i = 2 (a_i p_i − ∫_{cell i} z φ(z) dz).
pub fn distortion_gradient(points: &[f64]) -> Result<Vec<f64>> {
    validate_sorted(points)?;
    let m = midpoints(points);
    Ok((0..points.len())
        .map(|i| {
            let p = normal_cdf_interval(m[i], m[i + 1]);
            let g = pdf(m[i]) - pdf(m[i + 1]);
            2.0 * (points[i] * p - g)
        })
        .collect())
}

// One Lloyd step: move every point to the conditional mean of its cell.
// Preserves strict ordering.
fn lloyd_step(points: &mut [f64]) {
    let m = midpoints(points);
    for i in 0..points.len() {
        let p = normal_cdf_interval(m[i], m[i + 1]);
        let g = pdf(m[i]) - pdf(m[i + 1]);
        if p > 0.0 {
            points[i] = g / p;
        }
    }
}

fn symmetrize(points: &mut [f64]) {
    let n = points.len();
    for i in 0..n / 2 {
        let v = 0.5 * (points[i] - points[n - 1 - i]);
        points[i] = v;
        points[n - 1 - i] = -v;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.0;
    }
}

// sup_i |a_i − E[Z | cell_i]|
fn stationarity_residual(points: &[f64]) -> f64 {
    let m = midpoints(points);
    let mut worst = 0.0f64;
    for i in 0..points.len() {
        let p = normal_cdf_interval(m[i], m[i + 1]);
        let g = pdf(m[i]) - pdf(m[i + 1]);
        if p > 0.0 {
            worst = worst.max((points[i] - g / p).abs());
        }
    }
    worst
}

/// The unique stationary (hence optimal) n-point quantizer of N(0,1).
pub fn optimal_codebook(n: usize) -> Result<Codebook1D> {
    if n == 0 {
        return Err(FunqError::EmptyBudget);
    }
    if n == 1 {
        return Ok(Codebook1D {
            points: vec![0.0],
            probs: vec![1.0],
            distortion: 1.0,
        });
    }
    let mut points: Vec<f64> = (1..=n)
        .map(|i| normal_quantile((2.0 * i as f64 - 1.0) / (2.0 * n as f64)))
        .collect();
    symmetrize(&mut points);

    let mut residual = f64::INFINITY;
    let mut previous = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        residual = stationarity_residual(&points);
        let stalled = residual < RESIDUAL_CONTRACT && residual > 0.9 * previous;
        if residual < RESIDUAL_TOL || stalled {
            let (distortion, probs) = distortion_of(&points)?;
            debug_assert!(probs.iter().all(|&p| p > 0.0));
            return Ok(Codebook1D {
                points,
                probs,
                distortion,
            });
        }
        previous = residual;
        let candidate = newton_step(&points);
        match candidate {
            Some(next) if validate_sorted(&next).is_ok() => points = next,
            _ => lloyd_step(&mut points),
        }
        symmetrize(&mut points);
    }
    Err(FunqError::NonConvergence {
        iterations: MAX_ITERATIONS,
        residual,
    })
}

// Newton step on F_i = a_i p_i − ∫_{cell i} z φ. The Jacobian is tridiagonal:
//   ∂F_i/∂a_i     = p_i − φ(m_i)(m_i−a_i)/2 − φ(m_{i−1})(a_i−m_{i−1})/2
//   ∂F_i/∂a_{i+1} = −φ(m_i)(m_i−a_i)/2
//   ∂F_i/∂a_{i−1} = −φ(m_{i−1})(a_i−m_{i−1})/2
fn newton_step(points: &[f64]) -> Option<Vec<f64>> {
    let n = points.len();
    let m = midpoints(points);
    let mut diag = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let p = normal_cdf_interval(m[i], m[i + 1]);
        let g = pdf(m[i]) - pdf(m[i + 1]);
        rhs[i] = -(points[i] * p - g);
        let mut d = p;
        if i + 1 < n {
            let w = 0.5 * pdf(m[i + 1]) * (m[i + 1] - points[i]);
            d -= w;
            upper[i] = -w;
        }
        if i > 0 {
            let w = 0.5 * pdf(m[i]) * (points[i] - m[i]);
            d -= w;
            lower[i] = -w;
        }
        diag[i] = d;
    }
    // Thomas algorithm
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    if diag[0] == 0.0 {
        return None;
    }
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i] * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return None;
        }
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut delta = vec![0.0; n];
    delta[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        delta[i] = d[i] - c[i] * delta[i + 1];
    }
    Some(points.iter().zip(&delta).map(|(a, dx)| a + dx).collect())
}

/// e_k(N(0,1)) for k = 1..=max_n (square roots of the optimal distortions).
pub fn error_table(max_n: usize) -> Result<Vec<f64>> {
    (1..=max_n)
        .map(|k| Ok(cached_codebook(k)?.distortion().sqrt()))
        .collect()
}

type Cache = RwLock<HashMap<usize, Arc<Codebook1D>>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Shared codebook cache keyed by n. Concurrent reads, exclusive insert.
///
/// When `FUNQ_CACHE_DIR` is set, codebooks are also persisted there as small
/// CSV files and reloaded on later runs instead of being recomputed.
pub fn cached_codebook(n: usize) -> Result<Arc<Codebook1D>> {
    if let Some(hit) = cache().read().unwrap().get(&n) {
        return Ok(hit.clone());
    }
    let cb = match load_from_disk(n) {
        Some(cb) => cb,
        None => {
            let cb = optimal_codebook(n)?;
            store_to_disk(&cb);
            cb
        }
    };
    let arc = Arc::new(cb);
    let mut map = cache().write().unwrap();
    Ok(map.entry(n).or_insert(arc).clone())
}

fn cache_path(n: usize) -> Option<std::path::PathBuf> {
    let dir = std::env::var_os("FUNQ_CACHE_DIR")?;
    if dir.is_empty() {
        return None;
    }
    Some(std::path::Path::new(&dir).join(format!("normal1d_{n:05}.csv")))
}

fn load_from_disk(n: usize) -> Option<Codebook1D> {
    let path = cache_path(n)?;
    let text = std::fs::read_to_string(path).ok()?;
    let mut points = Vec::with_capacity(n);
    let mut probs = Vec::with_capacity(n);
    let mut distortion = None;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# distortion ") {
            distortion = rest.trim().parse::<f64>().ok();
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() || line.starts_with("i,") {
            continue;
        }
        let mut fields = line.split(',');
        let _i = fields.next()?;
        points.push(fields.next()?.trim().parse().ok()?);
        probs.push(fields.next()?.trim().parse().ok()?);
    }
    if points.len() != n {
        return None;
    }
    Codebook1D::from_parts(points, probs, distortion?).ok()
}

fn store_to_disk(cb: &Codebook1D) {
    let Some(path) = cache_path(cb.n()) else {
        return;
    };
    if let Some(parent) = path.parent() {
        let _ = std::fs::create_dir_all(parent);
    }
    let mut text = String::new();
    text.push_str(&format!("# distortion {:.16e}\n", cb.distortion()));
    text.push_str("i,a_i,p_i\n");
    for (i, (a, p)) in cb.points().iter().zip(cb.probs()).enumerate() {
        text.push_str(&format!("{},{:.16e},{:.16e}\n", i + 1, a, p));
    }
    let _ = std::fs::write(path, text);
}
