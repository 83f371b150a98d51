//! Monte-Carlo distortion measurement of built product quantizers.
//!
//! Paths are simulated by the truncated expansion X_J = Σ_{j≤J} √λ_j Z_j u_j
//! with i.i.d. standard normal coefficients. The quantizer touches only its
//! m·l covered coefficients, so the energy above the truncation J is added
//! analytically (Σ_{j>J} λ_j) and the truncation bias is exactly zero.
//!
//! For orthonormal expansions the L² error is computed in coefficient space
//! (Parseval): Σ λ_j (Z_j − Ẑ_j)². The once-integrated expansion is not
//! orthogonal, so its error is evaluated in function space as a trapezoid
//! quadrature on a 2¹² grid; this is done exactly and cheaply through the
//! Gram matrix of the basis on that grid (the quadrature of the squared error
//! of a function in the span equals a quadratic form in its coefficients).
//!
//! Samples are generated in fixed-size batches on counter-derived streams and
//! reduced in batch order: results are bit-identical for a given seed no
//! matter how many threads run.

use crate::error::FunqError;
use crate::process::{EigenModel, ModelKind};
use crate::product::ProductQuantizer;
use crate::rng::NormalSource;
use crate::Result;
use rayon::prelude::*;

/// How samples are assigned to codewords.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistortionMode {
    /// Each block quantized by its own codebook (the construction's cells).
    ProductCell,
    /// Globally nearest enumerated codeword (needs an enumerable codebook).
    Voronoi,
}

impl std::fmt::Display for DistortionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DistortionMode::ProductCell => "product-cell",
            DistortionMode::Voronoi => "voronoi",
        })
    }
}

impl DistortionMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "product-cell" => Ok(DistortionMode::ProductCell),
            "voronoi" => Ok(DistortionMode::Voronoi),
            other => Err(FunqError::Parse {
                location: format!("'{other}'"),
                message: "expected product-cell|voronoi".into(),
            }),
        }
    }
}

/// Monte-Carlo distortion estimate.
#[derive(Debug, Clone)]
pub struct McEstimate {
    /// Estimated E min_a ||X - a||² (includes the analytic tail).
    pub mean: f64,
    /// Standard error of the simulated part.
    pub stderr: f64,
    pub samples: usize,
    /// Number of simulated coefficients J.
    pub truncation: usize,
    /// Analytic addition Σ_{j>J} λ_j.
    pub tail: f64,
    pub mode: DistortionMode,
    pub seed: u64,
}

const MC_BATCH: usize = 8192;
const MC_STREAM_BASE: u64 = 1 << 20;
const QUADRATURE_PANELS: usize = 1 << 12;

/// Measure the distortion of a product quantizer.
///
/// `truncation` defaults to max(64, 4·m·l) and must cover every quantized
/// coefficient. Voronoi mode enumerates the codebook and is refused above the
/// enumeration limit.
pub fn estimate(
    pq: &ProductQuantizer,
    samples: usize,
    truncation: Option<usize>,
    seed: u64,
    mode: DistortionMode,
) -> Result<McEstimate> {
    if samples < 1_000 {
        return Err(FunqError::OutOfRange {
            name: "samples",
            range: "[1000, inf)",
            value: samples as f64,
        });
    }
    let covered = pq.quantized_coords();
    let j_terms = truncation.unwrap_or_else(|| (4 * covered).max(64));
    if j_terms < covered {
        return Err(FunqError::OutOfRange {
            name: "truncation",
            range: "[m*l, inf)",
            value: j_terms as f64,
        });
    }
    let model = pq.model();
    let tail = model.tail_sum(j_terms);

    // per-coefficient weights of the simulated part
    let weights: Vec<f64> = (1..=j_terms)
        .map(|j| model.eigenvalue(j))
        .collect::<Result<_>>()?;

    let gram = match model.kind() {
        ModelKind::RlThreeHalves => Some(GramTransform::build(model, j_terms)?),
        _ => None,
    };

    // Voronoi mode: transformed codeword table for global nearest-neighbor
    // assignment in the error metric.
    let codewords: Option<Vec<Vec<f64>>> = match mode {
        DistortionMode::ProductCell => None,
        DistortionMode::Voronoi => {
            let mut words = Vec::new();
            for path in pq.paths(None)? {
                let mut w = vec![0.0f64; j_terms];
                for (i, &c) in path.coeffs.iter().enumerate() {
                    w[i] = c; // already scaled by the coefficient multiplier
                }
                // path coeffs already carry the sqrt(lambda) scaling, which
                // is exactly the orthonormal error metric; the non-orthogonal
                // basis additionally needs the Gram transform
                let w = match &gram {
                    Some(g) => g.transform(&w),
                    None => w,
                };
                words.push(w);
            }
            Some(words)
        }
    };

    let batches: Vec<(usize, usize)> = (0..samples)
        .step_by(MC_BATCH)
        .enumerate()
        .map(|(b, start)| (b, (samples - start).min(MC_BATCH)))
        .collect();
    let scales: Vec<f64> = (1..=j_terms)
        .map(|j| model.coeff_scale(j))
        .collect::<Result<_>>()?;

    let partials: Vec<(f64, f64)> = batches
        .par_iter()
        .map(|&(b, count)| {
            let mut src = NormalSource::new(seed, MC_STREAM_BASE + b as u64);
            let mut z = vec![0.0f64; j_terms];
            let mut residual = vec![0.0f64; j_terms];
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..count {
                src.fill_normal(&mut z);
                let err = match (&codewords, &gram) {
                    (None, None) => product_cell_orthonormal(pq, &weights, &z),
                    (None, Some(g)) => {
                        product_cell_residual(pq, &scales, &z, &mut residual);
                        g.norm_sq(&residual)
                    }
                    (Some(words), g) => {
                        voronoi_error(pq, &weights, &scales, &z, words, g.as_ref(), &mut residual)
                    }
                };
                sum += err;
                sum_sq += err * err;
            }
            (sum, sum_sq)
        })
        .collect();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for (s, s2) in partials {
        sum += s;
        sum_sq += s2;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = (sum_sq / m - mean * mean).max(0.0);
    Ok(McEstimate {
        mean: mean + tail,
        stderr: (var / m).sqrt(),
        samples,
        truncation: j_terms,
        tail,
        mode,
        seed,
    })
}

// Coefficient-space error for orthonormal expansions, product-cell mode:
// quantized blocks contribute lambda-weighted squared residuals, the
// simulated remainder contributes lambda_i z_i^2.
fn product_cell_orthonormal(pq: &ProductQuantizer, weights: &[f64], z: &[f64]) -> f64 {
    let mut err = 0.0;
    let mut covered = 0usize;
    for block in pq.blocks() {
        let dim = block.dim();
        let cell = block.codebook.cell_of(&z[block.offset..block.offset + dim]);
        let word = block.codebook.codeword(cell);
        for k in 0..dim {
            let diff = z[block.offset + k] - word[k];
            err += weights[block.offset + k] * diff * diff;
        }
        covered = covered.max(block.offset + dim);
    }
    for i in covered..z.len() {
        err += weights[i] * z[i] * z[i];
    }
    err
}

// Scaled residual vector sqrt(lambda_i) (z_i - zhat_i) of the product-cell
// assignment; unquantized coordinates keep sqrt(lambda_i) z_i.
fn product_cell_residual(pq: &ProductQuantizer, scales: &[f64], z: &[f64], out: &mut [f64]) {
    for (i, v) in out.iter_mut().enumerate() {
        *v = scales[i] * z[i];
    }
    for block in pq.blocks() {
        let dim = block.dim();
        let cell = block.codebook.cell_of(&z[block.offset..block.offset + dim]);
        let word = block.codebook.codeword(cell);
        for k in 0..dim {
            out[block.offset + k] = scales[block.offset + k] * (z[block.offset + k] - word[k]);
        }
    }
}

// Globally nearest codeword in the error metric; falls back to the
// coefficient metric when no Gram transform is present.
fn voronoi_error(
    pq: &ProductQuantizer,
    weights: &[f64],
    scales: &[f64],
    z: &[f64],
    words: &[Vec<f64>],
    gram: Option<&GramTransform>,
    scratch: &mut [f64],
) -> f64 {
    match gram {
        None => {
            // distance over covered coordinates plus the free remainder
            let covered = pq.quantized_coords();
            let mut best = f64::INFINITY;
            for w in words {
                let mut acc = 0.0;
                for i in 0..covered {
                    let diff = scales[i] * z[i] - w[i];
                    acc += diff * diff;
                    if acc >= best {
                        break;
                    }
                }
                if acc < best {
                    best = acc;
                }
            }
            let mut rest = 0.0;
            for i in covered..z.len() {
                rest += weights[i] * z[i] * z[i];
            }
            best + rest
        }
        Some(g) => {
            for (i, v) in scratch.iter_mut().enumerate() {
                *v = scales[i] * z[i];
            }
            let zt = g.transform(scratch);
            let mut best = f64::INFINITY;
            for w in words {
                let mut acc = 0.0;
                for (a, b) in zt.iter().zip(w) {
                    let diff = a - b;
                    acc += diff * diff;
                    if acc >= best {
                        break;
                    }
                }
                if acc < best {
                    best = acc;
                }
            }
            best
        }
    }
}

// Cholesky factor of the trapezoid Gram matrix of the first J basis
// functions: ||sum c_i B_i||²_quad = ||L^T c||².
struct GramTransform {
    j: usize,
    // lower-triangular factor, row major
    factor: Vec<f64>,
}

impl GramTransform {
    fn build(model: &EigenModel, j_terms: usize) -> Result<GramTransform> {
        let nodes = QUADRATURE_PANELS + 1;
        let h = 1.0 / QUADRATURE_PANELS as f64;
        // basis values on the grid
        let mut basis = vec![0.0f64; j_terms * nodes];
        for i in 0..j_terms {
            for g in 0..nodes {
                let t = (g as f64 * h).min(1.0);
                basis[i * nodes + g] = model.basis_eval(i + 1, t)?;
            }
        }
        let weight = |g: usize| {
            if g == 0 || g == nodes - 1 {
                0.5 * h
            } else {
                h
            }
        };
        let mut gram = vec![0.0f64; j_terms * j_terms];
        for a in 0..j_terms {
            for b in a..j_terms {
                let mut acc = 0.0;
                for g in 0..nodes {
                    acc += weight(g) * basis[a * nodes + g] * basis[b * nodes + g];
                }
                gram[a * j_terms + b] = acc;
                gram[b * j_terms + a] = acc;
            }
        }
        // Cholesky with a relative jitter guard for near-singular grids
        let mut factor = vec![0.0f64; j_terms * j_terms];
        let ridge =
            1e-14 * (0..j_terms).map(|i| gram[i * j_terms + i]).sum::<f64>() / j_terms as f64;
        for a in 0..j_terms {
            for b in 0..=a {
                let mut acc = gram[a * j_terms + b];
                for k in 0..b {
                    acc -= factor[a * j_terms + k] * factor[b * j_terms + k];
                }
                if a == b {
                    let diag = if acc > 0.0 { acc } else { acc + ridge };
                    if diag <= 0.0 {
                        return Err(FunqError::OutOfRange {
                            name: "gram pivot",
                            range: "(0, inf)",
                            value: acc,
                        });
                    }
                    factor[a * j_terms + a] = diag.sqrt();
                } else {
                    factor[a * j_terms + b] = acc / factor[b * j_terms + b];
                }
            }
        }
        Ok(GramTransform { j: j_terms, factor })
    }

    // y = L^T c
    fn transform(&self, c: &[f64]) -> Vec<f64> {
        let j = self.j;
        let mut y = vec![0.0f64; j];
        for (row, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (col, &cv) in c.iter().enumerate().skip(row) {
                acc += self.factor[col * j + row] * cv;
            }
            *yi = acc;
        }
        y
    }

    fn norm_sq(&self, c: &[f64]) -> f64 {
        self.transform(c).iter().map(|v| v * v).sum()
    }
}

/// Achieved-to-predicted comparison of a measurement.
#[derive(Debug, Clone, Copy)]
pub struct TheoryComparison {
    pub n: u64,
    /// Predicted e_n from the high-resolution formula.
    pub predicted: f64,
    /// Measured (E min ||X-a||²)^{1/2}.
    pub achieved: f64,
    pub ratio: f64,
    pub ratio_stderr: f64,
}

/// Ratio of the measured error to the high-resolution prediction.
pub fn compare_to_theory(pq: &ProductQuantizer, est: &McEstimate) -> Result<TheoryComparison> {
    let n = pq.budget();
    let predicted = crate::asymptotics::quantization_rate(pq.model(), n)?.value;
    let achieved = est.mean.sqrt();
    let ratio = achieved / predicted;
    let ratio_stderr = est.stderr / (2.0 * achieved) / predicted;
    Ok(TheoryComparison {
        n,
        predicted,
        achieved,
        ratio,
        ratio_stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::product::{build, build_rl32};
    use crate::vector::Quality;
    use std::f64::consts::PI;

    fn brownian_build(n: u64) -> ProductQuantizer {
        build(&EigenModel::brownian(), n, 0.5, Some(1), Quality::Quick, 11).unwrap()
    }

    #[test]
    fn mean_quantizer_measures_total_variance() {
        let pq = brownian_build(1);
        let est = estimate(&pq, 200_000, None, 5, DistortionMode::ProductCell).unwrap();
        assert!(
            (est.mean - 0.5).abs() < 3.0 * est.stderr,
            "mean {} stderr {}",
            est.mean,
            est.stderr
        );
        assert!(est.mean >= est.tail);
        assert!(est.stderr > 0.0);
    }

    #[test]
    fn product_cell_matches_analytic_equality() {
        let pq = brownian_build(10);
        let est = estimate(&pq, 400_000, None, 7, DistortionMode::ProductCell).unwrap();
        let analytic = pq.analytic_distortion();
        assert!(
            (est.mean - analytic).abs() < 3.0 * est.stderr,
            "mc {} vs analytic {analytic} (stderr {})",
            est.mean,
            est.stderr
        );
    }

    #[test]
    fn voronoi_never_beats_product_cell_by_more_than_noise_and_vice_versa() {
        let pq = brownian_build(10);
        let pc = estimate(&pq, 150_000, None, 3, DistortionMode::ProductCell).unwrap();
        let vo = estimate(&pq, 150_000, None, 3, DistortionMode::Voronoi).unwrap();
        let noise = 3.0 * (pc.stderr + vo.stderr);
        assert!(
            vo.mean <= pc.mean + noise,
            "voronoi {} pc {}",
            vo.mean,
            pc.mean
        );
    }

    #[test]
    fn voronoi_refused_on_huge_codebooks() {
        let pq = build(
            &EigenModel::brownian(),
            1 << 14,
            0.5,
            Some(1),
            Quality::Quick,
            1,
        )
        .unwrap();
        if pq.total_size() > crate::product::ENUMERATION_LIMIT {
            assert!(matches!(
                estimate(&pq, 1_000, None, 1, DistortionMode::Voronoi),
                Err(FunqError::EnumerationTooLarge { .. })
            ));
        }
    }

    #[test]
    fn reproducible_bit_exact() {
        let pq = brownian_build(10);
        let a = estimate(&pq, 50_000, None, 9, DistortionMode::ProductCell).unwrap();
        let b = estimate(&pq, 50_000, None, 9, DistortionMode::ProductCell).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn stderr_shrinks_like_root_two() {
        let pq = brownian_build(10);
        let small = estimate(&pq, 100_000, None, 13, DistortionMode::ProductCell).unwrap();
        let big = estimate(&pq, 200_000, None, 13, DistortionMode::ProductCell).unwrap();
        let ratio = big.stderr / small.stderr;
        let target = 1.0 / 2f64.sqrt();
        assert!(
            (ratio - target).abs() < 0.2 * target,
            "stderr ratio {ratio} vs {target}"
        );
    }

    #[test]
    fn truncation_guards() {
        let pq = brownian_build(10);
        assert!(estimate(&pq, 100, None, 1, DistortionMode::ProductCell).is_err());
        let covered = pq.quantized_coords();
        assert!(estimate(
            &pq,
            2_000,
            Some(covered - 1),
            1,
            DistortionMode::ProductCell
        )
        .is_err());
        // minimal truncation equal to the covered count is accepted
        let est = estimate(&pq, 2_000, Some(covered), 1, DistortionMode::ProductCell).unwrap();
        assert_eq!(est.truncation, covered);
    }

    #[test]
    fn coefficient_space_equals_function_space_for_brownian() {
        // Parseval cross-validation on a 2^12 grid: per-sample agreement
        // within the trapezoid quadrature error bound.
        let pq = brownian_build(4);
        let model = pq.model().clone();
        let j_terms = 16usize;
        let weights: Vec<f64> = (1..=j_terms)
            .map(|j| model.eigenvalue(j).unwrap())
            .collect();
        let mut src = NormalSource::new(77, 0);
        let nodes = QUADRATURE_PANELS + 1;
        let h = 1.0 / QUADRATURE_PANELS as f64;
        for _ in 0..5 {
            let mut z = vec![0.0f64; j_terms];
            src.fill_normal(&mut z);
            let coef_err = product_cell_orthonormal(&pq, &weights, &z);
            // function-space route
            let mut scaled = vec![0.0f64; j_terms];
            product_cell_residual(
                &pq,
                &weights.iter().map(|w| w.sqrt()).collect::<Vec<_>>(),
                &z,
                &mut scaled,
            );
            let mut quad = 0.0;
            let mut deriv_budget = 0.0; // bounds |(err^2)''| via coefficient sums
            let mut amp0 = 0.0;
            let mut amp2 = 0.0;
            for (i, &c) in scaled.iter().enumerate() {
                let omega = PI * (i as f64 + 0.5);
                amp0 += c.abs() * 2f64.sqrt();
                amp2 += c.abs() * 2f64.sqrt() * omega * omega;
            }
            let amp1: f64 = scaled
                .iter()
                .enumerate()
                .map(|(i, &c)| c.abs() * 2f64.sqrt() * PI * (i as f64 + 0.5))
                .sum();
            deriv_budget += 2.0 * (amp1 * amp1 + amp0 * amp2);
            for g in 0..nodes {
                let t = (g as f64 * h).min(1.0);
                let mut v = 0.0;
                for (i, &c) in scaled.iter().enumerate() {
                    v += c * model.basis_eval(i + 1, t).unwrap();
                }
                let w = if g == 0 || g == nodes - 1 { 0.5 * h } else { h };
                quad += w * v * v;
            }
            let bound = h * h / 12.0 * deriv_budget;
            assert!(
                (coef_err - quad).abs() <= bound.max(1e-12),
                "coef {coef_err} vs quad {quad} (bound {bound})"
            );
        }
    }

    #[test]
    fn rl32_zero_codeword_measures_the_energy_series() {
        let pq = build_rl32(1, Quality::Quick, 1).unwrap();
        let est = estimate(&pq, 100_000, None, 21, DistortionMode::ProductCell).unwrap();
        let expected = 1.0 / 12.0;
        assert!(
            (est.mean - expected).abs() < 3.0 * est.stderr,
            "mean {} vs {expected} (stderr {})",
            est.mean,
            est.stderr
        );
    }

    #[test]
    fn rl32_product_cell_matches_signed_series() {
        // the (non-Voronoi) scalar product quantization of the integrated
        // expansion still satisfies the equality: measured distortion agrees
        // with the signed energy-weight series value
        let pq = build_rl32(10, Quality::Quick, 5).unwrap();
        let est = estimate(&pq, 200_000, None, 23, DistortionMode::ProductCell).unwrap();
        let analytic = pq.analytic_distortion();
        assert!(
            (est.mean - analytic).abs() < 3.0 * est.stderr,
            "mc {} vs analytic {analytic} (stderr {})",
            est.mean,
            est.stderr
        );
    }

    #[test]
    fn rl32_voronoi_improves_on_product_cells() {
        // the quantization is non-Voronoi; reassigning to the nearest
        // codeword in function space can only reduce the error
        let pq = build_rl32(16, Quality::Quick, 5).unwrap();
        let pc = estimate(&pq, 60_000, None, 3, DistortionMode::ProductCell).unwrap();
        let vo = estimate(&pq, 60_000, None, 3, DistortionMode::Voronoi).unwrap();
        assert!(vo.mean <= pc.mean + 3.0 * (pc.stderr + vo.stderr));
    }

    #[test]
    fn theory_comparison_guards_and_values() {
        let pq = brownian_build(1);
        let est = estimate(&pq, 2_000, None, 1, DistortionMode::ProductCell).unwrap();
        assert!(matches!(
            compare_to_theory(&pq, &est),
            Err(FunqError::LevelTooSmall(1))
        ));
        let pq = brownian_build(1000);
        let est = estimate(&pq, 100_000, None, 1, DistortionMode::ProductCell).unwrap();
        let cmp = compare_to_theory(&pq, &est).unwrap();
        assert!(cmp.ratio > 1.0 && cmp.ratio < 2.0, "ratio {}", cmp.ratio);
        assert!(cmp.ratio_stderr < 0.01);
    }
}
