//! Codebooks of N(0, I_d) trained by competitive learning.
//!
//! The stochastic gradient recursion (CLVQ): at step t draw ζ(t) ~ N(0, I_d),
//! select the nearest point (competitive phase, lowest index wins ties) and
//! move only that winner,
//!
//! ```text
//! α_w(t) = (1 − γ_t) α_w(t−1) + γ_t ζ(t),   γ_t = A/(B + t),
//! ```
//!
//! all other points unchanged. Lloyd refinement on a fixed evaluation sample
//! polishes the result: assign, recompute cell means, reseed empty cells at
//! the sample farthest from its nearest codepoint. Distortion is always
//! reported from a dedicated sample stream disjoint from the training draws.

use crate::error::FunqError;
use crate::rng::NormalSource;
use crate::Result;
use rayon::prelude::*;

/// Decreasing gain γ_t = A/(B+t); Σγ_t diverges while Σγ_t² converges.
#[derive(Debug, Clone, Copy)]
pub struct GainSchedule {
    pub a: f64,
    pub b: f64,
}

impl GainSchedule {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(FunqError::OutOfRange {
                name: "gain",
                range: "(0, inf) x (0, inf)",
                value: if a > 0.0 { b } else { a },
            });
        }
        Ok(GainSchedule { a, b })
    }

    /// Default used across the crate: A = 4·n^{1/d}, B = 10³, sized so early
    /// steps move points by O(1).
    pub fn default_for(d: usize, n: usize) -> Self {
        GainSchedule {
            a: 4.0 * (n as f64).powf(1.0 / d as f64),
            b: 1e3,
        }
    }

    #[inline]
    pub fn gamma(&self, t: u64) -> f64 {
        self.a / (self.b + t as f64)
    }
}

/// Training provenance of a [`CodebookD`].
#[derive(Debug, Clone, Copy)]
pub struct TrainMeta {
    pub steps: u64,
    pub gain_a: f64,
    pub gain_b: f64,
    pub seed: u64,
    pub lloyd_rounds: u32,
}

/// n-point codebook of N(0, I_d) with an empirical distortion estimate.
#[derive(Debug, Clone)]
pub struct CodebookD {
    d: usize,
    points: Vec<f64>, // n x d, row major
    probs: Vec<f64>,  // empirical cell frequencies on the evaluation sample
    distortion: f64,  // empirical E min_i ||Z - a_i||^2
    stderr: f64,
    meta: TrainMeta,
}

impl CodebookD {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.points.len() / self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn distortion(&self) -> f64 {
        self.distortion
    }

    pub fn stderr(&self) -> f64 {
        self.stderr
    }

    pub fn meta(&self) -> &TrainMeta {
        &self.meta
    }

    /// Index of the nearest point (lowest index on ties).
    pub fn nearest(&self, x: &[f64]) -> usize {
        nearest_point(&self.points, self.d, x).0
    }

    /// Wrap externally produced points (file loader, adapters). Distortion
    /// and cell frequencies are measured on `eval_samples` fresh draws.
    pub fn from_points(d: usize, points: Vec<f64>, eval_samples: usize, seed: u64) -> Result<Self> {
        if d == 0 || points.is_empty() || !points.len().is_multiple_of(d) {
            return Err(FunqError::Parse {
                location: "codebook".into(),
                message: "point buffer size must be a positive multiple of d".into(),
            });
        }
        let (distortion, stderr, probs) = evaluate(d, &points, eval_samples, seed, EVAL_STREAM);
        Ok(CodebookD {
            d,
            points,
            probs,
            distortion,
            stderr,
            meta: TrainMeta {
                steps: 0,
                gain_a: 0.0,
                gain_b: 0.0,
                seed,
                lloyd_rounds: 0,
            },
        })
    }

    /// CSV export: a comment header carrying (d, n, seed, steps), then one
    /// row per point with its coordinates and cell probability.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# d {} n {} seed {} steps {}\n",
            self.d,
            self.n(),
            self.meta.seed,
            self.meta.steps
        );
        let cols: Vec<String> = (1..=self.d).map(|k| format!("c{k}")).collect();
        out.push_str(&format!("i,{},p_i\n", cols.join(",")));
        for i in 0..self.n() {
            let coords: Vec<String> = self.point(i).iter().map(|c| format!("{c:.16e}")).collect();
            out.push_str(&format!(
                "{},{},{:.16e}\n",
                i + 1,
                coords.join(","),
                self.probs[i]
            ));
        }
        out
    }

    /// Key-value distortion report.
    pub fn report(&self) -> String {
        format!(
            "d {}\nn {}\ndistortion {:.16e}\nstderr {:.16e}\nsteps {}\ngain_a {:.16e}\ngain_b {:.16e}\nseed {}\nlloyd_rounds {}\n",
            self.d,
            self.n(),
            self.distortion,
            self.stderr,
            self.meta.steps,
            self.meta.gain_a,
            self.meta.gain_b,
            self.meta.seed,
            self.meta.lloyd_rounds
        )
    }

    /// Rebuild from stored fields without re-evaluation (file loader).
    pub fn from_parts(
        d: usize,
        points: Vec<f64>,
        probs: Vec<f64>,
        distortion: f64,
        stderr: f64,
        meta: TrainMeta,
    ) -> Result<Self> {
        if d == 0
            || points.is_empty()
            || !points.len().is_multiple_of(d)
            || probs.len() != points.len() / d
        {
            return Err(FunqError::Parse {
                location: "codebook".into(),
                message: "inconsistent point/prob buffer sizes".into(),
            });
        }
        Ok(CodebookD {
            d,
            points,
            probs,
            distortion,
            stderr,
            meta,
        })
    }
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let diff = x - y;
        acc += diff * diff;
    }
    acc
}

// (index, squared distance) of the nearest point; strict `<` keeps the
// lowest index among exact ties.
fn nearest_point(points: &[f64], d: usize, x: &[f64]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, p) in points.chunks_exact(d).enumerate() {
        let dd = dist2(p, x);
        if dd < best_d {
            best_d = dd;
            best = i;
        }
    }
    (best, best_d)
}

// Uniform-grid partition for exact nearest-neighbor search over codebooks
// too large for exhaustive scans (d = 2 or 3). Cells hold point indices;
// queries expand Chebyshev rings until the incumbent distance is provably
// minimal: every cell at ring r+1 is at least r·h away in some axis.
pub(crate) struct GridIndex {
    d: usize,
    per_axis: usize,
    cell_size: f64,
    origin: [f64; 3],
    buckets: Vec<Vec<u32>>,
}

const GRID_MIN_POINTS: usize = 256;

impl GridIndex {
    pub(crate) fn build(points: &[f64], d: usize) -> Option<GridIndex> {
        let n = points.len() / d;
        if !(2..=3).contains(&d) || n < GRID_MIN_POINTS {
            return None;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points.chunks_exact(d) {
            for k in 0..d {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let span = (0..d).map(|k| hi[k] - lo[k]).fold(0.0f64, f64::max);
        if !(span.is_finite() && span > 0.0) {
            return None;
        }
        let per_axis = ((2.0 * (n as f64).powf(1.0 / d as f64)).ceil() as usize).clamp(4, 96);
        let cell_size = span / per_axis as f64 * (1.0 + 1e-12);
        let mut origin = [0.0f64; 3];
        origin[..d].copy_from_slice(&lo[..d]);
        let mut grid = GridIndex {
            d,
            per_axis,
            cell_size,
            origin,
            buckets: vec![Vec::new(); per_axis.pow(d as u32)],
        };
        for (i, p) in points.chunks_exact(d).enumerate() {
            let b = grid.bucket_of(p);
            grid.buckets[b].push(i as u32);
        }
        Some(grid)
    }

    #[inline]
    fn axis_cell(&self, v: f64, k: usize) -> usize {
        let c = (v - self.origin[k]) / self.cell_size;
        (c.floor().max(0.0) as usize).min(self.per_axis - 1)
    }

    fn bucket_of(&self, x: &[f64]) -> usize {
        let mut idx = 0usize;
        for (k, &v) in x.iter().enumerate().take(self.d) {
            idx = idx * self.per_axis + self.axis_cell(v, k);
        }
        idx
    }

    pub(crate) fn relocate(&mut self, point_idx: usize, old: &[f64], new: &[f64]) {
        let from = self.bucket_of(old);
        let to = self.bucket_of(new);
        if from == to {
            return;
        }
        let bucket = &mut self.buckets[from];
        if let Some(pos) = bucket.iter().position(|&i| i as usize == point_idx) {
            bucket.swap_remove(pos);
        }
        self.buckets[to].push(point_idx as u32);
    }

    pub(crate) fn nearest(&self, points: &[f64], x: &[f64]) -> (usize, f64) {
        let d = self.d;
        let mut home = [0usize; 3];
        for k in 0..d {
            home[k] = self.axis_cell(x[k], k);
        }
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        // ring r+1 cells are at least r*cell_size away in some axis, so the
        // incumbent is final once best_d is below that reach
        for ring in 0..=self.per_axis {
            if best != usize::MAX {
                let reach = (ring.saturating_sub(1)) as f64 * self.cell_size;
                if best_d <= reach * reach {
                    break;
                }
            }
            self.for_ring(&home[..d], ring, |bucket| {
                for &i in &self.buckets[bucket] {
                    let p = &points[i as usize * d..(i as usize + 1) * d];
                    let dd = dist2(p, x);
                    if dd < best_d || (dd == best_d && (i as usize) < best) {
                        best_d = dd;
                        best = i as usize;
                    }
                }
            });
        }
        (best, best_d)
    }

    // Visit every bucket whose Chebyshev distance from `home` is exactly
    // `ring` (clipped to the grid).
    fn for_ring<F: FnMut(usize)>(&self, home: &[usize], ring: usize, mut visit: F) {
        let g = self.per_axis as isize;
        let r = ring as isize;
        let d = self.d;
        let h: Vec<isize> = home.iter().map(|&v| v as isize).collect();
        let mut cells = |a: isize, b: isize, c: isize| {
            let coords = [a, b, c];
            if coords[..d].iter().any(|&v| v < 0 || v >= g) {
                return;
            }
            let mut idx = 0usize;
            for &v in &coords[..d] {
                idx = idx * self.per_axis + v as usize;
            }
            visit(idx);
        };
        if d == 2 {
            if ring == 0 {
                cells(h[0], h[1], 0);
                return;
            }
            for da in -r..=r {
                cells(h[0] + da, h[1] - r, 0);
                cells(h[0] + da, h[1] + r, 0);
            }
            for db in (-r + 1)..r {
                cells(h[0] - r, h[1] + db, 0);
                cells(h[0] + r, h[1] + db, 0);
            }
        } else {
            if ring == 0 {
                cells(h[0], h[1], h[2]);
                return;
            }
            // two full faces plus the open band between them
            for da in -r..=r {
                for db in -r..=r {
                    cells(h[0] + da, h[1] + db, h[2] - r);
                    cells(h[0] + da, h[1] + db, h[2] + r);
                }
            }
            for dc in (-r + 1)..r {
                for da in -r..=r {
                    cells(h[0] + da, h[1] - r, h[2] + dc);
                    cells(h[0] + da, h[1] + r, h[2] + dc);
                }
                for db in (-r + 1)..r {
                    cells(h[0] - r, h[1] + db, h[2] + dc);
                    cells(h[0] + r, h[1] + db, h[2] + dc);
                }
            }
        }
    }
}

// Query-side dispatch: exhaustive scan for small codebooks, grid for large.
pub(crate) enum NnIndex {
    Exhaustive,
    Grid(GridIndex),
}

impl NnIndex {
    pub(crate) fn build(points: &[f64], d: usize) -> NnIndex {
        match GridIndex::build(points, d) {
            Some(g) => NnIndex::Grid(g),
            None => NnIndex::Exhaustive,
        }
    }

    #[inline]
    pub(crate) fn nearest(&self, points: &[f64], d: usize, x: &[f64]) -> (usize, f64) {
        match self {
            NnIndex::Exhaustive => nearest_point(points, d, x),
            NnIndex::Grid(g) => g.nearest(points, x),
        }
    }
}

/// Step-by-step hook into the training recursion (used to check the winner
/// contraction and loser invariance on live runs).
pub trait ClvqObserver {
    fn before_update(
        &mut self,
        _t: u64,
        _gamma: f64,
        _sample: &[f64],
        _winner: usize,
        _points: &[f64],
    ) {
    }
    fn after_update(&mut self, _t: u64, _winner: usize, _points: &[f64]) {}
}

/// No-op observer for production runs.
pub struct NoObserver;
impl ClvqObserver for NoObserver {}

// stream ids of the ChaCha generator per purpose
const INIT_TRAIN_STREAM: u64 = 0;
const EVAL_STREAM: u64 = 1;
const LLOYD_SAMPLE_STREAM: u64 = 2;

/// CLVQ training with an observer hook.
pub fn clvq_train_observed<O: ClvqObserver>(
    d: usize,
    n: usize,
    steps: u64,
    gain: GainSchedule,
    seed: u64,
    observer: &mut O,
) -> Result<CodebookD> {
    if d == 0 || n == 0 || steps == 0 {
        return Err(FunqError::EmptyBudget);
    }
    let mut src = NormalSource::new(seed, INIT_TRAIN_STREAM);
    // i.i.d. standard normal initialization; exact duplicates redrawn
    let mut points = vec![0.0f64; n * d];
    let mut seen = std::collections::HashSet::with_capacity(n);
    for i in 0..n {
        loop {
            let row = &mut points[i * d..(i + 1) * d];
            src.fill_normal(row);
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            if seen.insert(key) {
                break;
            }
        }
    }
    let mut sample = vec![0.0f64; d];
    let mut index = NnIndex::build(&points, d);
    let mut old = vec![0.0f64; d];
    for t in 1..=steps {
        src.fill_normal(&mut sample);
        let (winner, _) = index.nearest(&points, d, &sample);
        let gamma = gain.gamma(t);
        observer.before_update(t, gamma, &sample, winner, &points);
        old.copy_from_slice(&points[winner * d..(winner + 1) * d]);
        for (p, &z) in points[winner * d..(winner + 1) * d].iter_mut().zip(&sample) {
            *p += gamma * (z - *p);
        }
        if let NnIndex::Grid(g) = &mut index {
            g.relocate(winner, &old, &points[winner * d..(winner + 1) * d]);
        }
        observer.after_update(t, winner, &points);
    }
    let (distortion, stderr, probs) = evaluate(d, &points, DEFAULT_EVAL_SAMPLES, seed, EVAL_STREAM);
    Ok(CodebookD {
        d,
        points,
        probs,
        distortion,
        stderr,
        meta: TrainMeta {
            steps,
            gain_a: gain.a,
            gain_b: gain.b,
            seed,
            lloyd_rounds: 0,
        },
    })
}

/// CLVQ training: exactly `steps` competitive/learning iterations, then a
/// distortion evaluation on a disjoint sample stream.
pub fn clvq_train(
    d: usize,
    n: usize,
    steps: u64,
    gain: GainSchedule,
    seed: u64,
) -> Result<CodebookD> {
    clvq_train_observed(d, n, steps, gain, seed, &mut NoObserver)
}

const DEFAULT_EVAL_SAMPLES: usize = 200_000;
const EVAL_BATCH: usize = 65_536;

// Monte-Carlo evaluation of E min_i ||Z - a_i||^2. Batches are generated on
// independent counter-derived streams and reduced in fixed batch order, so
// the result is bit-identical regardless of thread count.
fn evaluate(
    d: usize,
    points: &[f64],
    samples: usize,
    seed: u64,
    stream_base: u64,
) -> (f64, f64, Vec<f64>) {
    let n = points.len() / d;
    let index = NnIndex::build(points, d);
    let batches: Vec<(usize, usize)> = (0..samples)
        .step_by(EVAL_BATCH)
        .enumerate()
        .map(|(b, start)| (b, (samples - start).min(EVAL_BATCH)))
        .collect();
    let partials: Vec<(f64, f64, Vec<u64>)> = batches
        .par_iter()
        .map(|&(b, count)| {
            let mut src = NormalSource::new(seed, stream_base + 16 + b as u64);
            let mut x = vec![0.0f64; d];
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut counts = vec![0u64; n];
            for _ in 0..count {
                src.fill_normal(&mut x);
                let (i, dd) = index.nearest(points, d, &x);
                sum += dd;
                sum_sq += dd * dd;
                counts[i] += 1;
            }
            (sum, sum_sq, counts)
        })
        .collect();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut counts = vec![0u64; n];
    for (s, s2, c) in &partials {
        sum += s;
        sum_sq += s2;
        for (acc, v) in counts.iter_mut().zip(c) {
            *acc += v;
        }
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = (sum_sq / m - mean * mean).max(0.0);
    let stderr = (var / m).sqrt();
    let probs = counts.iter().map(|&c| c as f64 / m).collect();
    (mean, stderr, probs)
}

/// Lloyd refinement together with the per-round distortion trace on the
/// fixed sample (the trace is non-increasing).
pub fn lloyd_refine_traced(
    cb: &CodebookD,
    sample_size: usize,
    rounds: usize,
    seed: u64,
) -> Result<(CodebookD, Vec<f64>)> {
    let d = cb.d;
    let n = cb.n();
    let mut src = NormalSource::new(seed, LLOYD_SAMPLE_STREAM);
    let mut sample = vec![0.0f64; sample_size * d];
    src.fill_normal(&mut sample);

    let mut points = cb.points.clone();
    let mut trace = Vec::with_capacity(rounds + 1);
    for _ in 0..rounds {
        let (dist, sums, counts, far) = assign_pass(d, &points, &sample);
        trace.push(dist);
        // mean update; empty cells restart at the worst-covered sample
        let mut reseed_at = far;
        for i in 0..n {
            if counts[i] > 0 {
                for k in 0..d {
                    points[i * d + k] = sums[i * d + k] / counts[i] as f64;
                }
            } else {
                let s = &sample[reseed_at * d..(reseed_at + 1) * d];
                points[i * d..(i + 1) * d].copy_from_slice(s);
                // subsequent empty cells (rare) take the following samples
                reseed_at = (reseed_at + 1) % (sample.len() / d);
            }
        }
    }
    let (final_dist, _, _, _) = assign_pass(d, &points, &sample);
    trace.push(final_dist);

    let (distortion, stderr, probs) = evaluate(
        d,
        &points,
        sample_size.max(DEFAULT_EVAL_SAMPLES),
        seed,
        EVAL_STREAM,
    );
    let mut meta = cb.meta;
    meta.lloyd_rounds += rounds as u32;
    Ok((
        CodebookD {
            d,
            points,
            probs,
            distortion,
            stderr,
            meta,
        },
        trace,
    ))
}

/// Lloyd refinement on a fixed evaluation sample.
pub fn lloyd_refine(
    cb: &CodebookD,
    sample_size: usize,
    rounds: usize,
    seed: u64,
) -> Result<CodebookD> {
    Ok(lloyd_refine_traced(cb, sample_size, rounds, seed)?.0)
}

// (mean distortion, per-cell coordinate sums, per-cell counts, index of the
// sample farthest from its nearest point)
type AssignResult = (f64, Vec<f64>, Vec<u64>, usize);

// One assignment pass over the fixed sample.
fn assign_pass(d: usize, points: &[f64], sample: &[f64]) -> AssignResult {
    let n = points.len() / d;
    let index = NnIndex::build(points, d);
    let count = sample.len() / d;
    let chunk = 16_384usize;
    let ranges: Vec<(usize, usize)> = (0..count)
        .step_by(chunk)
        .map(|start| (start, (count - start).min(chunk)))
        .collect();
    // per-chunk: (distortion sum, cell sums, cell counts, far index, far dist)
    type ChunkResult = (f64, Vec<f64>, Vec<u64>, usize, f64);
    let results: Vec<ChunkResult> = ranges
        .par_iter()
        .map(|&(start, len)| {
            let mut sums = vec![0.0f64; n * d];
            let mut counts = vec![0u64; n];
            let mut dist_acc = 0.0;
            let mut far_idx = start;
            let mut far_d = -1.0;
            for s in start..start + len {
                let x = &sample[s * d..(s + 1) * d];
                let (i, dd) = index.nearest(points, d, x);
                counts[i] += 1;
                for (acc, &v) in sums[i * d..(i + 1) * d].iter_mut().zip(x) {
                    *acc += v;
                }
                dist_acc += dd;
                if dd > far_d {
                    far_d = dd;
                    far_idx = s;
                }
            }
            (dist_acc, sums, counts, far_idx, far_d)
        })
        .collect();
    let mut sums = vec![0.0f64; n * d];
    let mut counts = vec![0u64; n];
    let mut dist_acc = 0.0;
    let mut far_idx = 0usize;
    let mut far_d = -1.0;
    for (dist, s, c, fi, fd) in results {
        dist_acc += dist;
        for (acc, v) in sums.iter_mut().zip(&s) {
            *acc += v;
        }
        for (acc, v) in counts.iter_mut().zip(&c) {
            *acc += v;
        }
        if fd > far_d {
            far_d = fd;
            far_idx = fi;
        }
    }
    (dist_acc / count as f64, sums, counts, far_idx)
}

/// Per-coordinate mean squared error E(Z_k − Ẑ_k)² of a codebook under its
/// own Voronoi assignment, measured on fresh draws (fixed batch order).
pub fn per_coordinate_mse(cb: &CodebookD, samples: usize, seed: u64) -> Vec<f64> {
    let d = cb.d();
    let index = NnIndex::build(&cb.points, d);
    let batches: Vec<(usize, usize)> = (0..samples)
        .step_by(EVAL_BATCH)
        .enumerate()
        .map(|(b, start)| (b, (samples - start).min(EVAL_BATCH)))
        .collect();
    let partials: Vec<Vec<f64>> = batches
        .par_iter()
        .map(|&(b, count)| {
            let mut src = NormalSource::new(seed, PER_COORD_STREAM + b as u64);
            let mut x = vec![0.0f64; d];
            let mut acc = vec![0.0f64; d];
            for _ in 0..count {
                src.fill_normal(&mut x);
                let (i, _) = index.nearest(&cb.points, d, &x);
                let p = cb.point(i);
                for k in 0..d {
                    let diff = x[k] - p[k];
                    acc[k] += diff * diff;
                }
            }
            acc
        })
        .collect();
    let mut acc = vec![0.0f64; d];
    for part in &partials {
        for (a, v) in acc.iter_mut().zip(part) {
            *a += v;
        }
    }
    let m = samples as f64;
    acc.iter_mut().for_each(|a| *a /= m);
    acc
}

const PER_COORD_STREAM: u64 = 5000;

/// Effort presets for distortion estimation: (steps, restarts, evaluation
/// sample size, Lloyd rounds).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quality {
    Quick,
    Standard,
    High,
}

impl Quality {
    pub fn steps(self) -> u64 {
        match self {
            Quality::Quick => 50_000,
            Quality::Standard => 200_000,
            Quality::High => 1_000_000,
        }
    }

    pub fn restarts(self) -> usize {
        match self {
            Quality::Quick => 2,
            Quality::Standard => 3,
            Quality::High => 5,
        }
    }

    pub fn sample_size(self) -> usize {
        match self {
            Quality::Quick => 100_000,
            Quality::Standard => 300_000,
            Quality::High => 1_000_000,
        }
    }

    pub fn lloyd_rounds(self) -> usize {
        match self {
            Quality::Quick => 10,
            Quality::Standard => 20,
            Quality::High => 30,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Quality::Quick),
            "standard" => Ok(Quality::Standard),
            "high" => Ok(Quality::High),
            other => Err(FunqError::Parse {
                location: format!("'{other}'"),
                message: "expected quick|standard|high".into(),
            }),
        }
    }
}

impl std::fmt::Display for Quality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Quality::Quick => "quick",
            Quality::Standard => "standard",
            Quality::High => "high",
        })
    }
}

/// Best CLVQ+Lloyd codebook over the preset's restarts (parallel, with a
/// deterministic winner).
pub fn train_best(d: usize, n: usize, quality: Quality, base_seed: u64) -> Result<CodebookD> {
    let gain = GainSchedule::default_for(d, n);
    let runs: Vec<Result<CodebookD>> = (0..quality.restarts())
        .into_par_iter()
        .map(|r| {
            let seed = base_seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(r as u64 + 1));
            let cb = clvq_train(d, n, quality.steps(), gain, seed)?;
            lloyd_refine(&cb, quality.sample_size(), quality.lloyd_rounds(), seed)
        })
        .collect();
    let mut best: Option<CodebookD> = None;
    for run in runs {
        let cb = run?;
        if best.as_ref().is_none_or(|b| cb.distortion < b.distortion) {
            best = Some(cb);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Estimated squared quantization error e_n(N(0,I_d))² with its Monte-Carlo
/// standard error. n = 1 is analytic: the optimal point is the mean and the
/// distortion is exactly d.
pub fn estimate_error(d: usize, n: usize, quality: Quality) -> Result<(f64, f64)> {
    if d == 0 || n == 0 {
        return Err(FunqError::EmptyBudget);
    }
    if n == 1 {
        return Ok((d as f64, 0.0));
    }
    let cb = train_best(d, n, quality, estimate_seed(d, n))?;
    Ok((cb.distortion(), cb.stderr()))
}

fn estimate_seed(d: usize, n: usize) -> u64 {
    0xF0A9_4C11_D96Eu64 ^ ((d as u64) << 32) ^ n as u64
}

/// Capacity constants of block length l estimated from codebooks up to size
/// `k_max`.
#[derive(Debug, Clone)]
pub struct CapacityEstimate {
    pub l: usize,
    /// Running sup of k^{2/l} e_k² over the evaluated k.
    pub c: f64,
    /// k^{2/l} e_k² at the largest evaluated k (the limit estimate).
    pub q: f64,
    /// (k, e_k² estimate) support points.
    pub support: Vec<(usize, f64)>,
}

/// C(l) as a running sup of k^{2/l}·e_k² and Q(l) from the largest k.
///
/// l = 1 uses the exact Newton codebooks for every k <= k_max. l >= 2 uses
/// CLVQ+Lloyd estimates on a geometric k-grid; trained codebooks are at best
/// optimal, so both constants carry the training gap as an upward bias.
pub fn capacity_constants(l: usize, k_max: usize, quality: Quality) -> Result<CapacityEstimate> {
    if l == 0 || k_max < 2 {
        return Err(FunqError::EmptyBudget);
    }
    let ks: Vec<usize> = if l == 1 {
        (1..=k_max).collect()
    } else {
        let mut ks = vec![];
        let mut k = 1usize;
        while k < k_max {
            ks.push(k);
            k = (k * 3 / 2).max(k + 1);
        }
        ks.push(k_max);
        ks
    };
    let mut support = Vec::with_capacity(ks.len());
    if l == 1 {
        let errors = crate::scalar::error_table(k_max)?;
        for k in ks {
            let e2 = errors[k - 1] * errors[k - 1];
            support.push((k, e2));
        }
    } else {
        for k in ks {
            let (e2, _) = estimate_error(l, k, quality)?;
            support.push((k, e2));
        }
    }
    let scaled = |&(k, e2): &(usize, f64)| (k as f64).powf(2.0 / l as f64) * e2;
    let c = support.iter().map(scaled).fold(f64::MIN, f64::max);
    let q = scaled(support.last().unwrap());
    Ok(CapacityEstimate { l, c, q, support })
}
