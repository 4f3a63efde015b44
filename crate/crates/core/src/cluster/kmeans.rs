//! One-dimensional Lloyd's k-means over weight values.
//!
//! Values are sorted once; with sorted centroids every cluster is a
//! contiguous run of the sorted values, so the assignment step reduces to a
//! binary search per centroid boundary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{CentroidTable, ClusterError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// Evenly spaced over `[min, max]` of the data.
    #[default]
    Linspace,
    KmeansPlusPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KMeansConfig {
    pub max_iters: usize,
    /// Convergence threshold on the largest centroid movement.
    pub tol: f64,
    pub seed: u64,
    pub init: Init,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { max_iters: 300, tol: 1e-6, seed: 0, init: Init::Linspace }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub table: CentroidTable,
    /// Index into `table` for every input value, in input order.
    pub assignments: Vec<u32>,
    /// Sum of squared errors against the final `f32` table.
    pub sse: f64,
    /// SSE of the assignment at the start of every iteration.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn mse(&self) -> f64 {
        if self.assignments.is_empty() {
            0.0
        } else {
            self.sse / self.assignments.len() as f64
        }
    }
}

/// Neumaier-compensated sum of `x` and sum of squared deviations from `c`.
fn segment_stats(values: &[f64], c: f64) -> (f64, f64) {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let (mut sq, mut sq_comp) = (0.0f64, 0.0f64);
    for &v in values {
        neumaier(&mut sum, &mut comp, v);
        let d = v - c;
        neumaier(&mut sq, &mut sq_comp, d * d);
    }
    (sum + comp, sq + sq_comp)
}

#[inline]
fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

/// Segment boundaries of `sorted` for ascending `centroids`: cluster `j` owns
/// `sorted[bounds[j]..bounds[j + 1]]`. Ties, including duplicate centroids,
/// go to the lower index.
fn boundaries(sorted: &[f64], centroids: &[f64]) -> Vec<usize> {
    let k = centroids.len();
    // next_distinct[j]: first centroid strictly greater than centroids[j].
    let mut next_distinct = vec![None; k];
    for j in (0..k.saturating_sub(1)).rev() {
        next_distinct[j] = if centroids[j + 1] > centroids[j] { Some(centroids[j + 1]) } else { next_distinct[j + 1] };
    }
    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(0);
    for j in 0..k - 1 {
        let start = *bounds.last().unwrap();
        let end = match next_distinct[j] {
            Some(hi) => {
                let lo = centroids[j];
                start + sorted[start..].partition_point(|&v| (hi - v).abs() >= (v - lo).abs())
            }
            None => sorted.len(),
        };
        bounds.push(end);
    }
    bounds.push(sorted.len());
    bounds
}

fn nearest(centroids: &[f32], v: f32) -> usize {
    // Ascending table: the nearest is at the insertion point or just before.
    let p = centroids.partition_point(|&c| c < v);
    let mut best = p.min(centroids.len() - 1);
    if p > 0 {
        let d_lo = (v as f64 - centroids[p - 1] as f64).abs();
        let d_hi = (centroids[best] as f64 - v as f64).abs();
        if d_lo <= d_hi {
            best = p - 1;
        }
    }
    // Walk down through equal centroids so ties resolve to the lowest index.
    while best > 0 && centroids[best - 1] == centroids[best] {
        best -= 1;
    }
    best
}

fn init_centroids(sorted: &[f64], k: usize, cfg: &KMeansConfig) -> Vec<f64> {
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    match cfg.init {
        Init::Linspace => {
            if k == 1 {
                return vec![0.5 * (min + max)];
            }
            (0..k).map(|j| min + (max - min) * j as f64 / (k - 1) as f64).collect()
        }
        Init::KmeansPlusPlus => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut chosen = vec![sorted[rng.random_range(0..sorted.len())]];
            let mut d2: Vec<f64> = sorted.iter().map(|&v| (v - chosen[0]).powi(2)).collect();
            while chosen.len() < k {
                let total: f64 = d2.iter().sum();
                let next = if total <= 0.0 {
                    sorted[rng.random_range(0..sorted.len())]
                } else {
                    let mut target = rng.random::<f64>() * total;
                    let mut pick = sorted.len() - 1;
                    for (i, &w) in d2.iter().enumerate() {
                        if target < w {
                            pick = i;
                            break;
                        }
                        target -= w;
                    }
                    sorted[pick]
                };
                chosen.push(next);
                for (d, &v) in d2.iter_mut().zip(sorted) {
                    *d = d.min((v - next).powi(2));
                }
            }
            chosen.sort_by(f64::total_cmp);
            chosen
        }
    }
}

/// Re-seeds empty clusters with the values farthest from their centroid.
fn reseed(sorted: &[f64], bounds: &[usize], old: &[f64], new: &mut [f64], empty: &[usize]) {
    // Farthest candidates of each non-empty run sit at its two ends.
    let mut ends: Vec<(usize, usize)> = (0..old.len())
        .filter(|&j| bounds[j] < bounds[j + 1])
        .map(|j| (bounds[j], bounds[j + 1]))
        .collect();
    for &e in empty {
        let mut best: Option<(f64, usize, usize, bool)> = None;
        for (slot, &(lo, hi)) in ends.iter().enumerate() {
            if lo >= hi {
                continue;
            }
            let j = cluster_of(bounds, lo);
            let (dl, dh) = ((sorted[lo] - old[j]).abs(), (sorted[hi - 1] - old[j]).abs());
            let (d, at_lo) = if dh > dl { (dh, false) } else { (dl, true) };
            if best.is_none_or(|b| d > b.0) {
                best = Some((d, slot, if at_lo { lo } else { hi - 1 }, at_lo));
            }
        }
        match best {
            Some((d, slot, idx, at_lo)) if d > 0.0 => {
                new[e] = sorted[idx];
                if at_lo {
                    ends[slot].0 += 1;
                } else {
                    ends[slot].1 -= 1;
                }
            }
            _ => {
                // Every value already sits on a centroid; the cluster stays empty.
                new[e] = old[e];
            }
        }
    }
}

fn cluster_of(bounds: &[usize], idx: usize) -> usize {
    bounds.partition_point(|&b| b <= idx) - 1
}

/// Clusters `values` into at most `k` centroids.
///
/// Lloyd iterations run until the largest centroid movement is `<= tol` or
/// `max_iters` is reached. The returned table is sorted ascending and holds
/// only non-empty clusters, so it has fewer than `k` entries when the data
/// has fewer than `k` distinct values.
pub fn kmeans_1d(values: &[f32], k: usize, cfg: &KMeansConfig) -> Result<KMeansResult, ClusterError> {
    if k == 0 {
        return Err(ClusterError::InvalidK(k));
    }
    if values.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(ClusterError::NonFinite { position: pos });
    }

    let mut sorted: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    sorted.sort_by(f64::total_cmp);

    let mut centroids = init_centroids(&sorted, k, cfg);
    let mut sse_history = Vec::new();
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let bounds = boundaries(&sorted, &centroids);
        let mut sse = 0.0;
        let mut next = centroids.clone();
        let mut empty = Vec::new();
        for j in 0..centroids.len() {
            let seg = &sorted[bounds[j]..bounds[j + 1]];
            if seg.is_empty() {
                empty.push(j);
                continue;
            }
            let (sum, sq) = segment_stats(seg, centroids[j]);
            sse += sq;
            next[j] = sum / seg.len() as f64;
        }
        debug_assert!(
            sse_history.last().is_none_or(|&prev: &f64| sse <= prev * (1.0 + 1e-12) + 1e-24),
            "k-means SSE increased"
        );
        sse_history.push(sse);
        if !empty.is_empty() {
            reseed(&sorted, &bounds, &centroids, &mut next, &empty);
        }
        next.sort_by(f64::total_cmp);
        let movement = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        centroids = next;
        if movement <= cfg.tol {
            break;
        }
    }

    // Final table: f32 centroids of the non-empty clusters only.
    let bounds = boundaries(&sorted, &centroids);
    let mut table: Vec<f32> = (0..centroids.len())
        .filter(|&j| bounds[j] < bounds[j + 1])
        .map(|j| centroids[j] as f32)
        .collect();
    table.sort_by(f32::total_cmp);
    table.dedup();

    let assignments: Vec<u32> = values.iter().map(|&v| nearest(&table, v) as u32).collect();
    let sse = values
        .iter()
        .zip(&assignments)
        .map(|(&v, &a)| {
            let d = v as f64 - table[a as usize] as f64;
            d * d
        })
        .sum();

    Ok(KMeansResult { table: CentroidTable::new(table), assignments, sse, sse_history, iterations })
}
