//! Exact 1-D k-means by dynamic programming over sorted values.
//!
//! `D[k][i]` is the optimal SSE of the first `i` sorted values in `k`
//! clusters. The optimal split point is monotone in `i`, which the divide and
//! conquer fill exploits; `optimal_sse_quadratic` is the plain recurrence.

struct Prefix {
    s: Vec<f64>,
    s2: Vec<f64>,
}

impl Prefix {
    fn new(sorted: &[f64]) -> Self {
        // Centering keeps the sum-of-squares identity well conditioned.
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        let mut s = vec![0.0; sorted.len() + 1];
        let mut s2 = vec![0.0; sorted.len() + 1];
        for (i, &v) in sorted.iter().enumerate() {
            let c = v - mean;
            s[i + 1] = s[i] + c;
            s2[i + 1] = s2[i] + c * c;
        }
        Prefix { s, s2 }
    }

    /// SSE of `sorted[a..b]` around its mean.
    fn cost(&self, a: usize, b: usize) -> f64 {
        if b <= a {
            return 0.0;
        }
        let n = (b - a) as f64;
        let sum = self.s[b] - self.s[a];
        (self.s2[b] - self.s2[a] - sum * sum / n).max(0.0)
    }
}

fn sorted(values: &[f32]) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn fill(prev: &[f64], cur: &mut [f64], p: &Prefix, lo: usize, hi: usize, opt_lo: usize, opt_hi: usize) {
    if lo > hi {
        return;
    }
    let mid = (lo + hi) / 2;
    let mut best = (f64::INFINITY, opt_lo);
    for j in opt_lo..=opt_hi.min(mid) {
        let c = prev[j] + p.cost(j, mid);
        if c < best.0 {
            best = (c, j);
        }
    }
    cur[mid] = best.0;
    if mid > lo {
        fill(prev, cur, p, lo, mid - 1, opt_lo, best.1);
    }
    fill(prev, cur, p, mid + 1, hi, best.1, opt_hi);
}

/// Minimum SSE over all partitions of `values` into at most `k` clusters.
pub fn optimal_sse(values: &[f32], k: usize) -> f64 {
    assert!(k >= 1 && !values.is_empty());
    let x = sorted(values);
    let n = x.len();
    let p = Prefix::new(&x);
    let mut prev: Vec<f64> = (0..=n).map(|i| p.cost(0, i)).collect();
    for _ in 2..=k.min(n) {
        let mut cur = vec![0.0; n + 1];
        fill(&prev, &mut cur, &p, 1, n, 0, n);
        prev = cur;
    }
    prev[n]
}

/// Same optimum through the O(k n^2) recurrence; for cross-checking.
pub fn optimal_sse_quadratic(values: &[f32], k: usize) -> f64 {
    assert!(k >= 1 && !values.is_empty());
    let x = sorted(values);
    let n = x.len();
    let p = Prefix::new(&x);
    let mut prev: Vec<f64> = (0..=n).map(|i| p.cost(0, i)).collect();
    for _ in 2..=k.min(n) {
        let cur: Vec<f64> = (0..=n)
            .map(|i| (0..=i).map(|j| prev[j] + p.cost(j, i)).fold(f64::INFINITY, f64::min))
            .collect();
        prev = cur;
    }
    prev[n]
}
