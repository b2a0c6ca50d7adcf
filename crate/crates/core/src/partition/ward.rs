use crate::stats::euclidean;

/// Agglomerative clustering with Ward linkage, recorded as a merge sequence
/// so that any number of clusters can be cut from it.
#[derive(Debug, Clone)]
pub struct WardDendrogram {
    n: usize,
    /// `(a, b)` merges: cluster `b` is absorbed into cluster `a`.
    merges: Vec<(usize, usize)>,
}

impl WardDendrogram {
    pub fn build<const D: usize>(points: &[[f64; D]]) -> Self {
        let n = points.len();
        let mut centroid: Vec<[f64; D]> = points.to_vec();
        let mut size: Vec<usize> = vec![1; n];
        let mut alive: Vec<bool> = vec![true; n];
        let mut merges = Vec::with_capacity(n.saturating_sub(1));
        for _ in 1..n {
            let mut best: Option<(f64, usize, usize)> = None;
            for a in 0..n {
                for b in (a + 1)..n {
                    if !alive[a] || !alive[b] {
                        continue;
                    }
                    let (na, nb) = (size[a] as f64, size[b] as f64);
                    let cost = na * nb / (na + nb) * euclidean(&centroid[a], &centroid[b]).powi(2);
                    if best.is_none_or(|(c, _, _)| cost < c) {
                        best = Some((cost, a, b));
                    }
                }
            }
            let (_, a, b) = best.expect("at least two live clusters");
            let (na, nb) = (size[a] as f64, size[b] as f64);
            for d in 0..D {
                centroid[a][d] = (centroid[a][d] * na + centroid[b][d] * nb) / (na + nb);
            }
            size[a] += size[b];
            alive[b] = false;
            merges.push((a, b));
        }
        Self { n, merges }
    }

    /// Flat labels `1..=k`, numbered by first appearance.
    pub fn cut(&self, k: usize) -> Vec<u32> {
        let k = k.clamp(1, self.n.max(1));
        let mut owner: Vec<usize> = (0..self.n).collect();
        for &(a, b) in self.merges.iter().take(self.n - k) {
            for o in owner.iter_mut().filter(|o| **o == b) {
                *o = a;
            }
        }
        crate::divide::renumber(owner.into_iter().map(|o| o as u32))
    }
}

/// Mean silhouette coefficient; singletons score 0.
pub fn silhouette<const D: usize>(points: &[[f64; D]], labels: &[u32]) -> f64 {
    let n = points.len();
    if n == 0 {
        return 0.0;
    }
    let k = labels.iter().copied().max().unwrap_or(0);
    let mut total = 0.0;
    for i in 0..n {
        let mean_to = |c: u32| {
            let (sum, count) = (0..n)
                .filter(|&j| j != i && labels[j] == c)
                .fold((0.0, 0usize), |(s, m), j| (s + euclidean(&points[i], &points[j]), m + 1));
            (count > 0).then(|| sum / count as f64)
        };
        let Some(a) = mean_to(labels[i]) else { continue };
        let b = (1..=k)
            .filter(|&c| c != labels[i])
            .filter_map(mean_to)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 && b.is_finite() {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}
