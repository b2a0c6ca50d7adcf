use crate::stats::euclidean;

/// DBSCAN over small point sets with Euclidean distance. Every point ends up
/// labeled: points that are not density-reachable from any core point get a
/// singleton label of their own. Labels are `1..=J` in order of first
/// appearance.
pub fn dbscan<const D: usize>(points: &[[f64; D]], eps: f64, min_samples: usize) -> Vec<u32> {
    let n = points.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| euclidean(&points[i], &points[j]) <= eps)
                .collect()
        })
        .collect();
    let is_core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_samples).collect();

    let mut cluster: Vec<Option<usize>> = vec![None; n];
    let mut next = 0usize;
    for start in 0..n {
        if cluster[start].is_some() || !is_core[start] {
            continue;
        }
        cluster[start] = Some(next);
        let mut stack = vec![start];
        while let Some(p) = stack.pop() {
            if !is_core[p] {
                continue;
            }
            for &q in &neighbours[p] {
                if cluster[q].is_none() {
                    cluster[q] = Some(next);
                    stack.push(q);
                }
            }
        }
        next += 1;
    }
    for c in cluster.iter_mut().filter(|c| c.is_none()) {
        *c = Some(next);
        next += 1;
    }
    renumber(cluster.into_iter().map(|c| c.unwrap() as u32))
}

/// Relabels to `1..` by order of first appearance.
pub fn renumber(labels: impl IntoIterator<Item = u32>) -> Vec<u32> {
    let mut seen: Vec<u32> = Vec::new();
    labels
        .into_iter()
        .map(|l| match seen.iter().position(|&s| s == l) {
            Some(i) => i as u32 + 1,
            None => {
                seen.push(l);
                seen.len() as u32
            }
        })
        .collect()
}
