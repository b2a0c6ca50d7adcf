//! Dense two-phase simplex, used as an independent transport oracle.

const EPS: f64 = 1e-11;

fn pivot(t: &mut [Vec<f64>], r: usize, c: usize) {
    let p = t[r][c];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    let row = t[r].clone();
    for (i, line) in t.iter_mut().enumerate() {
        let f = line[c];
        if i != r && f != 0.0 {
            for (v, x) in line.iter_mut().zip(&row) {
                *v -= f * x;
            }
        }
    }
}

/// Bland's rule simplex over the first `enter_limit` columns.
fn optimize(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], enter_limit: usize) {
    let rhs = t[0].len() - 1;
    loop {
        let entering = (0..enter_limit).find(|&j| {
            let reduced = cost[j] - t.iter().zip(basis.iter()).map(|(row, &b)| cost[b] * row[j]).sum::<f64>();
            reduced < -EPS
        });
        let Some(j) = entering else { return };
        let mut leave: Option<(usize, f64)> = None;
        for (i, row) in t.iter().enumerate() {
            if row[j] > EPS {
                let ratio = row[rhs] / row[j];
                let better = match leave {
                    None => true,
                    Some((l, r)) => ratio < r - EPS || (ratio <= r + EPS && basis[i] < basis[l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (r, _) = leave.expect("transport problems are bounded");
        pivot(t, r, j);
        basis[r] = j;
    }
}

/// Minimum of `c·x` subject to `A x = b`, `x >= 0`, with `b >= 0`.
pub fn simplex_min(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> f64 {
    let (m, n) = (a.len(), c.len());
    let mut t: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row = a[i].clone();
            row.extend((0..m).map(|k| if k == i { 1.0 } else { 0.0 }));
            row.push(b[i]);
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + m).collect();
    let phase1: Vec<f64> = (0..n + m).map(|j| if j < n { 0.0 } else { 1.0 }).collect();
    optimize(&mut t, &mut basis, &phase1, n + m);

    // Drive leftover artificials out of the basis; drop redundant rows.
    let mut i = 0;
    while i < t.len() {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[i][j].abs() > 1e-9) {
                pivot(&mut t, i, j);
                basis[i] = j;
            } else {
                t.remove(i);
                basis.remove(i);
                continue;
            }
        }
        i += 1;
    }
    let mut phase2 = c.to_vec();
    phase2.extend(std::iter::repeat_n(0.0, m));
    optimize(&mut t, &mut basis, &phase2, n);
    let rhs = n + m;
    t.iter().zip(&basis).map(|(row, &bi)| phase2[bi] * row[rhs]).sum()
}

/// Optimal transport cost between two mass functions on the integers with
/// cost `|x - y|`. Masses are normalized first.
pub fn transport_cost(a: &[(i64, f64)], b: &[(i64, f64)]) -> f64 {
    let ta: f64 = a.iter().map(|p| p.1).sum();
    let tb: f64 = b.iter().map(|p| p.1).sum();
    let (na, nb) = (a.len(), b.len());
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..na {
        rows.push((0..na * nb).map(|v| if v / nb == i { 1.0 } else { 0.0 }).collect());
        rhs.push(a[i].1 / ta);
    }
    for j in 0..nb {
        rows.push((0..na * nb).map(|v| if v % nb == j { 1.0 } else { 0.0 }).collect());
        rhs.push(b[j].1 / tb);
    }
    let cost: Vec<f64> = (0..na * nb).map(|v| (a[v / nb].0 - b[v % nb].0).abs() as f64).collect();
    simplex_min(&rows, &rhs, &cost)
}
