//! Rectangular linear assignment (Hungarian method with potentials).

const BIG: f64 = 1e6;

/// Minimum-cost assignment over `cost[row][col]`. Entries with cost greater
/// than `max_cost` are treated as forbidden. Returns `(row, col)` pairs sorted
/// by row. Maximizes the number of admissible pairs first, then minimizes
/// their total cost. Deterministic for a given input order.
pub fn solve(cost: &[Vec<f64>], max_cost: f64) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let n = rows.max(cols);
    let at = |r: usize, c: usize| -> f64 {
        if r < rows && c < cols {
            let v = cost[r][c];
            if v.is_finite() && v <= max_cost {
                v
            } else {
                BIG
            }
        } else {
            BIG
        }
    };

    // 1-indexed potentials formulation; p[j] = row matched to column j.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out: Vec<(usize, usize)> = (1..=n)
        .filter_map(|j| {
            let r = p[j] - 1;
            let c = j - 1;
            (r < rows && c < cols && at(r, c) < BIG).then_some((r, c))
        })
        .collect();
    out.sort_unstable();
    out
}
