//! Minimum-cost rectangular assignment.
//!
//! Shortest augmenting path with row/column potentials (Kuhn-Munkres),
//! `O(n^2 m)` for `n <= m`. Among all optimal assignments the result is the
//! lexicographically smallest one: the lowest row gets the lowest column it
//! can take without losing optimality, then the next row, and so on.

use nalgebra::DMatrix;

struct Solution {
    total: f64,
    /// `row_to_col[i]` for every row of a matrix with `rows <= cols`.
    row_to_col: Vec<usize>,
    row_potential: Vec<f64>,
    col_potential: Vec<f64>,
}

/// Solves a problem with `cost.nrows() <= cost.ncols()`, restricted to the
/// given row and column subsets.
fn solve(cost: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> Solution {
    let n = rows.len();
    let m = cols.len();
    debug_assert!(n <= m);
    let a = |i: usize, j: usize| cost[(rows[i - 1], cols[j - 1])];

    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // p[j]: 1-based row matched to column j, 0 if free.
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
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

    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    let total = (0..n).map(|i| a(i + 1, row_to_col[i] + 1)).sum();
    Solution {
        total,
        row_to_col,
        row_potential: u[1..].to_vec(),
        col_potential: v[1..].to_vec(),
    }
}

/// Lexicographically smallest optimal assignment for `rows <= cols`.
fn canonical(cost: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = cost.nrows();
    let m = cost.ncols();
    let all_rows: Vec<usize> = (0..n).collect();
    let all_cols: Vec<usize> = (0..m).collect();
    let first = solve(cost, &all_rows, &all_cols);
    let scale = cost.iter().fold(1.0f64, |acc, c| acc.max(c.abs()));
    let tol = 1e-9 * scale * (n.max(1) as f64);

    let mut pairs = Vec::with_capacity(n);
    let mut fixed_total = 0.0;
    let mut free_cols = all_cols;
    for i in 0..n {
        let rest_rows: Vec<usize> = (i + 1..n).collect();
        let current = if i == 0 {
            first.row_to_col[0]
        } else {
            // re-solve to learn the current best column for this row
            let rows: Vec<usize> = (i..n).collect();
            let s = solve(cost, &rows, &free_cols);
            free_cols[s.row_to_col[0]]
        };
        let mut chosen = current;
        for (pos, &j) in free_cols.iter().enumerate() {
            if j >= current {
                break;
            }
            // Only edges tight under the first optimal dual can appear in
            // any optimal assignment.
            let reduced = cost[(i, j)] - first.row_potential[i] - first.col_potential[j];
            if reduced > tol {
                continue;
            }
            let mut cols = free_cols.clone();
            cols.remove(pos);
            let rest = solve(cost, &rest_rows, &cols).total;
            if fixed_total + cost[(i, j)] + rest <= first.total + tol {
                chosen = j;
                break;
            }
        }
        fixed_total += cost[(i, chosen)];
        free_cols.retain(|&c| c != chosen);
        pairs.push((i, chosen));
    }
    pairs
}

/// Minimum-total-cost assignment of `min(n, m)` (row, col) pairs, sorted by
/// row. Costs must be finite.
pub fn hungarian_assign(cost: &DMatrix<f64>) -> Vec<(usize, usize)> {
    debug_assert!(cost.iter().all(|c| c.is_finite()), "non-finite cost");
    if cost.nrows() == 0 || cost.ncols() == 0 {
        return Vec::new();
    }
    if cost.nrows() <= cost.ncols() {
        canonical(cost)
    } else {
        let mut pairs: Vec<(usize, usize)> = canonical(&cost.transpose())
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        pairs
    }
}

/// Total cost of a set of pairs.
pub fn assignment_cost(cost: &DMatrix<f64>, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| cost[(i, j)]).sum()
}
