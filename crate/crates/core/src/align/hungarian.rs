//! Kuhn-Munkres (Hungarian) solver for dense square cost matrices.
//!
//! Shortest-augmenting-path formulation with row/column potentials,
//! O(n^3).

/// Minimum-cost perfect matching on a square matrix. Returns
/// `assignment[row] = col`.
pub fn minimize(costs: &[Vec<f64>]) -> Vec<usize> {
    let n = costs.len();
    if n == 0 {
        return Vec::new();
    }
    debug_assert!(costs.iter().all(|row| row.len() == n));

    // 1-based potentials; column 0 is a virtual source
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = costs[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Maximum-weight matching of `rows` (≤ columns) into distinct columns
/// of a rectangular score matrix. Rows are padded with zeros to square.
pub fn maximize_rect(scores: &[Vec<f64>]) -> Vec<usize> {
    let rows = scores.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = scores[0].len();
    debug_assert!(rows <= cols);
    let top = scores
        .iter()
        .flatten()
        .copied()
        .fold(0.0f64, f64::max);
    let costs: Vec<Vec<f64>> = (0..cols)
        .map(|r| {
            (0..cols)
                .map(|c| top - scores.get(r).map_or(0.0, |row| row[c]))
                .collect()
        })
        .collect();
    let mut assignment = minimize(&costs);
    assignment.truncate(rows);
    assignment
}
