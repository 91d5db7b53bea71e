//! Minimum-cost rectangular assignment (Kuhn–Munkres with potentials,
//! O(n²m)).

/// Solves the linear assignment problem for an `n × m` cost matrix given as
/// rows. Returns `min(n, m)` pairs `(row, col)` sorted by row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    if m == 0 {
        return Vec::new();
    }
    debug_assert!(cost.iter().all(|r| r.len() == m));
    if n > m {
        let transposed: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| cost[i][j]).collect()).collect();
        let mut pairs: Vec<(usize, usize)> = hungarian(&transposed).into_iter().map(|(j, i)| (i, j)).collect();
        pairs.sort_unstable();
        return pairs;
    }

    // 1-based potentials; column 0 is a virtual start.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut assigned_row = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        assigned_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = assigned_row[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assigned_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> =
        (1..=m).filter(|&j| assigned_row[j] != 0).map(|j| (assigned_row[j] - 1, j - 1)).collect();
    pairs.sort_unstable();
    pairs
}

pub fn assignment_cost(cost: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| cost[i][j]).sum()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive minimum over all injective maps from the smaller side.
    pub(crate) fn brute_force_min(cost: &[Vec<f64>]) -> f64 {
        let n = cost.len();
        let m = cost[0].len();
        fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64, transpose: bool) {
            let (n, m) = if transpose { (cost[0].len(), cost.len()) } else { (cost.len(), cost[0].len()) };
            if row == n {
                *best = best.min(acc);
                return;
            }
            for j in 0..m {
                if !used[j] {
                    used[j] = true;
                    let c = if transpose { cost[j][row] } else { cost[row][j] };
                    rec(cost, row + 1, used, acc + c, best, transpose);
                    used[j] = false;
                }
            }
        }
        let transpose = n > m;
        let mut best = f64::INFINITY;
        let width = if transpose { n } else { m };
        rec(cost, 0, &mut vec![false; width], 0.0, &mut best, transpose);
        best
    }

    #[test]
    fn identity_cost() {
        let c: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect();
        let a = hungarian(&c);
        assert_eq!(a, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(assignment_cost(&c, &a), 0.0);
    }

    #[test]
    fn single_cell() {
        assert_eq!(hungarian(&[vec![3.5]]), vec![(0, 0)]);
    }

    #[test]
    fn rectangular_sizes() {
        let c = vec![vec![5.0, 1.0, 9.0, 2.0], vec![4.0, 8.0, 1.0, 7.0]];
        let a = hungarian(&c);
        assert_eq!(a, vec![(0, 1), (1, 2)]);
        let t: Vec<Vec<f64>> = (0..4).map(|j| (0..2).map(|i| c[i][j]).collect()).collect();
        assert_eq!(hungarian(&t), vec![(1, 0), (2, 1)]);
    }

    #[test]
    fn random_square_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let c: Vec<Vec<f64>> =
                (0..6).map(|_| (0..6).map(|_| rng.random_range(0..100) as f64).collect()).collect();
            let a = hungarian(&c);
            assert_eq!(a.len(), 6);
            assert_eq!(assignment_cost(&c, &a), brute_force_min(&c));
        }
    }
}
