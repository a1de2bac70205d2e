//! Minimum-cost perfect matching on a square cost matrix (Hungarian method
//! with row/column potentials, `O(m³)`).

/// Returns `assignment[row] = column` minimizing the total cost of a
/// row-major `m × m` matrix.
pub fn min_cost_assignment(cost: &[i64], m: usize) -> Vec<usize> {
    debug_assert_eq!(cost.len(), m * m);
    if m == 0 {
        return Vec::new();
    }
    // 1-based arrays; column 0 is a virtual start column.
    let mut u = vec![0i64; m + 1];
    let mut v = vec![0i64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for row in 1..=m {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
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
    let mut assignment = vec![0; m];
    for j in 1..=m {
        assignment[owner[j] - 1] = j - 1;
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(cost: &[i64], m: usize, a: &[usize]) -> i64 {
        a.iter().enumerate().map(|(r, &c)| cost[r * m + c]).sum()
    }

    fn brute(cost: &[i64], m: usize) -> i64 {
        fn rec(cost: &[i64], m: usize, row: usize, used: &mut Vec<bool>) -> i64 {
            if row == m {
                return 0;
            }
            let mut best = i64::MAX;
            for c in 0..m {
                if !used[c] {
                    used[c] = true;
                    best = best.min(cost[row * m + c] + rec(cost, m, row + 1, used));
                    used[c] = false;
                }
            }
            best
        }
        rec(cost, m, 0, &mut vec![false; m])
    }

    #[test]
    fn small_known_case() {
        let cost = [4, 1, 3, 2, 0, 5, 3, 2, 2];
        let a = min_cost_assignment(&cost, 3);
        assert_eq!(total(&cost, 3, &a), 5);
    }

    #[test]
    fn matches_brute_force() {
        let mut state = 12345u64;
        for m in 1..=6 {
            for _ in 0..30 {
                let cost: Vec<i64> = (0..m * m)
                    .map(|_| {
                        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        ((state >> 33) % 20) as i64 - 5
                    })
                    .collect();
                let a = min_cost_assignment(&cost, m);
                let mut seen = a.clone();
                seen.sort_unstable();
                assert_eq!(seen, (0..m).collect::<Vec<_>>());
                assert_eq!(total(&cost, m, &a), brute(&cost, m));
            }
        }
    }
}
