use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// `n·m` at or below which [`mann_whitney_u`] enumerates exactly.
pub const EXACT_LIMIT: usize = 64;

/// Largest `n + m` the exact distribution is computed for.
const EXACT_MAX_TOTAL: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    /// U of the first sample: pairs `(a_i, b_j)` with `a_i > b_j`, ties
    /// counting one half.
    pub u: f64,
    /// Signed normal score of `u` (with continuity correction).
    pub z: f64,
    /// Two-sided.
    pub p: f64,
    pub n: usize,
    pub m: usize,
    pub exact: bool,
}

/// Midranks of the pooled sample, doubled so they are integers.
fn doubled_midranks(pooled: &[f64]) -> (Vec<u64>, f64) {
    let n = pooled.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0u64; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share rank ((i+1) + (j+1)) / 2.
        let twice = (i + 1 + j + 1) as u64;
        for &k in &order[i..=j] {
            ranks[k] = twice;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    (ranks, tie_term)
}

fn validate(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("Mann-Whitney sample"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::NonFinite("NaN in Mann-Whitney sample".into()));
    }
    Ok(())
}

/// U of `a` and the doubled rank sum it came from.
fn statistic(a: &[f64], b: &[f64]) -> (f64, u64, Vec<u64>, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = doubled_midranks(&pooled);
    let s2: u64 = ranks[..a.len()].iter().sum();
    let n = a.len() as f64;
    let u = s2 as f64 / 2.0 - n * (n + 1.0) / 2.0;
    (u, s2, ranks, ties)
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity
/// correction.
pub fn mann_whitney_normal(a: &[f64], b: &[f64]) -> Result<TestResult> {
    validate(a, b)?;
    let (u, _, _, ties) = statistic(a, b);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let total = n + m;
    let mean = n * m / 2.0;
    let var = if total > 1.0 { n * m / 12.0 * ((total + 1.0) - ties / (total * (total - 1.0))) } else { 0.0 };
    let (z, p) = if var <= 0.0 {
        (0.0, 1.0)
    } else {
        let dev = ((u - mean).abs() - 0.5).max(0.0);
        let z = dev / var.sqrt();
        (z.copysign(u - mean), erfc(z / std::f64::consts::SQRT_2).min(1.0))
    };
    Ok(TestResult { u, z, p, n: a.len(), m: b.len(), exact: false })
}

/// Exact two-sided p-value: the share of all `C(n+m, n)` ways of splitting
/// the pooled midranks whose U lies at least as far from `n·m/2` as the
/// observed one.
pub fn mann_whitney_exact(a: &[f64], b: &[f64]) -> Result<TestResult> {
    validate(a, b)?;
    let (n, m) = (a.len(), b.len());
    if n + m > EXACT_MAX_TOTAL {
        return Err(Error::InvalidParameter(format!(
            "exact Mann-Whitney limited to n + m <= {EXACT_MAX_TOTAL} (got {})",
            n + m
        )));
    }
    let normal = mann_whitney_normal(a, b)?;
    let (u, s2_obs, ranks, _) = statistic(a, b);
    let max_sum: usize = {
        let mut r = ranks.clone();
        r.sort_unstable_by(|x, y| y.cmp(x));
        r[..n].iter().sum::<u64>() as usize
    };
    // ways[k][s]: subsets of size k with doubled rank sum s.
    let mut ways = vec![vec![0u128; max_sum + 1]; n + 1];
    ways[0][0] = 1;
    for &r in &ranks {
        let r = r as usize;
        for k in (1..=n).rev() {
            let (lo, hi) = ways.split_at_mut(k);
            let (prev, cur) = (&lo[k - 1], &mut hi[0]);
            for s in (r..=max_sum).rev() {
                cur[s] += prev[s - r];
            }
        }
    }
    let center = (n * (n + m + 1)) as i64; // doubled expected rank sum
    let obs = (s2_obs as i64 - center).abs();
    let (mut hit, mut total) = (0u128, 0u128);
    for (s, &c) in ways[n].iter().enumerate() {
        total += c;
        if (s as i64 - center).abs() >= obs {
            hit += c;
        }
    }
    let p = (hit as f64 / total as f64).min(1.0);
    Ok(TestResult { u, z: normal.z, p, n, m, exact: true })
}

/// Two-sided Mann-Whitney U test of `a` against `b`; exact when
/// `n·m ≤ EXACT_LIMIT`, normal approximation otherwise.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if !a.is_empty() && a.len() * b.len() <= EXACT_LIMIT {
        mann_whitney_exact(a, b)
    } else {
        mann_whitney_normal(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute force over every subset of pooled positions.
    fn brute_force_p(a: &[f64], b: &[f64]) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let n = a.len();
        let u_of = |idx: &[usize]| -> f64 {
            let mut u = 0.0;
            for (k, x) in pooled.iter().enumerate() {
                if !idx.contains(&k) {
                    continue;
                }
                for (l, y) in pooled.iter().enumerate() {
                    if idx.contains(&l) {
                        continue;
                    }
                    u += if x > y {
                        1.0
                    } else if x == y {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
            u
        };
        let obs: Vec<usize> = (0..n).collect();
        let mean = (n * b.len()) as f64 / 2.0;
        let d_obs = (u_of(&obs) - mean).abs();
        let (mut hit, mut total) = (0, 0);
        for mask in 0u32..(1 << pooled.len()) {
            if mask.count_ones() as usize != n {
                continue;
            }
            let idx: Vec<usize> = (0..pooled.len()).filter(|k| mask >> k & 1 == 1).collect();
            total += 1;
            if (u_of(&idx) - mean).abs() >= d_obs - 1e-9 {
                hit += 1;
            }
        }
        hit as f64 / total as f64
    }

    #[test]
    fn separated_pair_of_two() {
        let r = mann_whitney_exact(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!((r.p - 1.0 / 3.0).abs() < 1e-12);
        assert!(r.exact);
        assert!(mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap().exact);
    }

    #[test]
    fn identical_samples_sit_at_the_center() {
        let a = [0.3, 1.0, 1.0, 2.5, 7.0];
        for r in [mann_whitney_exact(&a, &a).unwrap(), mann_whitney_normal(&a, &a).unwrap()] {
            assert_eq!(r.u, 12.5);
            assert!((r.p - 1.0).abs() < 1e-12);
        }
        let c = [4.0; 6];
        let r = mann_whitney_normal(&c, &c).unwrap();
        assert_eq!((r.u, r.p), (18.0, 1.0));
    }

    #[test]
    fn exact_matches_brute_force_with_ties() {
        let cases: [(&[f64], &[f64]); 4] = [
            (&[1.0, 2.0, 2.0], &[2.0, 3.0, 5.0, 5.0]),
            (&[0.0], &[1.0, 1.0, 2.0]),
            (&[3.0, 3.0, 3.0], &[3.0, 1.0]),
            (&[9.0, 8.0, 7.0, 1.0], &[2.0, 3.0, 4.0, 5.0]),
        ];
        for (a, b) in cases {
            let r = mann_whitney_exact(a, b).unwrap();
            assert!((r.p - brute_force_p(a, b)).abs() < 1e-12, "{a:?} {b:?}");
        }
    }

    #[test]
    fn u_counts_pairs() {
        let (a, b) = ([1.0, 4.0, 4.0], [2.0, 4.0]);
        let pairs: f64 = a
            .iter()
            .flat_map(|x| {
                b.iter().map(move |y| {
                    if x > y {
                        1.0
                    } else if x == y {
                        0.5
                    } else {
                        0.0
                    }
                })
            })
            .sum();
        assert_eq!(mann_whitney_normal(&a, &b).unwrap().u, pairs);
    }

    #[test]
    fn large_samples_use_the_normal_approximation() {
        let a: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..60).map(|i| i as f64 + 10.0).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert!(!r.exact);
        assert!(r.p < 0.05 && r.z < 0.0);
        assert!(mann_whitney_u(&[], &b).is_err());
    }
}
