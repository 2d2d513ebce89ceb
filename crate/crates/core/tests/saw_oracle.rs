//! Brute-force recount of self-avoiding walks: every one of the (2d)^N step
//! sequences is generated and checked for repeated sites.

use std::collections::HashSet;

use num_bigint::BigUint;
use rwre_core::saw::{count_non_reversing, count_saw, p_d_threshold};

fn brute_force(d: usize, n: usize) -> u64 {
    let moves = 2 * d;
    let total = (moves as u64).pow(n as u32);
    let mut count = 0;
    for code in 0..total {
        let mut c = code;
        let mut pos = vec![0i32; d];
        let mut seen = HashSet::from([pos.clone()]);
        let mut ok = true;
        for _ in 0..n {
            let m = (c % moves as u64) as usize;
            c /= moves as u64;
            pos[m / 2] += if m % 2 == 0 { 1 } else { -1 };
            if !seen.insert(pos.clone()) {
                ok = false;
                break;
            }
        }
        count += ok as u64;
    }
    count
}

/// d = 2 counts for N = 1..10 as produced by `brute_force`.
const GOLDEN_2D: [u64; 10] = [4, 12, 36, 100, 284, 780, 2172, 5916, 16268, 44100];

#[test]
fn golden_values_come_from_brute_force() {
    for (i, &c) in GOLDEN_2D.iter().enumerate() {
        assert_eq!(brute_force(2, i + 1), c, "N = {}", i + 1);
    }
}

#[test]
fn dfs_matches_brute_force() {
    let counts = count_saw(2, 10).unwrap();
    for (i, &c) in GOLDEN_2D.iter().enumerate() {
        assert_eq!(counts[i + 1], BigUint::from(c));
    }
    let counts3 = count_saw(3, 6).unwrap();
    for n in 1..=6 {
        assert_eq!(counts3[n], BigUint::from(brute_force(3, n)), "d = 3, N = {n}");
    }
}

#[test]
fn submultiplicative_and_bracketed() {
    let c = count_saw(2, 12).unwrap();
    let nr = count_non_reversing(2, 12);
    for n in 1..=12 {
        assert!(c[n] <= nr[n]);
        for m in 1..=12 - n {
            assert!(c[n + m] <= &c[n] * &c[m], "c_{} > c_{} c_{}", n + m, n, m);
        }
    }
}

#[test]
fn threshold_from_golden_counts() {
    let b = GOLDEN_2D
        .iter()
        .enumerate()
        .map(|(i, &c)| (c as f64).powf(1.0 / (i + 1) as f64))
        .fold(f64::INFINITY, f64::min);
    assert!(b <= 3.0);
    let want = 1.0 - 1.0 / (b * b);
    assert!(want > 0.85 && want < 0.92);
    assert_eq!(p_d_threshold(2, 10).unwrap(), want);
}
