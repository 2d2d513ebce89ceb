//! Monte Carlo shape checks for the oriented percolation functionals at a
//! supercritical density.

use rwre_core::lattice::Site;
use rwre_core::otsp::{otsp_bar_u, otsp_tau, OtspConfig, OtspValue};

#[test]
fn low_front_becomes_rarer_with_distance() {
    let freq = |n: u32| {
        let hits = (0..1500u64)
            .filter(|&seed| {
                let cfg = OtspConfig::new(0.7, seed).unwrap();
                match otsp_bar_u(&cfg, n, 120).unwrap() {
                    OtspValue::Finite(u) => (u as f64) <= 1.1 * n as f64,
                    OtspValue::Empty => true,
                    OtspValue::Censored(_) => false,
                }
            })
            .count();
        hits as f64 / 1500.0
    };
    let f: Vec<f64> = [10, 20, 40].into_iter().map(freq).collect();
    assert!(f[0] > f[1] && f[1] > f[2], "{f:?}");
}

#[test]
fn finite_clusters_are_short() {
    let o = [Site::origin(2)];
    let taus: Vec<OtspValue> = (0..3000u64)
        .map(|seed| otsp_tau(&OtspConfig::new(0.7, seed).unwrap(), &o, 60).unwrap())
        .collect();
    let tail = |n: i64| {
        taus.iter()
            .filter(|t| matches!(t, OtspValue::Finite(v) if *v >= n))
            .count()
    };
    let t: Vec<usize> = [1, 4, 8].into_iter().map(tail).collect();
    assert!(t[0] > t[1] && t[1] > t[2], "{t:?}");
}
