//! The regeneration recursion checked against a direct set-based recount on
//! short random paths, plus properties of extracted summaries.

use proptest::prelude::*;
use rwre_core::lattice::Site;
use rwre_core::regen::{
    extract_regenerations, regeneration_trace, Backtrack, Epoch, RegenSummary,
};
use rwre_core::{run_walk, Preset, Trajectory};

/// `(start, [(T_k, D_k, M_k)], regeneration)` recomputed from the
/// definitions by scanning whole index ranges.
type OracleEpoch = (usize, Vec<(usize, Backtrack, Option<f64>)>, Option<usize>);

fn oracle(s: &[f64], guard: f64) -> Vec<OracleEpoch> {
    let last = s.len() - 1;
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let base = s[start];
        let mut attempts = Vec::new();
        let mut t = (start..=last).filter(|&n| s[n] >= base + 1.0).min();
        let mut regeneration = None;
        while let Some(tk) = t {
            let below = (tk + 1..=last).filter(|&n| s[n] < s[tk]).min();
            let high = (tk + 1..=last).filter(|&n| s[n] >= s[tk] + guard).min();
            match (below, high) {
                (Some(d), h) if h.is_none_or(|h| d < h) => {
                    let m = (start..=d).map(|n| s[n]).fold(f64::NEG_INFINITY, f64::max);
                    attempts.push((tk, Backtrack::Finite(d), Some(m)));
                    t = (d + 1..=last).filter(|&n| s[n] >= m + 1.0).min();
                }
                (_, Some(h)) if below.is_none_or(|d| h < d) => {
                    attempts.push((tk, Backtrack::Confirmed(h), None));
                    regeneration = Some(tk);
                    t = None;
                }
                _ => {
                    attempts.push((tk, Backtrack::Pending, None));
                    t = None;
                }
            }
        }
        out.push((start, attempts, regeneration));
        match regeneration {
            Some(r) if r < last => start = r,
            _ => return out,
        }
    }
}

fn flatten(epochs: &[Epoch]) -> Vec<OracleEpoch> {
    epochs
        .iter()
        .map(|e| {
            (
                e.start,
                e.attempts.iter().map(|a| (a.t, a.d, a.m)).collect(),
                e.regeneration,
            )
        })
        .collect()
}

fn path_from_steps(steps: &[u8]) -> Trajectory {
    let mut x = Site::origin(2);
    let mut positions = vec![x];
    for &s in steps {
        let delta = match s % 4 {
            0 => [1, 0],
            1 => [0, 1],
            2 => [-1, 0],
            _ => [0, -1],
        };
        x = x.offset(&delta);
        positions.push(x);
    }
    Trajectory {
        positions,
        env_seed: 0,
        walk_seed: 0,
        law_id: "random path".into(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn recursion_matches_definitions(
        steps in prop::collection::vec(prop_oneof![3 => Just(0u8), 3 => Just(1u8), 1 => Just(2u8), 1 => Just(3u8)], 0..50),
        guard in 2.0f64..6.0,
    ) {
        let t = path_from_steps(&steps);
        for ell in [[1.0, 0.0], [0.0, 1.0]] {
            let series: Vec<f64> = t.positions.iter().map(|x| x.dot(&ell)).collect();
            prop_assert_eq!(flatten(&regeneration_trace(&series, guard)), oracle(&series, guard));
        }
    }

    #[test]
    fn summary_invariants(
        steps in prop::collection::vec(0u8..4, 1..200),
    ) {
        let t = path_from_steps(&steps);
        let s = extract_regenerations(&t, &[1.0, 1.0], 3.0).unwrap();
        prop_assert!(s.records.iter().filter(|r| r.censored).count() <= 1);
        prop_assert!(s.q_hat.is_none_or(|q| (0.0..=1.0).contains(&q)));
        let total: usize = s.records.iter().map(|r| r.tau_gap).sum();
        prop_assert!(total <= t.steps());
        for r in s.records.iter().filter(|r| !r.censored) {
            let proj: f64 = r.displacement.iter().map(|&c| c as f64).sum::<f64>() / 2f64.sqrt();
            prop_assert!(proj >= 1.0 - 1e-9);
            prop_assert!(r.tau_gap >= 1);
        }
    }
}

#[test]
fn merge_is_associative_on_counts() {
    let law = Preset::Orthant2d { p: 0.75 }.law().unwrap();
    let parts: Vec<RegenSummary> = (0..3)
        .map(|r| extract_regenerations(&run_walk(&law, r, r + 10, 2000), &[1.0, 1.0], 50.0).unwrap())
        .collect();
    let mut left = parts[0].clone();
    left.merge(parts[1].clone());
    left.merge(parts[2].clone());
    let mut tail = parts[1].clone();
    tail.merge(parts[2].clone());
    let mut right = parts[0].clone();
    right.merge(tail);
    assert_eq!(left, right);
    assert_eq!(left.trajectories, 3);
    let mut csv = Vec::new();
    left.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("cycle_index,tau_gap,disp_1,disp_2,censored\n"));
    assert_eq!(text.lines().count(), left.records.len() + 1);
}
