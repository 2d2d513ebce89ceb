//! Exact self-avoiding walk counts on `Z^d` and the bounds they give on the
//! connective constant.

use std::collections::HashSet;
use std::io::{self, Write};

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Direction, Site, MAX_DIM};

/// Upper limit on the estimated number of DFS node visits.
pub const WORK_LIMIT: f64 = 1e9;

/// Non-reversing walk count `2d (2d-1)^(N-1)`, an upper bound on the DFS size.
pub fn estimated_work(d: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    2.0 * d as f64 * (2.0 * d as f64 - 1.0).powi(n as i32 - 1)
}

fn check(d: usize, n: usize) -> Result<()> {
    if d < 1 || d > MAX_DIM {
        return Err(Error::ParamOutOfRange {
            name: "d".into(),
            value: d as f64,
        });
    }
    let work = estimated_work(d, n);
    if work > WORK_LIMIT {
        return Err(Error::WorkLimitExceeded {
            estimated: work,
            limit: WORK_LIMIT,
        });
    }
    Ok(())
}

struct Dfs {
    dim: usize,
    max_len: usize,
    visited: HashSet<Site>,
    counts: Vec<u64>,
}

impl Dfs {
    fn run(&mut self, at: Site, len: usize) {
        self.counts[len] += 1;
        if len == self.max_len {
            return;
        }
        for dir in Direction::all(self.dim) {
            let next = at.step(dir);
            if self.visited.insert(next) {
                self.run(next, len + 1);
                self.visited.remove(&next);
            }
        }
    }
}

/// `[c_0, c_1, ..., c_N]` in dimension `d`.
///
/// Walks are enumerated with the first step fixed to `+e1` and multiplied by
/// `2d`; the subtrees below the second step run in parallel.
pub fn count_saw(d: usize, n: usize) -> Result<Vec<BigUint>> {
    check(d, n)?;
    let mut totals = vec![0u64; n + 1];
    totals[0] = 1;
    if n >= 1 {
        let o = Site::origin(d);
        let first = o.step(Direction::plus(0));
        let partial: Vec<Vec<u64>> = Direction::all(d)
            .filter(|&dir| dir != Direction::minus(0))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|second| {
                let mut dfs = Dfs {
                    dim: d,
                    max_len: n,
                    visited: HashSet::from([o, first]),
                    counts: vec![0; n + 1],
                };
                if n >= 2 {
                    let at = first.step(second);
                    dfs.visited.insert(at);
                    dfs.run(at, 2);
                }
                dfs.counts
            })
            .collect();
        totals[1] = 1;
        for counts in partial {
            for (k, c) in counts.into_iter().enumerate().skip(2) {
                totals[k] += c;
            }
        }
        for t in totals.iter_mut().skip(1) {
            *t *= 2 * d as u64;
        }
    }
    Ok(totals.into_iter().map(BigUint::from).collect())
}

/// Non-reversing walk counts `[1, 2d, 2d(2d-1), ...]` by the one-step transfer.
pub fn count_non_reversing(d: usize, n: usize) -> Vec<BigUint> {
    let mut out = vec![BigUint::from(1u32)];
    for k in 1..=n {
        let factor = if k == 1 { 2 * d } else { 2 * d - 1 };
        let next = out[k - 1].clone() * BigUint::from(factor);
        out.push(next);
    }
    out
}

fn big_to_f64(x: &BigUint) -> f64 {
    x.to_f64().unwrap_or(f64::INFINITY)
}

/// `c_N^(1/N)`, an upper bound on the connective constant.
pub fn connective_upper_bound(counts: &[BigUint], n: usize) -> f64 {
    big_to_f64(&counts[n]).powf(1.0 / n as f64)
}

/// `1 - b^-2` with `b = min_{1<=M<=N} c_M^(1/M) >= σ_d`; an upper bound on `p_d`.
pub fn p_d_threshold(d: usize, n: usize) -> Result<f64> {
    if n < 1 {
        return Err(Error::ParamOutOfRange {
            name: "N".into(),
            value: 0.0,
        });
    }
    let counts = count_saw(d, n)?;
    Ok(threshold_from_counts(&counts, n))
}

pub fn threshold_from_counts(counts: &[BigUint], n: usize) -> f64 {
    let b = (1..=n)
        .map(|m| connective_upper_bound(counts, m))
        .fold(f64::INFINITY, f64::min);
    1.0 - b.powi(-2)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SawRow {
    pub d: usize,
    pub n: usize,
    pub count: String,
    pub root: f64,
    pub threshold: f64,
}

pub fn saw_table(d: usize, n: usize) -> Result<Vec<SawRow>> {
    let counts = count_saw(d, n)?;
    Ok((1..=n)
        .map(|k| SawRow {
            d,
            n: k,
            count: counts[k].to_string(),
            root: connective_upper_bound(&counts, k),
            threshold: threshold_from_counts(&counts, k),
        })
        .collect())
}

pub fn write_saw_csv<W: Write>(rows: &[SawRow], mut out: W) -> io::Result<()> {
    writeln!(out, "d,N,c_N,c_N_root,p_d_threshold")?;
    for r in rows {
        writeln!(out, "{},{},{},{:.10},{:.10}", r.d, r.n, r.count, r.root, r.threshold)?;
    }
    Ok(())
}
