//! Oriented site percolation on the triangular lattice.
//!
//! Sites of `Z^2` are open independently with probability `p`; open paths
//! use the steps `-e1`, `+e2` and `e2 - e1`. A site is open iff its uniform
//! `U_x < p`, which is the same uniform that selects the north-east atom of
//! a coupled RWRE environment, so open sets are nested in `p` under a
//! shared seed.
//!
//! Every step moves weakly west and weakly north, so clusters are computed
//! column by column from east to west.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::env::EnvironmentHandle;
use crate::error::{Error, Result};
use crate::lattice::{Direction, Site};
use crate::seed::{replicate_seeds, site_uniform};
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OtspConfig {
    pub p: f64,
    pub seed: u64,
    /// Slope parameters for line probes, intended `ρ_p < θ1 < θ < -1`.
    pub theta: f64,
    pub theta1: f64,
}

impl OtspConfig {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ParamOutOfRange {
                name: "p".into(),
                value: p,
            });
        }
        Ok(Self {
            p,
            seed,
            theta: -1.1,
            theta1: -1.05,
        })
    }

    #[inline]
    pub fn is_open(&self, x: i32, y: i32) -> bool {
        site_uniform(self.seed, &Site::from_coords(&[x, y])) < self.p
    }
}

/// A site is open in the RWRE picture when its support is inside `{+e1, +e2}`.
pub fn otsp_open_from_rwre(handle: &EnvironmentHandle, site: &Site) -> Result<bool> {
    if handle.dim() != 2 || site.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: handle.dim(),
        });
    }
    let law = handle.site_environment(site);
    Ok(law
        .support()
        .iter()
        .all(|d| *d == Direction::plus(0) || *d == Direction::plus(1)))
}

/// Integer functional of a box-truncated cluster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OtspValue {
    Finite(i64),
    /// The cluster reached the box boundary; the value is the largest one
    /// seen inside the box (likely infinite in the untruncated lattice).
    Censored(i64),
    /// Empty cluster (the `-∞` sentinel).
    Empty,
}

/// Column sweep over the box `x ∈ [x_min, x_max]`, `y ∈ [y_min, y_max]`.
/// `seeds` maps a column to the seed heights entering there; a seed site
/// belongs to the cluster only if it is open. `visit` sees every column's
/// reachable heights (ascending) and may stop the sweep by returning false.
fn sweep<F>(cfg: &OtspConfig, x_max: i32, x_min: i32, y_min: i32, y_max: i32, seeds: &BTreeMap<i32, Vec<i32>>, mut visit: F)
where
    F: FnMut(i32, &[i32]) -> bool,
{
    let height = (y_max - y_min + 1) as usize;
    let mut current = vec![false; height];
    let mut next = vec![false; height];
    let mut reached = Vec::new();
    for x in (x_min..=x_max).rev() {
        next.iter_mut().for_each(|b| *b = false);
        // From the column to the east: -e1 keeps y, e2 - e1 adds one.
        for i in 0..height {
            if current[i] {
                next[i] = true;
                if i + 1 < height {
                    next[i + 1] = true;
                }
            }
        }
        if let Some(ys) = seeds.get(&x) {
            for &y in ys {
                if (y_min..=y_max).contains(&y) {
                    next[(y - y_min) as usize] = true;
                }
            }
        }
        // Keep open candidates, then close upward along +e2.
        reached.clear();
        let mut carry = false;
        for i in 0..height {
            let y = y_min + i as i32;
            let cand = next[i] || carry;
            let open = cand && cfg.is_open(x, y);
            next[i] = open;
            carry = open;
            if open {
                reached.push(y);
            }
        }
        std::mem::swap(&mut current, &mut next);
        if !visit(x, &reached) || reached.is_empty() && seeds.range(..x).next().is_none() {
            return;
        }
    }
}

/// `ū_n = max{y : (-n, y) ∈ C_Y}` for `Y = {(0, z) : z <= 0}`, truncated to
/// the box `[-box, box]^2`. Censored if the cluster touches the ceiling
/// `y = box` at or east of column `-n`.
pub fn otsp_bar_u(cfg: &OtspConfig, n: u32, box_radius: u32) -> Result<OtspValue> {
    if n < 1 || n > box_radius {
        return Err(Error::ParamOutOfRange {
            name: "n".into(),
            value: n as f64,
        });
    }
    let b = box_radius as i32;
    let seeds = BTreeMap::from([(0, (-b..=0).collect::<Vec<_>>())]);
    let mut top_hit = false;
    let mut top_seen = i64::MIN;
    let mut result = OtspValue::Empty;
    sweep(cfg, 0, -(n as i32), -b, b, &seeds, |x, ys| {
        if let Some(&m) = ys.last() {
            top_seen = top_seen.max(m as i64);
            top_hit |= m == b;
            if x == -(n as i32) {
                result = OtspValue::Finite(m as i64);
            }
        }
        true
    });
    Ok(if top_hit {
        OtspValue::Censored(top_seen)
    } else {
        result
    })
}

/// `τ_A = sup{y - x : (x, y) ∈ C_A}` within `[-box, box]^2`. Censored when
/// the cluster reaches the west or north boundary.
pub fn otsp_tau(cfg: &OtspConfig, a: &[Site], box_radius: u32) -> Result<OtspValue> {
    if a.is_empty() {
        return Err(Error::EmptySet);
    }
    let b = box_radius as i32;
    let mut seeds: BTreeMap<i32, Vec<i32>> = BTreeMap::new();
    for s in a {
        if s.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: s.dim(),
            });
        }
        if s.sup_dist(&Site::origin(2)) > b as i64 {
            return Err(Error::ParamOutOfRange {
                name: "seed site outside box".into(),
                value: s.sup_dist(&Site::origin(2)) as f64,
            });
        }
        seeds.entry(s.coord(0)).or_default().push(s.coord(1));
    }
    let x_max = *seeds.keys().next_back().unwrap();
    let mut best: Option<i64> = None;
    let mut boundary = false;
    sweep(cfg, x_max, -b, -b, b, &seeds, |x, ys| {
        if let Some(&m) = ys.last() {
            best = Some(best.map_or(m as i64 - x as i64, |v| v.max(m as i64 - x as i64)));
            boundary |= m == b || x == -b;
        }
        true
    });
    Ok(match (best, boundary) {
        (None, _) => OtspValue::Empty,
        (Some(v), true) => OtspValue::Censored(v),
        (Some(v), false) => OtspValue::Finite(v),
    })
}

/// Open path from column 0 to column `-L` inside `[-L, 0] x [0, L]`.
pub fn rhombus_crossing(cfg: &OtspConfig, l: u32) -> bool {
    let l = l as i32;
    let seeds = BTreeMap::from([(0, (0..=l).collect::<Vec<_>>())]);
    let mut crossed = false;
    sweep(cfg, 0, -l, 0, l, &seeds, |x, ys| {
        if x == -l && !ys.is_empty() {
            crossed = true;
        }
        !ys.is_empty()
    });
    crossed
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CrossingPoint {
    pub p: f64,
    pub crossing_prob: f64,
    pub se: f64,
}

/// Crossing frequency over replicate lattices. Lattice `r` uses the seed
/// `replicate_seeds(master_seed, r).0` whatever `p` is, so estimates at
/// different `p` are coupled.
pub fn crossing_probability(p: f64, l: u32, replicates: usize, master_seed: u64) -> Result<CrossingPoint> {
    OtspConfig::new(p, 0)?;
    if replicates == 0 {
        return Err(Error::ParamOutOfRange {
            name: "replicates".into(),
            value: 0.0,
        });
    }
    let hits: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let cfg = OtspConfig::new(p, replicate_seeds(master_seed, r).0).unwrap();
            rhombus_crossing(&cfg, l) as u8 as f64
        })
        .collect();
    let (m, se) = stats::mean_se(&hits);
    Ok(CrossingPoint {
        p,
        crossing_prob: m,
        se,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PcEstimate {
    pub p_c: f64,
    pub half_width: f64,
    /// Every evaluated point, in bisection order.
    pub steps: Vec<CrossingPoint>,
}

pub const DEFAULT_PC_RESOLUTION: f64 = 0.005;

/// Bisection on `p` for the point where the `L x L` crossing probability
/// equals 1/2.
pub fn estimate_pc_otsp(
    l: u32,
    replicates: usize,
    bracket: (f64, f64),
    resolution: f64,
    master_seed: u64,
) -> Result<PcEstimate> {
    let (mut lo, mut hi) = bracket;
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::BracketInvalid { lo, hi });
    }
    if !(resolution > 0.0) {
        return Err(Error::ParamOutOfRange {
            name: "resolution".into(),
            value: resolution,
        });
    }
    let mut steps = Vec::new();
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        let pt = crossing_probability(mid, l, replicates, master_seed)?;
        if pt.crossing_prob >= 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
        steps.push(pt);
    }
    Ok(PcEstimate {
        p_c: 0.5 * (lo + hi),
        half_width: 0.5 * (hi - lo),
        steps,
    })
}

pub fn write_crossing_csv<W: Write>(points: &[CrossingPoint], mut out: W) -> io::Result<()> {
    writeln!(out, "p,crossing_prob,se")?;
    for pt in points {
        writeln!(out, "{:.6},{:.6},{:.6}", pt.p, pt.crossing_prob, pt.se)?;
    }
    Ok(())
}
