//! Forward clusters of the directed environment graph and cone containment.

use std::collections::{HashSet, VecDeque};
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::env::{EnvironmentHandle, EnvironmentLaw};
use crate::error::{Error, Result};
use crate::lattice::{self, Direction, Site};
use crate::seed::replicate_seeds;

const CONE_EPS: f64 = 1e-9;
/// Boxes with at most this many sites use a dense visited array.
const DENSE_LIMIT: u64 = 1 << 24;

/// `-n ℓ + K_{κ,ℓ}` with `K_{κ,ℓ} = {u : u·ℓ >= κ‖u‖}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cone {
    ell: Vec<f64>,
    kappa: f64,
    pub apex_shift: u64,
}

impl Cone {
    /// `ell` is normalized; `kappa` must lie in `(0, 1)`.
    pub fn new(ell: &[f64], kappa: f64, apex_shift: u64) -> Result<Self> {
        let ell = lattice::normalized(ell).ok_or(Error::DirectionZero)?;
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::ParamOutOfRange {
                name: "kappa".into(),
                value: kappa,
            });
        }
        Ok(Self {
            ell,
            kappa,
            apex_shift,
        })
    }

    pub fn ell(&self) -> &[f64] {
        &self.ell
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        cone_contains(u, self.apex_shift, &self.ell, self.kappa)
    }

    /// Smallest shift `n >= 0` with `u ∈ -nℓ + K`.
    pub fn depth_of(&self, u: &[f64]) -> u64 {
        let a = lattice::dot(u, &self.ell);
        let perp: f64 = u
            .iter()
            .zip(&self.ell)
            .map(|(x, l)| (x - a * l).powi(2))
            .sum::<f64>()
            .sqrt();
        let need = self.kappa * perp / (1.0 - self.kappa * self.kappa).sqrt() - a;
        let mut n = if need <= 0.0 { 0 } else { need.ceil() as u64 };
        // Guard the closed form against rounding with the defining inequality.
        while !cone_contains(u, n, &self.ell, self.kappa) {
            n += 1;
        }
        while n > 0 && cone_contains(u, n - 1, &self.ell, self.kappa) {
            n -= 1;
        }
        n
    }
}

/// `(u + nℓ)·ℓ >= κ‖u + nℓ‖` for a unit vector `ell`.
pub fn cone_contains(u: &[f64], n: u64, ell: &[f64], kappa: f64) -> bool {
    let shifted: Vec<f64> = u.iter().zip(ell).map(|(x, l)| x + n as f64 * l).collect();
    lattice::dot(&shifted, ell) >= kappa * lattice::norm(&shifted) - CONE_EPS
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterScan {
    /// Sites in BFS order, origin first.
    pub sites: Vec<Site>,
    pub origin: Site,
    pub box_radius: u32,
    /// Some reached site has an allowed step leaving the box.
    pub frontier_censored: bool,
}

impl ClusterScan {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let d = self.origin.dim();
        let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for s in &self.sites {
            let c: Vec<String> = s.coords().iter().map(|c| c.to_string()).collect();
            writeln!(out, "{}", c.join(","))?;
        }
        Ok(())
    }
}

enum Visited {
    Dense { bits: Vec<bool>, side: i64 },
    Sparse(HashSet<Site>),
}

impl Visited {
    fn new(dim: usize, radius: u32) -> Self {
        let side = 2 * radius as u64 + 1;
        match side.checked_pow(dim as u32) {
            Some(n) if n <= DENSE_LIMIT => Visited::Dense {
                bits: vec![false; n as usize],
                side: side as i64,
            },
            _ => Visited::Sparse(HashSet::new()),
        }
    }

    /// Marks `rel` (coordinates relative to the box corner); returns true if new.
    fn insert(&mut self, x: Site, rel: &[i64]) -> bool {
        match self {
            Visited::Dense { bits, side } => {
                let idx = rel.iter().rev().fold(0i64, |acc, &c| acc * *side + c) as usize;
                !std::mem::replace(&mut bits[idx], true)
            }
            Visited::Sparse(set) => set.insert(x),
        }
    }
}

/// BFS over the edges `(x, x + e)` with `e` in the support of the site law
/// at `x`, truncated to the sup-norm ball of radius `box_radius` at `origin`.
pub fn forward_cluster(handle: &EnvironmentHandle, origin: Site, box_radius: u32) -> Result<ClusterScan> {
    if box_radius < 1 {
        return Err(Error::ParamOutOfRange {
            name: "box_radius".into(),
            value: box_radius as f64,
        });
    }
    let dim = handle.dim();
    let r = box_radius as i64;
    let mut visited = Visited::new(dim, box_radius);
    let rel = |x: &Site| -> Vec<i64> { x.sub(&origin).into_iter().map(|c| c + r).collect() };
    let mut sites = vec![origin];
    let mut queue = VecDeque::from([origin]);
    visited.insert(origin, &rel(&origin));
    let mut censored = false;
    while let Some(x) = queue.pop_front() {
        let law = handle.site_environment(&x);
        for dir in Direction::all(dim) {
            if !law.supports(dir) {
                continue;
            }
            let y = x.step(dir);
            if y.sup_dist(&origin) > r {
                censored = true;
                continue;
            }
            if visited.insert(y, &rel(&y)) {
                sites.push(y);
                queue.push_back(y);
            }
        }
    }
    Ok(ClusterScan {
        sites,
        origin,
        box_radius,
        frontier_censored: censored,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ConeDepth {
    Depth(u64),
    /// The binding site sits near a boundary the cluster crossed; the value
    /// is only a lower bound.
    Censored(u64),
}

impl ConeDepth {
    pub fn value(self) -> u64 {
        match self {
            ConeDepth::Depth(n) | ConeDepth::Censored(n) => n,
        }
    }

    pub fn is_censored(self) -> bool {
        matches!(self, ConeDepth::Censored(_))
    }
}

/// Smallest `n` with every scanned site in `origin - nℓ + K_{κ,ℓ}`.
///
/// The result is censored when the scan hit the box, the depth is positive,
/// and a site attaining it lies in the outer annulus `‖u‖∞ > (1 - κ) R`,
/// where unseen parts of the cluster could push it further.
pub fn cone_violation_depth(scan: &ClusterScan, ell: &[f64], kappa: f64) -> Result<ConeDepth> {
    if scan.is_empty() {
        return Err(Error::EmptySet);
    }
    let cone = Cone::new(ell, kappa, 0)?;
    let depths: Vec<u64> = scan
        .sites
        .iter()
        .map(|s| {
            let u: Vec<f64> = s.sub(&scan.origin).into_iter().map(|c| c as f64).collect();
            cone.depth_of(&u)
        })
        .collect();
    let depth = depths.iter().copied().max().unwrap_or(0);
    let inner = (1.0 - kappa) * scan.box_radius as f64;
    let binding_near_edge = scan
        .sites
        .iter()
        .zip(&depths)
        .any(|(s, &n)| n == depth && s.sup_dist(&scan.origin) as f64 > inner);
    Ok(if scan.frontier_censored && depth >= 1 && binding_near_edge {
        ConeDepth::Censored(depth)
    } else {
        ConeDepth::Depth(depth)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConeRow {
    pub n: u64,
    pub p_hat: f64,
    pub se: f64,
    pub censor_rate: f64,
}

/// Scans one environment per replicate and reports, for each `n`, the
/// fraction of uncensored scans with depth `<= n`. Replicate environment
/// seeds come from `replicate_seeds(master_seed, r)`, so grids over laws
/// sharing a coupling are coupled.
pub fn estimate_cone_probability(
    law: &EnvironmentLaw,
    ell: &[f64],
    kappa: f64,
    ns: &[u64],
    box_radius: u32,
    replicates: usize,
    master_seed: u64,
) -> Result<Vec<ConeRow>> {
    if replicates < 1 {
        return Err(Error::ParamOutOfRange {
            name: "replicates".into(),
            value: 0.0,
        });
    }
    if ell.len() != law.dim() {
        return Err(Error::DimensionMismatch {
            expected: law.dim(),
            got: ell.len(),
        });
    }
    Cone::new(ell, kappa, 0)?;
    let depths: Vec<ConeDepth> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let (env_seed, _) = replicate_seeds(master_seed, r);
            let handle = EnvironmentHandle::new(law.clone(), env_seed);
            let scan = forward_cluster(&handle, Site::origin(law.dim()), box_radius)?;
            cone_violation_depth(&scan, ell, kappa)
        })
        .collect::<Result<_>>()?;
    let total = replicates as f64;
    let censored = depths.iter().filter(|d| d.is_censored()).count() as f64;
    Ok(ns
        .iter()
        .map(|&n| {
            let hits = depths
                .iter()
                .filter(|d| matches!(d, ConeDepth::Depth(k) if *k <= n))
                .count() as f64;
            let p = hits / total;
            ConeRow {
                n,
                p_hat: p,
                se: (p * (1.0 - p) / total).sqrt(),
                censor_rate: censored / total,
            }
        })
        .collect())
}

pub fn write_cone_csv<W: Write>(rows: &[ConeRow], mut out: W) -> io::Result<()> {
    writeln!(out, "n,p_hat,se,censor_rate")?;
    for r in rows {
        writeln!(out, "{},{:.6},{:.6},{:.6}", r.n, r.p_hat, r.se, r.censor_rate)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_site_law, Atom, Preset};

    const DIAG: [f64; 2] = [1.0, 1.0];

    #[test]
    fn all_ne_cluster_fills_quadrant() {
        let law = Preset::Orthant2d { p: 1.0 }.law().unwrap();
        let h = EnvironmentHandle::new(law, 9);
        let scan = forward_cluster(&h, Site::origin(2), 3).unwrap();
        let got: HashSet<Site> = scan.sites.iter().copied().collect();
        let want: HashSet<Site> = (0..=3)
            .flat_map(|a| (0..=3).map(move |b| Site::from_coords(&[a, b])))
            .collect();
        assert_eq!(got, want);
        assert!(scan.frontier_censored);
        assert_eq!(cone_violation_depth(&scan, &DIAG, 0.2).unwrap(), ConeDepth::Depth(0));
    }

    #[test]
    fn east_only_cluster_is_a_segment() {
        let law = EnvironmentLaw::new(
            2,
            vec![Atom {
                law: make_site_law(2, &[(Direction::plus(0), 1.0)]).unwrap(),
                weight: 1.0,
            }],
            None,
        )
        .unwrap();
        let h = EnvironmentHandle::new(law, 0);
        let scan = forward_cluster(&h, Site::origin(2), 5).unwrap();
        assert_eq!(scan.sites, (0..=5).map(|i| Site::from_coords(&[i, 0])).collect::<Vec<_>>());
        assert!(scan.frontier_censored);
    }

    #[test]
    fn depth_matches_direct_inequality() {
        let ell = lattice::normalized(&DIAG).unwrap();
        for kappa in [0.05, 0.1, 0.2, 0.5, 0.9] {
            let cone = Cone::new(&DIAG, kappa, 0).unwrap();
            for x in -6..=6 {
                for y in -6..=6 {
                    let u = [x as f64, y as f64];
                    let brute = (0..1000u64).find(|&n| cone_contains(&u, n, &ell, kappa)).unwrap();
                    assert_eq!(cone.depth_of(&u), brute, "u={u:?} kappa={kappa}");
                }
            }
        }
    }

    #[test]
    fn small_scan_depths() {
        let scan = ClusterScan {
            sites: vec![Site::origin(2)],
            origin: Site::origin(2),
            box_radius: 4,
            frontier_censored: false,
        };
        assert_eq!(cone_violation_depth(&scan, &DIAG, 0.3).unwrap(), ConeDepth::Depth(0));
        let scan = ClusterScan {
            sites: vec![Site::origin(2), Site::from_coords(&[-1, 0])],
            ..scan
        };
        let ell = lattice::normalized(&DIAG).unwrap();
        let want = (0..=10)
            .find(|&n| cone_contains(&[-1.0, 0.0], n, &ell, 0.1))
            .unwrap();
        assert_eq!(cone_violation_depth(&scan, &DIAG, 0.1).unwrap(), ConeDepth::Depth(want));
    }

    #[test]
    fn bad_parameters() {
        assert!(Cone::new(&DIAG, 0.0, 0).is_err());
        assert!(Cone::new(&DIAG, 1.0, 0).is_err());
        assert_eq!(Cone::new(&[0.0, 0.0], 0.2, 0), Err(Error::DirectionZero));
        let law = Preset::Orthant2d { p: 0.5 }.law().unwrap();
        let h = EnvironmentHandle::new(law, 0);
        assert!(forward_cluster(&h, Site::origin(2), 0).is_err());
    }

    #[test]
    fn sure_containment_for_all_ne() {
        let law = Preset::Orthant2d { p: 1.0 }.law().unwrap();
        let rows = estimate_cone_probability(&law, &DIAG, 0.2, &[0, 1], 10, 20, 4).unwrap();
        assert!(rows.iter().all(|r| r.p_hat == 1.0 && r.censor_rate == 0.0));
    }
}
