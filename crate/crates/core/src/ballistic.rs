//! Ballisticity diagnostics: the local Kalikow criterion, the transverse
//! direction classifier for 2-valued laws, and Monte Carlo probes of the
//! small-range events.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::env::{check_condition_ddim, check_condition_orthogonal, local_bias, EnvironmentHandle, EnvironmentLaw};
use crate::error::{Error, Result};
use crate::lattice::{self, Direction};
use crate::seed::replicate_seeds;
use crate::stats::{self, LinearFit};
use crate::walk::{RangeCounter, Walker};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KalikowResult {
    pub epsilon_hat: f64,
    pub argmin_f: BTreeMap<String, f64>,
    pub ballistic_flag: bool,
    pub grid_resolution: Option<f64>,
    /// False for non-elliptic laws, where a nonpositive value says nothing.
    pub applicable: bool,
}

fn check_open_unit(name: &str, x: f64, hi: f64) -> Result<()> {
    if x > 0.0 && x < hi {
        Ok(())
    } else {
        Err(Error::ParamOutOfRange {
            name: name.into(),
            value: x,
        })
    }
}

/// Kalikow's local quantity for the modified orthant law with `ℓ = (1, 1)`,
/// attained at `f = 1` on `{+e1, +e2}` and `0` on `{-e1, -e2}`.
pub fn kalikow_closed_form(p: f64, eps: f64, delta: f64) -> Result<KalikowResult> {
    check_open_unit("p", p, 1.0)?;
    check_open_unit("eps", eps, 0.5)?;
    check_open_unit("delta", delta, 0.5)?;
    let value = (p * (1.0 - 2.0 * eps) * delta - (1.0 - p) * (1.0 - 2.0 * delta) * (1.0 - eps))
        / (p * delta + (1.0 - p) * (1.0 - eps));
    let flag = p / (1.0 - p) > (1.0 - 2.0 * delta) * (1.0 - eps) / ((1.0 - 2.0 * eps) * delta);
    let argmin_f = [("+e1", 1.0), ("-e1", 0.0), ("+e2", 1.0), ("-e2", 0.0)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    Ok(KalikowResult {
        epsilon_hat: value,
        argmin_f,
        ballistic_flag: flag,
        grid_resolution: None,
        applicable: true,
    })
}

/// Threshold `p*` above which the closed form is positive.
pub fn kalikow_threshold(eps: f64, delta: f64) -> f64 {
    let r = (1.0 - 2.0 * delta) * (1.0 - eps) / ((1.0 - 2.0 * eps) * delta);
    r / (1.0 + r)
}

pub const GRID_LIMIT: u128 = 20_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KalikowOptions {
    pub grid_resolution: f64,
    /// Tie `f` across directions related by symmetries of `(μ, ℓ)`.
    pub use_symmetry: bool,
    pub refine: bool,
}

impl Default for KalikowOptions {
    fn default() -> Self {
        Self {
            grid_resolution: 0.02,
            use_symmetry: true,
            refine: true,
        }
    }
}

struct Objective<'a> {
    law: &'a EnvironmentLaw,
    drifts: Vec<f64>,
    classes: Vec<usize>,
}

impl Objective<'_> {
    fn f_of(&self, values: &[f64]) -> Vec<f64> {
        self.classes.iter().map(|&c| values[c]).collect()
    }

    /// `E[d·ℓ / Σγf] / E[1 / Σγf]`; `None` if some atom has `Σγf = 0`.
    fn eval(&self, values: &[f64]) -> Option<f64> {
        let f = self.f_of(values);
        let (mut num, mut den) = (0.0, 0.0);
        for (atom, drift) in self.law.atoms().iter().zip(&self.drifts) {
            let s: f64 = atom.law.probs().iter().zip(&f).map(|(g, x)| g * x).sum();
            if s <= 1e-14 {
                return None;
            }
            num += atom.weight * drift / s;
            den += atom.weight / s;
        }
        Some(num / den)
    }
}

/// Union-find classes of directions under axis transpositions and
/// reflections that preserve both the law and `ℓ`.
fn symmetry_classes(law: &EnvironmentLaw, ell: &[f64]) -> Vec<usize> {
    let d = law.dim();
    let mut parent: Vec<usize> = (0..2 * d).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    let mut perms: Vec<Vec<usize>> = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            if ell[i] == ell[j] {
                perms.push(
                    Direction::all(d)
                        .map(|e| {
                            let axis = if e.axis() == i { j } else if e.axis() == j { i } else { e.axis() };
                            Direction::new(axis, e.sign() as i8).index()
                        })
                        .collect(),
                );
            }
        }
        if ell[i] == 0.0 {
            perms.push(
                Direction::all(d)
                    .map(|e| if e.axis() == i { e.opposite().index() } else { e.index() })
                    .collect(),
            );
        }
    }
    for perm in perms {
        let invariant = law.atoms().iter().all(|a| {
            law.atoms().iter().any(|b| {
                (a.weight - b.weight).abs() < 1e-12
                    && (0..2 * d).all(|k| (a.law.probs()[k] - b.law.probs()[perm[k]]).abs() < 1e-12)
            })
        });
        if invariant {
            for (k, &img) in perm.iter().enumerate() {
                let (a, b) = (find(&mut parent, k), find(&mut parent, img));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let roots: Vec<usize> = (0..2 * d).map(|k| find(&mut parent, k)).collect();
    let mut ids: Vec<usize> = roots.clone();
    ids.sort();
    ids.dedup();
    roots.iter().map(|r| ids.binary_search(r).unwrap()).collect()
}

fn lex_less(a: &(f64, Vec<f64>), b: &(f64, Vec<f64>)) -> bool {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => a.1.iter().zip(&b.1).find(|(x, y)| x != y).is_some_and(|(x, y)| x < y),
    }
}

/// Grid search for the infimum of the Kalikow ratio over `f ∈ [0,1]^E \ {0}`.
///
/// The ratio is invariant under scaling `f`, so the search runs on the slice
/// `max f = 1`. `ℓ` is used as given (not normalized), matching the closed
/// form with `ℓ = (1, 1)`.
pub fn kalikow_numeric(law: &EnvironmentLaw, ell: &[f64], opts: KalikowOptions) -> Result<KalikowResult> {
    let d = law.dim();
    if ell.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: ell.len(),
        });
    }
    if ell.iter().all(|&x| x == 0.0) {
        return Err(Error::DirectionZero);
    }
    let res = opts.grid_resolution;
    if !(res > 0.0 && res <= 1.0) {
        return Err(Error::ParamOutOfRange {
            name: "grid_resolution".into(),
            value: res,
        });
    }
    let classes = if opts.use_symmetry {
        symmetry_classes(law, ell)
    } else {
        (0..2 * d).collect()
    };
    let m = classes.iter().max().unwrap() + 1;
    let g = (1.0 / res).round() as u128 + 1;
    let points = g.checked_pow(m as u32).unwrap_or(u128::MAX);
    if points > GRID_LIMIT {
        return Err(Error::GridTooLarge {
            points,
            limit: GRID_LIMIT,
        });
    }
    let drifts: Vec<f64> = law
        .atoms()
        .iter()
        .map(|a| lattice::dot(&local_bias(&a.law), ell))
        .collect();
    let obj = Objective {
        law,
        drifts,
        classes,
    };
    let top = (g - 1) as f64;
    let best = (0..points as u64)
        .into_par_iter()
        .filter_map(|code| {
            let mut c = code as u128;
            let mut values = Vec::with_capacity(m);
            let mut on_slice = false;
            for _ in 0..m {
                let k = c % g;
                c /= g;
                on_slice |= k == g - 1;
                values.push(k as f64 / top);
            }
            if !on_slice {
                return None;
            }
            obj.eval(&values).map(|v| (v, values))
        })
        .reduce_with(|a, b| if lex_less(&b, &a) { b } else { a });
    let (mut value, mut values) = best.ok_or(Error::NoFeasiblePoint)?;
    if opts.refine {
        (value, values) = refine(&obj, value, values, res);
    }
    let f = obj.f_of(&values);
    let argmin_f = Direction::all(d).map(|e| (e.to_string(), f[e.index()])).collect();
    Ok(KalikowResult {
        epsilon_hat: value,
        argmin_f,
        ballistic_flag: value > 0.0,
        grid_resolution: Some(res),
        applicable: law.is_elliptic(),
    })
}

/// Coordinate pattern search around the grid incumbent, renormalized to
/// `max f = 1` after each move.
fn refine(obj: &Objective, mut value: f64, mut values: Vec<f64>, res: f64) -> (f64, Vec<f64>) {
    let mut h = res / 2.0;
    while h > 1e-10 {
        let mut improved = false;
        for i in 0..values.len() {
            for sign in [-1.0, 1.0] {
                let mut cand = values.clone();
                cand[i] = (cand[i] + sign * h).clamp(0.0, 1.0);
                let mx = cand.iter().cloned().fold(0.0, f64::max);
                if mx <= 0.0 {
                    continue;
                }
                cand.iter_mut().for_each(|x| *x /= mx);
                if let Some(v) = obj.eval(&cand) {
                    if v < value - 1e-15 {
                        value = v;
                        values = cand;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            h /= 2.0;
        }
    }
    (value, values)
}

pub fn kalikow_json(r: &KalikowResult) -> String {
    serde_json::to_string_pretty(r).expect("serializable")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CaseTag {
    #[serde(rename = "I")]
    I,
    #[serde(rename = "II")]
    II,
    #[serde(rename = "III")]
    III,
    #[serde(rename = "reduced-k1")]
    ReducedK1,
    #[serde(rename = "two-sided-lateral")]
    TwoSidedLateral,
    #[serde(rename = "east-nsw-type")]
    EastNswType,
    #[serde(rename = "inapplicable")]
    Inapplicable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MartingaleKind {
    Submartingale,
    Martingale,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransverseClassification {
    pub case_tag: CaseTag,
    pub ell_prime: Option<Vec<f64>>,
    pub martingale_kind: Option<MartingaleKind>,
    pub biases: Vec<Vec<f64>>,
}

const BIAS_EPS: f64 = 1e-12;
/// Largest coefficient tried when searching for an orthogonal `ℓ'` over `V`.
const MAX_COEFFICIENT: i32 = 6;

fn is_zero(v: &[f64]) -> bool {
    v.iter().all(|x| x.abs() < BIAS_EPS)
}

/// Picks a transverse direction `ℓ'` for a 2-valued law, following the case
/// split: (III) a zero bias, (I) non-antiparallel biases, (II) antiparallel
/// biases with an orthogonal `ℓ'` charging every member of `V`, then the
/// `k > 1` reduction, the two-sided lateral case and the east/NSW-type case.
pub fn classify_transverse(law: &EnvironmentLaw) -> Result<TransverseClassification> {
    if law.atoms().len() != 2 {
        return Err(Error::NotTwoValued(law.atoms().len()));
    }
    let d = law.dim();
    let u1 = local_bias(&law.atoms()[0].law);
    let u2 = local_bias(&law.atoms()[1].law);
    let biases = vec![u1.clone(), u2.clone()];
    let out = |tag, ell: Option<Vec<f64>>, kind| {
        Ok(TransverseClassification {
            case_tag: tag,
            ell_prime: ell,
            martingale_kind: kind,
            biases: biases.clone(),
        })
    };
    let Some(v) = check_condition_orthogonal(law) else {
        return out(CaseTag::Inapplicable, None, None);
    };
    if check_condition_ddim(law).is_none() {
        return out(CaseTag::Inapplicable, None, None);
    }
    let sum_v: Vec<f64> = (0..d)
        .map(|i| v.iter().filter(|e| e.axis() == i).map(|e| e.sign() as f64).sum())
        .collect();

    if is_zero(&u1) || is_zero(&u2) {
        let nonzero = if is_zero(&u1) { &u2 } else { &u1 };
        let s = if lattice::dot(nonzero, &sum_v) >= 0.0 { 1.0 } else { -1.0 };
        let ell: Vec<f64> = sum_v.iter().map(|x| s * x).collect();
        let kind = if lattice::dot(nonzero, &ell).abs() < BIAS_EPS {
            MartingaleKind::Martingale
        } else {
            MartingaleKind::Submartingale
        };
        return out(CaseTag::III, Some(ell), Some(kind));
    }

    let (n1, n2) = (lattice::norm(&u1), lattice::norm(&u2));
    let antiparallel = (lattice::dot(&u1, &u2) + n1 * n2).abs() < BIAS_EPS * n1 * n2.max(1.0);
    if !antiparallel {
        let bisector: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a / n1 + b / n2).collect();
        let ell = lattice::normalized(&bisector).expect("non-antiparallel biases");
        return out(CaseTag::I, Some(ell), Some(MartingaleKind::Submartingale));
    }

    if let Some(ell) = orthogonal_over_v(&u1, &v, d) {
        return out(CaseTag::II, Some(ell), Some(MartingaleKind::Martingale));
    }

    let support: Vec<usize> = (0..d).filter(|&i| u1[i].abs() >= BIAS_EPS).collect();
    if support.len() > 1 {
        // In reflected coordinates every nonzero u_i is positive; the first
        // such axis plays the role of axis 1.
        let lead = support[0];
        let abs_u: Vec<f64> = u1.iter().map(|x| x.abs()).collect();
        let rest: f64 = support[1..].iter().map(|&i| abs_u[i]).sum();
        let ell: Vec<f64> = (0..d)
            .map(|i| {
                let sign = if u1[i] < 0.0 { -1.0 } else { 1.0 };
                let coef = if i == lead { -rest } else { abs_u[lead] };
                sign * coef
            })
            .collect();
        return out(CaseTag::ReducedK1, Some(ell), Some(MartingaleKind::Martingale));
    }

    let j = support[0];
    let balanced = |law: &crate::env::SiteLaw, i: usize| {
        let (a, b) = (law.prob(Direction::plus(i)), law.prob(Direction::minus(i)));
        a > 0.0 && (a - b).abs() < BIAS_EPS
    };
    let lateral: Vec<usize> = (0..d).filter(|&i| i != j).collect();
    let i1 = lateral.iter().copied().find(|&i| balanced(&law.atoms()[0].law, i));
    let i2 = lateral.iter().copied().find(|&i| balanced(&law.atoms()[1].law, i));
    if let (Some(i1), Some(i2)) = (i1, i2) {
        let mut ell = vec![0.0; d];
        ell[i1] += 1.0;
        ell[i2] += 1.0;
        return out(CaseTag::TwoSidedLateral, Some(ell), Some(MartingaleKind::Martingale));
    }
    let ell: Vec<f64> = (0..d).map(|i| if i == j { 0.0 } else { 1.0 }).collect();
    if is_zero(&ell) {
        return out(CaseTag::Inapplicable, None, None);
    }
    out(CaseTag::EastNswType, Some(ell), Some(MartingaleKind::Martingale))
}

/// Smallest integer `x` (by max |x|, then Σ|x|, then lexicographic) with
/// all `x_e != 0` and `Σ x_e e ⊥ u`.
fn orthogonal_over_v(u: &[f64], v: &[Direction], d: usize) -> Option<Vec<f64>> {
    let m = v.len();
    let values: Vec<i32> = (-MAX_COEFFICIENT..=MAX_COEFFICIENT).filter(|&x| x != 0).collect();
    let mut candidates: Vec<Vec<i32>> = Vec::new();
    let total = values.len().pow(m as u32);
    for code in 0..total {
        let mut c = code;
        let mut x = Vec::with_capacity(m);
        for _ in 0..m {
            x.push(values[c % values.len()]);
            c /= values.len();
        }
        let ell = combine(&x, v, d);
        if lattice::dot(u, &ell).abs() < BIAS_EPS {
            candidates.push(x);
        }
    }
    candidates.sort_by_key(|x| {
        (
            x.iter().map(|c| c.abs()).max().unwrap_or(0),
            x.iter().map(|c| c.abs()).sum::<i32>(),
            x.clone(),
        )
    });
    candidates.first().map(|x| combine(x, v, d))
}

fn combine(x: &[i32], v: &[Direction], d: usize) -> Vec<f64> {
    let mut ell = vec![0.0; d];
    for (c, e) in x.iter().zip(v) {
        ell[e.axis()] += *c as f64 * e.sign() as f64;
    }
    ell
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    pub n: usize,
    pub p_hat: f64,
    pub se: f64,
    pub replicates: usize,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayTable {
    pub rows: Vec<DecayRow>,
    /// Weighted fit of `log p̃(n)` against `n^(1-2α)`, where
    /// `p̃ = (count + 1/2) / (N + 1)` keeps empty cells finite.
    pub fit: Option<LinearFit>,
    pub alpha: f64,
    pub ell_prime: Option<Vec<f64>>,
}

impl DecayTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,p_hat,se,replicates")?;
        for r in &self.rows {
            writeln!(out, "{},{:.8},{:.8},{}", r.n, r.p_hat, r.se, r.replicates)?;
        }
        Ok(())
    }
}

/// Builds rows and the decay fit from per-`n` event counts.
pub fn decay_table(n_grid: &[usize], counts: &[usize], replicates: usize, alpha: f64, ell_prime: Option<Vec<f64>>) -> DecayTable {
    let total = replicates as f64;
    let rows: Vec<DecayRow> = n_grid
        .iter()
        .zip(counts)
        .map(|(&n, &c)| {
            let p = c as f64 / total;
            DecayRow {
                n,
                p_hat: p,
                se: (p * (1.0 - p) / total).sqrt(),
                replicates,
                count: c,
            }
        })
        .collect();
    let fit = (rows.len() >= 2).then(|| {
        let x: Vec<f64> = rows.iter().map(|r| (r.n as f64).powf(1.0 - 2.0 * alpha)).collect();
        let pt: Vec<f64> = rows
            .iter()
            .map(|r| (r.count as f64 + 0.5) / (total + 1.0))
            .collect();
        let y: Vec<f64> = pt.iter().map(|p| p.ln()).collect();
        let w: Vec<f64> = pt.iter().map(|p| total * p / (1.0 - p).max(1e-12)).collect();
        stats::weighted_linear_fit(&x, &y, &w)
    });
    DecayTable {
        rows,
        fit,
        alpha,
        ell_prime,
    }
}

fn check_grid(n_grid: &[usize], replicates: usize) -> Result<()> {
    if n_grid.is_empty() || n_grid.contains(&0) {
        return Err(Error::ParamOutOfRange {
            name: "n_grid".into(),
            value: 0.0,
        });
    }
    if replicates == 0 {
        return Err(Error::ParamOutOfRange {
            name: "replicates".into(),
            value: 0.0,
        });
    }
    Ok(())
}

/// Estimates `P(max_{k<=n} |X_k·ℓ'| <= n^α)` over annealed replicates.
/// Without an explicit `ℓ'` the classifier's choice is used.
pub fn martingale_range_probe(
    law: &EnvironmentLaw,
    ell_prime: Option<&[f64]>,
    n_grid: &[usize],
    alpha: f64,
    replicates: usize,
    master_seed: u64,
) -> Result<DecayTable> {
    check_open_unit("alpha", alpha, 0.5)?;
    check_grid(n_grid, replicates)?;
    let ell: Vec<f64> = match ell_prime {
        Some(e) => e.to_vec(),
        None => classify_transverse(law)
            .ok()
            .and_then(|c| c.ell_prime)
            .ok_or(Error::NoTransverseDirection)?,
    };
    if ell.len() != law.dim() {
        return Err(Error::DimensionMismatch {
            expected: law.dim(),
            got: ell.len(),
        });
    }
    if is_zero(&ell) {
        return Err(Error::NoTransverseDirection);
    }
    let n_max = *n_grid.iter().max().unwrap();
    let hits: Vec<Vec<bool>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let (env_seed, walk_seed) = replicate_seeds(master_seed, r);
            let env = EnvironmentHandle::new(law.clone(), env_seed);
            let mut walker = Walker::new(&env, walk_seed);
            let mut running = 0.0f64;
            let mut maxima = vec![0.0; n_max + 1];
            for k in 1..=n_max {
                let x = walker.step();
                running = running.max(x.dot(&ell).abs());
                maxima[k] = running;
            }
            n_grid
                .iter()
                .map(|&n| maxima[n] <= (n as f64).powf(alpha))
                .collect()
        })
        .collect();
    let counts = tally(&hits, n_grid.len());
    Ok(decay_table(n_grid, &counts, replicates, alpha, Some(ell)))
}

/// Estimates `P(R_n <= C n^α)` over annealed replicates.
pub fn range_growth_probe(
    law: &EnvironmentLaw,
    n_grid: &[usize],
    alpha: f64,
    c: f64,
    replicates: usize,
    master_seed: u64,
) -> Result<DecayTable> {
    check_open_unit("alpha", alpha, 1.0)?;
    if !(c > 0.0) {
        return Err(Error::ParamOutOfRange {
            name: "C".into(),
            value: c,
        });
    }
    check_grid(n_grid, replicates)?;
    let n_max = *n_grid.iter().max().unwrap();
    let hits: Vec<Vec<bool>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let (env_seed, walk_seed) = replicate_seeds(master_seed, r);
            let env = EnvironmentHandle::new(law.clone(), env_seed);
            let mut walker = Walker::new(&env, walk_seed);
            let mut range = RangeCounter::new();
            range.visit(walker.position());
            let mut sizes = vec![1usize; n_max + 1];
            for k in 1..=n_max {
                sizes[k] = range.visit(walker.step());
            }
            n_grid
                .iter()
                .map(|&n| sizes[n] as f64 <= c * (n as f64).powf(alpha))
                .collect()
        })
        .collect();
    let counts = tally(&hits, n_grid.len());
    Ok(decay_table(n_grid, &counts, replicates, alpha, None))
}

fn tally(hits: &[Vec<bool>], k: usize) -> Vec<usize> {
    (0..k).map(|i| hits.iter().filter(|h| h[i]).count()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_site_law, uniform_site_law, Atom, Preset};

    fn d(s: &str) -> Direction {
        s.parse().unwrap()
    }

    fn two_valued(a: &[(&str, f64)], b: &[(&str, f64)]) -> EnvironmentLaw {
        let mk = |w: &[(&str, f64)]| make_site_law(2, &w.iter().map(|(k, x)| (d(k), *x)).collect::<Vec<_>>()).unwrap();
        EnvironmentLaw::new(
            2,
            vec![
                Atom { law: mk(a), weight: 0.5 },
                Atom { law: mk(b), weight: 0.5 },
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn closed_form_threshold() {
        assert_eq!(kalikow_threshold(0.25, 0.25), 0.75);
        assert!(!kalikow_closed_form(0.75, 0.25, 0.25).unwrap().ballistic_flag);
        assert!(kalikow_closed_form(0.75 + 1e-12, 0.25, 0.25).unwrap().ballistic_flag);
        assert!(!kalikow_closed_form(0.75 - 1e-12, 0.25, 0.25).unwrap().ballistic_flag);
        assert!(kalikow_closed_form(0.9, 0.0, 0.25).is_err());
        // Small δ pushes the threshold to 1.
        assert!(kalikow_threshold(0.1, 1e-4) > 0.999);
    }

    #[test]
    fn numeric_matches_closed_form_example() {
        let law = Preset::ModifiedOrthant { p: 0.9, eps: 0.05, delta: 0.05 }.law().unwrap();
        let num = kalikow_numeric(&law, &[1.0, 1.0], KalikowOptions::default()).unwrap();
        let exact = kalikow_closed_form(0.9, 0.05, 0.05).unwrap();
        assert!((num.epsilon_hat - exact.epsilon_hat).abs() < 1e-9);
        assert_eq!(num.argmin_f, exact.argmin_f);
        assert_eq!(num.ballistic_flag, exact.ballistic_flag);
    }

    #[test]
    fn symmetric_walk_has_zero_criterion() {
        let all: Vec<Direction> = Direction::all(2).collect();
        let law = EnvironmentLaw::new(
            2,
            vec![Atom {
                law: uniform_site_law(2, &all).unwrap(),
                weight: 1.0,
            }],
            None,
        )
        .unwrap();
        let r = kalikow_numeric(&law, &[1.0, 0.5], KalikowOptions::default()).unwrap();
        assert!(r.epsilon_hat.abs() < 1e-12);
        assert!(!r.ballistic_flag);
    }

    #[test]
    fn orthant_is_inapplicable() {
        let law = Preset::Orthant2d { p: 0.9 }.law().unwrap();
        let r = kalikow_numeric(&law, &[1.0, 1.0], KalikowOptions::default()).unwrap();
        assert!(!r.applicable);
        assert!(r.epsilon_hat <= 0.0);
        let east = Preset::EastNsw { p: 0.5 }.law().unwrap();
        let r = kalikow_numeric(&east, &[1.0, 0.0], KalikowOptions::default());
        assert!(matches!(r, Ok(KalikowResult { applicable: false, .. })));
    }

    #[test]
    fn single_atom_ratio_is_its_drift() {
        let law = EnvironmentLaw::new(
            2,
            vec![Atom {
                law: make_site_law(2, &[(d("+e1"), 1.0)]).unwrap(),
                weight: 1.0,
            }],
            None,
        )
        .unwrap();
        let r = kalikow_numeric(&law, &[1.0, 0.0], KalikowOptions::default()).unwrap();
        assert_eq!(r.epsilon_hat, 1.0);
        assert!(!r.applicable);
        let big = kalikow_numeric(
            &Preset::EplusGeneral { d: 6, p: 0.5 }.law().unwrap(),
            &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            KalikowOptions::default(),
        );
        assert!(matches!(big, Err(Error::GridTooLarge { .. })));
    }

    #[test]
    fn grid_minimum_is_scale_invariant() {
        let law = Preset::ModifiedOrthant { p: 0.6, eps: 0.2, delta: 0.3 }.law().unwrap();
        let r = kalikow_numeric(&law, &[1.0, 1.0], KalikowOptions::default()).unwrap();
        let obj = Objective {
            law: &law,
            drifts: law.atoms().iter().map(|a| lattice::dot(&local_bias(&a.law), &[1.0, 1.0])).collect(),
            classes: (0..4).collect(),
        };
        let f: Vec<f64> = Direction::all(2).map(|e| r.argmin_f[&e.to_string()]).collect();
        for s in [1.0, 0.5, 0.1] {
            let scaled: Vec<f64> = f.iter().map(|x| x * s).collect();
            assert!((obj.eval(&scaled).unwrap() - r.epsilon_hat).abs() < 1e-12);
        }
    }

    #[test]
    fn classify_orthant() {
        let law = Preset::Orthant2d { p: 0.6 }.law().unwrap();
        let c = classify_transverse(&law).unwrap();
        assert_eq!(c.case_tag, CaseTag::II);
        assert_eq!(c.ell_prime, Some(vec![1.0, -1.0]));
        for u in &c.biases {
            assert_eq!(lattice::dot(u, c.ell_prime.as_ref().unwrap()), 0.0);
        }
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"II\""));
    }

    #[test]
    fn classify_east_nsw() {
        let law = Preset::EastNsw { p: 0.5 }.law().unwrap();
        let c = classify_transverse(&law).unwrap();
        assert_eq!(c.case_tag, CaseTag::EastNswType);
        assert_eq!(c.ell_prime, Some(vec![0.0, 1.0]));
    }

    #[test]
    fn classify_case_one() {
        let law = two_valued(&[("+e1", 0.75), ("-e1", 0.25)], &[("+e2", 0.75), ("-e2", 0.25)]);
        let c = classify_transverse(&law).unwrap();
        assert_eq!(c.case_tag, CaseTag::I);
        let ell = c.ell_prime.unwrap();
        assert!((ell[0] - ell[1]).abs() < 1e-15 && ell[0] > 0.0);
        for u in &c.biases {
            assert!(lattice::dot(u, &ell) > 0.0);
        }
    }

    #[test]
    fn classify_case_three() {
        let law = two_valued(
            &[("+e1", 0.25), ("-e1", 0.25), ("+e2", 0.25), ("-e2", 0.25)],
            &[("+e1", 0.5), ("+e2", 0.5)],
        );
        let c = classify_transverse(&law).unwrap();
        assert_eq!(c.case_tag, CaseTag::III);
        let ell = c.ell_prime.unwrap();
        assert!(lattice::dot(&c.biases[1], &ell) >= 0.0);
    }

    #[test]
    fn classify_errors() {
        let law = Preset::SpeedZero { p: 0.5, i_max: 3 }.law().unwrap();
        assert_eq!(classify_transverse(&law), Err(Error::NotTwoValued(4)));
        // Condition on orthogonal sets fails: {+e1} vs {-e1}.
        let trapped = two_valued(&[("+e1", 1.0)], &[("-e1", 1.0)]);
        assert_eq!(classify_transverse(&trapped).unwrap().case_tag, CaseTag::Inapplicable);
    }

    #[test]
    fn probes_on_deterministic_walk() {
        let law = Preset::Orthant2d { p: 1.0 }.law().unwrap();
        let t = martingale_range_probe(&law, Some(&[1.0, 1.0]), &[100, 400], 0.4, 20, 1).unwrap();
        assert!(t.rows.iter().all(|r| r.p_hat == 0.0));
        let r = range_growth_probe(&law, &[100, 400], 0.4, 1.0, 20, 1).unwrap();
        assert!(r.rows.iter().all(|r| r.p_hat == 0.0));
        assert!(matches!(
            martingale_range_probe(&law, Some(&[1.0, 1.0]), &[10], 0.6, 5, 1),
            Err(Error::ParamOutOfRange { .. })
        ));
        let trapped = two_valued(&[("+e1", 1.0)], &[("-e1", 1.0)]);
        assert_eq!(
            martingale_range_probe(&trapped, None, &[10], 0.4, 5, 1),
            Err(Error::NoTransverseDirection)
        );
    }
}
