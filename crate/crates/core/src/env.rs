//! Site laws, environment laws, lazily sampled environments and the
//! structural conditions on an environment law.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Direction, Site, MAX_DIM};
use crate::seed::site_uniform;

/// Tolerance for probability and weight sums after renormalization.
pub const SUM_TOLERANCE: f64 = 1e-12;
/// Tolerance accepted on user-supplied weights before renormalization.
pub const INPUT_TOLERANCE: f64 = 1e-9;

/// A probability vector over the `2d` unit directions.
#[derive(Clone, PartialEq)]
pub struct SiteLaw {
    dim: usize,
    probs: Vec<f64>,
}

impl SiteLaw {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn prob(&self, dir: Direction) -> f64 {
        self.probs.get(dir.index()).copied().unwrap_or(0.0)
    }

    /// Probabilities in canonical direction order.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn support(&self) -> Vec<Direction> {
        Direction::all(self.dim).filter(|d| self.prob(*d) > 0.0).collect()
    }

    pub fn supports(&self, dir: Direction) -> bool {
        self.prob(dir) > 0.0
    }

    /// Support is contained in `{+e_1, ..., +e_d}`.
    pub fn is_forward_only(&self) -> bool {
        self.support().iter().all(|d| d.is_positive())
    }

    pub fn is_elliptic(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    /// Inverse-CDF sampling over the canonical order. `u` must lie in `[0, 1)`.
    #[inline]
    pub fn sample(&self, u: f64) -> Direction {
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = i;
                if u < acc {
                    return Direction::from_index(i);
                }
            }
        }
        Direction::from_index(last)
    }

    pub fn to_weight_map(&self) -> BTreeMap<String, f64> {
        self.support()
            .into_iter()
            .map(|d| (d.to_string(), self.prob(d)))
            .collect()
    }
}

impl fmt::Debug for SiteLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(self.support().iter().map(|d| (d.to_string(), self.prob(*d))))
            .finish()
    }
}

/// Builds a site law from explicit weights, renormalizing exactly.
pub fn make_site_law(dim: usize, weights: &[(Direction, f64)]) -> Result<SiteLaw> {
    if !(1..=MAX_DIM).contains(&dim) {
        return Err(Error::ParamOutOfRange {
            name: "dimension".into(),
            value: dim as f64,
        });
    }
    let mut probs = vec![0.0; 2 * dim];
    for &(dir, w) in weights {
        if dir.axis() >= dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: dir.axis() + 1,
            });
        }
        if w < 0.0 || w.is_nan() {
            return Err(Error::NegativeWeight {
                direction: dir.to_string(),
                weight: w,
            });
        }
        probs[dir.index()] += w;
    }
    let sum: f64 = probs.iter().sum();
    if sum == 0.0 {
        return Err(Error::EmptySupport);
    }
    if (sum - 1.0).abs() > INPUT_TOLERANCE {
        return Err(Error::SumOutOfTolerance { sum });
    }
    for p in &mut probs {
        *p /= sum;
    }
    Ok(SiteLaw { dim, probs })
}

/// Parses a `{"+e1": w, ...}` map.
pub fn site_law_from_map(dim: usize, weights: &BTreeMap<String, f64>) -> Result<SiteLaw> {
    let parsed = weights
        .iter()
        .map(|(k, &w)| Ok((k.parse::<Direction>()?, w)))
        .collect::<Result<Vec<_>>>()?;
    make_site_law(dim, &parsed)
}

/// Uniform law on `support`; the uniform-RWRE site law `|G_x|^{-1}`.
pub fn uniform_site_law(dim: usize, support: &[Direction]) -> Result<SiteLaw> {
    let mut unique: Vec<Direction> = support.to_vec();
    unique.sort();
    unique.dedup();
    if unique.is_empty() {
        return Err(Error::EmptySupport);
    }
    let w = 1.0 / unique.len() as f64;
    make_site_law(dim, &unique.iter().map(|&d| (d, w)).collect::<Vec<_>>())
}

/// `u_i = gamma(+e_i) - gamma(-e_i)`.
pub fn local_bias(law: &SiteLaw) -> Vec<f64> {
    (0..law.dim)
        .map(|i| law.prob(Direction::plus(i)) - law.prob(Direction::minus(i)))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub law: SiteLaw,
    pub weight: f64,
}

/// A finitely supported law over site laws.
///
/// `coupling_order` fixes how the per-site uniform is mapped to an atom: atom
/// `coupling_order[0]` owns `[0, w_0)`, the next one the following interval,
/// and so on. For two-atom families indexed by `p` with the `p`-atom first
/// this is the monotone coupling `atom 1 at x <=> U_x < p`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentLaw {
    dim: usize,
    atoms: Vec<Atom>,
    coupling_order: Vec<usize>,
    thresholds: Vec<f64>,
    label: String,
}

impl EnvironmentLaw {
    pub fn new(dim: usize, atoms: Vec<Atom>, coupling_order: Option<Vec<usize>>) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::ParamOutOfRange {
                name: "dimension".into(),
                value: dim as f64,
            });
        }
        if atoms.is_empty() {
            return Err(Error::EmptySupport);
        }
        for a in &atoms {
            if a.law.dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: a.law.dim,
                });
            }
            if !(a.weight > 0.0) {
                return Err(Error::ParamOutOfRange {
                    name: "atom weight".into(),
                    value: a.weight,
                });
            }
        }
        let sum: f64 = atoms.iter().map(|a| a.weight).sum();
        if (sum - 1.0).abs() > INPUT_TOLERANCE {
            return Err(Error::SumOutOfTolerance { sum });
        }
        let mut atoms = atoms;
        for a in &mut atoms {
            a.weight /= sum;
        }
        let order = coupling_order.unwrap_or_else(|| (0..atoms.len()).collect());
        let mut check = order.clone();
        check.sort_unstable();
        if check != (0..atoms.len()).collect::<Vec<_>>() {
            return Err(Error::ParamOutOfRange {
                name: "coupling_order".into(),
                value: order.len() as f64,
            });
        }
        let mut thresholds = Vec::with_capacity(order.len());
        let mut acc = 0.0;
        for &i in &order {
            acc += atoms[i].weight;
            thresholds.push(acc);
        }
        *thresholds.last_mut().unwrap() = 1.0;
        Ok(Self {
            dim,
            atoms,
            coupling_order: order,
            thresholds,
            label: "custom".into(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn coupling_order(&self) -> &[usize] {
        &self.coupling_order
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Index of the atom selected by a uniform `u in [0, 1)`.
    #[inline]
    pub fn atom_for_uniform(&self, u: f64) -> usize {
        let slot = self
            .thresholds
            .iter()
            .position(|&t| u < t)
            .unwrap_or(self.thresholds.len() - 1);
        self.coupling_order[slot]
    }

    /// `mu(e in S)`: total weight of atoms charging `dir`.
    pub fn support_weight(&self, dir: Direction) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.law.supports(dir))
            .map(|a| a.weight)
            .sum()
    }

    pub fn is_elliptic(&self) -> bool {
        self.atoms.iter().all(|a| a.law.is_elliptic())
    }

    pub fn to_document(&self) -> LawDocument {
        LawDocument {
            dimension: self.dim,
            atoms: self
                .atoms
                .iter()
                .map(|a| AtomDocument {
                    weights: a.law.to_weight_map(),
                    weight: a.weight,
                })
                .collect(),
            coupling_order: Some(self.coupling_order.clone()),
            label: Some(self.label.clone()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("law serializes")
    }
}

/// JSON form of an [`EnvironmentLaw`].
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LawDocument {
    pub dimension: usize,
    pub atoms: Vec<AtomDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling_order: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AtomDocument {
    pub weights: BTreeMap<String, f64>,
    pub weight: f64,
}

impl TryFrom<LawDocument> for EnvironmentLaw {
    type Error = Error;

    fn try_from(doc: LawDocument) -> Result<Self> {
        let atoms = doc
            .atoms
            .iter()
            .map(|a| {
                Ok(Atom {
                    law: site_law_from_map(doc.dimension, &a.weights)?,
                    weight: a.weight,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let law = EnvironmentLaw::new(doc.dimension, atoms, doc.coupling_order)?;
        Ok(match doc.label {
            Some(l) => law.with_label(l),
            None => law,
        })
    }
}

impl Serialize for EnvironmentLaw {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_document().serialize(s)
    }
}

impl<'de> Deserialize<'de> for EnvironmentLaw {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = LawDocument::deserialize(d)?;
        EnvironmentLaw::try_from(doc).map_err(serde::de::Error::custom)
    }
}

/// Named model families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PresetSpec", into = "PresetSpec")]
pub enum Preset {
    /// NE w.p. `p`, SW w.p. `1 - p`, uniform on available arrows.
    Orthant2d { p: f64 },
    /// `{+e1: 1}` w.p. `p`, uniform on `{-e1, +e2, -e2}` otherwise.
    EastNsw { p: f64 },
    /// East w.p. `p`, plus trap atoms `i = 1..=i_max` with masses `∝ 1/i^2`.
    SpeedZero { p: f64, i_max: u32 },
    /// Elliptic perturbation of the orthant model.
    ModifiedOrthant { p: f64, eps: f64, delta: f64 },
    /// Uniform on `E_+` w.p. `p`, uniform on all of `E` otherwise.
    EplusGeneral { d: usize, p: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PresetSpec {
    pub name: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, f64>,
}

impl TryFrom<PresetSpec> for Preset {
    type Error = Error;
    fn try_from(spec: PresetSpec) -> Result<Self> {
        Preset::from_name(&spec.name, &spec.params)
    }
}

impl From<Preset> for PresetSpec {
    fn from(p: Preset) -> Self {
        let mut params = BTreeMap::new();
        let name = match p {
            Preset::Orthant2d { p } => {
                params.insert("p".into(), p);
                "orthant2d"
            }
            Preset::EastNsw { p } => {
                params.insert("p".into(), p);
                "east_nsw"
            }
            Preset::SpeedZero { p, i_max } => {
                params.insert("p".into(), p);
                params.insert("i_max".into(), i_max as f64);
                "speed_zero"
            }
            Preset::ModifiedOrthant { p, eps, delta } => {
                params.insert("p".into(), p);
                params.insert("eps".into(), eps);
                params.insert("delta".into(), delta);
                "modified_orthant"
            }
            Preset::EplusGeneral { d, p } => {
                params.insert("d".into(), d as f64);
                params.insert("p".into(), p);
                "eplus_general"
            }
        };
        PresetSpec {
            name: name.into(),
            params,
        }
    }
}

fn param(params: &BTreeMap<String, f64>, name: &str) -> Result<f64> {
    params.get(name).copied().ok_or(Error::ParamOutOfRange {
        name: name.into(),
        value: f64::NAN,
    })
}

fn positive_integer(params: &BTreeMap<String, f64>, name: &str) -> Result<u32> {
    let v = param(params, name)?;
    if v.fract() != 0.0 || v < 1.0 || v > u32::MAX as f64 {
        return Err(Error::ParamOutOfRange {
            name: name.into(),
            value: v,
        });
    }
    Ok(v as u32)
}

impl Preset {
    pub fn from_name(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let preset = match name {
            "orthant2d" => Preset::Orthant2d {
                p: param(params, "p")?,
            },
            "east_nsw" => Preset::EastNsw {
                p: param(params, "p")?,
            },
            "speed_zero" => Preset::SpeedZero {
                p: param(params, "p")?,
                i_max: positive_integer(params, "i_max")?,
            },
            "modified_orthant" => Preset::ModifiedOrthant {
                p: param(params, "p")?,
                eps: param(params, "eps")?,
                delta: param(params, "delta")?,
            },
            "eplus_general" => Preset::EplusGeneral {
                d: positive_integer(params, "d")? as usize,
                p: param(params, "p")?,
            },
            other => return Err(Error::UnknownPreset(other.into())),
        };
        preset.validate()?;
        Ok(preset)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Orthant2d { .. } => "orthant2d",
            Preset::EastNsw { .. } => "east_nsw",
            Preset::SpeedZero { .. } => "speed_zero",
            Preset::ModifiedOrthant { .. } => "modified_orthant",
            Preset::EplusGeneral { .. } => "eplus_general",
        }
    }

    pub fn p(&self) -> f64 {
        match *self {
            Preset::Orthant2d { p }
            | Preset::EastNsw { p }
            | Preset::SpeedZero { p, .. }
            | Preset::ModifiedOrthant { p, .. }
            | Preset::EplusGeneral { p, .. } => p,
        }
    }

    /// Same family with a different `p`.
    pub fn with_p(&self, p: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            Preset::Orthant2d { p: q }
            | Preset::EastNsw { p: q }
            | Preset::SpeedZero { p: q, .. }
            | Preset::ModifiedOrthant { p: q, .. }
            | Preset::EplusGeneral { p: q, .. } => *q = p,
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, v: f64, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::ParamOutOfRange {
                    name: name.into(),
                    value: v,
                })
            }
        };
        let p = self.p();
        range("p", p, (0.0..=1.0).contains(&p))?;
        match *self {
            Preset::SpeedZero { i_max, .. } => range("i_max", i_max as f64, i_max >= 1),
            Preset::ModifiedOrthant { eps, delta, .. } => {
                range("eps", eps, (0.0..0.5).contains(&eps))?;
                range("delta", delta, (0.0..0.5).contains(&delta))
            }
            Preset::EplusGeneral { d, .. } => range("d", d as f64, (2..=MAX_DIM).contains(&d)),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Preset::Orthant2d { p } => format!("orthant2d(p={p})"),
            Preset::EastNsw { p } => format!("east_nsw(p={p})"),
            Preset::SpeedZero { p, i_max } => format!("speed_zero(p={p},i_max={i_max})"),
            Preset::ModifiedOrthant { p, eps, delta } => {
                format!("modified_orthant(p={p},eps={eps},delta={delta})")
            }
            Preset::EplusGeneral { d, p } => format!("eplus_general(d={d},p={p})"),
        }
    }

    /// Builds the law. Zero-weight atoms are dropped; the `p`-atom always
    /// comes first in the coupling order.
    pub fn law(&self) -> Result<EnvironmentLaw> {
        self.validate()?;
        let (e1p, e1m, e2p, e2m) = (
            Direction::plus(0),
            Direction::minus(0),
            Direction::plus(1),
            Direction::minus(1),
        );
        let mut weighted: Vec<(SiteLaw, f64)> = Vec::new();
        let dim;
        match *self {
            Preset::Orthant2d { p } => {
                dim = 2;
                weighted.push((uniform_site_law(2, &[e1p, e2p])?, p));
                weighted.push((uniform_site_law(2, &[e1m, e2m])?, 1.0 - p));
            }
            Preset::EastNsw { p } => {
                dim = 2;
                weighted.push((uniform_site_law(2, &[e1p])?, p));
                weighted.push((uniform_site_law(2, &[e1m, e2p, e2m])?, 1.0 - p));
            }
            Preset::SpeedZero { p, i_max } => {
                dim = 2;
                weighted.push((uniform_site_law(2, &[e1p])?, p));
                let harmonic: f64 = (1..=i_max).map(|i| 1.0 / (i as f64).powi(2)).sum();
                for i in 1..=i_max {
                    let back = 1.0 - 0.5f64.powi(i as i32);
                    let side = 0.5f64.powi(i as i32 + 1);
                    let law = make_site_law(2, &[(e1m, back), (e2p, side), (e2m, side)])?;
                    let w = (1.0 - p) / (i as f64).powi(2) / harmonic;
                    weighted.push((law, w));
                }
            }
            Preset::ModifiedOrthant { p, eps, delta } => {
                dim = 2;
                let g1 = make_site_law(
                    2,
                    &[
                        (e1p, (1.0 - eps) / 2.0),
                        (e2p, (1.0 - eps) / 2.0),
                        (e1m, eps / 2.0),
                        (e2m, eps / 2.0),
                    ],
                )?;
                let g2 = make_site_law(
                    2,
                    &[
                        (e1p, delta / 2.0),
                        (e2p, delta / 2.0),
                        (e1m, (1.0 - delta) / 2.0),
                        (e2m, (1.0 - delta) / 2.0),
                    ],
                )?;
                weighted.push((g1, p));
                weighted.push((g2, 1.0 - p));
            }
            Preset::EplusGeneral { d, p } => {
                dim = d;
                let plus: Vec<Direction> = (0..d).map(Direction::plus).collect();
                let all: Vec<Direction> = Direction::all(d).collect();
                weighted.push((uniform_site_law(d, &plus)?, p));
                weighted.push((uniform_site_law(d, &all)?, 1.0 - p));
            }
        }
        let atoms: Vec<Atom> = weighted
            .into_iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(law, weight)| Atom { law, weight })
            .collect();
        Ok(EnvironmentLaw::new(dim, atoms, None)?.with_label(self.label()))
    }
}

/// Looks up a preset by name and builds its law.
pub fn model_preset(name: &str, params: &BTreeMap<String, f64>) -> Result<EnvironmentLaw> {
    Preset::from_name(name, params)?.law()
}

/// A sampled environment: the law plus the seed of its per-site uniforms.
/// The lattice is never stored; every query recomputes the site's atom.
#[derive(Clone, Debug)]
pub struct EnvironmentHandle {
    pub law: EnvironmentLaw,
    pub master_seed: u64,
}

impl EnvironmentHandle {
    pub fn new(law: EnvironmentLaw, master_seed: u64) -> Self {
        Self { law, master_seed }
    }

    pub fn dim(&self) -> usize {
        self.law.dim
    }

    #[inline]
    pub fn uniform(&self, x: &Site) -> f64 {
        site_uniform(self.master_seed, x)
    }

    #[inline]
    pub fn atom_index(&self, x: &Site) -> usize {
        self.law.atom_for_uniform(self.uniform(x))
    }

    #[inline]
    pub fn site_environment(&self, x: &Site) -> &SiteLaw {
        &self.law.atoms[self.atom_index(x)].law
    }
}

pub fn site_environment<'a>(handle: &'a EnvironmentHandle, x: &Site) -> &'a SiteLaw {
    handle.site_environment(x)
}

/// Searches for an orthogonal `V ⊆ E` met by the support of every atom.
///
/// Candidates are enumerated as base-3 numbers over the axes (axis 1 least
/// significant; digit 0 absent, 1 `+e_i`, 2 `-e_i`), skipping the empty set.
pub fn check_condition_orthogonal(law: &EnvironmentLaw) -> Option<Vec<Direction>> {
    let d = law.dim;
    let total = 3usize.pow(d as u32);
    (1..total).map(|code| orthogonal_set(code, d)).find(|v| {
        law.atoms
            .iter()
            .all(|a| v.iter().any(|&e| a.law.supports(e)))
    })
}

fn orthogonal_set(mut code: usize, d: usize) -> Vec<Direction> {
    let mut v = Vec::new();
    for axis in 0..d {
        match code % 3 {
            1 => v.push(Direction::plus(axis)),
            2 => v.push(Direction::minus(axis)),
            _ => {}
        }
        code /= 3;
    }
    v
}

/// Searches the `2^d` sign patterns for `V' = {s_i e_i}` with every member
/// charged by some atom. Bit `i` set means `s_i = -1`.
pub fn check_condition_ddim(law: &EnvironmentLaw) -> Option<Vec<Direction>> {
    let d = law.dim;
    (0..1usize << d)
        .map(|bits| {
            (0..d)
                .map(|i| Direction::new(i, if bits >> i & 1 == 1 { -1 } else { 1 }))
                .collect::<Vec<_>>()
        })
        .find(|v| v.iter().all(|&e| law.support_weight(e) > 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> Direction {
        s.parse().unwrap()
    }

    fn orthant(p: f64) -> EnvironmentLaw {
        Preset::Orthant2d { p }.law().unwrap()
    }

    #[test]
    fn make_site_law_examples() {
        let law = make_site_law(2, &[(d("+e1"), 0.5), (d("+e2"), 0.5)]).unwrap();
        assert_eq!(law.support(), vec![d("+e1"), d("+e2")]);
        let east = make_site_law(2, &[(d("+e1"), 1.0)]).unwrap();
        assert_eq!(east.prob(d("+e1")), 1.0);
        assert!(matches!(
            make_site_law(2, &[(d("+e1"), 0.3), (d("-e1"), 0.8)]),
            Err(Error::SumOutOfTolerance { .. })
        ));
        assert!(matches!(
            make_site_law(2, &[(d("+e1"), -0.1), (d("-e1"), 1.1)]),
            Err(Error::NegativeWeight { .. })
        ));
        assert_eq!(make_site_law(2, &[]), Err(Error::EmptySupport));
        assert!(matches!(
            make_site_law(2, &[(d("+e3"), 1.0)]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn renormalization_is_exact_enough() {
        let law = make_site_law(
            2,
            &[(d("+e1"), 0.1 + 1e-10), (d("+e2"), 0.2), (d("-e1"), 0.7)],
        )
        .unwrap();
        let s: f64 = law.probs().iter().sum();
        assert!((s - 1.0).abs() <= SUM_TOLERANCE);
    }

    #[test]
    fn uniform_site_law_examples() {
        let l = uniform_site_law(2, &[d("+e1"), d("+e2")]).unwrap();
        assert_eq!(l.probs(), &[0.5, 0.0, 0.5, 0.0]);
        let l = uniform_site_law(2, &[d("+e1")]).unwrap();
        assert_eq!(l.probs(), &[1.0, 0.0, 0.0, 0.0]);
        let all: Vec<_> = Direction::all(2).collect();
        let l = uniform_site_law(2, &all).unwrap();
        assert_eq!(l.probs(), &[0.25; 4]);
        assert_eq!(uniform_site_law(2, &[]), Err(Error::EmptySupport));
    }

    #[test]
    fn presets() {
        let law = orthant(0.6);
        assert_eq!(law.atoms().len(), 2);
        assert_eq!(law.atoms()[0].law.support(), vec![d("+e1"), d("+e2")]);
        assert_eq!(law.atoms()[1].law.support(), vec![d("-e1"), d("-e2")]);
        assert!((law.atoms()[0].weight - 0.6).abs() < 1e-15);

        let law = orthant(1.0);
        assert_eq!(law.atoms().len(), 1);
        assert_eq!(law.atoms()[0].law.support(), vec![d("+e1"), d("+e2")]);

        let law = Preset::ModifiedOrthant {
            p: 0.8,
            eps: 0.1,
            delta: 0.1,
        }
        .law()
        .unwrap();
        assert_eq!(law.atoms().len(), 2);
        assert!(law.is_elliptic());
        assert!(law.atoms().iter().all(|a| a.law.probs().iter().all(|&p| p > 0.0)));

        let law = Preset::EastNsw { p: 0.7 }.law().unwrap();
        let g2 = &law.atoms()[1].law;
        assert!((g2.prob(d("-e1")) - 1.0 / 3.0).abs() < 1e-15);

        let law = Preset::EplusGeneral { d: 3, p: 0.5 }.law().unwrap();
        assert_eq!(law.dim(), 3);
        assert!(law.atoms()[0].law.is_forward_only());
        assert!(law.atoms()[1].law.is_elliptic());
    }

    #[test]
    fn speed_zero_normalization() {
        let law = Preset::SpeedZero { p: 0.4, i_max: 8 }.law().unwrap();
        assert_eq!(law.atoms().len(), 9);
        let traps: f64 = law.atoms()[1..].iter().map(|a| a.weight).sum();
        assert!((traps - 0.6).abs() < 1e-12);
        let w1 = law.atoms()[1].weight;
        let w2 = law.atoms()[2].weight;
        assert!((w1 / w2 - 4.0).abs() < 1e-12);
        let g3 = &law.atoms()[3].law;
        assert!((g3.prob(d("-e1")) - 0.875).abs() < 1e-15);
        assert!((g3.prob(d("+e2")) - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn preset_errors() {
        let mut params = BTreeMap::new();
        params.insert("p".to_string(), 1.5);
        assert!(matches!(
            model_preset("orthant2d", &params),
            Err(Error::ParamOutOfRange { .. })
        ));
        assert!(matches!(
            model_preset("nope", &params),
            Err(Error::UnknownPreset(_))
        ));
        params.insert("p".to_string(), 0.5);
        params.insert("eps".to_string(), 0.5);
        params.insert("delta".to_string(), 0.1);
        assert!(matches!(
            model_preset("modified_orthant", &params),
            Err(Error::ParamOutOfRange { .. })
        ));
        params.insert("i_max".to_string(), 0.0);
        assert!(matches!(
            model_preset("speed_zero", &params),
            Err(Error::ParamOutOfRange { .. })
        ));
    }

    #[test]
    fn preset_json_roundtrip() {
        let p: Preset = serde_json::from_str(r#"{"name":"modified_orthant","p":0.8,"eps":0.1,"delta":0.2}"#).unwrap();
        assert_eq!(
            p,
            Preset::ModifiedOrthant {
                p: 0.8,
                eps: 0.1,
                delta: 0.2
            }
        );
        let back: Preset = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<Preset>(r#"{"name":"orthant2d","p":2}"#).is_err());
    }

    #[test]
    fn law_json_roundtrip() {
        let law = Preset::SpeedZero { p: 0.3, i_max: 3 }.law().unwrap();
        let json = law.to_json();
        let back: EnvironmentLaw = serde_json::from_str(&json).unwrap();
        assert_eq!(back.dim(), 2);
        assert_eq!(back.atoms().len(), law.atoms().len());
        for (a, b) in back.atoms().iter().zip(law.atoms()) {
            assert!((a.weight - b.weight).abs() < 1e-15);
            assert_eq!(a.law.support(), b.law.support());
        }
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(v["atoms"][0]["weights"]["+e1"].is_number());
    }

    #[test]
    fn site_environment_is_pure_and_p1_is_ne() {
        let h = EnvironmentHandle::new(orthant(0.6), 42);
        let x = Site::from_coords(&[3, -7]);
        assert_eq!(h.site_environment(&x), h.site_environment(&x));
        let h1 = EnvironmentHandle::new(orthant(1.0), 42);
        for i in -5..5 {
            let x = Site::from_coords(&[i, 2 * i]);
            assert_eq!(h1.site_environment(&x).support(), vec![d("+e1"), d("+e2")]);
        }
    }

    #[test]
    fn coupling_monotone_in_p() {
        for seed in 0..100u64 {
            let lo = EnvironmentHandle::new(orthant(0.6), seed);
            let hi = EnvironmentHandle::new(orthant(0.8), seed);
            for x in -25..25 {
                for y in -25..25 {
                    let s = Site::from_coords(&[x, y]);
                    if lo.atom_index(&s) == 0 {
                        assert_eq!(hi.atom_index(&s), 0);
                    }
                }
            }
        }
    }

    #[test]
    fn atom_frequencies_match_weights() {
        let law = Preset::SpeedZero { p: 0.5, i_max: 3 }.law().unwrap();
        let h = EnvironmentHandle::new(law.clone(), 9);
        let mut counts = vec![0usize; law.atoms().len()];
        let side = 300;
        for x in 0..side {
            for y in 0..side {
                counts[h.atom_index(&Site::from_coords(&[x, y]))] += 1;
            }
        }
        let n = (side * side) as f64;
        for (c, a) in counts.iter().zip(law.atoms()) {
            let w = a.weight;
            let tol = 4.0 * (w * (1.0 - w) / n).sqrt();
            assert!((*c as f64 / n - w).abs() <= tol, "{c} vs {w}");
        }
    }

    #[test]
    fn condition_orthogonal_examples() {
        for p in [0.2, 0.6, 0.9] {
            assert_eq!(
                check_condition_orthogonal(&orthant(p)),
                Some(vec![d("-e1"), d("+e2")])
            );
        }
        let law = EnvironmentLaw::new(
            2,
            vec![
                Atom {
                    law: uniform_site_law(2, &[d("+e1")]).unwrap(),
                    weight: 0.5,
                },
                Atom {
                    law: uniform_site_law(2, &[d("-e1")]).unwrap(),
                    weight: 0.5,
                },
            ],
            None,
        )
        .unwrap();
        assert_eq!(check_condition_orthogonal(&law), None);
        let all: Vec<_> = Direction::all(2).collect();
        let law = EnvironmentLaw::new(
            2,
            vec![Atom {
                law: uniform_site_law(2, &all).unwrap(),
                weight: 1.0,
            }],
            None,
        )
        .unwrap();
        assert_eq!(check_condition_orthogonal(&law), Some(vec![d("+e1")]));
    }

    /// Brute force over all subsets of E for the two-atom {+e1}/{-e1} law.
    #[test]
    fn condition_orthogonal_none_by_exhaustion() {
        let supports = [vec![d("+e1")], vec![d("-e1")]];
        let dirs: Vec<Direction> = Direction::all(2).collect();
        for mask in 1u32..16 {
            let v: Vec<Direction> = (0..4).filter(|i| mask >> i & 1 == 1).map(|i| dirs[i]).collect();
            let orthogonal = v
                .iter()
                .all(|a| v.iter().all(|b| a == b || a.axis() != b.axis()));
            let hits_all = supports.iter().all(|s| s.iter().any(|e| v.contains(e)));
            assert!(!(orthogonal && hits_all));
        }
    }

    #[test]
    fn condition_ddim_examples() {
        assert_eq!(check_condition_ddim(&orthant(0.6)), Some(vec![d("+e1"), d("+e2")]));
        let en = Preset::EastNsw { p: 0.4 }.law().unwrap();
        assert_eq!(check_condition_ddim(&en), Some(vec![d("+e1"), d("+e2")]));
        let law = EnvironmentLaw::new(
            2,
            vec![Atom {
                law: uniform_site_law(2, &[d("+e1"), d("-e1")]).unwrap(),
                weight: 1.0,
            }],
            None,
        )
        .unwrap();
        assert_eq!(check_condition_ddim(&law), None);
    }

    #[test]
    fn local_bias_examples() {
        let ne = uniform_site_law(2, &[d("+e1"), d("+e2")]).unwrap();
        assert_eq!(local_bias(&ne), vec![0.5, 0.5]);
        let nsw = uniform_site_law(2, &[d("-e1"), d("+e2"), d("-e2")]).unwrap();
        let b = local_bias(&nsw);
        assert!((b[0] + 1.0 / 3.0).abs() < 1e-15 && b[1] == 0.0);
        let all: Vec<_> = Direction::all(3).collect();
        assert_eq!(local_bias(&uniform_site_law(3, &all).unwrap()), vec![0.0; 3]);
    }
}
