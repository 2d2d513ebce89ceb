//! The quenched walk and its path functionals.

use std::collections::HashSet;
use std::io::{self, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::{check_condition_orthogonal, EnvironmentHandle, EnvironmentLaw};
use crate::error::{Error, Result};
use crate::lattice::{Direction, Site};
use crate::seed::walk_rng;

/// Walk positions `X_0 = o, X_1, ..., X_n` with the seeds that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub positions: Vec<Site>,
    pub env_seed: u64,
    pub walk_seed: u64,
    pub law_id: String,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.positions[0].dim()
    }

    pub fn endpoint(&self) -> Site {
        *self.positions.last().unwrap()
    }

    /// CSV with columns `step,x1..xd`, keeping every `stride`-th row and
    /// always the last one.
    pub fn write_csv<W: Write>(&self, mut out: W, stride: usize) -> io::Result<()> {
        let stride = stride.max(1);
        let d = self.dim();
        let header: Vec<String> = std::iter::once("step".to_string())
            .chain((1..=d).map(|i| format!("x{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        let last = self.steps();
        for (k, x) in self.positions.iter().enumerate() {
            if k % stride == 0 || k == last {
                let coords: Vec<String> = x.coords().iter().map(|c| c.to_string()).collect();
                writeln!(out, "{k},{}", coords.join(","))?;
            }
        }
        Ok(())
    }
}

/// Streaming walker: one environment, one step-uniform stream.
pub struct Walker<'a> {
    env: &'a EnvironmentHandle,
    rng: ChaCha8Rng,
    position: Site,
    last_step: Option<Direction>,
}

impl<'a> Walker<'a> {
    pub fn new(env: &'a EnvironmentHandle, walk_seed: u64) -> Self {
        Self {
            env,
            rng: walk_rng(walk_seed),
            position: Site::origin(env.dim()),
            last_step: None,
        }
    }

    pub fn position(&self) -> Site {
        self.position
    }

    /// Atom index of the environment at the current position.
    pub fn current_atom(&self) -> usize {
        self.env.atom_index(&self.position)
    }

    pub fn last_step(&self) -> Option<Direction> {
        self.last_step
    }

    #[inline]
    pub fn step(&mut self) -> Site {
        let law = self.env.site_environment(&self.position);
        let u: f64 = self.rng.random();
        let dir = law.sample(u);
        debug_assert!(law.prob(dir) > 0.0, "illegal step {dir} at {:?}", self.position);
        self.last_step = Some(dir);
        self.position = self.position.step(dir);
        self.position
    }
}

/// Runs `n_steps` of the quenched walk in the environment `(law, env_seed)`.
///
/// Annealed replicates vary `env_seed`; quenched replicates fix it and vary
/// `walk_seed`.
pub fn run_walk(law: &EnvironmentLaw, env_seed: u64, walk_seed: u64, n_steps: usize) -> Trajectory {
    if check_condition_orthogonal(law).is_none() {
        log::warn!(
            "law {} has no orthogonal set met by every atom; the walk may be trapped",
            law.label()
        );
    }
    let env = EnvironmentHandle::new(law.clone(), env_seed);
    let mut walker = Walker::new(&env, walk_seed);
    let mut positions = Vec::with_capacity(n_steps + 1);
    positions.push(walker.position());
    for _ in 0..n_steps {
        positions.push(walker.step());
    }
    Trajectory {
        positions,
        env_seed,
        walk_seed,
        law_id: law.label().to_string(),
    }
}

/// Incremental distinct-site counter, memory `O(R_n)`.
#[derive(Default)]
pub struct RangeCounter {
    seen: HashSet<Site>,
}

impl RangeCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a visit; returns the current range.
    pub fn visit(&mut self, x: Site) -> usize {
        self.seen.insert(x);
        self.seen.len()
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

/// `R_n`: number of distinct sites visited up to the last step.
pub fn range_count(t: &Trajectory) -> usize {
    let mut rc = RangeCounter::new();
    for &x in &t.positions {
        rc.visit(x);
    }
    rc.len()
}

/// `X'_k = X_k · ℓ'`.
pub fn transverse_series(t: &Trajectory, ell: &[f64]) -> Result<Vec<f64>> {
    if ell.len() != t.dim() {
        return Err(Error::DimensionMismatch {
            expected: t.dim(),
            got: ell.len(),
        });
    }
    if ell.iter().all(|&c| c == 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok(t.positions.iter().map(|x| x.dot(ell)).collect())
}

/// Prefix maxima of `|x_k|`.
pub fn running_max_abs(series: &[f64]) -> Vec<f64> {
    series
        .iter()
        .scan(0.0f64, |m, &x| {
            *m = m.max(x.abs());
            Some(*m)
        })
        .collect()
}
