//! Regeneration structure of a directionally transient walk, and the speed,
//! covariance and CLT estimators built on it.
//!
//! For a unit direction `ℓ` and the projected path `s_n = X_n · ℓ`:
//!
//! ```text
//! T_0 = M_0 = 0,   D_0 = inf{n > 0 : s_n < 0},   T_1 = inf{n : s_n >= 1}
//! D_k     = inf{n > T_k : s_n < s_{T_k}}
//! M_k     = sup{s_n : n <= D_k}                    (if D_k < inf)
//! T_{k+1} = inf{n > D_k : s_n >= M_k + 1}
//! K       = inf{k >= 1 : D_k = inf},   regeneration time = T_K
//! ```
//!
//! Later regenerations apply the same recursion to the path shifted to the
//! previous regeneration time. On finite data `D_k = inf` is declared once the
//! walk reaches `s_{T_k} + guard` without dipping below `s_{T_k}`; a search
//! still undecided at the horizon yields one censored record.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{self, Site};
use crate::stats;
use crate::walk::Trajectory;

pub const DEFAULT_INFINITY_GUARD: f64 = 50.0;
const LEVEL_EPS: f64 = 1e-9;

/// Outcome of the backtrack search started at `T_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Backtrack {
    /// `D_k < inf`: first time below `s_{T_k}`.
    Finite(usize),
    /// `D_k` declared infinite at the given time (guard level reached).
    Confirmed(usize),
    /// Horizon reached before either event.
    Pending,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Attempt {
    /// `T_k`.
    pub t: usize,
    /// `D_k`.
    pub d: Backtrack,
    /// `M_k`, defined when `D_k` is finite.
    pub m: Option<f64>,
}

/// One regeneration search, from the previous regeneration (or time 0).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Epoch {
    pub start: usize,
    pub attempts: Vec<Attempt>,
    /// `T_K` when the search succeeded.
    pub regeneration: Option<usize>,
}

impl Epoch {
    /// `K`, if the epoch regenerated.
    pub fn k(&self) -> Option<usize> {
        self.regeneration.map(|_| self.attempts.len())
    }
}

/// Runs the recursion on a projected series. `guard` must be positive.
pub fn regeneration_trace(series: &[f64], guard: f64) -> Vec<Epoch> {
    let horizon = series.len() - 1;
    let mut epochs = Vec::new();
    let mut start = 0;
    loop {
        let epoch = scan_epoch(series, start, guard);
        let next = epoch.regeneration;
        epochs.push(epoch);
        match next {
            Some(t) if t < horizon => start = t,
            _ => break,
        }
    }
    epochs
}

fn first_at_or_above(series: &[f64], from: usize, level: f64) -> Option<usize> {
    (from..series.len()).find(|&n| series[n] >= level - LEVEL_EPS)
}

fn scan_epoch(series: &[f64], start: usize, guard: f64) -> Epoch {
    let base = series[start];
    let mut attempts = Vec::new();
    let mut next_t = first_at_or_above(series, start, base + 1.0);
    while let Some(t) = next_t {
        let level = series[t];
        let mut outcome = Backtrack::Pending;
        let mut running_max = level;
        for (n, &s) in series.iter().enumerate().skip(t + 1) {
            if s < level - LEVEL_EPS {
                outcome = Backtrack::Finite(n);
                break;
            }
            if s >= level + guard - LEVEL_EPS {
                outcome = Backtrack::Confirmed(n);
                break;
            }
            running_max = running_max.max(s);
        }
        match outcome {
            Backtrack::Finite(d) => {
                // s_t is a running maximum of the shifted path, so the sup over
                // n <= D_k equals the sup over [t, D_k].
                let m = running_max;
                attempts.push(Attempt { t, d: outcome, m: Some(m) });
                next_t = first_at_or_above(series, d + 1, m + 1.0);
            }
            Backtrack::Confirmed(_) => {
                attempts.push(Attempt { t, d: outcome, m: None });
                return Epoch {
                    start,
                    attempts,
                    regeneration: Some(t),
                };
            }
            Backtrack::Pending => {
                attempts.push(Attempt { t, d: outcome, m: None });
                break;
            }
        }
    }
    Epoch {
        start,
        attempts,
        regeneration: None,
    }
}

/// One cycle between consecutive regeneration times. Cycle 0 runs from time
/// 0 to the first regeneration and has a different law from the rest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegenRecord {
    pub cycle_index: usize,
    pub tau_gap: usize,
    pub displacement: Vec<i64>,
    pub censored: bool,
    /// Backtrack searches used (`K` for an uncensored cycle).
    pub attempts: usize,
    /// Time at which the cycle starts.
    pub start: usize,
    /// The cycle starts inside the estimation window.
    pub in_window: bool,
}

impl RegenRecord {
    /// Complete cycle after the first, starting inside the window.
    pub fn usable(&self) -> bool {
        !self.censored && self.cycle_index >= 1 && self.in_window
    }
}

/// Cycles used by the estimators must start by this fraction of the horizon.
///
/// Keeping every complete cycle would favour short ones: a long cycle is
/// the one most likely to be cut off by the horizon, and long cycles are
/// slow. Selecting on the start time instead is a stopping rule for the
/// i.i.d. cycle sequence, so the ratio estimators stay consistent; cycles
/// that start in the window but are still open at the horizon are counted
/// in `late_censored`.
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.75;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegenSummary {
    pub records: Vec<RegenRecord>,
    /// Pooled fraction of decided backtrack searches that never returned.
    pub q_hat: Option<f64>,
    pub decided_attempts: usize,
    pub confirmed_attempts: usize,
    pub horizon: usize,
    pub direction: Vec<f64>,
    pub guard: f64,
    pub trajectories: usize,
    /// Steps spent in censored cycles, summed over trajectories.
    pub censored_steps: usize,
    /// Censored cycles (after the first) that started inside the window.
    pub late_censored: usize,
}

impl RegenSummary {
    /// Concatenates another summary's records; counts add.
    pub fn merge(&mut self, other: RegenSummary) {
        self.records.extend(other.records);
        self.decided_attempts += other.decided_attempts;
        self.confirmed_attempts += other.confirmed_attempts;
        self.trajectories += other.trajectories;
        self.censored_steps += other.censored_steps;
        self.late_censored += other.late_censored;
        self.horizon = self.horizon.max(other.horizon);
        self.q_hat = q_ratio(self.confirmed_attempts, self.decided_attempts);
    }

    pub fn merged(mut summaries: impl Iterator<Item = RegenSummary>) -> Option<RegenSummary> {
        let mut acc = summaries.next()?;
        for s in summaries {
            acc.merge(s);
        }
        Some(acc)
    }

    pub fn usable(&self) -> impl Iterator<Item = &RegenRecord> {
        self.records.iter().filter(|r| r.usable())
    }

    /// Fraction of simulated time spent in censored cycles.
    pub fn censor_rate(&self) -> f64 {
        self.censored_steps as f64 / (self.horizon * self.trajectories).max(1) as f64
    }

    /// CSV with columns `cycle_index,tau_gap,disp_1..disp_d,censored`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let d = self.direction.len();
        let mut header = vec!["cycle_index".to_string(), "tau_gap".to_string()];
        header.extend((1..=d).map(|i| format!("disp_{i}")));
        header.push("censored".into());
        writeln!(out, "{}", header.join(","))?;
        for r in &self.records {
            let disp: Vec<String> = r.displacement.iter().map(|x| x.to_string()).collect();
            writeln!(
                out,
                "{},{},{},{}",
                r.cycle_index,
                r.tau_gap,
                disp.join(","),
                r.censored as u8
            )?;
        }
        Ok(())
    }
}

fn q_ratio(confirmed: usize, decided: usize) -> Option<f64> {
    (decided > 0).then(|| confirmed as f64 / decided as f64)
}

/// Extracts regeneration cycles in direction `ell` (normalized internally).
pub fn extract_regenerations(t: &Trajectory, ell: &[f64], infinity_guard: f64) -> Result<RegenSummary> {
    extract_regenerations_windowed(t, ell, infinity_guard, DEFAULT_WINDOW_FRACTION)
}

pub fn extract_regenerations_windowed(
    t: &Trajectory,
    ell: &[f64],
    infinity_guard: f64,
    window_fraction: f64,
) -> Result<RegenSummary> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::ParamOutOfRange {
            name: "window_fraction".into(),
            value: window_fraction,
        });
    }
    if ell.len() != t.dim() {
        return Err(Error::DimensionMismatch {
            expected: t.dim(),
            got: ell.len(),
        });
    }
    let unit = lattice::normalized(ell).ok_or(Error::DirectionZero)?;
    if !(infinity_guard > 0.0) {
        return Err(Error::ParamOutOfRange {
            name: "infinity_guard".into(),
            value: infinity_guard,
        });
    }
    let series: Vec<f64> = t.positions.iter().map(|x| x.dot(&unit)).collect();
    let epochs = regeneration_trace(&series, infinity_guard);
    let horizon = t.steps();
    let window_end = (window_fraction * horizon as f64).floor() as usize;

    let mut records = Vec::new();
    let mut decided = 0;
    let mut confirmed = 0;
    let mut censored_steps = 0;
    let mut late_censored = 0;
    for (j, e) in epochs.iter().enumerate() {
        for a in &e.attempts {
            match a.d {
                Backtrack::Finite(_) => decided += 1,
                Backtrack::Confirmed(_) => {
                    decided += 1;
                    confirmed += 1
                }
                Backtrack::Pending => {}
            }
        }
        let (end, censored) = match e.regeneration {
            Some(r) => (r, false),
            None => (horizon, true),
        };
        if end > e.start {
            let in_window = e.start <= window_end;
            if censored {
                censored_steps += end - e.start;
                late_censored += (in_window && j >= 1) as usize;
            }
            records.push(RegenRecord {
                cycle_index: j,
                tau_gap: end - e.start,
                displacement: t.positions[end].sub(&t.positions[e.start]),
                censored,
                attempts: e.attempts.len(),
                start: e.start,
                in_window,
            });
        }
    }
    Ok(RegenSummary {
        records,
        q_hat: q_ratio(confirmed, decided),
        decided_attempts: decided,
        confirmed_attempts: confirmed,
        horizon,
        direction: unit,
        guard: infinity_guard,
        trajectories: 1,
        censored_steps,
        late_censored,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

fn usable_pairs(s: &RegenSummary) -> (Vec<f64>, Vec<f64>) {
    s.usable()
        .map(|r| {
            let proj: f64 = r
                .displacement
                .iter()
                .zip(&s.direction)
                .map(|(a, b)| *a as f64 * b)
                .sum();
            (proj, r.tau_gap as f64)
        })
        .unzip()
}

/// `v·ℓ = E[disp·ℓ] / E[tau_gap]` over uncensored cycles after the first,
/// with a delta-method standard error.
pub fn estimate_speed_regen(s: &RegenSummary) -> Result<Estimate> {
    let (x, y) = usable_pairs(s);
    if x.len() < 2 {
        return Err(Error::InsufficientRecords {
            needed: 2,
            have: x.len(),
        });
    }
    let (value, se) = stats::ratio_of_means(&x, &y);
    Ok(Estimate { value, se })
}

/// Same ratio with a nonparametric bootstrap standard error over cycles.
pub fn estimate_speed_regen_bootstrap(s: &RegenSummary, resamples: usize, seed: u64) -> Result<Estimate> {
    let (x, y) = usable_pairs(s);
    if x.len() < 2 {
        return Err(Error::InsufficientRecords {
            needed: 2,
            have: x.len(),
        });
    }
    let value = stats::mean(&x) / stats::mean(&y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.len();
    let draws: Vec<f64> = (0..resamples.max(2))
        .map(|_| {
            let (mut sx, mut sy) = (0.0, 0.0);
            for _ in 0..n {
                let i = rng.random_range(0..n);
                sx += x[i];
                sy += y[i];
            }
            sx / sy
        })
        .collect();
    Ok(Estimate {
        value,
        se: stats::sample_variance(&draws).sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VectorEstimate {
    pub value: Vec<f64>,
    pub se: Vec<f64>,
}

/// Mean of `X_n / n` over replicate endpoints.
pub fn speed_from_endpoints(endpoints: &[Site], n: usize) -> Result<VectorEstimate> {
    if endpoints.len() < 2 {
        return Err(Error::InsufficientRecords {
            needed: 2,
            have: endpoints.len(),
        });
    }
    let d = endpoints[0].dim();
    let (value, se) = (0..d)
        .map(|i| {
            let xs: Vec<f64> = endpoints
                .iter()
                .map(|x| x.coord(i) as f64 / n as f64)
                .collect();
            stats::mean_se(&xs)
        })
        .unzip();
    Ok(VectorEstimate { value, se })
}

pub fn estimate_speed_direct(trajectories: &[Trajectory]) -> Result<VectorEstimate> {
    let n = trajectories.first().map_or(0, |t| t.steps());
    if trajectories.iter().any(|t| t.steps() != n) {
        return Err(Error::ParamOutOfRange {
            name: "common horizon".into(),
            value: n as f64,
        });
    }
    let ends: Vec<Site> = trajectories.iter().map(|t| t.endpoint()).collect();
    speed_from_endpoints(&ends, n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    /// Entrywise standard errors.
    pub se: DMatrix<f64>,
    pub samples: usize,
}

pub const MIN_COVARIANCE_SAMPLES: usize = 30;

/// Regeneration-block estimator: sample covariance of `disp - v·tau_gap`
/// over usable cycles, divided by the mean cycle length.
pub fn covariance_regen(s: &RegenSummary, v: &[f64]) -> Result<CovarianceEstimate> {
    let usable: Vec<&RegenRecord> = s.usable().collect();
    if usable.len() < MIN_COVARIANCE_SAMPLES {
        return Err(Error::InsufficientRecords {
            needed: MIN_COVARIANCE_SAMPLES,
            have: usable.len(),
        });
    }
    let d = v.len();
    let gaps: Vec<f64> = usable.iter().map(|r| r.tau_gap as f64).collect();
    let z: Vec<Vec<f64>> = usable
        .iter()
        .map(|r| {
            (0..d)
                .map(|i| r.displacement[i] as f64 - v[i] * r.tau_gap as f64)
                .collect()
        })
        .collect();
    let n = z.len() as f64;
    let means: Vec<f64> = (0..d).map(|i| z.iter().map(|zz| zz[i]).sum::<f64>() / n).collect();
    let mut m = DMatrix::zeros(d, d);
    let mut se = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let prods: Vec<f64> = z
                .iter()
                .map(|zz| (zz[i] - means[i]) * (zz[j] - means[j]) * n / (n - 1.0))
                .collect();
            let (r, e) = stats::ratio_of_means(&prods, &gaps);
            m[(i, j)] = r;
            se[(i, j)] = e;
        }
    }
    Ok(CovarianceEstimate {
        matrix: project_psd(&m),
        se,
        samples: usable.len(),
    })
}

/// Batch-means estimator: second moments of `(X_n - v n) / sqrt(n)` over
/// replicate endpoints.
pub fn covariance_batch(endpoints: &[Site], n: usize, v: &[f64]) -> Result<CovarianceEstimate> {
    if endpoints.len() < MIN_COVARIANCE_SAMPLES {
        return Err(Error::InsufficientRecords {
            needed: MIN_COVARIANCE_SAMPLES,
            have: endpoints.len(),
        });
    }
    let d = v.len();
    let ys = scaled_fluctuations(endpoints, n, v);
    let mut m = DMatrix::zeros(d, d);
    let mut se = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let prods: Vec<f64> = ys.iter().map(|y| y[i] * y[j]).collect();
            let (mean, e) = stats::mean_se(&prods);
            m[(i, j)] = mean;
            se[(i, j)] = e;
        }
    }
    Ok(CovarianceEstimate {
        matrix: project_psd(&m),
        se,
        samples: endpoints.len(),
    })
}

fn scaled_fluctuations(endpoints: &[Site], n: usize, v: &[f64]) -> Vec<Vec<f64>> {
    let sn = (n as f64).sqrt();
    endpoints
        .iter()
        .map(|x| {
            (0..v.len())
                .map(|i| (x.coord(i) as f64 - v[i] * n as f64) / sn)
                .collect()
        })
        .collect()
}

/// Symmetrizes and clips negative eigenvalues to zero.
pub fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct MarginalFit {
    pub direction: Vec<f64>,
    pub eigenvalue: f64,
    pub ks_distance: f64,
    pub p_value: f64,
    pub critical_1pct: f64,
    pub critical_5pct: f64,
    /// Sample variance of the standardized values (1 under the fitted Σ).
    pub variance_ratio: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CltDiagnostic {
    pub rank: usize,
    pub marginals: Vec<MarginalFit>,
}

impl CltDiagnostic {
    pub fn passes(&self, alpha: f64) -> bool {
        self.marginals.iter().all(|m| m.p_value > alpha)
    }
}

/// Standardizes `(X_n - v n)/sqrt(n)` along each principal axis of `sigma`
/// with a nonnegligible eigenvalue and compares each marginal with N(0, 1).
pub fn clt_diagnostic(endpoints: &[Site], n: usize, v: &[f64], sigma: &DMatrix<f64>) -> Result<CltDiagnostic> {
    let eig = SymmetricEigen::new((sigma + sigma.transpose()) * 0.5);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let ys = scaled_fluctuations(endpoints, n, v);
    let mut axes: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .filter(|(l, _)| **l > 1e-12 && **l > 1e-9 * lmax)
        .map(|(l, c)| (*l, c.into_owned()))
        .collect();
    if axes.is_empty() {
        return Err(Error::SingularCovariance);
    }
    axes.sort_by(|a, b| b.0.total_cmp(&a.0));
    let count = ys.len();
    let marginals = axes
        .iter()
        .map(|(l, dir)| {
            let z: Vec<f64> = ys
                .iter()
                .map(|y| y.iter().zip(dir.iter()).map(|(a, b)| a * b).sum::<f64>() / l.sqrt())
                .collect();
            let ks = stats::ks_distance_normal(&z);
            let second: f64 = z.iter().map(|x| x * x).sum::<f64>() / count as f64;
            MarginalFit {
                direction: dir.iter().cloned().collect(),
                eigenvalue: *l,
                ks_distance: ks,
                p_value: stats::kolmogorov_pvalue(ks, count),
                critical_1pct: stats::ks_critical(count, 0.01),
                critical_5pct: stats::ks_critical(count, 0.05),
                variance_ratio: second,
            }
        })
        .collect();
    Ok(CltDiagnostic {
        rank: axes.len(),
        marginals,
    })
}
