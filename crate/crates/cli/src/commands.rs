use std::io::Write;

use rayon::prelude::*;
use rwre_core::ballistic::{
    classify_transverse, kalikow_closed_form, kalikow_numeric, kalikow_threshold, martingale_range_probe,
    range_growth_probe, DecayTable, KalikowOptions,
};
use rwre_core::cluster::{estimate_cone_probability, write_cone_csv};
use rwre_core::env::{check_condition_ddim, check_condition_orthogonal, local_bias};
use rwre_core::otsp::{estimate_pc_otsp, write_crossing_csv};
use rwre_core::regen::{
    clt_diagnostic, covariance_batch, covariance_regen, estimate_speed_regen, estimate_speed_regen_bootstrap,
    extract_regenerations_windowed, speed_from_endpoints, CovarianceEstimate, RegenSummary,
};
use rwre_core::saw::{saw_table, write_saw_csv};
use rwre_core::seed::replicate_seeds;
use rwre_core::stats::{self, binomial_band, lag1_autocorrelation, mean_se};
use rwre_core::walk::{RangeCounter, Walker};
use rwre_core::{run_walk, Direction, EnvironmentHandle, EnvironmentLaw, Error, Preset, Site};
use serde_json::{json, Map, Value};

use crate::config::{Command, ExperimentConfig};
use crate::{CliError, Result, Sink};

/// Two-sided 99% normal quantile, for the K-geometric bands.
const Z_99: f64 = 2.5758293035489;

pub(crate) fn dispatch(cmd: Command, cfg: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    match cmd {
        Command::VelocityScan => velocity_scan(cfg, sink),
        Command::Simulate => simulate(cfg, sink),
        Command::Regen => regen(cfg, sink),
        Command::Cone => cone(cfg, sink),
        Command::OtspPc => otsp_pc(cfg, sink),
        Command::Saw => saw(cfg, sink),
        Command::Kalikow => kalikow(cfg, sink),
        Command::Diagnose => diagnose(cfg, sink),
        Command::MartingaleProbe => martingale_probe(cfg, sink),
        Command::RangeProbe => range_probe(cfg, sink),
    }
}

// `resolve` fills every key a command reads, so these only fail on a bug.
fn need<T: Clone>(v: &Option<T>, key: &str) -> Result<T> {
    v.clone().ok_or_else(|| CliError::Config(format!("missing `{key}`")))
}

fn obj(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("json! object literal"),
    }
}

fn dirs(v: &Option<Vec<Direction>>) -> Value {
    match v {
        Some(v) => json!(v.iter().map(|d| d.to_string()).collect::<Vec<_>>()),
        None => Value::Null,
    }
}

/// Estimate and entrywise standard errors as nested rows.
fn covariance_rows(c: &CovarianceEstimate) -> (Value, Value) {
    let d = c.matrix.nrows();
    let rows = |f: &dyn Fn(usize, usize) -> f64| -> Value {
        json!((0..d).map(|i| (0..d).map(|j| f(i, j)).collect::<Vec<_>>()).collect::<Vec<_>>())
    };
    (rows(&|i, j| c.matrix[(i, j)]), rows(&|i, j| c.se[(i, j)]))
}

/// Endpoint and range of replicate `r` after `n` steps.
fn walk_replicate(law: &EnvironmentLaw, master: u64, r: u64, n: usize, stride: usize) -> (Site, usize, Vec<Site>) {
    let (env_seed, walk_seed) = replicate_seeds(master, r);
    let env = EnvironmentHandle::new(law.clone(), env_seed);
    let mut walker = Walker::new(&env, walk_seed);
    let mut range = RangeCounter::new();
    let mut x = walker.position();
    range.visit(x);
    let mut kept = Vec::new();
    if stride > 0 {
        kept.push(x);
    }
    for k in 1..=n {
        x = walker.step();
        range.visit(x);
        if stride > 0 && k % stride == 0 {
            kept.push(x);
        }
    }
    (x, range.len(), kept)
}

fn endpoint(law: &EnvironmentLaw, master: u64, r: u64, n: usize) -> Site {
    let (env_seed, walk_seed) = replicate_seeds(master, r);
    let env = EnvironmentHandle::new(law.clone(), env_seed);
    let mut walker = Walker::new(&env, walk_seed);
    let mut x = walker.position();
    for _ in 0..n {
        x = walker.step();
    }
    x
}

fn check_p(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::ParamOutOfRange { name: "p".into(), value: p }.into())
    }
}

fn velocity_scan(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let model = cfg.model()?;
    let grid = need(&cfg.p_grid, "p_grid")?;
    let (seed, reps, n) = (need(&cfg.seed, "seed")?, need(&cfg.replicates, "replicates")?, need(&cfg.steps, "steps")?);
    if n == 0 {
        return Err(CliError::Config("steps must be at least 1".into()));
    }
    let mut laws = Vec::new();
    for &p in &grid {
        check_p(p)?;
        laws.push(model.with_p(p).law()?);
    }
    let d = laws[0].dim();
    let mut rows = Vec::new();
    for (&p, law) in grid.iter().zip(&laws) {
        // Replicate r uses the same seeds at every p: coupled curves.
        let ends: Vec<Site> = (0..reps as u64).into_par_iter().map(|r| endpoint(law, seed, r, n)).collect();
        let v = speed_from_endpoints(&ends, n)?;
        let sums: Vec<f64> = ends
            .iter()
            .map(|x| x.coords().iter().map(|&c| c as f64).sum::<f64>() / n as f64)
            .collect();
        let (dot, se) = mean_se(&sums);
        rows.push((p, dot, se, v.value));
    }
    let mut header = vec!["p".to_string(), "v_dot_ones".into(), "se".into()];
    header.extend((1..=d).map(|i| format!("v_hat_{i}")));
    let extra = [
        format!("model: {}", model.label()),
        format!("replicates: {reps}, steps: {n}, seed: {seed}"),
    ];
    sink.csv(&extra, |w| {
        writeln!(w, "{}", header.join(","))?;
        for (p, dot, se, v) in &rows {
            let v: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{p},{dot},{se},{}", v.join(","))?;
        }
        Ok(())
    })?;
    let data = sink
        .out_path()
        .and_then(|p| p.file_name())
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| "velocity.csv".into());
    let png = std::path::Path::new(&data).with_extension("png");
    let script = format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 'p'\n\
         set ylabel 'v . (1,...,1)'\n\
         set xrange [0:1]\n\
         set yrange [-1.05:1.05]\n\
         set grid\n\
         set terminal pngcairo size 800,600\n\
         set output '{}'\n\
         plot '{data}' using 1:2:3 with yerrorbars pt 7 notitle, '' using 1:2 with lines notitle\n",
        png.display()
    );
    sink.companion("gp", &script)
}

fn simulate(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let law = cfg.model()?.law()?;
    let (seed, reps, n) = (need(&cfg.seed, "seed")?, need(&cfg.replicates, "replicates")?, need(&cfg.steps, "steps")?);
    let stride = need(&cfg.stride, "stride")?;
    if n == 0 {
        return Err(CliError::Config("steps must be at least 1".into()));
    }
    let d = law.dim();
    let runs: Vec<(Site, usize, Vec<Site>)> = (0..reps as u64)
        .into_par_iter()
        .map(|r| walk_replicate(&law, seed, r, n, stride))
        .collect();
    let coords = |x: &Site| x.coords().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
    let axes: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    let extra = [format!("model: {}", law.label()), format!("replicates: {reps}, steps: {n}, seed: {seed}")];
    sink.csv(&extra, |w| {
        if stride == 0 {
            writeln!(w, "replicate,env_seed,walk_seed,{},range", axes.join(","))?;
            for (r, (x, range, _)) in runs.iter().enumerate() {
                let (e, s) = replicate_seeds(seed, r as u64);
                writeln!(w, "{r},{e},{s},{},{range}", coords(x))?;
            }
        } else {
            writeln!(w, "replicate,t,{}", axes.join(","))?;
            for (r, (_, _, kept)) in runs.iter().enumerate() {
                for (i, x) in kept.iter().enumerate() {
                    writeln!(w, "{r},{},{}", i * stride, coords(x))?;
                }
            }
        }
        Ok(())
    })?;

    let ends: Vec<Site> = runs.iter().map(|r| r.0).collect();
    let ranges: Vec<f64> = runs.iter().map(|r| r.1 as f64).collect();
    let mut summary = obj(json!({
        "model": law.label(),
        "replicates": reps,
        "steps": n,
        "mean_range": stats::mean(&ranges),
    }));
    match speed_from_endpoints(&ends, n) {
        Ok(v) => {
            summary.insert("speed".into(), json!(v));
            match covariance_batch(&ends, n, &v.value) {
                Ok(cov) => {
                    let (m, se) = covariance_rows(&cov);
                    summary.insert("covariance".into(), m);
                    summary.insert("covariance_se".into(), se);
                    match clt_diagnostic(&ends, n, &v.value, &cov.matrix) {
                        Ok(diag) => {
                            summary.insert("clt_passes_1pct".into(), json!(diag.passes(0.01)));
                            summary.insert("clt".into(), json!(diag));
                        }
                        Err(e) => {
                            summary.insert("clt".into(), json!(e.to_string()));
                        }
                    }
                }
                Err(e) => {
                    summary.insert("covariance".into(), json!(e.to_string()));
                }
            }
        }
        Err(e) => {
            summary.insert("speed".into(), json!(e.to_string()));
        }
    }
    sink.summary(summary)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let i = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[i]
}

/// Checks `P(K > k) = (1 - q)^k` on the first cycle of each trajectory,
/// the only cycle whose search count is not conditioned on later ones.
fn k_geometric(s: &RegenSummary) -> Value {
    let ks: Vec<usize> = s
        .records
        .iter()
        .filter(|r| r.cycle_index == 0 && !r.censored)
        .map(|r| r.attempts)
        .collect();
    let total: usize = ks.iter().sum();
    if ks.is_empty() || total == 0 {
        return Value::Null;
    }
    let q = ks.len() as f64 / total as f64;
    let rows: Vec<Value> = (0..=5)
        .map(|k| {
            let count = ks.iter().filter(|&&x| x > k).count();
            let prob = (1.0 - q).powi(k as i32);
            let (lo, hi) = binomial_band(ks.len(), prob, Z_99);
            json!({
                "k": k,
                "count": count,
                "expected": ks.len() as f64 * prob,
                "lo": lo,
                "hi": hi,
                "inside": lo <= count as f64 && count as f64 <= hi,
            })
        })
        .collect();
    let all_inside = rows.iter().all(|r| r["inside"] == json!(true));
    json!({"samples": ks.len(), "q_hat_first": q, "rows": rows, "all_inside": all_inside})
}

fn regen(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let law = cfg.model()?.law()?;
    let (seed, reps, n) = (need(&cfg.seed, "seed")?, need(&cfg.replicates, "replicates")?, need(&cfg.steps, "steps")?);
    let ell = need(&cfg.ell, "ell")?;
    let guard = need(&cfg.guard, "guard")?;
    let frac = need(&cfg.window_fraction, "window_fraction")?;
    let max_censor = need(&cfg.max_censor_rate, "max_censor_rate")?;
    let bootstrap = need(&cfg.bootstrap, "bootstrap")?;
    if n == 0 {
        return Err(CliError::Config("steps must be at least 1".into()));
    }
    if ell.len() != law.dim() {
        return Err(Error::DimensionMismatch { expected: law.dim(), got: ell.len() }.into());
    }
    let parts: Vec<(RegenSummary, Site)> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let (env_seed, walk_seed) = replicate_seeds(seed, r);
            let t = run_walk(&law, env_seed, walk_seed, n);
            let s = extract_regenerations_windowed(&t, &ell, guard, frac)?;
            Ok((s, t.endpoint()))
        })
        .collect::<rwre_core::Result<_>>()?;
    let ends: Vec<Site> = parts.iter().map(|p| p.1).collect();
    let s = RegenSummary::merged(parts.into_iter().map(|p| p.0)).expect("replicates >= 1");

    let extra = [
        format!("model: {}", law.label()),
        format!("replicates: {reps}, steps: {n}, seed: {seed}, guard: {guard}"),
    ];
    sink.csv(&extra, |w| s.write_csv(w))?;

    let unit = s.direction.clone();
    let projected: Vec<f64> = ends.iter().map(|x| x.dot(&unit) / n as f64).collect();
    let (direct, direct_se) = mean_se(&projected);
    let usable = s.usable().count();
    let censor_rate = s.censor_rate();
    let mut summary = obj(json!({
        "model": law.label(),
        "direction": unit,
        "trajectories": s.trajectories,
        "horizon": s.horizon,
        "records": s.records.len(),
        "usable_records": usable,
        "censored_records": s.records.iter().filter(|r| r.censored).count(),
        "late_censored": s.late_censored,
        "censor_rate": censor_rate,
        "q_hat": s.q_hat,
        "speed_direct": {"value": direct, "se": direct_se},
        "speed_direct_vector": speed_from_endpoints(&ends, n).ok(),
        "k_geometric": k_geometric(&s),
    }));

    let estimate = if censor_rate > max_censor {
        Err(format!("censor rate {censor_rate:.3} above {max_censor}; no speed claim"))
    } else if bootstrap > 0 {
        estimate_speed_regen_bootstrap(&s, bootstrap, seed).map_err(|e| e.to_string())
    } else {
        estimate_speed_regen(&s).map_err(|e| e.to_string())
    };
    match estimate {
        Ok(v) => {
            let z = (v.value - direct) / (v.se.powi(2) + direct_se.powi(2)).sqrt();
            summary.insert("speed_regen".into(), json!(v));
            summary.insert("agreement_z".into(), if z.is_finite() { json!(z) } else { Value::Null });
            summary.insert("agree_2se".into(), json!(!(z.abs() > 2.0)));
            let vvec: Vec<f64> = unit.iter().map(|u| u * v.value).collect();
            if let Ok(cov) = covariance_regen(&s, &vvec) {
                let (m, se) = covariance_rows(&cov);
                summary.insert("covariance_regen".into(), m);
                summary.insert("covariance_regen_se".into(), se);
            }
        }
        Err(reason) => {
            summary.insert("speed_regen".into(), Value::Null);
            summary.insert("speed_regen_note".into(), json!(reason));
        }
    }

    let gaps: Vec<f64> = s.usable().map(|r| r.tau_gap as f64).collect();
    let mut sorted = gaps.clone();
    sorted.sort_by(f64::total_cmp);
    summary.insert(
        "tau_gap".into(),
        json!({
            "count": gaps.len(),
            "mean": if gaps.is_empty() { Value::Null } else { json!(stats::mean(&gaps)) },
            "median": quantile(&sorted, 0.5),
            "q90": quantile(&sorted, 0.9),
            "q99": quantile(&sorted, 0.99),
            "max": sorted.last().copied(),
            "lag1_autocorrelation": if gaps.len() > 2 { json!(lag1_autocorrelation(&gaps)) } else { Value::Null },
            "lag1_band": 3.0 / (gaps.len().max(1) as f64).sqrt(),
        }),
    );
    sink.summary(summary)
}

fn cone(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let law = cfg.model()?.law()?;
    let ell = need(&cfg.ell, "ell")?;
    let kappa = need(&cfg.kappa, "kappa")?;
    let ns = need(&cfg.n_grid, "n_grid")?;
    let radius = need(&cfg.box_radius, "box_radius")?;
    let (seed, reps) = (need(&cfg.seed, "seed")?, need(&cfg.replicates, "replicates")?);
    let rows = estimate_cone_probability(&law, &ell, kappa, &ns, radius, reps, seed)?;
    let extra = [
        format!("model: {}", law.label()),
        format!("kappa: {kappa}, box_radius: {radius}, replicates: {reps}, seed: {seed}"),
    ];
    sink.csv(&extra, |w| write_cone_csv(&rows, w))
}

fn otsp_pc(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let l = need(&cfg.lattice_size, "lattice_size")?;
    let (seed, reps) = (need(&cfg.seed, "seed")?, need(&cfg.replicates, "replicates")?);
    let bracket = need(&cfg.bracket, "bracket")?;
    let resolution = need(&cfg.resolution, "resolution")?;
    if l == 0 {
        return Err(CliError::Config("lattice_size must be at least 1".into()));
    }
    let est = estimate_pc_otsp(l, reps, bracket, resolution, seed)?;
    let extra = [
        format!("lattice_size: {l}, replicates: {reps}, seed: {seed}"),
        format!("p_c_hat: {}, half_width: {}", est.p_c, est.half_width),
    ];
    sink.csv(&extra, |w| write_crossing_csv(&est.steps, w))?;
    sink.summary(obj(json!({
        "p_c": est.p_c,
        "half_width": est.half_width,
        "lattice_size": l,
        "replicates": reps,
        "steps": est.steps,
    })))
}

fn saw(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let d = need(&cfg.dimension, "dimension")?;
    let n = need(&cfg.max_length, "max_length")?;
    if n == 0 {
        return Err(CliError::Config("max_length must be at least 1".into()));
    }
    let rows = saw_table(d, n)?;
    sink.csv(&[], |w| write_saw_csv(&rows, w))
}

fn kalikow(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let model = cfg.model()?;
    let law = model.law()?;
    let ell = need(&cfg.ell, "ell")?;
    let opts = KalikowOptions {
        grid_resolution: need(&cfg.grid_resolution, "grid_resolution")?,
        use_symmetry: need(&cfg.use_symmetry, "use_symmetry")?,
        refine: need(&cfg.refine, "refine")?,
    };
    let numeric = kalikow_numeric(&law, &ell, opts)?;
    let mut doc = obj(json!({"model": law.label(), "ell": ell, "numeric": numeric}));
    let diagonal = ell.len() == 2 && ell[0] > 0.0 && (ell[0] - ell[1]).abs() < 1e-12;
    if let (Preset::ModifiedOrthant { p, eps, delta }, true) = (model, diagonal) {
        if let Ok(closed) = kalikow_closed_form(*p, *eps, *delta) {
            doc.insert(
                "abs_difference".into(),
                json!((closed.epsilon_hat - numeric.epsilon_hat).abs()),
            );
            doc.insert("closed_form".into(), json!(closed));
            doc.insert("threshold_p".into(), json!(kalikow_threshold(*eps, *delta)));
        }
    }
    sink.json(doc)
}

fn diagnose(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let law = cfg.model()?.law()?;
    let atoms: Vec<Value> = law
        .atoms()
        .iter()
        .map(|a| json!({"weight": a.weight, "law": a.law.to_weight_map(), "local_bias": local_bias(&a.law)}))
        .collect();
    let transverse = match classify_transverse(&law) {
        Ok(c) => json!(c),
        Err(e) => json!(e.to_string()),
    };
    sink.json(obj(json!({
        "model": law.label(),
        "elliptic": law.is_elliptic(),
        "condition_orthogonal": dirs(&check_condition_orthogonal(&law)),
        "condition_ddim": dirs(&check_condition_ddim(&law)),
        "atoms": atoms,
        "transverse": transverse,
    })))
}

fn write_probe(sink: &mut Sink, label: &str, table: &DecayTable, extra: &[String]) -> Result<()> {
    sink.csv(extra, |w| table.write_csv(w))?;
    sink.summary(obj(json!({
        "model": label,
        "alpha": table.alpha,
        "ell_prime": table.ell_prime,
        "rows": table.rows,
        "fit": table.fit,
    })))
}

fn probe_grid(cfg: &ExperimentConfig) -> Result<Vec<usize>> {
    Ok(need(&cfg.n_grid, "n_grid")?.into_iter().map(|n| n as usize).collect())
}

fn martingale_probe(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let law = cfg.model()?.law()?;
    let grid = probe_grid(cfg)?;
    let alpha = need(&cfg.alpha, "alpha")?;
    let (seed, reps) = (need(&cfg.seed, "seed")?, need(&cfg.replicates, "replicates")?);
    let table = martingale_range_probe(&law, cfg.ell_prime.as_deref(), &grid, alpha, reps, seed)?;
    let extra = [
        format!("model: {}", law.label()),
        format!("ell_prime: {:?}, alpha: {alpha}, replicates: {reps}, seed: {seed}", table.ell_prime),
    ];
    write_probe(sink, law.label(), &table, &extra)
}

fn range_probe(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let law = cfg.model()?.law()?;
    let grid = probe_grid(cfg)?;
    let alpha = need(&cfg.alpha, "alpha")?;
    let c = need(&cfg.range_constant, "range_constant")?;
    let (seed, reps) = (need(&cfg.seed, "seed")?, need(&cfg.replicates, "replicates")?);
    let table = range_growth_probe(&law, &grid, alpha, c, reps, seed)?;
    let extra = [
        format!("model: {}", law.label()),
        format!("alpha: {alpha}, C: {c}, replicates: {reps}, seed: {seed}"),
    ];
    write_probe(sink, law.label(), &table, &extra)
}
