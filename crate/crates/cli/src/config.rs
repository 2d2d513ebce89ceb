use std::fs;
use std::path::{Path, PathBuf};

use rwre_core::Preset;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

/// One experiment. Every key is optional in the file; missing keys take the
/// command's defaults (see [`ExperimentConfig::resolve`]).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<Preset>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<u64>>,
    /// Drift direction for regenerations, cones and the Kalikow search.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<Vec<f64>>,
    /// Transverse direction for the martingale probe; classifier's choice if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell_prime: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guard: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_fraction: Option<f64>,
    /// Regeneration speed is withheld above this censor rate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_censor_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_radius: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lattice_size: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bracket: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_length: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range_constant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_resolution: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub use_symmetry: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine: Option<bool>,
    /// Positions kept per trajectory in `simulate` output (0 = endpoints only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,

    // Neither of these changes results, so neither enters the hash.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    VelocityScan,
    Simulate,
    Regen,
    Cone,
    OtspPc,
    Saw,
    Kalikow,
    Diagnose,
    MartingaleProbe,
    RangeProbe,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::VelocityScan => "velocity-scan",
            Command::Simulate => "simulate",
            Command::Regen => "regen",
            Command::Cone => "cone",
            Command::OtspPc => "otsp-pc",
            Command::Saw => "saw",
            Command::Kalikow => "kalikow",
            Command::Diagnose => "diagnose",
            Command::MartingaleProbe => "martingale-probe",
            Command::RangeProbe => "range-probe",
        }
    }
}

fn preset(name: &str, params: &[(&str, f64)]) -> Preset {
    let params = params.iter().map(|&(k, v)| (k.to_string(), v)).collect();
    Preset::from_name(name, &params).expect("built-in default")
}

fn fill<T>(slot: &mut Option<T>, value: T) {
    if slot.is_none() {
        *slot = Some(value);
    }
}

/// Reads a JSON object from `path`, or an empty one.
pub fn load_document(path: Option<&Path>) -> Result<Map<String, Value>, CliError> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(CliError::Config(format!("{}: expected a JSON object", path.display()))),
        Err(e) => Err(CliError::Config(format!("{}: {e}", path.display()))),
    }
}

impl ExperimentConfig {
    pub fn from_document(doc: Map<String, Value>) -> Result<Self, CliError> {
        serde_json::from_value(Value::Object(doc)).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Fills in the command's defaults and checks the generic invariants.
    pub fn resolve(mut self, cmd: Command) -> Result<Self, CliError> {
        match &self.command {
            Some(c) if c != cmd.name() => {
                return Err(CliError::Config(format!(
                    "config is for `{c}`, not `{}`",
                    cmd.name()
                )))
            }
            _ => self.command = Some(cmd.name().into()),
        }
        fill(&mut self.seed, 1);
        match cmd {
            Command::VelocityScan => {
                fill(&mut self.model, preset("orthant2d", &[("p", 0.5)]));
                fill(&mut self.p_grid, (0..=10).map(|i| i as f64 / 10.0).collect());
                fill(&mut self.replicates, 1000);
                fill(&mut self.steps, 1000);
            }
            Command::Simulate => {
                fill(&mut self.model, preset("orthant2d", &[("p", 0.7)]));
                fill(&mut self.replicates, 100);
                fill(&mut self.steps, 1000);
                fill(&mut self.stride, 0);
            }
            Command::Regen => {
                fill(&mut self.model, preset("orthant2d", &[("p", 0.7)]));
                fill(&mut self.replicates, 200);
                fill(&mut self.steps, 5000);
                fill(&mut self.guard, rwre_core::regen::DEFAULT_INFINITY_GUARD);
                fill(&mut self.window_fraction, rwre_core::regen::DEFAULT_WINDOW_FRACTION);
                fill(&mut self.max_censor_rate, 0.2);
                fill(&mut self.bootstrap, 0);
            }
            Command::Cone => {
                fill(&mut self.model, preset("eplus_general", &[("d", 2.0), ("p", 0.8)]));
                fill(&mut self.kappa, 0.2);
                fill(&mut self.n_grid, vec![0, 1, 2, 4, 8, 16]);
                fill(&mut self.box_radius, 256);
                fill(&mut self.replicates, 500);
            }
            Command::OtspPc => {
                fill(&mut self.lattice_size, 200);
                fill(&mut self.replicates, 500);
                fill(&mut self.bracket, (0.5730, 0.7491));
                fill(&mut self.resolution, rwre_core::otsp::DEFAULT_PC_RESOLUTION);
            }
            Command::Saw => {
                fill(&mut self.dimension, 2);
                fill(&mut self.max_length, 10);
            }
            Command::Kalikow => {
                fill(
                    &mut self.model,
                    preset("modified_orthant", &[("p", 0.8), ("eps", 0.1), ("delta", 0.1)]),
                );
                fill(&mut self.grid_resolution, 0.02);
                fill(&mut self.use_symmetry, true);
                fill(&mut self.refine, true);
            }
            Command::Diagnose => {
                fill(&mut self.model, preset("orthant2d", &[("p", 0.6)]));
            }
            Command::MartingaleProbe => {
                fill(&mut self.model, preset("orthant2d", &[("p", 0.6)]));
                fill(&mut self.n_grid, vec![1000, 4000, 16000]);
                fill(&mut self.alpha, 0.4);
                fill(&mut self.replicates, 5000);
            }
            Command::RangeProbe => {
                fill(&mut self.model, preset("orthant2d", &[("p", 0.6)]));
                fill(&mut self.n_grid, vec![1000, 4000, 16000]);
                fill(&mut self.alpha, 0.75);
                fill(&mut self.range_constant, 1.0);
                fill(&mut self.replicates, 1000);
            }
        }
        if let Some(model) = &self.model {
            if self.ell.is_none() && matches!(cmd, Command::Regen | Command::Cone | Command::Kalikow) {
                let d = model.law().map_err(CliError::Core)?.dim();
                self.ell = Some(vec![1.0; d]);
            }
        }
        if self.replicates == Some(0) {
            return Err(CliError::Config("replicates must be at least 1".into()));
        }
        if self.p_grid.as_ref().is_some_and(|g| g.is_empty())
            || self.n_grid.as_ref().is_some_and(|g| g.is_empty())
        {
            return Err(CliError::Config("scan grids must be nonempty".into()));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        Ok(self)
    }

    /// SHA-256 of the canonical JSON form, without output path and workers.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("serializable");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn model(&self) -> Result<&Preset, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Config("no model given".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(json: &str) -> Map<String, Value> {
        match serde_json::from_str(json).unwrap() {
            Value::Object(m) => m,
            _ => unreachable!(),
        }
    }

    #[test]
    fn model_parses_from_name_and_params() {
        let cfg = ExperimentConfig::from_document(doc(r#"{"model": {"name": "orthant2d", "p": 0.7}}"#)).unwrap();
        assert_eq!(cfg.model, Some(Preset::Orthant2d { p: 0.7 }));
    }

    #[test]
    fn bad_documents_are_config_errors() {
        for bad in [
            r#"{"modle": 1}"#,
            r#"{"model": {"name": "orthant2d", "p": 1.5}}"#,
            r#"{"model": {"name": "nope", "p": 0.5}}"#,
            r#"{"replicates": -3}"#,
        ] {
            let e = ExperimentConfig::from_document(doc(bad)).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{bad}");
        }
        let zero = ExperimentConfig::from_document(doc(r#"{"replicates": 0}"#)).unwrap();
        assert!(zero.resolve(Command::Simulate).is_err());
        let wrong = ExperimentConfig::from_document(doc(r#"{"command": "saw"}"#)).unwrap();
        assert!(wrong.resolve(Command::Cone).is_err());
    }

    #[test]
    fn hash_ignores_workers_and_out() {
        let a = ExperimentConfig::default().resolve(Command::Saw).unwrap();
        let mut b = a.clone();
        b.workers = Some(7);
        b.out = Some("/tmp/x.csv".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = Some(2);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn explicit_defaults_hash_like_implicit_ones() {
        let implicit = ExperimentConfig::default().resolve(Command::Saw).unwrap();
        let explicit = ExperimentConfig::from_document(doc(r#"{"dimension": 2, "max_length": 10, "seed": 1}"#))
            .unwrap()
            .resolve(Command::Saw)
            .unwrap();
        assert_eq!(implicit.hash(), explicit.hash());
    }
}
