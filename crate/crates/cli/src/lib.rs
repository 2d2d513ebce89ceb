//! Batch experiment driver: one JSON config per run, flags override keys,
//! results go to CSV/JSON files stamped with the tool version and a hash of
//! the config.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use thiserror::Error;

mod commands;
pub mod config;

pub use config::{Command, ExperimentConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] rwre_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    /// 2 for anything wrong with the request, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        use rwre_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                E::NegativeWeight { .. }
                | E::SumOutOfTolerance { .. }
                | E::EmptySupport
                | E::UnknownPreset(_)
                | E::ParamOutOfRange { .. }
                | E::DimensionMismatch { .. }
                | E::InvalidDirection(_)
                | E::ZeroVector
                | E::DirectionZero
                | E::BracketInvalid { .. }
                | E::WorkLimitExceeded { .. }
                | E::GridTooLarge { .. }
                | E::NotTwoValued(_) => 2,
                _ => 3,
            },
            CliError::Io(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// What a run produced.
#[derive(Debug)]
pub struct Report {
    pub files: Vec<PathBuf>,
    /// Primary output when no output path was configured.
    pub stdout: Vec<u8>,
    /// Secondary summary shown on stderr when no output path was configured.
    pub summary: Option<Value>,
}

/// Where results go, and the stamp they carry.
pub(crate) struct Sink {
    out: Option<PathBuf>,
    command: &'static str,
    hash: String,
    files: Vec<PathBuf>,
    stdout: Vec<u8>,
    summary: Option<Value>,
}

impl Sink {
    fn new(cfg: &ExperimentConfig, cmd: Command) -> Result<Self> {
        if let Some(path) = &cfg.out {
            // Fail before the (possibly long) run if the path is unusable.
            fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(Self {
            out: cfg.out.clone(),
            command: cmd.name(),
            hash: cfg.hash(),
            files: Vec::new(),
            stdout: Vec::new(),
            summary: None,
        })
    }

    fn header(&self, extra: &[String]) -> String {
        let mut s = format!(
            "# rwre {VERSION}\n# command: {}\n# config_sha256: {}\n",
            self.command, self.hash
        );
        for line in extra {
            s.push_str("# ");
            s.push_str(line);
            s.push('\n');
        }
        s
    }

    fn meta(&self) -> Value {
        json!({"version": VERSION, "command": self.command, "config_sha256": self.hash})
    }

    fn emit_primary(&mut self, bytes: Vec<u8>) -> Result<()> {
        match self.out.clone() {
            Some(path) => self.write_file(&path, &bytes),
            None => {
                self.stdout = bytes;
                Ok(())
            }
        }
    }

    fn write_file(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        fs::write(path, bytes)?;
        self.files.push(path.to_path_buf());
        Ok(())
    }

    /// Main CSV output, with `#` metadata lines before the header row.
    pub(crate) fn csv(
        &mut self,
        extra: &[String],
        body: impl FnOnce(&mut Vec<u8>) -> io::Result<()>,
    ) -> Result<()> {
        let mut buf = self.header(extra).into_bytes();
        body(&mut buf)?;
        self.emit_primary(buf)
    }

    /// Main output as a JSON document carrying a `meta` object.
    pub(crate) fn json(&mut self, value: Map<String, Value>) -> Result<()> {
        let text = self.stamp(value);
        self.emit_primary(text.into_bytes())
    }

    /// JSON summary next to the main output (`<out>.json`).
    pub(crate) fn summary(&mut self, value: Map<String, Value>) -> Result<()> {
        match self.out.clone() {
            Some(path) => {
                let text = self.stamp(value);
                self.write_file(&path.with_extension("json"), text.as_bytes())
            }
            None => {
                let mut value = value;
                value.insert("meta".into(), self.meta());
                self.summary = Some(Value::Object(value));
                Ok(())
            }
        }
    }

    /// Companion text file (`<out>.<ext>`) prefixed with the `#` stamp;
    /// skipped when writing to stdout.
    pub(crate) fn companion(&mut self, ext: &str, body: &str) -> Result<()> {
        if let Some(path) = self.out.clone() {
            let text = self.header(&[]) + body;
            self.write_file(&path.with_extension(ext), text.as_bytes())?;
        }
        Ok(())
    }

    pub(crate) fn out_path(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn stamp(&self, mut value: Map<String, Value>) -> String {
        value.insert("meta".into(), self.meta());
        let mut text = serde_json::to_string_pretty(&Value::Object(value)).expect("serializable");
        text.push('\n');
        text
    }

    fn finish(self) -> Report {
        Report {
            files: self.files,
            stdout: self.stdout,
            summary: self.summary,
        }
    }
}

/// Runs `cmd` with an already-merged config on a pool of `workers` threads.
pub fn run(cmd: Command, cfg: ExperimentConfig) -> Result<Report> {
    let cfg = cfg.resolve(cmd)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let mut sink = Sink::new(&cfg, cmd)?;
    pool.install(|| commands::dispatch(cmd, &cfg, &mut sink))?;
    Ok(sink.finish())
}

/// Writes a report's stdout part, and its summary to stderr.
pub fn print_report(report: &Report) -> io::Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(&report.stdout)?;
    if let Some(summary) = &report.summary {
        eprintln!("{}", serde_json::to_string_pretty(summary).expect("serializable"));
    }
    for f in &report.files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}
