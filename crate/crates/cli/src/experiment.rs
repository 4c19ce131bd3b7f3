//! Runs resolved configurations and streams their outputs to disk.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use kdv_core::diagnostics::compare_fields;
use kdv_core::model::ConservationRecord;
use kdv_core::preissman::StepReport;
use kdv_core::scheme::Simulation;
use kdv_core::sweep::Execution;
use kdv_core::KdvError;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};

pub const SNAPSHOTS: &str = "snapshots.csv";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const COMPARISON: &str = "compare.csv";
pub const MANIFEST: &str = "manifest.txt";

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    /// Output could not be written, or the scheme failed for a reason other
    /// than divergence or blow-up.
    Failure,
    Divergence,
    InvalidConfig,
    Blowup,
}

impl ExitStatus {
    pub fn code(self) -> u8 {
        match self {
            Self::Success => 0,
            Self::Failure => 1,
            Self::Divergence => 2,
            Self::InvalidConfig => 3,
            Self::Blowup => 4,
        }
    }

    /// The status a run stopped by `error` ends with.
    pub fn of_error(error: &KdvError) -> Self {
        match error {
            KdvError::Divergence { .. } => Self::Divergence,
            KdvError::Blowup { .. } => Self::Blowup,
            _ => Self::Failure,
        }
    }

    fn severity(self) -> u8 {
        match self {
            Self::Success => 0,
            Self::Divergence => 1,
            Self::Blowup => 2,
            Self::Failure => 3,
            Self::InvalidConfig => 4,
        }
    }

    /// The more severe of two statuses, for summarizing a sweep.
    pub fn worst(self, other: Self) -> Self {
        if other.severity() > self.severity() {
            other
        } else {
            self
        }
    }

    /// The `status` value written to the manifest.
    pub fn label(self) -> &'static str {
        match self {
            Self::Success => "completed",
            Self::Failure => "failed",
            Self::Divergence => "diverged",
            Self::InvalidConfig => "invalid",
            Self::Blowup => "blowup",
        }
    }
}

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl OutputError {
    pub fn status(&self) -> ExitStatus {
        match self {
            Self::Io { .. } => ExitStatus::Failure,
            Self::Config(_) => ExitStatus::InvalidConfig,
        }
    }
}

/// How a run ended.
#[derive(Debug)]
pub struct RunSummary {
    pub out: PathBuf,
    pub status: ExitStatus,
    pub steps_completed: usize,
    pub error: Option<KdvError>,
}

/// Shortest decimal text that reads back as the same double.
fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Empty for quantities that do not apply.
fn optional(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        num(x)
    }
}

struct Csv {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Csv {
    fn create(dir: &Path, name: &str, header: &str) -> Result<Self, OutputError> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|source| OutputError::Io {
            path: path.clone(),
            source,
        })?;
        let mut csv = Self {
            path,
            out: BufWriter::new(file),
        };
        csv.line(header)?;
        Ok(csv)
    }

    fn line(&mut self, text: &str) -> Result<(), OutputError> {
        writeln!(self.out, "{text}").map_err(|source| OutputError::Io {
            path: self.path.clone(),
            source,
        })
    }

    /// Flushes, marking the file as incomplete when the run stopped early.
    fn finish(mut self, stopped: Option<&KdvError>) -> Result<(), OutputError> {
        if let Some(e) = stopped {
            self.line(&format!("# truncated: {e}"))?;
        }
        self.out.flush().map_err(|source| OutputError::Io {
            path: self.path,
            source,
        })
    }
}

fn prepare(dir: &Path) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_manifest(
    cfg: &RunConfig,
    summary: &RunSummary,
    started: Instant,
) -> Result<(), OutputError> {
    let path = cfg.out.join(MANIFEST);
    let text = format!(
        "{}version={}\nstatus={}\nsteps-completed={}\nwall-time-s={}\n",
        cfg.to_manifest(),
        env!("CARGO_PKG_VERSION"),
        summary.status.label(),
        summary.steps_completed,
        num(started.elapsed().as_secs_f64()),
    );
    fs::write(&path, text).map_err(|source| OutputError::Io { path, source })
}

fn diagnostics_row(r: &ConservationRecord) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.step,
        num(r.time),
        num(r.mass),
        optional(r.linf),
        optional(r.l2),
        r.iterations,
        num(r.residual)
    )
}

/// Writes every level's diagnostics and the sampled snapshots. A scheme
/// error ends the stream and is returned, not raised.
fn stream(
    sim: &mut Simulation,
    xs: &[f64],
    snapshots: &mut Csv,
    diagnostics: &mut Csv,
) -> Result<Option<KdvError>, OutputError> {
    let steps = sim.config().steps;
    let every = sim.config().snapshot_every;
    let mut report = StepReport::default();
    loop {
        let k = sim.step_index();
        let level = sim.record(report).and_then(|rec| Ok((rec, sim.u()?)));
        let (record, u) = match level {
            Ok(level) => level,
            Err(e) => return Ok(Some(e)),
        };
        diagnostics.line(&diagnostics_row(&record))?;
        if k.is_multiple_of(every) || k == steps {
            let t = num(record.time);
            for (x, value) in xs.iter().zip(&u) {
                snapshots.line(&format!("{t},{},{}", num(*x), num(*value)))?;
            }
        }
        if k == steps {
            return Ok(None);
        }
        report = match sim.advance() {
            Ok(report) => report,
            Err(e) => return Ok(Some(e)),
        };
    }
}

fn summarize(cfg: &RunConfig, steps_completed: usize, error: Option<KdvError>) -> RunSummary {
    let status = error
        .as_ref()
        .map_or(ExitStatus::Success, ExitStatus::of_error);
    RunSummary {
        out: cfg.out.clone(),
        status,
        steps_completed,
        error,
    }
}

/// Runs one scheme, writing snapshots, per-step diagnostics and a manifest
/// into `cfg.out`.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunSummary, OutputError> {
    if cfg.compare_with.is_some() {
        return Err(
            ConfigError::Misplaced("compare-with applies only to the compare subcommand").into(),
        );
    }
    let started = Instant::now();
    let mut sim = Simulation::new(cfg.sim.clone()).map_err(ConfigError::Invalid)?;
    prepare(&cfg.out)?;
    let xs = cfg.sim.grid.points(&cfg.sim.params);
    let mut snapshots = Csv::create(&cfg.out, SNAPSHOTS, "t,x,u")?;
    let mut diagnostics = Csv::create(
        &cfg.out,
        DIAGNOSTICS,
        "step,t,mass,linf_vs_oracle,l2_vs_oracle,iterations,residual",
    )?;
    let error = stream(&mut sim, &xs, &mut snapshots, &mut diagnostics)?;
    snapshots.finish(error.as_ref())?;
    diagnostics.finish(error.as_ref())?;
    let summary = summarize(cfg, sim.step_index(), error);
    write_manifest(cfg, &summary, started)?;
    Ok(summary)
}

/// Runs `cfg.sim.scheme` and `cfg.compare_with` in lockstep from the same
/// data, writing the per-step max-norm and discrete L2 gap between them.
pub fn compare_experiment(cfg: &RunConfig) -> Result<RunSummary, OutputError> {
    let other = cfg
        .compare_with
        .ok_or(ConfigError::Missing("compare-with"))?;
    let started = Instant::now();
    let mut first = Simulation::new(cfg.sim.clone()).map_err(ConfigError::Invalid)?;
    let mut second_cfg = cfg.sim.clone();
    second_cfg.scheme = other;
    let mut second = Simulation::new(second_cfg).map_err(ConfigError::Invalid)?;
    prepare(&cfg.out)?;
    let mut table = Csv::create(&cfg.out, COMPARISON, "step,t,linf,l2")?;
    let h = cfg.sim.grid.h;
    let error = loop {
        let k = first.step_index();
        let gap = first.u().and_then(|a| compare_fields(&a, &second.u()?, h));
        match gap {
            Ok((linf, l2)) => table.line(&format!(
                "{k},{},{},{}",
                num(first.time()),
                num(linf),
                num(l2)
            ))?,
            Err(e) => break Some(e),
        }
        if k == cfg.sim.steps {
            break None;
        }
        if let Err(e) = first.advance().and_then(|_| second.advance()) {
            break Some(e);
        }
    };
    table.finish(error.as_ref())?;
    let completed = first.step_index().min(second.step_index());
    let summary = summarize(cfg, completed, error);
    write_manifest(cfg, &summary, started)?;
    Ok(summary)
}

/// Runs independent configurations, concurrently when `exec` allows. Each
/// run owns its output directory, so the directories must be distinct.
/// Configurations naming `compare-with` run as comparisons.
pub fn sweep(
    configs: &[RunConfig],
    exec: Execution,
) -> Result<Vec<Result<RunSummary, OutputError>>, ConfigError> {
    let mut seen = BTreeSet::new();
    for cfg in configs {
        if !seen.insert(cfg.out.clone()) {
            return Err(ConfigError::SharedOutput(cfg.out.display().to_string()));
        }
    }
    Ok(exec.map(configs, |cfg| {
        if cfg.compare_with.is_some() {
            compare_experiment(cfg)
        } else {
            run_experiment(cfg)
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-17, 1e300, 0.0, 7.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(optional(f64::NAN), "");
    }

    #[test]
    fn sweep_status_is_the_worst() {
        use ExitStatus::*;
        let all = [Success, Divergence, Blowup, Failure, InvalidConfig];
        for (i, a) in all.iter().enumerate() {
            for b in &all[..=i] {
                assert_eq!(a.worst(*b), *a);
                assert_eq!(b.worst(*a), *a);
            }
        }
        assert_eq!(
            ExitStatus::of_error(&KdvError::Blowup {
                step: 3,
                max_abs: 1e9
            })
            .code(),
            4
        );
        assert_eq!(
            ExitStatus::of_error(&KdvError::Divergence {
                iterations: 5,
                residual: 1.0
            })
            .code(),
            2
        );
    }
}
