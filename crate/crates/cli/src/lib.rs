//! Command implementations behind the `rescontrol` binary.
//!
//! Every command reads a scenario file, validates it completely, runs, and
//! writes its outputs into `out_dir` under names derived from the resolved
//! config fingerprint and the seeds.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rescontrol::config::{Profile, ScenarioConfig};
use rescontrol::controller::ControllerVariant;
use rescontrol::harness::{self, EpisodeStatus, Metadata};

/// Command failure, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input or I/O trouble; nothing was run.
    #[error(transparent)]
    Setup(#[from] anyhow::Error),
    /// The run happened and its files were written, but at least one
    /// episode diverged.
    #[error("{message}")]
    Diverged { message: String, report: Report },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Setup(_) => 1,
            CliError::Diverged { .. } => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Report {
    pub files: Vec<PathBuf>,
    /// Lines meant for standard output.
    pub lines: Vec<String>,
}

pub fn load_config(path: &Path, profile: Option<Profile>) -> anyhow::Result<ScenarioConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let config = ScenarioConfig::parse(&text, profile).with_context(|| path.display().to_string())?;
    Ok(config)
}

fn create_out_dir(out_dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create output directory {}", out_dir.display()))
}

fn write_file(
    path: PathBuf,
    write: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> anyhow::Result<PathBuf> {
    let file = fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    write(&mut w)
        .and_then(|_| std::io::Write::flush(&mut w))
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn write_text(path: PathBuf, text: &str) -> anyhow::Result<PathBuf> {
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

/// Runs one episode; writes `trace_<fp>_seed<seed>.csv` and its `.json`
/// metadata.
pub fn cmd_simulate(config_path: &Path, seed: u64, out_dir: &Path, profile: Option<Profile>) -> CliResult<Report> {
    let config = load_config(config_path, profile)?;
    let trace = harness::run_episode(&config, seed).map_err(anyhow::Error::from)?;
    create_out_dir(out_dir)?;

    let stem = format!("trace_{}_seed{}", trace.fingerprint, seed);
    let csv = write_file(out_dir.join(format!("{stem}.csv")), |w| {
        harness::write_trace_csv(&trace, w)
    })?;
    let mut meta = Metadata::new(&config, vec![seed]);
    let mut lines = Vec::new();
    if let EpisodeStatus::Diverged { tick, reason } = &trace.status {
        meta.divergence.push(harness::DivergedSeed {
            seed,
            tick: *tick,
            reason: reason.clone(),
        });
    } else {
        let rmse = harness::rmse(&trace, config.episode.rmse_skip_ticks, config.episode.metric_output)
            .map_err(anyhow::Error::from)?;
        meta.rmse = Some(rmse);
        lines.push(format!("rmse {rmse}"));
    }
    let json = write_text(out_dir.join(format!("{stem}.json")), &meta.to_json())?;
    let files = vec![csv, json];

    match trace.status {
        EpisodeStatus::Completed => Ok(Report { files, lines }),
        EpisodeStatus::Diverged { tick, reason } => Err(CliError::Diverged {
            message: format!(
                "seed {seed} diverged at tick {tick}: {reason}; partial trace written to {}",
                files[0].display()
            ),
            report: Report { files, lines },
        }),
    }
}

fn divergence_message(diverged: &[harness::DivergedSeed], total: usize) -> String {
    let mut s = format!("{} of {} episodes diverged:", diverged.len(), total);
    for d in diverged {
        let _ = write!(s, "\n  seed {} at tick {}: {}", d.seed, d.tick, d.reason);
    }
    s
}

/// Runs seeds `base_seed..base_seed + n_seeds`; writes the per-tick
/// summary, the per-seed RMSE table and metadata.
pub fn cmd_batch(
    config_path: &Path,
    n_seeds: usize,
    base_seed: u64,
    out_dir: &Path,
    profile: Option<Profile>,
) -> CliResult<Report> {
    let config = load_config(config_path, profile)?;
    let summary = harness::run_batch(&config, n_seeds, base_seed).map_err(anyhow::Error::from)?;
    create_out_dir(out_dir)?;

    let stem = format!("{}_base{}_n{}", summary.fingerprint, base_seed, n_seeds);
    let mut files = Vec::new();
    if summary.completed() > 0 {
        files.push(write_file(out_dir.join(format!("summary_{stem}.csv")), |w| {
            harness::write_summary_csv(&summary, w)
        })?);
    }
    files.push(write_file(out_dir.join(format!("rmse_{stem}.csv")), |w| {
        harness::write_rmse_csv(&summary, w)
    })?);
    let mut meta = Metadata::new(&config, (0..n_seeds as u64).map(|i| base_seed + i).collect());
    meta.divergence = summary.diverged.clone();
    let mut lines = vec![format!("completed {} of {}", summary.completed(), n_seeds)];
    if summary.completed() > 0 {
        meta.rmse = Some(summary.mean_rmse());
        lines.push(format!("rmse {} +- {}", summary.mean_rmse(), summary.std_rmse()));
    }
    files.push(write_text(out_dir.join(format!("batch_{stem}.json")), &meta.to_json())?);

    if summary.diverged.is_empty() {
        Ok(Report { files, lines })
    } else {
        Err(CliError::Diverged {
            message: divergence_message(&summary.diverged, n_seeds),
            report: Report { files, lines },
        })
    }
}

/// Runs each variant on the same seeds; writes a comparison table.
pub fn cmd_compare(
    config_path: &Path,
    variants: &[ControllerVariant],
    n_seeds: usize,
    base_seed: u64,
    out_dir: &Path,
    profile: Option<Profile>,
) -> CliResult<Report> {
    let config = load_config(config_path, profile)?;
    let rows = harness::run_compare(&config, variants, n_seeds, base_seed).map_err(anyhow::Error::from)?;
    create_out_dir(out_dir)?;

    let names: Vec<&str> = variants.iter().map(|v| v.as_str()).collect();
    let stem = format!(
        "{}_base{}_n{}_{}",
        config.fingerprint(),
        base_seed,
        n_seeds,
        names.join("-")
    );
    let csv = write_file(out_dir.join(format!("compare_{stem}.csv")), |w| {
        harness::write_comparison_csv(&rows, w)
    })?;
    let meta = Metadata::new(&config, (0..n_seeds as u64).map(|i| base_seed + i).collect());
    let mut json: serde_json::Value = serde_json::from_str(&meta.to_json()).expect("metadata is valid json");
    json["comparison"] = serde_json::to_value(&rows).expect("rows serialize");
    let json = write_text(
        out_dir.join(format!("compare_{stem}.json")),
        &serde_json::to_string_pretty(&json).expect("json serializes"),
    )?;

    let lines = harness::format_comparison(&rows).lines().map(str::to_owned).collect();
    let diverged: usize = rows.iter().map(|r| r.diverged).sum();
    let message = format!("{diverged} episodes diverged across variants; see {}", json.display());
    let report = Report {
        files: vec![csv, json],
        lines,
    };
    if diverged == 0 {
        Ok(report)
    } else {
        Err(CliError::Diverged { message, report })
    }
}
