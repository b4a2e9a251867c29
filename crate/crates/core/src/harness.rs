//! Episode and batch orchestration, metrics and trace persistence.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{OutputSource, PlantKind, ScenarioConfig};
use crate::controller::{ControlFrame, ControlLoop, ControllerVariant, LoopParts, PdGains};
use crate::error::{Error, Result};
use crate::learner::rls_init;
use crate::plants::{BenchmarkPlantState, NoiseModel, Plant, SurrogateActuatorState};
use crate::reservoir::{init_esn_from_rng, washout, Reservoir, TapDelayParams};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EpisodeStatus {
    Completed,
    Diverged { tick: usize, reason: String },
}

#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub frames: Vec<ControlFrame>,
    pub fingerprint: String,
    pub seed: u64,
    pub tick: f64,
    pub status: EpisodeStatus,
}

impl EpisodeTrace {
    pub fn is_completed(&self) -> bool {
        self.status == EpisodeStatus::Completed
    }
}

/// Assembles the control loop for `config` and `seed`. The ESN (weights,
/// initial state) and the sensor noise draw from separate sub-streams.
pub fn build_loop(config: &ScenarioConfig, seed: u64, capture_states: bool) -> Result<ControlLoop> {
    config.validate()?;
    let tick = config.episode.tick;
    let horizon = config.learner.horizon;
    let variant = config.controller.variant;
    let res = &config.reservoir;

    let reservoir = match variant {
        ControllerVariant::EsnPd => {
            let mut rng = rng::stream(seed, Stream::ReservoirInit);
            let params = init_esn_from_rng(
                &mut rng,
                seed,
                res.size,
                res.spectral_radius,
                res.input_scale,
                res.leaky_rate,
            )?;
            let initial = params.random_state(&mut rng);
            let state = washout(&initial, &params, res.washout)?;
            Reservoir::esn(params, state)?
        }
        ControllerVariant::PrcPd => Reservoir::tap_delay(TapDelayParams {
            tap_size: res.tap_size,
            conversion_factor: res.conversion_factor,
            filter_factor: res.filter_factor,
            tick,
            surrogate: res.pressure,
        })?,
        ControllerVariant::LinearPd | ControllerVariant::Pd => Reservoir::Empty,
    };
    let learner = if variant.has_feedforward() {
        Some(rls_init(
            reservoir.dim(),
            horizon,
            config.learner.learning_rate,
            config.learner.forgetting_factor,
        )?)
    } else {
        None
    };
    let plant = match config.plant.kind {
        PlantKind::Benchmark => Plant::Benchmark(BenchmarkPlantState::default()),
        PlantKind::SurrogateActuator => Plant::Actuator {
            params: config.plant.actuator,
            state: SurrogateActuatorState::default(),
            tick,
        },
    };
    ControlLoop::new(LoopParts {
        reservoir,
        learner,
        gains: PdGains::new(config.controller.kp, config.controller.kd, tick)?,
        saturation: config.controller.saturation,
        plant,
        noise: NoiseModel::new(config.episode.noise_std, seed)?,
        reference: config.build_reference()?,
        horizon,
        capture_states,
    })
}

/// Runs one seeded episode. Divergence ends the episode early and is
/// recorded in the trace status; configuration errors are returned.
pub fn run_episode(config: &ScenarioConfig, seed: u64) -> Result<EpisodeTrace> {
    run_episode_with(config, seed, false)
}

pub fn run_episode_with(config: &ScenarioConfig, seed: u64, capture_states: bool) -> Result<EpisodeTrace> {
    let mut control = build_loop(config, seed, capture_states)?;
    let (frames, err) = control.run();
    let status = match err {
        None => EpisodeStatus::Completed,
        Some(e) if e.is_divergence() => EpisodeStatus::Diverged {
            tick: frames.len(),
            reason: e.to_string(),
        },
        Some(e) => return Err(e),
    };
    Ok(EpisodeTrace {
        frames,
        fingerprint: config.fingerprint(),
        seed,
        tick: config.episode.tick,
        status,
    })
}

fn output(frame: &ControlFrame, source: OutputSource) -> f64 {
    match source {
        OutputSource::True => frame.y_true,
        OutputSource::Measured => frame.y_measured,
    }
}

/// Root-mean-square tracking error over the frames after `skip_ticks`.
pub fn rmse(trace: &EpisodeTrace, skip_ticks: usize, source: OutputSource) -> Result<f64> {
    rmse_of_frames(&trace.frames, skip_ticks, source)
}

pub fn rmse_of_frames(frames: &[ControlFrame], skip_ticks: usize, source: OutputSource) -> Result<f64> {
    let window = frames.get(skip_ticks..).filter(|w| !w.is_empty()).ok_or_else(|| {
        Error::invalid(
            "episode.rmse_skip_ticks",
            format!(
                "skipping {skip_ticks} of {} frames leaves nothing to score",
                frames.len()
            ),
        )
    })?;
    let sum: f64 = window
        .iter()
        .map(|f| {
            let e = f.reference - output(f, source);
            e * e
        })
        .sum();
    Ok((sum / window.len() as f64).sqrt())
}

/// Compact per-episode result kept by batches.
#[derive(Debug, Clone)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub status: EpisodeStatus,
    pub output: Vec<f64>,
    pub error: Vec<f64>,
    pub rmse: Option<f64>,
}

fn summarize(trace: EpisodeTrace, skip: usize, source: OutputSource) -> EpisodeSummary {
    let rmse = if trace.is_completed() {
        rmse(&trace, skip, source).ok()
    } else {
        None
    };
    EpisodeSummary {
        seed: trace.seed,
        output: trace.frames.iter().map(|f| output(f, source)).collect(),
        error: trace.frames.iter().map(|f| f.reference - output(f, source)).collect(),
        rmse,
        status: trace.status,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedRmse {
    pub seed: u64,
    pub rmse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DivergedSeed {
    pub seed: u64,
    pub tick: usize,
    pub reason: String,
}

/// Cross-seed aggregates of a batch.
#[derive(Debug, Clone)]
pub struct BatchSummary {
    pub fingerprint: String,
    pub tick: f64,
    pub reference: Vec<f64>,
    pub mean_y: Vec<f64>,
    pub std_y: Vec<f64>,
    pub mean_err: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Completed episodes only, in seed order.
    pub rmse: Vec<SeedRmse>,
    pub diverged: Vec<DivergedSeed>,
    pub skipped_ticks: usize,
    pub source: OutputSource,
}

impl BatchSummary {
    pub fn completed(&self) -> usize {
        self.rmse.len()
    }

    pub fn mean_rmse(&self) -> f64 {
        let n = self.rmse.len() as f64;
        self.rmse.iter().map(|s| s.rmse).sum::<f64>() / n
    }

    pub fn std_rmse(&self) -> f64 {
        let values: Vec<f64> = self.rmse.iter().map(|s| s.rmse).collect();
        mean_std(&values).1
    }
}

/// Population mean and standard deviation (two-pass).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Pointwise mean and standard deviation across equally long series.
pub fn pointwise_mean_std(series: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let len = series.first().map_or(0, |s| s.len());
    let mut mean = Vec::with_capacity(len);
    let mut std = Vec::with_capacity(len);
    let mut column = Vec::with_capacity(series.len());
    for k in 0..len {
        column.clear();
        column.extend(series.iter().map(|s| s[k]));
        let (m, s) = mean_std(&column);
        mean.push(m);
        std.push(s);
    }
    (mean, std)
}

/// Runs every seed in `seeds` (in parallel) and summarizes them in the
/// order given.
pub fn run_episodes(config: &ScenarioConfig, seeds: &[u64]) -> Result<Vec<EpisodeSummary>> {
    config.validate()?;
    let skip = config.episode.rmse_skip_ticks;
    let source = config.episode.metric_output;
    seeds
        .par_iter()
        .map(|&seed| run_episode(config, seed).map(|t| summarize(t, skip, source)))
        .collect()
}

/// Runs seeds `base_seed .. base_seed + n_seeds` and aggregates the
/// completed episodes.
pub fn run_batch(config: &ScenarioConfig, n_seeds: usize, base_seed: u64) -> Result<BatchSummary> {
    if n_seeds == 0 {
        return Err(Error::invalid("seeds", "need at least one seed"));
    }
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| base_seed + i).collect();
    let episodes = run_episodes(config, &seeds)?;
    aggregate(config, episodes)
}

/// Aggregates episode summaries; ordering of `episodes` does not matter.
pub fn aggregate(config: &ScenarioConfig, mut episodes: Vec<EpisodeSummary>) -> Result<BatchSummary> {
    episodes.sort_by_key(|e| e.seed);
    let reference = config.build_reference()?.samples().to_vec();
    let mut diverged = Vec::new();
    let mut rmse = Vec::new();
    let mut outputs: Vec<&[f64]> = Vec::new();
    let mut errors: Vec<&[f64]> = Vec::new();
    for e in &episodes {
        match &e.status {
            EpisodeStatus::Completed => {
                outputs.push(&e.output);
                errors.push(&e.error);
                if let Some(r) = e.rmse {
                    rmse.push(SeedRmse { seed: e.seed, rmse: r });
                }
            }
            EpisodeStatus::Diverged { tick, reason } => diverged.push(DivergedSeed {
                seed: e.seed,
                tick: *tick,
                reason: reason.clone(),
            }),
        }
    }
    let (mean_y, std_y) = pointwise_mean_std(&outputs);
    let (mean_err, std_err) = pointwise_mean_std(&errors);
    Ok(BatchSummary {
        fingerprint: config.fingerprint(),
        tick: config.episode.tick,
        reference,
        mean_y,
        std_y,
        mean_err,
        std_err,
        rmse,
        diverged,
        skipped_ticks: config.episode.rmse_skip_ticks,
        source: config.episode.metric_output,
    })
}

/// One row of a variant comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub variant: ControllerVariant,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub completed: usize,
    pub diverged: usize,
    /// RMSE reduction relative to linear+pd, in percent.
    pub improvement_over_linear_pct: Option<f64>,
}

/// Runs each variant on identical seeds, reference and plant.
pub fn run_compare(
    config: &ScenarioConfig,
    variants: &[ControllerVariant],
    n_seeds: usize,
    base_seed: u64,
) -> Result<Vec<ComparisonRow>> {
    if variants.len() < 2 {
        return Err(Error::invalid("variants", "compare needs at least two variants"));
    }
    let mut rows: Vec<ComparisonRow> = Vec::with_capacity(variants.len());
    for &v in variants {
        let summary = run_batch(&config.with_variant(v), n_seeds, base_seed)?;
        rows.push(ComparisonRow {
            variant: v,
            mean_rmse: summary.mean_rmse(),
            std_rmse: summary.std_rmse(),
            completed: summary.completed(),
            diverged: summary.diverged.len(),
            improvement_over_linear_pct: None,
        });
    }
    let baseline = rows
        .iter()
        .find(|r| r.variant == ControllerVariant::LinearPd)
        .map(|r| r.mean_rmse);
    if let Some(base) = baseline {
        for r in &mut rows {
            r.improvement_over_linear_pct = Some(100.0 * (base - r.mean_rmse) / base);
        }
    }
    Ok(rows)
}

fn csv_writer<W: Write>(out: W, header: &[&str]) -> csv::Result<csv::Writer<W>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

#[derive(Serialize)]
struct TraceRow {
    k: usize,
    t_seconds: f64,
    y_ref: f64,
    y_true: f64,
    y_measured: f64,
    u_ff: f64,
    u_fb: f64,
    u_raw: f64,
    u_applied: f64,
    err_feedback: f64,
}

/// One row per tick: `k,t_seconds,y_ref,y_true,y_measured,u_ff,u_fb,u_raw,u_applied,err_feedback`.
pub fn write_trace_csv<W: Write>(trace: &EpisodeTrace, out: W) -> io::Result<()> {
    let header = [
        "k",
        "t_seconds",
        "y_ref",
        "y_true",
        "y_measured",
        "u_ff",
        "u_fb",
        "u_raw",
        "u_applied",
        "err_feedback",
    ];
    let mut w = csv_writer(out, &header)?;
    for f in &trace.frames {
        w.serialize(TraceRow {
            k: f.k,
            t_seconds: f.k as f64 * trace.tick,
            y_ref: f.reference,
            y_true: f.y_true,
            y_measured: f.y_measured,
            u_ff: f.u_ff,
            u_fb: f.u_fb,
            u_raw: f.u_raw,
            u_applied: f.u_applied,
            err_feedback: f.err_feedback,
        })?;
    }
    w.flush()
}

#[derive(Serialize)]
struct SummaryRow {
    k: usize,
    t_seconds: f64,
    mean_y: f64,
    std_y: f64,
    mean_err: f64,
    std_err: f64,
}

/// One row per tick: `k,t_seconds,mean_y,std_y,mean_err,std_err`.
pub fn write_summary_csv<W: Write>(summary: &BatchSummary, out: W) -> io::Result<()> {
    let mut w = csv_writer(out, &["k", "t_seconds", "mean_y", "std_y", "mean_err", "std_err"])?;
    for k in 0..summary.mean_y.len() {
        w.serialize(SummaryRow {
            k,
            t_seconds: k as f64 * summary.tick,
            mean_y: summary.mean_y[k],
            std_y: summary.std_y[k],
            mean_err: summary.mean_err[k],
            std_err: summary.std_err[k],
        })?;
    }
    w.flush()
}

/// `seed,rmse` for each completed episode.
pub fn write_rmse_csv<W: Write>(summary: &BatchSummary, out: W) -> io::Result<()> {
    let mut w = csv_writer(out, &["seed", "rmse"])?;
    for r in &summary.rmse {
        w.serialize(r)?;
    }
    w.flush()
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], out: W) -> io::Result<()> {
    let header = [
        "variant",
        "mean_rmse",
        "std_rmse",
        "completed",
        "diverged",
        "improvement_over_linear_pct",
    ];
    let mut w = csv_writer(out, &header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

/// Human-readable comparison table.
pub fn format_comparison(rows: &[ComparisonRow]) -> String {
    let mut s = format!(
        "{:<10} {:>22} {:>9} {:>14}\n",
        "variant", "RMSE (mean +- std)", "diverged", "vs linear+pd"
    );
    for r in rows {
        let pct = r
            .improvement_over_linear_pct
            .map_or("n/a".to_string(), |p| format!("{p:+.1}%"));
        s.push_str(&format!(
            "{:<10} {:>10.4} +- {:<8.4} {:>9} {:>14}\n",
            r.variant.as_str(),
            r.mean_rmse,
            r.std_rmse,
            r.diverged,
            pct
        ));
    }
    s
}

#[derive(Debug, Serialize)]
pub struct Metadata<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub fingerprint: String,
    pub seeds: Vec<u64>,
    pub config: &'a ScenarioConfig,
    pub divergence: Vec<DivergedSeed>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
}

impl<'a> Metadata<'a> {
    pub fn new(config: &'a ScenarioConfig, seeds: Vec<u64>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            fingerprint: config.fingerprint(),
            seeds,
            config,
            divergence: Vec::new(),
            rmse: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metadata serializes")
    }
}
