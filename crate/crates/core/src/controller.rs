//! Two-degree-of-freedom control: reservoir feedforward plus incremental PD
//! feedback, with the per-tick orchestration of learning and actuation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::LearnerState;
use crate::plants::{NoiseModel, Plant};
use crate::reservoir::Reservoir;
use crate::signals::{FutureWindow, ReferenceSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControllerVariant {
    #[serde(rename = "esn+pd")]
    EsnPd,
    #[serde(rename = "prc+pd")]
    PrcPd,
    #[serde(rename = "linear+pd")]
    LinearPd,
    #[serde(rename = "pd")]
    Pd,
}

impl ControllerVariant {
    pub const ALL: [ControllerVariant; 4] = [
        ControllerVariant::EsnPd,
        ControllerVariant::PrcPd,
        ControllerVariant::LinearPd,
        ControllerVariant::Pd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerVariant::EsnPd => "esn+pd",
            ControllerVariant::PrcPd => "prc+pd",
            ControllerVariant::LinearPd => "linear+pd",
            ControllerVariant::Pd => "pd",
        }
    }

    pub fn has_feedforward(self) -> bool {
        self != ControllerVariant::Pd
    }
}

impl fmt::Display for ControllerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s.trim()).ok_or_else(|| {
            Error::invalid(
                "controller.variant",
                format!("unknown variant {s:?}; expected one of esn+pd, prc+pd, linear+pd, pd"),
            )
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
    /// Seconds.
    pub tick: f64,
}

impl PdGains {
    pub fn new(kp: f64, kd: f64, tick: f64) -> Result<Self> {
        let g = Self { kp, kd, tick };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kp.is_finite() && self.kp >= 0.0) {
            return Err(Error::invalid(
                "controller.kp",
                format!("must be >= 0, got {}", self.kp),
            ));
        }
        if !(self.kd.is_finite() && self.kd >= 0.0) {
            return Err(Error::invalid(
                "controller.kd",
                format!("must be >= 0, got {}", self.kd),
            ));
        }
        if !(self.tick.is_finite() && self.tick > 0.0) {
            return Err(Error::invalid(
                "episode.tick",
                format!("must be > 0, got {}", self.tick),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum SaturationMode {
    None,
    Clamp { lo: f64, hi: f64 },
}

impl SaturationMode {
    pub fn validate(&self) -> Result<()> {
        if let SaturationMode::Clamp { lo, hi } = *self {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(
                    "controller.saturation",
                    format!("clamp requires lo < hi, got [{lo}, {hi}]"),
                ));
            }
        }
        Ok(())
    }
}

/// `u_ff = w . [x, window]`.
pub fn feedforward(weights: &[f64], state: &[f64], window: &FutureWindow) -> Result<f64> {
    let dim = state.len() + window.horizon();
    if weights.len() != dim {
        return Err(Error::Dimension {
            context: "feedforward weights",
            expected: dim,
            got: weights.len(),
        });
    }
    Ok(weights
        .iter()
        .zip(state.iter().chain(window.values()))
        .map(|(w, v)| w * v)
        .sum())
}

/// `u_fb = Kp e_k + Kd (e_k - e_{k-1}) / tau`.
pub fn pd_feedback(err: f64, prev_err: f64, gains: &PdGains) -> f64 {
    gains.kp * err + gains.kd * (err - prev_err) / gains.tick
}

/// Incremental combination `u_k = u_applied_{k-1} + u_ff_k - u_ff_{k-1} + u_fb_k`.
pub fn combine(prev_applied: f64, u_ff: f64, prev_u_ff: f64, u_fb: f64) -> f64 {
    prev_applied + u_ff - prev_u_ff + u_fb
}

pub fn saturate(u: f64, mode: SaturationMode) -> f64 {
    match mode {
        SaturationMode::None => u,
        SaturationMode::Clamp { lo, hi } => u.max(lo).min(hi),
    }
}

/// One tick's record.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlFrame {
    pub k: usize,
    pub reference: f64,
    pub y_true: f64,
    pub y_measured: f64,
    pub u_ff: f64,
    pub u_fb: f64,
    pub u_raw: f64,
    pub u_applied: f64,
    pub err_feedback: f64,
    /// A-priori RLS error, when an update ran this tick.
    pub rls_error: Option<f64>,
    /// Reservoir state after this tick's update; empty unless capture is on.
    pub reservoir_state: Vec<f64>,
}

/// Fixed-capacity history of equally sized records, newest at age 0.
#[derive(Debug, Clone)]
struct Ring {
    width: usize,
    capacity: usize,
    data: Vec<f64>,
    next: usize,
    len: usize,
}

impl Ring {
    fn new(capacity: usize, width: usize) -> Self {
        Self {
            width,
            capacity,
            data: vec![0.0; capacity * width],
            next: 0,
            len: 0,
        }
    }

    fn push(&mut self, record: &[f64]) {
        let start = self.next * self.width;
        self.data[start..start + self.width].copy_from_slice(record);
        self.next = (self.next + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    fn get(&self, age: usize) -> &[f64] {
        debug_assert!(age < self.len);
        let slot = (self.next + self.capacity - 1 - age) % self.capacity;
        &self.data[slot * self.width..(slot + 1) * self.width]
    }
}

/// Delayed data needed to build learning pairs, each holding `horizon + 1`
/// records.
#[derive(Debug, Clone)]
pub struct HistoryBuffers {
    horizon: usize,
    states: Ring,
    inputs: Ring,
    measurements: Ring,
    prev_u_ff: f64,
    prev_err: f64,
    prev_applied: f64,
}

impl HistoryBuffers {
    pub fn new(horizon: usize, state_dim: usize) -> Self {
        Self {
            horizon,
            states: Ring::new(horizon + 1, state_dim),
            inputs: Ring::new(horizon + 1, 1),
            measurements: Ring::new(horizon + 1, 1),
            prev_u_ff: 0.0,
            prev_err: 0.0,
            prev_applied: 0.0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.horizon + 1
    }

    /// Writes `[x_{k-d}, y~_{k-d+1}, ..., y~_k]` into `out` and returns the
    /// target `u_applied_{k-d}`. Must be called after `y~_k` is recorded and
    /// before `x_k`, `u_k` are.
    fn delayed_pair(&self, out: &mut [f64]) -> Option<f64> {
        let d = self.horizon;
        if self.states.len < d || self.measurements.len < d {
            return None;
        }
        let r = self.states.width;
        out[..r].copy_from_slice(self.states.get(d - 1));
        for j in 0..d {
            out[r + j] = self.measurements.get(d - 1 - j)[0];
        }
        Some(self.inputs.get(d - 1)[0])
    }
}

/// Everything a control loop needs, assembled by the caller.
#[derive(Debug, Clone)]
pub struct LoopParts {
    pub reservoir: Reservoir,
    /// `None` disables the feedforward branch (pure incremental PD).
    pub learner: Option<LearnerState>,
    pub gains: PdGains,
    pub saturation: SaturationMode,
    pub plant: Plant,
    pub noise: NoiseModel,
    pub reference: ReferenceSignal,
    pub horizon: usize,
    pub capture_states: bool,
}

/// A running episode: owns all per-episode state and advances one tick at a time.
#[derive(Debug, Clone)]
pub struct ControlLoop {
    reservoir: Reservoir,
    learner: Option<LearnerState>,
    gains: PdGains,
    saturation: SaturationMode,
    plant: Plant,
    noise: NoiseModel,
    reference: ReferenceSignal,
    horizon: usize,
    history: HistoryBuffers,
    capture_states: bool,
    k: usize,
    extended: Vec<f64>,
}

impl ControlLoop {
    pub fn new(parts: LoopParts) -> Result<Self> {
        if parts.horizon == 0 {
            return Err(Error::invalid("learner.horizon", "must be >= 1"));
        }
        parts.gains.validate()?;
        parts.saturation.validate()?;
        let dim = parts.reservoir.dim() + parts.horizon;
        if let Some(l) = &parts.learner {
            if l.dim() != dim {
                return Err(Error::Dimension {
                    context: "learner vs reservoir + horizon",
                    expected: dim,
                    got: l.dim(),
                });
            }
        }
        Ok(Self {
            history: HistoryBuffers::new(parts.horizon, parts.reservoir.dim()),
            extended: vec![0.0; dim],
            reservoir: parts.reservoir,
            learner: parts.learner,
            gains: parts.gains,
            saturation: parts.saturation,
            plant: parts.plant,
            noise: parts.noise,
            reference: parts.reference,
            horizon: parts.horizon,
            capture_states: parts.capture_states,
            k: 0,
        })
    }

    pub fn tick_index(&self) -> usize {
        self.k
    }

    pub fn is_finished(&self) -> bool {
        self.k >= self.reference.len()
    }

    pub fn learner(&self) -> Option<&LearnerState> {
        self.learner.as_ref()
    }

    pub fn reservoir(&self) -> &Reservoir {
        &self.reservoir
    }

    /// Advances one tick. Errors carry the tick index.
    pub fn tick(&mut self) -> Result<ControlFrame> {
        let k = self.k;
        self.step(k).map_err(|e| e.at_tick(k))
    }

    fn step(&mut self, k: usize) -> Result<ControlFrame> {
        if k >= self.reference.len() {
            return Err(Error::Index {
                index: k,
                len: self.reference.len(),
            });
        }
        let d = self.horizon;
        let r = self.reservoir.dim();

        // Measure.
        let y_true = self.plant.output();
        let y_measured = self.noise.add_noise(y_true);
        self.history.measurements.push(&[y_measured]);

        // Learn from the delayed pair, then hand weights over.
        let mut rls_error = None;
        if let Some(learner) = self.learner.as_mut() {
            if let Some(target) = self.history.delayed_pair(&mut self.extended) {
                rls_error = Some(learner.update(&self.extended, target)?);
                learner.sync_weights();
            }
        }

        // Drive the reservoir with the furthest future reference.
        self.reservoir.update(self.reference.at(k + d));

        // Act.
        let reference = self.reference.at(k);
        let u_ff = match &self.learner {
            Some(learner) => {
                self.extended[..r].copy_from_slice(self.reservoir.state());
                self.reference.fill_future_window(k, &mut self.extended[r..])?;
                learner.control_output(&self.extended)
            }
            None => 0.0,
        };
        let err_feedback = reference - y_measured;
        let u_fb = pd_feedback(err_feedback, self.history.prev_err, &self.gains);
        let u_raw = combine(self.history.prev_applied, u_ff, self.history.prev_u_ff, u_fb);
        if !u_raw.is_finite() {
            return Err(Error::LearnerDiverged {
                reason: format!("non-finite control output {u_raw}"),
            });
        }
        let u_applied = saturate(u_raw, self.saturation);
        self.plant.apply(u_applied)?;

        self.history.states.push(self.reservoir.state());
        self.history.inputs.push(&[u_applied]);
        self.history.prev_u_ff = u_ff;
        self.history.prev_err = err_feedback;
        self.history.prev_applied = u_applied;
        self.k += 1;

        Ok(ControlFrame {
            k,
            reference,
            y_true,
            y_measured,
            u_ff,
            u_fb,
            u_raw,
            u_applied,
            err_feedback,
            rls_error,
            reservoir_state: if self.capture_states {
                self.reservoir.state().to_vec()
            } else {
                Vec::new()
            },
        })
    }

    /// Runs to the end of the reference. On error, returns the frames
    /// produced so far together with the error.
    pub fn run(&mut self) -> (Vec<ControlFrame>, Option<Error>) {
        let mut frames = Vec::with_capacity(self.reference.len().saturating_sub(self.k));
        while !self.is_finished() {
            match self.tick() {
                Ok(f) => frames.push(f),
                Err(e) => return (frames, Some(e)),
            }
        }
        (frames, None)
    }
}
