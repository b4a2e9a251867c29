//! Controlled plants and the surrogate physical-reservoir pressure dynamics.
//!
//! The benchmark plant is the classic cubic-input nonlinear system. The two
//! surrogates stand in for hardware: a hysteretic bending actuator driven by
//! pressure, and the sealed passive chamber whose pressure is read out as
//! the physical reservoir state. Both use a first-order lag toward a static
//! map plus a Bouc-Wen hysteresis term on input increments normalized by
//! the full-scale pressure.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Outputs beyond this magnitude abort the episode.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// Full-scale pressure used to normalize hysteresis increments (kPa).
pub const FULL_SCALE_PRESSURE: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BenchmarkPlantState {
    pub y: f64,
}

/// `y' = y / (1 + y^2) + u^3`.
pub fn benchmark_step(state: BenchmarkPlantState, u: f64) -> Result<BenchmarkPlantState> {
    let y = state.y;
    let next = y / (1.0 + y * y) + u * u * u;
    if !next.is_finite() || next.abs() > DIVERGENCE_BOUND {
        return Err(Error::PlantDiverged { value: next });
    }
    Ok(BenchmarkPlantState { y: next })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoucWenParams {
    pub a: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for BoucWenParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            beta: 0.5,
            gamma: 0.5,
        }
    }
}

impl BoucWenParams {
    /// One discrete Bouc-Wen step for a normalized input increment `dp`.
    pub fn step(&self, h: f64, dp: f64) -> f64 {
        h + self.a * dp - self.beta * dp.abs() * h - self.gamma * dp * h.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateActuatorParams {
    /// Seconds.
    pub lag_time: f64,
    /// Degrees per unit of hysteresis state.
    pub hysteresis_gain: f64,
    /// Static angle at full-scale pressure (degrees).
    pub full_scale_angle: f64,
    pub exponent: f64,
    /// Upper clamp on the angle (degrees).
    pub max_angle: f64,
    pub bouc_wen: BoucWenParams,
}

impl Default for SurrogateActuatorParams {
    fn default() -> Self {
        Self {
            lag_time: 0.15,
            hysteresis_gain: 6.0,
            full_scale_angle: 60.0,
            exponent: 1.2,
            max_angle: 70.0,
            bouc_wen: BoucWenParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SurrogateActuatorState {
    /// Degrees.
    pub angle: f64,
    pub hysteresis: f64,
    /// kPa.
    pub previous_pressure: f64,
}

/// Advances the surrogate bending actuator by one tick under pressure `u` (kPa).
///
/// Pressure outside `[0, 400]` is clamped before use.
pub fn surrogate_actuator_step(
    state: SurrogateActuatorState,
    params: &SurrogateActuatorParams,
    pressure: f64,
    tick: f64,
) -> SurrogateActuatorState {
    let p = pressure.clamp(0.0, FULL_SCALE_PRESSURE);
    let dp = (p - state.previous_pressure) / FULL_SCALE_PRESSURE;
    let hysteresis = params.bouc_wen.step(state.hysteresis, dp);
    let target =
        params.full_scale_angle * (p / FULL_SCALE_PRESSURE).powf(params.exponent) + params.hysteresis_gain * hysteresis;
    let angle = state.angle + (tick / params.lag_time) * (target - state.angle);
    SurrogateActuatorState {
        angle: angle.clamp(0.0, params.max_angle),
        hysteresis,
        previous_pressure: p,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogatePressureParams {
    /// Seconds.
    pub lag_time: f64,
    /// kPa per unit of hysteresis state.
    pub hysteresis_gain: f64,
    /// Sealed-chamber pressure at rest (kPa).
    pub rest_pressure: f64,
    /// Maximum pressure rise above rest (kPa).
    pub swing: f64,
    /// Input pressure at which the rise reaches tanh(1) of the swing (kPa).
    pub input_scale: f64,
    pub bouc_wen: BoucWenParams,
}

impl Default for SurrogatePressureParams {
    fn default() -> Self {
        Self {
            lag_time: 0.1,
            hysteresis_gain: 10.0,
            rest_pressure: 100.0,
            swing: 80.0,
            input_scale: 200.0,
            bouc_wen: BoucWenParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogatePressureState {
    /// Passive-chamber pressure (kPa).
    pub pressure: f64,
    pub hysteresis: f64,
    /// kPa.
    pub previous_input: f64,
}

impl SurrogatePressureState {
    /// Pre-pressurized chamber at rest.
    pub fn at_rest(params: &SurrogatePressureParams) -> Self {
        Self {
            pressure: params.rest_pressure,
            hysteresis: 0.0,
            previous_input: 0.0,
        }
    }
}

/// Advances the passive-chamber surrogate by one tick under active-chamber
/// pressure `input` (kPa). Negative input is treated as zero.
pub fn surrogate_pressure_step(
    state: SurrogatePressureState,
    params: &SurrogatePressureParams,
    input: f64,
    tick: f64,
) -> SurrogatePressureState {
    let p_in = input.max(0.0);
    let dp = (p_in - state.previous_input) / FULL_SCALE_PRESSURE;
    let hysteresis = params.bouc_wen.step(state.hysteresis, dp);
    let target =
        params.rest_pressure + params.swing * (p_in / params.input_scale).tanh() + params.hysteresis_gain * hysteresis;
    let pressure = state.pressure + (tick / params.lag_time) * (target - state.pressure);
    SurrogatePressureState {
        pressure: pressure.max(0.0),
        hysteresis,
        previous_input: p_in,
    }
}

/// Additive Gaussian sensor noise with its own RNG stream.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    std_dev: f64,
    dist: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl NoiseModel {
    /// Noise stream derived from an episode seed.
    pub fn new(std_dev: f64, seed: u64) -> Result<Self> {
        Self::with_rng(std_dev, rng::stream(seed, Stream::SensorNoise))
    }

    pub fn with_rng(std_dev: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(std_dev.is_finite() && std_dev >= 0.0) {
            return Err(Error::invalid(
                "episode.noise_std",
                format!("must be >= 0, got {std_dev}"),
            ));
        }
        let dist = if std_dev > 0.0 {
            Some(Normal::new(0.0, std_dev).map_err(|e| Error::invalid("episode.noise_std", e.to_string()))?)
        } else {
            None
        };
        Ok(Self { std_dev, dist, rng })
    }

    pub fn std_dev(&self) -> f64 {
        self.std_dev
    }

    pub fn add_noise(&mut self, y: f64) -> f64 {
        match &self.dist {
            Some(d) => y + d.sample(&mut self.rng),
            None => y,
        }
    }
}

/// The controlled system of an episode.
#[derive(Debug, Clone)]
pub enum Plant {
    Benchmark(BenchmarkPlantState),
    Actuator {
        params: SurrogateActuatorParams,
        state: SurrogateActuatorState,
        tick: f64,
    },
}

impl Plant {
    pub fn output(&self) -> f64 {
        match self {
            Plant::Benchmark(s) => s.y,
            Plant::Actuator { state, .. } => state.angle,
        }
    }

    pub fn apply(&mut self, u: f64) -> Result<()> {
        match self {
            Plant::Benchmark(s) => *s = benchmark_step(*s, u)?,
            Plant::Actuator { params, state, tick } => *state = surrogate_actuator_step(*state, params, u, *tick),
        }
        Ok(())
    }
}
