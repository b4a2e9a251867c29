//! Reference trajectories and the future-reference window consumed by the
//! controller and the learner.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sampled reference trajectory with a fixed tick interval (seconds).
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSignal {
    samples: Vec<f64>,
    tick: f64,
}

impl ReferenceSignal {
    pub fn new(samples: Vec<f64>, tick: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid(
                "reference.length",
                "signal must hold at least one sample",
            ));
        }
        if !(tick.is_finite() && tick > 0.0) {
            return Err(Error::invalid(
                "episode.tick",
                format!("tick interval must be > 0, got {tick}"),
            ));
        }
        if let Some(k) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("reference", format!("sample {k} is not finite")));
        }
        Ok(Self { samples, tick })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn tick_interval(&self) -> f64 {
        self.tick
    }

    /// Sample at `k`, holding the final value past the end.
    pub fn at(&self, k: usize) -> f64 {
        let last = self.samples.len() - 1;
        self.samples[k.min(last)]
    }

    /// `[y_{k+1}, ..., y_{k+horizon}]`, padded with the final sample.
    pub fn future_window(&self, k: usize, horizon: usize) -> Result<FutureWindow> {
        if horizon == 0 {
            return Err(Error::invalid("learner.horizon", "horizon must be >= 1"));
        }
        let mut values = vec![0.0; horizon];
        self.fill_future_window(k, &mut values)?;
        Ok(FutureWindow { values })
    }

    /// Allocation-free form of [`ReferenceSignal::future_window`]; the window
    /// length is `out.len()`.
    pub fn fill_future_window(&self, k: usize, out: &mut [f64]) -> Result<()> {
        if k >= self.samples.len() {
            return Err(Error::Index {
                index: k,
                len: self.samples.len(),
            });
        }
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = self.at(k + j + 1);
        }
        Ok(())
    }
}

/// The next `horizon` reference samples, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct FutureWindow {
    values: Vec<f64>,
}

impl FutureWindow {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }
}

fn check_length(length: usize) -> Result<()> {
    if length == 0 {
        return Err(Error::invalid("episode.length", "length must be positive"));
    }
    Ok(())
}

/// Zero before `onset_tick`, `amplitude` from then on.
pub fn generate_step(amplitude: f64, onset_tick: usize, length: usize, tick: f64) -> Result<ReferenceSignal> {
    check_length(length)?;
    if onset_tick >= length {
        return Err(Error::invalid(
            "reference.onset_tick",
            format!("onset {onset_tick} must be before the end of the signal ({length})"),
        ));
    }
    let samples = (0..length)
        .map(|k| if k < onset_tick { 0.0 } else { amplitude })
        .collect();
    ReferenceSignal::new(samples, tick)
}

/// `offset + amplitude * sin(2*pi*freq_hz*k*tick)`.
pub fn generate_sine(offset: f64, amplitude: f64, freq_hz: f64, tick: f64, length: usize) -> Result<ReferenceSignal> {
    generate_complex(
        &[SineComponent {
            offset,
            amplitude,
            freq_hz,
            phase: 0.0,
        }],
        tick,
        length,
    )
}

/// One sinusoidal term of a composite reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineComponent {
    pub offset: f64,
    pub amplitude: f64,
    pub freq_hz: f64,
    /// Radians.
    pub phase: f64,
}

impl SineComponent {
    fn value(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (2.0 * PI * self.freq_hz * t + self.phase).sin()
    }
}

/// Pointwise sum of sinusoid components.
pub fn generate_complex(components: &[SineComponent], tick: f64, length: usize) -> Result<ReferenceSignal> {
    if components.is_empty() {
        return Err(Error::invalid(
            "reference.components",
            "at least one component is required",
        ));
    }
    check_length(length)?;
    if !(tick.is_finite() && tick > 0.0) {
        return Err(Error::invalid(
            "episode.tick",
            format!("tick interval must be > 0, got {tick}"),
        ));
    }
    for c in components {
        if !(c.freq_hz.is_finite() && c.freq_hz >= 0.0) {
            return Err(Error::invalid(
                "reference.freq_hz",
                format!("frequency must be >= 0, got {}", c.freq_hz),
            ));
        }
    }
    let samples = (0..length)
        .map(|k| {
            let t = k as f64 * tick;
            components.iter().map(|c| c.value(t)).sum()
        })
        .collect();
    ReferenceSignal::new(samples, tick)
}

/// Frequencies of the composite preset, in Hz.
pub const COMPLEX_PRESET_FREQS: [f64; 3] = [0.1, 0.23, 0.37];

/// Three-tone composite reference centred on `offset`. The amplitudes sum to
/// `scale`, so the signal never leaves `[offset - scale, offset + scale]`.
/// `freq_scale` multiplies every preset frequency.
pub fn complex_preset(offset: f64, scale: f64, freq_scale: f64) -> Vec<SineComponent> {
    const WEIGHTS: [f64; 3] = [0.45, 0.35, 0.2];
    const PHASES: [f64; 3] = [0.0, 1.3, 2.9];
    (0..3)
        .map(|i| SineComponent {
            offset: if i == 0 { offset } else { 0.0 },
            amplitude: WEIGHTS[i] * scale,
            freq_hz: COMPLEX_PRESET_FREQS[i] * freq_scale,
            phase: PHASES[i],
        })
        .collect()
}
