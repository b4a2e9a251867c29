//! Fixed dynamical cores mapping the scalar future reference to a state vector.
//!
//! Two variants share one contract (`update(scalar) -> r-vector`): a leaky
//! echo state network, and a tap-delay readout of the simulated passive
//! pressure chamber standing in for a physical reservoir.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Uniform;

use crate::error::{Error, Result};
use crate::plants::{surrogate_pressure_step, SurrogatePressureParams, SurrogatePressureState};
use crate::rng::{self, Stream};

/// Default number of zero-input steps run before an ESN is used.
pub const DEFAULT_WASHOUT: usize = 100;

/// Radii below this cannot be rescaled.
const MIN_SPECTRAL_RADIUS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState {
    x: Vec<f64>,
}

impl ReservoirState {
    pub fn zeros(dim: usize) -> Self {
        Self { x: vec![0.0; dim] }
    }

    pub fn from_vec(x: Vec<f64>) -> Self {
        Self { x }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsnParams {
    pub size: usize,
    pub reservoir_matrix: DMatrix<f64>,
    pub input_layer: Vec<f64>,
    pub leaky_rate: f64,
    pub spectral_radius: f64,
    pub input_scale: f64,
    pub seed: u64,
}

/// Largest absolute eigenvalue, from a full (complex) eigen-decomposition.
pub fn spectral_radius(w: &DMatrix<f64>) -> f64 {
    w.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Rescales `w` so its spectral radius equals `target`.
pub fn spectral_scale(w: &DMatrix<f64>, target: f64) -> Result<DMatrix<f64>> {
    if !w.is_square() {
        return Err(Error::Dimension {
            context: "spectral_scale",
            expected: w.nrows(),
            got: w.ncols(),
        });
    }
    let radius = spectral_radius(w);
    if !(radius.is_finite() && radius >= MIN_SPECTRAL_RADIUS) {
        return Err(Error::Scaling { radius });
    }
    Ok(w * (target / radius))
}

fn check_esn_args(size: usize, spectral_radius: f64, leaky_rate: f64) -> Result<()> {
    if size == 0 {
        return Err(Error::invalid("reservoir.size", "must be >= 1"));
    }
    if !(spectral_radius.is_finite() && spectral_radius > 0.0) {
        return Err(Error::invalid(
            "reservoir.spectral_radius",
            format!("must be > 0, got {spectral_radius}"),
        ));
    }
    if !(leaky_rate > 0.0 && leaky_rate <= 1.0) {
        return Err(Error::invalid(
            "reservoir.leaky_rate",
            format!("leaky rate must lie in (0, 1], got {leaky_rate}"),
        ));
    }
    Ok(())
}

/// Draws an ESN from the reservoir-init stream of `seed`.
pub fn init_esn(seed: u64, size: usize, spectral_radius: f64, input_scale: f64, leaky_rate: f64) -> Result<EsnParams> {
    let mut rng = rng::stream(seed, Stream::ReservoirInit);
    init_esn_from_rng(&mut rng, seed, size, spectral_radius, input_scale, leaky_rate)
}

/// As [`init_esn`], drawing from a caller-supplied stream. `W` is filled
/// row by row from U(-0.5, 0.5), then `w_in` from U(-1, 1).
pub fn init_esn_from_rng(
    rng: &mut ChaCha8Rng,
    seed: u64,
    size: usize,
    spectral_radius: f64,
    input_scale: f64,
    leaky_rate: f64,
) -> Result<EsnParams> {
    check_esn_args(size, spectral_radius, leaky_rate)?;
    let half = Uniform::new(-0.5, 0.5).expect("valid range");
    let unit = Uniform::new(-1.0, 1.0).expect("valid range");
    let raw = DMatrix::from_row_iterator(size, size, (0..size * size).map(|_| rng.sample(half)));
    let reservoir_matrix = spectral_scale(&raw, spectral_radius)?;
    let input_layer = (0..size).map(|_| rng.sample(unit) * input_scale).collect();
    Ok(EsnParams {
        size,
        reservoir_matrix,
        input_layer,
        leaky_rate,
        spectral_radius,
        input_scale,
        seed,
    })
}

impl EsnParams {
    /// Builds parameters from explicit matrices, without rescaling.
    pub fn from_parts(reservoir_matrix: DMatrix<f64>, input_layer: Vec<f64>, leaky_rate: f64) -> Result<Self> {
        let size = input_layer.len();
        if reservoir_matrix.nrows() != size || reservoir_matrix.ncols() != size {
            return Err(Error::Dimension {
                context: "reservoir matrix",
                expected: size,
                got: reservoir_matrix.nrows(),
            });
        }
        check_esn_args(size.max(1), 1.0, leaky_rate)?;
        let spectral_radius = spectral_radius(&reservoir_matrix);
        Ok(Self {
            size,
            reservoir_matrix,
            input_layer,
            leaky_rate,
            spectral_radius,
            input_scale: 1.0,
            seed: 0,
        })
    }

    /// A state drawn uniformly from `[-1, 1]^N`.
    pub fn random_state(&self, rng: &mut ChaCha8Rng) -> ReservoirState {
        let unit = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
        ReservoirState::from_vec((0..self.size).map(|_| rng.sample(unit)).collect())
    }

    /// In-place leaky update; `scratch` must have length N.
    fn step_in_place(&self, x: &mut [f64], scratch: &mut [f64], input: f64) {
        let n = self.size;
        scratch.copy_from_slice(&self.input_layer);
        for s in scratch.iter_mut() {
            *s *= input;
        }
        // Column-major storage: walk columns for contiguous access.
        let w = self.reservoir_matrix.as_slice();
        for (j, &xj) in x.iter().enumerate() {
            let col = &w[j * n..(j + 1) * n];
            for (s, &wij) in scratch.iter_mut().zip(col) {
                *s += wij * xj;
            }
        }
        let g = self.leaky_rate;
        for (xi, &pre) in x.iter_mut().zip(scratch.iter()) {
            *xi = (1.0 - g) * *xi + g * pre.tanh();
        }
    }

    fn check_dim(&self, state: &ReservoirState) -> Result<()> {
        if state.dim() != self.size {
            return Err(Error::Dimension {
                context: "esn state",
                expected: self.size,
                got: state.dim(),
            });
        }
        Ok(())
    }
}

/// `x' = (1 - g) x + g tanh(W x + w_in u)`.
pub fn esn_update(state: &ReservoirState, params: &EsnParams, input: f64) -> Result<ReservoirState> {
    params.check_dim(state)?;
    let mut x = state.x.clone();
    let mut scratch = vec![0.0; params.size];
    params.step_in_place(&mut x, &mut scratch, input);
    Ok(ReservoirState { x })
}

/// Runs `steps` zero-input updates.
pub fn washout(state: &ReservoirState, params: &EsnParams, steps: usize) -> Result<ReservoirState> {
    params.check_dim(state)?;
    let mut x = state.x.clone();
    let mut scratch = vec![0.0; params.size];
    for _ in 0..steps {
        params.step_in_place(&mut x, &mut scratch, 0.0);
    }
    Ok(ReservoirState { x })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TapDelayParams {
    /// Number of filtered readouts stacked into the state.
    pub tap_size: usize,
    /// kPa per output unit.
    pub conversion_factor: f64,
    /// Low-pass blend in (0, 1].
    pub filter_factor: f64,
    /// Seconds.
    pub tick: f64,
    pub surrogate: SurrogatePressureParams,
}

impl TapDelayParams {
    pub fn validate(&self) -> Result<()> {
        if self.tap_size == 0 {
            return Err(Error::invalid("reservoir.tap_size", "must be >= 1"));
        }
        if !(self.filter_factor > 0.0 && self.filter_factor <= 1.0) {
            return Err(Error::invalid(
                "reservoir.filter_factor",
                format!("must lie in (0, 1], got {}", self.filter_factor),
            ));
        }
        if !(self.tick.is_finite() && self.tick > 0.0) {
            return Err(Error::invalid("episode.tick", "must be > 0"));
        }
        Ok(())
    }

    fn advance(&self, taps: &mut [f64], chamber: &mut SurrogatePressureState, input: f64) {
        let p_in = self.conversion_factor * input;
        *chamber = surrogate_pressure_step(*chamber, &self.surrogate, p_in, self.tick);
        // Newest first, so taps[0] is the previous filtered readout.
        let filtered = self.filter_factor * chamber.pressure + (1.0 - self.filter_factor) * taps[0];
        taps.rotate_right(1);
        taps[0] = filtered;
    }
}

/// One tap-delay step: converts the input to pressure, advances the chamber,
/// low-pass filters its readout and shifts it into the front of the buffer.
pub fn tap_delay_update(
    state: &ReservoirState,
    params: &TapDelayParams,
    chamber: SurrogatePressureState,
    input: f64,
) -> Result<(ReservoirState, SurrogatePressureState)> {
    if state.dim() != params.tap_size {
        return Err(Error::Dimension {
            context: "tap-delay state",
            expected: params.tap_size,
            got: state.dim(),
        });
    }
    let mut x = state.x.clone();
    let mut chamber = chamber;
    params.advance(&mut x, &mut chamber, input);
    Ok((ReservoirState { x }, chamber))
}

/// The reservoir held by a running episode.
#[derive(Debug, Clone)]
pub enum Reservoir {
    Esn {
        params: EsnParams,
        state: ReservoirState,
        scratch: Vec<f64>,
    },
    TapDelay {
        params: TapDelayParams,
        state: ReservoirState,
        chamber: SurrogatePressureState,
    },
    /// No reservoir: the state is empty.
    Empty,
}

impl Reservoir {
    pub fn esn(params: EsnParams, state: ReservoirState) -> Result<Self> {
        params.check_dim(&state)?;
        let scratch = vec![0.0; params.size];
        Ok(Reservoir::Esn { params, state, scratch })
    }

    /// Tap buffer zeroed, chamber at its pre-pressurized rest point.
    pub fn tap_delay(params: TapDelayParams) -> Result<Self> {
        params.validate()?;
        let chamber = SurrogatePressureState::at_rest(&params.surrogate);
        let state = ReservoirState::zeros(params.tap_size);
        Ok(Reservoir::TapDelay { params, state, chamber })
    }

    pub fn dim(&self) -> usize {
        self.state().len()
    }

    pub fn state(&self) -> &[f64] {
        match self {
            Reservoir::Esn { state, .. } | Reservoir::TapDelay { state, .. } => state.as_slice(),
            Reservoir::Empty => &[],
        }
    }

    pub fn update(&mut self, input: f64) {
        match self {
            Reservoir::Esn { params, state, scratch } => params.step_in_place(&mut state.x, scratch, input),
            Reservoir::TapDelay { params, state, chamber } => params.advance(&mut state.x, chamber, input),
            Reservoir::Empty => {}
        }
    }
}
