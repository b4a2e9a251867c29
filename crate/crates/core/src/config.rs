//! Scenario configuration: a sectioned TOML file layered over a named
//! built-in profile.
//!
//! Resolution merges the file's tables over the profile's defaults key by
//! key, then deserializes the result strictly (unknown keys are rejected)
//! and validates every numeric field.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controller::{ControllerVariant, PdGains, SaturationMode};
use crate::error::{Error, Result};
use crate::plants::{SurrogateActuatorParams, SurrogatePressureParams};
use crate::signals::{self, ReferenceSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    #[serde(rename = "sim-paper")]
    SimPaper,
    #[serde(rename = "sim-opt-pd")]
    SimOptPd,
    #[serde(rename = "surrogate-paper")]
    SurrogatePaper,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::SimPaper, Profile::SimOptPd, Profile::SurrogatePaper];

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::SimPaper => "sim-paper",
            Profile::SimOptPd => "sim-opt-pd",
            Profile::SurrogatePaper => "surrogate-paper",
        }
    }

    /// Default values for every section except `reference`.
    pub fn defaults(self) -> toml::Table {
        let text = match self {
            Profile::SimPaper => SIM_PAPER,
            Profile::SimOptPd => SIM_OPT_PD,
            Profile::SurrogatePaper => SURROGATE_PAPER,
        };
        let mut base: toml::Table = COMMON.parse().expect("built-in profile parses");
        merge(&mut base, text.parse().expect("built-in profile parses"));
        base
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s.trim()).ok_or_else(|| {
            Error::invalid(
                "profile",
                format!("unknown profile {s:?}; expected sim-paper, sim-opt-pd or surrogate-paper"),
            )
        })
    }
}

const COMMON: &str = r#"
[plant]
kind = "benchmark"

[plant.actuator]
lag_time = 0.15
hysteresis_gain = 6.0
full_scale_angle = 60.0
exponent = 1.2
max_angle = 70.0
bouc_wen = { a = 1.0, beta = 0.5, gamma = 0.5 }

[controller]
variant = "esn+pd"
kp = 1e-4
kd = 1e-6
saturation = { mode = "none" }

[reservoir]
size = 50
leaky_rate = 0.8
spectral_radius = 0.8
input_scale = 1.0
washout = 100
tap_size = 5
conversion_factor = 7.0
filter_factor = 0.01

[reservoir.pressure]
lag_time = 0.1
hysteresis_gain = 10.0
rest_pressure = 100.0
swing = 80.0
input_scale = 200.0
bouc_wen = { a = 1.0, beta = 0.5, gamma = 0.5 }

[learner]
learning_rate = 1.0
forgetting_factor = 0.999999
horizon = 5

[episode]
tick = 0.005
length = 20000
noise_std = 0.1
rmse_skip_ticks = 1000
metric_output = "true"
"#;

const SIM_PAPER: &str = "";

const SIM_OPT_PD: &str = r#"
[controller]
kp = 1e-2
kd = 1e-4
"#;

const SURROGATE_PAPER: &str = r#"
[plant]
kind = "surrogate_actuator"

[controller]
variant = "prc+pd"
kp = 1e-2
kd = 1e-4
saturation = { mode = "clamp", lo = 0.0, hi = 400.0 }

[learner]
horizon = 50

[episode]
length = 12000
noise_std = 0.1
rmse_skip_ticks = 2000
metric_output = "measured"
"#;

/// Recursively overlays `top` onto `base`.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) if key != "saturation" => merge(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    Benchmark,
    SurrogateActuator,
}

/// Which output series feeds metrics and batch aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSource {
    /// Noise-free plant output.
    True,
    /// Noisy feedback measurement.
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub kind: PlantKind,
    pub actuator: SurrogateActuatorParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub variant: ControllerVariant,
    pub kp: f64,
    pub kd: f64,
    pub saturation: SaturationMode,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceConfig {
    Step {
        amplitude: f64,
        onset_tick: usize,
    },
    Sine {
        offset: f64,
        amplitude: f64,
        freq_hz: f64,
    },
    /// Three-tone composite spanning `offset +- scale`; `freq_scale`
    /// stretches (< 1) or compresses (> 1) it in time.
    Complex {
        offset: f64,
        scale: f64,
        #[serde(default = "unit")]
        freq_scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirConfig {
    pub size: usize,
    pub leaky_rate: f64,
    pub spectral_radius: f64,
    pub input_scale: f64,
    pub washout: usize,
    pub tap_size: usize,
    pub conversion_factor: f64,
    pub filter_factor: f64,
    pub pressure: SurrogatePressureParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub learning_rate: f64,
    pub forgetting_factor: f64,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub tick: f64,
    pub length: usize,
    pub noise_std: f64,
    pub rmse_skip_ticks: usize,
    pub metric_output: OutputSource,
}

/// A fully resolved scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub profile: Profile,
    pub plant: PlantConfig,
    pub controller: ControllerConfig,
    pub reference: ReferenceConfig,
    pub reservoir: ReservoirConfig,
    pub learner: LearnerConfig,
    pub episode: EpisodeConfig,
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be > 0, got {v}")))
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite, got {v}")))
    }
}

impl ScenarioConfig {
    /// Profile defaults with the given reference.
    pub fn from_profile(profile: Profile, reference: ReferenceConfig) -> Self {
        let mut table = profile.defaults();
        table.insert("profile".into(), toml::Value::String(profile.as_str().into()));
        let reference = toml::Value::try_from(&reference).expect("reference serializes");
        table.insert("reference".into(), reference);
        let config: Self = table.try_into().expect("built-in profile is complete");
        config.validate().expect("built-in profile is valid");
        config
    }

    /// Parses a config file. `profile_override` wins over the file's
    /// `profile` key; with neither, `sim-paper` is used.
    pub fn parse(text: &str, profile_override: Option<Profile>) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::invalid("config", e.to_string().trim_end().to_string()))?;
        let profile = match profile_override {
            Some(p) => p,
            None => match user.get("profile") {
                Some(toml::Value::String(s)) => s.parse()?,
                Some(other) => return Err(Error::invalid("profile", format!("expected a string, got {other}"))),
                None => Profile::SimPaper,
            },
        };
        if !user.contains_key("reference") {
            return Err(Error::invalid("reference", "missing [reference] section"));
        }
        let mut table = profile.defaults();
        merge(&mut table, user);
        table.insert("profile".into(), toml::Value::String(profile.as_str().into()));
        let config: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::invalid("config", e.to_string().trim_end().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.episode;
        positive("episode.tick", e.tick)?;
        if e.length == 0 {
            return Err(Error::invalid("episode.length", "must be >= 1"));
        }
        if !(e.noise_std.is_finite() && e.noise_std >= 0.0) {
            return Err(Error::invalid(
                "episode.noise_std",
                format!("must be >= 0, got {}", e.noise_std),
            ));
        }
        if e.rmse_skip_ticks >= e.length {
            return Err(Error::invalid(
                "episode.rmse_skip_ticks",
                format!("must be below episode.length ({})", e.length),
            ));
        }

        let c = &self.controller;
        PdGains::new(c.kp, c.kd, e.tick)?;
        c.saturation.validate()?;

        let l = &self.learner;
        positive("learner.learning_rate", l.learning_rate)?;
        if !(l.forgetting_factor > 0.0 && l.forgetting_factor <= 1.0) {
            return Err(Error::invalid(
                "learner.forgetting_factor",
                format!("must lie in (0, 1], got {}", l.forgetting_factor),
            ));
        }
        if l.horizon == 0 {
            return Err(Error::invalid("learner.horizon", "must be >= 1"));
        }

        let r = &self.reservoir;
        if r.size == 0 {
            return Err(Error::invalid("reservoir.size", "must be >= 1"));
        }
        if r.size > 200 {
            return Err(Error::invalid(
                "reservoir.size",
                "full eigen-decomposition is limited to N <= 200",
            ));
        }
        if !(r.leaky_rate > 0.0 && r.leaky_rate <= 1.0) {
            return Err(Error::invalid(
                "reservoir.leaky_rate",
                format!("leaky rate must lie in (0, 1], got {}", r.leaky_rate),
            ));
        }
        positive("reservoir.spectral_radius", r.spectral_radius)?;
        finite("reservoir.input_scale", r.input_scale)?;
        if r.tap_size == 0 {
            return Err(Error::invalid("reservoir.tap_size", "must be >= 1"));
        }
        finite("reservoir.conversion_factor", r.conversion_factor)?;
        if !(r.filter_factor > 0.0 && r.filter_factor <= 1.0) {
            return Err(Error::invalid(
                "reservoir.filter_factor",
                format!("must lie in (0, 1], got {}", r.filter_factor),
            ));
        }
        let p = &r.pressure;
        positive("reservoir.pressure.lag_time", p.lag_time)?;
        positive("reservoir.pressure.input_scale", p.input_scale)?;
        finite("reservoir.pressure.hysteresis_gain", p.hysteresis_gain)?;
        finite("reservoir.pressure.rest_pressure", p.rest_pressure)?;
        finite("reservoir.pressure.swing", p.swing)?;

        let a = &self.plant.actuator;
        positive("plant.actuator.lag_time", a.lag_time)?;
        positive("plant.actuator.max_angle", a.max_angle)?;
        positive("plant.actuator.exponent", a.exponent)?;
        finite("plant.actuator.full_scale_angle", a.full_scale_angle)?;
        finite("plant.actuator.hysteresis_gain", a.hysteresis_gain)?;
        for (name, bw) in [("plant.actuator", a.bouc_wen), ("reservoir.pressure", p.bouc_wen)] {
            for (k, v) in [("a", bw.a), ("beta", bw.beta), ("gamma", bw.gamma)] {
                finite(&format!("{name}.bouc_wen.{k}"), v)?;
            }
        }

        match self.reference {
            ReferenceConfig::Step { amplitude, onset_tick } => {
                finite("reference.amplitude", amplitude)?;
                if onset_tick >= e.length {
                    return Err(Error::invalid("reference.onset_tick", "must be below episode.length"));
                }
            }
            ReferenceConfig::Sine {
                offset,
                amplitude,
                freq_hz,
            } => {
                finite("reference.offset", offset)?;
                finite("reference.amplitude", amplitude)?;
                if !(freq_hz.is_finite() && freq_hz >= 0.0) {
                    return Err(Error::invalid(
                        "reference.freq_hz",
                        format!("must be >= 0, got {freq_hz}"),
                    ));
                }
            }
            ReferenceConfig::Complex {
                offset,
                scale,
                freq_scale,
            } => {
                finite("reference.offset", offset)?;
                finite("reference.scale", scale)?;
                if !(freq_scale.is_finite() && freq_scale > 0.0) {
                    return Err(Error::invalid(
                        "reference.freq_scale",
                        format!("must be > 0, got {freq_scale}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn build_reference(&self) -> Result<ReferenceSignal> {
        let tick = self.episode.tick;
        let length = self.episode.length;
        match self.reference {
            ReferenceConfig::Step { amplitude, onset_tick } => {
                signals::generate_step(amplitude, onset_tick, length, tick)
            }
            ReferenceConfig::Sine {
                offset,
                amplitude,
                freq_hz,
            } => signals::generate_sine(offset, amplitude, freq_hz, tick, length),
            ReferenceConfig::Complex {
                offset,
                scale,
                freq_scale,
            } => signals::generate_complex(&signals::complex_preset(offset, scale, freq_scale), tick, length),
        }
    }

    /// The same scenario with a different controller variant.
    pub fn with_variant(&self, variant: ControllerVariant) -> Self {
        let mut c = self.clone();
        c.controller.variant = variant;
        c
    }

    /// Canonical serialization of the resolved config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical serialization.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::DEFAULT_FORGETTING;
    use crate::reservoir::DEFAULT_WASHOUT;

    const SINE: &str = "[reference]\npreset = \"sine\"\noffset = 0.0\namplitude = 0.5\nfreq_hz = 0.2\n";

    #[test]
    fn profiles_resolve_with_paper_values() {
        let c = ScenarioConfig::parse(SINE, None).unwrap();
        assert_eq!(c.profile, Profile::SimPaper);
        assert_eq!(c.reservoir.size, 50);
        assert_eq!(c.reservoir.leaky_rate, 0.8);
        assert_eq!(c.reservoir.spectral_radius, 0.8);
        assert_eq!(c.learner.horizon, 5);
        assert_eq!(c.learner.learning_rate, 1.0);
        assert_eq!(c.learner.forgetting_factor, DEFAULT_FORGETTING);
        assert_eq!(c.episode.tick, 5e-3);
        assert_eq!((c.controller.kp, c.controller.kd), (1e-4, 1e-6));
        assert_eq!(c.controller.saturation, SaturationMode::None);
        assert_eq!(c.episode.noise_std, 0.1);
        assert_eq!(c.reservoir.washout, DEFAULT_WASHOUT);

        let o = ScenarioConfig::parse(SINE, Some(Profile::SimOptPd)).unwrap();
        assert_eq!((o.controller.kp, o.controller.kd), (1e-2, 1e-4));

        let s = ScenarioConfig::parse(&format!("profile = \"surrogate-paper\"\n{SINE}"), None).unwrap();
        assert_eq!(s.plant.kind, PlantKind::SurrogateActuator);
        assert_eq!(s.learner.horizon, 50);
        assert_eq!(s.reservoir.tap_size, 5);
        assert_eq!(s.reservoir.filter_factor, 0.01);
        assert_eq!(s.reservoir.conversion_factor, 7.0);
        assert_eq!(s.controller.saturation, SaturationMode::Clamp { lo: 0.0, hi: 400.0 });
        assert_eq!((s.controller.kp, s.controller.kd), (1e-2, 1e-4));
        assert_eq!(s.episode.rmse_skip_ticks, 2000);
    }

    #[test]
    fn file_values_override_profile() {
        let text = format!("{SINE}[controller]\nkp = 0.5\n[reservoir]\nsize = 12\n");
        let c = ScenarioConfig::parse(&text, None).unwrap();
        assert_eq!(c.controller.kp, 0.5);
        assert_eq!(c.controller.kd, 1e-6);
        assert_eq!(c.reservoir.size, 12);
        assert_eq!(c.reservoir.leaky_rate, 0.8);
    }

    #[test]
    fn leaky_rate_bound_is_named() {
        let text = format!("{SINE}[reservoir]\nleaky_rate = 1.5\n");
        let err = ScenarioConfig::parse(&text, None).unwrap_err().to_string();
        assert!(err.contains("reservoir.leaky_rate") && err.contains("(0, 1]"), "{err}");
    }

    #[test]
    fn missing_reference_is_named() {
        let err = ScenarioConfig::parse("[controller]\nkp = 1.0\n", None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("reference"), "{err}");
    }

    #[test]
    fn unknown_keys_and_syntax_errors_are_reported() {
        let err = ScenarioConfig::parse(&format!("{SINE}[learner]\nalpha = 2\n"), None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("alpha"), "{err}");
        let err = ScenarioConfig::parse("[reference\npreset=", None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("line"), "{err}");
        let err = ScenarioConfig::parse(&format!("profile = \"nope\"\n{SINE}"), None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("profile"), "{err}");
    }

    #[test]
    fn invariant_violations() {
        for (extra, field) in [
            ("[controller]\nkp = -1.0\n", "controller.kp"),
            (
                "[controller]\nsaturation = { mode = \"clamp\", lo = 5.0, hi = 1.0 }\n",
                "controller.saturation",
            ),
            ("[learner]\nlearning_rate = 0.0\n", "learner.learning_rate"),
            ("[learner]\nforgetting_factor = 1.2\n", "learner.forgetting_factor"),
            ("[learner]\nhorizon = 0\n", "learner.horizon"),
            ("[reservoir]\nfilter_factor = 0.0\n", "reservoir.filter_factor"),
            ("[reservoir]\nspectral_radius = -0.8\n", "reservoir.spectral_radius"),
            ("[episode]\nnoise_std = -0.1\n", "episode.noise_std"),
            ("[episode]\ntick = 0.0\n", "episode.tick"),
            ("[episode]\nlength = 500\n", "episode.rmse_skip_ticks"),
        ] {
            let err = ScenarioConfig::parse(&format!("{SINE}{extra}"), None)
                .unwrap_err()
                .to_string();
            assert!(err.contains(field), "{extra}: {err}");
        }
    }

    #[test]
    fn resolved_config_round_trips_and_fingerprints() {
        let c = ScenarioConfig::parse(SINE, None).unwrap();
        let again = ScenarioConfig::parse(&c.to_toml(), None).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.fingerprint(), again.fingerprint());
        assert_eq!(c.fingerprint().len(), 16);
        assert_ne!(c.fingerprint(), c.with_variant(ControllerVariant::Pd).fingerprint());
    }

    #[test]
    fn from_profile_matches_parse() {
        let r = ReferenceConfig::Sine {
            offset: 0.0,
            amplitude: 0.5,
            freq_hz: 0.2,
        };
        assert_eq!(
            ScenarioConfig::from_profile(Profile::SimPaper, r),
            ScenarioConfig::parse(SINE, None).unwrap()
        );
    }
}
