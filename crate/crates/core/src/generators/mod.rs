//! Non-SDE synthetic generators.
//!
//! Each generator exposes a parameter struct, a `render` function that is a
//! pure map from parameters to values, and a `gen_*` entry point that samples
//! parameters. `generate` dispatches by kind and standardizes the output.

pub mod audio;
pub mod forecastpfn;
pub mod gaussian;
pub mod waveforms;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sde::{self, OUPriors};
use crate::stats;
use crate::timeseries::{Frequency, TimeSeries};

pub use audio::AudioKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GeneratorKind {
    ForecastPFN,
    KernelSynth,
    GP,
    CauKer,
    Sawtooth,
    Step,
    Anomaly,
    Spikes,
    SineWave,
    AudioStochasticRhythm,
    AudioFinancialVolatility,
    AudioNetworkTopology,
    AudioMultiScaleFractal,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 13] = [
        GeneratorKind::ForecastPFN,
        GeneratorKind::KernelSynth,
        GeneratorKind::GP,
        GeneratorKind::CauKer,
        GeneratorKind::Sawtooth,
        GeneratorKind::Step,
        GeneratorKind::Anomaly,
        GeneratorKind::Spikes,
        GeneratorKind::SineWave,
        GeneratorKind::AudioStochasticRhythm,
        GeneratorKind::AudioFinancialVolatility,
        GeneratorKind::AudioNetworkTopology,
        GeneratorKind::AudioMultiScaleFractal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::ForecastPFN => "forecast_pfn",
            GeneratorKind::KernelSynth => "kernel_synth",
            GeneratorKind::GP => "gp",
            GeneratorKind::CauKer => "cau_ker",
            GeneratorKind::Sawtooth => "sawtooth",
            GeneratorKind::Step => "step",
            GeneratorKind::Anomaly => "anomaly",
            GeneratorKind::Spikes => "spikes",
            GeneratorKind::SineWave => "sine_wave",
            GeneratorKind::AudioStochasticRhythm => "audio_stochastic_rhythm",
            GeneratorKind::AudioFinancialVolatility => "audio_financial_volatility",
            GeneratorKind::AudioNetworkTopology => "audio_network_topology",
            GeneratorKind::AudioMultiScaleFractal => "audio_multi_scale_fractal",
        }
    }

    /// Smallest length the generator accepts.
    pub fn min_length(self) -> usize {
        match self {
            GeneratorKind::ForecastPFN | GeneratorKind::Step | GeneratorKind::Anomaly | GeneratorKind::Spikes => 8,
            GeneratorKind::SineWave => 4,
            GeneratorKind::AudioStochasticRhythm
            | GeneratorKind::AudioFinancialVolatility
            | GeneratorKind::AudioNetworkTopology
            | GeneratorKind::AudioMultiScaleFractal => 32,
            _ => 2,
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase();
        let alias = match norm.as_str() {
            "forecastpfn" => "forecast_pfn",
            "kernelsynth" => "kernel_synth",
            "cauker" => "cau_ker",
            "sine" => "sine_wave",
            other => other,
        };
        GeneratorKind::ALL
            .into_iter()
            .find(|k| k.name() == alias)
            .ok_or_else(|| Error::InvalidInput(format!("unknown generator '{s}'")))
    }
}

impl Serialize for GeneratorKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for GeneratorKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A corpus source: one of the generators or the OU process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Generator(GeneratorKind),
    Sde,
}

impl Source {
    pub fn all() -> Vec<Source> {
        let mut v: Vec<Source> = GeneratorKind::ALL.into_iter().map(Source::Generator).collect();
        v.push(Source::Sde);
        v
    }

    pub fn name(self) -> &'static str {
        match self {
            Source::Generator(k) => k.name(),
            Source::Sde => "sde",
        }
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("sde") {
            Ok(Source::Sde)
        } else {
            s.parse().map(Source::Generator)
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-generator knobs exposed through the run config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSettings {
    pub forecastpfn_retries: usize,
    pub forecastpfn_filter_ratio: f64,
    pub forecastpfn_augment_prob: f64,
    pub gp_spike_prob: f64,
    pub gp_max_kernels: usize,
    pub gp_bank_weights: [f64; 8],
    pub kernel_synth_max_kernels: usize,
    pub cauker_max_parents: usize,
    pub spikes_noise_prob: f64,
    pub sde: OUPriors,
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        Self {
            forecastpfn_retries: 20,
            forecastpfn_filter_ratio: 1e3,
            forecastpfn_augment_prob: 0.2,
            gp_spike_prob: 0.3,
            gp_max_kernels: 6,
            gp_bank_weights: [1.0; 8],
            kernel_synth_max_kernels: 5,
            cauker_max_parents: 3,
            spikes_noise_prob: 0.5,
            sde: OUPriors::default(),
        }
    }
}

/// Zero median, unit IQR. Falls back to the standard deviation when the IQR
/// vanishes, and to centering alone for constant input.
pub fn standardize(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let med = stats::quantile_sorted(&sorted, 0.5);
    let iqr = stats::quantile_sorted(&sorted, 0.75) - stats::quantile_sorted(&sorted, 0.25);
    let scale = if iqr > 1e-12 * med.abs().max(1.0) {
        iqr
    } else {
        let sd = stats::std_dev(values);
        if sd > 1e-12 * med.abs().max(1.0) {
            sd
        } else {
            1.0
        }
    };
    values.iter().map(|v| (v - med) / scale).collect()
}

fn check_finite(out: Vec<TimeSeries>) -> Result<Vec<TimeSeries>> {
    match out.iter().find(|s| !s.is_finite()) {
        Some(s) => Err(Error::NonFinite(format!("generator output ({})", s.provenance))),
        None => Ok(out),
    }
}

/// Raw (unstandardized) output of one draw; CauKer yields 21 channels,
/// every other source one series.
pub fn generate_raw<R: Rng + ?Sized>(
    source: Source,
    rng: &mut R,
    length: usize,
    freq: Frequency,
    settings: &GeneratorSettings,
) -> Result<Vec<TimeSeries>> {
    if let Source::Generator(kind) = source {
        if length < kind.min_length() {
            return Err(Error::InvalidInput(format!(
                "{kind} needs length >= {}, got {length}",
                kind.min_length()
            )));
        }
    }
    let one = |s: TimeSeries| Ok(vec![s]);
    let out: Result<Vec<TimeSeries>> = match source {
        Source::Sde => one(sde::gen_sde(rng, length, freq, &settings.sde)?),
        Source::Generator(kind) => match kind {
            GeneratorKind::ForecastPFN => one(forecastpfn::gen_forecastpfn_with(
                rng,
                length,
                freq,
                settings.forecastpfn_retries,
                settings.forecastpfn_filter_ratio,
                settings.forecastpfn_augment_prob,
            )?),
            GeneratorKind::KernelSynth => one(gaussian::gen_kernel_synth_with(
                rng,
                length,
                freq,
                settings.kernel_synth_max_kernels,
            )?),
            GeneratorKind::GP => one(gaussian::gen_gp_with(
                rng,
                length,
                freq,
                &settings.gp_bank_weights,
                settings.gp_max_kernels,
                settings.gp_spike_prob,
            )?),
            GeneratorKind::CauKer => gaussian::gen_cauker_with(rng, length, freq, settings.cauker_max_parents),
            GeneratorKind::Sawtooth => one(waveforms::gen_sawtooth(rng, length, freq)?),
            GeneratorKind::Step => one(waveforms::gen_step(rng, length, freq)?),
            GeneratorKind::Anomaly => one(waveforms::gen_anomaly(rng, length, freq)?),
            GeneratorKind::Spikes => one(waveforms::gen_spikes_with(rng, length, freq, settings.spikes_noise_prob)?),
            GeneratorKind::SineWave => one(waveforms::gen_sine(rng, length, freq)?),
            GeneratorKind::AudioStochasticRhythm => one(audio::gen_audio(AudioKind::StochasticRhythm, rng, length, freq)?),
            GeneratorKind::AudioFinancialVolatility => {
                one(audio::gen_audio(AudioKind::FinancialVolatility, rng, length, freq)?)
            }
            GeneratorKind::AudioNetworkTopology => one(audio::gen_audio(AudioKind::NetworkTopology, rng, length, freq)?),
            GeneratorKind::AudioMultiScaleFractal => {
                one(audio::gen_audio(AudioKind::MultiScaleFractal, rng, length, freq)?)
            }
        },
    };
    check_finite(out?)
}

/// `generate_raw` followed by robust standardization of every series.
pub fn generate<R: Rng + ?Sized>(
    source: Source,
    rng: &mut R,
    length: usize,
    freq: Frequency,
    settings: &GeneratorSettings,
) -> Result<Vec<TimeSeries>> {
    Ok(generate_raw(source, rng, length, freq, settings)?
        .into_iter()
        .map(|s| {
            let v = standardize(&s.values);
            s.replace_values(v)
        })
        .collect())
}
