//! Waveform synthesis, resampling and arbitrary-waveform-generator modeling.
//!
//! [`SampledWaveform`] is the currency every other module trades in: a
//! uniformly sampled real signal with a units tag. [`AwgModel`] turns ideal
//! drive definitions into band-limited, quantized, amplitude-clamped signals
//! the way a real generator would.

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Default internal simulation rate: 50 GS/s, i.e. 20 ps per sample.
pub const SIM_RATE_HZ: f64 = 50e9;

/// Physical unit carried by a waveform's samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Units {
    #[serde(rename = "mA")]
    MilliAmp,
    #[serde(rename = "V")]
    Volt,
    #[serde(rename = "mW")]
    MilliWatt,
    #[serde(rename = "GHz")]
    GigaHertz,
    #[serde(rename = "dimensionless")]
    Dimensionless,
}

impl std::fmt::Display for Units {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Units::MilliAmp => "mA",
            Units::Volt => "V",
            Units::MilliWatt => "mW",
            Units::GigaHertz => "GHz",
            Units::Dimensionless => "dimensionless",
        };
        f.write_str(s)
    }
}

/// Uniformly sampled real-valued signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledWaveform {
    pub units: Units,
    pub sample_rate_hz: f64,
    pub start_time_s: f64,
    pub samples: Vec<f64>,
}

impl SampledWaveform {
    /// Build a waveform, checking the type invariants (non-empty, positive
    /// rate, finite samples).
    pub fn new(
        samples: Vec<f64>,
        sample_rate_hz: f64,
        start_time_s: f64,
        units: Units,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("waveform must contain at least one sample"));
        }
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return Err(invalid(format!(
                "sample rate must be positive and finite, got {sample_rate_hz}"
            )));
        }
        if !start_time_s.is_finite() {
            return Err(invalid("start time must be finite"));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite()) {
            return Err(invalid(format!("waveform contains non-finite sample {bad}")));
        }
        Ok(Self {
            units,
            sample_rate_hz,
            start_time_s,
            samples,
        })
    }

    /// Constant waveform of `n` samples.
    pub fn constant(value: f64, n: usize, sample_rate_hz: f64, units: Units) -> Result<Self> {
        Self::new(vec![value; n], sample_rate_hz, 0.0, units)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample period in seconds.
    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn end_time_s(&self) -> f64 {
        self.start_time_s + self.duration_s()
    }

    /// Time of sample `k`.
    pub fn time_at(&self, k: usize) -> f64 {
        self.start_time_s + k as f64 / self.sample_rate_hz
    }

    /// Linearly interpolated value at time `t`, clamped to the ends.
    pub fn value_at(&self, t: f64) -> f64 {
        let pos = (t - self.start_time_s) * self.sample_rate_hz;
        if pos <= 0.0 {
            return self.samples[0];
        }
        let last = self.samples.len() - 1;
        if pos >= last as f64 {
            return self.samples[last];
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        self.samples[i] * (1.0 - frac) + self.samples[i + 1] * frac
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Sum of squared samples (discrete energy, up to the dt factor).
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    /// Sub-waveform covering `[t0, t1)`, clamped to the available span.
    pub fn slice(&self, t0: f64, t1: f64) -> Result<Self> {
        let i0 = (((t0 - self.start_time_s) * self.sample_rate_hz).ceil().max(0.0)) as usize;
        let i1 = ((((t1 - self.start_time_s) * self.sample_rate_hz).floor()) as usize)
            .min(self.samples.len());
        if i0 >= i1 {
            return Err(invalid(format!(
                "slice [{t0}, {t1}) selects no samples from waveform starting at {}",
                self.start_time_s
            )));
        }
        Self::new(
            self.samples[i0..i1].to_vec(),
            self.sample_rate_hz,
            self.time_at(i0),
            self.units,
        )
    }

    /// Same samples, shifted time axis.
    pub fn with_start_time(mut self, start_time_s: f64) -> Self {
        self.start_time_s = start_time_s;
        self
    }

    /// Write the waveform as two-column CSV (`time_s,value`). Lines starting
    /// with `#` may be prepended by the caller for provenance.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "time_s,value_{}", self.units)?;
        for (k, v) in self.samples.iter().enumerate() {
            writeln!(out, "{:.12e},{:.9e}", self.time_at(k), v)?;
        }
        Ok(())
    }

    /// JSON envelope `{units, sample_rate_hz, start_time_s, samples}`.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let w: SampledWaveform = serde_json::from_str(text)?;
        // run invariant checks
        SampledWaveform::new(w.samples, w.sample_rate_hz, w.start_time_s, w.units)
    }
}

/// Parametric model of one arbitrary-waveform-generator channel.
///
/// The analog bandwidth is a single-pole low-pass corner; quantization is
/// mid-rise uniform over the amplitude range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AwgModel {
    pub sample_rate_hz: f64,
    pub analog_bandwidth_hz: f64,
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    /// Bits of DAC resolution; `None` disables quantization.
    pub quantization_bits: Option<u32>,
    pub units: Units,
}

impl AwgModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0) {
            return Err(invalid("AWG sample rate must be positive"));
        }
        if !(self.analog_bandwidth_hz > 0.0)
            || self.analog_bandwidth_hz > self.sample_rate_hz / 2.0
        {
            return Err(invalid(format!(
                "AWG analog bandwidth {} must lie in (0, sample_rate/2 = {}]",
                self.analog_bandwidth_hz,
                self.sample_rate_hz / 2.0
            )));
        }
        if !(self.amplitude_min < self.amplitude_max) {
            return Err(invalid("AWG amplitude_min must be below amplitude_max"));
        }
        if let Some(bits) = self.quantization_bits {
            if bits < 1 || bits > 32 {
                return Err(invalid("AWG quantization bits must be in 1..=32"));
            }
        }
        Ok(())
    }

    /// One least-significant quantization step, or 0 when unquantized.
    pub fn lsb(&self) -> f64 {
        match self.quantization_bits {
            Some(bits) => (self.amplitude_max - self.amplitude_min) / (1u64 << bits) as f64,
            None => 0.0,
        }
    }

    /// Default laser-section AWG: 250 MS/s, 125 MHz analog bandwidth,
    /// 12-bit DAC, 0..75 mA output.
    pub fn default_laser_awg() -> Self {
        Self {
            sample_rate_hz: 250e6,
            analog_bandwidth_hz: 125e6,
            amplitude_min: 0.0,
            amplitude_max: 75.0,
            quantization_bits: Some(12),
            units: Units::MilliAmp,
        }
    }

    /// Default SOA gate AWG: 12 GS/s, 10-bit DAC, 0..90 mA output. The
    /// 300 MHz analog bandwidth models the full electrical drive chain
    /// (generator plus amplifier), which dominates the gate edge shape.
    pub fn default_soa_awg() -> Self {
        Self {
            sample_rate_hz: 12e9,
            analog_bandwidth_hz: 0.30e9,
            amplitude_min: 0.0,
            amplitude_max: 90.0,
            quantization_bits: Some(10),
            units: Units::MilliAmp,
        }
    }
}

/// Synthesize a periodic square wave.
///
/// The output is `high` on `[phase_s, phase_s + duty*period) mod period` and
/// `low` elsewhere, sampled at `sample_rate_hz` for `n_periods` periods.
pub fn synthesize_square(
    period_s: f64,
    high: f64,
    low: f64,
    duty: f64,
    phase_s: f64,
    n_periods: usize,
    sample_rate_hz: f64,
    units: Units,
) -> Result<SampledWaveform> {
    if !(period_s > 0.0) || !(sample_rate_hz > 0.0) {
        return Err(invalid("square wave period and sample rate must be positive"));
    }
    if !(duty > 0.0 && duty < 1.0) {
        return Err(invalid(format!("duty must lie in (0, 1), got {duty}")));
    }
    if sample_rate_hz * period_s < 4.0 {
        return Err(invalid(format!(
            "square wave needs at least 4 samples per period, got {}",
            sample_rate_hz * period_s
        )));
    }
    if n_periods == 0 {
        return Err(invalid("n_periods must be at least 1"));
    }
    let samples_per_period = sample_rate_hz * period_s;
    let n = (samples_per_period * n_periods as f64).round() as usize;
    let phase_samples = phase_s * sample_rate_hz;
    // Working in sample-index space keeps exact-ratio periods (e.g. 480
    // samples per period) free of time-axis rounding.
    let samples = (0..n)
        .map(|k| {
            let frac = ((k as f64 - phase_samples) / samples_per_period).rem_euclid(1.0);
            if frac < duty {
                high
            } else {
                low
            }
        })
        .collect();
    SampledWaveform::new(samples, sample_rate_hz, 0.0, units)
}

/// Resample to `new_rate_hz`: zero-order hold going up, boxcar average going
/// down. Duration is preserved to within one sample period.
pub fn resample(w: &SampledWaveform, new_rate_hz: f64) -> Result<SampledWaveform> {
    if !(new_rate_hz > 0.0) || !new_rate_hz.is_finite() {
        return Err(invalid(format!("resample rate must be positive, got {new_rate_hz}")));
    }
    if (new_rate_hz - w.sample_rate_hz).abs() < 1e-9 * w.sample_rate_hz {
        return Ok(w.clone());
    }
    let ratio = new_rate_hz / w.sample_rate_hz;
    let n_out = ((w.len() as f64 * ratio).round() as usize).max(1);
    let samples: Vec<f64> = if ratio > 1.0 {
        (0..n_out)
            .map(|k| {
                let src = ((k as f64 / ratio).floor() as usize).min(w.len() - 1);
                w.samples[src]
            })
            .collect()
    } else {
        let step = 1.0 / ratio;
        (0..n_out)
            .map(|k| {
                let a = ((k as f64 * step).floor() as usize).min(w.len() - 1);
                let b = ((((k + 1) as f64) * step).floor() as usize)
                    .max(a + 1)
                    .min(w.len());
                w.samples[a..b].iter().sum::<f64>() / (b - a) as f64
            })
            .collect()
    };
    SampledWaveform::new(samples, new_rate_hz, w.start_time_s, w.units)
}

/// Single-pole low-pass with corner `f_c`, exact ZOH pole mapping, DC gain 1.
/// The state starts on the first sample so steady signals pass unchanged.
pub(crate) fn lowpass_single_pole(samples: &[f64], sample_rate_hz: f64, f_c_hz: f64) -> Vec<f64> {
    let alpha = 1.0 - (-2.0 * std::f64::consts::PI * f_c_hz / sample_rate_hz).exp();
    let mut y = samples[0];
    samples
        .iter()
        .map(|&x| {
            y += alpha * (x - y);
            y
        })
        .collect()
}

fn quantize_mid_rise(x: f64, min: f64, max: f64, bits: u32) -> f64 {
    let levels = (1u64 << bits) as f64;
    let step = (max - min) / levels;
    let idx = (((x - min) / step).floor()).clamp(0.0, levels - 1.0);
    min + step * (idx + 0.5)
}

/// Push a waveform through an AWG channel: clamp to the amplitude range,
/// quantize (mid-rise) when a bit depth is set, resample to the generator
/// rate, then apply the single-pole analog bandwidth. Deterministic.
pub fn apply_awg(w: &SampledWaveform, awg: &AwgModel) -> Result<SampledWaveform> {
    awg.validate()?;
    if w.units != awg.units {
        return Err(invalid(format!(
            "waveform units {} do not match AWG output units {}",
            w.units, awg.units
        )));
    }
    let mut shaped: Vec<f64> = w
        .samples
        .iter()
        .map(|&x| x.clamp(awg.amplitude_min, awg.amplitude_max))
        .collect();
    if let Some(bits) = awg.quantization_bits {
        for x in &mut shaped {
            *x = quantize_mid_rise(*x, awg.amplitude_min, awg.amplitude_max, bits);
        }
    }
    let staged = SampledWaveform::new(shaped, w.sample_rate_hz, w.start_time_s, w.units)?;
    let resampled = resample(&staged, awg.sample_rate_hz)?;
    let filtered = lowpass_single_pole(
        &resampled.samples,
        resampled.sample_rate_hz,
        awg.analog_bandwidth_hz,
    );
    SampledWaveform::new(
        filtered,
        resampled.sample_rate_hz,
        resampled.start_time_s,
        resampled.units,
    )
}
