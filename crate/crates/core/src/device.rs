//! Parametric device models: SOA gate and DS-DBR tunable laser.
//!
//! The SOA is a driven second-order linear stage (carrier proxy) feeding a
//! static saturable gain; the laser transient is a set of per-section linear
//! sensitivities through multi-exponential lags. Both are deliberately far
//! simpler than rate-equation physics while reproducing the switching
//! behavior the metrics care about: overshoot, ringing, settling, and slow
//! frequency creep toward a new target.

use crate::error::{invalid, Error, Result};
use crate::signal::{SampledWaveform, Units};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Frequency (GHz) to vacuum wavelength (nm).
pub fn frequency_ghz_to_wavelength_nm(f_ghz: f64) -> f64 {
    SPEED_OF_LIGHT_M_S / f_ghz
}

// ---------------------------------------------------------------------------
// Second-order stage
// ---------------------------------------------------------------------------

/// Exact zero-order-hold discretization of
/// `x'' + 2*zeta*omega*x' + omega^2 * x = omega^2 * u(t)`.
///
/// The state transition matrix is the closed-form matrix exponential, so step
/// responses match the continuous-time solution at every sample instant. For
/// overdamped parameters the sampled step response is monotone, which keeps
/// the stage order-preserving on its inputs.
#[derive(Debug, Clone, Copy)]
pub struct SecondOrderStage {
    phi11: f64,
    phi12: f64,
    phi21: f64,
    phi22: f64,
}

impl SecondOrderStage {
    pub fn new(natural_freq_hz: f64, damping_ratio: f64, dt_s: f64) -> Result<Self> {
        if !(natural_freq_hz > 0.0) {
            return Err(invalid("natural frequency must be positive"));
        }
        if !(damping_ratio > 0.0) {
            return Err(invalid("damping ratio must be positive"));
        }
        if !(dt_s > 0.0) {
            return Err(invalid("time step must be positive"));
        }
        let w = 2.0 * std::f64::consts::PI * natural_freq_hz;
        let z = damping_ratio;
        let e = (-z * w * dt_s).exp();
        let (phi11, phi12, phi21, phi22) = if (z - 1.0).abs() < 1e-9 {
            let wt = w * dt_s;
            (
                e * (1.0 + wt),
                e * dt_s,
                -e * w * w * dt_s,
                e * (1.0 - wt),
            )
        } else if z < 1.0 {
            let wd = w * (1.0 - z * z).sqrt();
            let (s, c) = (wd * dt_s).sin_cos();
            (
                e * (c + z * w / wd * s),
                e * s / wd,
                -e * w * w / wd * s,
                e * (c - z * w / wd * s),
            )
        } else {
            let wh = w * (z * z - 1.0).sqrt();
            let s = (wh * dt_s).sinh();
            let c = (wh * dt_s).cosh();
            (
                e * (c + z * w / wh * s),
                e * s / wh,
                -e * w * w / wh * s,
                e * (c - z * w / wh * s),
            )
        };
        Ok(Self {
            phi11,
            phi12,
            phi21,
            phi22,
        })
    }

    /// Filter a drive sequence. The state starts settled on the first input
    /// sample, so constant inputs pass through unchanged.
    pub fn filter(&self, input: &[f64]) -> Vec<f64> {
        let mut x = input[0];
        let mut v = 0.0;
        let mut out = Vec::with_capacity(input.len());
        out.push(x);
        for &u in &input[..input.len() - 1] {
            // affine step around the equilibrium (u, 0)
            let dx = x - u;
            let nx = u + self.phi11 * dx + self.phi12 * v;
            let nv = self.phi21 * dx + self.phi22 * v;
            x = nx;
            v = nv;
            out.push(x);
        }
        out
    }
}

/// Convenience wrapper: second-order response of a raw sample sequence.
pub fn second_order_response(
    input: &[f64],
    natural_freq_hz: f64,
    damping_ratio: f64,
    sample_rate_hz: f64,
) -> Result<Vec<f64>> {
    Ok(SecondOrderStage::new(natural_freq_hz, damping_ratio, 1.0 / sample_rate_hz)?.filter(input))
}

// ---------------------------------------------------------------------------
// SOA
// ---------------------------------------------------------------------------

/// Semiconductor optical amplifier gate parameters.
///
/// `noise_figure_db` is stored for reporting only; no noise is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SoaParams {
    pub small_signal_gain_db: f64,
    pub saturation_power_dbm: f64,
    pub noise_figure_db: f64,
    pub bias_current_ma: f64,
    pub transparency_current_ma: f64,
    pub natural_freq_hz: f64,
    pub damping_ratio: f64,
    pub off_attenuation_db: f64,
}

impl Default for SoaParams {
    fn default() -> Self {
        // natural_freq/damping are calibrated so a plain square drive yields
        // roughly a 3.7 ns +/-5% settling time and 0.7 ns 10-90% rise on the
        // optical output.
        Self {
            small_signal_gain_db: 20.0,
            saturation_power_dbm: 10.0,
            noise_figure_db: 7.0,
            bias_current_ma: 45.0,
            transparency_current_ma: 10.0,
            natural_freq_hz: 0.345e9,
            damping_ratio: 0.31,
            off_attenuation_db: 25.0,
        }
    }
}

impl SoaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping_ratio > 0.0) {
            return Err(invalid("SOA damping ratio must be positive"));
        }
        if !(self.natural_freq_hz > 0.0) {
            return Err(invalid("SOA natural frequency must be positive"));
        }
        if !(self.off_attenuation_db > 0.0) {
            return Err(invalid("SOA off attenuation must be positive"));
        }
        if (self.bias_current_ma - self.transparency_current_ma).abs() < 1e-12 {
            return Err(invalid(
                "SOA bias current must differ from transparency current",
            ));
        }
        Ok(())
    }

    pub fn saturation_power_mw(&self) -> f64 {
        10f64.powf(self.saturation_power_dbm / 10.0)
    }

    fn gain_linear(&self, x: f64) -> f64 {
        let g_on = 10f64.powf(self.small_signal_gain_db / 10.0);
        let g_off = 10f64.powf(-self.off_attenuation_db / 10.0);
        g_off + x.clamp(0.0, 1.0) * (g_on - g_off)
    }

    /// Normalized carrier drive: 0 at transparency, 1 at bias.
    pub fn normalized_drive(&self, current_ma: f64) -> f64 {
        (current_ma - self.transparency_current_ma)
            / (self.bias_current_ma - self.transparency_current_ma)
    }

    /// Steady-state output power for a constant drive current.
    pub fn steady_output_mw(&self, current_ma: f64, input_power_mw: f64) -> f64 {
        saturated_output(
            self.gain_linear(self.normalized_drive(current_ma)),
            input_power_mw,
            self.saturation_power_mw(),
        )
    }
}

/// Solve `P = g * p_in / (1 + P / p_sat)` pointwise by fixed-point iteration
/// (1e-9 relative tolerance, at most 50 iterations).
fn saturated_output(g: f64, p_in: f64, p_sat: f64) -> f64 {
    let unsat = g * p_in;
    let mut p = unsat;
    for _ in 0..50 {
        let next = unsat / (1.0 + p / p_sat);
        if (next - p).abs() <= 1e-9 * p.abs().max(1e-300) {
            return next;
        }
        p = next;
    }
    p
}

/// Optical output of the SOA for a drive current waveform and a (possibly
/// time-varying) input power trace. Fixed-step integration at the drive's
/// sample rate.
pub fn soa_gate(
    drive: &SampledWaveform,
    p: &SoaParams,
    input_power_mw: &SampledWaveform,
) -> Result<SampledWaveform> {
    p.validate()?;
    if drive.units != Units::MilliAmp {
        return Err(invalid(format!(
            "SOA drive must be in mA, got {}",
            drive.units
        )));
    }
    if input_power_mw.units != Units::MilliWatt {
        return Err(invalid("SOA input power trace must be in mW"));
    }
    if input_power_mw.len() != drive.len()
        || (input_power_mw.sample_rate_hz - drive.sample_rate_hz).abs()
            > 1e-6 * drive.sample_rate_hz
    {
        return Err(invalid(
            "SOA input power trace must share the drive's sample grid",
        ));
    }
    if input_power_mw.samples.iter().any(|&v| !(v > 0.0)) {
        return Err(invalid("SOA input power must be strictly positive"));
    }
    let stage = SecondOrderStage::new(p.natural_freq_hz, p.damping_ratio, drive.dt())?;
    let normalized: Vec<f64> = drive
        .samples
        .iter()
        .map(|&i| p.normalized_drive(i))
        .collect();
    let carrier = stage.filter(&normalized);
    let p_sat = p.saturation_power_mw();
    let out: Vec<f64> = carrier
        .iter()
        .zip(input_power_mw.samples.iter())
        .map(|(&x, &p_in)| saturated_output(p.gain_linear(x), p_in, p_sat))
        .collect();
    SampledWaveform::new(out, drive.sample_rate_hz, drive.start_time_s, Units::MilliWatt)
}

/// [`soa_gate`] with a constant input power.
pub fn soa_response(
    drive: &SampledWaveform,
    p: &SoaParams,
    input_power_mw: f64,
) -> Result<SampledWaveform> {
    if !(input_power_mw > 0.0) {
        return Err(invalid("SOA input power must be positive"));
    }
    let input = SampledWaveform::new(
        vec![input_power_mw; drive.len()],
        drive.sample_rate_hz,
        drive.start_time_s,
        Units::MilliWatt,
    )?;
    soa_gate(drive, p, &input)
}

// ---------------------------------------------------------------------------
// DS-DBR laser
// ---------------------------------------------------------------------------

/// One first-order lag term of a section's dynamic response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagTerm {
    pub weight: f64,
    pub tau_s: f64,
}

/// One tuning section: a static frequency sensitivity reached through a
/// weighted sum of first-order lags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionParams {
    pub name: String,
    pub sensitivity_ghz_per_ma: f64,
    pub lag_time_constants: Vec<LagTerm>,
}

impl SectionParams {
    /// Weighted lag-filter output for a drive current sequence; the state
    /// starts settled on the first sample.
    pub(crate) fn lag_response(&self, drive_ma: &[f64], dt_s: f64) -> Vec<f64> {
        let mut out = vec![0.0; drive_ma.len()];
        for term in &self.lag_time_constants {
            let decay = (-dt_s / term.tau_s).exp();
            let mut z = drive_ma[0];
            out[0] += term.weight * z;
            for (o, &i) in out[1..].iter_mut().zip(drive_ma.iter()) {
                z = i + (z - i) * decay;
                *o += term.weight * z;
            }
        }
        out
    }
}

/// DS-DBR tunable laser parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DsdbrParams {
    pub sections: Vec<SectionParams>,
    /// Per-channel section currents (mA), keyed by channel index.
    pub channel_table: BTreeMap<u32, BTreeMap<String, f64>>,
    pub max_current_ma: f64,
    /// Nominal fibre-coupled output power.
    pub output_power_mw: f64,
    /// Static per-channel power deviation, modeling packet-to-packet power
    /// variation across the tuning range.
    pub channel_power_offset_db: BTreeMap<u32, f64>,
    /// Depth and recovery constant of the power dip while retuning.
    pub reconfig_dip_db: f64,
    pub reconfig_dip_tau_s: f64,
}

impl Default for DsdbrParams {
    fn default() -> Self {
        // Grating and phase sections respond on the ~1 ns electronic
        // timescale; the slow thermal creep toward a new target lives on the
        // gain section with a 30 ns constant. It is the thermal tail that
        // makes large unoptimized swings miss the 5 GHz / 20 ns criterion.
        let sections = vec![
            SectionParams {
                name: "front".to_string(),
                sensitivity_ghz_per_ma: 4.0,
                lag_time_constants: vec![LagTerm {
                    weight: 1.0,
                    tau_s: 0.9e-9,
                }],
            },
            SectionParams {
                name: "rear".to_string(),
                sensitivity_ghz_per_ma: 12.0,
                lag_time_constants: vec![LagTerm {
                    weight: 1.0,
                    tau_s: 1.1e-9,
                }],
            },
            SectionParams {
                name: "phase".to_string(),
                sensitivity_ghz_per_ma: 1.5,
                lag_time_constants: vec![LagTerm {
                    weight: 1.0,
                    tau_s: 2.0e-9,
                }],
            },
            SectionParams {
                name: "gain".to_string(),
                sensitivity_ghz_per_ma: 0.8,
                lag_time_constants: vec![LagTerm {
                    weight: 1.0,
                    tau_s: 30e-9,
                }],
            },
        ];
        let count = ChannelPlan::default().count;
        let mut channel_table = BTreeMap::new();
        let mut channel_power_offset_db = BTreeMap::new();
        for c in 0..count {
            let t = c as f64 / (count - 1) as f64;
            let mut currents = BTreeMap::new();
            currents.insert("front".to_string(), 5.0 + 45.0 * t);
            currents.insert("rear".to_string(), 5.0 + 45.0 * t);
            currents.insert("phase".to_string(), 8.0 + 12.0 * t);
            currents.insert("gain".to_string(), 20.0 + 15.0 * t);
            channel_table.insert(c, currents);
            let offset = 0.6 * (2.0 * std::f64::consts::PI * c as f64 / 7.0).sin();
            channel_power_offset_db.insert(c, offset);
        }
        Self {
            sections,
            channel_table,
            max_current_ma: 75.0,
            output_power_mw: 1.0,
            channel_power_offset_db,
            reconfig_dip_db: 1.5,
            reconfig_dip_tau_s: 3e-9,
        }
    }
}

impl DsdbrParams {
    pub fn validate(&self) -> Result<()> {
        if self.sections.is_empty() {
            return Err(invalid("laser must define at least one section"));
        }
        for s in &self.sections {
            if s.lag_time_constants.is_empty() {
                return Err(invalid(format!("section {} has no lag terms", s.name)));
            }
            let wsum: f64 = s.lag_time_constants.iter().map(|l| l.weight).sum();
            if (wsum - 1.0).abs() > 1e-9 {
                return Err(invalid(format!(
                    "section {} lag weights sum to {wsum}, expected 1",
                    s.name
                )));
            }
            if s.lag_time_constants.iter().any(|l| !(l.tau_s > 0.0)) {
                return Err(invalid(format!(
                    "section {} has a non-positive lag time constant",
                    s.name
                )));
            }
        }
        if !(self.max_current_ma > 0.0) {
            return Err(invalid("max section current must be positive"));
        }
        for (ch, currents) in &self.channel_table {
            for s in &self.sections {
                match currents.get(&s.name) {
                    None => {
                        return Err(invalid(format!(
                            "channel {ch} is missing a current for section {}",
                            s.name
                        )))
                    }
                    Some(&i) if !(0.0..=self.max_current_ma).contains(&i) => {
                        return Err(invalid(format!(
                            "channel {ch} current {i} mA for section {} is outside [0, {}]",
                            s.name, self.max_current_ma
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Check the channel table covers every channel of a plan.
    pub fn validate_against_plan(&self, plan: &ChannelPlan) -> Result<()> {
        self.validate()?;
        for c in 0..plan.count {
            if !self.channel_table.contains_key(&c) {
                return Err(Error::NotFound(format!(
                    "channel {c} of the active plan has no table entry"
                )));
            }
        }
        Ok(())
    }

    pub fn section(&self, name: &str) -> Result<&SectionParams> {
        self.sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::NotFound(format!("unknown laser section {name}")))
    }

    pub fn channel_currents(&self, channel: u32) -> Result<&BTreeMap<String, f64>> {
        self.channel_table
            .get(&channel)
            .ok_or_else(|| Error::NotFound(format!("channel {channel} not in channel table")))
    }

    /// Static per-channel output power (mW), including the tabled offset.
    pub fn channel_power_mw(&self, channel: u32) -> f64 {
        let offset = self
            .channel_power_offset_db
            .get(&channel)
            .copied()
            .unwrap_or(0.0);
        self.output_power_mw * 10f64.powf(offset / 10.0)
    }
}

/// Per-section drive current pair for a switching event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub from_ch: u32,
    pub to_ch: u32,
    /// section name -> (I_from, I_to)
    pub currents: BTreeMap<String, (f64, f64)>,
}

impl SwitchEvent {
    pub fn swing_ma(&self, section: &str) -> Option<f64> {
        self.currents.get(section).map(|&(a, b)| b - a)
    }
}

/// Look up the per-section current pairs for a channel switch.
pub fn switch_event_currents(
    from_ch: u32,
    to_ch: u32,
    p: &DsdbrParams,
) -> Result<SwitchEvent> {
    let from = p.channel_currents(from_ch)?;
    let to = p.channel_currents(to_ch)?;
    let mut currents = BTreeMap::new();
    for s in &p.sections {
        currents.insert(s.name.clone(), (from[&s.name], to[&s.name]));
    }
    Ok(SwitchEvent {
        from_ch,
        to_ch,
        currents,
    })
}

/// Instantaneous frequency offset from the target channel for a set of
/// section drive waveforms:
/// `offset(t) = sum_s sensitivity_s * lag_s(I_s(t) - I_s(target))`.
pub fn dsdbr_frequency_response(
    section_drives: &BTreeMap<String, SampledWaveform>,
    p: &DsdbrParams,
    target_channel: u32,
) -> Result<SampledWaveform> {
    p.validate()?;
    let target = p.channel_currents(target_channel)?;
    for name in section_drives.keys() {
        p.section(name)?;
    }
    let mut drives = Vec::with_capacity(p.sections.len());
    for s in &p.sections {
        let w = section_drives.get(&s.name).ok_or_else(|| {
            Error::NotFound(format!("no drive supplied for laser section {}", s.name))
        })?;
        if w.units != Units::MilliAmp {
            return Err(invalid(format!(
                "section {} drive must be in mA, got {}",
                s.name, w.units
            )));
        }
        drives.push((s, w));
    }
    let (s0, w0) = drives[0];
    let _ = s0;
    for (s, w) in &drives[1..] {
        if w.len() != w0.len()
            || (w.sample_rate_hz - w0.sample_rate_hz).abs() > 1e-6 * w0.sample_rate_hz
        {
            return Err(invalid(format!(
                "section {} drive does not share the common sample grid",
                s.name
            )));
        }
    }
    let dt = w0.dt();
    let mut offset = vec![0.0; w0.len()];
    for (s, w) in &drives {
        let lag = s.lag_response(&w.samples, dt);
        let i_target = target[&s.name];
        for (o, z) in offset.iter_mut().zip(lag.iter()) {
            *o += s.sensitivity_ghz_per_ma * (z - i_target);
        }
    }
    SampledWaveform::new(offset, w0.sample_rate_hz, w0.start_time_s, Units::GigaHertz)
}

// ---------------------------------------------------------------------------
// Channel plan
// ---------------------------------------------------------------------------

/// Arithmetic grid of channel frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelPlan {
    pub first_frequency_ghz: f64,
    pub spacing_ghz: f64,
    pub count: u32,
}

impl Default for ChannelPlan {
    fn default() -> Self {
        // 122 channels on a 50 GHz grid spanning 6.05 THz.
        Self {
            first_frequency_ghz: 190_650.0,
            spacing_ghz: 50.0,
            count: 122,
        }
    }
}

impl ChannelPlan {
    pub fn validate(&self) -> Result<()> {
        if self.count < 1 {
            return Err(invalid("channel plan needs at least one channel"));
        }
        if !(self.first_frequency_ghz > 0.0) || !(self.spacing_ghz > 0.0) {
            return Err(invalid("channel plan frequencies must be positive"));
        }
        Ok(())
    }

    pub fn frequency_ghz(&self, channel: u32) -> Result<f64> {
        if channel >= self.count {
            return Err(Error::NotFound(format!(
                "channel {channel} outside plan of {} channels",
                self.count
            )));
        }
        Ok(self.first_frequency_ghz + channel as f64 * self.spacing_ghz)
    }

    pub fn span_ghz(&self) -> f64 {
        (self.count - 1) as f64 * self.spacing_ghz
    }
}

/// All channel frequencies of a plan, in GHz.
pub fn channel_frequencies(plan: &ChannelPlan) -> Result<Vec<f64>> {
    plan.validate()?;
    Ok((0..plan.count)
        .map(|c| plan.first_frequency_ghz + c as f64 * plan.spacing_ghz)
        .collect())
}
