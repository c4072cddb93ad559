//! The composed time-multiplexed transmitter module: two tunable lasers
//! alternating slots, gated by complementary SOAs, plus the power- and
//! endpoint-scaling models.
//!
//! Timing follows the fixed slot geometry: with slot length S, each laser
//! emits 2S bursts at a 4S period, the two lasers are S out of phase, and
//! each SOA gate blocks the first 0.75 S and last 0.25 S of its laser's
//! burst. Slot k's open window is [(k + 0.75) S, (k + 1.75) S); the laser
//! serving slot k retunes at k S, so it always has 0.75 S of dark settling
//! time before its light reaches the output.

use crate::device::{
    dsdbr_frequency_response, soa_gate, ChannelPlan, DsdbrParams, SoaParams,
};
use crate::error::{invalid, Error, Result};
use crate::metrics::{
    extinction_ratio, freq_offset_stats, transition_time_90_90_pair, SwitchMetrics,
};
use crate::preemph::{PreemphasisParams, SectionPreemphasis};
use crate::signal::{apply_awg, resample, AwgModel, SampledWaveform, Units, SIM_RATE_HZ};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

// ---------------------------------------------------------------------------
// Schedule
// ---------------------------------------------------------------------------

/// Timing of the laser bursts and SOA gates, all derived from the slot
/// length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSchedule {
    pub slot_s: f64,
    pub laser_period_s: f64,
    /// Offset between the two lasers' burst grids.
    pub laser_phase_offset_s: f64,
    pub gate_period_s: f64,
    pub gate_open_s: f64,
    pub blank_head_s: f64,
    pub blank_tail_s: f64,
}

/// Derive the full schedule from the slot length (20 ns by default): laser
/// period 4 S (two bursts of 2 S), gates at a 2 S period open for S, head
/// blank 0.75 S, tail blank 0.25 S.
pub fn build_schedule(slot_s: f64) -> Result<GateSchedule> {
    if !(slot_s > 0.0) {
        return Err(invalid("slot duration must be positive"));
    }
    Ok(GateSchedule {
        slot_s,
        laser_period_s: 4.0 * slot_s,
        laser_phase_offset_s: slot_s,
        gate_period_s: 2.0 * slot_s,
        gate_open_s: slot_s,
        blank_head_s: 0.75 * slot_s,
        blank_tail_s: 0.25 * slot_s,
    })
}

impl GateSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.slot_s > 0.0) {
            return Err(invalid("slot duration must be positive"));
        }
        let burst = self.laser_period_s / 2.0;
        if (self.blank_head_s + self.gate_open_s + self.blank_tail_s - burst).abs()
            > 1e-12 * burst
        {
            return Err(invalid(
                "blank head + gate open + blank tail must equal the laser burst length",
            ));
        }
        if (self.gate_period_s - 2.0 * self.slot_s).abs() > 1e-12 * self.slot_s {
            return Err(invalid("gate period must be twice the slot length"));
        }
        Ok(())
    }

    /// Open window of (absolute) slot `k`.
    pub fn open_window(&self, k: usize) -> (f64, f64) {
        let s = self.slot_s;
        ((k as f64 + 0.75) * s, (k as f64 + 1.75) * s)
    }

    /// Whether the nominal gate of SOA `soa` (0 or 1) is open at time `t`.
    /// The two gates are complementary by construction; boundaries carry a
    /// tiny symmetric guard so rounding noise cannot flip a sample's owner.
    pub fn gate_open(&self, soa: usize, t: f64) -> bool {
        let s = self.slot_s;
        let phase = if soa == 0 { 0.25 * s } else { 1.25 * s };
        let u = ((t - phase) / s).rem_euclid(2.0);
        (0.5 - 1e-9..1.5 - 1e-9).contains(&u)
    }
}

// ---------------------------------------------------------------------------
// Assignment
// ---------------------------------------------------------------------------

/// One wavelength burst in the repeating slot sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotSpec {
    pub slot_index: u32,
    /// 1 or 2.
    pub laser_id: u8,
    pub channel_index: u32,
}

/// Validate a repeating slot sequence: consecutive slots (including the
/// wrap) alternate lasers, so each laser retunes while dark.
pub fn validate_assignment(assignment: &[SlotSpec], plan: &ChannelPlan) -> Result<()> {
    if assignment.len() < 2 || assignment.len() % 2 != 0 {
        return Err(invalid(
            "slot assignment must hold an even number of at least 2 slots",
        ));
    }
    for (i, slot) in assignment.iter().enumerate() {
        if slot.slot_index as usize != i {
            return Err(invalid(format!(
                "slot {} is out of order (expected index {i})",
                slot.slot_index
            )));
        }
        if slot.laser_id != 1 && slot.laser_id != 2 {
            return Err(invalid(format!("slot {i}: laser_id must be 1 or 2")));
        }
        if slot.channel_index >= plan.count {
            return Err(invalid(format!(
                "slot {i}: channel {} outside the {}-channel plan",
                slot.channel_index, plan.count
            )));
        }
        let next = &assignment[(i + 1) % assignment.len()];
        if next.laser_id == slot.laser_id {
            return Err(invalid(format!(
                "slots {i} and {} use the same laser back to back",
                (i + 1) % assignment.len()
            )));
        }
    }
    Ok(())
}

/// Default 4-slot sequence: laser 1 hops across the full band (the
/// worst-case rear swing), laser 2 covers a mid-band pair.
pub fn default_assignment() -> Vec<SlotSpec> {
    vec![
        SlotSpec {
            slot_index: 0,
            laser_id: 1,
            channel_index: 121,
        },
        SlotSpec {
            slot_index: 1,
            laser_id: 2,
            channel_index: 30,
        },
        SlotSpec {
            slot_index: 2,
            laser_id: 1,
            channel_index: 0,
        },
        SlotSpec {
            slot_index: 3,
            laser_id: 2,
            channel_index: 91,
        },
    ]
}

// ---------------------------------------------------------------------------
// Scenario and simulation
// ---------------------------------------------------------------------------

/// Everything needed to simulate the composed module.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub laser1: DsdbrParams,
    pub laser2: DsdbrParams,
    pub soa1: SoaParams,
    pub soa2: SoaParams,
    pub plan: ChannelPlan,
    pub schedule: GateSchedule,
    pub awg_laser: AwgModel,
    pub awg_soa: AwgModel,
    pub assignment: Vec<SlotSpec>,
    /// Pre-emphasis per (from, to) switch event; events between identical
    /// channels need no entry.
    pub preemph: BTreeMap<(u32, u32), PreemphasisParams>,
    /// Optimized SOA gate drive covering one gate period; `None` falls back
    /// to a plain square gate drive at the SOA bias current.
    pub soa_drive: Option<SampledWaveform>,
    /// Force both SOAs fully on to observe the ungated laser behavior.
    pub gates_enabled: bool,
}

impl Scenario {
    /// Default devices, schedule and assignment; pre-emphasis table and gate
    /// drive still to be supplied.
    pub fn with_defaults() -> Result<Self> {
        Ok(Self {
            laser1: DsdbrParams::default(),
            laser2: DsdbrParams::default(),
            soa1: SoaParams::default(),
            soa2: SoaParams::default(),
            plan: ChannelPlan::default(),
            schedule: build_schedule(20e-9)?,
            awg_laser: AwgModel::default_laser_awg(),
            awg_soa: AwgModel::default_soa_awg(),
            assignment: default_assignment(),
            preemph: BTreeMap::new(),
            soa_drive: None,
            gates_enabled: true,
        })
    }
}

/// Per-slot observation of one measured cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotMetrics {
    pub slot_index: u32,
    pub laser_id: u8,
    pub channel_index: u32,
    pub metrics: SwitchMetrics,
    /// Largest |frequency offset| from the slot target inside the open
    /// window.
    pub max_abs_freq_offset_ghz: f64,
    /// Largest deviation of the summed power from the window median, in dB.
    pub power_flatness_db: f64,
}

/// Simulation output: summed optical power, the gated frequency trace, the
/// two per-gate outputs and per-slot metrics for one steady cycle.
#[derive(Debug, Clone)]
pub struct SystemOutput {
    pub power_out: SampledWaveform,
    pub freq_out: SampledWaveform,
    pub gate1_out: SampledWaveform,
    pub gate2_out: SampledWaveform,
    pub slots: Vec<SlotMetrics>,
    /// Start of the measured cycle on the output time axis.
    pub measured_cycle_start_s: f64,
}

struct LaserTimeline<'a> {
    laser: &'a DsdbrParams,
    /// Channel per burst index (burst length 2 S), already unwrapped.
    channels: Vec<u32>,
    phase_s: f64,
    burst_s: f64,
}

impl LaserTimeline<'_> {
    fn burst_at(&self, t: f64) -> usize {
        let j = ((t - self.phase_s) / self.burst_s).floor() as i64;
        j.rem_euclid(self.channels.len() as i64) as usize
    }

    /// Most recent switch instant at or before `t`.
    fn switch_time_before(&self, t: f64) -> f64 {
        ((t - self.phase_s) / self.burst_s).floor() * self.burst_s + self.phase_s
    }
}

fn laser_channels(assignment: &[SlotSpec], laser_id: u8) -> Vec<u32> {
    assignment
        .iter()
        .filter(|s| s.laser_id == laser_id)
        .map(|s| s.channel_index)
        .collect()
}

/// Build one laser's per-section drive over `[0, duration)`, including the
/// tabled pre-emphasis at every burst transition, through the laser AWG and
/// back onto the simulation grid.
fn build_laser_drives(
    timeline: &LaserTimeline<'_>,
    preemph: &BTreeMap<(u32, u32), PreemphasisParams>,
    awg: &AwgModel,
    duration_s: f64,
) -> Result<BTreeMap<String, SampledWaveform>> {
    let laser = timeline.laser;
    let n = (duration_s * SIM_RATE_HZ).round() as usize;
    let n_bursts = timeline.channels.len();
    // per-burst (channel, previous channel, correction)
    let mut corrections: Vec<Option<&PreemphasisParams>> = Vec::with_capacity(n_bursts);
    for j in 0..n_bursts {
        let prev = timeline.channels[(j + n_bursts - 1) % n_bursts];
        let cur = timeline.channels[j];
        if prev == cur {
            corrections.push(None);
        } else {
            match preemph.get(&(prev, cur)) {
                Some(pe) => corrections.push(Some(pe)),
                None => {
                    return Err(Error::NotFound(format!(
                        "no pre-emphasis entry for switch event {prev}->{cur}"
                    )))
                }
            }
        }
    }
    let zero = SectionPreemphasis {
        overshoot_amplitude_ma: 0.0,
        overshoot_duration_s: 0.0,
        decay_tau_s: None,
    };
    let mut drives = BTreeMap::new();
    for section in &laser.sections {
        let samples: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 / SIM_RATE_HZ;
                let j = timeline.burst_at(t);
                let base = laser.channel_table[&timeline.channels[j]][&section.name];
                let since_switch = t - timeline.switch_time_before(t);
                let pe = corrections[j]
                    .and_then(|p| p.sections.get(&section.name))
                    .unwrap_or(&zero);
                let shape = if since_switch >= 0.0 && since_switch < pe.overshoot_duration_s {
                    match pe.decay_tau_s {
                        Some(tau) => (-since_switch / tau).exp(),
                        None => 1.0,
                    }
                } else {
                    0.0
                };
                base + pe.overshoot_amplitude_ma * shape
            })
            .collect();
        let ideal = SampledWaveform::new(samples, SIM_RATE_HZ, 0.0, Units::MilliAmp)?;
        let shaped = apply_awg(&ideal, awg)?;
        drives.insert(section.name.clone(), resample(&shaped, SIM_RATE_HZ)?);
    }
    Ok(drives)
}

/// Laser output power trace: constant per-channel power with a configurable
/// recovering dip after each actual retune.
fn laser_power_trace(timeline: &LaserTimeline<'_>, duration_s: f64) -> Result<SampledWaveform> {
    let laser = timeline.laser;
    let n_bursts = timeline.channels.len();
    let n = (duration_s * SIM_RATE_HZ).round() as usize;
    let samples: Vec<f64> = (0..n)
        .map(|k| {
            let t = k as f64 / SIM_RATE_HZ;
            let j = timeline.burst_at(t);
            let p = laser.channel_power_mw(timeline.channels[j]);
            let retuned = timeline.channels[j] != timeline.channels[(j + n_bursts - 1) % n_bursts];
            if !retuned {
                return p;
            }
            let since = t - timeline.switch_time_before(t);
            let dip_db = laser.reconfig_dip_db * (-since / laser.reconfig_dip_tau_s).exp();
            p * 10f64.powf(-dip_db / 10.0)
        })
        .collect();
    SampledWaveform::new(samples, SIM_RATE_HZ, 0.0, Units::MilliWatt)
}

/// Tile a one-gate-period drive across the full duration with the given
/// phase, at the drive's native rate, then shape it through the SOA AWG.
/// The rotation works in integer sample space so every tile replays the
/// canonical sample sequence exactly.
fn build_gate_drive(
    canonical: &SampledWaveform,
    phase_s: f64,
    awg: &AwgModel,
    duration_s: f64,
) -> Result<SampledWaveform> {
    let native_rate = canonical.sample_rate_hz;
    let n_period = canonical.len();
    let n = (duration_s * native_rate).round() as usize;
    let shift = (phase_s * native_rate).round() as i64;
    let samples: Vec<f64> = (0..n)
        .map(|k| {
            let idx = (k as i64 - shift).rem_euclid(n_period as i64) as usize;
            canonical.samples[idx]
        })
        .collect();
    let tiled = SampledWaveform::new(samples, native_rate, 0.0, Units::MilliAmp)?;
    let shaped = apply_awg(&tiled, awg)?;
    resample(&shaped, SIM_RATE_HZ)
}

/// Plain square gate drive at the SOA bias: one gate period, on for the
/// middle half.
pub fn square_gate_drive(schedule: &GateSchedule, soa: &SoaParams, n_samples: usize) -> Result<SampledWaveform> {
    let period = schedule.gate_period_s;
    let rate = n_samples as f64 / period;
    let samples: Vec<f64> = (0..n_samples)
        .map(|k| {
            let t = k as f64 / rate;
            if t >= 0.25 * period && t < 0.75 * period {
                soa.bias_current_ma
            } else {
                0.0
            }
        })
        .collect();
    SampledWaveform::new(samples, rate, 0.0, Units::MilliAmp)
}

/// Simulate the composed module over one warm-up cycle plus one measured
/// cycle and report per-slot metrics for the measured cycle.
pub fn simulate(scenario: &Scenario) -> Result<SystemOutput> {
    scenario.schedule.validate()?;
    scenario.plan.validate()?;
    validate_assignment(&scenario.assignment, &scenario.plan)?;
    scenario.laser1.validate()?;
    scenario.laser2.validate()?;
    scenario.soa1.validate()?;
    scenario.soa2.validate()?;
    for slot in &scenario.assignment {
        let laser = if slot.laser_id == 1 {
            &scenario.laser1
        } else {
            &scenario.laser2
        };
        if !laser.channel_table.contains_key(&slot.channel_index) {
            return Err(Error::NotFound(format!(
                "slot {}: channel {} missing from laser {}'s table",
                slot.slot_index, slot.channel_index, slot.laser_id
            )));
        }
    }
    let s = scenario.schedule.slot_s;
    let n_slots = scenario.assignment.len();
    let cycle = n_slots as f64 * s;
    // one warm-up cycle, one measured cycle, one extra slot so the last
    // window and boundary are fully covered
    let duration = 2.0 * cycle + s;
    let n = (duration * SIM_RATE_HZ).round() as usize;

    let burst_s = scenario.schedule.gate_period_s;
    let timelines = [
        LaserTimeline {
            laser: &scenario.laser1,
            channels: laser_channels(&scenario.assignment, 1),
            phase_s: 0.0,
            burst_s,
        },
        LaserTimeline {
            laser: &scenario.laser2,
            channels: laser_channels(&scenario.assignment, 2),
            phase_s: scenario.schedule.laser_phase_offset_s,
            burst_s,
        },
    ];

    // frequency offset of each laser against its first assigned channel
    let mut offsets = Vec::new();
    let mut powers = Vec::new();
    for timeline in &timelines {
        let drives =
            build_laser_drives(timeline, &scenario.preemph, &scenario.awg_laser, duration)?;
        let anchor = timeline.channels[0];
        offsets.push(dsdbr_frequency_response(&drives, timeline.laser, anchor)?);
        powers.push(laser_power_trace(timeline, duration)?);
    }

    // gate drives
    let canonical = match (&scenario.soa_drive, scenario.gates_enabled) {
        (_, false) => {
            let n_gate = (scenario.schedule.gate_period_s * SIM_RATE_HZ).round() as usize;
            SampledWaveform::new(
                vec![scenario.soa1.bias_current_ma; n_gate],
                n_gate as f64 / scenario.schedule.gate_period_s,
                0.0,
                Units::MilliAmp,
            )?
        }
        (Some(drive), true) => {
            if (drive.duration_s() - scenario.schedule.gate_period_s).abs()
                > drive.dt() + 1e-15
            {
                return Err(invalid(format!(
                    "gate drive covers {} s but the gate period is {} s",
                    drive.duration_s(),
                    scenario.schedule.gate_period_s
                )));
            }
            drive.clone()
        }
        (None, true) => square_gate_drive(&scenario.schedule, &scenario.soa1, 240)?,
    };
    let gate1_drive =
        build_gate_drive(&canonical, 0.25 * s, &scenario.awg_soa, duration)?;
    let gate2_drive =
        build_gate_drive(&canonical, 1.25 * s, &scenario.awg_soa, duration)?;

    let gate1_out = soa_gate(&gate1_drive, &scenario.soa1, &powers[0])?;
    let gate2_out = soa_gate(&gate2_drive, &scenario.soa2, &powers[1])?;
    let power_sum: Vec<f64> = gate1_out
        .samples
        .iter()
        .zip(gate2_out.samples.iter())
        .map(|(a, b)| a + b)
        .collect();
    let power_out = SampledWaveform::new(power_sum, SIM_RATE_HZ, 0.0, Units::MilliWatt)?;

    // per-slot target shift: offset vs slot channel = offset vs anchor +
    // sens * (I(anchor) - I(channel))
    let shift_to = |timeline: &LaserTimeline<'_>, channel: u32| -> f64 {
        let anchor = timeline.channels[0];
        timeline
            .laser
            .sections
            .iter()
            .map(|sec| {
                sec.sensitivity_ghz_per_ma
                    * (timeline.laser.channel_table[&anchor][&sec.name]
                        - timeline.laser.channel_table[&channel][&sec.name])
            })
            .sum()
    };

    // gated frequency trace: inside each open window, the active laser's
    // offset against that slot's target; with gates disabled, the per-slot
    // span view that exposes the retune transients
    let freq_samples: Vec<f64> = (0..n)
        .map(|k| {
            let t = k as f64 / SIM_RATE_HZ;
            let slot_abs = if scenario.gates_enabled {
                (t / s - 0.75).floor().max(0.0) as usize
            } else {
                (t / s).floor() as usize
            };
            let slot = slot_abs % n_slots;
            let spec = &scenario.assignment[slot];
            let li = (spec.laser_id - 1) as usize;
            offsets[li].samples[k] + shift_to(&timelines[li], spec.channel_index)
        })
        .collect();
    let freq_out = SampledWaveform::new(freq_samples, SIM_RATE_HZ, 0.0, Units::GigaHertz)?;

    // per-slot metrics over the measured (second) cycle
    let mut slots = Vec::new();
    for (slot, spec) in scenario.assignment.iter().enumerate() {
        let abs = n_slots + slot;
        let (w0, w1) = scenario.schedule.open_window(abs);
        let li = (spec.laser_id - 1) as usize;
        let timeline = &timelines[li];
        let shift = shift_to(timeline, spec.channel_index);
        let t_switch = abs as f64 * s;

        // frequency offset vs this slot's target from its switch instant;
        // pad by a sample so grid rounding cannot shave the window ends
        let dt = 1.0 / SIM_RATE_HZ;
        let sliced = offsets[li].slice(t_switch - 0.5 * dt, w1 + 2.0 * dt)?;
        let offset_trace = SampledWaveform::new(
            sliced.samples.iter().map(|v| v + shift).collect(),
            sliced.sample_rate_hz,
            sliced.start_time_s - t_switch,
            Units::GigaHertz,
        )?;
        let stats = freq_offset_stats(&offset_trace, w1 - t_switch, 5.0)?;
        let window_trace = offset_trace.slice(w0 - t_switch, w1 - t_switch)?;
        let max_abs = window_trace
            .samples
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));

        // handoff transition into this slot; the search starts slightly
        // before the nominal boundary because shaped gate drives lead it to
        // cancel chain delay
        let (incoming, outgoing) = if spec.laser_id == 1 {
            (&gate1_out, &gate2_out)
        } else {
            (&gate2_out, &gate1_out)
        };
        let t_b = w0;
        let out_slice = outgoing.slice(t_b - 0.55 * s, t_b + 0.45 * s)?;
        let in_slice = incoming.slice(t_b - 0.55 * s, t_b + 0.45 * s)?;
        let transition = if scenario.gates_enabled {
            match transition_time_90_90_pair(&out_slice, &in_slice, t_b - 0.1 * s) {
                Ok(v) => Some(v),
                Err(Error::NoTransition(_)) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        // summed power flatness across the window plateau; a 5% guard at
        // each end keeps the handoff crossfade itself out of the statistic
        let window_power = power_out.slice(w0 + 0.05 * s, w1 - 0.05 * s)?;
        let mut sorted = window_power.samples.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];
        let flatness_db = window_power
            .samples
            .iter()
            .fold(0.0f64, |m, &p| m.max((10.0 * (p / median).log10()).abs()));

        // extinction of this slot's gate: its open window against its next
        // blocked interval
        let extinction = if scenario.gates_enabled {
            let on = incoming.slice(w0 + 0.2 * s, w1 - 0.2 * s)?;
            let off = incoming.slice(w1 + 0.2 * s, w1 + 0.8 * s)?;
            Some(extinction_ratio(&on, &off)?)
        } else {
            None
        };

        slots.push(SlotMetrics {
            slot_index: spec.slot_index,
            laser_id: spec.laser_id,
            channel_index: spec.channel_index,
            metrics: SwitchMetrics {
                transition_90_90_s: transition,
                freq_offset_at_deadline_ghz: Some(offset_trace.value_at(w1 - t_switch)),
                time_to_within_5ghz_s: stats.time_to_within_tol_s,
                extinction_db: extinction,
                ..SwitchMetrics::default()
            },
            max_abs_freq_offset_ghz: max_abs,
            power_flatness_db: flatness_db,
        });
    }

    Ok(SystemOutput {
        power_out,
        freq_out,
        gate1_out,
        gate2_out,
        slots,
        measured_cycle_start_s: cycle,
    })
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Pass/fail verdict for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotValidation {
    pub slot_index: u32,
    pub freq_pass: bool,
    pub flatness_pass: bool,
    pub pass: bool,
}

/// Aggregate validation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub tol_ghz: f64,
    pub flatness_db: f64,
    pub slots: Vec<SlotValidation>,
    pub pass: bool,
}

/// Check every slot against the frequency and intra-slot power-flatness
/// criteria.
pub fn validate_slots(slots: &[SlotMetrics], tol_ghz: f64, flatness_db: f64) -> ValidationReport {
    let verdicts: Vec<SlotValidation> = slots
        .iter()
        .map(|s| {
            let freq_pass = s.max_abs_freq_offset_ghz <= tol_ghz;
            let flatness_pass = s.power_flatness_db <= flatness_db;
            SlotValidation {
                slot_index: s.slot_index,
                freq_pass,
                flatness_pass,
                pass: freq_pass && flatness_pass,
            }
        })
        .collect();
    let pass = !verdicts.is_empty() && verdicts.iter().all(|v| v.pass);
    ValidationReport {
        tol_ghz,
        flatness_db,
        slots: verdicts,
        pass,
    }
}

// ---------------------------------------------------------------------------
// Power and endpoint scaling
// ---------------------------------------------------------------------------

/// Power model constants for the scaling comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerModelParams {
    pub laser_power_w: f64,
    pub soa_power_w: f64,
    pub per_channel_source_power_w: f64,
    pub per_channel_gate_power_w: f64,
    pub channels_per_band: u32,
    pub bands: u32,
}

impl Default for PowerModelParams {
    fn default() -> Self {
        Self {
            laser_power_w: 2.5,
            soa_power_w: 0.5,
            per_channel_source_power_w: 0.4,
            per_channel_gate_power_w: 0.4,
            channels_per_band: 122,
            bands: 3,
        }
    }
}

impl PowerModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.laser_power_w < 0.0
            || self.soa_power_w < 0.0
            || self.per_channel_source_power_w < 0.0
            || self.per_channel_gate_power_w < 0.0
        {
            return Err(invalid("power model constants must be non-negative"));
        }
        if self.channels_per_band == 0 || self.bands == 0 || self.bands > 3 {
            return Err(invalid("power model needs 1..=3 bands of at least 1 channel"));
        }
        Ok(())
    }
}

/// Power draw of the time-multiplexed module covering `n` channels: one
/// laser pair and one SOA pair per band.
pub fn power_time_multiplexed(n_channels: u32, p: &PowerModelParams) -> Result<f64> {
    p.validate()?;
    if n_channels < 1 {
        return Err(invalid("channel count must be at least 1"));
    }
    if n_channels > p.bands * p.channels_per_band {
        return Err(invalid(format!(
            "{n_channels} channels exceed {} bands of {}",
            p.bands, p.channels_per_band
        )));
    }
    let bands = n_channels.div_ceil(p.channels_per_band) as f64;
    Ok(bands * (2.0 * p.laser_power_w + 2.0 * p.soa_power_w))
}

/// Power draw of a design with one source and one gate per channel.
pub fn power_per_channel(n_channels: u32, p: &PowerModelParams) -> Result<f64> {
    p.validate()?;
    if n_channels < 1 {
        return Err(invalid("channel count must be at least 1"));
    }
    Ok(n_channels as f64 * (p.per_channel_source_power_w + p.per_channel_gate_power_w))
}

/// Smallest channel count at which the time-multiplexed module draws less
/// power than the per-channel design, or `None` within the band budget.
pub fn crossover_channels(p: &PowerModelParams) -> Result<Option<u32>> {
    p.validate()?;
    for n in 1..=p.bands * p.channels_per_band {
        if power_time_multiplexed(n, p)? < power_per_channel(n, p)? {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// Endpoint scaling of a flat pod-based network built from these
/// transmitters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointScaling {
    pub endpoints: u64,
    pub star_couplers: u64,
}

/// Endpoints scale as nodes-per-pod x pod count; the fabric needs pod-count
/// squared star couplers.
pub fn endpoint_scaling(nodes_per_pod: u64, pods: u64) -> Result<EndpointScaling> {
    if nodes_per_pod < 1 || pods < 1 {
        return Err(invalid("node and pod counts must be at least 1"));
    }
    Ok(EndpointScaling {
        endpoints: nodes_per_pod * pods,
        star_couplers: pods * pods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!(
            (a - b).abs() <= tol,
            "expected {a} ~ {b} within {tol}, diff {}",
            (a - b).abs()
        );
    }

    #[test]
    fn schedule_matches_reference_durations() {
        let sch = build_schedule(20e-9).unwrap();
        assert_close(sch.laser_period_s, 80e-9, 1e-20);
        assert_close(sch.gate_period_s, 40e-9, 1e-20);
        assert_close(sch.gate_open_s, 20e-9, 1e-20);
        assert_close(sch.blank_head_s, 15e-9, 1e-20);
        assert_close(sch.blank_tail_s, 5e-9, 1e-20);
        sch.validate().unwrap();
    }

    #[test]
    fn schedule_scales_linearly() {
        let sch = build_schedule(40e-9).unwrap();
        assert_close(sch.laser_period_s, 160e-9, 1e-20);
        assert_close(sch.blank_head_s, 30e-9, 1e-20);
        assert_close(sch.blank_tail_s, 10e-9, 1e-20);
        sch.validate().unwrap();
    }

    #[test]
    fn gates_are_complementary_sample_by_sample() {
        let sch = build_schedule(20e-9).unwrap();
        let n = (4.0 * sch.laser_period_s * SIM_RATE_HZ) as usize;
        for k in 0..n {
            let t = k as f64 / SIM_RATE_HZ;
            let open = u8::from(sch.gate_open(0, t)) + u8::from(sch.gate_open(1, t));
            assert_eq!(open, 1, "gate coverage violated at t = {t}");
        }
    }

    #[test]
    fn assignment_validation() {
        let plan = ChannelPlan::default();
        validate_assignment(&default_assignment(), &plan).unwrap();
        let mut bad = default_assignment();
        bad[1].laser_id = 1;
        assert!(validate_assignment(&bad, &plan).is_err());
        let mut bad = default_assignment();
        bad[3].channel_index = 999;
        assert!(validate_assignment(&bad, &plan).is_err());
        assert!(validate_assignment(&default_assignment()[..3], &plan).is_err());
    }

    #[test]
    fn power_model_band_steps() {
        let p = PowerModelParams::default();
        let one = power_time_multiplexed(1, &p).unwrap();
        assert_close(one, 6.0, 1e-12);
        assert_close(power_time_multiplexed(122, &p).unwrap(), one, 1e-12);
        assert_close(power_time_multiplexed(123, &p).unwrap(), 2.0 * one, 1e-12);
        assert_close(power_time_multiplexed(366, &p).unwrap(), 3.0 * one, 1e-12);
        assert!(power_time_multiplexed(367, &p).is_err());
        assert!(power_time_multiplexed(0, &p).is_err());
    }

    #[test]
    fn per_channel_power_is_linear() {
        let p = PowerModelParams::default();
        let one = power_per_channel(1, &p).unwrap();
        assert_close(one, 0.8, 1e-12);
        for n in [2u32, 10, 122, 366] {
            assert_close(power_per_channel(n, &p).unwrap(), n as f64 * one, 1e-9);
        }
        assert!(power_per_channel(0, &p).is_err());
    }

    #[test]
    fn crossover_at_eight_channels_by_default() {
        let p = PowerModelParams::default();
        assert_eq!(crossover_channels(&p).unwrap(), Some(8));
        // hugely expensive per-channel design crosses immediately
        let expensive = PowerModelParams {
            per_channel_source_power_w: 100.0,
            ..p
        };
        assert_eq!(crossover_channels(&expensive).unwrap(), Some(1));
        // free per-channel design never crosses
        let free = PowerModelParams {
            per_channel_source_power_w: 0.0,
            per_channel_gate_power_w: 0.0,
            ..p
        };
        assert_eq!(crossover_channels(&free).unwrap(), None);
    }

    #[test]
    fn same_channel_everywhere_is_flat() {
        // both lasers parked on one channel: no wavelength transitions
        let mut scenario = Scenario::with_defaults().unwrap();
        for slot in scenario.assignment.iter_mut() {
            slot.channel_index = 60;
        }
        let out = simulate(&scenario).unwrap();
        for slot in &out.slots {
            assert_eq!(slot.metrics.time_to_within_5ghz_s, Some(0.0));
            assert!(slot.max_abs_freq_offset_ghz < 0.5);
        }
        // with the gates forced on, the summed output is constant and the
        // 90-90% metric reports no transition at a boundary
        scenario.gates_enabled = false;
        let ungated = simulate(&scenario).unwrap();
        let s = scenario.schedule.slot_s;
        let t_b = (4.0 + 0.75) * s;
        let window = ungated.power_out.slice(t_b - 0.5 * s, t_b + 0.5 * s).unwrap();
        assert!(matches!(
            crate::metrics::transition_time_90_90(&window, t_b),
            Err(Error::NoTransition(_))
        ));
        let (mn, mx) = window
            .samples
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(
            10.0 * (mx / mn).log10() < 0.01,
            "ungated same-channel output not flat: {mn}..{mx}"
        );
    }

    #[test]
    fn missing_preemphasis_entry_is_not_found() {
        let scenario = Scenario::with_defaults().unwrap();
        // default assignment switches channels but the table is empty
        let err = simulate(&scenario).unwrap_err();
        assert!(matches!(err, Error::NotFound(_)), "got {err}");
    }

    #[test]
    fn wrong_gate_drive_period_rejected() {
        let mut scenario = Scenario::with_defaults().unwrap();
        for slot in scenario.assignment.iter_mut() {
            slot.channel_index = 10;
        }
        scenario.soa_drive = Some(
            SampledWaveform::new(vec![45.0; 100], 100.0 / 30e-9, 0.0, Units::MilliAmp).unwrap(),
        );
        assert!(matches!(
            simulate(&scenario),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn gating_confines_retune_excursions_to_blanked_time() {
        use crate::device::switch_event_currents;
        use crate::preemph::{optimize_preemphasis, RegressionConfig};
        let mut scenario = Scenario::with_defaults().unwrap();
        let cfg = RegressionConfig::default();
        for (a, b) in [(0u32, 121u32), (121, 0), (91, 30), (30, 91)] {
            let event = switch_event_currents(a, b, &scenario.laser1).unwrap();
            let out =
                optimize_preemphasis(&event, &scenario.laser1, &cfg, &scenario.awg_laser).unwrap();
            assert!(out.converged);
            scenario.preemph.insert((a, b), out.params);
        }
        let gated = simulate(&scenario).unwrap();
        // within every open window the offset stays inside tolerance
        for slot in &gated.slots {
            assert!(
                slot.max_abs_freq_offset_ghz <= 5.0,
                "slot {} offset {}",
                slot.slot_index,
                slot.max_abs_freq_offset_ghz
            );
        }
        // without gating the trace exposes the retune transients
        scenario.gates_enabled = false;
        let ungated = simulate(&scenario).unwrap();
        let s = scenario.schedule.slot_s;
        let cycle = ungated.measured_cycle_start_s;
        let max_full = (0..ungated.freq_out.len())
            .filter(|&k| {
                let t = ungated.freq_out.time_at(k);
                t >= cycle && t < cycle + 4.0 * s
            })
            .map(|k| ungated.freq_out.samples[k].abs())
            .fold(0.0f64, f64::max);
        assert!(
            max_full > 100.0,
            "expected large ungated excursions, got {max_full} GHz"
        );
        // deterministic replay
        scenario.gates_enabled = true;
        let replay = simulate(&scenario).unwrap();
        assert_eq!(replay.power_out, gated.power_out);
        assert_eq!(replay.freq_out, gated.freq_out);
    }

    #[test]
    fn validate_slots_flags_failures() {
        let good = SlotMetrics {
            slot_index: 0,
            laser_id: 1,
            channel_index: 5,
            metrics: SwitchMetrics::default(),
            max_abs_freq_offset_ghz: 0.0,
            power_flatness_db: 0.1,
        };
        let mut bad = good.clone();
        bad.slot_index = 1;
        bad.max_abs_freq_offset_ghz = 6.0;
        let report = validate_slots(&[good.clone(), bad], 5.0, 1.0);
        assert!(report.slots[0].pass);
        assert!(!report.slots[1].pass);
        assert!(!report.pass);
        let report = validate_slots(&[good], 5.0, 1.0);
        assert!(report.pass);
    }

    #[test]
    fn endpoint_scaling_formula() {
        let one = endpoint_scaling(1, 1).unwrap();
        assert_eq!(one.endpoints, 1);
        assert_eq!(one.star_couplers, 1);
        let big = endpoint_scaling(122, 16).unwrap();
        assert_eq!(big.endpoints, 1952);
        assert_eq!(big.star_couplers, 256);
        // monotone in both arguments
        let mut last = 0;
        for n in 1..=8u64 {
            let e = endpoint_scaling(n, 5).unwrap().endpoints;
            assert!(e > last);
            last = e;
        }
        assert!(endpoint_scaling(0, 1).is_err());
    }
}
