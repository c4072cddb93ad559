//! Switching figures of merit: rise, settling, transition and frequency
//! statistics, extinction, the optimizer fitness, and empirical CDFs.
//!
//! Conventions shared by the level-based metrics:
//! - steady levels are medians over configurable head/tail windows
//!   (default: first and last 10% of the waveform),
//! - a "sustained" crossing must hold for at least 3 consecutive samples,
//! - crossings are linearly interpolated between samples.

use crate::error::{invalid, Error, Result};
use crate::signal::{resample, SampledWaveform};
use serde::{Deserialize, Serialize};

/// Default frequency-settling deadline and tolerance for switch events.
pub const DEADLINE_S: f64 = 20e-9;
pub const TOL_GHZ: f64 = 5.0;

const SUSTAIN_SAMPLES: usize = 3;

/// Figures of merit for one switch event or slot. Fields are absent when the
/// underlying metric is undefined for the waveform at hand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SwitchMetrics {
    pub rise_10_90_s: Option<f64>,
    pub settle_pm5pct_s: Option<f64>,
    pub transition_90_90_s: Option<f64>,
    pub freq_offset_at_deadline_ghz: Option<f64>,
    pub time_to_within_5ghz_s: Option<f64>,
    pub overshoot_fraction: Option<f64>,
    pub extinction_db: Option<f64>,
}

/// Head/tail windows used to estimate steady levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelWindows {
    pub head_fraction: f64,
    pub tail_fraction: f64,
}

impl Default for LevelWindows {
    fn default() -> Self {
        Self {
            head_fraction: 0.1,
            tail_fraction: 0.1,
        }
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn head_tail_levels(w: &SampledWaveform, windows: &LevelWindows) -> (f64, f64) {
    let n = w.len();
    let head = ((n as f64 * windows.head_fraction).round() as usize).clamp(1, n);
    let tail = ((n as f64 * windows.tail_fraction).round() as usize).clamp(1, n);
    (median(&w.samples[..head]), median(&w.samples[n - tail..]))
}

fn index_at_or_after(w: &SampledWaveform, t: f64) -> usize {
    let pos = (t - w.start_time_s) * w.sample_rate_hz;
    (pos.ceil().max(0.0) as usize).min(w.len() - 1)
}

/// Interpolated time where the signal crosses `level` between samples k-1, k.
fn crossing_time(w: &SampledWaveform, k: usize, level: f64) -> f64 {
    let a = w.samples[k - 1];
    let b = w.samples[k];
    if (b - a).abs() < 1e-300 {
        return w.time_at(k);
    }
    let frac = ((level - a) / (b - a)).clamp(0.0, 1.0);
    w.time_at(k - 1) + frac * w.dt()
}

/// 10-90% rise time of the level change after `t_event_s`.
pub fn rise_time_10_90(w: &SampledWaveform, t_event_s: f64) -> Result<f64> {
    rise_time_10_90_with(w, t_event_s, &LevelWindows::default())
}

pub fn rise_time_10_90_with(
    w: &SampledWaveform,
    t_event_s: f64,
    windows: &LevelWindows,
) -> Result<f64> {
    let (pre, post) = head_tail_levels(w, windows);
    let delta = post - pre;
    let scale = pre.abs().max(post.abs()).max(1e-300);
    if delta.abs() <= 1e-9 * scale {
        return Err(Error::NoTransition(format!(
            "levels {pre} and {post} are indistinct"
        )));
    }
    let v10 = pre + 0.1 * delta;
    let v90 = pre + 0.9 * delta;
    let sign = delta.signum();
    let start = index_at_or_after(w, t_event_s).max(1);
    let mut k10 = None;
    for k in start..w.len() {
        if sign * (w.samples[k] - v10) >= 0.0 && sign * (w.samples[k - 1] - v10) < 0.0 {
            k10 = Some(k);
            break;
        }
    }
    let k10 = k10.ok_or_else(|| Error::NoTransition("signal never crosses 10% level".into()))?;
    let t10 = crossing_time(w, k10, v10);
    let mut k90 = None;
    for k in k10..w.len() {
        if sign * (w.samples[k] - v90) >= 0.0 && sign * (w.samples[k - 1] - v90) < 0.0 {
            k90 = Some(k);
            break;
        }
    }
    let k90 = k90.ok_or_else(|| Error::NoTransition("signal never crosses 90% level".into()))?;
    let t90 = crossing_time(w, k90, v90);
    Ok((t90 - t10).max(0.0))
}

/// Time after `t_event_s` of the last excursion outside the fractional band
/// around `target_level` (0 if the signal never leaves the band).
pub fn settling_time(
    w: &SampledWaveform,
    target_level: f64,
    band_fraction: f64,
    t_event_s: f64,
) -> Result<f64> {
    if target_level == 0.0 {
        return Err(invalid(
            "settling target must be non-zero for a fractional band",
        ));
    }
    if !(band_fraction > 0.0) {
        return Err(invalid("settling band fraction must be positive"));
    }
    let band = band_fraction * target_level.abs();
    let start = index_at_or_after(w, t_event_s);
    let mut last_outside = None;
    for k in (start..w.len()).rev() {
        if (w.samples[k] - target_level).abs() > band {
            last_outside = Some(k);
            break;
        }
    }
    let k = match last_outside {
        None => return Ok(0.0),
        Some(k) if k + 1 >= w.len() => {
            return Err(Error::NoTransition(
                "signal does not settle within the waveform".into(),
            ))
        }
        Some(k) => k,
    };
    let boundary = if w.samples[k] > target_level {
        target_level + band
    } else {
        target_level - band
    };
    Ok((crossing_time(w, k + 1, boundary) - t_event_s).max(0.0))
}

/// Values within "90% of a level", measured as a ratio on the approach side:
/// `v` is in the band of `level` when `min(v/level, level/v) >= 0.9`.
fn in_ratio_band(v: f64, level: f64) -> bool {
    v >= 0.9 * level && v <= level / 0.9
}

/// 90-90% transition time on a single trace: from the last departure out of
/// the old level's band to the first sustained arrival in the new level's
/// band. Levels must be positive (optical power context).
pub fn transition_time_90_90(w: &SampledWaveform, t_switch_s: f64) -> Result<f64> {
    transition_time_90_90_with(w, t_switch_s, &LevelWindows::default())
}

pub fn transition_time_90_90_with(
    w: &SampledWaveform,
    t_switch_s: f64,
    windows: &LevelWindows,
) -> Result<f64> {
    let (l_old, l_new) = head_tail_levels(w, windows);
    if !(l_old > 0.0) || !(l_new > 0.0) {
        return Err(invalid(format!(
            "transition levels must be positive, got {l_old} and {l_new}"
        )));
    }
    let k_sw = index_at_or_after(w, t_switch_s);
    // first genuine sustained entry into the new level's band
    let mut k_arr = None;
    for k in k_sw.max(1)..w.len() {
        if in_ratio_band(w.samples[k], l_new)
            && !in_ratio_band(w.samples[k - 1], l_new)
            && (k..(k + SUSTAIN_SAMPLES).min(w.len()))
                .all(|j| in_ratio_band(w.samples[j], l_new))
        {
            k_arr = Some(k);
            break;
        }
    }
    let k_arr = k_arr.ok_or_else(|| {
        Error::NoTransition("signal never enters the new level's 90% band".into())
    })?;
    let arr_boundary = if w.samples[k_arr - 1] < 0.9 * l_new {
        0.9 * l_new
    } else {
        l_new / 0.9
    };
    let t_arrive = crossing_time(w, k_arr, arr_boundary);
    // last departure from the old level's band before arrival
    let mut t_depart = None;
    for k in (1..=k_arr).rev() {
        if in_ratio_band(w.samples[k - 1], l_old) && !in_ratio_band(w.samples[k], l_old) {
            let dep_boundary = if w.samples[k] < 0.9 * l_old {
                0.9 * l_old
            } else {
                l_old / 0.9
            };
            t_depart = Some(crossing_time(w, k, dep_boundary));
            break;
        }
    }
    let t_depart = t_depart.ok_or_else(|| {
        Error::NoTransition("signal never leaves the old level's 90% band".into())
    })?;
    Ok((t_arrive - t_depart).max(0.0))
}

/// 90-90% transition time across a gate handoff, measured wavelength-to-
/// wavelength: from the outgoing gate's output falling through 90% of its on
/// level to the incoming gate's output rising (sustained) through 90% of its
/// on level.
pub fn transition_time_90_90_pair(
    outgoing: &SampledWaveform,
    incoming: &SampledWaveform,
    t_switch_s: f64,
) -> Result<f64> {
    let windows = LevelWindows::default();
    let (l_out, _) = head_tail_levels(outgoing, &windows);
    let (_, l_in) = head_tail_levels(incoming, &windows);
    if !(l_out > 0.0) || !(l_in > 0.0) {
        return Err(invalid("handoff levels must be positive"));
    }
    let th_out = 0.9 * l_out;
    let th_in = 0.9 * l_in;
    let k_sw_out = index_at_or_after(outgoing, t_switch_s);
    // last falling crossing of the outgoing threshold
    let mut t_depart = None;
    for k in (k_sw_out.max(1)..outgoing.len()).rev() {
        if outgoing.samples[k - 1] >= th_out && outgoing.samples[k] < th_out {
            t_depart = Some(crossing_time(outgoing, k, th_out));
            break;
        }
    }
    let t_depart = t_depart
        .ok_or_else(|| Error::NoTransition("outgoing gate never leaves its 90% level".into()))?;
    let k_sw_in = index_at_or_after(incoming, t_switch_s);
    let mut t_arrive = None;
    for k in k_sw_in.max(1)..incoming.len() {
        if incoming.samples[k] >= th_in
            && incoming.samples[k - 1] < th_in
            && (k..(k + SUSTAIN_SAMPLES).min(incoming.len()))
                .all(|j| incoming.samples[j] >= th_in)
        {
            t_arrive = Some(crossing_time(incoming, k, th_in));
            break;
        }
    }
    let t_arrive = t_arrive
        .ok_or_else(|| Error::NoTransition("incoming gate never reaches its 90% level".into()))?;
    Ok((t_arrive - t_depart).max(0.0))
}

/// Frequency-offset statistics of a switch event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqOffsetStats {
    /// Interpolated offset at the deadline.
    pub offset_at_deadline_ghz: f64,
    /// First time after which |offset| stays within tolerance for the rest of
    /// the window; `None` when the trace never locks in.
    pub time_to_within_tol_s: Option<f64>,
}

/// Evaluate the offset at `deadline_s` and the time to stay within
/// `tol_ghz`, for an offset trace whose switch instant is t = 0.
pub fn freq_offset_stats(
    offset: &SampledWaveform,
    deadline_s: f64,
    tol_ghz: f64,
) -> Result<FreqOffsetStats> {
    if !(tol_ghz > 0.0) || !(deadline_s > 0.0) {
        return Err(invalid("deadline and tolerance must be positive"));
    }
    if offset.start_time_s > 1e-15 || offset.end_time_s() + 1e-15 < deadline_s {
        return Err(invalid(format!(
            "offset trace [{}, {}] does not cover the window [0, {deadline_s}]",
            offset.start_time_s,
            offset.end_time_s()
        )));
    }
    let offset_at_deadline = offset.value_at(deadline_s);
    let first = index_at_or_after(offset, 0.0);
    let mut last_outside = None;
    for k in (first..offset.len()).rev() {
        if offset.samples[k].abs() > tol_ghz {
            last_outside = Some(k);
            break;
        }
    }
    let time_to_within = match last_outside {
        None => Some(0.0),
        Some(k) if k + 1 >= offset.len() => None,
        Some(k) => {
            let boundary = if offset.samples[k] > 0.0 {
                tol_ghz
            } else {
                -tol_ghz
            };
            Some(crossing_time(offset, k + 1, boundary).max(0.0))
        }
    };
    Ok(FreqOffsetStats {
        offset_at_deadline_ghz: offset_at_deadline,
        time_to_within_tol_s: time_to_within,
    })
}

/// Mean squared error between a waveform and a set-point waveform of the
/// same duration. Waveforms are brought onto the faster common grid first.
pub fn mse_fitness(w: &SampledWaveform, set_point: &SampledWaveform) -> Result<f64> {
    if w.units != set_point.units {
        return Err(invalid(format!(
            "fitness operands have different units: {} vs {}",
            w.units, set_point.units
        )));
    }
    let coarse_dt = 1.0 / w.sample_rate_hz.min(set_point.sample_rate_hz);
    if (w.duration_s() - set_point.duration_s()).abs() > coarse_dt + 1e-15 {
        return Err(invalid(format!(
            "duration mismatch beyond one sample: {} vs {}",
            w.duration_s(),
            set_point.duration_s()
        )));
    }
    let rate = w.sample_rate_hz.max(set_point.sample_rate_hz);
    let a = resample(w, rate)?;
    let b = resample(set_point, rate)?;
    let n = a.len().min(b.len());
    let sum: f64 = a.samples[..n]
        .iter()
        .zip(b.samples[..n].iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / n as f64)
}

/// Extinction ratio in dB between steady on and off power levels. The steady
/// level is the mean over the central 60% of each trace.
pub fn extinction_ratio(on: &SampledWaveform, off: &SampledWaveform) -> Result<f64> {
    fn steady_mean(w: &SampledWaveform) -> f64 {
        let n = w.len();
        let a = n / 5;
        let b = (n - n / 5).max(a + 1);
        w.samples[a..b].iter().sum::<f64>() / (b - a) as f64
    }
    if on.samples.iter().any(|&v| !(v > 0.0)) || off.samples.iter().any(|&v| !(v > 0.0)) {
        return Err(invalid("extinction requires strictly positive powers"));
    }
    Ok(10.0 * (steady_mean(on) / steady_mean(off)).log10())
}

/// Empirical cumulative distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cdf {
    /// Distinct sample values, ascending.
    pub values: Vec<f64>,
    /// Cumulative fraction at each value; the last entry is 1.
    pub fractions: Vec<f64>,
}

impl Cdf {
    pub fn max_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Fraction of samples at or below `x`.
    pub fn fraction_at(&self, x: f64) -> f64 {
        match self.values.iter().rposition(|&v| v <= x) {
            Some(i) => self.fractions[i],
            None => 0.0,
        }
    }
}

/// Build an empirical CDF; tied values share one cumulative point.
pub fn build_cdf(samples: &[f64]) -> Result<Cdf> {
    if samples.is_empty() {
        return Err(invalid("cannot build a CDF from an empty sample set"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(invalid("CDF samples must be finite"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut values = Vec::new();
    let mut fractions = Vec::new();
    let mut seen = 0usize;
    let mut i = 0usize;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        seen = j;
        values.push(v);
        fractions.push(seen as f64 / n);
        i = j;
    }
    debug_assert_eq!(seen, sorted.len());
    Ok(Cdf { values, fractions })
}
