//! Iterative linear-regression pre-emphasis for laser switch events, and the
//! any-to-any switch-matrix evaluation built on it.
//!
//! A switch event drives each laser section from its old channel current to
//! the new one; the lagging frequency response is measured, and a rectangular
//! (optionally decaying) overshoot per section is fitted against the
//! windowed frequency error using the section's unit-overshoot responses
//! through the lag model as the regression basis. Iterating the loop with a
//! fractional learning rate and keeping the best iterate by lock-in time
//! converges in a handful of iterations on the default laser.

use crate::device::{dsdbr_frequency_response, switch_event_currents, DsdbrParams, SwitchEvent};
use crate::error::{invalid, Error, Result};
use crate::metrics::{build_cdf, freq_offset_stats, Cdf, SwitchMetrics};
use crate::par;
use crate::signal::{apply_awg, resample, AwgModel, SampledWaveform, Units, SIM_RATE_HZ};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Overshoot correction applied to one section at a switch transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionPreemphasis {
    pub overshoot_amplitude_ma: f64,
    pub overshoot_duration_s: f64,
    /// Exponential decay constant of the overshoot; `None` keeps it
    /// rectangular.
    pub decay_tau_s: Option<f64>,
}

/// Per-section pre-emphasis for one switch event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreemphasisParams {
    pub sections: BTreeMap<String, SectionPreemphasis>,
}

impl PreemphasisParams {
    /// Zero-amplitude pre-emphasis with a common initial pulse duration.
    pub fn zero(laser: &DsdbrParams, duration_s: f64) -> Self {
        let sections = laser
            .sections
            .iter()
            .map(|s| {
                (
                    s.name.clone(),
                    SectionPreemphasis {
                        overshoot_amplitude_ma: 0.0,
                        overshoot_duration_s: duration_s,
                        decay_tau_s: None,
                    },
                )
            })
            .collect();
        Self { sections }
    }

    /// Zero-amplitude pre-emphasis with per-section pulse durations scaled
    /// to each section's slowest lag (2.8 time constants, capped). A pulse
    /// of 2.8 tau cancels the section's tail with a modest amplitude of
    /// about 0.065 times the current swing.
    pub fn initial(laser: &DsdbrParams, max_duration_s: f64) -> Self {
        let sections = laser
            .sections
            .iter()
            .map(|s| {
                let tau_max = s
                    .lag_time_constants
                    .iter()
                    .map(|l| l.tau_s)
                    .fold(0.0f64, f64::max);
                (
                    s.name.clone(),
                    SectionPreemphasis {
                        overshoot_amplitude_ma: 0.0,
                        overshoot_duration_s: (2.8 * tau_max).min(max_duration_s),
                        decay_tau_s: None,
                    },
                )
            })
            .collect();
        Self { sections }
    }
}

/// Which parameters the regression updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    AmplitudeOnly,
    AmplitudeAndDuration,
}

/// Regression loop configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressionConfig {
    pub max_iterations: usize,
    pub learning_rate: f64,
    /// Error window relative to the switch instant.
    pub error_window_s: (f64, f64),
    pub tol_ghz: f64,
    pub basis: Basis,
    /// Cap on the per-section initial overshoot pulse duration (each
    /// section starts at 2.8 of its slowest lag constant, up to this cap).
    pub max_overshoot_duration_s: f64,
    /// Full drive period of one simulated event; the switch sits at half the
    /// period.
    pub event_period_s: f64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            learning_rate: 0.5,
            error_window_s: (0.0, 20e-9),
            tol_ghz: 5.0,
            basis: Basis::AmplitudeOnly,
            max_overshoot_duration_s: 15e-9,
            event_period_s: 80e-9,
        }
    }
}

impl RegressionConfig {
    /// The lock-in deadline is the end of the error window.
    pub fn deadline_s(&self) -> f64 {
        self.error_window_s.1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol_ghz > 0.0) {
            return Err(invalid("frequency tolerance must be positive"));
        }
        if !(self.error_window_s.0 < self.error_window_s.1) {
            return Err(invalid("error window start must precede its end"));
        }
        if self.error_window_s.0 < 0.0 {
            return Err(invalid("error window cannot start before the switch"));
        }
        if self.error_window_s.1 > self.event_period_s / 2.0 {
            return Err(invalid(
                "error window must fit within the post-switch half period",
            ));
        }
        if !(self.max_overshoot_duration_s >= 0.0) {
            return Err(invalid("max overshoot duration must be non-negative"));
        }
        Ok(())
    }
}

/// Overshoot shape at `t` seconds past the transition, unit amplitude.
fn overshoot_shape(t: f64, pe: &SectionPreemphasis) -> f64 {
    if t < 0.0 || t >= pe.overshoot_duration_s {
        return 0.0;
    }
    match pe.decay_tau_s {
        Some(tau) => (-t / tau).exp(),
        None => 1.0,
    }
}

/// Build the per-section drive waveforms for one switch event: a square
/// between the old and new currents with the pre-emphasis overshoot added at
/// the transition, pushed through the AWG. The switch sits at `period_s/2`;
/// output waveforms are at the AWG rate with the switch at t = 0.
pub fn build_drive_with_preemphasis(
    event: &SwitchEvent,
    pe: &PreemphasisParams,
    period_s: f64,
    awg: &AwgModel,
    laser: &DsdbrParams,
) -> Result<BTreeMap<String, SampledWaveform>> {
    awg.validate()?;
    if !(period_s > 0.0) {
        return Err(invalid("event period must be positive"));
    }
    let t_switch = period_s / 2.0;
    let n = (period_s * SIM_RATE_HZ).round() as usize;
    let mut drives = BTreeMap::new();
    for (name, &(i_from, i_to)) in &event.currents {
        let correction = pe
            .sections
            .get(name)
            .copied()
            .unwrap_or(SectionPreemphasis {
                overshoot_amplitude_ma: 0.0,
                overshoot_duration_s: 0.0,
                decay_tau_s: None,
            });
        let peak = i_to + correction.overshoot_amplitude_ma;
        if !(0.0..=laser.max_current_ma).contains(&peak) {
            return Err(invalid(format!(
                "section {name}: pre-emphasized current {peak:.3} mA is outside [0, {}] mA",
                laser.max_current_ma
            )));
        }
        let samples: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 / SIM_RATE_HZ;
                if t < t_switch {
                    i_from
                } else {
                    i_to + correction.overshoot_amplitude_ma
                        * overshoot_shape(t - t_switch, &correction)
                }
            })
            .collect();
        let ideal = SampledWaveform::new(samples, SIM_RATE_HZ, -t_switch, Units::MilliAmp)?;
        drives.insert(name.clone(), apply_awg(&ideal, awg)?);
    }
    Ok(drives)
}

/// Simulate one pre-emphasized switch event and return the frequency-offset
/// trace with the switch instant at t = 0.
pub fn simulate_event(
    event: &SwitchEvent,
    pe: &PreemphasisParams,
    laser: &DsdbrParams,
    cfg: &RegressionConfig,
    awg: &AwgModel,
) -> Result<SampledWaveform> {
    let drives = build_drive_with_preemphasis(event, pe, cfg.event_period_s, awg, laser)?;
    let mut at_sim_rate = BTreeMap::new();
    for (name, w) in &drives {
        at_sim_rate.insert(name.clone(), resample(w, SIM_RATE_HZ)?);
    }
    dsdbr_frequency_response(&at_sim_rate, laser, event.to_ch)
}

/// Unit-amplitude overshoot response of one section through the lag model,
/// evaluated on the error trace's time grid (switch at t = 0).
fn basis_response(
    section_name: &str,
    pe: &SectionPreemphasis,
    laser: &DsdbrParams,
    trace: &SampledWaveform,
) -> Result<Vec<f64>> {
    let section = laser.section(section_name)?;
    let input: Vec<f64> = (0..trace.len())
        .map(|k| overshoot_shape(trace.time_at(k), pe))
        .collect();
    let lag = section.lag_response(&input, trace.dt());
    Ok(lag
        .into_iter()
        .map(|z| section.sensitivity_ghz_per_ma * z)
        .collect())
}

/// Solve `(G + ridge*I) x = rhs` by Gaussian elimination with partial
/// pivoting. Near-zero columns (unidentifiable parameters) must be removed
/// by the caller; a vanishing pivot among live columns means the basis is
/// collinear.
fn solve_ridge(mut g: Vec<Vec<f64>>, mut rhs: Vec<f64>, ridge: f64) -> Result<Vec<f64>> {
    let n = rhs.len();
    let scale = (0..n)
        .map(|i| g[i][i].abs())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    for (i, row) in g.iter_mut().enumerate() {
        row[i] += ridge;
    }
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, g[r][col].abs()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        // a pivot this far below the leading diagonal means the solution is
        // carried by the ridge alone, i.e. the basis is collinear
        if pivot < 1e-9 * scale {
            return Err(Error::DegenerateBasis(format!(
                "normal equations are singular beyond the {ridge:.0e} ridge (pivot {pivot:.3e})"
            )));
        }
        g.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for r in col + 1..n {
            let f = g[r][col] / g[col][col];
            for c in col..n {
                g[r][c] -= f * g[col][c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut v = rhs[col];
        for c in col + 1..n {
            v -= g[col][c] * x[c];
        }
        x[col] = v / g[col][col];
    }
    Ok(x)
}

/// One least-squares update of the pre-emphasis parameters against a
/// measured frequency-error trace.
///
/// The regressors are the per-section unit-overshoot responses through the
/// laser's lag model (and, with [`Basis::AmplitudeAndDuration`], the
/// finite-difference duration sensitivities). Amplitudes are clamped so the
/// corrected currents stay within the device limits for this event.
pub fn regression_update(
    error_trace: &SampledWaveform,
    event: &SwitchEvent,
    pe: &PreemphasisParams,
    cfg: &RegressionConfig,
    laser: &DsdbrParams,
) -> Result<PreemphasisParams> {
    cfg.validate()?;
    laser.validate()?;
    if error_trace.units != Units::GigaHertz {
        return Err(invalid("error trace must be a frequency offset in GHz"));
    }
    let (w0, w1) = cfg.error_window_s;
    if error_trace.start_time_s > w0 || error_trace.end_time_s() < w1 {
        return Err(invalid(format!(
            "error trace [{}, {}] does not cover the window [{w0}, {w1}]",
            error_trace.start_time_s,
            error_trace.end_time_s()
        )));
    }
    let first = ((w0 - error_trace.start_time_s) * error_trace.sample_rate_hz).ceil() as usize;
    let last = (((w1 - error_trace.start_time_s) * error_trace.sample_rate_hz).floor() as usize)
        .min(error_trace.len() - 1);
    let window = first..=last;
    let residual: Vec<f64> = error_trace.samples[window.clone()].to_vec();

    // assemble regressor columns in deterministic (sorted-name) order
    let mut names: Vec<&String> = pe.sections.keys().collect();
    names.sort();
    #[derive(Clone, Copy)]
    enum Param {
        Amplitude,
        Duration,
    }
    let mut columns: Vec<(String, Param, Vec<f64>)> = Vec::new();
    let dt = error_trace.dt();
    for name in &names {
        let p = &pe.sections[*name];
        let unit = basis_response(name, p, laser, error_trace)?;
        columns.push((
            (*name).clone(),
            Param::Amplitude,
            unit[window.clone()].to_vec(),
        ));
        if cfg.basis == Basis::AmplitudeAndDuration {
            let dd = 2.0 * dt;
            let longer = SectionPreemphasis {
                overshoot_duration_s: p.overshoot_duration_s + dd,
                ..*p
            };
            let shorter = SectionPreemphasis {
                overshoot_duration_s: (p.overshoot_duration_s - dd).max(0.0),
                ..*p
            };
            let span = longer.overshoot_duration_s - shorter.overshoot_duration_s;
            let resp_long = basis_response(name, &longer, laser, error_trace)?;
            let resp_short = basis_response(name, &shorter, laser, error_trace)?;
            let col: Vec<f64> = resp_long[window.clone()]
                .iter()
                .zip(resp_short[window.clone()].iter())
                .map(|(a, b)| p.overshoot_amplitude_ma * (a - b) / span)
                .collect();
            columns.push(((*name).clone(), Param::Duration, col));
        }
    }

    // drop unidentifiable (near-zero) columns, e.g. the duration sensitivity
    // at zero amplitude
    let col_norm = |c: &[f64]| c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let max_norm = columns
        .iter()
        .map(|(_, _, c)| col_norm(c))
        .fold(0.0f64, f64::max);
    let live: Vec<usize> = (0..columns.len())
        .filter(|&i| col_norm(&columns[i].2) > 1e-12 * max_norm.max(1e-300))
        .collect();
    if live.is_empty() {
        return Ok(pe.clone());
    }
    let k = live.len();
    let mut gram = vec![vec![0.0; k]; k];
    let mut rhs = vec![0.0; k];
    for (a, &ia) in live.iter().enumerate() {
        for (b, &ib) in live.iter().enumerate().skip(a) {
            let dot: f64 = columns[ia]
                .2
                .iter()
                .zip(columns[ib].2.iter())
                .map(|(x, y)| x * y)
                .sum();
            gram[a][b] = dot;
            gram[b][a] = dot;
        }
        rhs[a] = -columns[ia]
            .2
            .iter()
            .zip(residual.iter())
            .map(|(x, e)| x * e)
            .sum::<f64>();
    }
    let delta = solve_ridge(gram, rhs, 1e-9)?;

    let mut updated = pe.clone();
    for (slot, &i) in live.iter().enumerate() {
        let (name, param, _) = &columns[i];
        let entry = updated.sections.get_mut(name).unwrap();
        match param {
            Param::Amplitude => {
                let (_, i_to) = event.currents[name];
                let lo = -i_to;
                let hi = laser.max_current_ma - i_to;
                entry.overshoot_amplitude_ma =
                    (entry.overshoot_amplitude_ma + cfg.learning_rate * delta[slot]).clamp(lo, hi);
            }
            Param::Duration => {
                entry.overshoot_duration_s = (entry.overshoot_duration_s
                    + cfg.learning_rate * delta[slot])
                    .clamp(0.0, cfg.error_window_s.1);
            }
        }
    }
    Ok(updated)
}

/// Outcome of one event optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreemphasisOutcome {
    pub params: PreemphasisParams,
    pub metrics: SwitchMetrics,
    pub iterations_used: usize,
    pub converged: bool,
}

/// Tune the pre-emphasis of one switch event: simulate, measure, stop when
/// the trace locks within tolerance by the deadline, otherwise update by
/// regression. Returns the best iterate by lock-in time, flagged unconverged
/// when the criterion was never met.
pub fn optimize_preemphasis(
    event: &SwitchEvent,
    laser: &DsdbrParams,
    cfg: &RegressionConfig,
    awg: &AwgModel,
) -> Result<PreemphasisOutcome> {
    cfg.validate()?;
    laser.validate()?;
    let deadline = cfg.deadline_s();
    let mut pe = PreemphasisParams::initial(laser, cfg.max_overshoot_duration_s);
    let mut best: Option<PreemphasisOutcome> = None;
    for iteration in 0..=cfg.max_iterations {
        let trace = simulate_event(event, &pe, laser, cfg, awg)?;
        let stats = freq_offset_stats(&trace, deadline, cfg.tol_ghz)?;
        let metrics = SwitchMetrics {
            freq_offset_at_deadline_ghz: Some(stats.offset_at_deadline_ghz),
            time_to_within_5ghz_s: stats.time_to_within_tol_s,
            ..SwitchMetrics::default()
        };
        let candidate = PreemphasisOutcome {
            params: pe.clone(),
            metrics,
            iterations_used: iteration,
            converged: false,
        };
        let better = match (&best, stats.time_to_within_tol_s) {
            (None, _) => true,
            (Some(b), Some(t)) => match b.metrics.time_to_within_5ghz_s {
                Some(bt) => t < bt,
                None => true,
            },
            (Some(_), None) => false,
        };
        if better {
            best = Some(candidate);
        }
        let locked = matches!(stats.time_to_within_tol_s, Some(t) if t <= deadline)
            && stats.offset_at_deadline_ghz.abs() <= cfg.tol_ghz;
        if locked {
            let mut outcome = best.unwrap();
            outcome.converged = true;
            outcome.iterations_used = iteration;
            return Ok(outcome);
        }
        if iteration < cfg.max_iterations {
            pe = regression_update(&trace, event, &pe, cfg, laser)?;
        }
    }
    Ok(best.expect("at least one iterate was evaluated"))
}

/// One row of a serialized pre-emphasis table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreemphTableEntry {
    pub from_ch: u32,
    pub to_ch: u32,
    pub params: PreemphasisParams,
}

/// Flatten an event-keyed pre-emphasis map into serializable entries.
pub fn table_to_entries(
    table: &BTreeMap<(u32, u32), PreemphasisParams>,
) -> Vec<PreemphTableEntry> {
    table
        .iter()
        .map(|(&(from_ch, to_ch), params)| PreemphTableEntry {
            from_ch,
            to_ch,
            params: params.clone(),
        })
        .collect()
}

/// Rebuild the event-keyed map from serialized entries.
pub fn entries_to_table(
    entries: &[PreemphTableEntry],
) -> BTreeMap<(u32, u32), PreemphasisParams> {
    entries
        .iter()
        .map(|e| ((e.from_ch, e.to_ch), e.params.clone()))
        .collect()
}

/// Per-event record of a switch-matrix run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEventRecord {
    pub from_ch: u32,
    pub to_ch: u32,
    pub time_to_within_s: Option<f64>,
    pub offset_at_deadline_ghz: Option<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    pub params: Option<PreemphasisParams>,
    pub error: Option<String>,
}

/// Aggregate outcome of an any-to-any switch matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchMatrixOutcome {
    pub events: Vec<MatrixEventRecord>,
    /// CDF of lock-in times over events that locked in.
    pub cdf: Option<Cdf>,
    pub worst_time_to_within_s: Option<f64>,
    pub worst_offset_at_deadline_ghz: Option<f64>,
    pub converged_events: usize,
}

/// Optimize every ordered channel pair and collect lock-in statistics.
/// Events run independently (in parallel when available); a failing event is
/// recorded in its row rather than aborting the run.
pub fn run_switch_matrix(
    channels: &[u32],
    laser: &DsdbrParams,
    cfg: &RegressionConfig,
    awg: &AwgModel,
) -> Result<SwitchMatrixOutcome> {
    if channels.len() < 2 {
        return Err(invalid("a switch matrix needs at least 2 channels"));
    }
    let mut pairs = Vec::new();
    for &a in channels {
        for &b in channels {
            if a != b {
                pairs.push((a, b));
            }
        }
    }
    let events = par::map_batch(&pairs, |&(from, to)| {
        let failed = |e: &Error| MatrixEventRecord {
            from_ch: from,
            to_ch: to,
            time_to_within_s: None,
            offset_at_deadline_ghz: None,
            iterations_used: 0,
            converged: false,
            params: None,
            error: Some(e.to_string()),
        };
        let event = match switch_event_currents(from, to, laser) {
            Ok(e) => e,
            Err(e) => return failed(&e),
        };
        match optimize_preemphasis(&event, laser, cfg, awg) {
            Ok(out) => MatrixEventRecord {
                from_ch: from,
                to_ch: to,
                time_to_within_s: out.metrics.time_to_within_5ghz_s,
                offset_at_deadline_ghz: out.metrics.freq_offset_at_deadline_ghz,
                iterations_used: out.iterations_used,
                converged: out.converged,
                params: Some(out.params),
                error: None,
            },
            Err(e) => failed(&e),
        }
    });
    let times: Vec<f64> = events.iter().filter_map(|e| e.time_to_within_s).collect();
    let cdf = if times.is_empty() {
        None
    } else {
        Some(build_cdf(&times)?)
    };
    let worst_time = times
        .iter()
        .cloned()
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))));
    let worst_offset = events
        .iter()
        .filter_map(|e| e.offset_at_deadline_ghz)
        .fold(None, |acc: Option<f64>, o| {
            Some(match acc {
                None => o,
                Some(a) if o.abs() > a.abs() => o,
                Some(a) => a,
            })
        });
    let converged_events = events.iter().filter(|e| e.converged).count();
    Ok(SwitchMatrixOutcome {
        events,
        cdf,
        worst_time_to_within_s: worst_time,
        worst_offset_at_deadline_ghz: worst_offset,
        converged_events,
    })
}
