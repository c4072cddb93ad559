//! Particle swarm optimization over sampled drive signals.
//!
//! The optimizer is a standard global-best PSO with constriction-style
//! defaults. Random draws are indexed by (seed, particle, iteration), never
//! sequential, so evaluation order — and in particular the parallel
//! schedule — cannot change the trajectory. [`optimize_soa_drive`] is the
//! gate-shaping harness: particles decode to drive current waveforms, pass
//! through the AWG and SOA models, and are scored by mean squared error
//! against an ideal step set point.

use crate::device::{soa_response, SoaParams};
use crate::error::{invalid, Error, Result};
use crate::metrics::{
    mse_fitness, rise_time_10_90_with, settling_time, LevelWindows, SwitchMetrics,
};
use crate::par;
use crate::signal::{apply_awg, resample, AwgModel, SampledWaveform, Units, SIM_RATE_HZ};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Swarm hyperparameters and search-space definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsoConfig {
    pub n_particles: usize,
    pub n_dims: usize,
    pub inertia_w: f64,
    pub cognitive_c1: f64,
    pub social_c2: f64,
    pub max_iterations: usize,
    /// Per-dimension (lo, hi) bounds.
    pub bounds: Vec<(f64, f64)>,
    pub v_max: f64,
    pub seed: u64,
    /// Fraction of the per-dimension range used to perturb warm-start
    /// particles.
    pub init_spread: f64,
    /// Stop after this many iterations without global-best improvement.
    pub stagnation_patience: usize,
    /// Explicit positions for the first particles; remaining particles are
    /// initialized uniformly at random inside the bounds.
    #[serde(skip)]
    pub init_positions: Option<Vec<Vec<f64>>>,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            n_particles: 160,
            n_dims: 240,
            inertia_w: 0.729,
            cognitive_c1: 1.49445,
            social_c2: 1.49445,
            max_iterations: 500,
            bounds: vec![(0.0, 90.0); 240],
            v_max: 9.0,
            seed: 42,
            init_spread: 0.05,
            stagnation_patience: 50,
            init_positions: None,
        }
    }
}

impl PsoConfig {
    pub fn with_uniform_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.bounds = vec![(lo, hi); self.n_dims];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(invalid("PSO needs at least 2 particles"));
        }
        if self.n_dims == 0 {
            return Err(invalid("PSO search space must have at least 1 dimension"));
        }
        if self.bounds.len() != self.n_dims {
            return Err(invalid(format!(
                "bounds cover {} dimensions but n_dims is {}",
                self.bounds.len(),
                self.n_dims
            )));
        }
        if self.bounds.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(invalid("every bound must satisfy lo < hi"));
        }
        if !(self.v_max > 0.0) {
            return Err(invalid("v_max must be positive"));
        }
        Ok(())
    }
}

/// Outcome of one optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoResult {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    /// Global best after the initial evaluation and after each iteration.
    pub fitness_history: Vec<f64>,
    pub evaluations: u64,
}

const STREAM_INIT: u64 = 0;
const STREAM_VELOCITY: u64 = 1;

fn stream_rng(seed: u64, stream: u64, particle: u64, iteration: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(&particle.to_le_bytes());
    key[24..32].copy_from_slice(&iteration.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn evaluate<F>(
    positions: &[Vec<f64>],
    fitness: &F,
    sequential: bool,
    iteration: usize,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let values = if sequential {
        par::map_batch_seq(positions, |p| fitness(p))
    } else {
        par::map_batch(positions, |p| fitness(p))
    };
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Evaluation {
                particle: i,
                iteration,
                message: format!("fitness returned {v}"),
            });
        }
    }
    Ok(values)
}

fn pso_optimize_impl<F>(fitness: &F, cfg: &PsoConfig, sequential: bool) -> Result<PsoResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let n = cfg.n_particles;
    let dims = cfg.n_dims;
    let seeded = cfg.init_positions.as_deref().unwrap_or(&[]);
    let mut positions: Vec<Vec<f64>> = (0..n)
        .map(|p| {
            if let Some(given) = seeded.get(p) {
                given
                    .iter()
                    .zip(cfg.bounds.iter())
                    .map(|(&x, &(lo, hi))| x.clamp(lo, hi))
                    .collect()
            } else {
                let mut rng = stream_rng(cfg.seed, STREAM_INIT, p as u64, 0);
                cfg.bounds
                    .iter()
                    .map(|&(lo, hi)| rng.gen_range(lo..hi))
                    .collect()
            }
        })
        .collect();
    let mut velocities = vec![vec![0.0; dims]; n];

    let mut fitnesses = evaluate(&positions, fitness, sequential, 0)?;
    let mut pbest = positions.clone();
    let mut pbest_fit = fitnesses.clone();
    let mut gbest_fit = f64::INFINITY;
    let mut gbest_idx = 0usize;
    for (i, &f) in fitnesses.iter().enumerate() {
        if f < gbest_fit {
            gbest_fit = f;
            gbest_idx = i;
        }
    }
    let mut gbest = positions[gbest_idx].clone();
    let mut history = vec![gbest_fit];
    let mut evaluations = n as u64;
    let mut stagnant = 0usize;

    for iter in 1..=cfg.max_iterations {
        for p in 0..n {
            let mut rng = stream_rng(cfg.seed, STREAM_VELOCITY, p as u64, iter as u64);
            for d in 0..dims {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let x = positions[p][d];
                let v = cfg.inertia_w * velocities[p][d]
                    + cfg.cognitive_c1 * r1 * (pbest[p][d] - x)
                    + cfg.social_c2 * r2 * (gbest[d] - x);
                let v = v.clamp(-cfg.v_max, cfg.v_max);
                let (lo, hi) = cfg.bounds[d];
                velocities[p][d] = v;
                positions[p][d] = (x + v).clamp(lo, hi);
            }
        }
        fitnesses = evaluate(&positions, fitness, sequential, iter)?;
        evaluations += n as u64;
        let before = gbest_fit;
        for (i, &f) in fitnesses.iter().enumerate() {
            if f < pbest_fit[i] {
                pbest_fit[i] = f;
                pbest[i].clone_from(&positions[i]);
            }
            // strict improvement; on ties the earlier (lowest-index) holder
            // of the global best keeps it
            if f < gbest_fit {
                gbest_fit = f;
                gbest.clone_from(&positions[i]);
            }
        }
        history.push(gbest_fit);
        if before - gbest_fit > 1e-12 {
            stagnant = 0;
        } else {
            stagnant += 1;
            if stagnant >= cfg.stagnation_patience {
                break;
            }
        }
    }

    Ok(PsoResult {
        best_position: gbest,
        best_fitness: gbest_fit,
        fitness_history: history,
        evaluations,
    })
}

/// Minimize `fitness` over the bounded box. Fitness evaluations within an
/// iteration run on the parallel pool when available.
pub fn pso_optimize<F>(fitness: F, cfg: &PsoConfig) -> Result<PsoResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pso_optimize_impl(&fitness, cfg, false)
}

/// Same optimization on the sequential evaluation path. Exists so tests and
/// benchmarks can verify that scheduling does not affect results.
pub fn pso_optimize_sequential<F>(fitness: F, cfg: &PsoConfig) -> Result<PsoResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pso_optimize_impl(&fitness, cfg, true)
}

// ---------------------------------------------------------------------------
// SOA gate drive optimization
// ---------------------------------------------------------------------------

/// Result of a gate-drive optimization run, including the plain square-drive
/// baseline measured on the same plant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateDriveStudy {
    /// Optimized drive at its native rate (`n_dims` samples per gate period).
    pub drive: SampledWaveform,
    pub pso: PsoResult,
    pub metrics: SwitchMetrics,
    pub baseline_drive: SampledWaveform,
    pub baseline_metrics: SwitchMetrics,
    pub on_level_mw: f64,
    pub off_level_mw: f64,
}

/// Timing layout of one gate period: off for a quarter period, on for half,
/// off for the final quarter. The rising edge sits at `period/4`.
#[derive(Debug, Clone, Copy)]
struct GateLayout {
    period_s: f64,
    t_on: f64,
    t_off: f64,
    native_rate_hz: f64,
}

impl GateLayout {
    fn new(slot_s: f64, n_dims: usize) -> Self {
        let period_s = 2.0 * slot_s;
        Self {
            period_s,
            t_on: period_s / 4.0,
            t_off: 3.0 * period_s / 4.0,
            native_rate_hz: n_dims as f64 / period_s,
        }
    }
}

fn decode_drive(position: &[f64], layout: &GateLayout) -> SampledWaveform {
    SampledWaveform::new(
        position.to_vec(),
        layout.native_rate_hz,
        0.0,
        Units::MilliAmp,
    )
    .expect("drive positions are non-empty and bounded")
}

fn square_position(layout: &GateLayout, n_dims: usize, on_ma: f64, off_ma: f64) -> Vec<f64> {
    (0..n_dims)
        .map(|k| {
            let t = k as f64 / layout.native_rate_hz;
            if t >= layout.t_on && t < layout.t_off {
                on_ma
            } else {
                off_ma
            }
        })
        .collect()
}

/// Push a decoded drive through the AWG and the SOA at the internal
/// simulation rate.
fn simulate_gate(
    drive: &SampledWaveform,
    soa: &SoaParams,
    awg: &AwgModel,
    input_power_mw: f64,
) -> Result<SampledWaveform> {
    let shaped = apply_awg(drive, awg)?;
    let at_sim = resample(&shaped, SIM_RATE_HZ)?;
    soa_response(&at_sim, soa, input_power_mw)
}

fn ideal_set_point(layout: &GateLayout, on_mw: f64, off_mw: f64) -> SampledWaveform {
    let n = (layout.period_s * SIM_RATE_HZ).round() as usize;
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 / SIM_RATE_HZ;
            if t >= layout.t_on && t < layout.t_off {
                on_mw
            } else {
                off_mw
            }
        })
        .collect();
    SampledWaveform::new(samples, SIM_RATE_HZ, 0.0, Units::MilliWatt).unwrap()
}

/// Rise/settle/overshoot/extinction of a gated optical output against the
/// set-point levels. Edge metrics are measured on the rising edge and the
/// first half of the on plateau, away from the falling edge. Metrics that
/// are undefined for the trace are absent.
fn gate_step_metrics(
    optical: &SampledWaveform,
    layout: &GateLayout,
    on_mw: f64,
    off_mw: f64,
) -> Result<SwitchMetrics> {
    let gate_span = layout.t_off - layout.t_on;
    let edge_window = optical.slice(0.0, layout.t_on + 0.5 * gate_span)?;
    let windows = LevelWindows::default();
    let mut m = SwitchMetrics::default();
    // Shaped drives may lead the nominal edge to cancel chain delay, so the
    // rise search starts slightly before it. The 10-90% value itself is a
    // difference of crossings and unaffected by the search start.
    let rise_search_from = layout.t_on - 0.15 * gate_span;
    m.rise_10_90_s = match rise_time_10_90_with(&edge_window, rise_search_from, &windows) {
        Ok(v) => Some(v),
        Err(Error::NoTransition(_)) => None,
        Err(e) => return Err(e),
    };
    m.settle_pm5pct_s = match settling_time(&edge_window, on_mw, 0.05, layout.t_on) {
        Ok(v) => Some(v),
        Err(Error::NoTransition(_)) => None,
        Err(e) => return Err(e),
    };
    let peak = edge_window
        .slice(layout.t_on, edge_window.end_time_s())?
        .samples
        .iter()
        .cloned()
        .fold(f64::MIN, f64::max);
    m.overshoot_fraction = Some(((peak - on_mw) / (on_mw - off_mw)).max(0.0));
    let on_mid = optical.slice(
        layout.t_on + 0.25 * gate_span,
        layout.t_on + 0.75 * gate_span,
    )?;
    let off_mid = optical.slice(0.1 * layout.t_on, 0.9 * layout.t_on)?;
    m.extinction_db = Some(crate::metrics::extinction_ratio(&on_mid, &off_mid)?);
    Ok(m)
}

/// Shape the SOA gate drive with PSO against an ideal step set point.
///
/// Particles decode to drive-current waveforms covering one gate period
/// (`2 * slot_s`) with `cfg.n_dims` samples. Half the swarm starts as
/// perturbed square pulses (including one exact square), the rest uniformly
/// at random. The returned study includes the square-drive baseline measured
/// on the same plant.
pub fn optimize_soa_drive(
    soa: &SoaParams,
    awg: &AwgModel,
    cfg: &PsoConfig,
    slot_s: f64,
    input_power_mw: f64,
) -> Result<GateDriveStudy> {
    soa.validate()?;
    awg.validate()?;
    cfg.validate()?;
    if awg.units != Units::MilliAmp {
        return Err(invalid("the SOA gate AWG must output mA"));
    }
    if !(slot_s > 0.0) {
        return Err(invalid("slot duration must be positive"));
    }
    if !(input_power_mw > 0.0) {
        return Err(invalid("input power must be positive"));
    }
    let layout = GateLayout::new(slot_s, cfg.n_dims);
    let on_mw = soa.steady_output_mw(soa.bias_current_ma, input_power_mw);
    let off_mw = soa.steady_output_mw(0.0, input_power_mw);
    let sp = ideal_set_point(&layout, on_mw, off_mw);

    let baseline_position = square_position(&layout, cfg.n_dims, soa.bias_current_ma, 0.0);
    let baseline_drive = decode_drive(&baseline_position, &layout);
    let baseline_optical = simulate_gate(&baseline_drive, soa, awg, input_power_mw)?;
    let baseline_metrics = gate_step_metrics(&baseline_optical, &layout, on_mw, off_mw)?;

    let mut run_cfg = cfg.clone();
    if run_cfg.init_positions.is_none() {
        run_cfg.init_positions = Some(warm_start_positions(&run_cfg, &layout, soa));
    }

    let fitness = |pos: &[f64]| -> f64 {
        let drive = decode_drive(pos, &layout);
        let optical = simulate_gate(&drive, soa, awg, input_power_mw)
            .expect("gate simulation failed on a bounded drive");
        mse_fitness(&optical, &sp).expect("set point and output share one grid")
    };
    let pso = pso_optimize(fitness, &run_cfg)?;

    let drive = decode_drive(&pso.best_position, &layout);
    let optical = simulate_gate(&drive, soa, awg, input_power_mw)?;
    let metrics = gate_step_metrics(&optical, &layout, on_mw, off_mw)?;

    Ok(GateDriveStudy {
        drive,
        pso,
        metrics,
        baseline_drive,
        baseline_metrics,
        on_level_mw: on_mw,
        off_level_mw: off_mw,
    })
}

/// Half the swarm as perturbed square pulses (particle 0 is the exact
/// square) with randomized edge overshoot/undershoot notches.
fn warm_start_positions(
    cfg: &PsoConfig,
    layout: &GateLayout,
    soa: &SoaParams,
) -> Vec<Vec<f64>> {
    let n_seeded = cfg.n_particles / 2;
    let k_on = (layout.t_on * layout.native_rate_hz).round() as usize;
    let k_off = (layout.t_off * layout.native_rate_hz).round() as usize;
    let square = square_position(layout, cfg.n_dims, soa.bias_current_ma, 0.0);
    (0..n_seeded)
        .map(|p| {
            if p == 0 {
                return square.clone();
            }
            let mut rng = stream_rng(cfg.seed, STREAM_INIT, p as u64, 1);
            let mut pos = square.clone();
            let over_len = rng.gen_range(1..=4usize);
            let over_amp = rng.gen_range(0.0..1.0);
            let under_len = rng.gen_range(1..=4usize);
            let under_amp = rng.gen_range(0.0..1.0);
            for d in 0..cfg.n_dims {
                let (lo, hi) = cfg.bounds[d];
                if d >= k_on && d < (k_on + over_len).min(k_off) {
                    pos[d] += over_amp * (hi - pos[d]);
                }
                if d >= k_off && d < k_off + under_len {
                    pos[d] -= under_amp * (pos[d] - lo);
                }
                let spread = cfg.init_spread * (hi - lo);
                pos[d] = (pos[d] + rng.gen_range(-spread..spread)).clamp(lo, hi);
            }
            pos
        })
        .collect()
}
