//! The four subcommands and their artifact emission.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use wavetune_core::device::switch_event_currents;
use wavetune_core::metrics::SwitchMetrics;
use wavetune_core::preemph::{
    entries_to_table, optimize_preemphasis, run_switch_matrix, table_to_entries,
    PreemphTableEntry, PreemphasisParams,
};
use wavetune_core::pso::{optimize_soa_drive, GateDriveStudy};
use wavetune_core::signal::SampledWaveform;
use wavetune_core::system::{
    build_schedule, crossover_channels, default_assignment, power_per_channel,
    power_time_multiplexed, simulate, validate_slots, Scenario,
};
use wavetune_core::Error;

use crate::config::RunConfig;
use crate::output::{config_hash, opt_ns, opt_num, waveform_rows, OutputDir};
use crate::CliError;

/// Artifact wrapper for the optimized gate drive.
#[derive(Serialize, Deserialize)]
struct DriveArtifact {
    waveform: SampledWaveform,
    #[serde(default, flatten)]
    extra: BTreeMap<String, serde_json::Value>,
}

/// Artifact wrapper for the pre-emphasis table.
#[derive(Serialize, Deserialize)]
struct PreemphArtifact {
    events: Vec<PreemphTableEntry>,
    #[serde(default, flatten)]
    extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize)]
struct SoaMetricsReport<'a> {
    baseline: &'a SwitchMetrics,
    optimized: &'a SwitchMetrics,
    on_level_mw: f64,
    off_level_mw: f64,
    best_fitness: f64,
    evaluations: u64,
    iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_position: Option<&'a [f64]>,
}

pub fn optimize_soa(cfg: &RunConfig, verbose: bool) -> Result<u8, CliError> {
    let hash = config_hash("optimize-soa", cfg);
    let out = OutputDir::create(&cfg.out_dir, hash, cfg.seed)?;
    let study: GateDriveStudy = optimize_soa_drive(
        &cfg.devices.soa,
        &cfg.devices.awg_soa,
        &cfg.pso,
        cfg.soa_slot_ns * 1e-9,
        cfg.soa_input_power_mw,
    )
    .map_err(|e| match e {
        Error::InvalidArgument(_) => CliError::config(e.to_string()),
        other => CliError::internal(other.to_string()),
    })?;

    out.write_json(
        "soa_drive.json",
        &DriveArtifact {
            waveform: study.drive.clone(),
            extra: BTreeMap::new(),
        },
    )?;
    out.write_csv(
        "soa_drive.csv",
        "time_ns,current_ma",
        waveform_rows(&study.drive),
    )?;
    out.write_csv(
        "soa_convergence.csv",
        "iteration,best_fitness",
        study
            .pso
            .fitness_history
            .iter()
            .enumerate()
            .map(|(i, f)| format!("{i},{f:.12e}")),
    )?;
    out.write_json(
        "soa_metrics.json",
        &SoaMetricsReport {
            baseline: &study.baseline_metrics,
            optimized: &study.metrics,
            on_level_mw: study.on_level_mw,
            off_level_mw: study.off_level_mw,
            best_fitness: study.pso.best_fitness,
            evaluations: study.pso.evaluations,
            iterations: study.pso.fitness_history.len() - 1,
            best_position: verbose.then_some(study.pso.best_position.as_slice()),
        },
    )?;
    println!(
        "baseline: settle {} ns, rise {} ns",
        opt_ns(study.baseline_metrics.settle_pm5pct_s),
        opt_ns(study.baseline_metrics.rise_10_90_s)
    );
    println!(
        "optimized: settle {} ns, rise {} ns (mse {:.3e}, {} evaluations)",
        opt_ns(study.metrics.settle_pm5pct_s),
        opt_ns(study.metrics.rise_10_90_s),
        study.pso.best_fitness,
        study.pso.evaluations
    );
    Ok(0)
}

/// The 21-channel test set spanning the band end to end.
fn full_channel_set(count: u32) -> Vec<u32> {
    (0..21u32)
        .map(|k| ((k as u64 * (count as u64 - 1) + 10) / 20) as u32)
        .collect()
}

#[derive(Serialize)]
struct LaserSummary {
    n_events: usize,
    converged_events: usize,
    worst_time_to_within_ns: Option<f64>,
    worst_offset_at_deadline_ghz: Option<f64>,
}

pub fn optimize_laser(cfg: &RunConfig, full: bool) -> Result<u8, CliError> {
    let mut effective = cfg.clone();
    if full {
        effective.laser_opt.channels = full_channel_set(cfg.devices.channel_plan.count);
    }
    let hash = config_hash("optimize-laser", &effective);
    let out = OutputDir::create(&effective.out_dir, hash, effective.seed)?;
    let matrix = run_switch_matrix(
        &effective.laser_opt.channels,
        &effective.devices.laser,
        &effective.regression,
        &effective.devices.awg_laser,
    )
    .map_err(|e| match e {
        Error::InvalidArgument(_) | Error::NotFound(_) => CliError::config(e.to_string()),
        other => CliError::internal(other.to_string()),
    })?;

    out.write_csv(
        "laser_events.csv",
        "from_ch,to_ch,time_to_within_ns,offset_at_deadline_ghz,iterations,converged",
        matrix.events.iter().map(|e| {
            format!(
                "{},{},{},{},{},{}",
                e.from_ch,
                e.to_ch,
                opt_ns(e.time_to_within_s),
                opt_num(e.offset_at_deadline_ghz),
                e.iterations_used,
                e.converged
            )
        }),
    )?;
    if let Some(cdf) = &matrix.cdf {
        out.write_csv(
            "laser_cdf.csv",
            "time_ns,fraction",
            cdf.values
                .iter()
                .zip(cdf.fractions.iter())
                .map(|(v, f)| format!("{:.6},{f:.9}", v * 1e9)),
        )?;
    }
    let mut table = BTreeMap::new();
    for event in &matrix.events {
        if let Some(params) = &event.params {
            table.insert((event.from_ch, event.to_ch), params.clone());
        }
    }
    out.write_json(
        "preemph_table.json",
        &PreemphArtifact {
            events: table_to_entries(&table),
            extra: BTreeMap::new(),
        },
    )?;
    out.write_json(
        "laser_summary.json",
        &LaserSummary {
            n_events: matrix.events.len(),
            converged_events: matrix.converged_events,
            worst_time_to_within_ns: matrix.worst_time_to_within_s.map(|t| t * 1e9),
            worst_offset_at_deadline_ghz: matrix.worst_offset_at_deadline_ghz,
        },
    )?;
    println!(
        "{} events, {} converged, worst lock-in {} ns",
        matrix.events.len(),
        matrix.converged_events,
        opt_ns(matrix.worst_time_to_within_s)
    );
    Ok(0)
}

/// Switch events required by an assignment: consecutive per-laser channel
/// pairs, including the cyclic wrap, skipping same-channel transitions.
fn required_events(assignment: &[wavetune_core::system::SlotSpec]) -> Vec<(u32, u32)> {
    let mut events = Vec::new();
    for laser in [1u8, 2] {
        let chans: Vec<u32> = assignment
            .iter()
            .filter(|s| s.laser_id == laser)
            .map(|s| s.channel_index)
            .collect();
        for i in 0..chans.len() {
            let from = chans[(i + chans.len() - 1) % chans.len()];
            let to = chans[i];
            if from != to && !events.contains(&(from, to)) {
                events.push((from, to));
            }
        }
    }
    events
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::missing_artifact(format!("cannot read artifact {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("invalid artifact {}: {e}", path.display())))
}

pub fn simulate_system(cfg: &RunConfig, auto_optimize: bool, gates_off: bool) -> Result<u8, CliError> {
    let hash = config_hash("simulate-system", cfg);
    let out = OutputDir::create(&cfg.out_dir, hash, cfg.seed)?;
    let mut scenario = Scenario {
        laser1: cfg.devices.laser.clone(),
        laser2: cfg.devices.laser.clone(),
        soa1: cfg.devices.soa.clone(),
        soa2: cfg.devices.soa.clone(),
        plan: cfg.devices.channel_plan,
        schedule: build_schedule(cfg.system.slot_ns * 1e-9)?,
        awg_laser: cfg.devices.awg_laser.clone(),
        awg_soa: cfg.devices.awg_soa.clone(),
        assignment: if cfg.system.assignment.is_empty() {
            default_assignment()
        } else {
            cfg.system.assignment.clone()
        },
        preemph: BTreeMap::new(),
        soa_drive: None,
        gates_enabled: !gates_off,
    };

    // gate drive artifact
    scenario.soa_drive = match (&cfg.system.soa_drive_path, auto_optimize) {
        (Some(path), _) => Some(load_json::<DriveArtifact>(path)?.waveform),
        (None, true) => {
            let study = optimize_soa_drive(
                &cfg.devices.soa,
                &cfg.devices.awg_soa,
                &cfg.pso,
                cfg.system.slot_ns * 1e-9,
                cfg.system.input_power_mw,
            )?;
            Some(study.drive)
        }
        (None, false) => {
            return Err(CliError::missing_artifact(
                "no soa_drive_path configured; run optimize-soa first or pass --auto-optimize",
            ))
        }
    };

    // pre-emphasis artifact
    let needed = required_events(&scenario.assignment);
    scenario.preemph = match (&cfg.system.preemph_table_path, auto_optimize) {
        (Some(path), _) => entries_to_table(&load_json::<PreemphArtifact>(path)?.events),
        (None, true) => {
            let mut table: BTreeMap<(u32, u32), PreemphasisParams> = BTreeMap::new();
            for &(from, to) in &needed {
                let event = switch_event_currents(from, to, &cfg.devices.laser)?;
                let tuned = optimize_preemphasis(
                    &event,
                    &cfg.devices.laser,
                    &cfg.regression,
                    &cfg.devices.awg_laser,
                )?;
                table.insert((from, to), tuned.params);
            }
            table
        }
        (None, false) => {
            return Err(CliError::missing_artifact(
                "no preemph_table_path configured; run optimize-laser first or pass --auto-optimize",
            ))
        }
    };
    for (from, to) in &needed {
        if !scenario.preemph.contains_key(&(*from, *to)) {
            return Err(CliError::missing_artifact(format!(
                "pre-emphasis table has no entry for switch event {from}->{to}"
            )));
        }
    }

    let result = simulate(&scenario).map_err(|e| match e {
        Error::NotFound(msg) => CliError::missing_artifact(msg),
        Error::InvalidArgument(msg) => CliError::config(msg),
        other => CliError::internal(other.to_string()),
    })?;

    out.write_csv(
        "system_power.csv",
        "time_ns,power_mw",
        waveform_rows(&result.power_out),
    )?;
    let s = scenario.schedule.slot_s;
    let n_slots = scenario.assignment.len();
    out.write_csv(
        "system_freq.csv",
        "time_ns,offset_ghz,active_slot",
        (0..result.freq_out.len()).map(|k| {
            let t = result.freq_out.time_at(k);
            let slot = if scenario.gates_enabled {
                ((t / s - 0.75).floor().max(0.0) as usize) % n_slots
            } else {
                ((t / s).floor() as usize) % n_slots
            };
            format!(
                "{:.5},{:.6},{slot}",
                t * 1e9,
                result.freq_out.samples[k]
            )
        }),
    )?;
    out.write_csv(
        "system_slots.csv",
        "slot,laser,channel,transition_90_90_ns,max_abs_offset_ghz,offset_at_window_end_ghz,time_to_within_ns,flatness_db,extinction_db",
        result.slots.iter().map(|slot| {
            format!(
                "{},{},{},{},{:.6},{},{},{:.6},{}",
                slot.slot_index,
                slot.laser_id,
                slot.channel_index,
                opt_ns(slot.metrics.transition_90_90_s),
                slot.max_abs_freq_offset_ghz,
                opt_num(slot.metrics.freq_offset_at_deadline_ghz),
                opt_ns(slot.metrics.time_to_within_5ghz_s),
                slot.power_flatness_db,
                opt_num(slot.metrics.extinction_db),
            )
        }),
    )?;
    let report = validate_slots(&result.slots, cfg.system.tol_ghz, cfg.system.flatness_db);
    out.write_json("system_validation.json", &report)?;
    for slot in &result.slots {
        println!(
            "slot {} (laser {}, channel {}): transition {} ns, max offset {:.2} GHz, flatness {:.3} dB",
            slot.slot_index,
            slot.laser_id,
            slot.channel_index,
            opt_ns(slot.metrics.transition_90_90_s),
            slot.max_abs_freq_offset_ghz,
            slot.power_flatness_db
        );
    }
    if report.pass {
        println!("validation: PASS");
        Ok(0)
    } else {
        eprintln!("validation: FAIL");
        Ok(4)
    }
}

#[derive(Serialize)]
struct PowerSummary {
    crossover_channels: Option<u32>,
    band_power_w: f64,
    per_channel_unit_w: f64,
}

pub fn power_scaling(cfg: &RunConfig) -> Result<u8, CliError> {
    let hash = config_hash("power-scaling", cfg);
    let out = OutputDir::create(&cfg.out_dir, hash, cfg.seed)?;
    let p = &cfg.power.params;
    if cfg.power.n_min < 1 || cfg.power.n_min > cfg.power.n_max {
        return Err(CliError::config("power range must satisfy 1 <= n_min <= n_max"));
    }
    let mut rows = Vec::new();
    for n in cfg.power.n_min..=cfg.power.n_max {
        let module = power_time_multiplexed(n, p).map_err(|e| CliError::config(e.to_string()))?;
        let per_channel =
            power_per_channel(n, p).map_err(|e| CliError::config(e.to_string()))?;
        rows.push(format!("{n},{module:.6},{per_channel:.6}"));
    }
    out.write_csv(
        "power_scaling.csv",
        "n_channels,power_module_w,power_per_channel_w",
        rows,
    )?;
    let crossover = crossover_channels(p).map_err(|e| CliError::config(e.to_string()))?;
    out.write_json(
        "power_summary.json",
        &PowerSummary {
            crossover_channels: crossover,
            band_power_w: power_time_multiplexed(1, p).unwrap_or(f64::NAN),
            per_channel_unit_w: power_per_channel(1, p).unwrap_or(f64::NAN),
        },
    )?;
    match crossover {
        Some(n) => println!("module wins beyond {n} channels"),
        None => println!("no crossover within the band budget"),
    }
    Ok(0)
}
