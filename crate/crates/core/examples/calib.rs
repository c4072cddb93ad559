// temporary system probe
use wavetune_core::device::switch_event_currents;
use wavetune_core::preemph::{optimize_preemphasis, RegressionConfig};
use wavetune_core::pso::{optimize_soa_drive, PsoConfig};
use wavetune_core::signal::AwgModel;
use wavetune_core::system::*;

fn main() {
    let mut scenario = Scenario::with_defaults().unwrap();
    // pre-emphasis for the four events in the default assignment
    let cfg = RegressionConfig::default();
    for (a, b) in [(0u32, 121u32), (121, 0), (91, 30), (30, 91)] {
        let event = switch_event_currents(a, b, &scenario.laser1).unwrap();
        let out = optimize_preemphasis(&event, &scenario.laser1, &cfg, &scenario.awg_laser).unwrap();
        println!("pe {a}->{b}: conv {} t2w {:.2?}", out.converged, out.metrics.time_to_within_5ghz_s.map(|t| t * 1e9));
        scenario.preemph.insert((a, b), out.params);
    }
    // modest-budget PSO gate drive
    let pso_cfg = PsoConfig { max_iterations: 120, ..PsoConfig::default() };
    let study = optimize_soa_drive(&scenario.soa1, &AwgModel::default_soa_awg(), &pso_cfg, 20e-9, 1.0).unwrap();
    scenario.soa_drive = Some(study.drive.clone());
    let t0 = std::time::Instant::now();
    let out = simulate(&scenario).unwrap();
    println!("simulate: {:.2}s", t0.elapsed().as_secs_f64());
    for slot in &out.slots {
        println!(
            "slot {} (L{} ch{:>3}): trans {:?} ps, maxfo {:.2} GHz, t2w {:.2?} ns, flat {:.3} dB, ext {:.1?} dB",
            slot.slot_index, slot.laser_id, slot.channel_index,
            slot.metrics.transition_90_90_s.map(|t| (t * 1e12).round()),
            slot.max_abs_freq_offset_ghz,
            slot.metrics.time_to_within_5ghz_s.map(|t| t * 1e9),
            slot.power_flatness_db,
            slot.metrics.extinction_db,
        );
    }
    let report = validate_slots(&out.slots, 5.0, 1.0);
    println!("validation pass: {}", report.pass);
    // gates off comparison
    scenario.gates_enabled = false;
    let off = simulate(&scenario).unwrap();
    let s = scenario.schedule.slot_s;
    let cyc = out.measured_cycle_start_s;
    let max_full: f64 = (0..off.freq_out.len())
        .filter(|&k| { let t = off.freq_out.time_at(k); t >= cyc && t < cyc + 4.0 * s })
        .map(|k| off.freq_out.samples[k].abs())
        .fold(0.0, f64::max);
    println!("gates-off max |offset| over full spans: {max_full:.1} GHz");
}
