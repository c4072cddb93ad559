// temporary square-gate boundary probe
use wavetune_core::device::switch_event_currents;
use wavetune_core::preemph::{optimize_preemphasis, RegressionConfig};
use wavetune_core::system::*;

fn main() {
    let mut scenario = Scenario::with_defaults().unwrap();
    let cfg = RegressionConfig::default();
    for (a, b) in [(0u32, 121u32), (121, 0), (91, 30), (30, 91)] {
        let event = switch_event_currents(a, b, &scenario.laser1).unwrap();
        let out = optimize_preemphasis(&event, &scenario.laser1, &cfg, &scenario.awg_laser).unwrap();
        scenario.preemph.insert((a, b), out.params);
    }
    // square fallback drive
    let out = simulate(&scenario).unwrap();
    for slot in &out.slots {
        println!("square-gate slot {}: trans {:?} ps flat {:.3} dB ext {:.1?}", slot.slot_index,
            slot.metrics.transition_90_90_s.map(|t| (t * 1e12).round()),
            slot.power_flatness_db, slot.metrics.extinction_db);
    }
}
