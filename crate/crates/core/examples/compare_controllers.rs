//! Runs the baseline and both optimizing controllers on the same perturbed
//! plant for one hour and prints the headline numbers.
//!
//! ```sh
//! cargo run --example compare_controllers --release
//! ```

use refsim::params::{default_params, ControllerKind};
use refsim::scenario::{compare, ScenarioConfig};

fn main() -> refsim::Result<()> {
    let (params, topology) = default_params();
    let sc = ScenarioConfig {
        duration_s: 3600.0,
        controller: ControllerKind::Pi,
        seed: 2013,
        delta: 0.5,
        n_samples: 61,
        prices: None,
        dr: None,
    };
    let (cmp, runs) = compare(&params, &topology, &sc)?;
    for run in &runs {
        let m = &run.metrics;
        println!(
            "{:>6}: {:.3} kW, {:>3} compressor switchings, air violation {:.2} °C·s",
            run.controller.to_string(),
            m.average_power_kw,
            m.switching_count,
            m.violation_integral_c_s,
        );
    }
    println!(
        "savings vs baseline: linear {:.1}%, greedy {:.1}%",
        cmp.linear_energy_saving_pct, cmp.greedy_energy_saving_pct
    );
    Ok(())
}
