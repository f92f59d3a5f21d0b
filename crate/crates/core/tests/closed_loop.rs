//! Slow closed-loop checks that exercise whole scenario runs.

use refsim::params::{default_params, ControllerKind};
use refsim::scenario::{run_closed_loop, ScenarioConfig};

fn scenario(kind: ControllerKind, duration_s: f64) -> ScenarioConfig {
    ScenarioConfig {
        duration_s,
        controller: kind,
        seed: 2013,
        delta: 0.5,
        n_samples: 61,
        prices: None,
        dr: None,
    }
}

/// While compressor outflow balances valve inflow, rack energy equals the
/// valve-based accounting (specific power per unit volume, divided by density,
/// times refrigerant mass flow) to within a couple of percent.
#[test]
fn rack_energy_matches_valve_based_accounting() {
    let (p, topo) = default_params();
    let run = run_closed_loop(&p, &topo, &scenario(ControllerKind::Linear, 7200.0)).unwrap();
    let traj = &run.trajectory;
    let mut rack = 0.0;
    let mut valve_based = 0.0;
    for k in 0..traj.power_w.len() {
        let dt = traj.times[k + 1] - traj.times[k];
        let p_suc = traj.states[k].p_suc;
        let w = p.refrigerant.compressor_specific_power(p_suc).unwrap();
        let rho = p.refrigerant.suction_density(p_suc).unwrap();
        let inflow = traj.inputs[k].open_valves() as f64 * p.max_refrigerant_charge_kg
            / p.control_period_s;
        rack += traj.power_w[k] * dt;
        valve_based += w / rho * inflow * dt;
    }
    let rel = (rack - valve_based).abs() / valve_based;
    assert!(
        rel < 0.02,
        "rack energy {rack:.0} J vs valve-based {valve_based:.0} J differ by {:.2}%",
        100.0 * rel
    );
}

/// The traditional controller holds every case within one degree of the band
/// over a full workday, despite the interconnection.
#[test]
fn baseline_stays_within_the_sanity_envelope_for_eight_hours() {
    let (p, topo) = default_params();
    let run = run_closed_loop(&p, &topo, &scenario(ControllerKind::Pi, 28_800.0)).unwrap();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in &run.trajectory.states {
        for i in 0..p.n {
            lo = lo.min(s.t_air[i]);
            hi = hi.max(s.t_air[i]);
        }
    }
    assert!(
        lo >= p.t_min_c[0] - 1.0 && hi <= p.t_max_c[0] + 1.0,
        "baseline air range [{lo:.2}, {hi:.2}] left the sanity envelope"
    );
}

/// Both proposed controllers keep the plant stable and spend less energy than
/// the baseline on a one-hour run.
#[test]
fn proposed_controllers_undercut_the_baseline_on_a_short_run() {
    let (p, topo) = default_params();
    let pi = run_closed_loop(&p, &topo, &scenario(ControllerKind::Pi, 3600.0)).unwrap();
    for kind in [ControllerKind::Linear, ControllerKind::Greedy] {
        let run = run_closed_loop(&p, &topo, &scenario(kind, 3600.0)).unwrap();
        assert!(
            run.metrics.average_power_kw < pi.metrics.average_power_kw,
            "{kind} used {:.2} kW vs baseline {:.2} kW",
            run.metrics.average_power_kw,
            pi.metrics.average_power_kw
        );
        assert!(run.metrics.max_food_excursion_c < 1.0);
    }
}
