//! Traditional control: per-case hysteresis valves and a dead-banded PI
//! compressor loop with integer thresholding.

use crate::params::PlantParams;
use crate::plant::{ControlInput, PlantState};

/// Memory of the hysteresis valve law: last commanded valve per case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HysteresisState {
    pub previous: Vec<bool>,
}

impl HysteresisState {
    pub fn closed(n: usize) -> Self {
        HysteresisState { previous: vec![false; n] }
    }
}

/// Memory of the PI loop: error integral and the last ON count.
#[derive(Debug, Clone, PartialEq)]
pub struct PiState {
    /// Accumulated error [bar·s].
    pub integral: f64,
    /// ON compressors chosen at the previous update.
    pub last_on: usize,
}

impl PiState {
    pub fn zero() -> Self {
        PiState { integral: 0.0, last_on: 0 }
    }
}

/// Hysteresis valve law: open above the band, close below it, otherwise hold.
/// Returns the new commands and updates the state in place.
pub fn hysteresis_valve_law(
    t_air: &[f64],
    state: &mut HysteresisState,
    params: &PlantParams,
) -> Vec<bool> {
    let mut u = Vec::with_capacity(t_air.len());
    for i in 0..t_air.len() {
        let cmd = if t_air[i] > params.t_max_c[i] {
            true
        } else if t_air[i] < params.t_min_c[i] {
            false
        } else {
            state.previous[i]
        };
        u.push(cmd);
    }
    state.previous.copy_from_slice(&u);
    u
}

/// Dead-banded pressure deviation: P_suc − P̄ outside the band, zero inside.
pub fn pi_error(p_suc: f64, params: &PlantParams) -> f64 {
    let d = p_suc - params.pressure_ref_bar;
    if d.abs() > params.dead_band_bar {
        d
    } else {
        0.0
    }
}

/// PI output K_P·e + ∫e/K_I after accumulating `e` over `h` seconds.
pub fn pi_output(e: f64, state: &mut PiState, h: f64, params: &PlantParams) -> f64 {
    assert!(h > 0.0, "PI update interval must be positive");
    state.integral += e * h;
    params.k_p * e + state.integral / params.k_i
}

/// Quantizes the PI output into an ON-compressor prefix:
/// N_on = clamp(⌊u_PI⌋, 0, n_c), first N slots running.
pub fn compressor_thresholding(u_pi: f64, params: &PlantParams) -> Vec<bool> {
    let n_on = (u_pi.floor().max(0.0) as usize).min(params.n_comp);
    (0..params.n_comp).map(|i| i < n_on).collect()
}

/// The complete traditional controller.
///
/// The valve law follows the measured air temperatures directly. The
/// compressor loop integrates the dead-banded pressure deviation with the
/// sign chosen so that sustained high pressure turns compressors on (the
/// integral constant is negative, so the accumulated error is fed negated),
/// with the accumulator frozen while the ON count is pinned at either end.
#[derive(Debug, Clone)]
pub struct BaselineController {
    pub hysteresis: HysteresisState,
    pub pi: PiState,
}

impl BaselineController {
    pub fn new(n: usize) -> Self {
        BaselineController { hysteresis: HysteresisState::closed(n), pi: PiState::zero() }
    }

    /// One decision with update interval `h` seconds.
    pub fn decide(&mut self, state: &PlantState, h: f64, params: &PlantParams) -> ControlInput {
        let valves = hysteresis_valve_law(&state.t_air, &mut self.hysteresis, params);
        let e = -pi_error(state.p_suc, params);
        // Anti-windup: skip the accumulator update when it would only push the
        // saturated ON count further past its clamp.
        let delta_u = e * h / params.k_i;
        let saturated_low = self.pi.last_on == 0 && delta_u < 0.0;
        let saturated_high = self.pi.last_on == params.n_comp && delta_u > 0.0;
        let u_pi = if saturated_low || saturated_high {
            params.k_p * e + self.pi.integral / params.k_i
        } else {
            pi_output(e, &mut self.pi, h, params)
        };
        let compressors = compressor_thresholding(u_pi, params);
        self.pi.last_on = compressors.iter().filter(|&&b| b).count();
        ControlInput { valves, compressors }
    }
}
