//! Exhaustive ground-truth solvers and property checkers, runnable at small
//! case counts. These exist for correctness, not speed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::opt::{self, InnerProblem, ValveSolution};
use crate::params::{PlantParams, Topology};
use crate::plant::{self, ControlInput, PlantState, Schedule, SimOptions, Trajectory};

/// Guard for subset enumeration.
pub const ENUMERATION_GUARD: usize = 20;
/// Guard for triple-wise submodularity checks.
pub const SUBMODULARITY_GUARD: usize = 6;

/// Outcome of one property suite run.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub property: String,
    pub instances_tested: usize,
    pub seed: u64,
    pub violations: Vec<Violation>,
    /// Informational findings (empirical ratios and the like).
    pub notes: Vec<String>,
}

/// A witnessed property violation.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub witness: String,
    pub margin: f64,
}

impl PropertyReport {
    pub fn new(property: impl Into<String>, seed: u64) -> Self {
        PropertyReport {
            property: property.into(),
            instances_tested: 0,
            seed,
            violations: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn record(&mut self, witness: String, margin: f64) {
        self.violations.push(Violation { witness, margin });
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {} over {} instances (seed {}){}",
            self.property,
            if self.pass() { "PASS" } else { "FAIL" },
            self.instances_tested,
            self.seed,
            if self.pass() {
                self.notes.first().map(|n| format!(" [{n}]")).unwrap_or_default()
            } else {
                format!(", {} violations", self.violations.len())
            }
        )
    }
}

fn mask_to_open(mask: u32, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask & (1 << i) != 0).collect()
}

fn mask_levels(mask: u32, n: usize) -> Vec<f64> {
    (0..n).map(|i| if mask & (1 << i) != 0 { 1.0 } else { 0.0 }).collect()
}

/// Enumerates subsets by cardinality (0, 1, ...) and, within a cardinality,
/// in lexicographically increasing index order.
fn subsets_up_to(n: usize, k: usize) -> Vec<u32> {
    let mut out = Vec::new();
    for size in 0..=k.min(n) {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            out.push(combo.iter().fold(0u32, |m, &i| m | (1 << i)));
            // Advance to the next combination of this size.
            let mut i = size;
            loop {
                if i == 0 {
                    combo.clear();
                    break;
                }
                i -= 1;
                if combo[i] < n - (size - i) {
                    combo[i] += 1;
                    for j in i + 1..size {
                        combo[j] = combo[j - 1] + 1;
                    }
                    break;
                }
            }
            if combo.is_empty() {
                break;
            }
        }
    }
    out
}

/// Exhaustive inner solver: evaluates V over every valve set of size ≤ K and
/// returns a maximizer. Ties go to the first candidate in
/// (cardinality, lexicographic) order, so the smallest set wins.
pub fn exhaustive_inner(problem: &InnerProblem, k: usize) -> Result<ValveSolution> {
    exhaustive_inner_with_stats(problem, k).map(|(sol, _)| sol)
}

/// As [`exhaustive_inner`], additionally reporting how many candidates were
/// evaluated.
pub fn exhaustive_inner_with_stats(
    problem: &InnerProblem,
    k: usize,
) -> Result<(ValveSolution, usize)> {
    let n = problem.n();
    if n > ENUMERATION_GUARD {
        return Err(Error::EnumerationGuard { n, max: ENUMERATION_GUARD });
    }
    assert!(k <= n, "budget exceeds valve count");
    let mut best_mask = 0u32;
    let mut best_value = 0.0f64;
    let mut evaluated = 0usize;
    for mask in subsets_up_to(n, k) {
        evaluated += 1;
        let v = opt::value(problem, &mask_levels(mask, n));
        if v > best_value {
            best_value = v;
            best_mask = mask;
        }
    }
    let open = mask_to_open(best_mask, n);
    let objective = problem.j_closed() - best_value;
    Ok((
        ValveSolution {
            opened: open.iter().filter(|&&b| b).count(),
            open,
            objective,
            value: best_value,
            rho: None,
            feasible: true,
        },
        evaluated,
    ))
}

/// Exhaustive bilevel solver: increasing-K search with [`exhaustive_inner`]
/// until the optimal overshoot meets the threshold. Returns the first
/// feasible budget's solution, flagged infeasible if even K = n fails.
pub fn exhaustive_bilevel(problem: &InnerProblem) -> Result<ValveSolution> {
    let n = problem.n();
    if n > ENUMERATION_GUARD {
        return Err(Error::EnumerationGuard { n, max: ENUMERATION_GUARD });
    }
    let cap = problem.budget;
    let mut last = None;
    for k in 0..=cap {
        let sol = exhaustive_inner(problem, k)?;
        if sol.objective <= problem.delta {
            return Ok(sol);
        }
        last = Some(sol);
    }
    let mut sol = last.unwrap_or_else(|| {
        ValveSolution {
            open: vec![false; n],
            objective: problem.j_closed(),
            value: 0.0,
            opened: 0,
            rho: None,
            feasible: true,
        }
    });
    sol.feasible = false;
    Ok(sol)
}

/// Checks the diminishing-return inequality and monotonicity of the value
/// function over every (X ⊆ Y, a ∉ Y) triple, tolerance 1e-9.
pub fn check_submodularity(problem: &InnerProblem, seed: u64) -> Result<PropertyReport> {
    let n = problem.n();
    if n > SUBMODULARITY_GUARD {
        return Err(Error::EnumerationGuard { n, max: SUBMODULARITY_GUARD });
    }
    const TOL: f64 = 1e-9;
    let mut report = PropertyReport::new("submodularity_and_monotonicity", seed);
    // Memoize V over all subsets.
    let total = 1u32 << n;
    let values: Vec<f64> =
        (0..total).map(|mask| opt::value(problem, &mask_levels(mask, n))).collect();
    for y in 0..total {
        // enumerate X ⊆ Y
        let mut x = y;
        loop {
            if values[x as usize] > values[y as usize] + TOL {
                report.record(
                    format!("monotonicity: V({x:#b}) > V({y:#b})"),
                    values[x as usize] - values[y as usize],
                );
            }
            for a in 0..n {
                let bit = 1u32 << a;
                if y & bit != 0 {
                    continue;
                }
                report.instances_tested += 1;
                let gain_small = values[(x | bit) as usize] - values[x as usize];
                let gain_large = values[(y | bit) as usize] - values[y as usize];
                if gain_small < gain_large - TOL {
                    report.record(
                        format!("submodularity: X={x:#b} Y={y:#b} a={a}"),
                        gain_large - gain_small,
                    );
                }
            }
            if x == 0 {
                break;
            }
            x = (x - 1) & y;
        }
    }
    Ok(report)
}

/// Paired-simulation check of input monotonicity: componentwise larger valve
/// patterns never yield warmer food or air temperatures. Pressure is held so
/// both runs share the same evaporation temperature, matching the setting of
/// the guarantee.
pub fn check_monotone_dynamics(
    params: &PlantParams,
    topology: &Topology,
    trials: usize,
    seed: u64,
) -> Result<PropertyReport> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropertyReport::new("input_monotone_dynamics", seed);
    const TOL: f64 = 1e-9;
    let horizon = 600.0;
    for trial in 0..trials {
        let mut p = params.clone();
        for i in 0..p.n {
            p.food_mass_kg[i] = params.food_mass_kg[i] * rng.gen_range(0.8..1.2);
        }
        let mut init = PlantState::uniform(p.n, 0.0, p.pressure_ref_bar);
        for i in 0..p.n {
            init.t_food[i] = rng.gen_range(1.0..6.0);
            init.t_air[i] = rng.gen_range(1.0..6.0);
        }
        // α ≤ β componentwise.
        let mut alpha = ControlInput::all_off(p.n, p.n_comp);
        let mut beta = alpha.clone();
        for i in 0..p.n {
            match rng.gen_range(0..3) {
                0 => {}
                1 => beta.valves[i] = true,
                _ => {
                    alpha.valves[i] = true;
                    beta.valves[i] = true;
                }
            }
        }
        let opts = SimOptions { hold_pressure: true };
        let run = |input: &ControlInput| {
            plant::simulate(&init, &Schedule::constant(input.clone()), horizon, 1.0, &p, topology, opts)
        };
        let ta = run(&alpha)?;
        let tb = run(&beta)?;
        report.instances_tested += 1;
        for (k, (sa, sb)) in ta.states.iter().zip(&tb.states).enumerate() {
            for i in 0..p.n {
                let d_air = sb.t_air[i] - sa.t_air[i];
                let d_food = sb.t_food[i] - sa.t_food[i];
                if d_air > TOL || d_food > TOL {
                    report.record(
                        format!("trial {trial}, sample {k}, case {i}"),
                        d_air.max(d_food),
                    );
                }
            }
        }
    }
    Ok(report)
}

/// Ratio of the oracle-controlled average power to the tested controller's,
/// as a percentage. 100% means the controller matched the oracle.
pub fn suboptimality_ratio(controller: &Trajectory, oracle: &Trajectory) -> Result<f64> {
    let (dc, do_) = (controller.duration_s(), oracle.duration_s());
    if (dc - do_).abs() > 1e-9 {
        return Err(Error::HorizonMismatch { left_s: dc, right_s: do_ });
    }
    Ok(100.0 * oracle.average_power_w() / controller.average_power_w())
}
