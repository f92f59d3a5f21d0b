//! Executable property suites for the optimizer's structural guarantees.
//!
//! Each suite returns [`PropertyReport`]s; a report with no violations passed.
//! The same suites back the `verify` CLI subcommand and the acceptance tests.

use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::linmodel::LinearModel;
use crate::opt::{
    self, marginal_gains_adjoint, marginal_gains_fd, solve_inner_greedy, solve_inner_linear,
    FdScheme, InnerProblem,
};
use crate::oracle::{self, PropertyReport};
use crate::params::Config;

/// Tolerance used by the structural inequalities.
pub const TOL: f64 = 1e-9;

/// A random one-period problem: nominal parameters with ±20% food-mass
/// perturbation and a measured state scattered around the band.
pub fn random_instance(n: usize, seed: u64) -> Result<InnerProblem> {
    random_instance_with(n, seed, false)
}

/// As [`random_instance`]; with `require_active` the state is redrawn until
/// the closed-valve prediction actually violates the bounds.
pub fn random_instance_with(n: usize, seed: u64, require_active: bool) -> Result<InnerProblem> {
    let mut cfg = Config::default();
    cfg.plant.n_cases = n;
    let (base, topo) = cfg.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = base.clone();
    for i in 0..n {
        params.food_mass_kg[i] = base.food_mass_kg[i] * rng.gen_range(0.8..1.2);
    }
    let model = Arc::new(LinearModel::build(&params, &topo, params.pressure_ref_bar)?);
    loop {
        let x0 = DVector::from_fn(2 * n, |i, _| {
            if i < n {
                rng.gen_range(2.0..6.0)
            } else {
                rng.gen_range(3.0..6.5)
            }
        });
        let problem = InnerProblem::new(
            Arc::clone(&model),
            x0,
            params.control_period_s,
            61,
            params.t_max_c.clone(),
            0.5,
            n,
        )?;
        if !require_active || problem.j_closed() > 1e-6 {
            return Ok(problem);
        }
    }
}

/// Values of every valve subset, indexed by bitmask.
fn all_subset_values(problem: &InnerProblem) -> Vec<f64> {
    let n = problem.n();
    (0..1u32 << n)
        .map(|mask| {
            let alpha: Vec<f64> =
                (0..n).map(|i| if mask & (1 << i) != 0 { 1.0 } else { 0.0 }).collect();
            opt::value(problem, &alpha)
        })
        .collect()
}

/// Exhaustive optimum per budget: best value over all subsets of size ≤ K.
fn optimum_per_budget(values: &[f64], n: usize) -> Vec<f64> {
    let mut best = vec![0.0f64; n + 1];
    for (mask, &v) in values.iter().enumerate() {
        let k = (mask as u32).count_ones() as usize;
        if v > best[k] {
            best[k] = v;
        }
    }
    for k in 1..=n {
        best[k] = best[k].max(best[k - 1]);
    }
    best
}

/// Submodularity and monotonicity of the value function: every (X ⊆ Y, a)
/// triple at n = 5 across `states` random measured states.
pub fn submodularity_suite(states: usize, seed: u64) -> Result<PropertyReport> {
    let mut merged = PropertyReport::new("submodularity_and_monotonicity", seed);
    for s in 0..states {
        let problem = random_instance(5, seed.wrapping_add(s as u64))?;
        let report = oracle::check_submodularity(&problem, seed.wrapping_add(s as u64))?;
        merged.instances_tested += report.instances_tested;
        for v in report.violations {
            merged.record(format!("state {s}: {}", v.witness), v.margin);
        }
    }
    Ok(merged)
}

/// Input monotonicity of the plant temperatures over paired simulations.
pub fn monotone_dynamics_suite(trials: usize, seed: u64) -> Result<PropertyReport> {
    let (params, topo) = crate::params::default_params();
    oracle::check_monotone_dynamics(&params, &topo, trials, seed)
}

/// A-posteriori bound of the linear surrogate: ρ·V(α_opt) ≤ V(α★) on random
/// instances at every budget, with α_opt from exhaustive enumeration.
pub fn linear_bound_suite(instances: usize, n: usize, seed: u64) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("linear_surrogate_posteriori_bound", seed);
    for s in 0..instances {
        let problem = random_instance(n, seed.wrapping_add(1000 + s as u64))?;
        let values = all_subset_values(&problem);
        let optimum = optimum_per_budget(&values, n);
        for k in 0..=n {
            report.instances_tested += 1;
            let sol = solve_inner_linear(&problem, k)?;
            match sol.rho {
                Some(rho) => {
                    if rho * optimum[k] > sol.value + TOL {
                        report.record(
                            format!("instance {s}, K={k}: rho*V_opt > V_star"),
                            rho * optimum[k] - sol.value,
                        );
                    }
                }
                None => {
                    // Degenerate certificate: zero marginal gains imply the
                    // optimum itself is worthless.
                    if optimum[k] > TOL {
                        report.record(
                            format!("instance {s}, K={k}: zero gains but V_opt > 0"),
                            optimum[k],
                        );
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Greedy (1 − 1/e) guarantee against the exhaustive optimum, plus the
/// empirical value ratio.
pub fn greedy_bound_suite(instances: usize, n: usize, seed: u64) -> Result<PropertyReport> {
    let bound = 1.0 - 1.0 / std::f64::consts::E;
    let mut report = PropertyReport::new("greedy_value_guarantee", seed);
    let mut min_ratio = f64::INFINITY;
    for s in 0..instances {
        let problem = random_instance(n, seed.wrapping_add(1000 + s as u64))?;
        let values = all_subset_values(&problem);
        let optimum = optimum_per_budget(&values, n);
        for k in 1..=n {
            report.instances_tested += 1;
            let sol = solve_inner_greedy(&problem, k)?;
            if sol.value < bound * optimum[k] - TOL {
                report.record(
                    format!("instance {s}, K={k}: greedy below (1-1/e) bound"),
                    bound * optimum[k] - sol.value,
                );
            }
            if optimum[k] > TOL {
                min_ratio = min_ratio.min(sol.value / optimum[k]);
            }
        }
    }
    if min_ratio.is_finite() {
        report.notes.push(format!("worst empirical value ratio {min_ratio:.4}"));
    }
    Ok(report)
}

/// Adjoint gains against central finite differences, relative-norm 1e-4.
pub fn gradient_suite(instances: usize, seed: u64) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("adjoint_vs_finite_difference", seed);
    let mut worst = 0.0f64;
    for s in 0..instances {
        let problem = random_instance_with(10, seed.wrapping_add(2000 + s as u64), true)?;
        report.instances_tested += 1;
        let adj = marginal_gains_adjoint(&problem)?;
        let fd = marginal_gains_fd(&problem, 1e-4, FdScheme::Central)?;
        let num = adj
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
        let rel = if den > 0.0 { num / den } else { num };
        worst = worst.max(rel);
        if rel > 1e-4 {
            report.record(format!("instance {s}: relative error {rel:.2e}"), rel);
        }
        // Nonnegative gains: the model cools, opening a valve cannot hurt.
        if let Some(g) = adj.iter().find(|&&g| g < -TOL) {
            report.record(format!("instance {s}: negative gain {g}"), -g);
        }
    }
    report.notes.push(format!("worst relative error {worst:.2e}"));
    Ok(report)
}

/// Sanity checks of the exhaustive oracle itself.
pub fn oracle_suite(seed: u64) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("oracle_consistency", seed);
    // Enumeration visits exactly sum of binomials.
    let problem6 = random_instance(6, seed)?;
    for k in 0..=6usize {
        report.instances_tested += 1;
        let (_, evaluated) = oracle::exhaustive_inner_with_stats(&problem6, k)?;
        let expected: usize = (0..=k)
            .map(|s| {
                let mut r = 1usize;
                for i in 0..s {
                    r = r * (6 - i) / (i + 1);
                }
                r
            })
            .sum();
        if evaluated != expected {
            report.record(format!("K={k}: visited {evaluated}, expected {expected}"), 0.0);
        }
    }
    // Bilevel heuristics never report a smaller budget than the true minimum,
    // and the exhaustive budget is monotone in the threshold.
    for s in 0..10u64 {
        let mut problem = random_instance(8, seed.wrapping_add(3000 + s))?;
        if problem.j_closed() <= 0.0 {
            continue;
        }
        problem.delta = 0.25 * problem.j_closed();
        report.instances_tested += 1;
        let ex = oracle::exhaustive_bilevel(&problem)?;
        let li = opt::solve_bilevel_linear(&problem)?;
        let gr = opt::solve_bilevel_greedy(&problem)?;
        if ex.feasible && li.opened < ex.opened {
            report.record(format!("instance {s}: linear K < exhaustive K"), 0.0);
        }
        if ex.feasible && gr.opened < ex.opened {
            report.record(format!("instance {s}: greedy K < exhaustive K"), 0.0);
        }
        let mut prev = usize::MAX;
        for frac in [0.05, 0.2, 0.5, 0.9] {
            problem.delta = frac * problem.j_closed();
            let sol = oracle::exhaustive_bilevel(&problem)?;
            if sol.opened > prev {
                report.record(
                    format!("instance {s}: K_opt increased as the threshold loosened"),
                    (sol.opened - prev) as f64,
                );
            }
            prev = sol.opened;
        }
    }
    Ok(report)
}

/// Suite selection for the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Theorems,
    Gradient,
    Oracle,
    All,
}

impl std::str::FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "theorems" => Ok(Suite::Theorems),
            "gradient" => Ok(Suite::Gradient),
            "oracle" => Ok(Suite::Oracle),
            "all" => Ok(Suite::All),
            other => Err(format!("unknown suite '{other}' (expected theorems|gradient|oracle|all)")),
        }
    }
}

/// Runs the selected suites with the acceptance sizes.
pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<PropertyReport>> {
    let mut reports = Vec::new();
    if matches!(suite, Suite::Theorems | Suite::All) {
        reports.push(submodularity_suite(20, seed)?);
        reports.push(monotone_dynamics_suite(100, seed)?);
        reports.push(linear_bound_suite(50, 8, seed)?);
        reports.push(greedy_bound_suite(50, 8, seed)?);
    }
    if matches!(suite, Suite::Gradient | Suite::All) {
        reports.push(gradient_suite(20, seed)?);
    }
    if matches!(suite, Suite::Oracle | Suite::All) {
        reports.push(oracle_suite(seed)?);
    }
    Ok(reports)
}
