//! Receding-horizon valve optimization and the conservative compressor rule.
//!
//! Each period the controller minimizes the integrated squared overshoot of
//! the case-air temperatures above their upper bounds, predicted with the
//! affine model over one period. The outer search finds the smallest number
//! of open valves whose optimal overshoot stays below a threshold Δ. Two
//! approximate solvers are provided: a single-pass sort of first-order
//! marginal gains (computed with one forward and one backward adjoint pass),
//! and a greedy maximizer of the value function, which is monotone submodular.
//! Compressors are then chosen to balance the refrigerant the open valves
//! will inject.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linmodel::{AffineWork, LinearModel};
use crate::params::{PlantParams, Topology};
use crate::plant::{ControlInput, PlantState};

/// Air-temperature samples of one predicted trajectory, sample-major.
#[derive(Debug, Clone)]
pub(crate) struct AirSamples {
    n: usize,
    data: Vec<f64>,
}

impl AirSamples {
    fn at(&self, sample: usize, case: usize) -> f64 {
        self.data[sample * self.n + case]
    }

    fn add_in_place(&mut self, other: &AirSamples) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// One period's valve optimization problem over the affine prediction model.
#[derive(Debug, Clone)]
pub struct InnerProblem {
    pub model: Arc<LinearModel>,
    /// Measured state (T_food, T_air) at the period start.
    pub x0: DVector<f64>,
    /// Prediction horizon in seconds; one control period.
    pub horizon_s: f64,
    /// Number of prediction samples over the horizon (>= 2).
    pub n_samples: usize,
    /// Per-case upper temperature bounds [°C].
    pub t_max: Vec<f64>,
    /// Outer-problem overshoot threshold Δ [°C²·s].
    pub delta: f64,
    /// Hard ceiling on the number of open valves for the bilevel solvers.
    pub budget: usize,
    nominal_air: AirSamples,
    j0: f64,
}

impl InnerProblem {
    pub fn new(
        model: Arc<LinearModel>,
        x0: DVector<f64>,
        horizon_s: f64,
        n_samples: usize,
        t_max: Vec<f64>,
        delta: f64,
        budget: usize,
    ) -> Result<Self> {
        let n = model.n();
        let mut violations = Vec::new();
        if n_samples < 2 {
            violations.push(format!("prediction_samples must be at least 2, got {n_samples}"));
        }
        if horizon_s.is_nan() || horizon_s <= 0.0 {
            violations.push(format!("horizon must be positive, got {horizon_s}"));
        }
        if t_max.len() != n {
            violations.push(format!("t_max must have {n} entries, got {}", t_max.len()));
        }
        if x0.len() != model.state_dim() {
            violations.push(format!(
                "measured state must have {} entries, got {}",
                model.state_dim(),
                x0.len()
            ));
        }
        if delta.is_nan() || delta < 0.0 {
            violations.push(format!("delta must be nonnegative, got {delta}"));
        }
        if budget > n {
            violations.push(format!("budget {budget} exceeds the number of valves {n}"));
        }
        if !violations.is_empty() {
            return Err(Error::config(violations));
        }
        let mut problem = InnerProblem {
            model,
            x0,
            horizon_s,
            n_samples,
            t_max,
            delta,
            budget,
            nominal_air: AirSamples { n, data: Vec::new() },
            j0: 0.0,
        };
        problem.nominal_air = problem.simulate_air(&vec![0.0; n]);
        problem.j0 = problem.eval_air(&problem.nominal_air, None);
        Ok(problem)
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    /// Overshoot of the all-closed prediction, J(0).
    pub fn j_closed(&self) -> f64 {
        self.j0
    }

    fn step_h(&self) -> f64 {
        self.horizon_s / (self.n_samples - 1) as f64
    }

    /// Trapezoid weight of sample `j` (already includes the step size).
    fn weight(&self, j: usize) -> f64 {
        let h = self.step_h();
        if j == 0 || j == self.n_samples - 1 {
            0.5 * h
        } else {
            h
        }
    }

    /// Simulates the model under a constant relaxed valve vector, recording
    /// the air rows at each sample.
    fn simulate_air(&self, alpha: &[f64]) -> AirSamples {
        let n = self.n();
        let w = self.model.forcing(alpha);
        self.record_air(self.x0.clone(), w, n)
    }

    /// Response of the air temperatures to opening valve `v` alone: the
    /// deviation trajectory from zero initial state forced by column v of B.
    fn basis_air(&self, v: usize) -> AirSamples {
        let n = self.n();
        let w = DVector::from(self.model.b.column(v).clone_owned());
        self.record_air(DVector::zeros(self.model.state_dim()), w, n)
    }

    fn record_air(&self, mut x: DVector<f64>, w: DVector<f64>, n: usize) -> AirSamples {
        let h = self.step_h();
        let mut work = AffineWork::new(self.model.state_dim());
        let mut data = Vec::with_capacity(self.n_samples * n);
        data.extend((0..n).map(|i| x[n + i]));
        for _ in 1..self.n_samples {
            self.model.step_affine(&mut x, &w, h, &mut work);
            data.extend((0..n).map(|i| x[n + i]));
        }
        AirSamples { n, data }
    }

    /// Trapezoid integral of the squared overshoot for `air`, optionally
    /// shifted by a deviation trajectory.
    fn eval_air(&self, air: &AirSamples, shift: Option<&AirSamples>) -> f64 {
        let n = self.n();
        let mut j = 0.0;
        for s in 0..self.n_samples {
            let w = self.weight(s);
            let mut g = 0.0;
            for i in 0..n {
                let mut t = air.at(s, i);
                if let Some(d) = shift {
                    t += d.at(s, i);
                }
                let over = t - self.t_max[i];
                if over > 0.0 {
                    g += over * over;
                }
            }
            j += w * g;
        }
        j
    }
}

/// Converts a binary valve pattern to relaxed levels.
pub fn levels(open: &[bool]) -> Vec<f64> {
    open.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}

/// Integrated squared overshoot J(α) of the prediction under constant
/// (possibly relaxed) valve levels.
pub fn inner_objective(problem: &InnerProblem, alpha: &[f64]) -> f64 {
    assert_eq!(alpha.len(), problem.n());
    if alpha.iter().all(|&a| a == 0.0) {
        return problem.j0;
    }
    let air = problem.simulate_air(alpha);
    problem.eval_air(&air, None)
}

/// Value of a valve pattern: the overshoot reduction V(α) = J(0) − J(α).
pub fn value(problem: &InnerProblem, alpha: &[f64]) -> f64 {
    problem.j0 - inner_objective(problem, alpha)
}

/// First-order marginal gains [DV(0)]_i of opening each valve, computed with
/// one forward simulation of the closed-valve prediction and one backward
/// adjoint sweep. The result is the exact gradient of the discretized value
/// function at α = 0.
pub fn marginal_gains_adjoint(problem: &InnerProblem) -> Result<Vec<f64>> {
    let n = problem.n();
    let dim = problem.model.state_dim();
    let h = problem.step_h();
    let mut work = AffineWork::new(dim);
    let mut lambda = DVector::zeros(dim);
    let mut total = DVector::zeros(dim);
    let mut grad = DVector::zeros(dim);
    for j in (1..problem.n_samples).rev() {
        problem.model.apply_phi_transpose(&mut lambda, h, &mut work);
        grad.fill(0.0);
        for i in 0..n {
            let over = problem.nominal_air.at(j, i) - problem.t_max[i];
            if over > 0.0 {
                grad[n + i] = 2.0 * over;
            }
        }
        lambda.axpy(problem.weight(j), &grad, 1.0);
        total += &lambda;
    }
    let psi_total = problem.model.apply_psi_transpose(&total, h, &mut work);
    let mut gains = Vec::with_capacity(n);
    for v in 0..n {
        let dj_dv = problem.model.b.column(v).dot(&psi_total);
        gains.push(-dj_dv);
    }
    if gains.iter().any(|g| !g.is_finite()) {
        return Err(Error::Integration { time_s: 0.0, variable: "marginal gains".into() });
    }
    Ok(gains)
}

/// Finite-difference scheme for the validation gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdScheme {
    /// (V(ε e_i) − V(0)) / ε
    Forward,
    /// (V(ε e_i) − V(−ε e_i)) / 2ε
    Central,
}

/// Finite-difference marginal gains, the independent check on the adjoint.
pub fn marginal_gains_fd(problem: &InnerProblem, eps: f64, scheme: FdScheme) -> Result<Vec<f64>> {
    assert!(eps > 0.0, "relaxation step must be positive");
    let n = problem.n();
    let mut gains = Vec::with_capacity(n);
    let mut alpha = vec![0.0; n];
    for i in 0..n {
        alpha[i] = eps;
        let plus = value(problem, &alpha);
        let g = match scheme {
            FdScheme::Forward => plus / eps,
            FdScheme::Central => {
                alpha[i] = -eps;
                let minus = value(problem, &alpha);
                (plus - minus) / (2.0 * eps)
            }
        };
        alpha[i] = 0.0;
        gains.push(g);
    }
    Ok(gains)
}

/// Result of a valve optimization.
#[derive(Debug, Clone)]
pub struct ValveSolution {
    /// Valve pattern α.
    pub open: Vec<bool>,
    /// Achieved overshoot J(α).
    pub objective: f64,
    /// Achieved value V(α) = J(0) − J(α).
    pub value: f64,
    /// Number of open valves.
    pub opened: usize,
    /// A-posteriori suboptimality certificate (linear variant only).
    pub rho: Option<f64>,
    /// False when the bilevel threshold could not be met with the available
    /// positive-gain valves or budget; the solution is then best effort.
    pub feasible: bool,
}

impl ValveSolution {
    fn empty(problem: &InnerProblem) -> Self {
        ValveSolution {
            open: vec![false; problem.n()],
            objective: problem.j0,
            value: 0.0,
            opened: 0,
            rho: None,
            feasible: true,
        }
    }
}

/// Descending-gain order with ties broken toward the lowest case index.
fn sort_map(gains: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..gains.len()).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    order
}

/// Single-pass solver of the first-order surrogate under a cardinality
/// budget: open the K highest positive marginal gains.
pub fn solve_inner_linear(problem: &InnerProblem, k: usize) -> Result<ValveSolution> {
    assert!(k <= problem.n(), "budget exceeds valve count");
    let gains = marginal_gains_adjoint(problem)?;
    let order = sort_map(&gains);
    let mut sol = ValveSolution::empty(problem);
    let mut cur = problem.nominal_air.clone();
    let mut gain_sum = 0.0;
    for &v in &order {
        if sol.opened >= k || gains[v] <= 0.0 {
            break;
        }
        sol.open[v] = true;
        sol.opened += 1;
        gain_sum += gains[v];
        cur.add_in_place(&problem.basis_air(v));
    }
    sol.objective = problem.eval_air(&cur, None);
    sol.value = problem.j0 - sol.objective;
    sol.rho = if gain_sum > 0.0 { Some(sol.value / gain_sum) } else { None };
    Ok(sol)
}

/// Greedy maximizer of the value function under a cardinality budget.
pub fn solve_inner_greedy(problem: &InnerProblem, k: usize) -> Result<ValveSolution> {
    assert!(k <= problem.n(), "budget exceeds valve count");
    let mut sol = greedy_augment(problem, k, f64::NEG_INFINITY)?;
    sol.feasible = true;
    sol.rho = None;
    Ok(sol)
}

/// Core greedy loop: add best valves until `limit` valves are open or the
/// objective reaches `stop_at` or no candidate strictly improves.
fn greedy_augment(problem: &InnerProblem, limit: usize, stop_at: f64) -> Result<ValveSolution> {
    let n = problem.n();
    let basis: Vec<AirSamples> = (0..n).map(|v| problem.basis_air(v)).collect();
    let mut sol = ValveSolution::empty(problem);
    let mut cur = problem.nominal_air.clone();
    let mut j_cur = problem.j0;
    while sol.opened < limit && j_cur > stop_at {
        let mut best: Option<(usize, f64)> = None;
        for a in 0..n {
            if sol.open[a] {
                continue;
            }
            let j_a = problem.eval_air(&cur, Some(&basis[a]));
            if best.is_none_or(|(_, jb)| j_a < jb) {
                best = Some((a, j_a));
            }
        }
        match best {
            Some((a, j_a)) if j_a < j_cur => {
                sol.open[a] = true;
                sol.opened += 1;
                cur.add_in_place(&basis[a]);
                j_cur = j_a;
            }
            _ => break,
        }
    }
    sol.objective = j_cur;
    sol.value = problem.j0 - j_cur;
    Ok(sol)
}

/// Bilevel solver, linear surrogate: opens valves in descending-gain order
/// until the predicted overshoot drops to the threshold Δ, the positive gains
/// run out, or the budget is hit.
pub fn solve_bilevel_linear(problem: &InnerProblem) -> Result<ValveSolution> {
    let cap = problem.budget;
    if problem.j0 <= problem.delta {
        return Ok(ValveSolution::empty(problem));
    }
    let gains = marginal_gains_adjoint(problem)?;
    let order = sort_map(&gains);
    let mut sol = ValveSolution::empty(problem);
    let mut cur = problem.nominal_air.clone();
    let mut j_cur = problem.j0;
    let mut gain_sum = 0.0;
    for &v in &order {
        if j_cur <= problem.delta || sol.opened >= cap || gains[v] <= 0.0 {
            break;
        }
        sol.open[v] = true;
        sol.opened += 1;
        gain_sum += gains[v];
        cur.add_in_place(&problem.basis_air(v));
        j_cur = problem.eval_air(&cur, None);
    }
    sol.objective = j_cur;
    sol.value = problem.j0 - j_cur;
    sol.rho = if gain_sum > 0.0 { Some(sol.value / gain_sum) } else { None };
    sol.feasible = j_cur <= problem.delta;
    Ok(sol)
}

/// Bilevel solver, greedy variant: augments the valve set greedily while the
/// predicted overshoot exceeds the threshold Δ.
pub fn solve_bilevel_greedy(problem: &InnerProblem) -> Result<ValveSolution> {
    let mut sol = greedy_augment(problem, problem.budget, problem.delta)?;
    sol.feasible = sol.objective <= problem.delta;
    Ok(sol)
}

/// Compressor action balancing the refrigerant injected by `n_open` valves:
/// ON count = N_open·m_ref / (ρ_suc·k_c·Δt), rounded down when the pressure
/// sits below its reference and up otherwise, clamped to the rack size.
pub fn conservative_compressor_action(
    p_suc: f64,
    n_open: usize,
    params: &PlantParams,
) -> Result<Vec<bool>> {
    let rho = params.refrigerant.suction_density(p_suc)?;
    let required = n_open as f64 * params.max_refrigerant_charge_kg
        / (rho * params.compressor_flow_factor() * params.control_period_s);
    let count = if p_suc < params.pressure_ref_bar {
        required.floor()
    } else {
        required.ceil()
    };
    let n_on = (count.max(0.0) as usize).min(params.n_comp);
    Ok((0..params.n_comp).map(|i| i < n_on).collect())
}

/// Solver selection for the receding-horizon controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverVariant {
    Linear,
    Greedy,
}

/// Per-period solver diagnostics, logged as `time_s,K,J,V,rho`.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub time_s: f64,
    pub k: usize,
    pub objective: f64,
    pub value: f64,
    pub rho: Option<f64>,
    pub feasible: bool,
    pub cap: usize,
}

/// Writes the solver log CSV (`time_s,K,J,V,rho`).
pub fn write_solver_log<W: std::io::Write>(rows: &[StepDiagnostics], mut out: W) -> Result<()> {
    writeln!(out, "time_s,K,J,V,rho")?;
    for d in rows {
        let rho = d.rho.map(|r| format!("{r}")).unwrap_or_default();
        writeln!(out, "{},{},{},{},{}", d.time_s, d.k, d.objective, d.value, rho)?;
    }
    Ok(())
}

/// The receding-horizon optimizing controller: bilevel valve selection plus
/// the conservative compressor rule, recomputed once per control period.
#[derive(Debug, Clone)]
pub struct OptController {
    model: Arc<LinearModel>,
    pub variant: SolverVariant,
    pub delta: f64,
    pub n_samples: usize,
    valve_cap: usize,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl OptController {
    pub fn new(
        params: &PlantParams,
        topology: &Topology,
        variant: SolverVariant,
        delta: f64,
        n_samples: usize,
    ) -> Result<Self> {
        let model = Arc::new(LinearModel::build(params, topology, params.pressure_ref_bar)?);
        Ok(OptController {
            model,
            variant,
            delta,
            n_samples,
            valve_cap: params.n,
            diagnostics: Vec::new(),
        })
    }

    pub fn model(&self) -> &Arc<LinearModel> {
        &self.model
    }

    /// Limits the number of valves the bilevel search may open this period.
    pub fn set_valve_cap(&mut self, cap: usize) {
        self.valve_cap = cap.min(self.model.n());
    }

    pub fn valve_cap(&self) -> usize {
        self.valve_cap
    }

    /// Builds the period's inner problem from a measured state.
    pub fn problem_from_measurement(
        &self,
        measured: &PlantState,
        params: &PlantParams,
    ) -> Result<InnerProblem> {
        InnerProblem::new(
            Arc::clone(&self.model),
            self.model.state_from_plant(measured),
            params.control_period_s,
            self.n_samples,
            params.t_max_c.clone(),
            self.delta,
            self.valve_cap,
        )
    }

    /// One control decision: solve the bilevel problem and derive the
    /// compressor action from the number of valves opened. Infeasible solves
    /// still emit their best-effort input.
    pub fn decide(
        &mut self,
        time_s: f64,
        measured: &PlantState,
        params: &PlantParams,
    ) -> Result<ControlInput> {
        let problem = self.problem_from_measurement(measured, params)?;
        let sol = match self.variant {
            SolverVariant::Linear => solve_bilevel_linear(&problem)?,
            SolverVariant::Greedy => solve_bilevel_greedy(&problem)?,
        };
        let compressors = conservative_compressor_action(measured.p_suc, sol.opened, params)?;
        self.diagnostics.push(StepDiagnostics {
            time_s,
            k: sol.opened,
            objective: sol.objective,
            value: sol.value,
            rho: sol.rho,
            feasible: sol.feasible,
            cap: self.valve_cap,
        });
        Ok(ControlInput { valves: sol.open, compressors })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::default_params;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn default_problem(t_food: f64, x_air: &[f64]) -> InnerProblem {
        let (p, topo) = default_params();
        let model = Arc::new(LinearModel::build(&p, &topo, 1.4).unwrap());
        let mut x0 = DVector::zeros(2 * p.n);
        for i in 0..p.n {
            x0[i] = t_food;
            x0[p.n + i] = x_air[i];
        }
        InnerProblem::new(model, x0, 60.0, 61, p.t_max_c.clone(), 0.5, p.n).unwrap()
    }

    fn random_problem(rng: &mut ChaCha8Rng) -> InnerProblem {
        let (mut p, topo) = default_params();
        for i in 0..p.n {
            p.food_mass_kg[i] *= rng.gen_range(0.8..1.2);
        }
        let model = Arc::new(LinearModel::build(&p, &topo, 1.4).unwrap());
        let x0 = DVector::from_fn(2 * p.n, |i, _| {
            if i < p.n {
                rng.gen_range(2.0..6.0)
            } else {
                rng.gen_range(3.0..6.5)
            }
        });
        InnerProblem::new(model, x0, 60.0, 61, p.t_max_c.clone(), 0.5, p.n).unwrap()
    }

    #[test]
    fn problem_construction_reports_every_violation() {
        let (p, topo) = default_params();
        let model = Arc::new(LinearModel::build(&p, &topo, 1.4).unwrap());
        let err = InnerProblem::new(
            Arc::clone(&model),
            DVector::zeros(3), // wrong state length
            -1.0,              // bad horizon
            1,                 // too few samples
            vec![5.0; 4],      // wrong bound count
            -0.5,              // negative threshold
            99,                // budget above the valve count
        )
        .unwrap_err();
        match err {
            crate::error::Error::Config { violations } => {
                assert!(violations.len() >= 5, "got {violations:?}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn objective_is_zero_below_the_band() {
        let problem = default_problem(0.5, &[0.5; 10]);
        assert_eq!(problem.j_closed(), 0.0);
        assert_eq!(inner_objective(&problem, &[1.0; 10]), 0.0);
    }

    #[test]
    fn forced_constant_violation_integrates_exactly() {
        // Zero dynamics hold the state constant one degree above the bound:
        // J = n * horizon.
        let n = 3;
        let model = Arc::new(LinearModel::from_parts(
            DMatrix::zeros(2 * n, 2 * n),
            DMatrix::zeros(2 * n, n),
            DVector::zeros(2 * n),
            -18.0,
        ));
        let mut x0 = DVector::zeros(2 * n);
        for i in 0..n {
            x0[n + i] = 6.0;
        }
        let problem = InnerProblem::new(model, x0, 60.0, 61, vec![5.0; n], 0.0, n).unwrap();
        assert_relative_eq!(problem.j_closed(), 60.0 * n as f64, max_relative = 1e-12);
    }

    #[test]
    fn objective_is_nonincreasing_in_the_valve_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let problem = random_problem(&mut rng);
            let beta: Vec<f64> =
                (0..problem.n()).map(|_| if rng.gen_bool(0.6) { 1.0 } else { 0.0 }).collect();
            let alpha: Vec<f64> =
                beta.iter().map(|&b| if b == 1.0 && rng.gen_bool(0.5) { 0.0 } else { b }).collect();
            assert!(
                inner_objective(&problem, &beta) <= inner_objective(&problem, &alpha) + 1e-9
            );
        }
    }

    #[test]
    fn value_is_normalized_and_symmetric() {
        let (p, _) = default_params();
        // Two identical isolated cases: V({1}) = V({2}).
        let mut cfg = crate::params::Config::default();
        cfg.plant.n_cases = 2;
        cfg.topology.kind = crate::params::TopologyKind::Isolated;
        let (p2, topo2) = cfg.build().unwrap();
        let model = Arc::new(LinearModel::build(&p2, &topo2, 1.4).unwrap());
        let x0 = DVector::from_vec(vec![4.0, 4.0, 6.0, 6.0]);
        let problem = InnerProblem::new(model, x0, 60.0, 61, vec![5.0, 5.0], 0.5, 2).unwrap();
        assert_eq!(value(&problem, &[0.0, 0.0]), 0.0);
        assert_relative_eq!(
            value(&problem, &[1.0, 0.0]),
            value(&problem, &[0.0, 1.0]),
            max_relative = 1e-12
        );
        assert!(value(&problem, &[1.0, 1.0]) >= 0.0);
        drop(p);
    }

    #[test]
    fn adjoint_gains_vanish_without_violation() {
        let problem = default_problem(0.5, &[0.5; 10]);
        let gains = marginal_gains_adjoint(&problem).unwrap();
        assert!(gains.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn adjoint_gains_are_nonnegative_and_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let problem = random_problem(&mut rng);
            let adj = marginal_gains_adjoint(&problem).unwrap();
            assert!(adj.iter().all(|&g| g >= -1e-12));
            let fd = marginal_gains_fd(&problem, 1e-4, FdScheme::Central).unwrap();
            let num: f64 = adj.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let den: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
            if den > 0.0 {
                assert!(num / den < 1e-4, "adjoint/FD relative error {}", num / den);
            }
        }
    }

    #[test]
    fn forward_fd_error_shrinks_linearly() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let problem = random_problem(&mut rng);
        let adj = marginal_gains_adjoint(&problem).unwrap();
        let e1: f64 = marginal_gains_fd(&problem, 1e-2, FdScheme::Forward)
            .unwrap()
            .iter()
            .zip(&adj)
            .map(|(a, b)| (a - b).abs())
            .sum();
        let e2: f64 = marginal_gains_fd(&problem, 5e-3, FdScheme::Forward)
            .unwrap()
            .iter()
            .zip(&adj)
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(e2 < e1, "halving eps should reduce the first-order error");
        assert!(e2 > e1 / 8.0, "forward differences should converge linearly, not faster");
    }

    #[test]
    fn linear_solver_budget_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let problem = random_problem(&mut rng);
        let s0 = solve_inner_linear(&problem, 0).unwrap();
        assert_eq!(s0.opened, 0);
        assert_eq!(s0.value, 0.0);
        assert!(s0.rho.is_none());
        // Without violations all gains vanish and the solver opens nothing.
        let calm = default_problem(0.5, &[0.5; 10]);
        let s = solve_inner_linear(&calm, 5).unwrap();
        assert_eq!(s.opened, 0);
        assert!(s.rho.is_none());
        // rho certificate stays within (0, 1].
        let sk = solve_inner_linear(&problem, 4).unwrap();
        if let Some(rho) = sk.rho {
            assert!(rho > 0.0 && rho <= 1.0 + 1e-12, "rho = {rho}");
        }
        assert!(sk.opened <= 4);
        assert_relative_eq!(sk.value, problem.j_closed() - sk.objective, epsilon = 1e-9);
    }

    #[test]
    fn greedy_first_pick_is_the_best_singleton() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let problem = random_problem(&mut rng);
            let g1 = solve_inner_greedy(&problem, 1).unwrap();
            let mut best = 0.0f64;
            for i in 0..problem.n() {
                let mut alpha = vec![0.0; problem.n()];
                alpha[i] = 1.0;
                best = best.max(value(&problem, &alpha));
            }
            assert_relative_eq!(g1.value, best, epsilon = 1e-9);
        }
    }

    #[test]
    fn greedy_with_full_budget_exhausts_strict_improvements() {
        let problem = default_problem(4.0, &[6.5; 10]);
        let g = solve_inner_greedy(&problem, 10).unwrap();
        let full = value(&problem, &[1.0; 10]);
        assert_relative_eq!(g.value, full, epsilon = 1e-9);
        assert_eq!(g.opened, 10);
    }

    #[test]
    fn bilevel_threshold_already_met_opens_nothing() {
        let mut problem = default_problem(4.0, &[6.0; 10]);
        problem.delta = problem.j_closed() + 1.0;
        let lin = solve_bilevel_linear(&problem).unwrap();
        let gre = solve_bilevel_greedy(&problem).unwrap();
        assert_eq!(lin.opened, 0);
        assert_eq!(gre.opened, 0);
        assert!(lin.feasible && gre.feasible);
    }

    #[test]
    fn bilevel_linear_prefix_extends_as_threshold_tightens() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let base = random_problem(&mut rng);
        if base.j_closed() <= 0.0 {
            return;
        }
        let mut loose = base.clone();
        loose.delta = base.j_closed() * 0.5;
        let mut tight = base.clone();
        tight.delta = base.j_closed() * 0.05;
        let a = solve_bilevel_linear(&loose).unwrap();
        let b = solve_bilevel_linear(&tight).unwrap();
        assert!(b.opened >= a.opened);
        for i in 0..base.n() {
            if a.open[i] {
                assert!(b.open[i], "tighter threshold must extend the looser prefix");
            }
        }
    }

    #[test]
    fn bilevel_flags_unreachable_threshold() {
        // Budget zero with a violating state can never meet a tiny threshold.
        let mut problem = default_problem(4.0, &[6.5; 10]);
        problem.budget = 0;
        problem.delta = 0.0;
        let lin = solve_bilevel_linear(&problem).unwrap();
        assert!(!lin.feasible);
        assert_eq!(lin.opened, 0);
        let gre = solve_bilevel_greedy(&problem).unwrap();
        assert!(!gre.feasible);
    }

    #[test]
    fn conservative_rule_reference_points() {
        let (p, _) = default_params();
        // Nothing open: no compressors either way.
        assert_eq!(
            conservative_compressor_action(1.3, 0, &p).unwrap().iter().filter(|&&b| b).count(),
            0
        );
        // Six valves at the reference pressure: required ≈ 0.904.
        let below = conservative_compressor_action(1.39, 6, &p).unwrap();
        let at = conservative_compressor_action(1.4, 6, &p).unwrap();
        assert_eq!(below.iter().filter(|&&b| b).count(), 0);
        assert_eq!(at.iter().filter(|&&b| b).count(), 1);
        // Ten valves slightly above reference: required ≈ 1.46, ceil to 2.
        let high = conservative_compressor_action(1.45, 10, &p).unwrap();
        assert_eq!(high.iter().filter(|&&b| b).count(), 2);
        // Clamped to the rack size.
        let mut tiny = p.clone();
        tiny.n_comp = 1;
        let clamped = conservative_compressor_action(1.5, 10, &tiny).unwrap();
        assert_eq!(clamped.iter().filter(|&&b| b).count(), 1);
    }

    #[test]
    fn controller_decisions_are_deterministic() {
        let (p, topo) = default_params();
        let mut a = OptController::new(&p, &topo, SolverVariant::Linear, 0.5, 61).unwrap();
        let mut b = OptController::new(&p, &topo, SolverVariant::Linear, 0.5, 61).unwrap();
        let mut s = PlantState::uniform(p.n, 4.0, 1.42);
        s.t_air[4] = 6.1;
        s.t_air[5] = 5.7;
        let ua = a.decide(0.0, &s, &p).unwrap();
        let ub = b.decide(0.0, &s, &p).unwrap();
        assert_eq!(ua, ub);
        // A calm plant opens nothing and runs no compressors.
        let calm = PlantState::uniform(p.n, 0.5, 1.4);
        let mut c = OptController::new(&p, &topo, SolverVariant::Greedy, 0.5, 61).unwrap();
        let uc = c.decide(0.0, &calm, &p).unwrap();
        assert_eq!(uc.open_valves(), 0);
        assert_eq!(uc.running_compressors(), 0);
    }

    #[test]
    fn valve_cap_limits_the_bilevel_search() {
        let (p, topo) = default_params();
        let mut ctl = OptController::new(&p, &topo, SolverVariant::Linear, 0.0, 61).unwrap();
        ctl.set_valve_cap(3);
        let s = PlantState::uniform(p.n, 6.5, 1.4);
        let u = ctl.decide(0.0, &s, &p).unwrap();
        assert!(u.open_valves() <= 3);
        let diag = ctl.diagnostics.last().unwrap();
        assert_eq!(diag.cap, 3);
        assert!(!diag.feasible);
    }
}
