//! Closed-loop experiment harness: controller comparisons, metrics, and the
//! real-time-pricing demand-response runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baseline::BaselineController;
use crate::error::{Error, Result};
use crate::opt::{self, OptController, SolverVariant, StepDiagnostics};
use crate::oracle;
use crate::params::{ControllerKind, PlantParams, Topology};
use crate::plant::{self, ControlInput, PlantState, SimOptions, Trajectory};

/// Plant integrator step \[s\].
pub const PLANT_STEP_S: f64 = 1.0;

/// Polling interval of the traditional hysteresis/PI controller \[s\]. Its laws
/// are continuous-time; the harness evaluates them at a supervisory rate a
/// few times per minute, well below the control period of the optimizing
/// controllers.
pub const BASELINE_DECISION_INTERVAL_S: f64 = 11.0;

/// Everything one closed-loop run needs beyond the plant parameters.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub duration_s: f64,
    pub controller: ControllerKind,
    /// Food-mass perturbation seed; equal seeds give identical plants.
    pub seed: u64,
    /// Outer-problem threshold Δ [°C²·s].
    pub delta: f64,
    /// Prediction samples per period.
    pub n_samples: usize,
    /// Electricity prices; enables cost accounting and, together with `dr`,
    /// the price-responsive valve cap.
    pub prices: Option<PriceSeries>,
    /// Demand-response policy; applied only when prices are present.
    pub dr: Option<DrPolicy>,
}

impl ScenarioConfig {
    /// Scenario settings from a parsed config file.
    pub fn from_config(cfg: &crate::params::Config) -> Self {
        ScenarioConfig {
            duration_s: cfg.scenario.duration_s,
            controller: cfg.scenario.controller,
            seed: cfg.scenario.seed,
            delta: cfg.optimizer.delta_c2s,
            n_samples: cfg.optimizer.prediction_samples,
            prices: None,
            dr: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if self.duration_s.is_nan() || self.duration_s <= 0.0 {
            v.push(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if let Some(dr) = &self.dr {
            if dr.valve_cap_fraction.is_nan()
                || dr.valve_cap_fraction <= 0.0
                || dr.valve_cap_fraction > 1.0
            {
                v.push(format!(
                    "valve_cap_fraction must lie in (0, 1], got {}",
                    dr.valve_cap_fraction
                ));
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::config(v))
        }
    }
}

/// Price-responsive valve budget policy.
#[derive(Debug, Clone, Copy)]
pub struct DrPolicy {
    pub price_threshold_usd_per_kwh: f64,
    pub valve_cap_fraction: f64,
}

/// Valve budget for the period: the capped fraction while the price strictly
/// exceeds the threshold, the full set otherwise.
pub fn dr_cap_policy(price_usd_per_kwh: f64, n: usize, policy: &DrPolicy) -> usize {
    if price_usd_per_kwh > policy.price_threshold_usd_per_kwh {
        (policy.valve_cap_fraction * n as f64).floor() as usize
    } else {
        n
    }
}

/// Step-wise constant electricity price series.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    /// (time \[s\], price [$/kWh]) with strictly increasing times.
    points: Vec<(f64, f64)>,
}

impl PriceSeries {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::PriceSeries("empty price series".into()));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::PriceSeries(format!(
                    "times must be strictly increasing, got {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some((t, p)) = points.iter().find(|(_, p)| p.is_nan() || *p < 0.0) {
            return Err(Error::PriceSeries(format!("negative price {p} at t = {t}")));
        }
        Ok(PriceSeries { points })
    }

    /// Price at time `t`. Each point starts a segment that lasts until the
    /// next point; the final price stays in force for all later times. Times
    /// before the first point take the first price and set the second return,
    /// marking that the series was extended backward.
    pub fn price_at(&self, t: f64) -> (f64, bool) {
        if t < self.points[0].0 {
            return (self.points[0].1, true);
        }
        let idx = self.points.partition_point(|(start, _)| *start <= t);
        (self.points[idx - 1].1, false)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Parses `time_s,price_usd_per_kwh` CSV.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        {
            let header = rdr
                .headers()
                .map_err(|e| Error::PriceSeries(format!("unreadable header: {e}")))?;
            let expected = ["time_s", "price_usd_per_kwh"];
            if header.len() != 2 || header.iter().zip(expected).any(|(a, b)| a != b) {
                return Err(Error::PriceRow {
                    line: 1,
                    reason: format!("header must be `time_s,price_usd_per_kwh`, got `{}`", header.iter().collect::<Vec<_>>().join(",")),
                });
            }
        }
        let mut points = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::PriceRow { line, reason: e.to_string() })?;
            if rec.len() != 2 {
                return Err(Error::PriceRow { line, reason: format!("expected 2 fields, got {}", rec.len()) });
            }
            let t: f64 = rec[0]
                .parse()
                .map_err(|_| Error::PriceRow { line, reason: format!("bad time `{}`", &rec[0]) })?;
            let p: f64 = rec[1]
                .parse()
                .map_err(|_| Error::PriceRow { line, reason: format!("bad price `{}`", &rec[1]) })?;
            points.push((t, p));
        }
        PriceSeries::new(points)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "time_s,price_usd_per_kwh")?;
        for (t, p) in &self.points {
            writeln!(out, "{t},{p}")?;
        }
        Ok(())
    }
}

/// Flat price at $0.04/kWh with two one-hour spikes to $0.25/kWh, shaped like
/// a spiky wholesale afternoon.
pub fn synthetic_spiky_prices() -> PriceSeries {
    PriceSeries::new(vec![
        (0.0, 0.04),
        (7_200.0, 0.25),
        (10_800.0, 0.04),
        (18_000.0, 0.25),
        (21_600.0, 0.04),
    ])
    .expect("static series is valid")
}

/// Per-case food masses drawn uniformly within ±20% of the nominal values.
pub fn perturb_food_mass(nominal: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    nominal.iter().map(|&m| m * rng.gen_range(0.8..1.2)).collect()
}

/// Headline quantities of one closed-loop run.
#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub average_power_kw: f64,
    /// Compressor bits changed across control-period boundaries, summed per
    /// compressor.
    pub switching_count: usize,
    /// Σ_i ∫ (T_air,i − T_i^max)₊ dt [°C·s].
    pub violation_integral_c_s: f64,
    /// Largest food temperature above its case's bound [°C]. Food is the
    /// slow state whose excursions the demand-response guarantee limits.
    pub max_food_excursion_c: f64,
    /// ∫ p(t)·price(t) dt [$]; zero when no price series was supplied.
    pub energy_cost_usd: f64,
}

/// Number of control-period boundaries at which compressor bits change,
/// summed per compressor.
pub fn count_switchings(traj: &Trajectory, period_s: f64) -> usize {
    let mut count = 0;
    let mut prev: Option<&ControlInput> = None;
    for k in 0..traj.inputs.len() {
        let t = traj.times[k];
        let on_boundary = (t / period_s - (t / period_s).round()).abs() < 1e-9;
        if !on_boundary {
            continue;
        }
        let cur = &traj.inputs[k];
        if let Some(p) = prev {
            count += p
                .compressors
                .iter()
                .zip(&cur.compressors)
                .filter(|(a, b)| a != b)
                .count();
        }
        prev = Some(cur);
    }
    count
}

/// Cost and energy of a trajectory under a price series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyCost {
    pub cost_usd: f64,
    pub energy_kwh: f64,
    /// True when the price series had to be extended to cover the horizon.
    pub extended: bool,
}

/// Integrates energy and its cost with step-wise constant prices.
pub fn energy_and_cost(traj: &Trajectory, prices: &PriceSeries) -> Result<EnergyCost> {
    let mut cost = 0.0;
    let mut energy_j = 0.0;
    let mut extended = false;
    for k in 0..traj.power_w.len() {
        let dt = traj.times[k + 1] - traj.times[k];
        let (price, ext) = prices.price_at(traj.times[k]);
        extended |= ext;
        energy_j += traj.power_w[k] * dt;
        cost += traj.power_w[k] * dt / 3.6e6 * price;
    }
    Ok(EnergyCost { cost_usd: cost, energy_kwh: energy_j / 3.6e6, extended })
}

/// Air-violation integral and the largest food excursion above the bounds.
fn violation_stats(traj: &Trajectory, params: &PlantParams) -> (f64, f64) {
    let mut integral = 0.0;
    let mut max_food = 0.0f64;
    let m = traj.times.len();
    if m < 2 {
        return (0.0, max_food);
    }
    for s in 0..m {
        let w = if s == 0 || s == m - 1 { 0.5 } else { 1.0 };
        let dt = if s + 1 < m { traj.times[s + 1] - traj.times[s] } else { traj.times[s] - traj.times[s - 1] };
        for i in 0..params.n {
            let over = traj.states[s].t_air[i] - params.t_max_c[i];
            if over > 0.0 {
                integral += w * dt * over;
            }
            max_food = max_food.max(traj.states[s].t_food[i] - params.t_max_c[i]);
        }
    }
    (integral, max_food)
}

/// One finished closed-loop run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub controller: ControllerKind,
    pub trajectory: Trajectory,
    pub metrics: Metrics,
    /// Per-period optimizer diagnostics; empty for the PI baseline.
    pub solver_log: Vec<StepDiagnostics>,
}

enum LoopController {
    Pi(BaselineController),
    Opt(OptController),
    /// Exhaustive bilevel solve each period; tractable only at small n.
    Oracle(OptController),
}

impl LoopController {
    fn build(kind: ControllerKind, params: &PlantParams, topology: &Topology, sc: &ScenarioConfig) -> Result<Self> {
        Ok(match kind {
            ControllerKind::Pi => LoopController::Pi(BaselineController::new(params.n)),
            ControllerKind::Linear => LoopController::Opt(OptController::new(
                params,
                topology,
                SolverVariant::Linear,
                sc.delta,
                sc.n_samples,
            )?),
            ControllerKind::Greedy => LoopController::Opt(OptController::new(
                params,
                topology,
                SolverVariant::Greedy,
                sc.delta,
                sc.n_samples,
            )?),
            ControllerKind::Oracle => LoopController::Oracle(OptController::new(
                params,
                topology,
                SolverVariant::Linear,
                sc.delta,
                sc.n_samples,
            )?),
        })
    }

    fn set_valve_cap(&mut self, cap: usize) {
        match self {
            LoopController::Pi(_) => {}
            LoopController::Opt(c) | LoopController::Oracle(c) => c.set_valve_cap(cap),
        }
    }

    /// Decision for the step starting at `t`; `None` holds the previous input.
    fn decide(
        &mut self,
        t: f64,
        on_period_boundary: bool,
        state: &PlantState,
        params: &PlantParams,
    ) -> Result<Option<ControlInput>> {
        match self {
            LoopController::Pi(ctl) => {
                let cadence = BASELINE_DECISION_INTERVAL_S;
                let on = (t / cadence - (t / cadence).round()).abs() < 1e-9;
                if on {
                    Ok(Some(ctl.decide(state, cadence, params)))
                } else {
                    Ok(None)
                }
            }
            LoopController::Opt(ctl) => {
                if on_period_boundary {
                    Ok(Some(ctl.decide(t, state, params)?))
                } else {
                    Ok(None)
                }
            }
            LoopController::Oracle(ctl) => {
                if !on_period_boundary {
                    return Ok(None);
                }
                let problem = ctl.problem_from_measurement(state, params)?;
                let sol = oracle::exhaustive_bilevel(&problem)?;
                let compressors =
                    opt::conservative_compressor_action(state.p_suc, sol.opened, params)?;
                ctl.diagnostics.push(StepDiagnostics {
                    time_s: t,
                    k: sol.opened,
                    objective: sol.objective,
                    value: sol.value,
                    rho: None,
                    feasible: sol.feasible,
                    cap: ctl.valve_cap(),
                });
                Ok(Some(ControlInput { valves: sol.open, compressors }))
            }
        }
    }

    fn into_log(self) -> Vec<StepDiagnostics> {
        match self {
            LoopController::Pi(_) => Vec::new(),
            LoopController::Opt(c) | LoopController::Oracle(c) => c.diagnostics,
        }
    }
}

/// Runs one closed loop: the selected controller against the perturbed plant.
/// Deterministic for a given configuration.
pub fn run_closed_loop(
    params: &PlantParams,
    topology: &Topology,
    sc: &ScenarioConfig,
) -> Result<RunResult> {
    sc.validate()?;
    let mut params = params.clone();
    params.food_mass_kg = perturb_food_mass(&params.food_mass_kg, sc.seed);
    params.validate()?;

    let mut controller = LoopController::build(sc.controller, &params, topology, sc)?;
    let h = PLANT_STEP_S;
    let total_steps = (sc.duration_s / h).round() as usize;
    let period = params.control_period_s;

    let mut state = PlantState::uniform(params.n, 3.0, params.pressure_ref_bar);
    let mut current = ControlInput::all_off(params.n, params.n_comp);
    let mut traj = Trajectory {
        times: Vec::with_capacity(total_steps + 1),
        states: Vec::with_capacity(total_steps + 1),
        inputs: Vec::with_capacity(total_steps),
        power_w: Vec::with_capacity(total_steps),
    };
    traj.times.push(0.0);
    traj.states.push(state.clone());

    for k in 0..total_steps {
        let t = k as f64 * h;
        let on_boundary = (t / period - (t / period).round()).abs() < 1e-9;
        if on_boundary {
            if let (Some(prices), Some(dr)) = (&sc.prices, &sc.dr) {
                let (price, _) = prices.price_at(t);
                controller.set_valve_cap(dr_cap_policy(price, params.n, dr));
            }
        }
        if let Some(input) = controller.decide(t, on_boundary, &state, &params)? {
            current = input;
        }
        let power = plant::total_power(&state, &current.compressors, &params)
            .map_err(|_| Error::Integration { time_s: t, variable: "P_suc".into() })?;
        state = plant::step(&state, &current, h, &params, topology, SimOptions::default())
            .map_err(|e| at_time(e, t))?;
        traj.inputs.push(current.clone());
        traj.power_w.push(power);
        traj.times.push((k + 1) as f64 * h);
        traj.states.push(state.clone());
    }

    let (violation_integral, max_excursion) = violation_stats(&traj, &params);
    let cost = match &sc.prices {
        Some(prices) => energy_and_cost(&traj, prices)?.cost_usd,
        None => 0.0,
    };
    let metrics = Metrics {
        average_power_kw: traj.average_power_w() / 1e3,
        switching_count: count_switchings(&traj, period),
        violation_integral_c_s: violation_integral,
        max_food_excursion_c: max_excursion,
        energy_cost_usd: cost,
    };
    Ok(RunResult {
        controller: sc.controller,
        trajectory: traj,
        metrics,
        solver_log: controller.into_log(),
    })
}

fn at_time(e: Error, t: f64) -> Error {
    match e {
        Error::Integration { variable, .. } => Error::Integration { time_s: t, variable },
        other => other,
    }
}

/// Side-by-side comparison of the baseline and both proposed controllers on
/// the same seeded plant.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub pi: Metrics,
    pub linear: Metrics,
    pub greedy: Metrics,
    pub linear_energy_saving_pct: f64,
    pub greedy_energy_saving_pct: f64,
    pub linear_switching_reduction_pct: f64,
    pub greedy_switching_reduction_pct: f64,
}

fn saving_pct(base: f64, new: f64) -> f64 {
    if base > 0.0 {
        100.0 * (base - new) / base
    } else {
        0.0
    }
}

/// Runs pi, linear, and greedy on the same plant and summarizes.
pub fn compare(
    params: &PlantParams,
    topology: &Topology,
    sc: &ScenarioConfig,
) -> Result<(Comparison, Vec<RunResult>)> {
    let mut runs = Vec::new();
    for kind in [ControllerKind::Pi, ControllerKind::Linear, ControllerKind::Greedy] {
        let mut sck = sc.clone();
        sck.controller = kind;
        runs.push(run_closed_loop(params, topology, &sck)?);
    }
    let cmp = Comparison {
        pi: runs[0].metrics.clone(),
        linear: runs[1].metrics.clone(),
        greedy: runs[2].metrics.clone(),
        linear_energy_saving_pct: saving_pct(
            runs[0].metrics.average_power_kw,
            runs[1].metrics.average_power_kw,
        ),
        greedy_energy_saving_pct: saving_pct(
            runs[0].metrics.average_power_kw,
            runs[2].metrics.average_power_kw,
        ),
        linear_switching_reduction_pct: saving_pct(
            runs[0].metrics.switching_count as f64,
            runs[1].metrics.switching_count as f64,
        ),
        greedy_switching_reduction_pct: saving_pct(
            runs[0].metrics.switching_count as f64,
            runs[2].metrics.switching_count as f64,
        ),
    };
    Ok((cmp, runs))
}

/// Demand-response comparison under a price series: the PI baseline runs as
/// usual, the proposed controllers apply the valve-cap policy.
#[derive(Debug, Clone, Serialize)]
pub struct DrComparison {
    pub pi_cost_usd: f64,
    pub linear_cost_usd: f64,
    pub greedy_cost_usd: f64,
    pub linear_cost_saving_pct: f64,
    pub greedy_cost_saving_pct: f64,
    /// Periods during which the price-responsive cap was below the full set,
    /// summed over the capped controllers.
    pub capped_periods: usize,
    /// Capped periods whose solution opened more valves than allowed; always
    /// zero unless the solver misbehaves.
    pub cap_violations: usize,
    pub pi: Metrics,
    pub linear: Metrics,
    pub greedy: Metrics,
}

pub fn dr_compare(
    params: &PlantParams,
    topology: &Topology,
    sc: &ScenarioConfig,
    prices: &PriceSeries,
    policy: DrPolicy,
) -> Result<(DrComparison, Vec<RunResult>)> {
    let mut runs = Vec::new();
    for kind in [ControllerKind::Pi, ControllerKind::Linear, ControllerKind::Greedy] {
        let mut sck = sc.clone();
        sck.controller = kind;
        sck.prices = Some(prices.clone());
        sck.dr = Some(policy);
        runs.push(run_closed_loop(params, topology, &sck)?);
    }
    let n = params.n;
    let mut capped_periods = 0;
    let mut cap_violations = 0;
    for run in &runs[1..] {
        for d in &run.solver_log {
            if d.cap < n {
                capped_periods += 1;
                if d.k > d.cap {
                    cap_violations += 1;
                }
            }
        }
    }
    let cmp = DrComparison {
        pi_cost_usd: runs[0].metrics.energy_cost_usd,
        linear_cost_usd: runs[1].metrics.energy_cost_usd,
        greedy_cost_usd: runs[2].metrics.energy_cost_usd,
        linear_cost_saving_pct: saving_pct(
            runs[0].metrics.energy_cost_usd,
            runs[1].metrics.energy_cost_usd,
        ),
        greedy_cost_saving_pct: saving_pct(
            runs[0].metrics.energy_cost_usd,
            runs[2].metrics.energy_cost_usd,
        ),
        capped_periods,
        cap_violations,
        pi: runs[0].metrics.clone(),
        linear: runs[1].metrics.clone(),
        greedy: runs[2].metrics.clone(),
    };
    Ok((cmp, runs))
}
