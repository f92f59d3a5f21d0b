//! Plant parameters, interconnection topology, and the on-disk configuration
//! format.
//!
//! The numeric defaults reproduce a benchmark ten-case supermarket unit.
//! Config files are TOML with one key per parameter; unknown keys are
//! rejected so typos fail loudly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermo::RefrigerantModel;

/// Physical and control parameters of one refrigeration unit.
///
/// Per-case quantities are vectors of length `n`; everything else is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantParams {
    /// Number of display cases.
    pub n: usize,
    /// Number of compressors in the rack.
    pub n_comp: usize,
    /// Control period Δt \[s\].
    pub control_period_s: f64,
    /// Food mass per case \[kg\].
    pub food_mass_kg: Vec<f64>,
    /// Food heat capacity per case [J/(kg·K)].
    pub food_heat_capacity: Vec<f64>,
    /// Air mass per case \[kg\].
    pub air_mass_kg: Vec<f64>,
    /// Air heat capacity per case [J/(kg·K)].
    pub air_heat_capacity: Vec<f64>,
    /// Evaporator wall mass \[kg\]. Stored for completeness; the wall state is
    /// not modeled.
    pub wall_mass_kg: f64,
    /// Evaporator wall heat capacity [J/(kg·K)]. Stored, unused.
    pub wall_heat_capacity: f64,
    /// Food-to-air heat transfer coefficient [J/(s·K)].
    pub k_food_air: f64,
    /// Air-to-evaporator heat transfer coefficient [J/(s·K)].
    pub k_air_evap: f64,
    /// Ambient-to-air heat transfer coefficient [J/(s·K)].
    pub k_amb_air: f64,
    /// Ambient temperature [°C].
    pub ambient_temp_c: f64,
    /// Lower edge of the desired air band per case [°C].
    pub t_min_c: Vec<f64>,
    /// Upper edge of the desired air band per case [°C].
    pub t_max_c: Vec<f64>,
    /// Refrigerant mass held by a filled evaporator \[kg\].
    pub max_refrigerant_charge_kg: f64,
    /// Suction manifold volume \[m³\].
    pub suction_volume_m3: f64,
    /// Volumetric efficiency of each compressor.
    pub volumetric_efficiency: f64,
    /// Compressor displacement volume flow [m³/s].
    pub compressor_volume_m3_per_s: f64,
    /// PI proportional gain.
    pub k_p: f64,
    /// PI integral constant (the output divides the accumulator by this).
    pub k_i: f64,
    /// Suction pressure reference \[bar\].
    pub pressure_ref_bar: f64,
    /// Dead band around the pressure reference \[bar\].
    pub dead_band_bar: f64,
    /// Refrigerant property fits.
    pub refrigerant: RefrigerantModel,
}

impl PlantParams {
    /// Per-compressor volume flow factor k_c = η·V_comp/n [m³/s].
    pub fn compressor_flow_factor(&self) -> f64 {
        self.volumetric_efficiency * self.compressor_volume_m3_per_s / self.n as f64
    }

    /// Checks every invariant, returning the full list of violations.
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if self.n < 1 {
            v.push("n_cases must be at least 1".to_string());
        }
        if self.n_comp < 1 {
            v.push("n_compressors must be at least 1".to_string());
        }
        check_positive(&mut v, "control_period_s", self.control_period_s);
        check_per_case(&mut v, "food_mass_kg", &self.food_mass_kg, self.n);
        check_per_case(&mut v, "food_heat_capacity_j_per_kg_k", &self.food_heat_capacity, self.n);
        check_per_case(&mut v, "air_mass_kg", &self.air_mass_kg, self.n);
        check_per_case(&mut v, "air_heat_capacity_j_per_kg_k", &self.air_heat_capacity, self.n);
        check_positive(&mut v, "wall_mass_kg", self.wall_mass_kg);
        check_positive(&mut v, "wall_heat_capacity_j_per_kg_k", self.wall_heat_capacity);
        check_positive(&mut v, "k_food_air_w_per_k", self.k_food_air);
        check_positive(&mut v, "k_air_evap_w_per_k", self.k_air_evap);
        check_positive(&mut v, "k_amb_air_w_per_k", self.k_amb_air);
        if !self.ambient_temp_c.is_finite() {
            v.push("ambient_temp_c must be finite".to_string());
        }
        if self.t_min_c.len() != self.n || self.t_max_c.len() != self.n {
            v.push("t_min_c/t_max_c must have one entry per case".to_string());
        } else {
            for i in 0..self.n {
                let band_ok = matches!(
                    self.t_min_c[i].partial_cmp(&self.t_max_c[i]),
                    Some(std::cmp::Ordering::Less)
                );
                if !band_ok {
                    v.push(format!(
                        "temperature band of case {} is empty: [{}, {}]",
                        i + 1,
                        self.t_min_c[i],
                        self.t_max_c[i]
                    ));
                }
            }
        }
        check_positive(&mut v, "max_refrigerant_charge_kg", self.max_refrigerant_charge_kg);
        check_positive(&mut v, "suction_volume_m3", self.suction_volume_m3);
        if !(self.volumetric_efficiency > 0.0 && self.volumetric_efficiency <= 1.0) {
            v.push(format!(
                "volumetric_efficiency must lie in (0, 1], got {}",
                self.volumetric_efficiency
            ));
        }
        check_positive(&mut v, "compressor_volume_m3_per_s", self.compressor_volume_m3_per_s);
        check_positive(&mut v, "pressure_ref_bar", self.pressure_ref_bar);
        if !(self.dead_band_bar >= 0.0 && self.dead_band_bar.is_finite()) {
            v.push(format!("dead_band_bar must be nonnegative, got {}", self.dead_band_bar));
        }
        if !self.k_p.is_finite() || !self.k_i.is_finite() || self.k_i == 0.0 {
            v.push("k_p must be finite and k_i finite and nonzero".to_string());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::config(v))
        }
    }
}

fn check_positive(v: &mut Vec<String>, name: &str, value: f64) {
    if value.is_nan() || value <= 0.0 || value.is_infinite() {
        v.push(format!("{name} must be strictly positive, got {value}"));
    }
}

fn check_per_case(v: &mut Vec<String>, name: &str, values: &[f64], n: usize) {
    if values.len() != n {
        v.push(format!("{name} must have one entry per case ({n}), got {}", values.len()));
        return;
    }
    for (i, &x) in values.iter().enumerate() {
        if !(x > 0.0 && x.is_finite()) {
            v.push(format!("{name}[{}] must be strictly positive, got {x}", i + 1));
        }
    }
}

/// Air-to-air heat transfer coefficients between display cases.
///
/// Symmetric, nonnegative, zero diagonal; entry (i, j) is zero when cases i
/// and j are not neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n: usize,
    k: Vec<f64>, // row-major n x n
}

impl Topology {
    /// No inter-case coupling.
    pub fn isolated(n: usize) -> Self {
        Topology { n, k: vec![0.0; n * n] }
    }

    /// A line of cases with coefficient `k` between physical neighbors.
    pub fn chain(n: usize, k: f64) -> Self {
        let mut t = Topology::isolated(n);
        for i in 0..n.saturating_sub(1) {
            t.k[i * n + i + 1] = k;
            t.k[(i + 1) * n + i] = k;
        }
        t
    }

    /// Builds a topology from an explicit row-major matrix, checking symmetry,
    /// nonnegativity, and a zero diagonal.
    pub fn from_matrix(n: usize, k: Vec<f64>) -> Result<Self> {
        let mut v = Vec::new();
        if k.len() != n * n {
            return Err(Error::config(vec![format!(
                "topology matrix must be {n}x{n}, got {} entries",
                k.len()
            )]));
        }
        for i in 0..n {
            if k[i * n + i] != 0.0 {
                v.push(format!("topology diagonal entry ({i},{i}) must be zero"));
            }
            for j in 0..n {
                if k[i * n + j] < 0.0 || !k[i * n + j].is_finite() {
                    v.push(format!("topology entry ({i},{j}) must be finite and nonnegative"));
                }
                if k[i * n + j] != k[j * n + i] {
                    v.push(format!("topology must be symmetric at ({i},{j})"));
                }
            }
        }
        if v.is_empty() {
            Ok(Topology { n, k })
        } else {
            Err(Error::config(v))
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Coupling coefficient k_{i,j} [J/(s·K)].
    #[inline]
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }

    /// Sum of row i, i.e. the total coupling seen by case i.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.k[i * self.n..(i + 1) * self.n].iter().sum()
    }
}

/// Default parameter set: the benchmark ten-case unit with a seven-compressor
/// rack, a 60 s control period, and a chain interconnection at 500 J/(s·K).
pub fn default_params() -> (PlantParams, Topology) {
    let cfg = Config::default();
    cfg.build().expect("default configuration is valid")
}

const DEFAULT_N: usize = 10;

/// `[plant]` section of the config file. Omitted keys take their defaults, so
/// a config may override only what it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantSection {
    pub n_cases: usize,
    pub n_compressors: usize,
    pub control_period_s: f64,
    pub food_mass_kg: f64,
    pub food_heat_capacity_j_per_kg_k: f64,
    pub wall_mass_kg: f64,
    pub wall_heat_capacity_j_per_kg_k: f64,
    pub air_mass_kg: f64,
    pub air_heat_capacity_j_per_kg_k: f64,
    pub k_food_air_w_per_k: f64,
    pub k_air_evap_w_per_k: f64,
    pub k_amb_air_w_per_k: f64,
    pub ambient_temp_c: f64,
    pub t_min_c: f64,
    pub t_max_c: f64,
    pub max_refrigerant_charge_kg: f64,
    pub suction_volume_m3: f64,
    pub volumetric_efficiency: f64,
    pub compressor_volume_m3_per_s: f64,
}

impl Default for PlantSection {
    fn default() -> Self {
        PlantSection {
            n_cases: DEFAULT_N,
            n_compressors: 7,
            control_period_s: 60.0,
            food_mass_kg: 200.0,
            food_heat_capacity_j_per_kg_k: 1000.0,
            wall_mass_kg: 260.0,
            wall_heat_capacity_j_per_kg_k: 385.0,
            air_mass_kg: 50.0,
            air_heat_capacity_j_per_kg_k: 1000.0,
            k_food_air_w_per_k: 300.0,
            k_air_evap_w_per_k: 225.0,
            k_amb_air_w_per_k: 275.0,
            ambient_temp_c: 20.0,
            t_min_c: 0.0,
            t_max_c: 5.0,
            max_refrigerant_charge_kg: 1.0,
            suction_volume_m3: 10.0,
            volumetric_efficiency: 0.81,
            compressor_volume_m3_per_s: 0.2,
        }
    }
}

/// `[topology]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologySection {
    /// "chain" (cases in a row) or "isolated" (no coupling).
    pub kind: TopologyKind,
    pub k_neighbor_w_per_k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Chain,
    Isolated,
}

impl Default for TopologySection {
    fn default() -> Self {
        TopologySection { kind: TopologyKind::Chain, k_neighbor_w_per_k: 500.0 }
    }
}

/// `[pi]` section: the traditional compressor controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PiSection {
    pub k_p: f64,
    pub k_i: f64,
    pub pressure_ref_bar: f64,
    pub dead_band_bar: f64,
}

impl Default for PiSection {
    fn default() -> Self {
        PiSection { k_p: 0.1, k_i: -0.8, pressure_ref_bar: 1.4, dead_band_bar: 0.3 }
    }
}

/// `[optimizer]` section: the bilevel valve optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    /// Violation threshold Δ [°C²·s] of the outer problem.
    pub delta_c2s: f64,
    /// Prediction samples per control period (one-second grid by default).
    pub prediction_samples: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection { delta_c2s: 0.5, prediction_samples: 61 }
    }
}

/// `[scenario]` section: closed-loop experiment setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub duration_s: f64,
    /// Seed for the food-mass perturbation and any other randomness.
    pub seed: u64,
    pub controller: ControllerKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Pi,
    Linear,
    Greedy,
    Oracle,
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ControllerKind::Pi => "pi",
            ControllerKind::Linear => "linear",
            ControllerKind::Greedy => "greedy",
            ControllerKind::Oracle => "oracle",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pi" => Ok(ControllerKind::Pi),
            "linear" => Ok(ControllerKind::Linear),
            "greedy" => Ok(ControllerKind::Greedy),
            "oracle" => Ok(ControllerKind::Oracle),
            other => Err(format!("unknown controller '{other}' (expected pi|linear|greedy|oracle)")),
        }
    }
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection { duration_s: 28_800.0, seed: 2013, controller: ControllerKind::Pi }
    }
}

/// `[demand_response]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemandResponseSection {
    pub price_threshold_usd_per_kwh: f64,
    /// Fraction of valves allowed open while the price exceeds the threshold.
    pub valve_cap_fraction: f64,
}

impl Default for DemandResponseSection {
    fn default() -> Self {
        DemandResponseSection { price_threshold_usd_per_kwh: 0.1, valve_cap_fraction: 0.7 }
    }
}

/// Whole configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub plant: PlantSection,
    pub topology: TopologySection,
    pub pi: PiSection,
    pub optimizer: OptimizerSection,
    pub scenario: ScenarioSection,
    pub demand_response: DemandResponseSection,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text)
            .map_err(|e| Error::config(vec![format!("config parse error: {e}")]))?;
        cfg.build()?; // surfaces invariant violations early
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(vec![format!("cannot read config {}: {e}", path.display())])
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Expands the scalar config into validated runtime parameters.
    pub fn build(&self) -> Result<(PlantParams, Topology)> {
        let p = &self.plant;
        let n = p.n_cases;
        let params = PlantParams {
            n,
            n_comp: p.n_compressors,
            control_period_s: p.control_period_s,
            food_mass_kg: vec![p.food_mass_kg; n],
            food_heat_capacity: vec![p.food_heat_capacity_j_per_kg_k; n],
            air_mass_kg: vec![p.air_mass_kg; n],
            air_heat_capacity: vec![p.air_heat_capacity_j_per_kg_k; n],
            wall_mass_kg: p.wall_mass_kg,
            wall_heat_capacity: p.wall_heat_capacity_j_per_kg_k,
            k_food_air: p.k_food_air_w_per_k,
            k_air_evap: p.k_air_evap_w_per_k,
            k_amb_air: p.k_amb_air_w_per_k,
            ambient_temp_c: p.ambient_temp_c,
            t_min_c: vec![p.t_min_c; n],
            t_max_c: vec![p.t_max_c; n],
            max_refrigerant_charge_kg: p.max_refrigerant_charge_kg,
            suction_volume_m3: p.suction_volume_m3,
            volumetric_efficiency: p.volumetric_efficiency,
            compressor_volume_m3_per_s: p.compressor_volume_m3_per_s,
            k_p: self.pi.k_p,
            k_i: self.pi.k_i,
            pressure_ref_bar: self.pi.pressure_ref_bar,
            dead_band_bar: self.pi.dead_band_bar,
            refrigerant: RefrigerantModel::r134a(),
        };
        let mut violations = match params.validate() {
            Ok(()) => Vec::new(),
            Err(Error::Config { violations }) => violations,
            Err(e) => return Err(e),
        };
        if !(self.optimizer.delta_c2s >= 0.0 && self.optimizer.delta_c2s.is_finite()) {
            violations.push(format!(
                "optimizer.delta_c2s must be nonnegative, got {}",
                self.optimizer.delta_c2s
            ));
        }
        if self.optimizer.prediction_samples < 2 {
            violations.push("optimizer.prediction_samples must be at least 2".to_string());
        }
        if !(self.scenario.duration_s > 0.0 && self.scenario.duration_s.is_finite()) {
            violations.push(format!(
                "scenario.duration_s must be strictly positive, got {}",
                self.scenario.duration_s
            ));
        }
        let frac = self.demand_response.valve_cap_fraction;
        if !(frac > 0.0 && frac <= 1.0) {
            violations.push(format!(
                "demand_response.valve_cap_fraction must lie in (0, 1], got {frac}"
            ));
        }
        if self.demand_response.price_threshold_usd_per_kwh < 0.0 {
            violations.push("demand_response.price_threshold_usd_per_kwh must be nonnegative".to_string());
        }
        if self.topology.k_neighbor_w_per_k < 0.0 || !self.topology.k_neighbor_w_per_k.is_finite() {
            violations.push("topology.k_neighbor_w_per_k must be finite and nonnegative".to_string());
        }
        if !violations.is_empty() {
            return Err(Error::config(violations));
        }
        let topology = match self.topology.kind {
            TopologyKind::Chain => Topology::chain(n, self.topology.k_neighbor_w_per_k),
            TopologyKind::Isolated => Topology::isolated(n),
        };
        Ok((params, topology))
    }
}

/// Commented configuration template with every default spelled out.
/// `export-defaults` writes this file; parsing it reproduces `Config::default()`.
pub const DEFAULT_CONFIG_TOML: &str = r#"# refsim configuration
# Units are embedded in key names; temperatures are degrees Celsius,
# pressures are bar.

[plant]
n_cases = 10
n_compressors = 7
control_period_s = 60.0              # controller decision interval [s]
food_mass_kg = 200.0                 # nominal per-case food mass; perturbed by scenario.seed
food_heat_capacity_j_per_kg_k = 1000.0
wall_mass_kg = 260.0                 # evaporator wall, stored but not simulated
wall_heat_capacity_j_per_kg_k = 385.0
air_mass_kg = 50.0
air_heat_capacity_j_per_kg_k = 1000.0
k_food_air_w_per_k = 300.0           # food <-> case air [J/(s K)]
k_air_evap_w_per_k = 225.0           # case air <-> evaporator [J/(s K)]
k_amb_air_w_per_k = 275.0            # ambient <-> case air [J/(s K)]
ambient_temp_c = 20.0
t_min_c = 0.0                        # lower edge of the desired air band
t_max_c = 5.0                        # upper edge of the desired air band
max_refrigerant_charge_kg = 1.0      # refrigerant held by a filled evaporator
suction_volume_m3 = 10.0
volumetric_efficiency = 0.81
compressor_volume_m3_per_s = 0.2

[topology]
kind = "chain"                       # "chain" or "isolated"
k_neighbor_w_per_k = 500.0           # air <-> air between neighboring cases

[pi]
k_p = 0.1
k_i = -0.8
pressure_ref_bar = 1.4
dead_band_bar = 0.3

[optimizer]
delta_c2s = 0.5                      # outer-problem violation threshold [C^2 s]
prediction_samples = 61              # samples per period in the prediction model

[scenario]
duration_s = 28800.0                 # 8 hours
seed = 2013                          # food-mass perturbation seed
controller = "pi"                    # pi | linear | greedy | oracle

[demand_response]
price_threshold_usd_per_kwh = 0.1
valve_cap_fraction = 0.7             # valve budget cap while the price is high
"#;
