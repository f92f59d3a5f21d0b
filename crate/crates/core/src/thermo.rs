//! Refrigerant property correlations.
//!
//! The working fluid is R134a. All properties are polynomial fits in the
//! suction pressure, valid near the operating range of a typical supermarket
//! rack (about 0.6 to 2.2 bar). Outside that window the fits extrapolate and
//! should not be trusted.

use crate::error::{Error, Result};

/// Pressure window (bar) over which the fits are validated.
pub const OPERATING_RANGE_BAR: (f64, f64) = (0.6, 2.2);

/// Polynomial property fits for one refrigerant, coefficients highest degree
/// first, evaluated in suction pressure \[bar\].
#[derive(Debug, Clone, PartialEq)]
pub struct RefrigerantModel {
    /// Evaporation temperature [°C].
    pub evap_temp: Vec<f64>,
    /// Evaporation enthalpy [J/kg].
    pub evap_enthalpy: Vec<f64>,
    /// Vapor density in the suction manifold [kg/m³].
    pub suction_density: Vec<f64>,
    /// Density-pressure gradient dρ/dP [kg/(m³·bar)].
    pub density_gradient: Vec<f64>,
    /// Compressor specific power ρ·(h_out − h_in) [J/m³].
    pub specific_power: Vec<f64>,
}

impl RefrigerantModel {
    /// The R134a fits used throughout the simulator.
    pub fn r134a() -> Self {
        RefrigerantModel {
            evap_temp: vec![-4.3544, 29.2240, -51.2005],
            evap_enthalpy: vec![0.0217e5, -0.1704e5, 2.2988e5],
            suction_density: vec![4.6073, 0.3798],
            density_gradient: vec![-0.0329, 0.2161, -0.4742, 5.4817],
            specific_power: vec![0.0265e5, -0.4346e5, 2.4923e5, 1.2189e5],
        }
    }

    /// Evaporation temperature [°C] at suction pressure `p_suc` \[bar\].
    pub fn evaporation_temperature(&self, p_suc: f64) -> Result<f64> {
        eval(&self.evap_temp, p_suc)
    }

    /// Evaporation enthalpy [J/kg]. Exposed for completeness; the plant
    /// dynamics do not consume it.
    pub fn evaporation_enthalpy(&self, p_suc: f64) -> Result<f64> {
        eval(&self.evap_enthalpy, p_suc)
    }

    /// Refrigerant vapor density in the suction manifold [kg/m³].
    pub fn suction_density(&self, p_suc: f64) -> Result<f64> {
        eval(&self.suction_density, p_suc)
    }

    /// dρ/dP of the suction vapor [kg/(m³·bar)]. This is an independent fit,
    /// not the analytic derivative of [`Self::suction_density`].
    pub fn density_pressure_gradient(&self, p_suc: f64) -> Result<f64> {
        eval(&self.density_gradient, p_suc)
    }

    /// Compressor specific power ρ_suc·(h_oc − h_ic) [J/m³].
    pub fn compressor_specific_power(&self, p_suc: f64) -> Result<f64> {
        eval(&self.specific_power, p_suc)
    }
}

impl Default for RefrigerantModel {
    fn default() -> Self {
        Self::r134a()
    }
}

/// Horner evaluation with the shared pressure-domain check.
fn eval(coeffs: &[f64], p_suc: f64) -> Result<f64> {
    if !p_suc.is_finite() || p_suc <= 0.0 {
        return Err(Error::PressureDomain { value: p_suc });
    }
    Ok(horner(coeffs, p_suc))
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * x + c)
}
