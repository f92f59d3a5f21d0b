//! Affine prediction model of the temperature dynamics.
//!
//! The controller predicts over one period with ẋ = Ax + Bu + C, where
//! x = (T_food, T_air) and the evaporation temperature is frozen at the
//! pressure reference. Integration uses the same fixed-step RK4 as the plant,
//! so one step is the exact affine map x⁺ = Φx + Ψ(Bu + C) with
//! Φ = Σ_{m≤4} (hA)^m/m! and Ψ = h·Σ_{m≤3} (hA)^m/(m+1)!.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::params::{PlantParams, Topology};
use crate::plant::PlantState;

/// Internal affine model x' = Ax + Bu + C with state x = (T_food, T_air).
#[derive(Debug, Clone)]
pub struct LinearModel {
    n: usize,
    /// 2n x 2n drift matrix.
    pub a: DMatrix<f64>,
    /// 2n x n input matrix; only air rows are nonzero for the physical model.
    pub b: DMatrix<f64>,
    /// Affine term of length 2n.
    pub c: DVector<f64>,
    /// Evaporation temperature [°C] the model was frozen at.
    pub t_evap_frozen: f64,
}

impl LinearModel {
    /// Assembles the model from plant parameters with the evaporation
    /// temperature frozen at `p_freeze` bar.
    pub fn build(params: &PlantParams, topology: &Topology, p_freeze: f64) -> Result<Self> {
        let t_evap = params.refrigerant.evaporation_temperature(p_freeze)?;
        let n = params.n;
        let dim = 2 * n;
        let mut a = DMatrix::zeros(dim, dim);
        let mut b = DMatrix::zeros(dim, n);
        let mut c = DVector::zeros(dim);
        for i in 0..n {
            // Food row: pure exchange with the case air.
            let gf = params.k_food_air / (params.food_mass_kg[i] * params.food_heat_capacity[i]);
            a[(i, i)] = -gf;
            a[(i, n + i)] = gf;
            // Air row.
            let ga = 1.0 / (params.air_mass_kg[i] * params.air_heat_capacity[i]);
            let row = n + i;
            a[(row, i)] = ga * params.k_food_air;
            let mut diag = params.k_food_air + params.k_amb_air + params.k_air_evap;
            for j in 0..n {
                let k = topology.coupling(i, j);
                if k != 0.0 {
                    a[(row, n + j)] += ga * k;
                    diag += k;
                }
            }
            a[(row, row)] -= ga * diag;
            b[(row, i)] = ga * params.k_air_evap * t_evap;
            c[row] = ga * params.k_amb_air * params.ambient_temp_c;
        }
        Ok(LinearModel { n, a, b, c, t_evap_frozen: t_evap })
    }

    /// Builds a model from explicit matrices. Intended for synthetic systems
    /// in tests and fault-injection checks; no sign structure is enforced.
    pub fn from_parts(a: DMatrix<f64>, b: DMatrix<f64>, c: DVector<f64>, t_evap_frozen: f64) -> Self {
        let n = b.ncols();
        assert_eq!(a.nrows(), a.ncols());
        assert_eq!(a.nrows(), b.nrows());
        assert_eq!(a.nrows(), c.len());
        LinearModel { n, a, b, c, t_evap_frozen }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Stacks a plant state into the model's state vector (T_food, T_air).
    pub fn state_from_plant(&self, state: &PlantState) -> DVector<f64> {
        let mut x = DVector::zeros(self.state_dim());
        for i in 0..self.n {
            x[i] = state.t_food[i];
            x[self.n + i] = state.t_air[i];
        }
        x
    }

    /// Forcing vector w = Bα + C for a (possibly relaxed) valve vector.
    pub fn forcing(&self, alpha: &[f64]) -> DVector<f64> {
        assert_eq!(alpha.len(), self.n);
        let av = DVector::from_column_slice(alpha);
        let mut w = self.c.clone();
        w.gemv(1.0, &self.b, &av, 1.0);
        w
    }

    /// Advances `x` by one RK4 step under constant forcing `w`.
    pub fn step_affine(&self, x: &mut DVector<f64>, w: &DVector<f64>, h: f64, work: &mut AffineWork) {
        let AffineWork { k1, k2, k3, k4, tmp } = work;
        // k1 = A x + w
        k1.copy_from(w);
        k1.gemv(1.0, &self.a, x, 1.0);
        // k2 = A (x + h/2 k1) + w
        tmp.copy_from(x);
        tmp.axpy(0.5 * h, k1, 1.0);
        k2.copy_from(w);
        k2.gemv(1.0, &self.a, tmp, 1.0);
        // k3 = A (x + h/2 k2) + w
        tmp.copy_from(x);
        tmp.axpy(0.5 * h, k2, 1.0);
        k3.copy_from(w);
        k3.gemv(1.0, &self.a, tmp, 1.0);
        // k4 = A (x + h k3) + w
        tmp.copy_from(x);
        tmp.axpy(h, k3, 1.0);
        k4.copy_from(w);
        k4.gemv(1.0, &self.a, tmp, 1.0);
        x.axpy(h / 6.0, k1, 1.0);
        x.axpy(h / 3.0, k2, 1.0);
        x.axpy(h / 3.0, k3, 1.0);
        x.axpy(h / 6.0, k4, 1.0);
    }

    /// Applies the transpose one-step transition, v ← Φᵀ v.
    pub fn apply_phi_transpose(&self, v: &mut DVector<f64>, h: f64, work: &mut AffineWork) {
        // Horner form of I + hAᵀ + (hAᵀ)²/2 + (hAᵀ)³/6 + (hAᵀ)⁴/24.
        let AffineWork { k1, k2, .. } = work;
        k1.copy_from(v);
        k1.gemv_tr(h / 4.0, &self.a, v, 1.0); // v + (h/4)Aᵀv
        k2.copy_from(v);
        k2.gemv_tr(h / 3.0, &self.a, k1, 1.0); // v + (h/3)Aᵀ(...)
        k1.copy_from(v);
        k1.gemv_tr(h / 2.0, &self.a, k2, 1.0); // v + (h/2)Aᵀ(...)
        v.gemv_tr(h, &self.a, k1, 1.0); // v + hAᵀ(...)
    }

    /// Applies the transpose forcing map, returning Ψᵀ v.
    pub fn apply_psi_transpose(&self, v: &DVector<f64>, h: f64, work: &mut AffineWork) -> DVector<f64> {
        let AffineWork { k1, k2, .. } = work;
        k1.copy_from(v);
        k1.gemv_tr(h / 4.0, &self.a, v, 1.0);
        k2.copy_from(v);
        k2.gemv_tr(h / 3.0, &self.a, k1, 1.0);
        let mut out = v.clone();
        out.gemv_tr(h / 2.0, &self.a, k2, 1.0);
        out *= h;
        out
    }

    /// Simulates `steps` RK4 steps of size `h` from `x0` under a constant
    /// relaxed valve vector, returning all samples (length steps + 1).
    pub fn simulate(&self, x0: &DVector<f64>, alpha: &[f64], h: f64, steps: usize) -> Vec<DVector<f64>> {
        let w = self.forcing(alpha);
        let mut work = AffineWork::new(self.state_dim());
        let mut out = Vec::with_capacity(steps + 1);
        let mut x = x0.clone();
        out.push(x.clone());
        for _ in 0..steps {
            self.step_affine(&mut x, &w, h, &mut work);
            out.push(x.clone());
        }
        out
    }
}

/// Reusable stage buffers for the affine integrator.
pub struct AffineWork {
    k1: DVector<f64>,
    k2: DVector<f64>,
    k3: DVector<f64>,
    k4: DVector<f64>,
    tmp: DVector<f64>,
}

impl AffineWork {
    pub fn new(dim: usize) -> Self {
        AffineWork {
            k1: DVector::zeros(dim),
            k2: DVector::zeros(dim),
            k3: DVector::zeros(dim),
            k4: DVector::zeros(dim),
            tmp: DVector::zeros(dim),
        }
    }
}
