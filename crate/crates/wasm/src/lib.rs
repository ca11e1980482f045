//! Browser bindings: an interactive 2D vorticity simulation, the sensor
//! deviation ladder, and the network sizing rule, exported through
//! wasm-bindgen for the static demo page in `www/`.
//!
//! Build with `wasm-pack build crates/wasm --target web --out-dir
//! ../../www/pkg` and open `www/index.html` from any static file server.

use wasm_bindgen::prelude::*;

use nslab_core::basis::{build_basis, BasisSet};
use nslab_core::codec::{encode_field, FieldSamples};
use nslab_core::dataset::{sample_initial, Distribution, SampleSpec};
use nslab_core::galerkin::rhs;
use nslab_core::mlp::size_for_accuracy;
use nslab_core::sensors::{kappa, SensorGrid};
use nslab_core::tensor::{assemble_structure_tensor, StructureTensor};

/// Interactive 2D Galerkin simulation: holds the basis, the interaction
/// tensor, and the current coefficient state; the page drives it one
/// animation frame at a time.
#[wasm_bindgen]
pub struct Simulation {
    basis: BasisSet,
    tensor: StructureTensor,
    eigenvalues: Vec<f64>,
    coeffs: Vec<f64>,
    t: f64,
    nu: f64,
}

#[wasm_bindgen]
impl Simulation {
    /// A resting simulation with `modes` basis functions.
    #[wasm_bindgen(constructor)]
    pub fn new(modes: usize, nu: f64) -> Result<Simulation, JsError> {
        if !nu.is_finite() || nu <= 0.0 {
            return Err(JsError::new("viscosity must be positive and finite"));
        }
        let basis = build_basis(2, modes).map_err(|e| JsError::new(&e.to_string()))?;
        let tensor = assemble_structure_tensor(&basis);
        let eigenvalues = basis.eigenvalues();
        let coeffs = vec![0.0; modes];
        Ok(Simulation { basis, tensor, eigenvalues, coeffs, t: 0.0, nu })
    }

    /// Replace the state with a seeded random draw.
    pub fn randomize(&mut self, seed: u64, radius: f64, active_modes: usize) -> Result<(), JsError> {
        let m = self.basis.len();
        if active_modes == 0 || active_modes > m {
            return Err(JsError::new("active mode count must be between 1 and the basis size"));
        }
        if !radius.is_finite() || radius <= 0.0 {
            return Err(JsError::new("radius must be positive and finite"));
        }
        let spec = SampleSpec {
            dim: 2,
            radius,
            active_modes,
            distribution: Distribution::UniformBox,
            seed,
        };
        let mut coeffs = sample_initial(&spec, 0);
        coeffs.resize(m, 0.0);
        self.coeffs = coeffs;
        self.t = 0.0;
        Ok(())
    }

    /// Replace the state with the Taylor-Green vortex, whose coefficients
    /// decay exactly by `exp(-2 nu t)`.
    pub fn set_taylor_green(&mut self) -> Result<(), JsError> {
        let m = self.basis.len();
        if m < 8 {
            return Err(JsError::new("the Taylor-Green field needs at least 8 modes"));
        }
        let samples = FieldSamples::tabulate(2, 33, |x| {
            [x[0].cos() * x[1].sin(), -x[0].sin() * x[1].cos(), 0.0]
        });
        let code = encode_field(&samples, &self.basis, m)
            .map_err(|e| JsError::new(&e.to_string()))?;
        self.coeffs = code.values;
        self.t = 0.0;
        Ok(())
    }

    pub fn set_viscosity(&mut self, nu: f64) -> Result<(), JsError> {
        if !nu.is_finite() || nu <= 0.0 {
            return Err(JsError::new("viscosity must be positive and finite"));
        }
        self.nu = nu;
        Ok(())
    }

    /// Advance `steps` RK4 steps of size `dt`. Returns false when the
    /// state left the stable region and was rolled back to rest.
    pub fn step(&mut self, dt: f64, steps: usize) -> Result<bool, JsError> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(JsError::new("dt must be positive and finite"));
        }
        let m = self.coeffs.len();
        for _ in 0..steps {
            let d = &self.coeffs;
            let k1 = self.rhs_of(d)?;
            let s1: Vec<f64> = (0..m).map(|i| d[i] + 0.5 * dt * k1[i]).collect();
            let k2 = self.rhs_of(&s1)?;
            let s2: Vec<f64> = (0..m).map(|i| d[i] + 0.5 * dt * k2[i]).collect();
            let k3 = self.rhs_of(&s2)?;
            let s3: Vec<f64> = (0..m).map(|i| d[i] + dt * k3[i]).collect();
            let k4 = self.rhs_of(&s3)?;
            let next: Vec<f64> = (0..m)
                .map(|i| self.coeffs[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect();
            if next.iter().any(|c| !c.is_finite()) {
                self.coeffs = vec![0.0; m];
                self.t = 0.0;
                return Ok(false);
            }
            self.coeffs = next;
            self.t += dt;
        }
        Ok(true)
    }

    fn rhs_of(&self, coeffs: &[f64]) -> Result<Vec<f64>, JsError> {
        rhs(coeffs, &self.tensor, &self.eigenvalues, self.nu)
            .map_err(|e| JsError::new(&e.to_string()))
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn energy(&self) -> f64 {
        0.5 * self.coeffs.iter().map(|c| c * c).sum::<f64>()
    }

    pub fn dissipation(&self) -> f64 {
        self.coeffs
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, l)| l * c * c)
            .sum()
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.coeffs.clone()
    }

    /// Scalar vorticity on an `n x n` periodic grid, row-major with x
    /// varying fastest, for the heatmap canvas.
    pub fn vorticity(&self, n: usize) -> Vec<f64> {
        let mut field = vec![0.0; n * n];
        let h = 2.0 * std::f64::consts::PI / n as f64;
        for iy in 0..n {
            for ix in 0..n {
                let x = [-std::f64::consts::PI + ix as f64 * h,
                         -std::f64::consts::PI + iy as f64 * h,
                         0.0];
                let mut w = 0.0;
                for (c, mode) in self.coeffs.iter().zip(&self.basis.modes) {
                    if *c != 0.0 {
                        let g = mode.gradient(&x);
                        w += c * (g[1][0] - g[0][1]);
                    }
                }
                field[iy * n + ix] = w;
            }
        }
        field
    }
}

/// Deviation of trilinear sensor reconstructions for the first `d`
/// 3D modes over a ladder of grids; returns a JSON array of
/// `{points_per_axis, sensor_count, kappa}` rows.
#[wasm_bindgen]
pub fn kappa_ladder(d: usize, grids: Vec<usize>, probe_n: usize) -> Result<String, JsError> {
    let max_modes = d.max(6);
    let basis = build_basis(3, max_modes).map_err(|e| JsError::new(&e.to_string()))?;
    if d == 0 || d > basis.len() {
        return Err(JsError::new("mode count out of range"));
    }
    let mut rows = Vec::new();
    for n in grids {
        if probe_n <= n {
            return Err(JsError::new("probe lattice must be finer than every sensor grid"));
        }
        let grid = SensorGrid::new(n).map_err(|e| JsError::new(&e.to_string()))?;
        let report = kappa(&basis, d, grid, probe_n);
        rows.push(serde_json::json!({
            "points_per_axis": report.points_per_axis,
            "sensor_count": report.sensor_count,
            "kappa": report.kappa,
        }));
    }
    serde_json::to_string(&rows).map_err(|e| JsError::new(&e.to_string()))
}

/// Depth/width/parameter-count estimate for hitting accuracy `delta`;
/// returns a JSON object mirroring the sizing rule.
#[wasm_bindgen]
pub fn network_size(
    delta: f64,
    d_h: usize,
    d_y: usize,
    radius: f64,
    c: f64,
) -> Result<String, JsError> {
    let estimate = size_for_accuracy(delta, d_h, d_y, radius, c, None)
        .map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&estimate).map_err(|e| JsError::new(&e.to_string()))
}
