//! Sensor study on the 3D torus: uniform point grids standing in for
//! physical sensors, trilinear reconstruction of velocity fields from
//! sensor readings, the measured worst-case reconstruction error
//! `kappa(D, m)` over the first `D` basis modes, the smallest sensor count
//! meeting a target accuracy, and a depth-2 training pipeline whose data
//! flows through the sensor reconstruction.
//!
//! Everything here is 3D by construction: trilinear cells presuppose a box
//! mesh, and the sensor grid places `n` points per axis inclusive of both
//! faces (`n^3` sensors total, spacing `2*pi/(n-1)`).

use crate::basis::{BasisMode, BasisSet};
use crate::codec::{encode_field, encode_y, required_resolution, CodecError, FieldSamples};
use crate::dataset::{self, DatasetError, Distribution, SampleSpec};
use crate::galerkin::{GalerkinState, SolverConfig, SolverError};
use crate::mlp::{self, MlpArchitecture, MlpError, MlpParams, TrainConfig};
use crate::tensor::StructureTensor;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, thiserror::Error)]
pub enum SensorError {
    #[error("invalid sensor grid: {0}")]
    InvalidGrid(String),
    #[error("invalid sensor-study configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "search range exhausted: best grid n={best_n} leaves margin {best_margin:.6e} (need > 0)"
    )]
    Exhausted { best_n: usize, best_margin: f64 },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
}

/// Uniform sensor lattice on `[-pi, pi]^3`: `n` points per axis including
/// both faces, `n^3` sensors in total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorGrid {
    n: usize,
}

impl SensorGrid {
    pub fn new(n: usize) -> Result<SensorGrid, SensorError> {
        if n < 2 {
            return Err(SensorError::InvalidGrid(format!(
                "need at least 2 points per axis to span both faces, got {n}"
            )));
        }
        Ok(SensorGrid { n })
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn sensor_count(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / (self.n - 1) as f64
    }

    pub fn axis_coord(&self, i: usize) -> f64 {
        debug_assert!(i < self.n);
        -PI + self.spacing() * i as f64
    }

    /// Sensor location for a flat index, x slowest and z fastest.
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let iz = flat % self.n;
        let iy = (flat / self.n) % self.n;
        let ix = flat / (self.n * self.n);
        [self.axis_coord(ix), self.axis_coord(iy), self.axis_coord(iz)]
    }
}

/// A velocity field reconstructed from sensor readings by trilinear
/// interpolation within each grid cell.
#[derive(Debug, Clone)]
pub struct TrilinearField {
    grid: SensorGrid,
    /// Sensor readings in [`SensorGrid`] flat order.
    values: Vec<[f64; 3]>,
}

impl TrilinearField {
    pub fn from_values(grid: SensorGrid, values: Vec<[f64; 3]>) -> Result<TrilinearField, SensorError> {
        if values.len() != grid.sensor_count() {
            return Err(SensorError::InvalidGrid(format!(
                "{} sensor readings for a grid of {}",
                values.len(),
                grid.sensor_count()
            )));
        }
        Ok(TrilinearField { grid, values })
    }

    pub fn from_fn<F: Fn(&[f64; 3]) -> [f64; 3]>(grid: SensorGrid, f: F) -> TrilinearField {
        let values = (0..grid.sensor_count()).map(|i| f(&grid.point(i))).collect();
        TrilinearField { grid, values }
    }

    pub fn grid(&self) -> SensorGrid {
        self.grid
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }

    fn corner(&self, ix: usize, iy: usize, iz: usize) -> &[f64; 3] {
        &self.values[(ix * self.grid.n + iy) * self.grid.n + iz]
    }

    /// Axis coordinate to (cell index, local fraction in [0, 1]).
    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.grid.n;
        let s = ((x + PI) / self.spacing_cached()).clamp(0.0, (n - 1) as f64);
        let cell = (s as usize).min(n - 2);
        (cell, s - cell as f64)
    }

    fn spacing_cached(&self) -> f64 {
        self.grid.spacing()
    }

    /// Trilinear blend of the 8 cell corners around `x`.
    pub fn evaluate(&self, x: &[f64; 3]) -> [f64; 3] {
        let (cx, tx) = self.locate(x[0]);
        let (cy, ty) = self.locate(x[1]);
        let (cz, tz) = self.locate(x[2]);
        let mut out = [0.0f64; 3];
        for dx in 0..2usize {
            let wx = if dx == 0 { 1.0 - tx } else { tx };
            for dy in 0..2usize {
                let wy = if dy == 0 { 1.0 - ty } else { ty };
                for dz in 0..2usize {
                    let wz = if dz == 0 { 1.0 - tz } else { tz };
                    let v = self.corner(cx + dx, cy + dy, cz + dz);
                    let w = wx * wy * wz;
                    out[0] += w * v[0];
                    out[1] += w * v[1];
                    out[2] += w * v[2];
                }
            }
        }
        out
    }
}

/// One basis mode reconstructed from its sensor readings.
#[derive(Debug, Clone)]
pub struct InterpolatedMode {
    pub ordinal: usize,
    pub field: TrilinearField,
}

/// Sample a basis mode at the sensors and wrap the reconstruction.
pub fn interpolate_mode(mode: &BasisMode, grid: SensorGrid) -> InterpolatedMode {
    InterpolatedMode {
        ordinal: mode.ordinal,
        field: TrilinearField::from_fn(grid, |x| mode.evaluate(x)),
    }
}

/// Worst-case sensor reconstruction error over the leading modes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KappaReport {
    /// Number of leading modes measured.
    pub d: usize,
    pub points_per_axis: usize,
    pub sensor_count: usize,
    pub probe_points_per_axis: usize,
    /// Max Euclidean deviation per mode, ordinals 1..=d.
    pub per_mode: Vec<f64>,
    /// `max(per_mode)`.
    pub kappa: f64,
}

impl KappaReport {
    /// CSV row block for a sweep table: one row per mode.
    pub fn rows_csv(&self) -> String {
        let mut out = String::new();
        for (i, dev) in self.per_mode.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{:.17e},{:.17e}\n",
                self.points_per_axis,
                self.sensor_count,
                i + 1,
                dev,
                self.kappa
            ));
        }
        out
    }
}

/// Header matching [`KappaReport::rows_csv`].
pub const KAPPA_CSV_HEADER: &str = "points_per_axis,sensor_count,mode,max_deviation,kappa\n";

fn probe_coord(i: usize, probe_n: usize) -> f64 {
    -PI + 2.0 * PI * i as f64 / (probe_n - 1) as f64
}

/// Measure `kappa`: the max over the first `d` modes and a dense inclusive
/// probe lattice of the Euclidean deviation between a mode and its sensor
/// reconstruction. The probe must be strictly finer than the sensor grid.
pub fn kappa(basis: &BasisSet, d: usize, grid: SensorGrid, probe_n: usize) -> KappaReport {
    assert_eq!(basis.dim, 3, "sensor study is 3D only");
    assert!(d >= 1 && d <= basis.len(), "mode count out of range");
    assert!(
        probe_n > grid.points_per_axis(),
        "probe lattice must be strictly finer than the sensor grid"
    );

    let deviation_for = |mode: &BasisMode| -> f64 {
        let interp = interpolate_mode(mode, grid);
        let mut max_dev = 0.0f64;
        for ix in 0..probe_n {
            for iy in 0..probe_n {
                for iz in 0..probe_n {
                    let x = [
                        probe_coord(ix, probe_n),
                        probe_coord(iy, probe_n),
                        probe_coord(iz, probe_n),
                    ];
                    let exact = mode.evaluate(&x);
                    let approx = interp.field.evaluate(&x);
                    let dev_sq = (exact[0] - approx[0]).powi(2)
                        + (exact[1] - approx[1]).powi(2)
                        + (exact[2] - approx[2]).powi(2);
                    max_dev = max_dev.max(dev_sq);
                }
            }
        }
        max_dev.sqrt()
    };

    #[cfg(feature = "parallel")]
    let per_mode: Vec<f64> = basis.modes[..d].par_iter().map(deviation_for).collect();
    #[cfg(not(feature = "parallel"))]
    let per_mode: Vec<f64> = basis.modes[..d].iter().map(deviation_for).collect();

    let kappa = per_mode.iter().cloned().fold(0.0f64, f64::max);
    KappaReport {
        d,
        points_per_axis: grid.points_per_axis(),
        sensor_count: grid.sensor_count(),
        probe_points_per_axis: probe_n,
        per_mode,
        kappa,
    }
}

/// Search parameters for [`required_sensors`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSearch {
    /// Target accuracy; the criterion is `c1 * exp(c*R^4*lambda_d) * kappa < epsilon/2`.
    pub epsilon: f64,
    /// Leading mode count the reconstruction must cover.
    pub d: usize,
    pub radius: f64,
    pub c: f64,
    pub c1: f64,
    /// Candidate points-per-axis values, ascending.
    pub candidates: Vec<usize>,
    pub probe_n: usize,
}

/// Outcome of a sensor search: the smallest admissible grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorRequirement {
    pub points_per_axis: usize,
    pub sensor_count: usize,
    pub kappa: f64,
    /// `epsilon/2 - c1 * exp(c*R^4*lambda_d) * kappa`, positive on success.
    pub margin: f64,
}

/// Walk the candidate grids in order and return the first whose measured
/// reconstruction error drives the amplified deviation below `epsilon/2`.
pub fn required_sensors(
    basis: &BasisSet,
    search: &SensorSearch,
) -> Result<SensorRequirement, SensorError> {
    if !search.epsilon.is_finite() || search.epsilon <= 0.0 {
        return Err(SensorError::InvalidConfig(
            "epsilon must be positive and finite".into(),
        ));
    }
    if search.candidates.is_empty() {
        return Err(SensorError::InvalidConfig("candidate list is empty".into()));
    }
    if search.candidates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SensorError::InvalidConfig(
            "candidate grids must be strictly ascending".into(),
        ));
    }
    if search.d == 0 || search.d > basis.len() {
        return Err(SensorError::InvalidConfig(format!(
            "mode count {} outside the basis of {}",
            search.d,
            basis.len()
        )));
    }
    let lambda_d = basis.eigenvalues()[search.d - 1];
    let amplification = search.c1 * (search.c * search.radius.powi(4) * lambda_d).exp();

    let mut best: Option<(usize, f64, f64)> = None; // (n, kappa, margin)
    for &n in &search.candidates {
        let grid = SensorGrid::new(n)?;
        if search.probe_n <= n {
            return Err(SensorError::InvalidConfig(format!(
                "probe resolution {} must exceed every candidate grid, found n={n}",
                search.probe_n
            )));
        }
        let report = kappa(basis, search.d, grid, search.probe_n);
        let margin = search.epsilon / 2.0 - amplification * report.kappa;
        if margin > 0.0 {
            return Ok(SensorRequirement {
                points_per_axis: n,
                sensor_count: grid.sensor_count(),
                kappa: report.kappa,
                margin,
            });
        }
        if best.is_none_or(|(_, _, m)| margin > m) {
            best = Some((n, report.kappa, margin));
        }
    }
    let (best_n, _, best_margin) = best.unwrap();
    Err(SensorError::Exhausted { best_n, best_margin })
}

/// Exact sup-norm continuity constant (at probe resolution) of the linear
/// map from leading-mode coefficients to the reconstructed field: the
/// largest singular value of the 3 x d matrix of reconstructed mode values,
/// maximized over the probe lattice. Bounds the sensor reconstruction of
/// any coefficient difference: `|T(u) - T(v)|_sup <= constant * |a - b|_2`.
pub fn t_m_continuity(basis: &BasisSet, d: usize, grid: SensorGrid, probe_n: usize) -> f64 {
    assert_eq!(basis.dim, 3, "sensor study is 3D only");
    assert!(d >= 1 && d <= basis.len());
    let interps: Vec<InterpolatedMode> = basis.modes[..d]
        .iter()
        .map(|mode| interpolate_mode(mode, grid))
        .collect();

    let mut sup_sq = 0.0f64;
    let mut columns = vec![[0.0f64; 3]; d];
    for ix in 0..probe_n {
        for iy in 0..probe_n {
            for iz in 0..probe_n {
                let x = [
                    probe_coord(ix, probe_n),
                    probe_coord(iy, probe_n),
                    probe_coord(iz, probe_n),
                ];
                for (col, interp) in columns.iter_mut().zip(&interps) {
                    *col = interp.field.evaluate(&x);
                }
                sup_sq = sup_sq.max(largest_gram_eigenvalue(&columns));
            }
        }
    }
    sup_sq.sqrt()
}

/// Largest eigenvalue of `V V^T` for a 3 x d matrix given by columns,
/// via power iteration on the 3 x 3 Gram matrix.
fn largest_gram_eigenvalue(columns: &[[f64; 3]]) -> f64 {
    let mut g = [[0.0f64; 3]; 3];
    for col in columns {
        for r in 0..3 {
            for c in 0..3 {
                g[r][c] += col[r] * col[c];
            }
        }
    }
    let trace = g[0][0] + g[1][1] + g[2][2];
    if trace == 0.0 {
        return 0.0;
    }
    let mut v = [1.0f64, 1.0, 1.0];
    let mut lambda = 0.0;
    for _ in 0..48 {
        let w = [
            g[0][0] * v[0] + g[0][1] * v[1] + g[0][2] * v[2],
            g[1][0] * v[0] + g[1][1] * v[1] + g[1][2] * v[2],
            g[2][0] * v[0] + g[2][1] * v[1] + g[2][2] * v[2],
        ];
        let norm = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        if norm == 0.0 {
            // v landed in the kernel; restart off-axis.
            v = [1.0, 0.5, 0.25];
            continue;
        }
        lambda = norm;
        v = [w[0] / norm, w[1] / norm, w[2] / norm];
    }
    lambda
}

/// Galerkin-coefficient representation of the sensor reconstruction: a
/// row-major `m x d` matrix `G` with `G[j][i] = <T(w_{i+1}), w_{j+1}>`,
/// so reconstructed initial data for leading coefficients `a` is `G a`.
/// Inner products use fixed-resolution periodic quadrature (`quad_n` per
/// axis, raised to the trigonometric exactness floor when below it).
pub fn interpolation_matrix(
    basis: &BasisSet,
    d: usize,
    grid: SensorGrid,
    quad_n: usize,
) -> Result<Vec<f64>, SensorError> {
    assert_eq!(basis.dim, 3, "sensor study is 3D only");
    assert!(d >= 1 && d <= basis.len());
    let m = basis.len();
    let n = quad_n.max(required_resolution(basis, m));

    let column = |i: usize| -> Result<Vec<f64>, SensorError> {
        let interp = interpolate_mode(&basis.modes[i], grid);
        let samples = FieldSamples::tabulate(3, n, |x| interp.field.evaluate(x));
        Ok(encode_field(&samples, basis, m)?.values)
    };
    #[cfg(feature = "parallel")]
    let cols: Vec<Vec<f64>> = (0..d).into_par_iter().map(column).collect::<Result<_, _>>()?;
    #[cfg(not(feature = "parallel"))]
    let cols: Vec<Vec<f64>> = (0..d).map(column).collect::<Result<_, _>>()?;

    let mut g = vec![0.0f64; m * d];
    for (i, col) in cols.iter().enumerate() {
        for j in 0..m {
            g[j * d + i] = col[j];
        }
    }
    Ok(g)
}

fn matvec(g: &[f64], a: &[f64], m: usize) -> Vec<f64> {
    let d = a.len();
    debug_assert_eq!(g.len(), m * d);
    (0..m)
        .map(|j| g[j * d..j * d + d].iter().zip(a).map(|(x, y)| x * y).sum())
        .collect()
}

/// Configuration of the depth-2 sensor pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Depth2Config {
    /// Leading coefficient count the network consumes.
    pub d: usize,
    /// Hidden width of the single hidden layer; must be >= 1.
    pub width: usize,
    /// Sensor points per axis.
    pub grid_n: usize,
    /// Quadrature resolution for projecting reconstructions (0 = floor).
    pub quad_n: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub radius: f64,
    pub seed: u64,
    pub t_star: f64,
    pub d_y: usize,
    pub train: TrainConfig,
}

/// Measured errors of the depth-2 pipeline, all sup-norms over the test
/// draws of Euclidean code distances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Depth2Report {
    pub n_train: usize,
    pub n_test: usize,
    pub grid_points_per_axis: usize,
    pub sensor_count: usize,
    /// Sup over test draws of |network(a) - exact target|.
    pub total_error: f64,
    /// Sup over test draws of |reconstructed target - exact target|.
    pub interpolation_contribution: f64,
    /// Sup over test draws of |network(a) - reconstructed target|.
    pub network_contribution: f64,
    /// Triangle inequality: total <= interpolation + network.
    pub decomposition_ok: bool,
    pub t_m_continuity: f64,
    pub final_train_loss: f64,
}

/// Train a depth-2 (single hidden layer) network on sensor-reconstructed
/// targets and score it against exact-data references.
///
/// Training inputs are leading coefficient draws `a`; training targets are
/// encoded solutions of trajectories started from the sensor
/// reconstruction of `a` (initial data `G a`). Test scoring solves every
/// held-out draw twice, from exact and from reconstructed initial data,
/// splitting the error into its interpolation and network parts.
pub fn depth2_pipeline(
    basis: &BasisSet,
    tensor: &StructureTensor,
    solver_cfg: &SolverConfig,
    cfg: &Depth2Config,
) -> Result<(MlpParams, Depth2Report), SensorError> {
    if cfg.width == 0 {
        return Err(SensorError::InvalidConfig(
            "depth-2 network needs a positive hidden width".into(),
        ));
    }
    if cfg.n_train == 0 || cfg.n_test == 0 {
        return Err(SensorError::InvalidConfig(
            "depth-2 pipeline needs nonempty train and test sets".into(),
        ));
    }
    let m = basis.len();
    if cfg.d == 0 || cfg.d > m || cfg.d_y == 0 || cfg.d_y > m {
        return Err(SensorError::InvalidConfig(format!(
            "code widths d={}, d_y={} must fit the basis of {m}",
            cfg.d, cfg.d_y
        )));
    }
    let grid = SensorGrid::new(cfg.grid_n)?;
    let g = interpolation_matrix(basis, cfg.d, grid, cfg.quad_n)?;

    let spec = SampleSpec {
        dim: 3,
        radius: cfg.radius,
        active_modes: cfg.d,
        distribution: Distribution::UniformBox,
        seed: cfg.seed,
    };

    // Solve one draw from reconstructed and (for tests) exact initial data.
    let solve_to_code = |coeffs: Vec<f64>, record: usize| -> Result<Vec<f64>, SensorError> {
        let traj = dataset::solve_with_retries(
            &GalerkinState { t: 0.0, coeffs },
            solver_cfg,
            tensor,
            basis,
            record,
        )?;
        Ok(encode_y(&traj, cfg.t_star, cfg.d_y)?.values)
    };

    let train_row = |i: usize| -> Result<(Vec<f64>, Vec<f64>), SensorError> {
        let a = dataset::sample_initial(&spec, i as u64);
        let target = solve_to_code(matvec(&g, &a, m), i)?;
        Ok((a, target))
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.n_train)
        .into_par_iter()
        .map(train_row)
        .collect::<Result<_, _>>()?;
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<(Vec<f64>, Vec<f64>)> =
        (0..cfg.n_train).map(train_row).collect::<Result<_, _>>()?;

    let mut inputs = Vec::with_capacity(cfg.n_train * cfg.d);
    let mut targets = Vec::with_capacity(cfg.n_train * cfg.d_y);
    for (a, y) in rows {
        inputs.extend_from_slice(&a);
        targets.extend_from_slice(&y);
    }

    let arch = MlpArchitecture {
        input_dim: cfg.d,
        output_dim: cfg.d_y,
        hidden: vec![cfg.width],
        clamp: cfg.radius / (cfg.d as f64).sqrt(),
    };
    let (params, history) = mlp::train(&inputs, &targets, &arch, &cfg.train)?;
    let final_train_loss = *history.train_loss.last().unwrap();

    // Held-out draws: indices beyond the training range are fresh records
    // under the per-record seeding scheme.
    let test_row = |j: usize| -> Result<(f64, f64, f64), SensorError> {
        let idx = cfg.n_train + j;
        let a = dataset::sample_initial(&spec, idx as u64);
        let mut exact_init = vec![0.0; m];
        exact_init[..cfg.d].copy_from_slice(&a);
        let y_exact = solve_to_code(exact_init, idx)?;
        let y_interp = solve_to_code(matvec(&g, &a, m), idx)?;
        let pred = params.forward(&a);
        let dist = |p: &[f64], q: &[f64]| -> f64 {
            p.iter()
                .zip(q)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        Ok((
            dist(&pred, &y_exact),
            dist(&y_interp, &y_exact),
            dist(&pred, &y_interp),
        ))
    };
    #[cfg(feature = "parallel")]
    let test_rows: Vec<(f64, f64, f64)> = (0..cfg.n_test)
        .into_par_iter()
        .map(test_row)
        .collect::<Result<_, _>>()?;
    #[cfg(not(feature = "parallel"))]
    let test_rows: Vec<(f64, f64, f64)> =
        (0..cfg.n_test).map(test_row).collect::<Result<_, _>>()?;

    let total_error = test_rows.iter().map(|r| r.0).fold(0.0f64, f64::max);
    let interpolation_contribution = test_rows.iter().map(|r| r.1).fold(0.0f64, f64::max);
    let network_contribution = test_rows.iter().map(|r| r.2).fold(0.0f64, f64::max);
    let decomposition_ok =
        total_error <= interpolation_contribution + network_contribution + 1e-12;

    let probe_n = 2 * cfg.grid_n + 1;
    let report = Depth2Report {
        n_train: cfg.n_train,
        n_test: cfg.n_test,
        grid_points_per_axis: cfg.grid_n,
        sensor_count: grid.sensor_count(),
        total_error,
        interpolation_contribution,
        network_contribution,
        decomposition_ok,
        t_m_continuity: t_m_continuity(basis, cfg.d, grid, probe_n),
        final_train_loss,
    };
    Ok((params, report))
}
