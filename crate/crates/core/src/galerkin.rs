//! Galerkin ODE system for the spectral coefficients and its RK4 integrator.
//!
//! With the basis orthonormal and the nonlinearity reduced to the structure
//! tensor, the truncated dynamics read
//!
//! ```text
//! d/dt d_k = -nu * lambda_k * d_k - sum_{j,l} d_j d_l T[j,l,k]
//! ```
//!
//! The march is classical explicit RK4 on a uniform step: the requested `dt`
//! is rounded to an integer number of steps covering `[0, t_final]` exactly,
//! so the final snapshot lands on `t_final` itself. Energy `E = 0.5*|d|^2`
//! and dissipation `D = sum lambda_k d_k^2` are recorded per snapshot; the
//! skew symmetry of the tensor keeps the nonlinear term energy-neutral, so
//! every trajectory dissipates monotonically up to time-discretization
//! error.

use crate::basis::BasisSet;
use crate::tensor::StructureTensor;
use serde::{Deserialize, Serialize};
use std::io::{self, Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("coefficient vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("state became non-finite at step {step}")]
    Unstable { step: usize },
    #[error("trajectory i/o: {0}")]
    Io(#[from] io::Error),
    #[error("trajectory file is not in NSTRJ1 format")]
    BadMagic,
    #[error("trajectory file truncated")]
    Truncated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinState {
    pub t: f64,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_stride: usize,
    /// Reject configurations with `dt > 0.5 / (nu * lambda_max)`.
    pub stability_guard: bool,
}

impl SolverConfig {
    pub fn validate(&self, lambda_max: f64) -> Result<(), SolverError> {
        if !self.nu.is_finite() || self.nu <= 0.0 {
            return Err(SolverError::InvalidConfig(format!(
                "viscosity must be positive and finite, got {}",
                self.nu
            )));
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(SolverError::InvalidConfig(format!(
                "time step must be positive and finite, got {}",
                self.dt
            )));
        }
        if !self.t_final.is_finite() || self.t_final <= 0.0 || self.dt > self.t_final {
            return Err(SolverError::InvalidConfig(format!(
                "need 0 < dt <= t_final, got dt={} t_final={}",
                self.dt, self.t_final
            )));
        }
        if self.snapshot_stride == 0 {
            return Err(SolverError::InvalidConfig(
                "snapshot stride must be at least 1".into(),
            ));
        }
        if self.stability_guard {
            let cap = 0.5 / (self.nu * lambda_max);
            if self.dt > cap {
                return Err(SolverError::InvalidConfig(format!(
                    "dt={} exceeds the stability cap {:.6e} = 0.5/(nu*lambda_max)",
                    self.dt, cap
                )));
            }
        }
        Ok(())
    }
}

/// Identifies the basis a trajectory was generated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisId {
    pub dim: usize,
    pub m: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub basis_id: BasisId,
    /// Snapshot times, strictly increasing, starting at 0 and ending at
    /// `t_final`.
    pub times: Vec<f64>,
    /// One coefficient vector per snapshot time.
    pub snapshots: Vec<Vec<f64>>,
    /// `0.5 * |d|^2` per snapshot.
    pub energy_series: Vec<f64>,
    /// `sum lambda_k d_k^2` per snapshot.
    pub dissipation_series: Vec<f64>,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.snapshots.last().expect("trajectory has at least the initial snapshot")
    }

    pub fn t_final(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

/// Right-hand side of the coefficient ODE.
pub fn rhs(
    coeffs: &[f64],
    tensor: &StructureTensor,
    eigenvalues: &[f64],
    nu: f64,
) -> Result<Vec<f64>, SolverError> {
    if coeffs.len() != tensor.m() {
        return Err(SolverError::DimensionMismatch {
            expected: tensor.m(),
            got: coeffs.len(),
        });
    }
    let mut out: Vec<f64> = coeffs
        .iter()
        .zip(eigenvalues)
        .map(|(d, lambda)| -nu * lambda * d)
        .collect();
    tensor.accumulate_nonlinear(coeffs, &mut out);
    Ok(out)
}

fn rhs_into(coeffs: &[f64], tensor: &StructureTensor, eigenvalues: &[f64], nu: f64, out: &mut [f64]) {
    for ((o, d), lambda) in out.iter_mut().zip(coeffs).zip(eigenvalues) {
        *o = -nu * lambda * d;
    }
    tensor.accumulate_nonlinear(coeffs, out);
}

fn energy(d: &[f64]) -> f64 {
    0.5 * d.iter().map(|c| c * c).sum::<f64>()
}

fn dissipation(d: &[f64], eigenvalues: &[f64]) -> f64 {
    d.iter().zip(eigenvalues).map(|(c, l)| l * c * c).sum()
}

/// Truncate a coefficient vector over a larger basis to Galerkin order `m`.
pub fn project_initial(full_coeffs: &[f64], m: usize) -> GalerkinState {
    assert!(m <= full_coeffs.len(), "projection order exceeds coefficient length");
    GalerkinState {
        t: 0.0,
        coeffs: full_coeffs[..m].to_vec(),
    }
}

/// March the Galerkin system from `initial` to `t_final` with classical RK4.
pub fn integrate(
    initial: &GalerkinState,
    cfg: &SolverConfig,
    tensor: &StructureTensor,
    basis: &BasisSet,
) -> Result<Trajectory, SolverError> {
    let m = basis.len();
    if initial.coeffs.len() != m {
        return Err(SolverError::DimensionMismatch {
            expected: m,
            got: initial.coeffs.len(),
        });
    }
    if tensor.m() != m {
        return Err(SolverError::DimensionMismatch {
            expected: m,
            got: tensor.m(),
        });
    }
    let eigenvalues = basis.eigenvalues();
    let lambda_max = eigenvalues.iter().cloned().fold(0.0, f64::max);
    cfg.validate(lambda_max)?;

    let n_steps = (cfg.t_final / cfg.dt).round().max(1.0) as usize;
    let h = cfg.t_final / n_steps as f64;

    let mut d = initial.coeffs.clone();
    let mut times = Vec::new();
    let mut snapshots = Vec::new();
    let mut energy_series = Vec::new();
    let mut dissipation_series = Vec::new();

    let record = |step: usize, d: &[f64], times: &mut Vec<f64>, snaps: &mut Vec<Vec<f64>>, es: &mut Vec<f64>, ds: &mut Vec<f64>| {
        times.push(step as f64 * h);
        snaps.push(d.to_vec());
        es.push(energy(d));
        ds.push(dissipation(d, &eigenvalues));
    };

    record(0, &d, &mut times, &mut snapshots, &mut energy_series, &mut dissipation_series);

    let mut k1 = vec![0.0; m];
    let mut k2 = vec![0.0; m];
    let mut k3 = vec![0.0; m];
    let mut k4 = vec![0.0; m];
    let mut stage = vec![0.0; m];

    for step in 1..=n_steps {
        rhs_into(&d, tensor, &eigenvalues, cfg.nu, &mut k1);
        for i in 0..m {
            stage[i] = d[i] + 0.5 * h * k1[i];
        }
        rhs_into(&stage, tensor, &eigenvalues, cfg.nu, &mut k2);
        for i in 0..m {
            stage[i] = d[i] + 0.5 * h * k2[i];
        }
        rhs_into(&stage, tensor, &eigenvalues, cfg.nu, &mut k3);
        for i in 0..m {
            stage[i] = d[i] + h * k3[i];
        }
        rhs_into(&stage, tensor, &eigenvalues, cfg.nu, &mut k4);
        for i in 0..m {
            d[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }

        if d.iter().any(|c| !c.is_finite()) {
            return Err(SolverError::Unstable { step });
        }
        if step % cfg.snapshot_stride == 0 || step == n_steps {
            record(step, &d, &mut times, &mut snapshots, &mut energy_series, &mut dissipation_series);
        }
    }

    Ok(Trajectory {
        basis_id: BasisId { dim: basis.dim, m },
        times,
        snapshots,
        energy_series,
        dissipation_series,
    })
}

const TRAJECTORY_MAGIC: &[u8; 6] = b"NSTRJ1";

/// Serialize a trajectory: magic `NSTRJ1`, u32 mode count, u32 snapshot
/// count, the times array, then the row-major snapshot matrix, all
/// little-endian IEEE-754.
pub fn write_trajectory<W: Write>(traj: &Trajectory, mut out: W) -> Result<(), SolverError> {
    out.write_all(TRAJECTORY_MAGIC)?;
    out.write_all(&(traj.basis_id.m as u32).to_le_bytes())?;
    out.write_all(&(traj.snapshots.len() as u32).to_le_bytes())?;
    for t in &traj.times {
        out.write_all(&t.to_le_bytes())?;
    }
    for snap in &traj.snapshots {
        for c in snap {
            out.write_all(&c.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read back a trajectory written by [`write_trajectory`].
///
/// The on-disk format does not carry the spatial dimension or the
/// energy series; the caller supplies `dim` (from the JSON sidecar) and the
/// diagnostics are recomputed from the snapshots via `eigenvalues`.
pub fn read_trajectory<R: Read>(
    mut input: R,
    dim: usize,
    eigenvalues: &[f64],
) -> Result<Trajectory, SolverError> {
    let mut magic = [0u8; 6];
    read_exact_or_truncated(&mut input, &mut magic)?;
    if &magic != TRAJECTORY_MAGIC {
        return Err(SolverError::BadMagic);
    }
    let mut word = [0u8; 4];
    read_exact_or_truncated(&mut input, &mut word)?;
    let m = u32::from_le_bytes(word) as usize;
    read_exact_or_truncated(&mut input, &mut word)?;
    let n_snapshots = u32::from_le_bytes(word) as usize;
    if eigenvalues.len() != m {
        return Err(SolverError::DimensionMismatch {
            expected: m,
            got: eigenvalues.len(),
        });
    }

    let mut times = Vec::with_capacity(n_snapshots);
    let mut buf = [0u8; 8];
    for _ in 0..n_snapshots {
        read_exact_or_truncated(&mut input, &mut buf)?;
        times.push(f64::from_le_bytes(buf));
    }
    let mut snapshots = Vec::with_capacity(n_snapshots);
    for _ in 0..n_snapshots {
        let mut snap = Vec::with_capacity(m);
        for _ in 0..m {
            read_exact_or_truncated(&mut input, &mut buf)?;
            snap.push(f64::from_le_bytes(buf));
        }
        snapshots.push(snap);
    }
    let energy_series = snapshots.iter().map(|s| energy(s)).collect();
    let dissipation_series = snapshots.iter().map(|s| dissipation(s, eigenvalues)).collect();
    Ok(Trajectory {
        basis_id: BasisId { dim, m },
        times,
        snapshots,
        energy_series,
        dissipation_series,
    })
}

fn read_exact_or_truncated<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<(), SolverError> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            SolverError::Truncated
        } else {
            SolverError::Io(e)
        }
    })
}
