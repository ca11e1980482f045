//! Encoders and decoders between velocity fields and their leading
//! eigenbasis coefficients.
//!
//! On the input side `encode_h` truncates a coefficient expansion to its
//! first `d_h` entries and `decode_h` rebuilds the field `sum a_i w_i`;
//! together they realize an orthogonal projection, so both maps are
//! 1-Lipschitz and their composition in code space is the exact identity.
//! `encode_field` recovers the same inner products from grid samples by
//! periodic-trapezoid quadrature, which is exact for band-limited fields as
//! long as the grid resolves twice the highest retained frequency. On the
//! output side `encode_y` reads a trajectory at one evaluation time
//! (linearly interpolated between snapshots) and truncates to `d_y`
//! coefficients.

use crate::basis::BasisSet;
use crate::galerkin::Trajectory;
use crate::quad::Grid;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("grid has {got} points per axis but the first {modes} modes need at least {required}")]
    UnderResolved {
        got: usize,
        required: usize,
        modes: usize,
    },
    #[error("sample buffer holds {got} values, expected {expected}")]
    SampleCountMismatch { expected: usize, got: usize },
    #[error("evaluation time {t_star} lies outside the trajectory span [{lo}, {hi}]")]
    TimeOutOfSpan { t_star: f64, lo: f64, hi: f64 },
    #[error("requested {requested} output coefficients but the trajectory has {available}")]
    CodeTooWide { requested: usize, available: usize },
}

/// First `d_h` coefficients of an encoded input field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputCode {
    pub values: Vec<f64>,
}

/// Truncated solution coefficients at the fixed evaluation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputCode {
    pub values: Vec<f64>,
    pub eval_time: f64,
}

/// Truncate a coefficient expansion to its first `d_h` inner products.
pub fn encode_h(coeffs: &[f64], d_h: usize) -> InputCode {
    assert!(d_h <= coeffs.len(), "encode_h needs at least d_h coefficients");
    InputCode {
        values: coeffs[..d_h].to_vec(),
    }
}

/// The field `sum a_i w_i`: a coefficient vector padded to basis length
/// plus pointwise evaluation.
#[derive(Debug, Clone)]
pub struct DecodedField<'a> {
    basis: &'a BasisSet,
    coeffs: Vec<f64>,
}

impl<'a> DecodedField<'a> {
    /// Coefficients over the full basis (zero beyond the code length).
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn evaluate(&self, x: &[f64]) -> [f64; 3] {
        self.basis.evaluate_sum(&self.coeffs, x)
    }
}

/// Rebuild the velocity field of a code.
pub fn decode_h<'a>(code: &InputCode, basis: &'a BasisSet) -> DecodedField<'a> {
    assert!(
        code.values.len() <= basis.len(),
        "code is longer than the basis"
    );
    let mut coeffs = vec![0.0; basis.len()];
    coeffs[..code.values.len()].copy_from_slice(&code.values);
    DecodedField { basis, coeffs }
}

/// Velocity samples on a uniform periodic grid, row-major with the last
/// axis fastest, matching [`Grid`] indexing.
#[derive(Debug, Clone)]
pub struct FieldSamples {
    pub grid: Grid,
    pub values: Vec<[f64; 3]>,
}

impl FieldSamples {
    /// Tabulate a field on an `n`-per-axis periodic grid.
    pub fn tabulate<F: Fn(&[f64; 3]) -> [f64; 3]>(dim: usize, n: usize, f: F) -> FieldSamples {
        let grid = Grid::new(dim, n);
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        FieldSamples { grid, values }
    }
}

/// Smallest per-axis resolution that integrates products against the first
/// `count` modes exactly: `2 * max|k| + 1`.
pub fn required_resolution(basis: &BasisSet, count: usize) -> usize {
    (2 * basis.max_abs_component(count) + 1) as usize
}

/// Quadrature approximation of the first `d_h` inner products of a sampled
/// field; exact below the Nyquist limit of the sample grid.
pub fn encode_field(
    samples: &FieldSamples,
    basis: &BasisSet,
    d_h: usize,
) -> Result<InputCode, CodecError> {
    assert!(d_h <= basis.len(), "encode_field needs d_h within the basis");
    if samples.values.len() != samples.grid.len() {
        return Err(CodecError::SampleCountMismatch {
            expected: samples.grid.len(),
            got: samples.values.len(),
        });
    }
    let required = required_resolution(basis, d_h);
    if samples.grid.points_per_axis() < required {
        return Err(CodecError::UnderResolved {
            got: samples.grid.points_per_axis(),
            required,
            modes: d_h,
        });
    }
    let weight = samples.grid.weight();
    let mut values = Vec::with_capacity(d_h);
    for mode in &basis.modes[..d_h] {
        let mut acc = 0.0;
        for (flat, v) in samples.values.iter().enumerate() {
            let w = mode.evaluate(&samples.grid.point(flat));
            acc += v[0] * w[0] + v[1] * w[1] + v[2] * w[2];
        }
        values.push(acc * weight);
    }
    Ok(InputCode { values })
}

/// Trajectory coefficients at `t_star`, linearly interpolated between
/// snapshots and truncated to `d_y` entries.
pub fn encode_y(traj: &Trajectory, t_star: f64, d_y: usize) -> Result<OutputCode, CodecError> {
    let lo = *traj.times.first().unwrap();
    let hi = *traj.times.last().unwrap();
    if !(t_star >= lo && t_star <= hi) {
        return Err(CodecError::TimeOutOfSpan { t_star, lo, hi });
    }
    if d_y > traj.basis_id.m {
        return Err(CodecError::CodeTooWide {
            requested: d_y,
            available: traj.basis_id.m,
        });
    }
    // partition_point finds the first snapshot time >= t_star.
    let hi_idx = traj.times.partition_point(|&t| t < t_star).min(traj.times.len() - 1);
    let values = if traj.times[hi_idx] == t_star || hi_idx == 0 {
        traj.snapshots[hi_idx][..d_y].to_vec()
    } else {
        let lo_idx = hi_idx - 1;
        let span = traj.times[hi_idx] - traj.times[lo_idx];
        let theta = (t_star - traj.times[lo_idx]) / span;
        (0..d_y)
            .map(|i| {
                (1.0 - theta) * traj.snapshots[lo_idx][i] + theta * traj.snapshots[hi_idx][i]
            })
            .collect()
    };
    Ok(OutputCode {
        values,
        eval_time: t_star,
    })
}

/// Tail energy beyond the first `d_h` coefficients, `|x - Pi_{d_h} x|^2`.
pub fn projection_error(coeffs: &[f64], d_h: usize) -> f64 {
    if d_h >= coeffs.len() {
        return 0.0;
    }
    coeffs[d_h..].iter().map(|c| c * c).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis;
    use crate::galerkin::{integrate, GalerkinState, SolverConfig};
    use crate::tensor::assemble_structure_tensor;

    #[test]
    fn encode_h_truncates() {
        let code = encode_h(&[1.0, 2.0, 3.0], 2);
        assert_eq!(code.values, vec![1.0, 2.0]);
        let zero = encode_h(&[0.0; 5], 3);
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decode_then_encode_field_is_identity() {
        let basis = build_basis(2, 10).unwrap();
        let code = InputCode {
            values: vec![0.3, -1.2, 0.0, 0.5, 2.0, -0.7, 0.1, 0.0, 0.9, -0.4],
        };
        let field = decode_h(&code, &basis);
        let n = required_resolution(&basis, 10);
        let samples = FieldSamples::tabulate(2, n, |x| field.evaluate(x));
        let back = encode_field(&samples, &basis, 10).unwrap();
        for (a, b) in code.values.iter().zip(&back.values) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn single_mode_samples_encode_to_unit_vector() {
        let basis = build_basis(3, 8).unwrap();
        let n = required_resolution(&basis, 8);
        let target = &basis.modes[2];
        let samples = FieldSamples::tabulate(3, n, |x| target.evaluate(x));
        let code = encode_field(&samples, &basis, 8).unwrap();
        for (i, v) in code.values.iter().enumerate() {
            let expected = if i == 2 { 1.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-10, "slot {i}: {v}");
        }
    }

    #[test]
    fn under_resolved_grid_is_rejected_with_requirement() {
        let basis = build_basis(2, 20).unwrap();
        let n_needed = required_resolution(&basis, 20);
        let samples = FieldSamples::tabulate(2, n_needed - 1, |_| [0.0; 3]);
        let err = encode_field(&samples, &basis, 20).unwrap_err();
        match err {
            CodecError::UnderResolved { required, .. } => assert_eq!(required, n_needed),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn encode_y_interpolates_single_mode_decay() {
        let basis = build_basis(2, 4).unwrap();
        let tensor = assemble_structure_tensor(&basis);
        let state = GalerkinState { t: 0.0, coeffs: vec![0.8, 0.0, 0.0, 0.0] };
        let cfg = SolverConfig {
            nu: 0.2,
            dt: 1e-3,
            t_final: 1.0,
            snapshot_stride: 10,
            stability_guard: true,
        };
        let traj = integrate(&state, &cfg, &tensor, &basis).unwrap();

        // At a snapshot time the code is the exact stored snapshot.
        let at_snap = encode_y(&traj, traj.times[3], 4).unwrap();
        assert_eq!(at_snap.values, traj.snapshots[3][..4].to_vec());

        // Between snapshots the linear interpolant tracks the exact decay
        // to interpolation accuracy.
        let t_star = 0.505;
        let code = encode_y(&traj, t_star, 4).unwrap();
        let exact = 0.8 * (-0.2 * t_star).exp();
        assert!((code.values[0] - exact).abs() < 1e-6);

        assert!(encode_y(&traj, 1.5, 4).is_err());
        assert!(encode_y(&traj, 1.0, 5).is_err());
    }

    #[test]
    fn projection_error_examples() {
        assert_eq!(projection_error(&[1.0, 2.0, 3.0], 3), 0.0);
        let mut x = vec![0.0; 6];
        x[4] = 1.0;
        assert_eq!(projection_error(&x, 4), 1.0);
        // Monotone non-increasing in d_h.
        let y = [0.5, -1.0, 2.0, 0.25, -0.125];
        let mut prev = f64::INFINITY;
        for d_h in 0..=5 {
            let e = projection_error(&y, d_h);
            assert!(e <= prev);
            prev = e;
        }
    }
}
