//! Divergence-free trigonometric eigenbasis of the Stokes operator on the
//! torus `[-pi, pi]^d`, `d` in {2, 3}.
//!
//! Every mode has the form `w(x) = A * beta * trig(k . x)` with an integer
//! wave vector `k`, a unit polarization `beta` orthogonal to `k`, and the
//! amplitude `A = sqrt(2 / (2*pi)^d)` that makes the family orthonormal in
//! `L^2`. Because `cos(-k.x) = cos(k.x)` and `sin(-k.x) = -sin(k.x)`, the
//! lattice is deduplicated to a canonical half: the first nonzero component
//! of `k` is kept positive.
//!
//! Polarizations are built from integer vectors and normalized last, so
//! `beta . k = 0` holds exactly in integer arithmetic, which in turn makes
//! every mode divergence-free by construction rather than to tolerance.

use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BasisError {
    #[error("wave vector must be nonzero")]
    ZeroWaveVector,
    #[error("spatial dimension must be 2 or 3, got {0}")]
    InvalidDimension(usize),
    #[error("mode count must be at least 1")]
    EmptyBasis,
}

/// Canonical nonzero lattice vector; the third component is 0 in 2D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WaveVector {
    comps: [i64; 3],
}

/// Reduce `k` to the canonical representative of `{k, -k}`.
pub fn canonicalize(k: &[i64]) -> Result<WaveVector, BasisError> {
    assert!(k.len() == 2 || k.len() == 3, "wave vector must have 2 or 3 components");
    let mut comps = [0i64; 3];
    comps[..k.len()].copy_from_slice(k);
    let first_nonzero = comps.iter().find(|&&c| c != 0).copied();
    match first_nonzero {
        None => Err(BasisError::ZeroWaveVector),
        Some(c) if c < 0 => {
            for comp in &mut comps {
                *comp = -*comp;
            }
            Ok(WaveVector { comps })
        }
        Some(_) => Ok(WaveVector { comps }),
    }
}

impl WaveVector {
    pub fn components(&self) -> [i64; 3] {
        self.comps
    }

    /// Squared Euclidean norm `|k|^2`, the Stokes eigenvalue of the mode.
    pub fn norm_sq(&self) -> i64 {
        self.comps.iter().map(|c| c * c).sum()
    }

    pub fn max_abs_component(&self) -> i64 {
        self.comps.iter().map(|c| c.abs()).max().unwrap()
    }
}

fn cross(a: [i64; 3], b: [i64; 3]) -> [i64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot_i64(a: [i64; 3], b: [i64; 3]) -> i64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Integer polarization vectors orthogonal to `k`: one in 2D, two in 3D.
///
/// 2D: the rotation `(-k2, k1)`. 3D: pick the standard axis least aligned
/// with `k` (smallest |component|, lowest index on ties), then
/// `b1 = k x axis` and `b2 = k x b1`. All outputs are integer vectors;
/// callers normalize. Orthogonality among `k`, `b1`, `b2` is exact.
fn integer_polarizations(k: &WaveVector, dim: usize) -> Vec<[i64; 3]> {
    let c = k.comps;
    if dim == 2 {
        vec![[-c[1], c[0], 0]]
    } else {
        let mut axis_idx = 0;
        for i in 1..3 {
            if c[i].abs() < c[axis_idx].abs() {
                axis_idx = i;
            }
        }
        let mut axis = [0i64; 3];
        axis[axis_idx] = 1;
        let b1 = cross(c, axis);
        let b2 = cross(c, b1);
        vec![b1, b2]
    }
}

/// Unit polarization vectors for a canonical wave vector.
pub fn polarizations(k: &WaveVector, dim: usize) -> Vec<[f64; 3]> {
    integer_polarizations(k, dim)
        .into_iter()
        .map(|b| {
            let norm = (dot_i64(b, b) as f64).sqrt();
            [b[0] as f64 / norm, b[1] as f64 / norm, b[2] as f64 / norm]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trig {
    Cos,
    Sin,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisMode {
    /// 1-based position after sorting.
    pub ordinal: usize,
    pub wave: WaveVector,
    pub trig: Trig,
    /// Unit polarization; third component 0 in 2D.
    pub polarization: [f64; 3],
    /// Which of the (d-1) polarizations of `wave` this is.
    pub pol_index: u8,
    /// Integer polarization before normalization; exact dot products with
    /// wave vectors and other polarizations go through this field.
    pub polarization_int: [i64; 3],
    /// `sqrt(2 / (2*pi)^d)`.
    pub amplitude: f64,
    /// `|k|^2`, an exact integer.
    pub eigenvalue: f64,
}

impl BasisMode {
    fn phase(&self, x: &[f64]) -> f64 {
        let k = self.wave.comps;
        let mut p = k[0] as f64 * x[0] + k[1] as f64 * x[1];
        if x.len() > 2 {
            p += k[2] as f64 * x[2];
        }
        p
    }

    fn trig_at(&self, phase: f64) -> f64 {
        match self.trig {
            Trig::Cos => phase.cos(),
            Trig::Sin => phase.sin(),
        }
    }

    /// Derivative of the trig factor with respect to its scalar argument.
    fn trig_prime_at(&self, phase: f64) -> f64 {
        match self.trig {
            Trig::Cos => -phase.sin(),
            Trig::Sin => phase.cos(),
        }
    }

    /// Velocity of the mode at `x`; periodic outside the fundamental box.
    pub fn evaluate(&self, x: &[f64]) -> [f64; 3] {
        let s = self.amplitude * self.trig_at(self.phase(x));
        [
            s * self.polarization[0],
            s * self.polarization[1],
            s * self.polarization[2],
        ]
    }

    /// Jacobian `g[c][i] = d w_c / d x_i` at `x`, computed analytically.
    pub fn gradient(&self, x: &[f64]) -> [[f64; 3]; 3] {
        let dp = self.amplitude * self.trig_prime_at(self.phase(x));
        let k = self.wave.comps;
        let mut g = [[0.0; 3]; 3];
        for (row, &beta) in g.iter_mut().zip(&self.polarization) {
            for (entry, &ki) in row.iter_mut().zip(&k) {
                *entry = dp * beta * ki as f64;
            }
        }
        g
    }

    /// Analytic Laplacian at `x`. Each second derivative multiplies the mode
    /// by `-k_i^2`, so the result is `-(sum k_i^2) * w(x)` with the sum taken
    /// from the wave components, independently of the stored eigenvalue.
    pub fn laplacian(&self, x: &[f64]) -> [f64; 3] {
        let ksq = self.wave.norm_sq() as f64;
        let w = self.evaluate(x);
        [-ksq * w[0], -ksq * w[1], -ksq * w[2]]
    }

    /// Analytic divergence at `x`; identically zero because `beta . k = 0`.
    pub fn divergence(&self, x: &[f64]) -> f64 {
        let bk = self.polarization[0] * self.wave.comps[0] as f64
            + self.polarization[1] * self.wave.comps[1] as f64
            + self.polarization[2] * self.wave.comps[2] as f64;
        self.amplitude * bk * self.trig_prime_at(self.phase(x))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisSet {
    pub dim: usize,
    pub modes: Vec<BasisMode>,
    /// Suggested quadrature resolution per axis: `2*max|k| + 1`, the
    /// smallest grid on which pairwise mode products integrate exactly.
    pub grid_hint: usize,
}

/// First `m` modes ordered by eigenvalue; ties are broken by descending
/// lexicographic canonical wave vector, then Cos before Sin, then
/// polarization index, so two builds with the same `(dim, m)` agree bitwise.
pub fn build_basis(dim: usize, m: usize) -> Result<BasisSet, BasisError> {
    if dim != 2 && dim != 3 {
        return Err(BasisError::InvalidDimension(dim));
    }
    if m == 0 {
        return Err(BasisError::EmptyBasis);
    }

    let modes_per_wave = 2 * (dim - 1);
    let mut lambda_cap = 4i64;
    let waves = loop {
        let waves = canonical_waves_up_to(dim, lambda_cap);
        if waves.len() * modes_per_wave >= m {
            break waves;
        }
        lambda_cap *= 2;
    };

    let amplitude = (2.0 / (2.0 * std::f64::consts::PI).powi(dim as i32)).sqrt();
    let mut modes = Vec::with_capacity(waves.len() * modes_per_wave);
    for wave in waves {
        let ints = integer_polarizations(&wave, dim);
        for trig in [Trig::Cos, Trig::Sin] {
            for (pol_index, b_int) in ints.iter().enumerate() {
                // beta . k = 0 must hold in exact integer arithmetic; a
                // failure here is a construction bug, not a data error.
                assert_eq!(dot_i64(*b_int, wave.comps), 0);
                let norm = (dot_i64(*b_int, *b_int) as f64).sqrt();
                let polarization = [
                    b_int[0] as f64 / norm,
                    b_int[1] as f64 / norm,
                    b_int[2] as f64 / norm,
                ];
                modes.push(BasisMode {
                    ordinal: 0,
                    wave,
                    trig,
                    polarization,
                    pol_index: pol_index as u8,
                    polarization_int: *b_int,
                    amplitude,
                    eigenvalue: wave.norm_sq() as f64,
                });
            }
        }
    }

    modes.sort_by_key(|md| {
        (
            md.wave.norm_sq(),
            Reverse(md.wave.comps),
            md.trig,
            md.pol_index,
        )
    });
    modes.truncate(m);
    for (i, md) in modes.iter_mut().enumerate() {
        md.ordinal = i + 1;
    }

    let max_abs = modes
        .iter()
        .map(|md| md.wave.max_abs_component())
        .max()
        .unwrap();
    Ok(BasisSet {
        dim,
        modes,
        grid_hint: (2 * max_abs + 1) as usize,
    })
}

fn canonical_waves_up_to(dim: usize, lambda_cap: i64) -> Vec<WaveVector> {
    let reach = (lambda_cap as f64).sqrt() as i64 + 1;
    let mut out = Vec::new();
    let third_range = if dim == 3 { -reach..=reach } else { 0..=0 };
    for k1 in 0..=reach {
        for k2 in -reach..=reach {
            for k3 in third_range.clone() {
                let comps = [k1, k2, k3];
                if comps == [0, 0, 0] {
                    continue;
                }
                let nsq = comps.iter().map(|c| c * c).sum::<i64>();
                if nsq > lambda_cap {
                    continue;
                }
                // Keep only canonical representatives: first nonzero
                // component positive. k1 = 0 rows need the sign check on k2
                // (and k3), everything with k1 > 0 is already canonical.
                let first = comps.iter().find(|&&c| c != 0).copied().unwrap();
                if first > 0 {
                    out.push(WaveVector { comps });
                }
            }
        }
    }
    out
}

impl BasisSet {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|md| md.eigenvalue).collect()
    }

    /// Largest |k| component among the first `count` modes; `count = 0`
    /// means the whole set.
    pub fn max_abs_component(&self, count: usize) -> i64 {
        let take = if count == 0 { self.modes.len() } else { count.min(self.modes.len()) };
        self.modes[..take]
            .iter()
            .map(|md| md.wave.max_abs_component())
            .max()
            .unwrap_or(0)
    }

    /// Velocity of the coefficient combination `sum_i coeffs[i] * w_i` at `x`.
    pub fn evaluate_sum(&self, coeffs: &[f64], x: &[f64]) -> [f64; 3] {
        assert!(coeffs.len() <= self.modes.len());
        let mut v = [0.0; 3];
        for (c, md) in coeffs.iter().zip(&self.modes) {
            if *c == 0.0 {
                continue;
            }
            let w = md.evaluate(x);
            v[0] += c * w[0];
            v[1] += c * w[1];
            v[2] += c * w[2];
        }
        v
    }

    /// Text manifest, one mode per line: ordinal, wave components, trig tag,
    /// polarization components to 17 significant digits, eigenvalue.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# dim={} modes={}\n", self.dim, self.modes.len()));
        for md in &self.modes {
            let k = md.wave.comps;
            let tag = match md.trig {
                Trig::Cos => "cos",
                Trig::Sin => "sin",
            };
            out.push_str(&format!("{}", md.ordinal));
            for comp in k.iter().take(self.dim) {
                out.push_str(&format!(" {comp}"));
            }
            out.push_str(&format!(" {tag}"));
            for comp in md.polarization.iter().take(self.dim) {
                out.push_str(&format!(" {comp:.16e}"));
            }
            out.push_str(&format!(" {}\n", md.eigenvalue as i64));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalize_flips_sign_examples() {
        assert_eq!(canonicalize(&[-1, 0]).unwrap().components(), [1, 0, 0]);
        assert_eq!(canonicalize(&[0, -3, 2]).unwrap().components(), [0, 3, -2]);
        assert_eq!(canonicalize(&[2, 1]).unwrap().components(), [2, 1, 0]);
        assert_eq!(canonicalize(&[0, 0, 0]), Err(BasisError::ZeroWaveVector));
    }

    #[test]
    fn two_dimensional_first_shell() {
        let basis = build_basis(2, 4).unwrap();
        let waves: Vec<[i64; 3]> = basis.modes.iter().map(|m| m.wave.components()).collect();
        assert_eq!(
            waves,
            vec![[1, 0, 0], [1, 0, 0], [0, 1, 0], [0, 1, 0]],
            "first 2D shell is k=(1,0) then k=(0,1), cos before sin"
        );
        assert!(basis.modes.iter().all(|m| m.eigenvalue == 1.0));
        assert_eq!(basis.modes[0].trig, Trig::Cos);
        assert_eq!(basis.modes[1].trig, Trig::Sin);
    }

    #[test]
    fn three_dimensional_first_shell_order() {
        let basis = build_basis(3, 12).unwrap();
        let waves: Vec<[i64; 3]> = basis.modes.iter().map(|m| m.wave.components()).collect();
        let mut expected = Vec::new();
        for k in [[1, 0, 0], [0, 1, 0], [0, 0, 1]] {
            for _ in 0..4 {
                expected.push(k);
            }
        }
        assert_eq!(waves, expected);
        assert!(basis.modes.iter().all(|m| m.eigenvalue == 1.0));
        // Within one wave vector: cos pol0, cos pol1, sin pol0, sin pol1.
        assert_eq!(basis.modes[0].trig, Trig::Cos);
        assert_eq!(basis.modes[0].pol_index, 0);
        assert_eq!(basis.modes[1].trig, Trig::Cos);
        assert_eq!(basis.modes[1].pol_index, 1);
        assert_eq!(basis.modes[2].trig, Trig::Sin);
        assert_eq!(basis.modes[2].pol_index, 0);
    }

    #[test]
    fn first_eigenvalue_is_one() {
        for dim in [2, 3] {
            let basis = build_basis(dim, 1).unwrap();
            assert_eq!(basis.modes[0].eigenvalue, 1.0);
        }
    }

    #[test]
    fn polarization_examples() {
        let k = canonicalize(&[1, 0]).unwrap();
        let pols = polarizations(&k, 2);
        assert_eq!(pols.len(), 1);
        assert!((pols[0][0] - 0.0).abs() < 1e-15);
        assert!((pols[0][1] - 1.0).abs() < 1e-15);

        let k = canonicalize(&[1, 0, 0]).unwrap();
        let pols = polarizations(&k, 3);
        assert_eq!(pols.len(), 2);
        for p in &pols {
            assert!(p[0].abs() < 1e-15, "polarizations of (1,0,0) live in the y-z plane");
        }

        let k = canonicalize(&[1, 1, 1]).unwrap();
        let pols = polarizations(&k, 3);
        let kf = [1.0, 1.0, 1.0];
        for p in &pols {
            let dk: f64 = (0..3).map(|i| p[i] * kf[i]).sum();
            assert!(dk.abs() < 1e-12);
        }
        let cross_dot: f64 = (0..3).map(|i| pols[0][i] * pols[1][i]).sum();
        assert!(cross_dot.abs() < 1e-12);
    }

    #[test]
    fn evaluate_mode_special_points() {
        let basis = build_basis(2, 4).unwrap();
        let cos10 = &basis.modes[0];
        assert_eq!(cos10.wave.components(), [1, 0, 0]);

        let at_origin = cos10.evaluate(&[0.0, 0.0]);
        for (&v, &beta) in at_origin.iter().zip(&cos10.polarization) {
            assert!((v - cos10.amplitude * beta).abs() < 1e-15);
        }

        let at_quarter = cos10.evaluate(&[std::f64::consts::FRAC_PI_2, 0.0]);
        assert!(at_quarter.iter().all(|v| v.abs() < 1e-15));

        let sin10 = &basis.modes[1];
        let at_origin = sin10.evaluate(&[0.0, 0.0]);
        assert!(at_origin.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn manifest_lists_every_mode_once() {
        let basis = build_basis(3, 10).unwrap();
        let manifest = basis.manifest();
        let mode_lines: Vec<&str> = manifest
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect();
        assert_eq!(mode_lines.len(), 10);
        assert!(mode_lines[0].starts_with("1 1 0 0 cos"));
    }
}
