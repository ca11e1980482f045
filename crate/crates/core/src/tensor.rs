//! Sparse triad tensor `T[j,l,k] = integral of (w_j . grad) w_l . w_k` over
//! the torus, the quadratic nonlinearity of the Galerkin system in spectral
//! form.
//!
//! Entries are assembled analytically. Writing each mode as
//! `A * beta * trig(k . x)` and differentiating, the integrand factors into
//! `A^3 * (beta_j . k_l) * (beta_l . beta_k) * s * Theta_j * Theta_l' * Theta_k`
//! where `Theta_l'` is the trig factor of mode `l` with cos/sin exchanged and
//! `s` is -1 when mode `l` is a cosine (derivative of cos is -sin), +1
//! otherwise. The remaining triple trig integral is evaluated by expanding
//! every factor into complex exponentials: a term survives only when some
//! sign choice closes the triad `e1*k_j + e2*k_l + e3*k_k = 0`, and each
//! surviving term contributes a product of three coefficients of magnitude
//! 1/2. The result is an exact multiple of `(2*pi)^d / 8`.
//!
//! Both dot products in the prefactor are computed on the integer vectors
//! carried by `BasisMode`, so "zero" is decided exactly and no tolerance
//! snapping is involved. After assembly the tensor is symmetrized as
//! `(T[j,l,k] - T[j,k,l]) / 2`, which makes the skew symmetry in the last
//! two slots bitwise exact instead of merely analytic; the shift this
//! applies to any entry is round-off sized.

use crate::basis::{BasisMode, BasisSet, Trig};
use crate::quad::Grid;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorEntry {
    pub j: u32,
    pub l: u32,
    pub k: u32,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct StructureTensor {
    m: usize,
    /// Nonzero entries sorted by (j, l, k).
    entries: Vec<TensorEntry>,
}

impl StructureTensor {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[TensorEntry] {
        &self.entries
    }

    /// Value of `T[j,l,k]`; absent triples are zero.
    pub fn get(&self, j: usize, l: usize, k: usize) -> f64 {
        let key = (j as u32, l as u32, k as u32);
        match self
            .entries
            .binary_search_by_key(&key, |e| (e.j, e.l, e.k))
        {
            Ok(pos) => self.entries[pos].value,
            Err(_) => 0.0,
        }
    }

    /// Accumulate the nonlinear term: `out[k] -= d[j] * d[l] * T[j,l,k]`.
    pub fn accumulate_nonlinear(&self, d: &[f64], out: &mut [f64]) {
        debug_assert_eq!(d.len(), self.m);
        debug_assert_eq!(out.len(), self.m);
        for e in &self.entries {
            out[e.k as usize] -= d[e.j as usize] * d[e.l as usize] * e.value;
        }
    }
}

/// Complex coefficient of `exp(i * sign * theta)` in the expansion of a real
/// trig factor: cos gives 1/2 for both signs, sin gives -i/2 and +i/2.
fn expansion_coef(trig: Trig, sign: i64) -> (f64, f64) {
    match (trig, sign) {
        (Trig::Cos, _) => (0.5, 0.0),
        (Trig::Sin, 1) => (0.0, -0.5),
        (Trig::Sin, _) => (0.0, 0.5),
    }
}

fn flip(trig: Trig) -> Trig {
    match trig {
        Trig::Cos => Trig::Sin,
        Trig::Sin => Trig::Cos,
    }
}

/// Triple trig integral over the torus for factors `t_a(ka.x)`, `t_b(kb.x)`,
/// `t_c(kc.x)`, divided by `(2*pi)^d`. Exact up to one final rounding.
fn triple_trig_integral_normalized(
    t_a: Trig,
    ka: [i64; 3],
    t_b: Trig,
    kb: [i64; 3],
    t_c: Trig,
    kc: [i64; 3],
) -> f64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for ea in [1i64, -1] {
        for eb in [1i64, -1] {
            for ec in [1i64, -1] {
                let closes = (0..3).all(|i| ea * ka[i] + eb * kb[i] + ec * kc[i] == 0);
                if !closes {
                    continue;
                }
                let (ar, ai) = expansion_coef(t_a, ea);
                let (br, bi) = expansion_coef(t_b, eb);
                let (cr, ci) = expansion_coef(t_c, ec);
                let (pr, pi) = (ar * br - ai * bi, ar * bi + ai * br);
                re += pr * cr - pi * ci;
                im += pr * ci + pi * cr;
            }
        }
    }
    // The integral of a real function is real; surviving imaginary parts
    // cancel in conjugate sign pairs.
    debug_assert!(im.abs() < 1e-15);
    re
}

fn dot_i64(a: [i64; 3], b: [i64; 3]) -> i64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn pol_norm(mode: &BasisMode) -> f64 {
    (dot_i64(mode.polarization_int, mode.polarization_int) as f64).sqrt()
}

fn raw_entry(mj: &BasisMode, ml: &BasisMode, mk: &BasisMode, volume: f64) -> f64 {
    let adv = dot_i64(mj.polarization_int, ml.wave.components());
    if adv == 0 {
        return 0.0;
    }
    let pol = dot_i64(ml.polarization_int, mk.polarization_int);
    if pol == 0 {
        return 0.0;
    }
    let integral = triple_trig_integral_normalized(
        mj.trig,
        mj.wave.components(),
        flip(ml.trig),
        ml.wave.components(),
        mk.trig,
        mk.wave.components(),
    );
    if integral == 0.0 {
        return 0.0;
    }
    let sign = match ml.trig {
        Trig::Cos => -1.0,
        Trig::Sin => 1.0,
    };
    let amp = mj.amplitude * ml.amplitude * mk.amplitude;
    let prefactor = adv as f64 / pol_norm(mj) * pol as f64 / (pol_norm(ml) * pol_norm(mk));
    amp * sign * prefactor * integral * volume
}

/// Assemble the structure tensor of a basis with exact triad evaluation.
pub fn assemble_structure_tensor(basis: &BasisSet) -> StructureTensor {
    let m = basis.len();
    let volume = (2.0 * std::f64::consts::PI).powi(basis.dim as i32);
    let mut raw: BTreeMap<(u32, u32, u32), f64> = BTreeMap::new();
    for (j, mj) in basis.modes.iter().enumerate() {
        for (l, ml) in basis.modes.iter().enumerate() {
            for (k, mk) in basis.modes.iter().enumerate() {
                if l == k {
                    continue;
                }
                let v = raw_entry(mj, ml, mk, volume);
                if v != 0.0 {
                    raw.insert((j as u32, l as u32, k as u32), v);
                }
            }
        }
    }

    // Each raw value feeds both of its skew slots with opposite signs.
    // IEEE subtraction is sign-symmetric, so the two slots end up exact
    // negatives of each other bitwise, not just to round-off.
    let mut skewed: BTreeMap<(u32, u32, u32), f64> = BTreeMap::new();
    for (&(j, l, k), &v) in &raw {
        *skewed.entry((j, l, k)).or_insert(0.0) += v / 2.0;
        *skewed.entry((j, k, l)).or_insert(0.0) -= v / 2.0;
    }
    let entries: Vec<TensorEntry> = skewed
        .into_iter()
        .filter(|&(_, v)| v != 0.0)
        .map(|((j, l, k), value)| TensorEntry { j, l, k, value })
        .collect();
    StructureTensor { m, entries }
}

/// Reference value of one tensor entry by periodic-trapezoid quadrature.
///
/// This is the slow independent path used to validate `assemble_structure_tensor`;
/// it evaluates the integrand of `T[j,l,k]` pointwise from mode values and
/// analytic gradients. Exact when the grid has at least `3*max|k| + 1`
/// points per axis.
pub fn quadrature_entry(basis: &BasisSet, j: usize, l: usize, k: usize, grid: &Grid) -> f64 {
    let mj = &basis.modes[j];
    let ml = &basis.modes[l];
    let mk = &basis.modes[k];
    grid.integrate(|x| {
        let u = mj.evaluate(x);
        let g = ml.gradient(x);
        let w = mk.evaluate(x);
        let mut acc = 0.0;
        for c in 0..3 {
            let advected = u[0] * g[c][0] + u[1] * g[c][1] + u[2] * g[c][2];
            acc += advected * w[c];
        }
        acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis;

    #[test]
    fn first_shell_2d_has_no_interactions() {
        let basis = build_basis(2, 4).unwrap();
        let tensor = assemble_structure_tensor(&basis);
        assert_eq!(tensor.nnz(), 0);
    }

    #[test]
    fn interactions_appear_by_ten_modes_2d() {
        let basis = build_basis(2, 10).unwrap();
        let tensor = assemble_structure_tensor(&basis);
        assert!(tensor.nnz() > 0);
    }

    #[test]
    fn diagonal_vanishes_and_skew_holds_small() {
        for (dim, m) in [(2usize, 12usize), (3, 12)] {
            let basis = build_basis(dim, m).unwrap();
            let tensor = assemble_structure_tensor(&basis);
            for j in 0..m {
                for l in 0..m {
                    assert_eq!(tensor.get(j, l, l), 0.0);
                    for k in 0..m {
                        let a = tensor.get(j, l, k);
                        let b = tensor.get(j, k, l);
                        assert_eq!(a, -b, "skew violated at ({j},{l},{k})");
                    }
                }
            }
        }
    }

    #[test]
    fn entries_match_quadrature_oracle_small() {
        let basis = build_basis(2, 12).unwrap();
        let tensor = assemble_structure_tensor(&basis);
        let n = (3 * basis.max_abs_component(0) + 3) as usize;
        let grid = Grid::new(2, n);
        for j in 0..basis.len() {
            for l in 0..basis.len() {
                for k in 0..basis.len() {
                    let oracle = quadrature_entry(&basis, j, l, k, &grid);
                    let got = tensor.get(j, l, k);
                    assert!(
                        (oracle - got).abs() < 1e-10,
                        "entry ({j},{l},{k}): oracle {oracle} vs analytic {got}"
                    );
                }
            }
        }
    }

    #[test]
    fn nonlinear_term_conserves_energy() {
        let basis = build_basis(2, 20).unwrap();
        let tensor = assemble_structure_tensor(&basis);
        let d: Vec<f64> = (0..20).map(|i| ((i * 7 + 3) % 11) as f64 * 0.1 - 0.5).collect();
        let mut out = vec![0.0; 20];
        tensor.accumulate_nonlinear(&d, &mut out);
        let flux: f64 = d.iter().zip(&out).map(|(a, b)| a * b).sum();
        assert!(flux.abs() < 1e-12, "nonlinear energy flux {flux}");
    }
}
