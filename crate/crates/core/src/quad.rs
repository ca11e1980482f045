//! Periodic trapezoid quadrature on the torus `[-pi, pi]^d`.
//!
//! On a uniform periodic grid the trapezoid rule degenerates to equal
//! weights `(2*pi/n)^d`, and it integrates trigonometric polynomials
//! exactly as long as every frequency stays below the Nyquist limit of the
//! grid. That exactness is what makes this module the independent oracle
//! for basis orthonormality, structure-tensor entries, and field encoding:
//! pairwise mode products need `n >= 2*max|k| + 1` points per axis, triple
//! products need `n >= 3*max|k| + 1`.

/// Uniform periodic grid with `n` points per axis on `[-pi, pi]^d`.
///
/// Points are `x_j = -pi + 2*pi*j/n` for `j = 0..n`; the right endpoint is
/// excluded because it is identified with the left one.
#[derive(Debug, Clone, Copy)]
pub struct Grid {
    dim: usize,
    n: usize,
}

impl Grid {
    /// `dim` must be 2 or 3 and `n >= 1`.
    pub fn new(dim: usize, n: usize) -> Grid {
        assert!(dim == 2 || dim == 3, "grid dimension must be 2 or 3");
        assert!(n >= 1, "grid needs at least one point per axis");
        Grid { dim, n }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    /// Total number of grid points, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight shared by every node, `(2*pi/n)^dim`.
    pub fn weight(&self) -> f64 {
        (2.0 * std::f64::consts::PI / self.n as f64).powi(self.dim as i32)
    }

    /// Coordinates of the node with row-major flat index `flat`.
    ///
    /// The last axis varies fastest. In 2D the third coordinate is 0.
    pub fn point(&self, flat: usize) -> [f64; 3] {
        debug_assert!(flat < self.len());
        let step = 2.0 * std::f64::consts::PI / self.n as f64;
        let mut x = [0.0; 3];
        let mut rest = flat;
        for axis in (0..self.dim).rev() {
            let idx = rest % self.n;
            rest /= self.n;
            x[axis] = -std::f64::consts::PI + step * idx as f64;
        }
        x
    }

    /// Integral of a scalar function over the torus.
    pub fn integrate<F: Fn(&[f64; 3]) -> f64>(&self, f: F) -> f64 {
        let w = self.weight();
        let mut acc = 0.0;
        for flat in 0..self.len() {
            acc += f(&self.point(flat));
        }
        acc * w
    }

    /// Integral of the pointwise dot product of two vector fields.
    pub fn inner_product<F, G>(&self, f: F, g: G) -> f64
    where
        F: Fn(&[f64; 3]) -> [f64; 3],
        G: Fn(&[f64; 3]) -> [f64; 3],
    {
        let w = self.weight();
        let mut acc = 0.0;
        for flat in 0..self.len() {
            let x = self.point(flat);
            let a = f(&x);
            let b = g(&x);
            acc += a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        }
        acc * w
    }
}
