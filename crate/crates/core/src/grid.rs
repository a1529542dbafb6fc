//! Uniform mesh of `[0, 1]`, P1 finite-element matrices, exact norms of
//! piecewise-linear fields, and initial-condition generators.

use alloc::vec::Vec;
use libm::{cos, sqrt};

use crate::integrator::State;
use crate::kinetics::{self, Branch, ConstantSteadyState, ModelParams};
use crate::stability::{self, StabilityError};
use crate::Tridiagonal;

/// Invalid mesh or grid-function input.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    /// A mesh needs at least one cell.
    #[error("mesh needs at least one cell")]
    EmptyMesh,
    /// Dyadic level too large to index.
    #[error("mesh level {0} is out of range")]
    LevelOutOfRange(u32),
    /// Nodal array length does not match the mesh.
    #[error("field has {values} values but the mesh has {nodes} nodes")]
    LengthMismatch {
        /// Number of values supplied.
        values: usize,
        /// Number of mesh nodes.
        nodes: usize,
    },
    /// Spline bump does not fit strictly inside the unit interval.
    #[error("spline perturbation needs 0 < s - eps and s + eps < 1 (s={s}, eps={eps})")]
    SplineDomain {
        /// Bump centre.
        s: f64,
        /// Bump half-width.
        eps: f64,
    },
    /// The kinetics have no `Minus` state to perturb.
    #[error("no positive steady state to perturb (infeasible kinetics)")]
    Infeasible,
    /// Eigenmode data could not be formed.
    #[error(transparent)]
    Stability(#[from] StabilityError),
}

/// Uniform mesh of `[0, 1]` with `n_cells` cells and nodes `x_i = i h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Mesh1D {
    n_cells: usize,
}

impl Mesh1D {
    /// Mesh with `n_cells >= 1` cells.
    pub fn new(n_cells: usize) -> Result<Self, GridError> {
        if n_cells == 0 {
            Err(GridError::EmptyMesh)
        } else {
            Ok(Self { n_cells })
        }
    }

    /// Mesh with `2^level` cells, i.e. `h = 2^-level`.
    pub fn dyadic(level: u32) -> Result<Self, GridError> {
        if level > 30 {
            return Err(GridError::LevelOutOfRange(level));
        }
        Self::new(1usize << level)
    }

    /// Number of cells.
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Number of nodes, `n_cells + 1`.
    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    /// Cell size.
    pub fn h(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    /// Coordinate of node `i`.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 / self.n_cells as f64
    }

    /// All node coordinates.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.x(i)).collect()
    }

    /// Samples `f` at the nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            mesh: *self,
            values: (0..self.n_nodes()).map(|i| f(self.x(i))).collect(),
        }
    }
}

/// Nodal values of a continuous piecewise-linear function on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    mesh: Mesh1D,
    values: Vec<f64>,
}

impl Field {
    /// Wraps nodal values; the length must equal the node count.
    pub fn new(mesh: Mesh1D, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != mesh.n_nodes() {
            return Err(GridError::LengthMismatch {
                values: values.len(),
                nodes: mesh.n_nodes(),
            });
        }
        Ok(Self { mesh, values })
    }

    /// Constant field.
    pub fn constant(mesh: Mesh1D, c: f64) -> Self {
        Self {
            mesh,
            values: alloc::vec![c; mesh.n_nodes()],
        }
    }

    /// The mesh.
    pub fn mesh(&self) -> Mesh1D {
        self.mesh
    }

    /// Nodal values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable nodal values (length is fixed).
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Consumes the field, returning its values.
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value of the interpolant at `x` (clamped to `[0, 1]`).
    pub fn interpolate(&self, x: f64) -> f64 {
        let n = self.mesh.n_cells;
        let pos = x.clamp(0.0, 1.0) * n as f64;
        let i = (libm::floor(pos) as usize).min(n - 1);
        let theta = pos - i as f64;
        (1.0 - theta) * self.values[i] + theta * self.values[i + 1]
    }

    /// Largest nodal value and its node index (first on ties).
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = (0, self.values[0]);
        for (i, &v) in self.values.iter().enumerate().skip(1) {
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }
}

/// Exact `L^1` norm of the interpolant; sign changes inside a cell are integrated exactly.
pub fn l1_norm(f: &Field) -> f64 {
    let h = f.mesh.h();
    f.values
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            if a * b >= 0.0 {
                0.5 * h * (a.abs() + b.abs())
            } else {
                0.5 * h * (a * a + b * b) / (a.abs() + b.abs())
            }
        })
        .sum()
}

/// Exact `L^2` norm of the interpolant.
pub fn l2_norm(f: &Field) -> f64 {
    let h = f.mesh.h();
    let s: f64 = f
        .values
        .windows(2)
        .map(|w| (w[0] * w[0] + w[0] * w[1] + w[1] * w[1]) * h / 3.0)
        .sum();
    sqrt(s)
}

/// Integral of the interpolant (trapezoid rule, exact for P1).
pub fn integral(f: &Field) -> f64 {
    let h = f.mesh.h();
    f.values.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum()
}

/// Consistent mass and stiffness matrices for P1 elements with natural (Neumann) boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct FemMatrices {
    /// The mesh the matrices belong to.
    pub mesh: Mesh1D,
    /// `h/6 [1 4 1]`, boundary rows `h/6 [2 1]`.
    pub mass: Tridiagonal,
    /// `1/h [-1 2 -1]`, boundary rows `1/h [1 -1]`.
    pub stiffness: Tridiagonal,
}

/// Assembles the P1 mass and stiffness matrices element by element.
pub fn assemble_fem(mesh: Mesh1D) -> FemMatrices {
    let n = mesh.n_nodes();
    let h = mesh.h();
    let mut mass = Tridiagonal::zeros(n);
    let mut stiffness = Tridiagonal::zeros(n);
    for e in 0..mesh.n_cells {
        mass.diag[e] += h / 3.0;
        mass.diag[e + 1] += h / 3.0;
        mass.upper[e] += h / 6.0;
        mass.lower[e] += h / 6.0;
        stiffness.diag[e] += 1.0 / h;
        stiffness.diag[e + 1] += 1.0 / h;
        stiffness.upper[e] -= 1.0 / h;
        stiffness.lower[e] -= 1.0 / h;
    }
    FemMatrices {
        mesh,
        mass,
        stiffness,
    }
}

/// Quadratic spline bump: `-1` at both ends with zero slope, `1` at `s`,
/// quadratic on `[0, s - eps)`, `[s - eps, s + eps]`, `(s + eps, 1]` and `C^1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplinePerturbation {
    s: f64,
    eps: f64,
}

impl SplinePerturbation {
    /// Requires `0 < s - eps` and `s + eps < 1`.
    pub fn new(s: f64, eps: f64) -> Result<Self, GridError> {
        if !(eps > 0.0 && s - eps > 0.0 && s + eps < 1.0) {
            return Err(GridError::SplineDomain { s, eps });
        }
        Ok(Self { s, eps })
    }

    /// Bump centre.
    pub fn s(&self) -> f64 {
        self.s
    }

    /// Half-width of the middle piece.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn denom(&self) -> f64 {
        let (s, e) = (self.s, self.eps);
        -2.0 * s + 2.0 * s * s - e
    }

    /// Value at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let (s, e) = (self.s, self.eps);
        let d = self.denom();
        if x < s - e {
            4.0 * (-1.0 + s - e) / ((s - e) * d) * x * x - 1.0
        } else if x <= s + e {
            (2.0 * (1.0 + 2.0 * e) * x * x - 4.0 * (s + e) * x + 2.0 * s * s + 2.0 * s * e
                - 2.0 * s * s * e
                - e * e)
                / (e * d)
        } else {
            (2.0 * s + 4.0 * s * s - 2.0 * s * s * s + 3.0 * e + 3.0 * s * e - 2.0 * s * s * e
                + e * e
                - 8.0 * x * (s + e)
                + 4.0 * x * x * (s + e))
                / (d * (-1.0 + s + e))
        }
    }

    /// Derivative at `x` (one-sided from the right at the knots).
    pub fn derivative(&self, x: f64) -> f64 {
        let (s, e) = (self.s, self.eps);
        let d = self.denom();
        if x < s - e {
            8.0 * (-1.0 + s - e) / ((s - e) * d) * x
        } else if x <= s + e {
            (4.0 * (1.0 + 2.0 * e) * x - 4.0 * (s + e)) / (e * d)
        } else {
            (-8.0 * (s + e) + 8.0 * x * (s + e)) / (d * (-1.0 + s + e))
        }
    }
}

/// Shape of the initial perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CosineForm {
    /// `cos(4 pi x)`.
    Linear,
    /// `cos(4 pi x^2)`.
    Quadratic,
}

/// Initial data around a constant steady state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerturbationSpec {
    /// `u0 = u_- + eps1 p(x)`, `w0 = w_-` with the spline bump `p`.
    Spline {
        /// Bump centre.
        s: f64,
        /// Bump half-width.
        eps: f64,
        /// Amplitude.
        eps1: f64,
    },
    /// `u0 = u_- - eps cos(4 pi x)` or `u_- - eps cos(4 pi x^2)`, `w0 = w_-`.
    Cosine {
        /// Frequency form.
        form: CosineForm,
        /// Amplitude.
        eps: f64,
    },
    /// `(u_-, w_-) + amplitude (phi_k, ratio phi_k)` with the growing eigenvector of mode `k`.
    Eigenmode {
        /// Neumann mode number.
        k: u32,
        /// Amplitude of the `u` component.
        amplitude: f64,
    },
    /// `u0 = amplitude (1 + cos(pi x)) / 2`, `w0 = kappa1`: a bump on the trivial state.
    NearTrivial {
        /// Peak value of `u0` (at `x = 0`).
        amplitude: f64,
    },
}

/// Samples `spec` on `mesh` at `t = 0`.
pub fn build_initial_state(
    p: &ModelParams,
    mesh: Mesh1D,
    spec: &PerturbationSpec,
) -> Result<State, GridError> {
    if let PerturbationSpec::NearTrivial { amplitude } = *spec {
        let u = mesh.sample(|x| amplitude * 0.5 * (1.0 + cos(core::f64::consts::PI * x)));
        let w = Field::constant(mesh, p.kinetics.kappa1());
        return Ok(State { t: 0.0, u, w });
    }
    let base = minus_state(p)?;
    let (u, w) = match *spec {
        PerturbationSpec::Spline { s, eps, eps1 } => {
            let bump = SplinePerturbation::new(s, eps)?;
            (
                mesh.sample(|x| base.u_bar + eps1 * bump.eval(x)),
                Field::constant(mesh, base.w_bar),
            )
        }
        PerturbationSpec::Cosine { form, eps } => {
            let four_pi = 4.0 * core::f64::consts::PI;
            let u = match form {
                CosineForm::Linear => mesh.sample(|x| base.u_bar - eps * cos(four_pi * x)),
                CosineForm::Quadratic => mesh.sample(|x| base.u_bar - eps * cos(four_pi * x * x)),
            };
            (u, Field::constant(mesh, base.w_bar))
        }
        PerturbationSpec::Eigenmode { k, amplitude } => {
            let mode = stability::eigenmode_ic(p, &base, k, amplitude)?;
            (
                mesh.sample(|x| base.u_bar + mode.phi(x)),
                mesh.sample(|x| base.w_bar + mode.psi(x)),
            )
        }
        PerturbationSpec::NearTrivial { .. } => unreachable!(),
    };
    Ok(State { t: 0.0, u, w })
}

fn minus_state(p: &ModelParams) -> Result<ConstantSteadyState, GridError> {
    kinetics::steady_state(&p.kinetics, Branch::Minus).ok_or(GridError::Infeasible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn mesh_nodes() {
        let m = Mesh1D::dyadic(4).unwrap();
        let x = m.nodes();
        assert_eq!(x.len(), 17);
        assert_eq!(x[0], 0.0);
        assert_eq!(x[16], 1.0);
        for w in x.windows(2) {
            assert!((w[1] - w[0] - m.h()).abs() < 1e-15);
        }
        assert!(Mesh1D::new(0).is_err());
    }

    #[test]
    fn single_element_matrices() {
        let m = Mesh1D::new(1).unwrap();
        let f = assemble_fem(m);
        let h = 1.0;
        assert_eq!(f.mass.diag, vec![h / 3.0, h / 3.0]);
        assert_eq!(f.mass.upper, vec![h / 6.0]);
        assert_eq!(f.stiffness.diag, vec![1.0 / h, 1.0 / h]);
        assert_eq!(f.stiffness.lower, vec![-1.0 / h]);
    }

    #[test]
    fn row_sums() {
        let m = Mesh1D::new(37).unwrap();
        let f = assemble_fem(m);
        for s in f.stiffness.row_sums() {
            assert!(s.abs() < 1e-13);
        }
        let ms = f.mass.row_sums();
        assert!((ms[0] - m.h() / 2.0).abs() < 1e-13);
        assert!((ms[10] - m.h()).abs() < 1e-13);
        assert!((ms.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn stiffness_is_positive_semidefinite() {
        let m = Mesh1D::new(9).unwrap();
        let f = assemble_fem(m);
        let v: Vec<f64> = (0..10).map(|i| ((i * 7 % 5) as f64) - 2.0).collect();
        let kv = f.stiffness.mul_vec(&v);
        let q: f64 = v.iter().zip(&kv).map(|(a, b)| a * b).sum();
        assert!(q > 0.0);
    }

    #[test]
    fn norms_of_simple_fields() {
        let m = Mesh1D::new(8).unwrap();
        let c = Field::constant(m, -2.5);
        assert_relative_eq!(l1_norm(&c), 2.5, epsilon = 1e-14);
        assert_relative_eq!(l2_norm(&c), 2.5, epsilon = 1e-14);

        let hat = Field::new(Mesh1D::new(2).unwrap(), vec![0.0, 1.0, 0.0]).unwrap();
        assert_relative_eq!(l1_norm(&hat), 0.5, epsilon = 1e-15);
        assert_relative_eq!(l2_norm(&hat), sqrt(1.0 / 3.0), epsilon = 1e-15);

        let lin = Field::new(Mesh1D::new(1).unwrap(), vec![-1.0, 1.0]).unwrap();
        assert_relative_eq!(l1_norm(&lin), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn field_length_checked() {
        let m = Mesh1D::new(4).unwrap();
        assert!(matches!(
            Field::new(m, vec![0.0; 4]),
            Err(GridError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn interpolation() {
        let m = Mesh1D::new(4).unwrap();
        let f = m.sample(|x| 3.0 * x - 1.0);
        assert_relative_eq!(f.interpolate(0.3), -0.1, epsilon = 1e-14);
        assert_relative_eq!(f.interpolate(1.0), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn spline_defining_values() {
        let p = SplinePerturbation::new(0.4, 0.1).unwrap();
        assert_relative_eq!(p.eval(0.0), -1.0, epsilon = 1e-12);
        assert_relative_eq!(p.eval(1.0), -1.0, epsilon = 1e-12);
        assert_relative_eq!(p.eval(0.4), 1.0, epsilon = 1e-12);
        assert_eq!(p.derivative(0.0), 0.0);
        assert!(p.derivative(1.0).abs() < 1e-12);
    }

    #[test]
    fn spline_is_c1_at_knots() {
        let p = SplinePerturbation::new(0.4, 0.1).unwrap();
        for knot in [0.3, 0.5] {
            let d = 1e-12;
            assert!((p.eval(knot - d) - p.eval(knot + d)).abs() < 1e-9);
            assert!((p.derivative(knot - d) - p.derivative(knot + d)).abs() < 1e-9);
        }
    }

    #[test]
    fn spline_max_is_inside_bump() {
        let p = SplinePerturbation::new(0.4, 0.1).unwrap();
        let (mut arg, mut best) = (0.0, f64::MIN);
        for i in 0..=10_000 {
            let x = i as f64 / 10_000.0;
            if p.eval(x) > best {
                best = p.eval(x);
                arg = x;
            }
        }
        assert!(arg > 0.3 && arg < 0.5);
        // interior maximum 0.41667
        assert!((arg - 0.41667).abs() < 1e-4, "{arg}");
    }

    #[test]
    fn spline_domain_errors() {
        assert!(SplinePerturbation::new(0.05, 0.1).is_err());
        assert!(SplinePerturbation::new(0.95, 0.1).is_err());
        assert!(SplinePerturbation::new(0.5, 0.0).is_err());
    }

    fn params() -> ModelParams {
        ModelParams::from_values(2.0, 1.0, 3.0, 6.0).unwrap()
    }

    #[test]
    fn spline_initial_state() {
        let m = Mesh1D::dyadic(10).unwrap();
        let s = build_initial_state(
            &params(),
            m,
            &PerturbationSpec::Spline {
                s: 0.4,
                eps: 0.1,
                eps1: 0.05,
            },
        )
        .unwrap();
        let u_bar = (3.0 + sqrt(5.0)) / 2.0;
        let w_bar = (3.0 - sqrt(5.0)) / 2.0;
        // 0.4 is not a node; the interpolant is within O(h^2) of the bump.
        assert_relative_eq!(s.u.interpolate(0.4), u_bar + 0.05, epsilon = 1e-6);
        assert!(s.w.values().iter().all(|&w| (w - w_bar).abs() < 1e-14));
        assert_eq!(s.t, 0.0);
    }

    #[test]
    fn cosine_initial_state() {
        let m = Mesh1D::dyadic(6).unwrap();
        let s = build_initial_state(
            &params(),
            m,
            &PerturbationSpec::Cosine {
                form: CosineForm::Linear,
                eps: 0.05,
            },
        )
        .unwrap();
        let u_bar = (3.0 + sqrt(5.0)) / 2.0;
        assert_relative_eq!(s.u.values()[0], u_bar - 0.05, epsilon = 1e-14);
        assert_relative_eq!(s.u.interpolate(0.125), u_bar, epsilon = 1e-14);
        assert_relative_eq!(s.u.interpolate(0.25), u_bar + 0.05, epsilon = 1e-14);
    }

    #[test]
    fn eigenmode_zero_is_constant_shift() {
        let m = Mesh1D::dyadic(5).unwrap();
        let s = build_initial_state(
            &params(),
            m,
            &PerturbationSpec::Eigenmode {
                k: 0,
                amplitude: 0.01,
            },
        )
        .unwrap();
        let u0 = s.u.values()[0];
        let w0 = s.w.values()[0];
        assert!(s.u.values().iter().all(|&v| (v - u0).abs() < 1e-15));
        assert!(s.w.values().iter().all(|&v| (v - w0).abs() < 1e-15));
    }

    #[test]
    fn infeasible_kinetics_rejected() {
        let p = ModelParams::from_values(2.0, 1.0, 1.5, 1.0).unwrap();
        let r = build_initial_state(
            &p,
            Mesh1D::new(4).unwrap(),
            &PerturbationSpec::Cosine {
                form: CosineForm::Linear,
                eps: 0.1,
            },
        );
        assert!(matches!(r, Err(GridError::Infeasible)));
    }

    #[test]
    fn zero_amplitude_reproduces_steady_state() {
        let m = Mesh1D::dyadic(7).unwrap();
        let u_bar = (3.0 + sqrt(5.0)) / 2.0;
        let w_bar = (3.0 - sqrt(5.0)) / 2.0;
        for spec in [
            PerturbationSpec::Spline {
                s: 0.4,
                eps: 0.1,
                eps1: 0.0,
            },
            PerturbationSpec::Cosine {
                form: CosineForm::Quadratic,
                eps: 0.0,
            },
            PerturbationSpec::Eigenmode {
                k: 3,
                amplitude: 0.0,
            },
        ] {
            let s = build_initial_state(&params(), m, &spec).unwrap();
            assert!(s.u.values().iter().all(|&v| (v - u_bar).abs() < 1e-14));
            assert!(s.w.values().iter().all(|&v| (v - w_bar).abs() < 1e-14));
        }
    }

    proptest! {
        #[test]
        fn l2_squared_equals_mass_quadratic_form(
            n in 1usize..64,
            vals in proptest::collection::vec(-5.0f64..5.0, 65),
        ) {
            let m = Mesh1D::new(n).unwrap();
            let f = Field::new(m, vals[..=n].to_vec()).unwrap();
            let mats = assemble_fem(m);
            let mf = mats.mass.mul_vec(f.values());
            let quad: f64 = f.values().iter().zip(&mf).map(|(a, b)| a * b).sum();
            let l2 = l2_norm(&f);
            prop_assert!((l2 * l2 - quad).abs() <= 1e-12 * quad.abs().max(1e-300));
        }

        #[test]
        fn spline_conditions_hold(s in 0.06f64..0.94, frac in 0.05f64..0.95) {
            let max_eps = s.min(1.0 - s);
            let eps = frac * max_eps;
            prop_assume!(s - eps > 1e-3 && s + eps < 1.0 - 1e-3);
            let p = SplinePerturbation::new(s, eps).unwrap();
            prop_assert!((p.eval(0.0) + 1.0).abs() < 1e-9);
            prop_assert!((p.eval(1.0) + 1.0).abs() < 1e-9);
            prop_assert!((p.eval(s) - 1.0).abs() < 1e-9);
            prop_assert!(p.derivative(0.0).abs() < 1e-9);
            prop_assert!(p.derivative(1.0).abs() < 1e-9);
            for knot in [s - eps, s + eps] {
                let d = 1e-13;
                prop_assert!((p.eval(knot - d) - p.eval(knot + d)).abs() < 1e-9);
                prop_assert!((p.derivative(knot - d) - p.derivative(knot + d)).abs() < 1e-8);
            }
            // Piecewise quadratic: third differences vanish inside each piece.
            for (a, b) in [(0.0, s - eps), (s - eps, s + eps), (s + eps, 1.0)] {
                let h = (b - a) / 8.0;
                let x = [a + h, a + 2.0 * h, a + 3.0 * h, a + 4.0 * h];
                let v: Vec<f64> = x.iter().map(|&t| p.eval(t)).collect();
                let third = v[3] - 3.0 * v[2] + 3.0 * v[1] - v[0];
                prop_assert!(third.abs() < 1e-9);
            }
        }
    }
}
