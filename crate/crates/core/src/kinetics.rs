//! The space-free part of the model.
//!
//! Reaction terms, their Jacobian, the constant steady states and their
//! kinetic stability, integration of the kinetic ODE, and the reduction of
//! the three-equation receptor model to the two-equation form.

use alloc::vec::Vec;
use libm::{exp, sqrt};

/// Invalid model parameter.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    /// A parameter that must be strictly positive (and finite) is not.
    #[error("parameter `{name}` must be positive and finite, got {value}")]
    NotPositive {
        /// Field name.
        name: &'static str,
        /// Rejected value.
        value: f64,
    },
}

fn positive(name: &'static str, value: f64) -> Result<f64, ParamError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ParamError::NotPositive { name, value })
    }
}

/// The kinetic triple `(a1, d1, kappa1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticParams {
    a1: f64,
    d1: f64,
    kappa1: f64,
    feasible: bool,
}

impl KineticParams {
    /// Validates positivity; feasibility of positive steady states is computed, not required.
    pub fn new(a1: f64, d1: f64, kappa1: f64) -> Result<Self, ParamError> {
        let a1 = positive("a1", a1)?;
        let d1 = positive("d1", d1)?;
        let kappa1 = positive("kappa1", kappa1)?;
        let feasible = a1 > d1 && kappa1 > 2.0 * d1 / (a1 - d1);
        Ok(Self {
            a1,
            d1,
            kappa1,
            feasible,
        })
    }

    /// Growth coefficient.
    pub fn a1(&self) -> f64 {
        self.a1
    }

    /// Decay rate.
    pub fn d1(&self) -> f64 {
        self.d1
    }

    /// Source term.
    pub fn kappa1(&self) -> f64 {
        self.kappa1
    }

    /// `a1 > d1` and `kappa1 > 2 d1 / (a1 - d1)`.
    pub fn has_positive_steady_states(&self) -> bool {
        self.feasible
    }

    /// The product `u w = d1 / (a1 - d1)` shared by every positive steady state.
    ///
    /// Only meaningful when `a1 > d1`.
    pub fn branch_product(&self) -> f64 {
        self.d1 / (self.a1 - self.d1)
    }

    /// Asymptotic bound on `u` (and on the mass of `u`): `a1 kappa1 / min(d1, 1)`.
    pub fn u_bound(&self) -> f64 {
        self.a1 * self.kappa1 / self.d1.min(1.0)
    }

    /// Asymptotic bound on `w` (and on the mass of `w`): `kappa1`.
    pub fn w_bound(&self) -> f64 {
        self.kappa1
    }

    /// Asymptotic bound on `u / a1 + w` (masses): `kappa1 / min(d1, 1)`.
    pub fn combined_bound(&self) -> f64 {
        self.kappa1 / self.d1.min(1.0)
    }
}

/// Kinetics plus the diffusion coefficient of `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Reaction parameters.
    pub kinetics: KineticParams,
    d_w: f64,
}

impl ModelParams {
    /// Validates `d_w > 0`.
    pub fn new(kinetics: KineticParams, d_w: f64) -> Result<Self, ParamError> {
        Ok(Self {
            kinetics,
            d_w: positive("d_w", d_w)?,
        })
    }

    /// Shorthand for `ModelParams::new(KineticParams::new(a1, d1, kappa1)?, d_w)`.
    pub fn from_values(a1: f64, d1: f64, kappa1: f64, d_w: f64) -> Result<Self, ParamError> {
        Self::new(KineticParams::new(a1, d1, kappa1)?, d_w)
    }

    /// Diffusion coefficient of `w`.
    pub fn d_w(&self) -> f64 {
        self.d_w
    }

    /// Same kinetics, different diffusion.
    pub fn with_d_w(&self, d_w: f64) -> Result<Self, ParamError> {
        Self::new(self.kinetics, d_w)
    }
}

/// Rates of the three-equation receptor model (`u`, bound receptors `v`, growth factor `w`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullModelParams {
    /// Maximal proliferation rate.
    pub a: f64,
    /// Death rate of cells.
    pub d_c: f64,
    /// Decay rate of bound receptors.
    pub d_b: f64,
    /// Dissociation rate.
    pub d: f64,
    /// Decay rate of free growth factor.
    pub d_g: f64,
    /// Binding rate.
    pub alpha: f64,
    /// Growth factor production.
    pub kappa: f64,
    /// Inverse diffusion coefficient of `w`.
    pub gamma: f64,
}

/// Affine maps between the quasi-steady receptor model and the reduced model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionScaling {
    /// `u_hat = u_scale * u`.
    pub u_scale: f64,
    /// `w_hat = w_scale * w`.
    pub w_scale: f64,
    /// `t_hat = time_scale * t`.
    pub time_scale: f64,
}

impl FullModelParams {
    /// Validates that every rate is strictly positive.
    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, v) in [
            ("a", self.a),
            ("d_c", self.d_c),
            ("d_b", self.d_b),
            ("d", self.d),
            ("d_g", self.d_g),
            ("alpha", self.alpha),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
        ] {
            positive(name, v)?;
        }
        Ok(())
    }

    /// `sigma = (d_b + d) / alpha`.
    pub fn sigma(&self) -> f64 {
        (self.d_b + self.d) / self.alpha
    }

    /// Variable and time scalings taking the quasi-steady system to the reduced one.
    pub fn scaling(&self) -> ReductionScaling {
        let sigma = self.sigma();
        ReductionScaling {
            u_scale: sqrt(self.d_b / (sigma * self.d_g)),
            w_scale: sqrt(self.d_g / (self.d_b * sigma)),
            time_scale: self.d_g,
        }
    }

    /// Right-hand side of the quasi-steady two-equation kinetics in the original units
    /// (`v` eliminated, time and variables not yet rescaled).
    pub fn quasi_steady_rhs(&self, u: f64, w: f64) -> (f64, f64) {
        let sigma = self.sigma();
        let uw = u * w;
        let du = (self.a * uw / (sigma + uw) - self.d_c) * u;
        let dw = -self.d_g * w - self.d_b / sigma * u * u * w + self.kappa;
        (du, dw)
    }

    /// Reduced parameters: `a1 = a/d_g`, `d1 = d_c/d_g`,
    /// `kappa1 = kappa / sqrt(d_g d_b sigma)`, `D_w = 1/(gamma d_g)`.
    pub fn reduce(&self) -> Result<ModelParams, ParamError> {
        self.validate()?;
        let sigma = self.sigma();
        ModelParams::from_values(
            self.a / self.d_g,
            self.d_c / self.d_g,
            self.kappa / sqrt(self.d_g * self.d_b * sigma),
            1.0 / (self.gamma * self.d_g),
        )
    }
}

/// Full-model to reduced-model parameter map.
pub fn reduce_full_params(f: &FullModelParams) -> Result<ModelParams, ParamError> {
    f.reduce()
}

/// Which constant steady state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    /// `(0, kappa1)`.
    Trivial,
    /// Positive state with the smaller `w`.
    Minus,
    /// Positive state with the larger `w`.
    Plus,
}

/// A spatially constant steady state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantSteadyState {
    /// Cell density.
    pub u_bar: f64,
    /// Growth factor.
    pub w_bar: f64,
    /// Branch tag.
    pub branch: Branch,
}

/// Reaction terms `(du, dw_local)`; `dw_local` omits diffusion.
#[inline]
pub fn reaction_rhs(p: &KineticParams, u: f64, w: f64) -> (f64, f64) {
    let uw = u * w;
    let du = (p.a1 * uw / (1.0 + uw) - p.d1) * u;
    let dw = -w - u * u * w + p.kappa1;
    (du, dw)
}

/// `u`-component of the reaction and its partials `(f, df/du, df/dw)`.
#[inline]
pub(crate) fn u_reaction_with_partials(p: &KineticParams, u: f64, w: f64) -> (f64, f64, f64) {
    let uw = u * w;
    let denom = 1.0 + uw;
    let f = (p.a1 * uw / denom - p.d1) * u;
    let f_u = p.a1 * uw * (2.0 + uw) / (denom * denom) - p.d1;
    let f_w = p.a1 * u * u / (denom * denom);
    (f, f_u, f_w)
}

/// Analytic Jacobian of [`reaction_rhs`], row-major: `[[df/du, df/dw], [dg/du, dg/dw]]`.
pub fn kinetic_jacobian(p: &KineticParams, u: f64, w: f64) -> [[f64; 2]; 2] {
    let (_, f_u, f_w) = u_reaction_with_partials(p, u, w);
    [[f_u, f_w], [-2.0 * u * w, -1.0 - u * u]]
}

/// Closed-form Jacobian at the on-branch point `(d1 / ((a1 - d1) w), w)`.
pub fn branch_jacobian(p: &KineticParams, w: f64) -> [[f64; 2]; 2] {
    let (a1, d1) = (p.a1, p.d1);
    let r = d1 / ((a1 - d1) * w);
    [
        [(a1 - d1) * d1 / a1, d1 * d1 / (a1 * w * w)],
        [-2.0 * d1 / (a1 - d1), -(1.0 + r * r)],
    ]
}

/// Relative tolerance on the discriminant below which the two positive states coincide.
pub const DEGENERATE_DISCRIMINANT_TOL: f64 = 1e-12;

/// All constant steady states: always the trivial one, plus `Minus` and `Plus` when feasible.
///
/// At the fold (`kappa1 = 2 d1 / (a1 - d1)` up to [`DEGENERATE_DISCRIMINANT_TOL`]) a single
/// positive state tagged `Minus` is returned.
pub fn constant_steady_states(p: &KineticParams) -> Vec<ConstantSteadyState> {
    let mut out = Vec::with_capacity(3);
    out.push(ConstantSteadyState {
        u_bar: 0.0,
        w_bar: p.kappa1,
        branch: Branch::Trivial,
    });
    if p.a1 <= p.d1 {
        return out;
    }
    let c = p.branch_product();
    let half = 0.5 * p.kappa1;
    let disc = half * half - c * c;
    let scale = (half * half).max(1.0);
    if disc.abs() <= DEGENERATE_DISCRIMINANT_TOL * scale {
        out.push(ConstantSteadyState {
            u_bar: c / half,
            w_bar: half,
            branch: Branch::Minus,
        });
    } else if disc > 0.0 {
        // w- from the product w- w+ = c^2 avoids cancellation for large kappa1.
        let w_plus = half + sqrt(disc);
        let w_minus = c * c / w_plus;
        out.push(ConstantSteadyState {
            u_bar: c / w_minus,
            w_bar: w_minus,
            branch: Branch::Minus,
        });
        out.push(ConstantSteadyState {
            u_bar: c / w_plus,
            w_bar: w_plus,
            branch: Branch::Plus,
        });
    }
    out
}

/// The steady state on `branch`, if it exists for `p`.
pub fn steady_state(p: &KineticParams, branch: Branch) -> Option<ConstantSteadyState> {
    constant_steady_states(p)
        .into_iter()
        .find(|s| s.branch == branch)
}

/// Stability of a constant state for the kinetic (diffusion-free) system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KineticStability {
    /// Both eigenvalues have negative real part.
    Stable,
    /// Some eigenvalue has positive real part.
    Unstable,
    /// Trace or determinant within [`MARGINAL_TOL`] of zero.
    Marginal,
}

/// Band on `|trace|` and `|det|` that is classified as marginal.
pub const MARGINAL_TOL: f64 = 1e-12;

/// Classification failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifyError {
    /// The state is not one of `constant_steady_states(p)`.
    #[error("steady state {0:?} is not consistent with the parameters")]
    Inconsistent(ConstantSteadyState),
    /// Closed-form conditions and the trace/determinant test disagree.
    #[error("closed-form stability conditions disagree with trace/determinant signs")]
    CrossCheck,
}

/// Whether `s` is (to 1e-9 relative) one of the constant states of `p`.
pub fn is_consistent(p: &KineticParams, s: &ConstantSteadyState) -> bool {
    steady_state(p, s.branch).is_some_and(|r| {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + b.abs());
        close(s.u_bar, r.u_bar) && close(s.w_bar, r.w_bar)
    })
}

fn classify_by_trace_det(tr: f64, det: f64) -> KineticStability {
    if tr.abs() < MARGINAL_TOL || det.abs() < MARGINAL_TOL {
        KineticStability::Marginal
    } else if det < 0.0 || tr > 0.0 {
        KineticStability::Unstable
    } else {
        KineticStability::Stable
    }
}

/// The two closed-form sufficient-and-necessary conditions for kinetic stability of the
/// `Minus` state, evaluated literally.
pub fn minus_branch_conditions(p: &KineticParams) -> (bool, bool) {
    let (a1, d1, k) = (p.a1, p.d1, p.kappa1);
    let k2 = k * k;
    let first = k2 > 2.0 * d1 * d1 * d1 / (a1 * (a1 - d1));
    // Literal form; for d1 <= 1 the first inequality in the pair degenerates.
    let second = d1 != 1.0
        && a1 > d1 * d1 / (d1 - 1.0)
        && k2 > (d1 * d1) * (d1 * d1) / a1 / (a1 - d1 * (a1 - d1));
    (first, second)
}

/// Kinetic stability of a constant steady state, cross-checked against the trace and
/// determinant of [`kinetic_jacobian`].
pub fn classify_kinetic_stability(
    p: &KineticParams,
    s: &ConstantSteadyState,
) -> Result<KineticStability, ClassifyError> {
    if !is_consistent(p, s) {
        return Err(ClassifyError::Inconsistent(*s));
    }
    let j = kinetic_jacobian(p, s.u_bar, s.w_bar);
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let by_eigen = classify_by_trace_det(tr, det);
    if by_eigen == KineticStability::Marginal {
        return Ok(by_eigen);
    }
    let closed = match s.branch {
        Branch::Trivial => KineticStability::Stable,
        Branch::Plus => KineticStability::Unstable,
        Branch::Minus => {
            let (c1, c2) = minus_branch_conditions(p);
            if c1 || c2 {
                KineticStability::Stable
            } else {
                KineticStability::Unstable
            }
        }
    };
    if closed == by_eigen {
        Ok(closed)
    } else {
        Err(ClassifyError::CrossCheck)
    }
}

/// Time scheme for the kinetic ODE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KineticScheme {
    /// Classical explicit fourth-order Runge-Kutta.
    Rk4,
    /// Semi-implicit Euler with the same splitting as the spatial integrator.
    ImplicitEuler,
    /// Semi-implicit Crank-Nicolson with the same splitting as the spatial integrator.
    CrankNicolson,
}

/// One point of a kinetic trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticSample {
    /// Time.
    pub t: f64,
    /// Cell density.
    pub u: f64,
    /// Growth factor.
    pub w: f64,
}

/// Kinetic integration failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KineticError {
    /// Bad initial data or step controls.
    #[error("invalid kinetic integration input: {0}")]
    InvalidInput(&'static str),
    /// Positivity could not be kept even after repeated step halving.
    #[error("positivity lost at t={t} after {halvings} step halvings")]
    PositivityLost {
        /// Time at the start of the failing step.
        t: f64,
        /// Number of halvings attempted.
        halvings: u32,
    },
    /// The nodal implicit solve failed.
    #[error("implicit update did not converge at t={t}")]
    NoConvergence {
        /// Time at the start of the failing step.
        t: f64,
    },
}

/// Default kinetic step.
pub const DEFAULT_KINETIC_DT: f64 = 1e-3;

const MAX_HALVINGS: u32 = 20;

/// Integrates the kinetic ODE from `(u0, w0)`; returns every step, `t = 0` included.
///
/// A step that produces a negative component is retried with half the step size, up to
/// 20 times, before failing.
pub fn integrate_kinetics(
    p: &KineticParams,
    u0: f64,
    w0: f64,
    dt: f64,
    t_end: f64,
    scheme: KineticScheme,
) -> Result<Vec<KineticSample>, KineticError> {
    if !(u0 > 0.0 && w0 > 0.0 && u0.is_finite() && w0.is_finite()) {
        return Err(KineticError::InvalidInput("initial data must be positive"));
    }
    if !(dt > 0.0 && t_end > 0.0 && dt.is_finite() && t_end.is_finite()) {
        return Err(KineticError::InvalidInput("dt and t_end must be positive"));
    }
    let n_steps = step_count(t_end, dt);
    let mut out = Vec::with_capacity(n_steps + 1);
    let (mut u, mut w) = (u0, w0);
    out.push(KineticSample { t: 0.0, u, w });
    for n in 0..n_steps {
        let t = n as f64 * dt;
        let t_next = if n + 1 == n_steps {
            t_end
        } else {
            (n + 1) as f64 * dt
        };
        let h = t_next - t;
        let (nu, nw) = advance_with_halving(p, u, w, h, scheme, t)?;
        u = nu;
        w = nw;
        out.push(KineticSample { t: t_next, u, w });
    }
    Ok(out)
}

pub(crate) fn step_count(t_end: f64, dt: f64) -> usize {
    let r = t_end / dt;
    let n = libm::round(r);
    if (r - n).abs() <= 1e-9 * r.max(1.0) {
        n as usize
    } else {
        libm::ceil(r) as usize
    }
}

fn advance_with_halving(
    p: &KineticParams,
    u: f64,
    w: f64,
    h: f64,
    scheme: KineticScheme,
    t: f64,
) -> Result<(f64, f64), KineticError> {
    for halvings in 0..=MAX_HALVINGS {
        let pieces = 1u64 << halvings;
        let sub = h / pieces as f64;
        let (mut a, mut b) = (u, w);
        let mut ok = true;
        for _ in 0..pieces {
            match kinetic_step(p, a, b, sub, scheme) {
                Some((na, nb)) if na >= 0.0 && nb >= 0.0 && na.is_finite() && nb.is_finite() => {
                    a = na;
                    b = nb;
                }
                Some(_) => {
                    ok = false;
                    break;
                }
                None => return Err(KineticError::NoConvergence { t }),
            }
        }
        if ok {
            return Ok((a, b));
        }
    }
    Err(KineticError::PositivityLost {
        t,
        halvings: MAX_HALVINGS,
    })
}

/// A single step; `None` if the nodal implicit solve failed.
pub fn kinetic_step(
    p: &KineticParams,
    u: f64,
    w: f64,
    dt: f64,
    scheme: KineticScheme,
) -> Option<(f64, f64)> {
    match scheme {
        KineticScheme::Rk4 => {
            let f = |u: f64, w: f64| reaction_rhs(p, u, w);
            let k1 = f(u, w);
            let k2 = f(u + 0.5 * dt * k1.0, w + 0.5 * dt * k1.1);
            let k3 = f(u + 0.5 * dt * k2.0, w + 0.5 * dt * k2.1);
            let k4 = f(u + dt * k3.0, w + dt * k3.1);
            Some((
                u + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
                w + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
            ))
        }
        KineticScheme::ImplicitEuler => {
            let w_new = (w + dt * p.kappa1) / (1.0 + dt * (1.0 + u * u));
            let u_new = solve_nodal_implicit(p, u, w_new, dt)?;
            Some((u_new, w_new))
        }
        KineticScheme::CrankNicolson => {
            let half = 0.5 * dt;
            let (fu, _) = reaction_rhs(p, u, w);
            // u at the half step predicts the lagged u^2 coefficient.
            let u_mid = u + half * fu;
            let c = u_mid * u_mid;
            let w_new = ((1.0 - half * (1.0 + c)) * w + dt * p.kappa1) / (1.0 + half * (1.0 + c));
            let u_new = solve_nodal_implicit(p, u + half * fu, w_new, half)?;
            Some((u_new, w_new))
        }
    }
}

/// Scalar Newton tolerance for the nodal implicit update.
pub const NODAL_NEWTON_TOL: f64 = 1e-12;
/// Scalar Newton iteration cap before falling back to bisection.
pub const NODAL_NEWTON_MAX_ITER: usize = 30;

/// Solves `u - tau * f(u, w) = b` for `u >= 0`, where `f` is the `u`-reaction.
///
/// Newton from `b`, falling back to bisection on `[0, b * max(e^{a1 tau}, 1/(1 - tau (a1 - d1)))]`.
/// `b = 0` returns exactly zero (the zero state is absorbing).
pub(crate) fn solve_nodal_implicit(p: &KineticParams, b: f64, w: f64, tau: f64) -> Option<f64> {
    if b <= 0.0 {
        return if b == 0.0 { Some(0.0) } else { None };
    }
    let residual = |u: f64| {
        let (f, f_u, _) = u_reaction_with_partials(p, u, w);
        (u - tau * f - b, 1.0 - tau * f_u)
    };
    let mut u = b;
    for _ in 0..NODAL_NEWTON_MAX_ITER {
        let (r, dr) = residual(u);
        if dr <= 0.0 || !dr.is_finite() {
            break;
        }
        let next = u - r / dr;
        if !(next > 0.0) || !next.is_finite() {
            break;
        }
        if (next - u).abs() <= NODAL_NEWTON_TOL * next.max(1.0) {
            return Some(next);
        }
        u = next;
    }
    // Bisection fallback; residual(0) = -b < 0.
    let growth = 1.0 - tau * (p.a1 - p.d1);
    let mut factor = exp(p.a1 * tau);
    if growth > 0.0 {
        factor = factor.max(1.0 / growth);
    }
    let mut hi = b * factor;
    let mut expand = 0;
    while residual(hi).0 < 0.0 {
        hi *= 2.0;
        expand += 1;
        if expand > 200 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid).0 < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= NODAL_NEWTON_TOL * hi.max(1.0) {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}
