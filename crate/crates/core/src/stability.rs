//! Linear stability of the constant steady states and diffusion-driven instability.
//!
//! Linearizing at a positive constant state `(u, w)` with kinetic Jacobian
//! `A = [[a11, a12], [a21, a22]]` and restricting to a Neumann Laplacian
//! eigenfunction with eigenvalue `q` gives the 2x2 matrix
//! `[[a11, a12], [a21, a22 - D_w q]]`. The Neumann modes on `[0, 1]` are
//! `cos(pi k x)` with `q = (pi k)^2`.
//!
//! Two normalizations of the critical diffusion are exposed:
//! [`neumann_critical_diffusion`] is the coefficient at which the Neumann mode
//! `cos(pi k x)` is neutral, and [`critical_diffusion`] is the tabulated value
//! `|A| / (a11 k^2)`, which is the neutral coefficient for Laplacian eigenvalue
//! `k^2`. They differ by the factor `pi^2`.

use alloc::vec::Vec;
use core::f64::consts::PI;
use libm::{cos, sqrt};
use num_complex::Complex64;

use crate::kinetics::{
    self, Branch, ClassifyError, ConstantSteadyState, KineticParams, KineticStability,
    ModelParams,
};

/// Failure of a stability computation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StabilityError {
    /// Requires an on-branch positive state; the trivial state has a diagonal linearization.
    #[error("operation requires a positive (Minus/Plus) steady state")]
    TrivialBranch,
    /// Kinetics have no positive steady state.
    #[error("kinetics have no positive steady state")]
    Infeasible,
    /// The steady state does not belong to the parameters.
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    /// Definitional and expanded critical-diffusion formulas disagree.
    #[error("critical diffusion formulas disagree: {definition} vs {expanded}")]
    FormulaMismatch {
        /// `|A| / (a11 q)`.
        definition: f64,
        /// Expanded closed form.
        expanded: f64,
    },
    /// The growing eigenvalue is complex, so no real eigenmode exists.
    #[error("lambda_+ is complex for mode {k}; no real eigenmode")]
    ComplexEigenvalue {
        /// Mode number.
        k: u32,
    },
}

/// Laplacian eigenvalue of the Neumann mode `cos(pi k x)`.
pub fn neumann_eigenvalue(k: u32) -> f64 {
    let a = PI * k as f64;
    a * a
}

fn positive_state_jacobian(
    p: &KineticParams,
    s: &ConstantSteadyState,
) -> Result<[[f64; 2]; 2], StabilityError> {
    if s.branch == Branch::Trivial {
        return Err(StabilityError::TrivialBranch);
    }
    if !kinetics::is_consistent(p, s) {
        return Err(ClassifyError::Inconsistent(*s).into());
    }
    Ok(kinetics::branch_jacobian(p, s.w_bar))
}

/// `det([[a11 - lambda, a12], [a21, a22 - D_w (pi k)^2 - lambda]])`.
pub fn dispersion_det(
    p: &ModelParams,
    s: &ConstantSteadyState,
    lambda: Complex64,
    k: u32,
) -> Result<Complex64, StabilityError> {
    let a = positive_state_jacobian(&p.kinetics, s)?;
    let q = neumann_eigenvalue(k);
    let m11 = Complex64::new(a[0][0], 0.0) - lambda;
    let m22 = Complex64::new(a[1][1] - p.d_w() * q, 0.0) - lambda;
    Ok(m11 * m22 - Complex64::new(a[0][1] * a[1][0], 0.0))
}

/// Roots of the dispersion relation at one mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionSample {
    /// Mode number (`-1` style negative modes do not exist; `k = 0` is the constant mode).
    pub k: u32,
    /// Laplacian eigenvalue used.
    pub q: f64,
    /// Root with the larger real part.
    pub lambda_plus: Complex64,
    /// Root with the smaller real part.
    pub lambda_minus: Complex64,
}

/// Roots of `lambda^2 - tr lambda + det = 0` for the mode matrix at Laplacian eigenvalue `q`.
pub fn lambda_at_eigenvalue(
    p: &ModelParams,
    s: &ConstantSteadyState,
    q: f64,
) -> Result<(Complex64, Complex64), StabilityError> {
    let a = positive_state_jacobian(&p.kinetics, s)?;
    Ok(roots(a, p.d_w() * q))
}

fn roots(a: [[f64; 2]; 2], dq: f64) -> (Complex64, Complex64) {
    let tr = a[0][0] + a[1][1] - dq;
    let det = a[0][0] * (a[1][1] - dq) - a[0][1] * a[1][0];
    let m = 0.5 * tr;
    let disc = m * m - det;
    if disc >= 0.0 {
        let r = sqrt(disc);
        // Larger-magnitude root first, the other from the product (no cancellation).
        let big = if m < 0.0 { m - r } else { m + r };
        let other = if big == 0.0 { 0.0 } else { det / big };
        let (hi, lo) = if big >= other {
            (big, other)
        } else {
            (other, big)
        };
        (Complex64::new(hi, 0.0), Complex64::new(lo, 0.0))
    } else {
        let r = sqrt(-disc);
        (Complex64::new(m, r), Complex64::new(m, -r))
    }
}

/// `lambda_+-` for the Neumann mode `k`.
pub fn lambda_pm(
    p: &ModelParams,
    s: &ConstantSteadyState,
    k: u32,
) -> Result<DispersionSample, StabilityError> {
    let q = neumann_eigenvalue(k);
    let (lambda_plus, lambda_minus) = lambda_at_eigenvalue(p, s, q)?;
    Ok(DispersionSample {
        k,
        q,
        lambda_plus,
        lambda_minus,
    })
}

/// Neutral diffusion coefficient for Laplacian eigenvalue `q` on the `Minus` branch,
/// computed as `|A| / (a11 q)` and checked against the expanded closed form.
pub fn critical_diffusion_for_eigenvalue(p: &KineticParams, q: f64) -> Result<f64, StabilityError> {
    if !p.has_positive_steady_states() {
        return Err(StabilityError::Infeasible);
    }
    let s = kinetics::steady_state(p, Branch::Minus).ok_or(StabilityError::Infeasible)?;
    let a = kinetics::branch_jacobian(p, s.w_bar);
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let definition = det / (a[0][0] * q);

    let (a1, d1, k1) = (p.a1(), p.d1(), p.kappa1());
    let g = a1 - d1;
    let expanded = (-4.0 * d1 * d1 + g * g * k1 * k1 + k1 * g * sqrt(k1 * k1 * g * g - 4.0 * d1 * d1))
        / (2.0 * d1 * d1)
        / q;
    if (definition - expanded).abs() > 1e-9 * definition.abs().max(expanded.abs()) {
        return Err(StabilityError::FormulaMismatch {
            definition,
            expanded,
        });
    }
    Ok(definition)
}

/// Tabulated critical diffusion `D_{w,k} = |A| / (a11 k^2)`; `D_{w,k} = D_{w,1} / k^2`.
///
/// This is the neutral coefficient for Laplacian eigenvalue `k^2`. For the Neumann mode
/// `cos(pi k x)` on the unit interval use [`neumann_critical_diffusion`].
pub fn critical_diffusion(p: &KineticParams, k: u32) -> Result<f64, StabilityError> {
    let kf = k.max(1) as f64;
    critical_diffusion_for_eigenvalue(p, kf * kf)
}

/// Diffusion coefficient above which the Neumann mode `cos(pi k x)` grows.
pub fn neumann_critical_diffusion(p: &KineticParams, k: u32) -> Result<f64, StabilityError> {
    critical_diffusion_for_eigenvalue(p, neumann_eigenvalue(k.max(1)))
}

/// Modes `k` in `[0, k_max]` with `Re lambda_+ > 0`, by direct evaluation.
pub fn unstable_mode_range(
    p: &ModelParams,
    s: &ConstantSteadyState,
    k_max: u32,
) -> Result<Vec<u32>, StabilityError> {
    let mut out = Vec::new();
    for k in 0..=k_max {
        if lambda_pm(p, s, k)?.lambda_plus.re > 0.0 {
            out.push(k);
        }
    }
    Ok(out)
}

/// Growing eigenvector of one Neumann mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenMode {
    /// Mode number.
    pub k: u32,
    /// Amplitude of the `u` component.
    pub amplitude: f64,
    /// `psi / phi = a21 / (lambda_+ - a22 + D_w (pi k)^2)`.
    pub ratio: f64,
    /// `lambda_+` for this mode.
    pub growth_rate: f64,
}

impl EigenMode {
    /// `u` perturbation `amplitude cos(pi k x)`.
    pub fn phi(&self, x: f64) -> f64 {
        self.amplitude * cos(PI * self.k as f64 * x)
    }

    /// `w` perturbation `ratio * phi(x)`.
    pub fn psi(&self, x: f64) -> f64 {
        self.ratio * self.phi(x)
    }
}

/// Eigenmode initial data for mode `k`; under the linearization it evolves as
/// `exp(lambda_+ t)` times itself.
pub fn eigenmode_ic(
    p: &ModelParams,
    s: &ConstantSteadyState,
    k: u32,
    amplitude: f64,
) -> Result<EigenMode, StabilityError> {
    let a = positive_state_jacobian(&p.kinetics, s)?;
    let sample = lambda_pm(p, s, k)?;
    if sample.lambda_plus.im != 0.0 {
        return Err(StabilityError::ComplexEigenvalue { k });
    }
    let lp = sample.lambda_plus.re;
    let ratio = a[1][0] / (lp - a[1][1] + p.d_w() * sample.q);
    Ok(EigenMode {
        k,
        amplitude,
        ratio,
        growth_rate: lp,
    })
}

/// Critical diffusion coefficients of one mode in both normalizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalDiffusion {
    /// Mode number.
    pub k: u32,
    /// `|A| / (a11 k^2)`.
    pub tabulated: f64,
    /// `|A| / (a11 (pi k)^2)`.
    pub neumann: f64,
}

/// Default largest mode scanned by [`ddi_report`].
pub const DEFAULT_K_MAX: u32 = 64;

/// Aggregated stability analysis of the `Minus` state.
#[derive(Debug, Clone, PartialEq)]
pub struct DdiReport {
    /// Parameters analysed.
    pub params: ModelParams,
    /// The `Minus` state, if the kinetics are feasible.
    pub steady_state: Option<ConstantSteadyState>,
    /// Kinetic stability of that state.
    pub kinetic_stability: Option<KineticStability>,
    /// `kinetic_stability == Stable`.
    pub kinetically_stable: bool,
    /// Smallest `k` with `Re lambda_+ > 0`.
    pub first_unstable_mode: Option<u32>,
    /// Limit of `lambda_+` as `k -> infinity`, `(a1 - d1) d1 / a1`.
    pub lambda_limit: Option<f64>,
    /// Unstable modes in `[0, k_max]`.
    pub unstable_modes: Vec<u32>,
    /// Dispersion roots for `k = 0..=k_max`.
    pub dispersion: Vec<DispersionSample>,
    /// Critical coefficients for `k = 1..=10`.
    pub d_w_thresholds: Vec<CriticalDiffusion>,
    /// Largest mode scanned.
    pub k_max: u32,
    /// Kinetically stable and some `k >= 1` grows.
    pub ddi: bool,
}

impl DdiReport {
    /// Number of unstable modes with `k <= k` (limited to the scanned range).
    pub fn unstable_mode_count_up_to(&self, k: u32) -> usize {
        self.unstable_modes.iter().filter(|&&m| m <= k).count()
    }
}

/// Full DDI analysis with modes scanned up to `k_max`.
pub fn ddi_report(p: &ModelParams, k_max: u32) -> Result<DdiReport, StabilityError> {
    let mut report = DdiReport {
        params: *p,
        steady_state: None,
        kinetic_stability: None,
        kinetically_stable: false,
        first_unstable_mode: None,
        lambda_limit: None,
        unstable_modes: Vec::new(),
        dispersion: Vec::new(),
        d_w_thresholds: Vec::new(),
        k_max,
        ddi: false,
    };
    let kin = &p.kinetics;
    let Some(s) = kinetics::steady_state(kin, Branch::Minus) else {
        return Ok(report);
    };
    let stability = kinetics::classify_kinetic_stability(kin, &s)?;
    report.steady_state = Some(s);
    report.kinetic_stability = Some(stability);
    report.kinetically_stable = stability == KineticStability::Stable;
    report.lambda_limit = Some((kin.a1() - kin.d1()) * kin.d1() / kin.a1());
    report.dispersion = (0..=k_max)
        .map(|k| lambda_pm(p, &s, k))
        .collect::<Result<_, _>>()?;
    report.unstable_modes = report
        .dispersion
        .iter()
        .filter(|d| d.lambda_plus.re > 0.0)
        .map(|d| d.k)
        .collect();
    report.first_unstable_mode = report.unstable_modes.first().copied();
    if kin.has_positive_steady_states() {
        report.d_w_thresholds = (1..=10)
            .map(|k| {
                Ok(CriticalDiffusion {
                    k,
                    tabulated: critical_diffusion(kin, k)?,
                    neumann: neumann_critical_diffusion(kin, k)?,
                })
            })
            .collect::<Result<_, StabilityError>>()?;
    }
    report.ddi = report.kinetically_stable && report.unstable_modes.iter().any(|&k| k >= 1);
    Ok(report)
}
