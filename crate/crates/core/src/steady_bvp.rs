//! Nonconstant steady states.
//!
//! At steady state `u = c / w` with `c = d1 / (a1 - d1)`, so `W` solves
//!
//! ```text
//! D_w W'' = W + c^2 / W - kappa1,   W'(0) = W'(1) = 0.
//! ```
//!
//! `w_-` is a center of this planar system, so a monotone solution is half of a
//! closed orbit whose half-period is exactly 1. It is found by shooting from
//! `W(0) < w_-` with `W'(0) = 0` and bisecting on whether the orbit turns before
//! or after `x = 1`. Half-periods grow from `pi sqrt(D_w a11 / |A|)` (small orbits)
//! without bound (orbits near the saddle `w_+`), so a monotone solution exists
//! exactly when the small-orbit half-period is below 1.

use alloc::vec::Vec;

use crate::grid::{Field, GridError, Mesh1D};
use crate::kinetics::{self, Branch, ModelParams};

/// Steady state computation failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SteadyError {
    /// No positive constant states.
    #[error("kinetics have no positive steady state")]
    Infeasible,
    /// No shot in the scanned bracket turns exactly at `x = 1`.
    #[error("no monotone profile for D_w = {d_w}: W(0) scan over ({lower}, {upper}) found no bracket")]
    NotFound {
        /// Diffusion coefficient.
        d_w: f64,
        /// Lower end of the scanned `W(0)` range.
        lower: f64,
        /// Upper end of the scanned `W(0)` range.
        upper: f64,
    },
    /// `n_grid` or the mode number is zero.
    #[error("grid size and mode number must be positive")]
    InvalidSize,
    /// The base of a periodic profile must be a single monotone piece.
    #[error("base profile already has {0} modes")]
    InconsistentBase(u32),
    /// Mesh construction failed.
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Monotonicity of the base piece.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    /// Increasing on `[0, 1/n]`.
    Increasing,
    /// Decreasing on `[0, 1/n]`.
    Decreasing,
}

/// A nonconstant steady state on a uniform mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyProfile {
    /// Mesh of the profile.
    pub mesh: Mesh1D,
    /// Growth factor.
    pub w: Field,
    /// Cell density, `c / w` nodally.
    pub u: Field,
    /// Number of monotone pieces.
    pub modes: u32,
    /// Orientation of the first piece.
    pub orientation: Orientation,
    /// Diffusion coefficient the profile solves for.
    pub d_w: f64,
}

impl SteadyProfile {
    /// The mirror image `x -> 1 - x`.
    pub fn reflected(&self) -> Self {
        let rev = |f: &Field| {
            let mut v = f.values().to_vec();
            v.reverse();
            Field::new(self.mesh, v).expect("same length")
        };
        let orientation = if self.modes % 2 == 0 {
            self.orientation
        } else {
            match self.orientation {
                Orientation::Increasing => Orientation::Decreasing,
                Orientation::Decreasing => Orientation::Increasing,
            }
        };
        Self {
            mesh: self.mesh,
            w: rev(&self.w),
            u: rev(&self.u),
            modes: self.modes,
            orientation,
            d_w: self.d_w,
        }
    }
}

/// Default number of shooting steps.
pub const DEFAULT_N_GRID: usize = 1 << 14;
/// Number of `W(0)` values scanned before bisection.
pub const SCAN_POINTS: usize = 64;
/// A shot is abandoned if `W` falls below this.
pub const COLLAPSE_LEVEL: f64 = 1e-8;

/// How a shot ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShotOutcome {
    /// `W'` returned to zero (or below) at step `step < n_grid`.
    Turned {
        /// Step index of the first non-positive slope.
        step: usize,
    },
    /// Reached `x = 1` with `W' > 0`.
    Long,
    /// `W` fell below [`COLLAPSE_LEVEL`].
    Collapsed,
    /// `W(0) = w_-` and the slope stayed exactly zero.
    Constant,
}

/// Trajectory of one shot.
#[derive(Debug, Clone, PartialEq)]
pub struct Shot {
    /// `W` at the grid points reached.
    pub w: Vec<f64>,
    /// `W'` at the grid points reached.
    pub dw: Vec<f64>,
    /// Classification.
    pub outcome: ShotOutcome,
}

struct Rhs {
    c2: f64,
    kappa1: f64,
    d_w: f64,
}

impl Rhs {
    #[inline]
    fn accel(&self, w: f64) -> f64 {
        (w + self.c2 / w - self.kappa1) / self.d_w
    }

    #[inline]
    fn rk4(&self, w: f64, v: f64, h: f64) -> (f64, f64) {
        let k1 = (v, self.accel(w));
        let k2 = (v + 0.5 * h * k1.1, self.accel(w + 0.5 * h * k1.0));
        let k3 = (v + 0.5 * h * k2.1, self.accel(w + 0.5 * h * k2.0));
        let k4 = (v + h * k3.1, self.accel(w + h * k3.0));
        (
            w + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            v + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        )
    }
}

fn rhs_for(p: &ModelParams) -> Result<Rhs, SteadyError> {
    let k = &p.kinetics;
    if !k.has_positive_steady_states() {
        return Err(SteadyError::Infeasible);
    }
    let c = k.branch_product();
    Ok(Rhs {
        c2: c * c,
        kappa1: k.kappa1(),
        d_w: p.d_w(),
    })
}

/// Integrates `D_w W'' = W + c^2/W - kappa1` from `W(0) = w0`, `W'(0) = 0` with classical RK4
/// and step `1 / n_grid`. With `full = false` the shot stops at its first turning point.
pub fn shoot(p: &ModelParams, w0: f64, n_grid: usize, full: bool) -> Result<Shot, SteadyError> {
    if n_grid == 0 {
        return Err(SteadyError::InvalidSize);
    }
    let rhs = rhs_for(p)?;
    let h = 1.0 / n_grid as f64;
    let mut w = Vec::with_capacity(n_grid + 1);
    let mut dw = Vec::with_capacity(n_grid + 1);
    let (mut y, mut v) = (w0, 0.0);
    w.push(y);
    dw.push(v);
    let mut outcome = None;
    for step in 1..=n_grid {
        (y, v) = rhs.rk4(y, v, h);
        w.push(y);
        dw.push(v);
        if !(y >= COLLAPSE_LEVEL) {
            return Ok(Shot {
                w,
                dw,
                outcome: ShotOutcome::Collapsed,
            });
        }
        if outcome.is_none() && v <= 0.0 && step < n_grid {
            outcome = Some(ShotOutcome::Turned { step });
            if !full {
                break;
            }
        }
    }
    let outcome = outcome.unwrap_or(if v > 0.0 {
        ShotOutcome::Long
    } else if v == 0.0 && dw.iter().all(|&d| d == 0.0) {
        ShotOutcome::Constant
    } else {
        ShotOutcome::Turned { step: n_grid }
    });
    Ok(Shot { w, dw, outcome })
}

/// `true` if the orbit from `w0` is still rising at `x = 1` (half-period too long).
fn is_long(p: &ModelParams, w0: f64, n_grid: usize) -> Result<bool, SteadyError> {
    Ok(matches!(
        shoot(p, w0, n_grid, false)?.outcome,
        ShotOutcome::Long | ShotOutcome::Collapsed
    ))
}

/// The increasing monotone steady state for `p.d_w()`, sampled on a mesh of `n_grid` cells.
///
/// `W(0)` is scanned at [`SCAN_POINTS`] points in `(1e-6 w_-, (1 - 1e-6) w_-)`; the first
/// adjacent pair with a long shot below and a turning shot above is bisected to round-off.
pub fn shoot_monotone(p: &ModelParams, n_grid: usize) -> Result<SteadyProfile, SteadyError> {
    let s = kinetics::steady_state(&p.kinetics, Branch::Minus).ok_or(SteadyError::Infeasible)?;
    let lower = 1e-6 * s.w_bar;
    let upper = (1.0 - 1e-6) * s.w_bar;
    let scan: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| lower + (upper - lower) * i as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let mut prev = (scan[0], is_long(p, scan[0], n_grid)?);
    let mut bracket = None;
    for &w0 in &scan[1..] {
        let long = is_long(p, w0, n_grid)?;
        if prev.1 && !long {
            bracket = Some((prev.0, w0));
            break;
        }
        prev = (w0, long);
    }
    let (mut lo, mut hi) = bracket.ok_or(SteadyError::NotFound {
        d_w: p.d_w(),
        lower,
        upper,
    })?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if is_long(p, mid, n_grid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // The long side keeps W' >= 0 on the whole interval.
    let shot = shoot(p, lo, n_grid, true)?;
    profile_from(p, shot.w, 1, Orientation::Increasing)
}

fn profile_from(
    p: &ModelParams,
    w: Vec<f64>,
    modes: u32,
    orientation: Orientation,
) -> Result<SteadyProfile, SteadyError> {
    let mesh = Mesh1D::new(w.len() - 1)?;
    let c = p.kinetics.branch_product();
    let u = w.iter().map(|&x| c / x).collect();
    Ok(SteadyProfile {
        mesh,
        w: Field::new(mesh, w)?,
        u: Field::new(mesh, u)?,
        modes,
        orientation,
        d_w: p.d_w(),
    })
}

/// `n`-mode profile by even reflection of a monotone `base` computed for diffusion
/// `D_w n^2`; the result solves the problem with diffusion `base.d_w / n^2` on a mesh
/// with `n` times as many cells.
pub fn periodic_profile(base: &SteadyProfile, n: u32) -> Result<SteadyProfile, SteadyError> {
    if n == 0 {
        return Err(SteadyError::InvalidSize);
    }
    if base.modes != 1 {
        return Err(SteadyError::InconsistentBase(base.modes));
    }
    if n == 1 {
        return Ok(base.clone());
    }
    let nb = base.mesh.n_cells();
    let mesh = Mesh1D::new(nb * n as usize)?;
    let pick = |f: &Field| {
        let v = f.values();
        let out = (0..mesh.n_nodes())
            .map(|i| {
                let (j, r) = (i / nb, i % nb);
                if i == mesh.n_cells() {
                    // Last node closes piece n - 1.
                    if (n - 1) % 2 == 0 {
                        v[nb]
                    } else {
                        v[0]
                    }
                } else if j % 2 == 0 {
                    v[r]
                } else {
                    v[nb - r]
                }
            })
            .collect();
        Field::new(mesh, out).expect("sized by mesh")
    };
    let nf = n as f64;
    Ok(SteadyProfile {
        mesh,
        w: pick(&base.w),
        u: pick(&base.u),
        modes: n,
        orientation: base.orientation,
        d_w: base.d_w / (nf * nf),
    })
}

/// The `n`-mode profile for `p.d_w()`: shoots with `D_w n^2` and reflects.
pub fn n_mode_profile(p: &ModelParams, n: u32, n_grid: usize) -> Result<SteadyProfile, SteadyError> {
    if n == 0 {
        return Err(SteadyError::InvalidSize);
    }
    let nf = n as f64;
    let scaled = p
        .with_d_w(p.d_w() * nf * nf)
        .map_err(|_| SteadyError::InvalidSize)?;
    periodic_profile(&shoot_monotone(&scaled, n_grid)?, n)
}

/// Sup norm of `D_w W'' - W - c^2/W + kappa1` over the nodes.
///
/// `W''` uses the sixth-order seven-point stencil, so the value reflects the shooting
/// error and not the stencil's truncation. Near the ends the stencil reads the even
/// extension, which is exact here: the equation is reversible and `W'` vanishes there.
pub fn residual(p: &ModelParams, profile: &SteadyProfile) -> f64 {
    let c = p.kinetics.branch_product();
    let k1 = p.kinetics.kappa1();
    let h2 = profile.mesh.h() * profile.mesh.h();
    let w = profile.w.values();
    let n = w.len() as isize - 1;
    if n < 3 {
        return f64::NAN;
    }
    let at = |j: isize| {
        let j = if j < 0 {
            -j
        } else if j > n {
            2 * n - j
        } else {
            j
        };
        w[j as usize]
    };
    (0..=n)
        .map(|i| {
            let d2 = (2.0 * (at(i - 3) + at(i + 3)) - 27.0 * (at(i - 2) + at(i + 2))
                + 270.0 * (at(i - 1) + at(i + 1))
                - 490.0 * at(i))
                / (180.0 * h2);
            (profile.d_w * d2 - at(i) - c * c / at(i) + k1).abs()
        })
        .fold(0.0, f64::max)
}

/// Fourth-order one-sided slopes `(W'(0), W'(1))`.
pub fn boundary_slopes(profile: &SteadyProfile) -> (f64, f64) {
    let w = profile.w.values();
    let n = w.len() - 1;
    let h = profile.mesh.h();
    let one_sided = |a: f64, b: f64, c: f64, d: f64, e: f64| {
        (-25.0 * a + 48.0 * b - 36.0 * c + 16.0 * d - 3.0 * e) / (12.0 * h)
    };
    (
        one_sided(w[0], w[1], w[2], w[3], w[4]),
        -one_sided(w[n], w[n - 1], w[n - 2], w[n - 3], w[n - 4]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn params(d_w: f64) -> ModelParams {
        ModelParams::from_values(2.0, 1.0, 3.0, d_w).unwrap()
    }

    #[test]
    fn constant_shot() {
        let p = params(0.05);
        let s = kinetics::steady_state(&p.kinetics, Branch::Minus).unwrap();
        let shot = shoot(&p, s.w_bar, 1024, true).unwrap();
        for &w in &shot.w {
            assert!((w - s.w_bar).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_profiles_solve_the_bvp() {
        for d_w in [0.01, 0.05, 0.1] {
            let p = params(d_w);
            let prof = shoot_monotone(&p, DEFAULT_N_GRID).unwrap();
            let r = residual(&p, &prof);
            assert!(r < 1e-6, "D_w={d_w} residual {r:e}");
            let (l, rr) = boundary_slopes(&prof);
            assert!(l.abs() < 1e-6 && rr.abs() < 1e-6, "{l:e} {rr:e}");
            assert!(prof.w.values().windows(2).all(|w| w[1] >= w[0]));
            let c = p.kinetics.branch_product();
            for (u, w) in prof.u.values().iter().zip(prof.w.values()) {
                assert!((u * w - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn existence_threshold() {
        let k = params(1.0).kinetics;
        let s = kinetics::steady_state(&k, Branch::Minus).unwrap();
        let a = kinetics::branch_jacobian(&k, s.w_bar);
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let threshold = det / (a[0][0] * PI * PI);
        assert!(shoot_monotone(&params(0.95 * threshold), 4096).is_ok());
        assert!(matches!(
            shoot_monotone(&params(1.05 * threshold), 4096),
            Err(SteadyError::NotFound { .. })
        ));
    }

    #[test]
    fn infeasible() {
        let p = ModelParams::from_values(2.0, 1.0, 1.5, 0.1).unwrap();
        assert_eq!(shoot_monotone(&p, 128), Err(SteadyError::Infeasible));
    }

    #[test]
    fn reflection() {
        let prof = shoot_monotone(&params(0.05), 2048).unwrap();
        let dec = prof.reflected();
        assert_eq!(dec.orientation, Orientation::Decreasing);
        let n = prof.mesh.n_cells();
        for i in 0..=n {
            assert!((dec.w.values()[i] - prof.w.values()[n - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_profiles() {
        let base = shoot_monotone(&params(0.09), 2048).unwrap();
        assert_eq!(periodic_profile(&base, 1).unwrap(), base);
        let two = periodic_profile(&base, 2).unwrap();
        let v = two.w.values();
        let n = v.len() - 1;
        for i in 0..=n {
            assert!((v[i] - v[n - i]).abs() < 1e-15);
        }
        assert!((two.d_w - 0.09 / 4.0).abs() < 1e-15);

        let three = periodic_profile(&base, 3).unwrap();
        let p3 = params(0.01);
        assert!(residual(&p3, &three) < 1e-5, "{}", residual(&p3, &three));
        let h = three.mesh.h();
        let v = three.w.values();
        let slope = |a: f64, b: f64, c: f64, d: f64, e: f64| {
            (-25.0 * a + 48.0 * b - 36.0 * c + 16.0 * d - 3.0 * e) / (12.0 * h)
        };
        for s in [2048usize, 4096] {
            let right = slope(v[s], v[s + 1], v[s + 2], v[s + 3], v[s + 4]);
            let left = slope(v[s], v[s - 1], v[s - 2], v[s - 3], v[s - 4]);
            assert!(left.abs() < 1e-5 && right.abs() < 1e-5, "{left} {right}");
        }
        assert!(matches!(
            periodic_profile(&three, 2),
            Err(SteadyError::InconsistentBase(3))
        ));
    }

    #[test]
    fn rk4_refinement() {
        let p = params(0.05);
        let a = shoot_monotone(&p, 512).unwrap();
        let b = shoot_monotone(&p, 1024).unwrap();
        let c = shoot_monotone(&p, 2048).unwrap();
        let diff = |x: &SteadyProfile, y: &SteadyProfile| {
            let stride = y.mesh.n_cells() / x.mesh.n_cells();
            x.w.values()
                .iter()
                .enumerate()
                .map(|(i, v)| (v - y.w.values()[i * stride]).abs())
                .fold(0.0, f64::max)
        };
        let (d1, d2) = (diff(&a, &b), diff(&b, &c));
        assert!(d1 / d2 >= 8.0, "{d1:e} {d2:e}");
    }
}
