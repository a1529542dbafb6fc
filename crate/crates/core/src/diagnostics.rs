//! Measurements on states and runs: norms, spikes, growth orders, mass bounds,
//! and the finite Fourier transform of initial data.

use alloc::vec::Vec;
use libm::{cos, log, sin};
use num_complex::Complex64;

use crate::grid::{l1_norm, l2_norm, Field};
use crate::integrator::State;
use crate::kinetics::{self, Branch, KineticParams};

/// Thresholds for calling a local maximum of `u` a spike.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeCriteria {
    /// Fraction of the global maximum a spike must reach.
    pub rel_height: f64,
    /// Absolute height a spike must reach.
    pub abs_floor: f64,
    /// Maxima closer than this are merged (the taller is kept).
    pub min_separation: f64,
}

/// Default relative height.
pub const DEFAULT_REL_HEIGHT: f64 = 0.1;
/// Default merge distance.
pub const DEFAULT_MIN_SEPARATION: f64 = 0.02;

impl SpikeCriteria {
    /// Validates `0 < rel_height < 1` and positive floor and separation.
    pub fn new(rel_height: f64, abs_floor: f64, min_separation: f64) -> Option<Self> {
        let ok = rel_height > 0.0
            && rel_height < 1.0
            && abs_floor > 0.0
            && abs_floor.is_finite()
            && min_separation > 0.0
            && min_separation.is_finite();
        ok.then_some(Self {
            rel_height,
            abs_floor,
            min_separation,
        })
    }

    /// Defaults: a tenth of the global maximum, floor `2 u_-`, separation 0.02.
    ///
    /// Without a `Minus` state the floor is `1`.
    pub fn for_params(p: &KineticParams) -> Self {
        let floor = kinetics::steady_state(p, Branch::Minus).map_or(1.0, |s| 2.0 * s.u_bar);
        Self {
            rel_height: DEFAULT_REL_HEIGHT,
            abs_floor: floor,
            min_separation: DEFAULT_MIN_SEPARATION,
        }
    }
}

/// Positions (ascending) of the spikes of `u`.
///
/// Candidates are strict local maxima (a flat top counts once, at its middle node)
/// and boundary nodes above their single neighbour. A candidate needs height at least
/// `max(abs_floor, rel_height * max u)`; candidates within `min_separation` of a taller
/// accepted one are dropped.
pub fn detect_spikes(u: &Field, c: &SpikeCriteria) -> Vec<f64> {
    let v = u.values();
    let n = v.len();
    let mesh = u.mesh();
    let (_, gmax) = u.argmax();
    let threshold = c.abs_floor.max(c.rel_height * gmax);

    let mut cands: Vec<(usize, f64)> = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[j + 1] == v[i] {
            j += 1;
        }
        let left_ok = i == 0 || v[i - 1] < v[i];
        let right_ok = j + 1 == n || v[j + 1] < v[i];
        let whole = i == 0 && j + 1 == n;
        if left_ok && right_ok && !whole && v[i] >= threshold {
            cands.push(((i + j) / 2, v[i]));
        }
        i = j + 1;
    }
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut kept: Vec<f64> = Vec::new();
    for (idx, _) in cands {
        let x = mesh.x(idx);
        if kept.iter().all(|&k| (k - x).abs() >= c.min_separation) {
            kept.push(x);
        }
    }
    kept.sort_by(f64::total_cmp);
    kept
}

/// One row of run diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    /// Time.
    pub t: f64,
    /// `||u||_1`.
    pub l1_u: f64,
    /// `||w||_1`.
    pub l1_w: f64,
    /// `||u||_2`.
    pub l2_u: f64,
    /// `||w||_2`.
    pub l2_w: f64,
    /// Largest nodal `u`.
    pub max_u: f64,
    /// Node coordinate of the largest `u`.
    pub argmax_u: f64,
    /// Spike positions, ascending.
    pub spike_positions: Vec<f64>,
    /// `spike_positions.len()`.
    pub spike_count: usize,
}

/// Time series of [`DiagnosticRow`]s.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunDiagnostics {
    /// Rows in increasing time.
    pub rows: Vec<DiagnosticRow>,
}

impl RunDiagnostics {
    /// The last row.
    pub fn last(&self) -> Option<&DiagnosticRow> {
        self.rows.last()
    }

    /// Times strictly increase and counts match positions.
    pub fn is_consistent(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].t > w[0].t)
            && self
                .rows
                .iter()
                .all(|r| r.spike_count == r.spike_positions.len())
    }
}

/// Diagnostics of one state.
pub fn measure(s: &State, c: &SpikeCriteria) -> DiagnosticRow {
    let (imax, max_u) = s.u.argmax();
    let spike_positions = detect_spikes(&s.u, c);
    DiagnosticRow {
        t: s.t,
        l1_u: l1_norm(&s.u),
        l1_w: l1_norm(&s.w),
        l2_u: l2_norm(&s.u),
        l2_w: l2_norm(&s.w),
        max_u,
        argmax_u: s.u.mesh().x(imax),
        spike_count: spike_positions.len(),
        spike_positions,
    }
}

/// Result of a growth-order probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeOrder {
    /// `log((u_t - u_bar) / (u_0 - u_bar)) / t`.
    Valid(f64),
    /// `u_0` equals `u_bar` at the probe (to `1e-12` relative).
    Unperturbed,
    /// The deviation changed sign, so the logarithm is undefined.
    SignChange,
}

impl ProbeOrder {
    /// The order, if defined.
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Valid(v) => Some(v),
            _ => None,
        }
    }
}

/// Pointwise exponential growth order of `u - u_bar` between `u_0` and `u_t` at each probe,
/// with linear interpolation of the nodal fields. Requires `t > 0`.
pub fn growth_order(u_t: &Field, u_0: &Field, u_bar: f64, t: f64, probes: &[f64]) -> Vec<ProbeOrder> {
    probes
        .iter()
        .map(|&x| {
            let d0 = u_0.interpolate(x) - u_bar;
            let dt = u_t.interpolate(x) - u_bar;
            if d0.abs() <= 1e-12 * (1.0 + u_bar.abs()) {
                ProbeOrder::Unperturbed
            } else if dt / d0 <= 0.0 {
                ProbeOrder::SignChange
            } else {
                ProbeOrder::Valid(log(dt / d0) / t)
            }
        })
        .collect()
}

/// Sign of the exponent in the finite Fourier transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FourierSign {
    /// `e^{+i pi omega x}`.
    #[default]
    Positive,
    /// `e^{-i pi omega x}` (the complex conjugate for real `f`).
    Negative,
}

/// Smallest accepted quadrature resolution.
pub const MIN_FOURIER_INTERVALS: usize = 1 << 12;

/// `int_0^1 f(x) e^{+- i pi omega x} dx` by the composite trapezoid rule on
/// `max(n_intervals, 2^12)` intervals.
pub fn finite_fourier(
    f: impl Fn(f64) -> f64,
    omega: f64,
    n_intervals: usize,
    sign: FourierSign,
) -> Complex64 {
    let n = n_intervals.max(MIN_FOURIER_INTERVALS);
    let h = 1.0 / n as f64;
    let s = match sign {
        FourierSign::Positive => 1.0,
        FourierSign::Negative => -1.0,
    };
    let term = |i: usize| {
        let x = i as f64 * h;
        let a = s * core::f64::consts::PI * omega * x;
        let fx = f(x);
        Complex64::new(fx * cos(a), fx * sin(a))
    };
    let mut acc = (term(0) + term(n)) * 0.5;
    for i in 1..n {
        acc += term(i);
    }
    acc * h
}

/// One violated bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassViolation {
    /// Row time.
    pub t: f64,
    /// Which bound.
    pub bound: MassBound,
    /// Measured value.
    pub value: f64,
    /// The bound.
    pub limit: f64,
}

/// The three mass bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MassBound {
    /// `||u||_1 / a1 + ||w||_1 <= kappa1 / min(d1, 1)`.
    Combined,
    /// `||u||_1 <= a1 kappa1 / min(d1, 1)`.
    U,
    /// `||w||_1 <= kappa1`.
    W,
}

/// Tolerance added to every mass bound.
pub const MASS_TOL: f64 = 1e-3;

/// Mass bound check over the trailing part of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct MassBoundReport {
    /// Combined bound.
    pub combined_bound: f64,
    /// Bound on `||u||_1`.
    pub u_bound: f64,
    /// Bound on `||w||_1`.
    pub w_bound: f64,
    /// Rows examined.
    pub rows_checked: usize,
    /// Largest `||u||_1` in the tail.
    pub max_l1_u: f64,
    /// Smallest `||u||_1` in the tail.
    pub min_l1_u: f64,
    /// Largest `||w||_1` in the tail.
    pub max_l1_w: f64,
    /// Largest combined mass in the tail.
    pub max_combined: f64,
    /// All violations.
    pub violations: Vec<MassViolation>,
}

impl MassBoundReport {
    /// No violations.
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the mass bounds on rows with `t >= t_last - tail_fraction (t_last - t_first)`.
pub fn mass_bound_monitor(d: &RunDiagnostics, p: &KineticParams, tail_fraction: f64) -> MassBoundReport {
    let mut r = MassBoundReport {
        combined_bound: p.combined_bound(),
        u_bound: p.u_bound(),
        w_bound: p.w_bound(),
        rows_checked: 0,
        max_l1_u: 0.0,
        min_l1_u: f64::INFINITY,
        max_l1_w: 0.0,
        max_combined: 0.0,
        violations: Vec::new(),
    };
    let (Some(first), Some(last)) = (d.rows.first(), d.rows.last()) else {
        r.min_l1_u = 0.0;
        return r;
    };
    let frac = tail_fraction.clamp(0.0, 1.0);
    let start = last.t - frac * (last.t - first.t);
    for row in d.rows.iter().filter(|row| row.t >= start) {
        r.rows_checked += 1;
        let combined = row.l1_u / p.a1() + row.l1_w;
        r.max_l1_u = r.max_l1_u.max(row.l1_u);
        r.min_l1_u = r.min_l1_u.min(row.l1_u);
        r.max_l1_w = r.max_l1_w.max(row.l1_w);
        r.max_combined = r.max_combined.max(combined);
        for (bound, value, limit) in [
            (MassBound::Combined, combined, r.combined_bound),
            (MassBound::U, row.l1_u, r.u_bound),
            (MassBound::W, row.l1_w, r.w_bound),
        ] {
            if value > limit + MASS_TOL {
                r.violations.push(MassViolation {
                    t: row.t,
                    bound,
                    value,
                    limit,
                });
            }
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Mesh1D;
    use alloc::vec;
    use libm::exp;
    use proptest::prelude::*;

    fn crit() -> SpikeCriteria {
        SpikeCriteria::new(0.5, 1.0, 0.02).unwrap()
    }

    #[test]
    fn constant_field_has_no_spikes() {
        let m = Mesh1D::new(32).unwrap();
        assert!(detect_spikes(&Field::constant(m, 5.0), &crit()).is_empty());
    }

    #[test]
    fn finds_and_merges_peaks() {
        let m = Mesh1D::new(100).unwrap();
        let f = m.sample(|x| {
            let g = |c: f64, a: f64| a * exp(-((x - c) * (x - c)) / 1e-4);
            g(0.3, 10.0) + g(0.31, 9.0) + g(0.7, 8.0) + g(0.9, 2.0)
        });
        // 0.31 merges into 0.3; 0.9 is below half the maximum.
        assert_eq!(detect_spikes(&f, &crit()), vec![0.3, 0.7]);
    }

    #[test]
    fn boundary_maximum() {
        let m = Mesh1D::new(10).unwrap();
        let f = m.sample(|x| 5.0 * (1.0 - x));
        assert_eq!(detect_spikes(&f, &crit()), vec![0.0]);
    }

    #[test]
    fn flat_top_counts_once() {
        let m = Mesh1D::new(8).unwrap();
        let f = Field::new(m, vec![0.0, 1.0, 3.0, 3.0, 3.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(detect_spikes(&f, &crit()), vec![0.375]);
    }

    #[test]
    fn default_floor() {
        let c = SpikeCriteria::for_params(&KineticParams::new(2.0, 1.0, 3.0).unwrap());
        assert!((c.abs_floor - (3.0 + libm::sqrt(5.0))).abs() < 1e-12);
        assert!(SpikeCriteria::new(1.5, 1.0, 0.1).is_none());
    }

    #[test]
    fn growth_order_identity_and_flags() {
        let m = Mesh1D::new(16).unwrap();
        let u0 = m.sample(|x| 2.0 + 0.1 * cos(4.0 * core::f64::consts::PI * x));
        let o = growth_order(&u0, &u0, 2.0, 3.0, &[0.0, 0.5]);
        assert_eq!(o, vec![ProbeOrder::Valid(0.0), ProbeOrder::Valid(0.0)]);
        let flat = Field::constant(m, 2.0);
        assert_eq!(growth_order(&u0, &flat, 2.0, 1.0, &[0.3]), vec![ProbeOrder::Unperturbed]);
        let neg = m.sample(|x| 2.0 - 0.1 * cos(4.0 * core::f64::consts::PI * x));
        assert_eq!(growth_order(&neg, &u0, 2.0, 1.0, &[0.0]), vec![ProbeOrder::SignChange]);
    }

    #[test]
    fn fourier_closed_forms() {
        let one = finite_fourier(|_| 1.0, 0.0, 0, FourierSign::Positive);
        assert!((one - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        let z = finite_fourier(|_| 1.0, 2.0, 0, FourierSign::Positive);
        assert!(z.norm() < 1e-10);
        // int_0^1 e^{i pi x} dx = 2i / pi
        let h = finite_fourier(|_| 1.0, 1.0, 1 << 14, FourierSign::Positive);
        assert!((h - Complex64::new(0.0, 2.0 / core::f64::consts::PI)).norm() < 1e-8);
        let hc = finite_fourier(|_| 1.0, 1.0, 1 << 14, FourierSign::Negative);
        assert!((hc - h.conj()).norm() < 1e-15);
    }

    #[test]
    fn fourier_resolution_converged() {
        let f = |x: f64| cos(4.0 * core::f64::consts::PI * x * x);
        for omega in [0.0, 1.0, 3.5, 8.0] {
            let a = finite_fourier(f, omega, 1 << 12, FourierSign::Positive);
            let b = finite_fourier(f, omega, 1 << 13, FourierSign::Positive);
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn fresnel_value_against_simpson() {
        // Composite Simpson with 2^16 panels as an independent quadrature.
        let f = |x: f64| cos(4.0 * core::f64::consts::PI * x * x);
        let n = 1 << 16;
        let h = 1.0 / n as f64;
        let mut s = f(0.0) + f(1.0);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        let simpson = s * h / 3.0;
        let trap = finite_fourier(f, 0.0, 1 << 15, FourierSign::Positive);
        assert!((trap.re - simpson).abs() < 1e-8, "{} {}", trap.re, simpson);
        assert!(trap.im.abs() < 1e-15);
    }

    #[test]
    fn mass_bounds_for_reference_kinetics() {
        let p = KineticParams::new(2.0, 1.0, 3.0).unwrap();
        let r = mass_bound_monitor(&RunDiagnostics::default(), &p, 0.5);
        assert_eq!((r.combined_bound, r.u_bound, r.w_bound), (3.0, 6.0, 3.0));
        assert!(r.holds());
        let row = |t: f64, l1_u: f64, l1_w: f64| DiagnosticRow {
            t,
            l1_u,
            l1_w,
            l2_u: 0.0,
            l2_w: 0.0,
            max_u: 0.0,
            argmax_u: 0.0,
            spike_positions: vec![],
            spike_count: 0,
        };
        let d = RunDiagnostics {
            rows: vec![row(0.0, 10.0, 0.0), row(1.0, 0.0, 0.0), row(2.0, 0.0, 3.5)],
        };
        let r = mass_bound_monitor(&d, &p, 0.5);
        assert_eq!(r.rows_checked, 2);
        assert_eq!(r.violations.len(), 2);
        assert_eq!(r.min_l1_u, 0.0);
        assert!(mass_bound_monitor(&d, &p, 1.0).violations.len() == 4);
    }

    proptest! {
        #[test]
        fn spikes_invariant_under_scaling(
            vals in proptest::collection::vec(0.0f64..10.0, 33),
            scale in 0.01f64..100.0,
        ) {
            let m = Mesh1D::new(32).unwrap();
            let f = Field::new(m, vals.clone()).unwrap();
            let g = Field::new(m, vals.iter().map(|v| v * scale).collect()).unwrap();
            let c = SpikeCriteria::new(0.3, 1.0, 0.05).unwrap();
            let cs = SpikeCriteria { abs_floor: scale, ..c };
            prop_assert_eq!(detect_spikes(&f, &c), detect_spikes(&g, &cs));
        }

        #[test]
        fn exponential_family_gives_exact_rate(
            lambda in -1.0f64..1.0, t in 0.1f64..2.0, ubar in 0.5f64..3.0,
        ) {
            let m = Mesh1D::new(64).unwrap();
            let u0 = m.sample(|x| ubar + 0.1 * cos(3.0 * x) + 0.2);
            let ut = m.sample(|x| ubar + exp(lambda * t) * (0.1 * cos(3.0 * x) + 0.2));
            for o in growth_order(&ut, &u0, ubar, t, &[0.0, 0.33, 0.7, 1.0]) {
                let v = o.value().unwrap();
                prop_assert!((v - lambda).abs() < 1e-12);
            }
        }

        #[test]
        fn fourier_is_linear(
            a in -3.0f64..3.0, b in -3.0f64..3.0, k1 in 0.0f64..10.0, k2 in 0.0f64..10.0,
            omega in -10.0f64..10.0,
        ) {
            let f = |x: f64| cos(k1 * x);
            let g = |x: f64| sin(k2 * x * x);
            let lhs = finite_fourier(|x| a * f(x) + b * g(x), omega, 0, FourierSign::Positive);
            let rhs = finite_fourier(f, omega, 0, FourierSign::Positive) * a
                + finite_fourier(g, omega, 0, FourierSign::Positive) * b;
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
