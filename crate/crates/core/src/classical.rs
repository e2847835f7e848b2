//! Classical coupled-mode equations for N-th harmonic generation,
//! `α̇1 = −i g N (α1*)^{N−1} αN`, `α̇N = −i g α1^N`, and their closed-form
//! solutions for second-harmonic generation.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::elliptic::{elliptic_f, jacobi_sn};
use crate::error::{Error, Result};
use crate::fock::{is_finite, ComplexAmplitude, ModelSpec};
use crate::ode::{self, Tolerance};

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassicalState {
    pub alpha1: ComplexAmplitude,
    #[serde(rename = "alphaN")]
    pub alpha_n: ComplexAmplitude,
}

impl ClassicalState {
    pub fn new(alpha1: ComplexAmplitude, alpha_n: ComplexAmplitude) -> Self {
        ClassicalState { alpha1, alpha_n }
    }

    pub fn n1(&self) -> f64 {
        self.alpha1.norm_sqr()
    }

    pub fn n_n(&self) -> f64 {
        self.alpha_n.norm_sqr()
    }

    pub fn is_finite(&self) -> bool {
        is_finite(self.alpha1) && is_finite(self.alpha_n)
    }

    fn pack(&self) -> [f64; 4] {
        [self.alpha1.re, self.alpha1.im, self.alpha_n.re, self.alpha_n.im]
    }

    fn unpack(y: &[f64; 4]) -> Self {
        ClassicalState::new(Complex64::new(y[0], y[1]), Complex64::new(y[2], y[3]))
    }
}

/// Time derivatives `(dα1/dt, dαN/dt)`.
pub fn rhs(s: &ClassicalState, model: ModelSpec) -> (Complex64, Complex64) {
    let n = model.order as i32;
    let mi_g = Complex64::new(0.0, -model.coupling);
    let d1 = mi_g * model.order as f64 * s.alpha1.conj().powi(n - 1) * s.alpha_n;
    let dn = mi_g * s.alpha1.powi(n);
    (d1, dn)
}

/// Conserved quantities `E = n1 + N nN` and `Γ = Re[α1^N αN*]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionIntegrals {
    pub energy: f64,
    pub gamma: f64,
}

pub fn integrals_of_motion(s: &ClassicalState, model: ModelSpec) -> MotionIntegrals {
    MotionIntegrals {
        energy: s.n1() + model.order as f64 * s.n_n(),
        gamma: (s.alpha1.powi(model.order as i32) * s.alpha_n.conj()).re,
    }
}

/// Sampled classical trajectory. `times` holds physical time `t`; the CSV
/// column is the dimensionless `g t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub model: ModelSpec,
    pub times: Vec<f64>,
    pub states: Vec<ClassicalState>,
}

impl TrajectoryRecord {
    /// Largest relative deviation of `(E, Γ)` from their initial values,
    /// measured against `E` and `E^{(N+1)/2}` respectively.
    pub fn integral_drift(&self) -> (f64, f64) {
        let Some(first) = self.states.first() else {
            return (0.0, 0.0);
        };
        let i0 = integrals_of_motion(first, self.model);
        let e_scale = i0.energy.max(f64::MIN_POSITIVE);
        let g_scale = e_scale.powf((self.model.order as f64 + 1.0) / 2.0);
        self.states.iter().fold((0.0f64, 0.0f64), |(de, dg), s| {
            let i = integrals_of_motion(s, self.model);
            (
                de.max((i.energy - i0.energy).abs() / e_scale),
                dg.max((i.gamma - i0.gamma).abs() / g_scale),
            )
        })
    }

    /// CSV with header `gt,re1,im1,reN,imN,n1,nN,E,Gamma`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "gt,re1,im1,reN,imN,n1,nN,E,Gamma")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let i = integrals_of_motion(s, self.model);
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                t * self.model.coupling,
                s.alpha1.re,
                s.alpha1.im,
                s.alpha_n.re,
                s.alpha_n.im,
                s.n1(),
                s.n_n(),
                i.energy,
                i.gamma
            )?;
        }
        Ok(())
    }
}

/// Integrates from `t = 0` and samples the state at each of `times`.
/// Negative couplings are accepted and reverse the flow.
pub fn integrate_at(s0: ClassicalState, model: ModelSpec, times: &[f64], tol: f64) -> Result<Vec<ClassicalState>> {
    if !(tol > 0.0) {
        return Err(Error::invalid("integrator tolerance must be positive"));
    }
    if !s0.is_finite() {
        return Err(Error::invalid("non-finite initial amplitudes"));
    }
    // a negative coupling runs the dynamics backwards in time
    if model.order < 1 || !(model.coupling.is_finite() && model.coupling != 0.0) {
        return Err(Error::invalid("harmonic order must be >= 1 and coupling finite and nonzero"));
    }
    let f = |_: f64, y: &[f64; 4]| {
        let (d1, dn) = rhs(&ClassicalState::unpack(y), model);
        [d1.re, d1.im, dn.re, dn.im]
    };
    let ys = ode::integrate(f, 0.0, s0.pack(), times, Tolerance::new(tol))?;
    Ok(ys.iter().map(ClassicalState::unpack).collect())
}

/// Integrates over `[0, t_end]` and records `samples` evenly spaced states.
pub fn integrate(s0: ClassicalState, model: ModelSpec, t_end: f64, tol: f64, samples: usize) -> Result<TrajectoryRecord> {
    let times = crate::util::linspace(0.0, t_end, samples.max(2));
    let states = integrate_at(s0, model, &times, tol)?;
    Ok(TrajectoryRecord { model, times, states })
}

/// Roots `a >= b >= c` of `4n³ − 4En² + E²n − Γ² = 0`, i.e. `n(E − 2n)² = Γ²`.
pub fn cubic_roots(energy: f64, gamma: f64) -> Result<(f64, f64, f64)> {
    if !(energy >= 0.0) || !gamma.is_finite() {
        return Err(Error::invalid("cubic needs finite E >= 0"));
    }
    if energy == 0.0 {
        return if gamma == 0.0 { Ok((0.0, 0.0, 0.0)) } else { Err(Error::ComplexRoots { discriminant: -gamma * gamma }) };
    }
    // monic form n³ + p2 n² + p1 n + p0
    let (p2, p1, p0) = (-energy, energy * energy / 4.0, -gamma * gamma / 4.0);
    let shift = -p2 / 3.0;
    let p = p1 - p2 * p2 / 3.0;
    let q = 2.0 * p2.powi(3) / 27.0 - p2 * p1 / 3.0 + p0;
    let disc = -(4.0 * p.powi(3) + 27.0 * q * q);
    let scale = energy.powi(6);
    if disc < -1e-10 * scale {
        return Err(Error::ComplexRoots { discriminant: disc });
    }
    let mut roots = if p.abs() < 1e-300 {
        [shift; 3]
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        [0.0, 1.0, 2.0].map(|k| shift + m * (theta - 2.0 * std::f64::consts::PI * k / 3.0).cos())
    };
    let poly = |n: f64| ((4.0 * n - 4.0 * energy) * n + energy * energy) * n - gamma * gamma;
    let dpoly = |n: f64| (12.0 * n - 8.0 * energy) * n + energy * energy;
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let d = dpoly(*r);
            // double roots have vanishing slope; the trig value is already best
            if d.abs() < 1e-6 * energy * energy {
                break;
            }
            let step = poly(*r) / d;
            let next = *r - step;
            if poly(next).abs() < poly(*r).abs() {
                *r = next;
            } else {
                break;
            }
        }
    }
    roots.sort_by(|x, y| y.total_cmp(x));
    Ok((roots[0], roots[1], roots[2].max(0.0)))
}

/// Parameters of `n2(t) = c + (b − c) sn²(2 g √(a − c) t + u0, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub k: f64,
    pub u0: f64,
    /// Rate `2 g √(a − c)` multiplying `t` in the sn argument.
    pub rate: f64,
}

impl EllipticParams {
    /// Reference time `t0` with `u0 = −rate · t0`.
    pub fn t0(&self) -> f64 {
        if self.rate == 0.0 {
            0.0
        } else {
            -self.u0 / self.rate
        }
    }

    pub fn n2(&self, t: f64) -> f64 {
        if self.b - self.c <= 1e-14 * self.a.max(1.0) || self.u0.is_infinite() {
            return if self.u0.is_infinite() { self.b } else { self.c };
        }
        let sn = jacobi_sn(self.rate * t + self.u0, self.k).expect("modulus in [0, 1]");
        self.c + (self.b - self.c) * sn * sn
    }
}

pub fn shg_elliptic_params(s0: &ClassicalState, model: ModelSpec) -> Result<EllipticParams> {
    if model.order != 2 {
        return Err(Error::invalid("the elliptic closed form applies to N = 2 only"));
    }
    let mi = integrals_of_motion(s0, model);
    let (a, b, c) = cubic_roots(mi.energy, mi.gamma)?;
    let g = model.coupling;
    let rate = 2.0 * g * (a - c).max(0.0).sqrt();
    let width = b - c;
    if width <= 1e-14 * a.max(1.0) {
        return Ok(EllipticParams { a, b, c, k: 0.0, u0: 0.0, rate });
    }
    let k = (width / (a - c)).sqrt().min(1.0);
    let x = ((s0.n_n() - c) / width).clamp(0.0, 1.0);
    let phi = x.sqrt().asin();
    let slope = 2.0 * g * (s0.alpha1 * s0.alpha1 * s0.alpha_n.conj()).im;
    let sign = if slope < 0.0 { -1.0 } else { 1.0 };
    let u0 = if k >= 1.0 && x >= 1.0 { f64::INFINITY } else { sign * elliptic_f(phi, k) };
    Ok(EllipticParams { a, b, c, k, u0, rate })
}

/// Closed-form second-harmonic intensity `n2(t)` for `N = 2`.
pub fn shg_elliptic_solution(s0: &ClassicalState, model: ModelSpec, t: f64) -> Result<f64> {
    Ok(shg_elliptic_params(s0, model)?.n2(t))
}

/// Exact `N = 2` solution for an empty harmonic input: the fundamental decays
/// as `sech` and the harmonic grows as `tanh`.
pub fn shg_vacuum_harmonic(alpha1: ComplexAmplitude, g: f64, t: f64) -> ClassicalState {
    let r = alpha1.norm();
    let x = std::f64::consts::SQRT_2 * r * g * t;
    let phase = if r > 0.0 { alpha1 / r } else { Complex64::new(1.0, 0.0) };
    ClassicalState::new(
        alpha1 / x.cosh(),
        Complex64::new(0.0, -1.0) * phase * phase * (r / std::f64::consts::SQRT_2) * x.tanh(),
    )
}

/// Stationary-intensity solution from `α1 = N r`, `αN = r`.
pub fn net_solution(model: ModelSpec, r: f64, t: f64) -> Result<ClassicalState> {
    if !(r > 0.0) {
        return Err(Error::invalid("no-energy-transfer amplitude must be positive"));
    }
    let n = model.order as f64;
    let w = model.coupling * (n * r).powi(model.order as i32 - 1);
    Ok(ClassicalState::new(
        Complex64::from_polar(n * r, -w * t),
        Complex64::from_polar(r, -n * w * t),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn shg() -> ModelSpec {
        ModelSpec::unit(2)
    }

    #[test]
    fn rhs_examples() {
        let (d1, d2) = rhs(&ClassicalState::new(c(0.0, 0.0), c(1.0, 0.0)), shg());
        assert_eq!((d1, d2), (c(0.0, 0.0), c(0.0, 0.0)));
        let (d1, _) = rhs(&ClassicalState::new(c(2.0, 0.0), c(1.0, 0.0)), shg());
        assert_abs_diff_eq!(d1.re, 0.0);
        assert_abs_diff_eq!(d1.im, -4.0);
    }

    #[test]
    fn rhs_conserves_energy() {
        for &order in &[1u32, 2, 3, 5] {
            let m = ModelSpec::new(order, 0.7).unwrap();
            let s = ClassicalState::new(c(0.8, -0.3), c(-0.2, 0.5));
            let (d1, dn) = rhs(&s, m);
            let de = 2.0 * (s.alpha1.conj() * d1).re + order as f64 * 2.0 * (s.alpha_n.conj() * dn).re;
            assert_abs_diff_eq!(de, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn integrals_examples() {
        let i = integrals_of_motion(&ClassicalState::new(c(2.0, 0.0), c(1.0, 0.0)), shg());
        assert_eq!((i.energy, i.gamma), (6.0, 4.0));
        let i = integrals_of_motion(&ClassicalState::new(c(1.5, 0.0), c(0.0, 0.0)), shg());
        assert_eq!((i.energy, i.gamma), (2.25, 0.0));
        let i = integrals_of_motion(&ClassicalState::new(c(1.0, 1.0), c(0.0, 0.5)), shg());
        assert_abs_diff_eq!(i.energy, 2.5, epsilon = 1e-15);
        // (1+i)² (−0.5 i) = 2i · (−0.5 i) = 1
        assert_abs_diff_eq!(i.gamma, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cubic_examples() {
        let (a, b, cc) = cubic_roots(6.0, 4.0).unwrap();
        assert_abs_diff_eq!(a, 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(cc, 1.0, epsilon = 1e-6);
        let (a, b, cc) = cubic_roots(6.0, 0.0).unwrap();
        assert_abs_diff_eq!(a, 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(b, 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(cc, 0.0, epsilon = 1e-12);
        assert!(matches!(cubic_roots(1.0, 5.0), Err(Error::ComplexRoots { .. })));
    }

    #[test]
    fn cubic_bracketed_by_bisection() {
        let (e, g) = (5.0f64, 2.0f64);
        let poly = |n: f64| n * (e - 2.0 * n).powi(2) - g * g;
        // sign changes of the cubic bracket each root
        let bisect = |mut lo: f64, mut hi: f64| {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if poly(lo).signum() == poly(mid).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let want = [bisect(e / 2.0, e), bisect(e / 6.0, e / 2.0), bisect(0.0, e / 6.0)];
        let (a, b, cc) = cubic_roots(e, g).unwrap();
        for (got, want) in [a, b, cc].iter().zip(want) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
            assert!(poly(*got).abs() < 1e-9 * e.powi(3));
        }
    }

    #[test]
    fn net_point_is_stationary() {
        let ts: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        let s0 = ClassicalState::new(c(2.0, 0.0), c(1.0, 0.0));
        let states = integrate_at(s0, shg(), &ts, DEFAULT_TOL).unwrap();
        for (t, s) in ts.iter().zip(&states) {
            assert_abs_diff_eq!(s.n1(), 4.0, epsilon = 1e-6);
            assert_abs_diff_eq!(s.n_n(), 1.0, epsilon = 1e-6);
            let exact = net_solution(shg(), 1.0, *t).unwrap();
            assert!((s.alpha1 - exact.alpha1).norm() < 1e-6);
            assert!((s.alpha_n - exact.alpha_n).norm() < 1e-6);
        }
    }

    #[test]
    fn vacuum_harmonic_matches_tanh() {
        let rec = integrate(ClassicalState::new(c(1.0, 0.0), c(0.0, 0.0)), shg(), 2.0, DEFAULT_TOL, 81).unwrap();
        for (t, s) in rec.times.iter().zip(&rec.states) {
            let x = std::f64::consts::SQRT_2 * t;
            assert_abs_diff_eq!(s.n_n(), 0.5 * x.tanh().powi(2), epsilon = 1e-6);
            let exact = shg_vacuum_harmonic(c(1.0, 0.0), 1.0, *t);
            assert!((s.alpha1 - exact.alpha1).norm() < 1e-6);
            assert!((s.alpha_n - exact.alpha_n).norm() < 1e-6);
            assert_abs_diff_eq!(shg_elliptic_solution(&rec.states[0], shg(), *t).unwrap(), 0.5 * x.tanh().powi(2), epsilon = 1e-9);
        }
    }

    #[test]
    fn third_harmonic_conservation() {
        let s0 = ClassicalState::new(c(1.3, 0.0), Complex64::from_polar(0.4, 0.7));
        let rec = integrate(s0, ModelSpec::unit(3), 3.0, DEFAULT_TOL, 301).unwrap();
        let (de, dg) = rec.integral_drift();
        assert!(de < 1e-8 && dg < 1e-8, "drift {de} {dg}");
    }

    #[test]
    fn elliptic_net_is_constant() {
        let p = shg_elliptic_params(&ClassicalState::new(c(2.0, 0.0), c(1.0, 0.0)), shg()).unwrap();
        assert_eq!(p.k, 0.0);
        for &t in &[0.0, 0.7, 3.0] {
            assert_abs_diff_eq!(p.n2(t), 1.0, epsilon = 1e-6);
        }
        assert!(shg_elliptic_params(&ClassicalState::default(), ModelSpec::unit(3)).is_err());
    }

    #[test]
    fn elliptic_matches_integration() {
        let s0 = ClassicalState::new(c(1.3, 0.0), c(0.4, 0.0));
        let rec = integrate(s0, shg(), 5.0, 1e-12, 201).unwrap();
        for (t, s) in rec.times.iter().zip(&rec.states) {
            assert_abs_diff_eq!(shg_elliptic_solution(&s0, shg(), *t).unwrap(), s.n_n(), epsilon = 1e-6);
        }
    }

    #[test]
    fn time_reversal() {
        let s0 = ClassicalState::new(c(0.9, 0.4), c(-0.3, 0.6));
        let fwd = integrate_at(s0, shg(), &[4.0], DEFAULT_TOL).unwrap()[0];
        let back = integrate_at(fwd, ModelSpec { order: 2, coupling: -1.0 }, &[4.0], DEFAULT_TOL);
        let back = back.unwrap()[0];
        assert!((back.alpha1 - s0.alpha1).norm() < 1e-9);
        assert!((back.alpha_n - s0.alpha_n).norm() < 1e-9);
    }

    #[test]
    fn net_solution_examples() {
        let s = net_solution(shg(), 3.0, 1.234).unwrap();
        assert_abs_diff_eq!(s.alpha1.norm(), 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.alpha_n.norm(), 3.0, epsilon = 1e-14);
        let s = net_solution(shg(), 1.0, std::f64::consts::FRAC_PI_2).unwrap();
        assert!((s.alpha1 - c(-2.0, 0.0)).norm() < 1e-14);
        assert!(net_solution(shg(), 0.0, 1.0).is_err());
    }

    #[test]
    fn csv_layout() {
        let rec = integrate(ClassicalState::new(c(2.0, 0.0), c(1.0, 0.0)), ModelSpec::new(2, 0.5).unwrap(), 1.0, DEFAULT_TOL, 3).unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "gt,re1,im1,reN,imN,n1,nN,E,Gamma");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("0.5,"));
        assert!(lines[1].ends_with(",6,4"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn amp() -> impl Strategy<Value = Complex64> {
            (0.0f64..1.6, 0.0f64..std::f64::consts::TAU).prop_map(|(r, p)| Complex64::from_polar(r, p))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn closed_form_tracks_ode(a1 in amp(), a2 in amp()) {
                let s0 = ClassicalState::new(a1, a2);
                prop_assume!(integrals_of_motion(&s0, shg()).energy <= 10.0);
                let ts: Vec<f64> = (0..=10).map(|i| i as f64 * 0.5).collect();
                let states = integrate_at(s0, shg(), &ts, 1e-12).unwrap();
                let p = shg_elliptic_params(&s0, shg()).unwrap();
                for (t, s) in ts.iter().zip(&states) {
                    let n2 = p.n2(*t);
                    prop_assert!((n2 - s.n_n()).abs() < 1e-6, "t={} closed={} ode={}", t, n2, s.n_n());
                    prop_assert!(n2 >= p.c - 1e-12 && n2 <= p.b + 1e-12);
                }
            }

            #[test]
            fn conservation_any_order(order in 1u32..5, a1 in amp(), a2 in amp()) {
                let rec = integrate(ClassicalState::new(a1, a2), ModelSpec::unit(order), 2.0, DEFAULT_TOL, 41).unwrap();
                let (de, dg) = rec.integral_drift();
                prop_assert!(de < 100.0 * DEFAULT_TOL * 10.0 && dg < 1e-7, "{} {}", de, dg);
            }
        }
    }
}
