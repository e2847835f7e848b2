//! Closed-form predictions: short-time Fano expansions and the perturbative
//! treatment of the stationary-intensity (no-energy-transfer) point.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::Mode;
use crate::observables::PhotonMoments;

/// Truncated power series in `gt`: `Σ c_k (gt)^{p_k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortTimeCoefficients {
    pub mode: Mode,
    /// `(exponent, coefficient)` pairs, ascending in exponent.
    pub powers: Vec<(u32, f64)>,
    /// Exponent of the leading omitted term.
    pub remainder: u32,
}

impl ShortTimeCoefficients {
    pub fn eval(&self, gt: f64) -> f64 {
        self.powers.iter().map(|(p, c)| c * gt.powi(*p as i32)).sum()
    }

    /// Exponent of the first omitted order.
    pub fn next_order(&self) -> u32 {
        self.remainder
    }
}

fn require_positive(r1: f64, r2: f64) -> Result<()> {
    if r1 > 0.0 && r2 > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("short-time expansion needs nonzero amplitudes in both modes"))
    }
}

/// Second-harmonic expansions with both modes seeded: fundamental through
/// `(gt)²`, harmonic through `(gt)⁴`.
pub fn shg_coefficients(r1: f64, r2: f64, theta: f64) -> Result<(ShortTimeCoefficients, ShortTimeCoefficients)> {
    require_positive(r1, r2)?;
    let (s, c2) = (theta.sin(), (2.0 * theta).cos());
    let f1 = vec![
        (0, 1.0),
        (1, -4.0 * s * r2),
        (2, 4.0 * r2 * r2 / (r1 * r1) - 2.0 * r1 * r1 + 8.0 * (2.0 + c2) * r2 * r2),
    ];
    let f2 = vec![
        (0, 1.0),
        (3, -16.0 / 3.0 * s * r1 * r1 * r2),
        (4, 4.0 / 3.0 * (2.0 * r2 * r2 + 16.0 * r1 * r1 * r2 * r2 - (4.0 + 3.0 * c2) * r1.powi(4))),
    ];
    Ok((
        ShortTimeCoefficients { mode: Mode::Fundamental, powers: f1, remainder: 3 },
        ShortTimeCoefficients { mode: Mode::Harmonic, powers: f2, remainder: 5 },
    ))
}

pub fn short_time_fano_shg(r1: f64, r2: f64, theta: f64, gt: f64) -> Result<(f64, f64)> {
    let (f1, f2) = shg_coefficients(r1, r2, theta)?;
    Ok((f1.eval(gt), f2.eval(gt)))
}

/// Second-harmonic expansions for an empty harmonic input.
pub fn spontaneous_coefficients(r1: f64) -> (ShortTimeCoefficients, ShortTimeCoefficients) {
    let q = r1 * r1;
    (
        ShortTimeCoefficients {
            mode: Mode::Fundamental,
            powers: vec![(0, 1.0), (2, -2.0 * q), (4, 4.0 / 3.0 * q * (3.0 * q + 1.0))],
            remainder: 6,
        },
        ShortTimeCoefficients {
            mode: Mode::Harmonic,
            powers: vec![(0, 1.0), (4, -4.0 / 3.0 * q * q), (6, 4.0 / 45.0 * q * q * (36.0 * q + 17.0))],
            remainder: 8,
        },
    )
}

/// Values at `gt` for an empty harmonic input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpontaneousShortTime {
    pub fano1: f64,
    pub fano2: f64,
    /// Normally ordered variances `⟨(Δn)²⟩ − ⟨n⟩`, leading order only.
    pub normal_var1: f64,
    pub normal_var2: f64,
}

pub fn short_time_fano_spontaneous(r1: f64, gt: f64) -> Result<SpontaneousShortTime> {
    if !(r1 > 0.0) {
        return Err(Error::invalid("fundamental amplitude must be positive"));
    }
    let (f1, f2) = spontaneous_coefficients(r1);
    Ok(SpontaneousShortTime {
        fano1: f1.eval(gt),
        fano2: f2.eval(gt),
        normal_var1: -2.0 * r1.powi(4) * gt * gt,
        normal_var2: -4.0 / 3.0 * r1.powi(8) * gt.powi(6),
    })
}

/// Leading expansions for harmonic order `N`. The harmonic series exists for
/// `N ∈ {2, 3, 4}` only; the fundamental one for every `N >= 2`.
pub fn general_coefficients(order: u32, r1: f64, rn: f64, theta: f64) -> Result<(ShortTimeCoefficients, Option<ShortTimeCoefficients>)> {
    if order < 2 {
        return Err(Error::invalid("short-time expansion needs N >= 2"));
    }
    require_positive(r1, rn)?;
    let n = order as f64;
    let s = theta.sin();
    let f1 = ShortTimeCoefficients {
        mode: Mode::Fundamental,
        powers: vec![(0, 1.0), (1, -2.0 * n * (n - 1.0) * r1.powi(order as i32 - 2) * rn * s)],
        remainder: 2,
    };
    let q = r1 * r1;
    let harmonic = |powers| ShortTimeCoefficients { mode: Mode::Harmonic, powers, remainder: 4 };
    let fnn = match order {
        2 => Some(shg_coefficients(r1, rn, theta)?.1),
        3 => Some(harmonic(vec![(0, 1.0), (3, -36.0 * r1.powi(3) * rn * (q + 2.0) * s)])),
        4 => Some(harmonic(vec![(0, 1.0), (3, -64.0 * q * q * rn * (17.0 + 12.0 * q + 2.0 * q * q) * s)])),
        _ => None,
    };
    Ok((f1, fnn))
}

pub fn short_time_fano_general(order: u32, r1: f64, rn: f64, theta: f64, gt: f64) -> Result<(f64, f64)> {
    let (f1, fnn) = general_coefficients(order, r1, rn, theta)?;
    let fnn = fnn.ok_or_else(|| Error::invalid(format!("no harmonic short-time expansion for N = {order}")))?;
    Ok((f1.eval(gt), fnn.eval(gt)))
}

/// Semiclassical stationary Fano factors `(F1, FN)` as exact fractions.
pub fn net_fano(order: u32) -> Result<(Ratio<i64>, Ratio<i64>)> {
    if order < 1 {
        return Err(Error::invalid("harmonic order must be >= 1"));
    }
    let n = order as i64;
    let den = 2 * (n + 1) * (n + 1);
    Ok((Ratio::new(6 * n * n + n + 1, den), Ratio::new(2 * n * n + n + 5, den)))
}

pub fn ratio_to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Mean oscillation frequency and its spread (units of `g`), with the
/// corresponding periods `2π/Ω̄` and `2π/ΔΩ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetFrequencies {
    pub omega_bar: f64,
    pub delta_omega: f64,
    pub t_osc: f64,
    pub t_rel: f64,
}

pub fn net_frequencies(order: u32, r: f64) -> Result<NetFrequencies> {
    if order < 1 || !(r > 0.0) {
        return Err(Error::invalid("need N >= 1 and r > 0"));
    }
    let n = order as f64;
    let root = (2.0 * n * (n + 1.0)).sqrt();
    let omega_bar = root * (n * r).powi(order as i32 - 1);
    let delta_omega = root * n.powi(order as i32 - 1) * r.powi(order as i32 - 2) * (n - 1.0) / (n + 1.0);
    Ok(NetFrequencies {
        omega_bar,
        delta_omega,
        t_osc: std::f64::consts::TAU / omega_bar,
        t_rel: std::f64::consts::TAU / delta_omega,
    })
}

/// `Ω = √(2 N^N E^{N−1} / (N+1)^{N−2})` for the conserved quanta `E`.
pub fn net_omega(order: u32, energy: f64) -> f64 {
    let n = order as f64;
    (2.0 * n.powi(order as i32) * energy.powi(order as i32 - 1) / (n + 1.0).powi(order as i32 - 2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetPrediction {
    pub order: u32,
    pub f1s: (i64, i64),
    pub fns: (i64, i64),
    pub omega_bar: f64,
    pub delta_omega: f64,
    pub a2_mean: f64,
    pub b2_mean: f64,
    pub t_osc: f64,
    pub t_rel: f64,
}

impl NetPrediction {
    pub fn f1s(&self) -> Ratio<i64> {
        Ratio::new(self.f1s.0, self.f1s.1)
    }

    pub fn fns(&self) -> Ratio<i64> {
        Ratio::new(self.fns.0, self.fns.1)
    }
}

/// Ensemble averages `(Ā², B̄²)` of the oscillation amplitude and offset for
/// noise variance `sigma2`.
pub fn net_amplitude_moments(order: u32, r: f64, sigma2: f64) -> (f64, f64) {
    let n = order as f64;
    let d = (n + 1.0) * (n + 1.0);
    (
        4.0 * sigma2 * r * r * (2.0 * n * n + n + 1.0) / d,
        8.0 * sigma2 * r * r / d,
    )
}

pub fn net_prediction(order: u32, r: f64) -> Result<NetPrediction> {
    let (f1, fnn) = net_fano(order)?;
    let fr = net_frequencies(order, r)?;
    let (a2_mean, b2_mean) = net_amplitude_moments(order, r, 0.25);
    Ok(NetPrediction {
        order,
        f1s: (*f1.numer(), *f1.denom()),
        fns: (*fnn.numer(), *fnn.denom()),
        omega_bar: fr.omega_bar,
        delta_omega: fr.delta_omega,
        a2_mean,
        b2_mean,
        t_osc: fr.t_osc,
        t_rel: fr.t_rel,
    })
}

/// Stationary-regime intensity moments `(fundamental, harmonic)` averaged
/// over the noise and over the oscillation phase.
pub fn net_averaged_moments(order: u32, r: f64, sigma2: f64) -> (PhotonMoments, PhotonMoments) {
    let n = order as f64;
    let (a2, b2) = net_amplitude_moments(order, r, sigma2);
    let r2 = r * r;
    (
        PhotonMoments {
            mean: n * n * r2,
            second: n.powi(4) * (r2 * r2 + b2) + 0.5 * n * n * a2,
        },
        PhotonMoments {
            mean: r2,
            second: r2 * r2 + b2 + 0.5 * a2,
        },
    )
}

/// Real noise components added to `α1 = N r` and `αN = r`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NetNoise {
    pub x1: f64,
    pub y1: f64,
    pub xn: f64,
    pub yn: f64,
}

/// Linearised trajectory near the stationary point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetPerturbation {
    pub amplitude: f64,
    pub offset: f64,
    pub omega: f64,
    /// Oscillation phase at `t = 0`, fixed by the initial intensity and its slope.
    pub phase: f64,
}

impl NetPerturbation {
    /// `(n1, nN)` at dimensionless time `gt`.
    pub fn intensities(&self, order: u32, r: f64, gt: f64) -> (f64, f64) {
        let n = order as f64;
        let wave = self.amplitude * (self.omega * gt + self.phase).sin();
        (n * n * (r * r + self.offset) - n * wave, r * r + self.offset + wave)
    }
}

pub fn net_perturbation(order: u32, r: f64, noise: NetNoise) -> NetPerturbation {
    let n = order as f64;
    let NetNoise { x1, y1, xn, yn } = noise;
    let sin_part = -2.0 * r * (x1 - n * xn) / (n + 1.0);
    let cos_part = r * (2.0 * n * (n + 1.0)).sqrt() * (y1 - yn) / (n + 1.0);
    let delta_e1 = 2.0 * n * (x1 + xn) * r;
    let delta_e0 = x1 * x1 + y1 * y1 + n * (xn * xn + yn * yn);
    NetPerturbation {
        amplitude: sin_part.hypot(cos_part),
        offset: delta_e1 / (n * (n + 1.0)),
        omega: net_omega(order, n * (n + 1.0) * r * r + delta_e1 + delta_e0),
        phase: sin_part.atan2(cos_part),
    }
}

/// `(n1, nN)` of one noisy trajectory at `gt`.
pub fn net_perturbative_intensity(order: u32, r: f64, noise: NetNoise, gt: f64) -> (f64, f64) {
    net_perturbation(order, r, noise).intensities(order, r, gt)
}
