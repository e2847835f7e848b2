//! Fano factors, quadrature variances and Husimi Q-function grids.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{coherent_amplitudes, ComplexAmplitude, Mode, TwoModeFockState};
use crate::quantum::DensityMatrix;
use crate::util::{linspace, trapezoid_mean, CompensatedSum};

/// First and second moments of a photon-number distribution, quantum or
/// trajectory-averaged.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhotonMoments {
    pub mean: f64,
    pub second: f64,
}

impl PhotonMoments {
    pub fn variance(&self) -> f64 {
        self.second - self.mean * self.mean
    }
}

/// `F = (⟨n²⟩ − ⟨n⟩²) / ⟨n⟩`
pub fn fano(m: PhotonMoments) -> Result<f64> {
    if !(m.mean > 0.0) {
        return Err(Error::UndefinedFano);
    }
    Ok(m.variance() / m.mean)
}

/// Fano factor of time-averaged moments over a uniform grid (trapezoidal rule).
pub fn global_fano(series: &[PhotonMoments]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::invalid("global Fano factor needs at least two samples"));
    }
    let mean = trapezoid_mean(&series.iter().map(|m| m.mean).collect::<Vec<_>>());
    let second = trapezoid_mean(&series.iter().map(|m| m.second).collect::<Vec<_>>());
    fano(PhotonMoments { mean, second })
}

/// Result of a refined global-Fano evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalFano {
    pub value: f64,
    pub samples: usize,
    /// Change in the value on the last grid doubling.
    pub last_change: f64,
    pub converged: bool,
}

/// Global Fano factor over `[0, horizon]`, doubling the grid density until
/// the value changes by less than `tol` (or `max_samples` is reached).
pub fn global_fano_refined(
    mut eval: impl FnMut(&[f64]) -> Vec<PhotonMoments>,
    horizon: f64,
    initial_samples: usize,
    max_samples: usize,
    tol: f64,
) -> Result<GlobalFano> {
    let mut n = initial_samples.max(2);
    let mut series = eval(&linspace(0.0, horizon, n));
    let mut value = global_fano(&series)?;
    let mut change = f64::INFINITY;
    while 2 * n - 1 <= max_samples {
        let step = horizon / (n - 1) as f64;
        let mids: Vec<f64> = (0..n - 1).map(|i| (i as f64 + 0.5) * step).collect();
        let fresh = eval(&mids);
        let mut merged = Vec::with_capacity(2 * n - 1);
        for i in 0..n - 1 {
            merged.push(series[i]);
            merged.push(fresh[i]);
        }
        merged.push(series[n - 1]);
        series = merged;
        n = 2 * n - 1;
        let refined = global_fano(&series)?;
        change = (refined - value).abs();
        value = refined;
        if change < tol {
            break;
        }
    }
    Ok(GlobalFano {
        value,
        samples: n,
        last_change: change,
        converged: change < tol,
    })
}

/// Time series of Fano factors for one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanoSeries {
    pub mode: Mode,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl FanoSeries {
    pub fn from_moments(mode: Mode, times: &[f64], moments: &[PhotonMoments]) -> Result<Self> {
        let values = moments.iter().map(|m| fano(*m)).collect::<Result<Vec<_>>>()?;
        Ok(FanoSeries {
            mode,
            times: times.to_vec(),
            values,
        })
    }

    /// Mean and RMS deviation over samples with `lo <= t <= hi`.
    pub fn window_stats(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let picked: Vec<f64> = self
            .times
            .iter()
            .zip(&self.values)
            .filter(|(t, _)| **t >= lo && **t <= hi)
            .map(|(_, v)| *v)
            .collect();
        (!picked.is_empty()).then(|| crate::util::mean_rms(&picked))
    }
}

/// Quadrature variance `⟨(ΔX)²⟩` of `X = a e^{−iφ} + a† e^{iφ}`; equals 1
/// for every coherent state.
pub fn quadrature_variance(rho: &DensityMatrix, angle: f64) -> f64 {
    let a = rho.mean_annihilation();
    let a2 = rho.mean_annihilation_sq();
    let n = rho.mean_number();
    let rot = Complex64::from_polar(1.0, -angle);
    let mean_x = 2.0 * (a * rot).re;
    2.0 * (a2 * rot * rot).re + 2.0 * n + 1.0 - mean_x * mean_x
}

/// `⟨a⟩`, `⟨a²⟩` and `⟨n⟩` of one mode, read directly from the two-mode
/// amplitudes without forming the reduced density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderMoments {
    pub a: Complex64,
    pub a2: Complex64,
    pub n: f64,
}

impl LadderMoments {
    pub fn quadrature_variance(&self, angle: f64) -> f64 {
        let rot = Complex64::from_polar(1.0, -angle);
        let mean_x = 2.0 * (self.a * rot).re;
        2.0 * (self.a2 * rot * rot).re + 2.0 * self.n + 1.0 - mean_x * mean_x
    }
}

pub fn ladder_moments(state: &TwoModeFockState, mode: Mode) -> LadderMoments {
    let mut a = Complex64::default();
    let mut a2 = Complex64::default();
    let mut n = CompensatedSum::new();
    for block in &state.blocks {
        for (m, c) in block.amplitudes.iter().enumerate() {
            let n1 = state.occupation(Mode::Fundamental, block.total_quanta, m);
            let k = match mode {
                Mode::Fundamental => n1,
                Mode::Harmonic => m,
            };
            if k == 0 {
                continue;
            }
            let lowered = |j: usize| match mode {
                Mode::Fundamental => state.amplitude(n1 - j, m),
                Mode::Harmonic => state.amplitude(n1, m - j),
            };
            let kf = k as f64;
            n.add(kf * c.norm_sqr());
            a += lowered(1).conj() * c * kf.sqrt();
            if k >= 2 {
                a2 += lowered(2).conj() * c * (kf * (kf - 1.0)).sqrt();
            }
        }
    }
    LadderMoments { a, a2, n: n.value() }
}

/// Square phase-space grid for Q-function evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QGridSpec {
    pub center: ComplexAmplitude,
    pub half_extent: f64,
    pub resolution: usize,
}

impl QGridSpec {
    pub const DEFAULT_RESOLUTION: usize = 201;

    /// Origin-centred grid reaching four standard deviations past the mean
    /// radius of `rho`, so rings and crescents are fully enclosed.
    pub fn enclosing(rho: &DensityMatrix) -> Self {
        let mean: f64 = rho.mean_number();
        let second: f64 = (0..rho.dim).map(|n| (n * n) as f64 * rho.get(n, n).re).sum();
        let var = (second - mean * mean).max(0.0);
        let radial = (0.5 + if mean > 0.0 { var / (4.0 * mean) } else { 0.0 }).sqrt();
        let center = rho.mean_annihilation();
        let reach = center.norm().max(mean.sqrt());
        QGridSpec {
            center: Complex64::default(),
            half_extent: reach + 4.0 * radial,
            resolution: Self::DEFAULT_RESOLUTION,
        }
    }

    pub fn axis(&self) -> (Vec<f64>, Vec<f64>) {
        (
            linspace(self.center.re - self.half_extent, self.center.re + self.half_extent, self.resolution),
            linspace(self.center.im - self.half_extent, self.center.im + self.half_extent, self.resolution),
        )
    }

    pub fn cell_area(&self) -> f64 {
        let h = 2.0 * self.half_extent / (self.resolution - 1) as f64;
        h * h
    }
}

/// Q-function samples; `values[i * resolution + j]` sits at
/// `re = re_axis[j]`, `im = im_axis[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QGrid {
    pub spec: QGridSpec,
    pub values: Vec<f64>,
}

impl QGrid {
    pub fn point(&self, index: usize) -> Complex64 {
        let (re, im) = self.spec.axis();
        let res = self.spec.resolution;
        Complex64::new(re[index % res], im[index / res])
    }

    /// Riemann-sum mass `Σ Q · cell area`.
    pub fn mass(&self) -> f64 {
        crate::util::neumaier_sum(self.values.iter().copied()) * self.spec.cell_area()
    }

    /// Mass in `sectors` equal angular sectors about the origin.
    pub fn sector_masses(&self, sectors: usize) -> Vec<f64> {
        let (re, im) = self.spec.axis();
        let res = self.spec.resolution;
        let area = self.spec.cell_area();
        let mut out = vec![0.0; sectors];
        for (idx, q) in self.values.iter().enumerate() {
            let theta = im[idx / res].atan2(re[idx % res]).rem_euclid(2.0 * PI);
            let s = ((theta / (2.0 * PI) * sectors as f64) as usize).min(sectors - 1);
            out[s] += q * area;
        }
        out
    }

    /// CSV with header `re,im,q`, one row per point, row-major.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let (re, im) = self.spec.axis();
        let res = self.spec.resolution;
        writeln!(w, "re,im,q")?;
        for (i, y) in im.iter().enumerate() {
            for (j, x) in re.iter().enumerate() {
                writeln!(w, "{x},{y},{}", self.values[i * res + j])?;
            }
        }
        Ok(())
    }
}

/// `Q(β) = ⟨β|ρ|β⟩ / π` on the grid. Points are independent, so the parallel
/// evaluation is bitwise reproducible.
pub fn husimi_q(rho: &DensityMatrix, spec: QGridSpec) -> Result<QGrid> {
    if spec.resolution < 2 || !(spec.half_extent > 0.0) {
        return Err(Error::invalid("Q grid needs resolution >= 2 and positive extent"));
    }
    let (re, im) = spec.axis();
    let res = spec.resolution;
    let values = (0..res * res)
        .into_par_iter()
        .map(|idx| {
            let beta = Complex64::new(re[idx % res], im[idx / res]);
            // ⟨n|β⟩ from the stable coherent recurrence
            let v = coherent_amplitudes(beta, rho.dim - 1).expect("finite grid point");
            (rho.expectation(&v).re / PI).max(0.0)
        })
        .collect();
    Ok(QGrid { spec, values })
}
