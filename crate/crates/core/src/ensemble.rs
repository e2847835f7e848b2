//! Classical-trajectory Monte Carlo: Gaussian noise seeded on the coherent
//! amplitudes, each sample propagated with the classical equations, and
//! intensity statistics accumulated across the cloud.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{integrals_of_motion, integrate_at, ClassicalState};
use crate::error::{Error, Result};
use crate::fock::{CoherentInput, Mode, ModelSpec};
use crate::observables::{fano, PhotonMoments};
use crate::util::{mean_rms, CompensatedSum};

/// Number of contiguous trajectory batches used for batch-mean errors.
pub const BATCHES: usize = 20;
/// Trajectories integrated per work unit. Fixed so that reduction order does
/// not depend on the thread count.
const CHUNK: usize = 256;
/// Angular sectors used by [`cloud_ring_metrics`].
pub const RING_SECTORS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Variance of each real quadrature component.
    pub sigma2: f64,
    pub seed: u64,
    pub count: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            sigma2: 0.25,
            seed: 0,
            count: 10_000,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::invalid("noise variance must be positive"));
        }
        if self.count == 0 {
            return Err(Error::invalid("ensemble needs at least one trajectory"));
        }
        Ok(())
    }

    /// A note when the noise is not small against a nonzero input amplitude.
    pub fn regime_warning(&self, input: &CoherentInput) -> Option<String> {
        let weakest = [input.r1(), input.r_n()]
            .into_iter()
            .filter(|r| *r > 0.0)
            .fold(f64::INFINITY, f64::min);
        (weakest.is_finite() && self.sigma2 > 0.1 * weakest * weakest).then(|| {
            format!(
                "noise variance {} is not small against the weakest input intensity {:.4}",
                self.sigma2,
                weakest * weakest
            )
        })
    }
}

fn uniform_open(rng: &mut ChaCha20Rng) -> f64 {
    // (0, 1]: never zero, so the logarithm below is finite
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn gaussian_pair(rng: &mut ChaCha20Rng, sigma: f64) -> (f64, f64) {
    let radius = sigma * (-2.0 * uniform_open(rng).ln()).sqrt();
    let angle = TAU * uniform_open(rng);
    (radius * angle.cos(), radius * angle.sin())
}

/// Initial amplitudes of trajectory `index`, drawn from stream `index` of
/// the generator keyed by the seed.
pub fn sample_one(input: &CoherentInput, noise: &NoiseSpec, index: usize) -> ClassicalState {
    let mut rng = ChaCha20Rng::seed_from_u64(noise.seed);
    rng.set_stream(index as u64);
    let sigma = noise.sigma2.sqrt();
    let (x1, y1) = gaussian_pair(&mut rng, sigma);
    let (xn, yn) = gaussian_pair(&mut rng, sigma);
    ClassicalState::new(input.alpha1 + Complex64::new(x1, y1), input.alpha_n + Complex64::new(xn, yn))
}

pub fn sample_initial(input: &CoherentInput, noise: &NoiseSpec) -> Result<Vec<ClassicalState>> {
    noise.validate()?;
    Ok((0..noise.count).map(|i| sample_one(input, noise, i)).collect())
}

/// Ensemble time series for one mode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModeSeries {
    pub mean: Vec<f64>,
    pub second: Vec<f64>,
    /// Mean of the quadrature `X = 2 Re(α e^{−iθq})`.
    pub quad_mean: Vec<f64>,
    pub quad_second: Vec<f64>,
    pub fano: Vec<f64>,
    pub quadrature_variance: Vec<f64>,
    /// Fano factor of each trajectory batch, `fano_batches[b][i]`.
    pub fano_batches: Vec<Vec<f64>>,
}

/// Mean, RMS spread in time, and batch-mean standard error of a windowed
/// Fano factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStat {
    pub mean: f64,
    pub rms: f64,
    pub stderr: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub model: ModelSpec,
    pub times: Vec<f64>,
    pub count: usize,
    pub quadrature_angles: [f64; 2],
    pub fundamental: ModeSeries,
    pub harmonic: ModeSeries,
    /// Ensemble mean of `E = n1 + N nN`.
    pub energy_mean: Vec<f64>,
}

impl EnsembleStats {
    pub fn mode(&self, mode: Mode) -> &ModeSeries {
        match mode {
            Mode::Fundamental => &self.fundamental,
            Mode::Harmonic => &self.harmonic,
        }
    }

    pub fn moments(&self, mode: Mode, i: usize) -> PhotonMoments {
        let m = self.mode(mode);
        PhotonMoments {
            mean: m.mean[i],
            second: m.second[i],
        }
    }

    /// Window statistics of the Fano factor over `lo <= t <= hi`.
    pub fn window_fano(&self, mode: Mode, lo: f64, hi: f64) -> Option<WindowStat> {
        let idx: Vec<usize> = (0..self.times.len())
            .filter(|&i| self.times[i] >= lo && self.times[i] <= hi)
            .collect();
        if idx.is_empty() {
            return None;
        }
        let series = self.mode(mode);
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let (mean, rms) = mean_rms(&pick(&series.fano));
        let batch_means: Vec<f64> = series.fano_batches.iter().map(|b| mean_rms(&pick(b)).0).collect();
        let nb = batch_means.len() as f64;
        let stderr = if batch_means.len() > 1 {
            // sample standard deviation of the batch means over √(batches)
            mean_rms(&batch_means).1 / (nb - 1.0).sqrt()
        } else {
            f64::NAN
        };
        Some(WindowStat {
            mean,
            rms,
            stderr,
            samples: idx.len(),
        })
    }

    /// CSV with header `gt,n1_mean,n1_second,F1,S1,nN_mean,nN_second,FN,SN`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "gt,n1_mean,n1_second,F1,S1,nN_mean,nN_second,FN,SN")?;
        let (f, h) = (&self.fundamental, &self.harmonic);
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                self.times[i] * self.model.coupling,
                f.mean[i],
                f.second[i],
                f.fano[i],
                f.quadrature_variance[i],
                h.mean[i],
                h.second[i],
                h.fano[i],
                h.quadrature_variance[i]
            )?;
        }
        Ok(())
    }
}

/// Amplitudes of one mode over all trajectories at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudSnapshot {
    pub time: f64,
    pub mode: Mode,
    pub seed: u64,
    pub points: Vec<Complex64>,
}

impl CloudSnapshot {
    /// CSV `re,im` preceded by a `# mode=.. gt=.. seed=.. count=..` line.
    pub fn write_csv(&self, gt: f64, mut w: impl Write) -> std::io::Result<()> {
        let mode = match self.mode {
            Mode::Fundamental => "1".to_string(),
            Mode::Harmonic => "N".to_string(),
        };
        writeln!(w, "# mode={mode} gt={gt} seed={} count={}", self.seed, self.points.len())?;
        writeln!(w, "re,im")?;
        for p in &self.points {
            writeln!(w, "{},{}", p.re, p.im)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingMetrics {
    pub radial_mean: f64,
    pub radial_variance: f64,
    /// Fraction of the 32 equal angular sectors holding at least one point.
    pub coverage: f64,
}

pub fn cloud_ring_metrics(snapshot: &CloudSnapshot) -> Result<RingMetrics> {
    if snapshot.points.is_empty() {
        return Err(Error::invalid("empty cloud"));
    }
    let radii: Vec<f64> = snapshot.points.iter().map(|p| p.norm()).collect();
    let (radial_mean, spread) = mean_rms(&radii);
    let mut hit = [false; RING_SECTORS];
    for p in &snapshot.points {
        let theta = p.im.atan2(p.re).rem_euclid(TAU);
        hit[((theta / TAU * RING_SECTORS as f64) as usize).min(RING_SECTORS - 1)] = true;
    }
    Ok(RingMetrics {
        radial_mean,
        radial_variance: spread * spread,
        coverage: hit.iter().filter(|h| **h).count() as f64 / RING_SECTORS as f64,
    })
}

/// Settings for [`run_ensemble`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRun {
    pub model: ModelSpec,
    /// Output times, ascending and nonnegative.
    pub times: Vec<f64>,
    pub snapshot_times: Vec<f64>,
    /// Quadrature angles `θq` for the fundamental and harmonic modes.
    pub quadrature_angles: [f64; 2],
    pub tol: f64,
}

// Per-time accumulators: n1, n1², X1, X1², nN, nN², XN, XN², E.
const SLOTS: usize = 9;

struct ChunkResult {
    sums: Vec<f64>,
    clouds: Vec<Vec<[Complex64; 2]>>,
}

fn run_chunk(samples: &[ClassicalState], offset: usize, run: &EnsembleRun, grid: &[f64], out_idx: &[usize], snap_idx: &[usize]) -> Result<ChunkResult> {
    let nt = out_idx.len();
    let mut acc: Vec<CompensatedSum> = (0..nt * SLOTS).map(|_| CompensatedSum::new()).collect();
    let mut clouds = vec![Vec::with_capacity(samples.len()); snap_idx.len()];
    let rot = run.quadrature_angles.map(|a| Complex64::from_polar(1.0, -a));
    for (j, s0) in samples.iter().enumerate() {
        let states = integrate_at(*s0, run.model, grid, run.tol).map_err(|e| Error::Trajectory {
            index: offset + j,
            source: Box::new(e),
        })?;
        for (i, &g) in out_idx.iter().enumerate() {
            let s = &states[g];
            let (n1, nn) = (s.n1(), s.n_n());
            let x1 = 2.0 * (s.alpha1 * rot[0]).re;
            let xn = 2.0 * (s.alpha_n * rot[1]).re;
            let e = integrals_of_motion(s, run.model).energy;
            let row = &mut acc[i * SLOTS..(i + 1) * SLOTS];
            for (slot, v) in row.iter_mut().zip([n1, n1 * n1, x1, x1 * x1, nn, nn * nn, xn, xn * xn, e]) {
                slot.add(v);
            }
        }
        for (c, &g) in clouds.iter_mut().zip(snap_idx) {
            c.push([states[g].alpha1, states[g].alpha_n]);
        }
    }
    Ok(ChunkResult {
        sums: acc.iter().map(|a| a.value()).collect(),
        clouds,
    })
}

fn series_from_sums(sums: &[f64], count: f64, base: usize, nt: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let col = |k: usize| (0..nt).map(|i| sums[i * SLOTS + base + k] / count).collect::<Vec<_>>();
    (col(0), col(1), col(2), col(3))
}

fn fano_or_nan(mean: f64, second: f64) -> f64 {
    fano(PhotonMoments { mean, second }).unwrap_or(f64::NAN)
}

/// Propagates every sample and reduces the statistics. Work is split into
/// fixed chunks inside fixed batches, and partial sums are combined in
/// trajectory order, so the result is bitwise identical for any thread count.
pub fn run_ensemble(samples: &[ClassicalState], seed: u64, run: &EnsembleRun) -> Result<(EnsembleStats, Vec<CloudSnapshot>)> {
    if samples.is_empty() || run.times.is_empty() {
        return Err(Error::invalid("ensemble needs samples and output times"));
    }
    if run.times.iter().chain(&run.snapshot_times).any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::invalid("ensemble times must be finite and nonnegative"));
    }
    if run.times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("ensemble output times must be ascending"));
    }

    let mut grid: Vec<f64> = run.times.iter().chain(&run.snapshot_times).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let locate = |t: &f64| grid.binary_search_by(|g| g.total_cmp(t)).expect("time is on the grid");
    let out_idx: Vec<usize> = run.times.iter().map(locate).collect();
    let snap_idx: Vec<usize> = run.snapshot_times.iter().map(locate).collect();

    let count = samples.len();
    let batches = BATCHES.min(count);
    let mut units = Vec::new();
    for b in 0..batches {
        let (lo, hi) = (b * count / batches, (b + 1) * count / batches);
        let mut start = lo;
        while start < hi {
            let end = (start + CHUNK).min(hi);
            units.push((b, start, end));
            start = end;
        }
    }

    let results: Vec<Result<ChunkResult>> = units
        .par_iter()
        .map(|&(_, lo, hi)| run_chunk(&samples[lo..hi], lo, run, &grid, &out_idx, &snap_idx))
        .collect();

    let nt = run.times.len();
    let mut batch_acc: Vec<Vec<CompensatedSum>> = (0..batches).map(|_| (0..nt * SLOTS).map(|_| CompensatedSum::new()).collect()).collect();
    let mut clouds: Vec<Vec<[Complex64; 2]>> = vec![Vec::with_capacity(count); snap_idx.len()];
    for (&(b, _, _), res) in units.iter().zip(results) {
        let chunk = res?;
        for (a, v) in batch_acc[b].iter_mut().zip(&chunk.sums) {
            a.add(*v);
        }
        for (dst, src) in clouds.iter_mut().zip(chunk.clouds) {
            dst.extend(src);
        }
    }
    let batch_sums: Vec<Vec<f64>> = batch_acc.iter().map(|b| b.iter().map(|a| a.value()).collect()).collect();
    let totals: Vec<f64> = (0..nt * SLOTS)
        .map(|k| {
            let mut s = CompensatedSum::new();
            for b in &batch_sums {
                s.add(b[k]);
            }
            s.value()
        })
        .collect();

    let build = |base: usize| {
        let (mean, second, quad_mean, quad_second) = series_from_sums(&totals, count as f64, base, nt);
        let fano: Vec<f64> = mean.iter().zip(&second).map(|(m, s)| fano_or_nan(*m, *s)).collect();
        let quadrature_variance = quad_mean.iter().zip(&quad_second).map(|(m, s)| s - m * m).collect();
        let fano_batches = (0..batches)
            .map(|b| {
                let size = ((b + 1) * count / batches - b * count / batches) as f64;
                let (m, s, _, _) = series_from_sums(&batch_sums[b], size, base, nt);
                m.iter().zip(&s).map(|(m, s)| fano_or_nan(*m, *s)).collect()
            })
            .collect();
        ModeSeries {
            mean,
            second,
            quad_mean,
            quad_second,
            fano,
            quadrature_variance,
            fano_batches,
        }
    };
    let stats = EnsembleStats {
        model: run.model,
        times: run.times.clone(),
        count,
        quadrature_angles: run.quadrature_angles,
        fundamental: build(0),
        harmonic: build(4),
        energy_mean: (0..nt).map(|i| totals[i * SLOTS + 8] / count as f64).collect(),
    };

    let mut snapshots = Vec::with_capacity(2 * snap_idx.len());
    for (k, &t) in run.snapshot_times.iter().enumerate() {
        for (m, mode) in [Mode::Fundamental, Mode::Harmonic].into_iter().enumerate() {
            snapshots.push(CloudSnapshot {
                time: t,
                mode,
                seed,
                points: clouds[k].iter().map(|p| p[m]).collect(),
            });
        }
    }
    Ok((stats, snapshots))
}

/// Convenience wrapper: sample and run in one call.
pub fn simulate(input: &CoherentInput, noise: &NoiseSpec, run: &EnsembleRun) -> Result<(EnsembleStats, Vec<CloudSnapshot>)> {
    let samples = sample_initial(input, noise)?;
    run_ensemble(&samples, noise.seed, run)
}

/// Quadrature angle aligned with the input amplitude, a natural default
/// (returns 0 for a vacuum input).
pub fn amplitude_angle(alpha: Complex64) -> f64 {
    if alpha.norm() > 0.0 {
        alpha.arg()
    } else {
        0.0
    }
}
