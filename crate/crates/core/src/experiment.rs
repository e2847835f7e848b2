//! Config-driven runs. Each run writes its tables together with
//! `summary.json` and `metadata.json` into one output directory; every file
//! is written to a temporary name first and then renamed into place.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analytic::{general_coefficients, net_fano, net_prediction, ratio_to_f64, spontaneous_coefficients};
use crate::classical::{self, integrals_of_motion, ClassicalState, TrajectoryRecord};
use crate::ensemble::{self, amplitude_angle, cloud_ring_metrics, EnsembleRun, NoiseSpec};
use crate::error::{Error, Result};
use crate::fock::{block_dim, choose_cutoffs, prepare_product_state_bounded, CoherentInput, Mode, ModelSpec, DEFAULT_TAIL_TOL, MAX_BLOCK_DIM};
use crate::observables::{fano, global_fano_refined, husimi_q, ladder_moments, FanoSeries, PhotonMoments, QGridSpec};
use crate::quantum::{reduced_density, EigenCache, Propagator};
use crate::util::{linspace, mean_rms};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default number of points in a scaled-time window.
pub const WINDOW_SAMPLES: usize = 2001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Quantum,
    Classical,
    Semiclassical,
    Analytic,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Quantum => "quantum",
            Engine::Classical => "classical",
            Engine::Semiclassical => "semiclassical",
            Engine::Analytic => "analytic",
        }
    }
}

/// Output time grid, in units of `gt` or of the scaled time `τ = Ω̄ g t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TimeGrid {
    Time { gt_end: f64, samples: usize },
    Scaled { tau_start: f64, tau_end: f64, samples: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    Fano,
    Quadrature,
    Qfunc,
    Clouds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputAmplitudes {
    pub alpha1: Complex64,
    #[serde(rename = "alphaN")]
    pub alpha_n: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub engine: Engine,
    pub model: ModelSpec,
    pub input: InputAmplitudes,
    #[serde(default)]
    pub grid: Option<TimeGrid>,
    /// Scaled-time window `[τ_lo, τ_hi]` for mean ± RMS statistics.
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "default_observables")]
    pub observables: Vec<Observable>,
    /// Times (`gt`) at which Q functions are written.
    #[serde(default)]
    pub qfunc_times: Vec<f64>,
    #[serde(default = "default_resolution")]
    pub qfunc_resolution: usize,
    /// Times (`gt`) at which ensemble clouds are written.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Quadrature angles for the two modes; defaults to the input phases.
    #[serde(default)]
    pub quadrature_angles: Option<[f64; 2]>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_block_dim")]
    pub max_block_dim: usize,
}

fn default_observables() -> Vec<Observable> {
    vec![Observable::Fano]
}

fn default_resolution() -> usize {
    QGridSpec::DEFAULT_RESOLUTION
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_tail_tol() -> f64 {
    DEFAULT_TAIL_TOL
}

fn default_tol() -> f64 {
    classical::DEFAULT_TOL
}

fn default_max_block_dim() -> usize {
    MAX_BLOCK_DIM
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl ExperimentConfig {
    /// Parses JSON, reporting the offending field path on failure.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { String::new() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn coherent_input(&self) -> CoherentInput {
        CoherentInput {
            alpha1: self.input.alpha1,
            alpha_n: self.input.alpha_n,
            model: self.model,
        }
    }

    /// Mean oscillation frequency `Ω̄` (units of `g`) at `r = |αN|`.
    pub fn omega_bar(&self) -> Option<f64> {
        crate::analytic::net_frequencies(self.model.order, self.input.alpha_n.norm())
            .ok()
            .map(|f| f.omega_bar)
    }

    /// The configured grid, or the window sampled at [`WINDOW_SAMPLES`] points.
    pub fn effective_grid(&self) -> Option<TimeGrid> {
        self.grid.or(self.window.map(|[lo, hi]| TimeGrid::Scaled {
            tau_start: lo,
            tau_end: hi,
            samples: WINDOW_SAMPLES,
        }))
    }

    /// Output times in units of `gt`.
    pub fn grid_gt(&self) -> Result<Vec<f64>> {
        match self.effective_grid() {
            Some(TimeGrid::Time { gt_end, samples }) => Ok(linspace(0.0, gt_end, samples)),
            Some(TimeGrid::Scaled { tau_start, tau_end, samples }) => {
                let w = self.omega_bar().ok_or_else(|| Error::config("grid", "scaled time needs a nonzero harmonic amplitude"))?;
                Ok(linspace(tau_start / w, tau_end / w, samples))
            }
            None => Err(Error::config("grid", "a time grid or a window is required for this engine")),
        }
    }

    fn quadrature_pair(&self) -> [f64; 2] {
        self.quadrature_angles
            .unwrap_or([amplitude_angle(self.input.alpha1), amplitude_angle(self.input.alpha_n)])
    }

    fn wants(&self, o: Observable) -> bool {
        self.observables.contains(&o)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.order < 1 {
            return Err(Error::config("model.order", "harmonic order must be >= 1"));
        }
        if !positive(self.model.coupling) {
            return Err(Error::config("model.coupling", "coupling must be finite and > 0"));
        }
        for (path, z) in [("input.alpha1", self.input.alpha1), ("input.alphaN", self.input.alpha_n)] {
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::config(path, "amplitude must be finite"));
            }
        }
        let needs_r = |path: &str| -> Result<()> {
            if self.input.alpha_n.norm() > 0.0 {
                Ok(())
            } else {
                Err(Error::config(path, "scaled time needs a nonzero harmonic amplitude"))
            }
        };
        match self.grid {
            Some(TimeGrid::Time { gt_end, samples }) => {
                if !positive(gt_end) {
                    return Err(Error::config("grid.gt_end", "must be finite and > 0"));
                }
                if samples < 2 {
                    return Err(Error::config("grid.samples", "need at least 2 samples"));
                }
            }
            Some(TimeGrid::Scaled { tau_start, tau_end, samples }) => {
                needs_r("grid")?;
                if !(tau_start >= 0.0 && tau_end.is_finite() && tau_end > tau_start) {
                    return Err(Error::config("grid.tau_end", "need 0 <= tau_start < tau_end"));
                }
                if samples < 2 {
                    return Err(Error::config("grid.samples", "need at least 2 samples"));
                }
            }
            None => {}
        }
        if let Some([lo, hi]) = self.window {
            needs_r("window")?;
            if !(lo >= 0.0 && hi.is_finite() && hi > lo) {
                return Err(Error::config("window", "need 0 <= lo < hi"));
            }
        }
        if self.engine != Engine::Analytic && self.effective_grid().is_none() {
            return Err(Error::config("grid", "a time grid or a window is required for this engine"));
        }
        if self.engine == Engine::Analytic && self.input.alpha1.norm() == 0.0 && self.input.alpha_n.norm() == 0.0 {
            return Err(Error::config("input", "analytic predictions need a nonzero input"));
        }
        if !positive(self.noise.sigma2) {
            return Err(Error::config("noise.sigma2", "must be finite and > 0"));
        }
        if self.noise.count == 0 {
            return Err(Error::config("noise.count", "need at least one trajectory"));
        }
        if !(self.tail_tol > 0.0 && self.tail_tol < 1.0) {
            return Err(Error::config("tail_tol", "must lie in (0, 1)"));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::config("tol", "must lie in (0, 1)"));
        }
        if self.max_block_dim == 0 {
            return Err(Error::config("max_block_dim", "must be positive"));
        }
        if self.qfunc_resolution < 2 {
            return Err(Error::config("qfunc_resolution", "need at least 2 points per axis"));
        }
        for (path, ts) in [("qfunc_times", &self.qfunc_times), ("snapshot_times", &self.snapshot_times)] {
            if ts.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(Error::config(path, "times must be finite and >= 0"));
            }
        }
        if self.wants(Observable::Qfunc) {
            if self.engine != Engine::Quantum {
                return Err(Error::config("observables", "qfunc is available for the quantum engine only"));
            }
            if self.qfunc_times.is_empty() {
                return Err(Error::config("qfunc_times", "qfunc requested without times"));
            }
        }
        if self.wants(Observable::Clouds) {
            if self.engine != Engine::Semiclassical {
                return Err(Error::config("observables", "clouds are available for the semiclassical engine only"));
            }
            if self.snapshot_times.is_empty() {
                return Err(Error::config("snapshot_times", "clouds requested without times"));
            }
        }
        Ok(())
    }
}

/// Files and JSON documents produced by one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Value,
    pub metadata: Value,
}

struct OutputDir {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl OutputDir {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::config("output_dir", format!("{}: {e}", dir.display())))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }

    fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn finish(mut self, summary: Value, metadata: Value) -> Result<RunArtifact> {
        self.write("summary.json", &pretty(&summary)?)?;
        self.write("metadata.json", &pretty(&metadata)?)?;
        Ok(RunArtifact {
            output_dir: self.dir,
            files: self.files,
            summary,
            metadata,
        })
    }
}

fn pretty(v: &Value) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v)?;
    out.push(b'\n');
    Ok(out)
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn fano_or_nan(m: PhotonMoments) -> f64 {
    fano(m).unwrap_or(f64::NAN)
}

/// Mean and RMS of the finite values of `fano` at times in `[lo, hi]`.
fn window_of(times: &[f64], values: &[f64], lo: f64, hi: f64) -> (f64, f64, usize) {
    let series = FanoSeries {
        mode: Mode::Fundamental,
        times: times.to_vec(),
        values: values.to_vec(),
    };
    let picked = times.iter().filter(|t| **t >= lo && **t <= hi).count();
    match series.window_stats(lo, hi) {
        Some((m, r)) => (m, r, picked),
        None => (f64::NAN, f64::NAN, 0),
    }
}

/// Window bounds in `gt`, or the whole grid when no window is set.
fn window_bounds(cfg: &ExperimentConfig, gts: &[f64]) -> Result<(f64, f64)> {
    match cfg.window {
        Some([lo, hi]) => {
            let w = cfg.omega_bar().ok_or_else(|| Error::config("window", "needs a nonzero harmonic amplitude"))?;
            let (lo, hi) = (lo / w, hi / w);
            // tolerate rounding of grid points sitting on the edges
            let slack = 1e-12 * hi;
            let (lo, hi) = (lo - slack, hi + slack);
            if !gts.iter().any(|t| *t >= lo && *t <= hi) {
                return Err(Error::config("window", "no grid point falls inside the window"));
            }
            Ok((lo, hi))
        }
        None => Ok((f64::NEG_INFINITY, f64::INFINITY)),
    }
}

fn base_summary(cfg: &ExperimentConfig) -> serde_json::Map<String, Value> {
    let mut s = serde_json::Map::new();
    s.insert("engine".into(), json!(cfg.engine.name()));
    s.insert("N".into(), json!(cfg.model.order));
    s.insert("r".into(), json!(cfg.input.alpha_n.norm()));
    s.insert("r1".into(), json!(cfg.input.alpha1.norm()));
    s.insert("window".into(), cfg.window.map_or(Value::Null, |w| json!(w)));
    for k in ["F1_mean", "F1_rms", "FN_mean", "FN_rms", "cutoffs"] {
        s.insert(k.into(), Value::Null);
    }
    s
}

fn metadata(cfg: &ExperimentConfig, cutoffs: Option<(usize, usize, usize)>, started: Instant) -> Result<Value> {
    Ok(json!({
        "config": serde_json::to_value(cfg)?,
        "seed": cfg.noise.seed,
        "cutoffs": cutoffs.map(|(a, b, c)| json!([a, b, c])),
        "version": VERSION,
        "threads": rayon::current_num_threads(),
        "wall_time_s": started.elapsed().as_secs_f64(),
        "time_unit": "gt",
    }))
}

/// Runs the configured engine and writes its outputs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifact> {
    cfg.validate()?;
    let started = Instant::now();
    let mut out = OutputDir::create(&cfg.output_dir)?;
    let (summary, cutoffs) = match cfg.engine {
        Engine::Quantum => run_quantum(cfg, &mut out)?,
        Engine::Classical => (run_classical(cfg, &mut out)?, None),
        Engine::Semiclassical => (run_semiclassical(cfg, &mut out)?, None),
        Engine::Analytic => (run_analytic(cfg)?, None),
    };
    let meta = metadata(cfg, cutoffs, started)?;
    out.finish(summary, meta)
}

fn run_quantum(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(Value, Option<(usize, usize, usize)>)> {
    let input = cfg.coherent_input();
    let g = cfg.model.coupling;
    let cutoffs = choose_cutoffs(&input, cfg.tail_tol);
    let state = prepare_product_state_bounded(&input, cfg.tail_tol, cfg.max_block_dim)?;
    let cache = EigenCache::new();
    let prop = Propagator::from_state(&state, &cache)?;
    let gts = cfg.grid_gt()?;
    let moments: Vec<_> = gts.par_iter().map(|gt| prop.moments_at(gt / g)).collect();
    let f1: Vec<f64> = moments.iter().map(|m| fano_or_nan(m.fundamental)).collect();
    let fnn: Vec<f64> = moments.iter().map(|m| fano_or_nan(m.harmonic)).collect();

    out.write_with("fano.csv", |w| {
        use std::io::Write;
        writeln!(w, "gt,n1_mean,n1_second,F1,nN_mean,nN_second,FN")?;
        for (i, gt) in gts.iter().enumerate() {
            let m = &moments[i];
            writeln!(
                w,
                "{gt},{},{},{},{},{},{}",
                m.fundamental.mean, m.fundamental.second, f1[i], m.harmonic.mean, m.harmonic.second, fnn[i]
            )?;
        }
        Ok(())
    })?;

    let mut s = base_summary(cfg);
    let (lo, hi) = window_bounds(cfg, &gts)?;
    let (m1, r1, n_in) = window_of(&gts, &f1, lo, hi);
    let (mn, rn, _) = window_of(&gts, &fnn, lo, hi);
    s.insert("F1_mean".into(), finite_or_null(m1));
    s.insert("F1_rms".into(), finite_or_null(r1));
    s.insert("FN_mean".into(), finite_or_null(mn));
    s.insert("FN_rms".into(), finite_or_null(rn));
    s.insert("window_samples".into(), json!(n_in));
    s.insert("cutoffs".into(), json!([cutoffs.0, cutoffs.1, cutoffs.2]));
    s.insert("max_block_dim".into(), json!(block_dim(cutoffs.2, cfg.model.order)));
    s.insert("truncated_norm_loss".into(), json!(0.0f64.max(1.0 - state_mass_kept(&input, cfg.tail_tol))));

    if cfg.wants(Observable::Quadrature) {
        let angles = cfg.quadrature_pair();
        let rows: Vec<(f64, f64)> = gts
            .par_iter()
            .map(|gt| {
                let st = prop.state_at(gt / g);
                (
                    ladder_moments(&st, Mode::Fundamental).quadrature_variance(angles[0]),
                    ladder_moments(&st, Mode::Harmonic).quadrature_variance(angles[1]),
                )
            })
            .collect();
        out.write_with("quadrature.csv", |w| {
            use std::io::Write;
            writeln!(w, "gt,S1,SN")?;
            for (gt, (a, b)) in gts.iter().zip(&rows) {
                writeln!(w, "{gt},{a},{b}")?;
            }
            Ok(())
        })?;
        let s1: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let sn: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let (q1, _, _) = window_of(&gts, &s1, lo, hi);
        let (qn, _, _) = window_of(&gts, &sn, lo, hi);
        s.insert("quadrature_angles".into(), json!(angles));
        s.insert("S1_mean".into(), finite_or_null(q1));
        s.insert("SN_mean".into(), finite_or_null(qn));
    }

    if cfg.wants(Observable::Qfunc) {
        let mut entries = Vec::new();
        for &gt in &cfg.qfunc_times {
            let st = prop.state_at(gt / g);
            for mode in [Mode::Fundamental, Mode::Harmonic] {
                let rho = reduced_density(&st, mode);
                let spec = QGridSpec {
                    resolution: cfg.qfunc_resolution,
                    ..QGridSpec::enclosing(&rho)
                };
                let q = husimi_q(&rho, spec)?;
                let name = format!("qfunc_mode{}_gt{gt}.csv", mode.label());
                out.write_with(&name, |w| q.write_csv(w))?;
                let mass = q.mass();
                let sectors = q.sector_masses(ensemble::RING_SECTORS);
                let min_share = sectors.iter().cloned().fold(f64::INFINITY, f64::min) / mass;
                entries.push(json!({
                    "gt": gt,
                    "mode": mode.label(),
                    "file": name,
                    "mass": mass,
                    "half_extent": spec.half_extent,
                    "min_sector_share": min_share,
                }));
            }
        }
        s.insert("qfunc".into(), Value::Array(entries));
    }
    Ok((Value::Object(s), Some(cutoffs)))
}

/// Product of the two retained Poisson masses.
fn state_mass_kept(input: &CoherentInput, tail_tol: f64) -> f64 {
    let (c1, cn, _) = choose_cutoffs(input, tail_tol);
    let mass = |alpha: Complex64, cut: usize| -> f64 {
        crate::fock::coherent_amplitudes(alpha, cut)
            .map(|v| v.iter().map(|c| c.norm_sqr()).sum())
            .unwrap_or(f64::NAN)
    };
    mass(input.alpha1, c1) * mass(input.alpha_n, cn)
}

fn run_classical(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Value> {
    let g = cfg.model.coupling;
    let gts = cfg.grid_gt()?;
    let times: Vec<f64> = gts.iter().map(|gt| gt / g).collect();
    let s0 = ClassicalState::new(cfg.input.alpha1, cfg.input.alpha_n);
    let states = classical::integrate_at(s0, cfg.model, &times, cfg.tol)?;
    let record = TrajectoryRecord {
        model: cfg.model,
        times: times.clone(),
        states,
    };
    out.write_with("trajectory.csv", |w| record.write_csv(w))?;

    let mut s = base_summary(cfg);
    let (de, dg) = record.integral_drift();
    let i0 = integrals_of_motion(&s0, cfg.model);
    s.insert("energy".into(), json!(i0.energy));
    s.insert("gamma".into(), json!(i0.gamma));
    s.insert("energy_drift".into(), json!(de));
    s.insert("gamma_drift".into(), json!(dg));
    let last = record.states.last().expect("grid has at least two points");
    s.insert("final_n1".into(), json!(last.n1()));
    s.insert("final_nN".into(), json!(last.n_n()));
    if cfg.model.order == 2 {
        // deviation of the integrated harmonic intensity from the elliptic solution
        let dev = times
            .iter()
            .zip(&record.states)
            .map(|(t, st)| classical::shg_elliptic_solution(&s0, cfg.model, *t).map(|n2| (n2 - st.n_n()).abs()))
            .collect::<Result<Vec<_>>>();
        if let Ok(d) = dev {
            s.insert("elliptic_max_deviation".into(), json!(d.into_iter().fold(0.0, f64::max)));
        }
    }
    Ok(Value::Object(s))
}

fn run_semiclassical(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Value> {
    let input = cfg.coherent_input();
    let g = cfg.model.coupling;
    let gts = cfg.grid_gt()?;
    let run = EnsembleRun {
        model: cfg.model,
        times: gts.iter().map(|gt| gt / g).collect(),
        snapshot_times: if cfg.wants(Observable::Clouds) {
            cfg.snapshot_times.iter().map(|gt| gt / g).collect()
        } else {
            Vec::new()
        },
        quadrature_angles: cfg.quadrature_pair(),
        tol: cfg.tol,
    };
    let (stats, clouds) = ensemble::simulate(&input, &cfg.noise, &run)?;
    out.write_with("ensemble.csv", |w| stats.write_csv(w))?;

    let mut s = base_summary(cfg);
    let (lo, hi) = window_bounds(cfg, &gts)?;
    let (lo_t, hi_t) = (lo / g, hi / g);
    for (mode, key) in [(Mode::Fundamental, "F1"), (Mode::Harmonic, "FN")] {
        if let Some(w) = stats.window_fano(mode, lo_t, hi_t) {
            s.insert(format!("{key}_mean"), finite_or_null(w.mean));
            s.insert(format!("{key}_rms"), finite_or_null(w.rms));
            s.insert(format!("{key}_stderr"), finite_or_null(w.stderr));
            s.insert("window_samples".into(), json!(w.samples));
        }
    }
    let sq: Vec<f64> = stats.fundamental.quadrature_variance.clone();
    let sqn: Vec<f64> = stats.harmonic.quadrature_variance.clone();
    s.insert("S1_mean".into(), finite_or_null(window_of(&stats.times, &sq, lo_t, hi_t).0));
    s.insert("SN_mean".into(), finite_or_null(window_of(&stats.times, &sqn, lo_t, hi_t).0));
    s.insert("quadrature_angles".into(), json!(run.quadrature_angles));
    s.insert("trajectories".into(), json!(stats.count));
    s.insert("seed".into(), json!(cfg.noise.seed));
    s.insert("sigma2".into(), json!(cfg.noise.sigma2));
    let (e_mean, e_rms) = mean_rms(&stats.energy_mean);
    s.insert("energy_mean".into(), json!(e_mean));
    s.insert("energy_mean_rms".into(), json!(e_rms));
    if let Some(w) = cfg.noise.regime_warning(&input) {
        s.insert("warning".into(), json!(w));
    }

    let mut rings = Vec::new();
    for snap in &clouds {
        let gt = snap.time * g;
        let name = format!("cloud_mode{}_gt{gt}.csv", snap.mode.label());
        out.write_with(&name, |w| snap.write_csv(gt, w))?;
        let m = cloud_ring_metrics(snap)?;
        rings.push(json!({
            "gt": gt,
            "mode": snap.mode.label(),
            "file": name,
            "radial_mean": m.radial_mean,
            "radial_variance": m.radial_variance,
            "coverage": m.coverage,
        }));
    }
    s.insert("clouds".into(), Value::Array(rings));
    Ok(Value::Object(s))
}

fn coefficients_json(c: &crate::analytic::ShortTimeCoefficients) -> Value {
    json!({
        "powers": c.powers.iter().map(|(p, v)| json!([p, v])).collect::<Vec<_>>(),
        "remainder": c.remainder,
    })
}

fn run_analytic(cfg: &ExperimentConfig) -> Result<Value> {
    let input = cfg.coherent_input();
    let order = cfg.model.order;
    let (r1, rn) = (input.r1(), input.r_n());
    let mut s = base_summary(cfg);
    let (f1s, fns) = net_fano(order)?;
    s.insert("F1S".into(), json!(f1s.to_string()));
    s.insert("FNS".into(), json!(fns.to_string()));
    s.insert("F1S_value".into(), json!(ratio_to_f64(f1s)));
    s.insert("FNS_value".into(), json!(ratio_to_f64(fns)));
    if rn > 0.0 {
        let p = net_prediction(order, rn)?;
        s.insert("omega_bar".into(), json!(p.omega_bar));
        s.insert("delta_omega".into(), json!(p.delta_omega));
        s.insert("t_osc".into(), json!(p.t_osc));
        s.insert("t_rel".into(), json!(p.t_rel));
        let (a2, b2) = crate::analytic::net_amplitude_moments(order, rn, cfg.noise.sigma2);
        s.insert("A2_mean".into(), json!(a2));
        s.insert("B2_mean".into(), json!(b2));
        let at_net = (r1 - f64::from(order) * rn).abs() <= 1e-12 * r1.max(1.0) && input.phase_mismatch().abs() < 1e-12;
        s.insert("at_stationary_point".into(), json!(at_net));
    }
    let short = if order == 2 && rn == 0.0 && r1 > 0.0 {
        let (a, b) = spontaneous_coefficients(r1);
        Some((a, Some(b)))
    } else {
        general_coefficients(order, r1, rn, input.phase_mismatch()).ok()
    };
    if let Some((a, b)) = short {
        s.insert(
            "short_time".into(),
            json!({
                "theta": input.phase_mismatch(),
                "F1": coefficients_json(&a),
                "FN": b.as_ref().map(coefficients_json),
            }),
        );
    }
    Ok(Value::Object(s))
}

/// Which stationary Fano factor a reproduction table compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Table {
    Fundamental,
    Harmonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub order: u32,
    pub closed_form: String,
    pub closed_value: f64,
    /// Window mean of the quantum Fano factor, absent when skipped.
    pub quantum: Option<f64>,
    pub quantum_rms: Option<f64>,
    pub relative_deviation: Option<f64>,
    pub cutoffs: (usize, usize, usize),
    pub max_block_dim: usize,
    /// Reason for not running, e.g. a block over the dimension budget.
    pub skipped: Option<String>,
}

/// Settings for [`reproduce_table`].
#[derive(Debug, Clone, PartialEq)]
pub struct TableRun {
    pub orders: Vec<u32>,
    pub r: f64,
    pub tail_tol: f64,
    pub max_block_dim: usize,
    pub window: [f64; 2],
    pub samples: usize,
}

impl Default for TableRun {
    fn default() -> Self {
        TableRun {
            orders: vec![1, 2, 3],
            r: 5.0,
            tail_tol: DEFAULT_TAIL_TOL,
            max_block_dim: MAX_BLOCK_DIM,
            window: [50.0, 150.0],
            samples: WINDOW_SAMPLES,
        }
    }
}

/// Window-averaged quantum Fano factors at the stationary point
/// `α1 = N r, αN = r` next to the semiclassical fractions. Both tables come
/// from the same runs.
pub fn reproduce_tables(run: &TableRun) -> Result<(Vec<TableRow>, Vec<TableRow>)> {
    if !positive(run.r) {
        return Err(Error::config("r", "must be finite and > 0"));
    }
    if run.orders.iter().any(|n| *n < 1) {
        return Err(Error::config("orders", "harmonic orders must be >= 1"));
    }
    if !(run.window[0] >= 0.0 && run.window[1] > run.window[0]) || run.samples < 2 {
        return Err(Error::config("window", "need 0 <= lo < hi and at least 2 samples"));
    }
    let cache = EigenCache::new();
    let mut t1 = Vec::new();
    let mut t2 = Vec::new();
    for &order in &run.orders {
        let model = ModelSpec::unit(order);
        let input = CoherentInput::net_point(model, run.r);
        let cutoffs = choose_cutoffs(&input, run.tail_tol);
        let dim = block_dim(cutoffs.2, order);
        let (c1, cn) = net_fano(order)?;
        let row = |ratio: num_rational::Ratio<i64>, q: Option<(f64, f64)>, skipped: Option<String>| {
            let closed = ratio_to_f64(ratio);
            TableRow {
                order,
                closed_form: ratio.to_string(),
                closed_value: closed,
                quantum: q.map(|v| v.0),
                quantum_rms: q.map(|v| v.1),
                relative_deviation: q.map(|v| (v.0 - closed).abs() / closed),
                cutoffs,
                max_block_dim: dim,
                skipped,
            }
        };
        if dim > run.max_block_dim {
            let why = format!("block dimension {dim} exceeds the budget {}", run.max_block_dim);
            t1.push(row(c1, None, Some(why.clone())));
            t2.push(row(cn, None, Some(why)));
            continue;
        }
        let state = prepare_product_state_bounded(&input, run.tail_tol, run.max_block_dim)?;
        let prop = Propagator::from_state(&state, &cache)?;
        let w = crate::analytic::net_frequencies(order, run.r)?.omega_bar;
        let gts = linspace(run.window[0] / w, run.window[1] / w, run.samples);
        let moments: Vec<_> = gts.par_iter().map(|gt| prop.moments_at(*gt)).collect();
        let f1: Vec<f64> = moments.iter().map(|m| fano_or_nan(m.fundamental)).collect();
        let fnn: Vec<f64> = moments.iter().map(|m| fano_or_nan(m.harmonic)).collect();
        t1.push(row(c1, Some(mean_rms(&f1)), None));
        t2.push(row(cn, Some(mean_rms(&fnn)), None));
    }
    Ok((t1, t2))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV `N,quantum,quantum_rms,closed_form,closed_value,relative_deviation,cutoffE,max_block_dim,skipped`.
pub fn write_table_csv(rows: &[TableRow], mut w: impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "N,quantum,quantum_rms,closed_form,closed_value,relative_deviation,cutoffE,max_block_dim,skipped")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.order,
            opt(r.quantum),
            opt(r.quantum_rms),
            r.closed_form,
            r.closed_value,
            opt(r.relative_deviation),
            r.cutoffs.2,
            r.max_block_dim,
            r.skipped.as_deref().unwrap_or("")
        )?;
    }
    Ok(())
}

/// Runs [`reproduce_tables`] and writes both tables into `dir`.
pub fn reproduce_tables_to(run: &TableRun, dir: &Path) -> Result<RunArtifact> {
    let started = Instant::now();
    let mut out = OutputDir::create(dir)?;
    let (t1, t2) = reproduce_tables(run)?;
    out.write_with("table_fundamental.csv", |w| write_table_csv(&t1, w))?;
    out.write_with("table_harmonic.csv", |w| write_table_csv(&t2, w))?;
    let summary = json!({
        "r": run.r,
        "window": run.window,
        "fundamental": t1,
        "harmonic": t2,
    });
    let meta = json!({
        "orders": run.orders,
        "r": run.r,
        "tail_tol": run.tail_tol,
        "max_block_dim": run.max_block_dim,
        "window": run.window,
        "samples": run.samples,
        "version": VERSION,
        "threads": rayon::current_num_threads(),
        "wall_time_s": started.elapsed().as_secs_f64(),
        "time_unit": "gt",
    });
    out.finish(summary, meta)
}

/// Settings for [`scan_global_fano`]. Amplitudes are real and nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRun {
    pub order: u32,
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    /// Finite averaging horizon in `gt`; `None` takes the infinite-time limit.
    pub horizon: Option<f64>,
    pub tail_tol: f64,
    pub max_block_dim: usize,
}

/// Global Fano factors of one grid cell; `None` where the mean vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub alpha1: f64,
    pub alpha2: f64,
    pub fg1: Option<f64>,
    pub fg2: Option<f64>,
}

pub fn scan_global_fano(run: &ScanRun) -> Result<Vec<ScanCell>> {
    if run.order < 1 {
        return Err(Error::config("order", "harmonic order must be >= 1"));
    }
    if run.alpha1.iter().chain(&run.alpha2).any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(Error::config("alpha", "amplitudes must be finite and >= 0"));
    }
    if let Some(h) = run.horizon {
        if !positive(h) {
            return Err(Error::config("horizon", "must be finite and > 0"));
        }
    }
    let model = ModelSpec::unit(run.order);
    let cache = EigenCache::new();
    let mut cells = Vec::with_capacity(run.alpha1.len() * run.alpha2.len());
    for &a2 in &run.alpha2 {
        for &a1 in &run.alpha1 {
            let mut cell = ScanCell {
                alpha1: a1,
                alpha2: a2,
                fg1: None,
                fg2: None,
            };
            if a1 == 0.0 && a2 == 0.0 {
                cells.push(cell);
                continue;
            }
            let input = CoherentInput {
                alpha1: Complex64::new(a1, 0.0),
                alpha_n: Complex64::new(a2, 0.0),
                model,
            };
            let state = prepare_product_state_bounded(&input, run.tail_tol, run.max_block_dim)?;
            let prop = Propagator::from_state(&state, &cache)?;
            match run.horizon {
                None => {
                    let m = prop.time_averaged_moments();
                    cell.fg1 = fano(m.fundamental).ok();
                    cell.fg2 = fano(m.harmonic).ok();
                }
                Some(h) => {
                    for mode in [Mode::Fundamental, Mode::Harmonic] {
                        let eval = |ts: &[f64]| ts.par_iter().map(|t| prop.moments_at(*t).mode(mode)).collect();
                        let v = global_fano_refined(eval, h, 257, 65_537, 1e-6).ok().map(|gf| gf.value);
                        match mode {
                            Mode::Fundamental => cell.fg1 = v,
                            Mode::Harmonic => cell.fg2 = v,
                        }
                    }
                }
            }
            cells.push(cell);
        }
    }
    Ok(cells)
}

/// CSV `alpha1,alpha2,FG1,FG2`; undefined values are left empty.
pub fn write_scan_csv(cells: &[ScanCell], mut w: impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "alpha1,alpha2,FG1,FG2")?;
    for c in cells {
        writeln!(w, "{},{},{},{}", c.alpha1, c.alpha2, opt(c.fg1), opt(c.fg2))?;
    }
    Ok(())
}

/// Per `alpha2` row, the `alpha1` that minimizes each global Fano factor.
pub fn scan_ridges(cells: &[ScanCell]) -> Vec<Value> {
    let mut rows: Vec<f64> = cells.iter().map(|c| c.alpha2).collect();
    rows.dedup();
    rows.iter()
        .map(|&a2| {
            let row: Vec<&ScanCell> = cells.iter().filter(|c| c.alpha2 == a2).collect();
            let argmin = |pick: fn(&ScanCell) -> Option<f64>| {
                row.iter()
                    .filter_map(|c| pick(c).map(|v| (c.alpha1, v)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(a1, v)| json!({"alpha1": a1, "value": v}))
            };
            json!({
                "alpha2": a2,
                "FG1_min": argmin(|c| c.fg1),
                "FG2_min": argmin(|c| c.fg2),
            })
        })
        .collect()
}

/// Runs [`scan_global_fano`] and writes `global_fano.csv` into `dir`.
pub fn scan_global_fano_to(run: &ScanRun, dir: &Path) -> Result<RunArtifact> {
    let started = Instant::now();
    let mut out = OutputDir::create(dir)?;
    let cells = scan_global_fano(run)?;
    out.write_with("global_fano.csv", |w| write_scan_csv(&cells, w))?;
    let summary = json!({
        "N": run.order,
        "horizon": run.horizon,
        "cells": cells.len(),
        "ridges": scan_ridges(&cells),
    });
    let meta = json!({
        "order": run.order,
        "alpha1": run.alpha1,
        "alpha2": run.alpha2,
        "horizon": run.horizon,
        "average": if run.horizon.is_some() { "trapezoid" } else { "infinite_time" },
        "tail_tol": run.tail_tol,
        "version": VERSION,
        "threads": rayon::current_num_threads(),
        "wall_time_s": started.elapsed().as_secs_f64(),
        "time_unit": "gt",
    });
    out.finish(summary, meta)
}
