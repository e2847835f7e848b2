//! Two-mode Fock space with the conserved-quanta block structure.
//!
//! The interaction `g (a1^N aN† + a1†^N aN)` conserves `E = n1 + N·nN`, so the
//! state splits into independent blocks labelled by `E`. Within a block the
//! basis is indexed by `m = nN = 0..=E/N`, with `n1 = E - N·m`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex mode amplitude; `re`/`im` are dimensionless.
pub type ComplexAmplitude = Complex64;

/// Hard upper bound on the dimension of any single conserved-quanta block.
pub const MAX_BLOCK_DIM: usize = 4096;

/// Default Poissonian tail mass discarded per mode.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Which of the two interacting modes an observable refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// The fundamental mode `a1`.
    Fundamental,
    /// The N-th harmonic mode `aN`.
    Harmonic,
}

impl Mode {
    /// Short label used in file names and CSV headers ("1" or "N").
    pub fn label(self) -> &'static str {
        match self {
            Mode::Fundamental => "1",
            Mode::Harmonic => "N",
        }
    }
}

/// Harmonic order `N` and nonlinear coupling `g` (with ħ = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub order: u32,
    #[serde(default = "unit_coupling")]
    pub coupling: f64,
}

fn unit_coupling() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn new(order: u32, coupling: f64) -> Result<Self> {
        let spec = ModelSpec { order, coupling };
        spec.validate()?;
        Ok(spec)
    }

    /// Unit coupling, so that times are directly in units of `gt`.
    pub fn unit(order: u32) -> Self {
        ModelSpec { order, coupling: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::invalid("harmonic order must be >= 1"));
        }
        if !(self.coupling.is_finite() && self.coupling > 0.0) {
            return Err(Error::invalid("coupling must be finite and > 0"));
        }
        Ok(())
    }
}

/// Coherent amplitudes of both modes together with the model they drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentInput {
    pub alpha1: ComplexAmplitude,
    #[serde(rename = "alphaN")]
    pub alpha_n: ComplexAmplitude,
    pub model: ModelSpec,
}

impl CoherentInput {
    pub fn new(alpha1: ComplexAmplitude, alpha_n: ComplexAmplitude, model: ModelSpec) -> Result<Self> {
        let input = CoherentInput { alpha1, alpha_n, model };
        input.validate()?;
        Ok(input)
    }

    /// Input at the no-energy-transfer point `alpha1 = N r`, `alphaN = r`, zero mismatch.
    pub fn net_point(model: ModelSpec, r: f64) -> Self {
        CoherentInput {
            alpha1: Complex64::new(f64::from(model.order) * r, 0.0),
            alpha_n: Complex64::new(r, 0.0),
            model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(is_finite(self.alpha1) && is_finite(self.alpha_n)) {
            return Err(Error::invalid("coherent amplitudes must be finite"));
        }
        Ok(())
    }

    pub fn r1(&self) -> f64 {
        self.alpha1.norm()
    }

    pub fn r_n(&self) -> f64 {
        self.alpha_n.norm()
    }

    /// Phase mismatch `θ = N φ1 − φN`, wrapped to (−π, π].
    pub fn phase_mismatch(&self) -> f64 {
        let n = f64::from(self.model.order);
        let theta = n * self.alpha1.arg() - self.alpha_n.arg();
        wrap_angle(theta)
    }
}

pub(crate) fn is_finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

pub(crate) fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Fock expansion `c_n = e^{-|α|²/2} α^n / √(n!)` for `n = 0..=cutoff`.
///
/// Uses the recurrence `c_{n+1} = c_n α / √(n+1)`. For very large `|α|` the
/// magnitude is carried in log space so the seed `e^{-|α|²/2}` cannot underflow.
pub fn coherent_amplitudes(alpha: ComplexAmplitude, cutoff: usize) -> Result<Vec<Complex64>> {
    if !is_finite(alpha) {
        return Err(Error::invalid("coherent amplitude must be finite"));
    }
    let mut out = Vec::with_capacity(cutoff + 1);
    let mean = alpha.norm_sqr();
    if mean < 1200.0 {
        let mut c = Complex64::new((-0.5 * mean).exp(), 0.0);
        out.push(c);
        for n in 0..cutoff {
            c = c * alpha / ((n + 1) as f64).sqrt();
            out.push(c);
        }
    } else {
        let ln_r = alpha.norm().ln();
        let phase = alpha.arg();
        let mut log_mag = -0.5 * mean;
        for n in 0..=cutoff {
            if n > 0 {
                log_mag += ln_r - 0.5 * (n as f64).ln();
            }
            out.push(Complex64::from_polar(log_mag.exp(), n as f64 * phase));
        }
    }
    Ok(out)
}

/// Smallest `n` such that the Poisson(`mean`) mass above `n` is below `tail_tol`.
pub fn poisson_cutoff(mean: f64, tail_tol: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    // log-space pmf until far past the mode and negligible
    let ln_mean = mean.ln();
    let mut log_p = -mean;
    let mut pmf = Vec::new();
    let mut k = 0usize;
    loop {
        pmf.push(log_p.exp());
        if (k as f64) > mean && log_p < -80.0 {
            break;
        }
        k += 1;
        log_p += ln_mean - (k as f64).ln();
    }
    // suffix sums give the upper tail without cancellation
    let mut tail = 0.0;
    let mut cut = pmf.len() - 1;
    for n in (0..pmf.len()).rev() {
        // tail currently holds P(X > n)
        if tail >= tail_tol {
            break;
        }
        cut = n;
        tail += pmf[n];
    }
    cut
}

/// Per-mode and total-quanta cutoffs `(cutoff1, cutoffN, cutoffE)`.
pub fn choose_cutoffs(input: &CoherentInput, tail_tol: f64) -> (usize, usize, usize) {
    let c1 = poisson_cutoff(input.alpha1.norm_sqr(), tail_tol);
    let cn = poisson_cutoff(input.alpha_n.norm_sqr(), tail_tol);
    (c1, cn, c1 + input.model.order as usize * cn)
}

/// One conserved-quanta block: amplitudes indexed by `m = nN`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockBlock {
    pub total_quanta: u32,
    pub amplitudes: Vec<Complex64>,
}

impl FockBlock {
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn weight(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Pure two-mode state stored block by block, `E = 0..=cutoff_e`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeFockState {
    pub model: ModelSpec,
    pub blocks: Vec<FockBlock>,
    pub cutoff_e: usize,
}

/// Dimension of block `E` for harmonic order `N`.
pub fn block_dim(total_quanta: usize, order: u32) -> usize {
    total_quanta / order as usize + 1
}

impl TwoModeFockState {
    /// Occupation of `mode` for entry `m` of block `E`.
    #[inline]
    pub fn occupation(&self, mode: Mode, total_quanta: u32, m: usize) -> usize {
        match mode {
            Mode::Fundamental => total_quanta as usize - self.model.order as usize * m,
            Mode::Harmonic => m,
        }
    }

    /// Largest occupation number representable for `mode`.
    pub fn max_occupation(&self, mode: Mode) -> usize {
        match mode {
            Mode::Fundamental => self.cutoff_e,
            Mode::Harmonic => self.cutoff_e / self.model.order as usize,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        crate::util::neumaier_sum(self.blocks.iter().map(FockBlock::weight))
    }

    /// Amplitude of the Fock pair `(n1, nN)`, zero outside the truncation.
    pub fn amplitude(&self, n1: usize, n_h: usize) -> Complex64 {
        let e = n1 + self.model.order as usize * n_h;
        self.blocks
            .get(e)
            .and_then(|b| b.amplitudes.get(n_h))
            .copied()
            .unwrap_or_default()
    }

    /// Vacuum in both modes.
    pub fn vacuum(model: ModelSpec) -> Self {
        TwoModeFockState {
            model,
            blocks: vec![FockBlock {
                total_quanta: 0,
                amplitudes: vec![Complex64::new(1.0, 0.0)],
            }],
            cutoff_e: 0,
        }
    }

    /// Build a state from a function of the Fock pair, for every block up to `cutoff_e`.
    pub fn from_fn(model: ModelSpec, cutoff_e: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let n = model.order as usize;
        let blocks = (0..=cutoff_e)
            .map(|e| FockBlock {
                total_quanta: e as u32,
                amplitudes: (0..block_dim(e, model.order)).map(|m| f(e - n * m, m)).collect(),
            })
            .collect();
        TwoModeFockState { model, blocks, cutoff_e }
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        for block in &mut self.blocks {
            for c in &mut block.amplitudes {
                *c *= factor;
            }
        }
    }
}

/// Product of two coherent states, truncated by tail mass and renormalized.
pub fn prepare_product_state(input: &CoherentInput, tail_tol: f64) -> Result<TwoModeFockState> {
    prepare_product_state_bounded(input, tail_tol, MAX_BLOCK_DIM)
}

/// As [`prepare_product_state`] with an explicit bound on the largest block dimension.
pub fn prepare_product_state_bounded(
    input: &CoherentInput,
    tail_tol: f64,
    max_block_dim: usize,
) -> Result<TwoModeFockState> {
    input.validate()?;
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(Error::invalid("tail_tol must lie in (0, 1)"));
    }
    let model = input.model;
    let (_, _, cutoff_e) = choose_cutoffs(input, tail_tol);
    let dim = block_dim(cutoff_e, model.order);
    if dim > max_block_dim {
        return Err(Error::MemoryBound {
            block: cutoff_e as u32,
            dim,
            limit: max_block_dim,
        });
    }
    let c1 = coherent_amplitudes(input.alpha1, cutoff_e)?;
    let cn = coherent_amplitudes(input.alpha_n, cutoff_e / model.order as usize)?;
    let mut state = TwoModeFockState::from_fn(model, cutoff_e, |n1, nh| c1[n1] * cn[nh]);
    let norm = state.norm_sqr();
    if !(norm > 0.0) {
        return Err(Error::invalid("truncated state has zero norm"));
    }
    state.scale(1.0 / norm.sqrt());
    Ok(state)
}
