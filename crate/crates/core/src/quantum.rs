//! Exact quantum propagation by blockwise diagonalization of the interaction
//! Hamiltonian `H = g (a1^N aN† + a1†^N aN)`.
//!
//! Each conserved-quanta block is a real symmetric tridiagonal matrix with zero
//! diagonal. Blocks are diagonalized once at unit coupling (the matrix is
//! linear in `g`) and cached, after which any time is reached by phase
//! rotation in the eigenbasis.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::{block_dim, FockBlock, Mode, ModelSpec, TwoModeFockState, MAX_BLOCK_DIM};
use crate::observables::PhotonMoments;
use crate::tridiag::{tridiagonal_eigen, TridiagEigen};
use crate::util::CompensatedSum;

pub mod cache;

/// Interaction Hamiltonian restricted to one conserved-quanta block.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalBlockHamiltonian {
    pub total_quanta: u32,
    pub model: ModelSpec,
    /// `offdiag[m]` couples `nN = m` to `nN = m + 1`; the diagonal is zero.
    pub offdiag: Vec<f64>,
}

impl TridiagonalBlockHamiltonian {
    pub fn dim(&self) -> usize {
        self.offdiag.len() + 1
    }
}

/// `√(m+1) · √(∏_{j<N} (E − N m − j))`, the unit-coupling matrix element.
fn unit_offdiag(total_quanta: u32, order: u32) -> Vec<f64> {
    let e = total_quanta as usize;
    let n = order as usize;
    let dim = block_dim(e, order);
    (0..dim.saturating_sub(1))
        .map(|m| {
            let n1 = e - n * m;
            let falling = (0..n).fold(1.0f64, |acc, j| acc * ((n1 - j) as f64).sqrt());
            ((m + 1) as f64).sqrt() * falling
        })
        .collect()
}

/// Matrix of `H` in block `E` for the given model.
pub fn build_block(total_quanta: u32, model: ModelSpec) -> TridiagonalBlockHamiltonian {
    let offdiag = unit_offdiag(total_quanta, model.order)
        .into_iter()
        .map(|x| model.coupling * x)
        .collect();
    TridiagonalBlockHamiltonian {
        total_quanta,
        model,
        offdiag,
    }
}

/// Eigen-decomposition of one block: `H_E = V diag(λ) Vᵀ`.
#[derive(Debug, Clone)]
pub struct BlockEigen {
    pub total_quanta: u32,
    /// Coupling the unit-form eigenvalues are scaled by.
    pub coupling: f64,
    unit: Arc<TridiagEigen>,
}

impl BlockEigen {
    pub fn dim(&self) -> usize {
        self.unit.dim()
    }

    /// Eigenvalues in ascending order (units of ħ = 1, i.e. energy/time).
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.unit.values.iter().map(|l| self.coupling * l).collect()
    }

    /// Eigenvalues at unit coupling.
    pub fn unit_eigenvalues(&self) -> &[f64] {
        &self.unit.values
    }

    /// Column-major eigenvector matrix.
    pub fn eigenvectors(&self) -> &[f64] {
        &self.unit.vectors
    }

    pub fn eigenvector(&self, k: usize) -> &[f64] {
        self.unit.column(k)
    }

    fn project(&self, amps: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim())
            .map(|k| {
                self.eigenvector(k)
                    .iter()
                    .zip(amps)
                    .fold(Complex64::default(), |acc, (v, c)| acc + c * v)
            })
            .collect()
    }

    /// `out += V y`
    fn expand_into(&self, y: &[Complex64], out: &mut [Complex64]) {
        for (k, yk) in y.iter().enumerate() {
            if yk.re == 0.0 && yk.im == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.eigenvector(k)) {
                *o += yk * v;
            }
        }
    }
}

fn check_dim(total_quanta: u32, dim: usize) -> Result<()> {
    if dim > MAX_BLOCK_DIM {
        return Err(Error::MemoryBound {
            block: total_quanta,
            dim,
            limit: MAX_BLOCK_DIM,
        });
    }
    Ok(())
}

fn diagonalize_unit(total_quanta: u32, order: u32) -> Result<TridiagEigen> {
    let off = unit_offdiag(total_quanta, order);
    check_dim(total_quanta, off.len() + 1)?;
    let diag = vec![0.0; off.len() + 1];
    tridiagonal_eigen(&diag, &off).map_err(|e| Error::NoConvergence {
        block: total_quanta,
        iterations: e.iterations,
    })
}

/// Full orthonormal eigen-decomposition of a block.
pub fn diagonalize_block(h: &TridiagonalBlockHamiltonian) -> Result<BlockEigen> {
    let unit = diagonalize_unit(h.total_quanta, h.model.order)?;
    Ok(BlockEigen {
        total_quanta: h.total_quanta,
        coupling: h.model.coupling,
        unit: Arc::new(unit),
    })
}

/// Thread-safe cache of unit-coupling block decompositions keyed by `(N, E)`.
#[derive(Debug, Default)]
pub struct EigenCache {
    entries: RwLock<HashMap<(u32, u32), Arc<TridiagEigen>>>,
}

impl EigenCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn insert(&self, order: u32, total_quanta: u32, eig: TridiagEigen) {
        self.entries
            .write()
            .expect("cache lock poisoned")
            .entry((order, total_quanta))
            .or_insert_with(|| Arc::new(eig));
    }

    pub(crate) fn snapshot(&self) -> Vec<((u32, u32), Arc<TridiagEigen>)> {
        let map = self.entries.read().expect("cache lock poisoned");
        let mut items: Vec<_> = map.iter().map(|(k, v)| (*k, Arc::clone(v))).collect();
        items.sort_by_key(|(k, _)| *k);
        items
    }

    fn get_or_compute(&self, order: u32, total_quanta: u32) -> Result<Arc<TridiagEigen>> {
        if let Some(hit) = self
            .entries
            .read()
            .expect("cache lock poisoned")
            .get(&(order, total_quanta))
        {
            return Ok(Arc::clone(hit));
        }
        let fresh = Arc::new(diagonalize_unit(total_quanta, order)?);
        let mut map = self.entries.write().expect("cache lock poisoned");
        Ok(Arc::clone(map.entry((order, total_quanta)).or_insert(fresh)))
    }

    /// Decomposition of block `E` for `model`, computed on first use.
    pub fn block(&self, model: ModelSpec, total_quanta: u32) -> Result<BlockEigen> {
        Ok(BlockEigen {
            total_quanta,
            coupling: model.coupling,
            unit: self.get_or_compute(model.order, total_quanta)?,
        })
    }

    /// Decompositions for blocks `0..=cutoff_e`, computed in parallel.
    pub fn spectrum(&self, model: ModelSpec, cutoff_e: usize) -> Result<Vec<BlockEigen>> {
        (0..=cutoff_e as u32)
            .into_par_iter()
            .map(|e| self.block(model, e))
            .collect()
    }
}

fn check_blocks(state: &TwoModeFockState, eigs: &[BlockEigen]) -> Result<()> {
    if eigs.len() < state.blocks.len() {
        return Err(Error::MissingBlock(eigs.len() as u32));
    }
    for (b, eig) in state.blocks.iter().zip(eigs) {
        if b.total_quanta != eig.total_quanta || b.dim() != eig.dim() {
            return Err(Error::MissingBlock(b.total_quanta));
        }
        if eig.coupling != state.model.coupling {
            return Err(Error::invalid("eigen data built for a different coupling"));
        }
    }
    Ok(())
}

/// `e^{-i x} - 1` without cancellation for small `x`.
#[inline]
fn expm1_phase(x: f64) -> Complex64 {
    let half = (0.5 * x).sin();
    Complex64::new(-2.0 * half * half, -x.sin())
}

/// State at time `t`: `|ψ(t)⟩ = Σ_k e^{-iλ_k t} ⟨v_k|ψ(0)⟩ |v_k⟩` per block.
pub fn evolve(state: &TwoModeFockState, eigs: &[BlockEigen], t: f64) -> Result<TwoModeFockState> {
    Ok(Propagator::new(state, eigs)?.state_at(t))
}

/// Initial state pre-projected onto the eigenbasis, for repeated evaluation
/// at many times.
#[derive(Debug, Clone)]
pub struct Propagator {
    initial: TwoModeFockState,
    eigs: Vec<BlockEigen>,
    projections: Vec<Vec<Complex64>>,
}

/// First two moments of both photon numbers at one time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TwoModeMoments {
    pub fundamental: PhotonMoments,
    pub harmonic: PhotonMoments,
}

impl TwoModeMoments {
    pub fn mode(&self, mode: Mode) -> PhotonMoments {
        match mode {
            Mode::Fundamental => self.fundamental,
            Mode::Harmonic => self.harmonic,
        }
    }
}

#[derive(Default, Clone, Copy)]
struct BlockSums {
    norm: f64,
    n1: f64,
    n1_sq: f64,
    nh: f64,
    nh_sq: f64,
}

impl Propagator {
    pub fn new(state: &TwoModeFockState, eigs: &[BlockEigen]) -> Result<Self> {
        check_blocks(state, eigs)?;
        let eigs = eigs[..state.blocks.len()].to_vec();
        let projections = state
            .blocks
            .par_iter()
            .zip(eigs.par_iter())
            .map(|(b, eig)| eig.project(&b.amplitudes))
            .collect();
        Ok(Propagator {
            initial: state.clone(),
            eigs,
            projections,
        })
    }

    /// Prepare and diagonalize in one go, using `cache`.
    pub fn from_state(state: &TwoModeFockState, cache: &EigenCache) -> Result<Self> {
        let eigs = cache.spectrum(state.model, state.cutoff_e)?;
        Self::new(state, &eigs)
    }

    pub fn model(&self) -> ModelSpec {
        self.initial.model
    }

    pub fn initial(&self) -> &TwoModeFockState {
        &self.initial
    }

    pub fn eigs(&self) -> &[BlockEigen] {
        &self.eigs
    }

    fn block_at(&self, index: usize, t: f64) -> Vec<Complex64> {
        let eig = &self.eigs[index];
        let d = &self.projections[index];
        let mut out = self.initial.blocks[index].amplitudes.clone();
        if t == 0.0 {
            return out;
        }
        let gt = eig.coupling * t;
        // ψ(t) = ψ(0) + V (e^{-iλt} - 1) Vᵀ ψ(0) keeps short times accurate
        let y: Vec<Complex64> = eig
            .unit_eigenvalues()
            .iter()
            .zip(d)
            .map(|(l, dk)| dk * expm1_phase(l * gt))
            .collect();
        eig.expand_into(&y, &mut out);
        out
    }

    pub fn state_at(&self, t: f64) -> TwoModeFockState {
        let blocks = (0..self.eigs.len())
            .into_par_iter()
            .map(|i| FockBlock {
                total_quanta: self.initial.blocks[i].total_quanta,
                amplitudes: self.block_at(i, t),
            })
            .collect();
        TwoModeFockState {
            model: self.initial.model,
            blocks,
            cutoff_e: self.initial.cutoff_e,
        }
    }

    /// Photon-number moments of both modes at time `t`, normalized by the
    /// state norm. Blocks are reduced in index order, so results do not
    /// depend on thread count.
    pub fn moments_at(&self, t: f64) -> TwoModeMoments {
        let order = self.initial.model.order as usize;
        let partial: Vec<BlockSums> = (0..self.eigs.len())
            .into_par_iter()
            .map(|i| {
                let e = self.initial.blocks[i].total_quanta as usize;
                let amps = self.block_at(i, t);
                let mut s = BlockSums::default();
                for (m, c) in amps.iter().enumerate() {
                    let p = c.norm_sqr();
                    let n1 = (e - order * m) as f64;
                    let nh = m as f64;
                    s.norm += p;
                    s.n1 += p * n1;
                    s.n1_sq += p * n1 * n1;
                    s.nh += p * nh;
                    s.nh_sq += p * nh * nh;
                }
                s
            })
            .collect();
        reduce_sums(&partial)
    }

    /// Infinite-time averages of the moments (diagonal ensemble). Exact for
    /// the simple block spectra of this Hamiltonian.
    pub fn time_averaged_moments(&self) -> TwoModeMoments {
        let order = self.initial.model.order as usize;
        let partial: Vec<BlockSums> = (0..self.eigs.len())
            .into_par_iter()
            .map(|i| {
                let e = self.initial.blocks[i].total_quanta as usize;
                let eig = &self.eigs[i];
                let mut s = BlockSums::default();
                for (k, dk) in self.projections[i].iter().enumerate() {
                    let w = dk.norm_sqr();
                    if w == 0.0 {
                        continue;
                    }
                    for (m, v) in eig.eigenvector(k).iter().enumerate() {
                        let p = w * v * v;
                        let n1 = (e - order * m) as f64;
                        let nh = m as f64;
                        s.norm += p;
                        s.n1 += p * n1;
                        s.n1_sq += p * n1 * n1;
                        s.nh += p * nh;
                        s.nh_sq += p * nh * nh;
                    }
                }
                s
            })
            .collect();
        reduce_sums(&partial)
    }
}

fn reduce_sums(partial: &[BlockSums]) -> TwoModeMoments {
    let mut acc = [CompensatedSum::new(); 5];
    for s in partial {
        acc[0].add(s.norm);
        acc[1].add(s.n1);
        acc[2].add(s.n1_sq);
        acc[3].add(s.nh);
        acc[4].add(s.nh_sq);
    }
    let norm = acc[0].value();
    TwoModeMoments {
        fundamental: PhotonMoments {
            mean: acc[1].value() / norm,
            second: acc[2].value() / norm,
        },
        harmonic: PhotonMoments {
            mean: acc[3].value() / norm,
            second: acc[4].value() / norm,
        },
    }
}

/// Raw moments `(⟨n⟩, ⟨n²⟩, …, ⟨n^max_order⟩)` of one mode.
pub fn photon_moments(state: &TwoModeFockState, mode: Mode, max_order: usize) -> Vec<f64> {
    let mut acc = vec![CompensatedSum::new(); max_order];
    for block in &state.blocks {
        for (m, c) in block.amplitudes.iter().enumerate() {
            let p = c.norm_sqr();
            let n = state.occupation(mode, block.total_quanta, m) as f64;
            let mut pw = p;
            for a in acc.iter_mut() {
                pw *= n;
                a.add(pw);
            }
        }
    }
    acc.iter().map(CompensatedSum::value).collect()
}

/// Mean and centred variance of one mode's photon number (two-pass).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumberStats {
    pub mean: f64,
    pub variance: f64,
}

impl NumberStats {
    pub fn fano(&self) -> Result<f64> {
        if self.mean <= 0.0 {
            return Err(Error::UndefinedFano);
        }
        Ok(self.variance / self.mean)
    }

    pub fn moments(&self) -> PhotonMoments {
        PhotonMoments {
            mean: self.mean,
            second: self.variance + self.mean * self.mean,
        }
    }
}

pub fn number_stats(state: &TwoModeFockState, mode: Mode) -> NumberStats {
    let weighted = |f: &dyn Fn(f64) -> f64| {
        let mut acc = CompensatedSum::new();
        for block in &state.blocks {
            for (m, c) in block.amplitudes.iter().enumerate() {
                let n = state.occupation(mode, block.total_quanta, m) as f64;
                acc.add(c.norm_sqr() * f(n));
            }
        }
        acc.value()
    };
    let norm = weighted(&|_| 1.0);
    let mean = weighted(&|n| n) / norm;
    let variance = weighted(&|n| (n - mean) * (n - mean)) / norm;
    NumberStats { mean, variance }
}

/// Single-mode density matrix, row-major, indexed by Fock number.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl DensityMatrix {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    /// Pure-state projector `|ψ⟩⟨ψ|`.
    pub fn pure(amplitudes: &[Complex64]) -> Self {
        let dim = amplitudes.len();
        let mut data = Vec::with_capacity(dim * dim);
        for a in amplitudes {
            for b in amplitudes {
                data.push(a * b.conj());
            }
        }
        DensityMatrix { dim, data }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn purity(&self) -> f64 {
        // tr(ρ²) = Σ |ρ_ij|² for Hermitian ρ
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `⟨a⟩ = Σ √n ρ_{n,n−1}`
    pub fn mean_annihilation(&self) -> Complex64 {
        (1..self.dim).map(|n| (n as f64).sqrt() * self.get(n, n - 1)).sum()
    }

    /// `⟨a²⟩ = Σ √(n(n−1)) ρ_{n,n−2}`
    pub fn mean_annihilation_sq(&self) -> Complex64 {
        (2..self.dim)
            .map(|n| ((n * (n - 1)) as f64).sqrt() * self.get(n, n - 2))
            .sum()
    }

    pub fn mean_number(&self) -> f64 {
        (0..self.dim).map(|n| n as f64 * self.get(n, n).re).sum()
    }

    /// `⟨v|ρ|v⟩`
    pub fn expectation(&self, v: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::default();
        for (i, vi) in v.iter().enumerate().take(self.dim) {
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            let rv: Complex64 = row.iter().zip(v).map(|(r, x)| r * x).sum();
            acc += vi.conj() * rv;
        }
        acc
    }
}

/// Partial trace over the other mode.
pub fn reduced_density(state: &TwoModeFockState, mode: Mode) -> DensityMatrix {
    let dim_1 = state.max_occupation(Mode::Fundamental) + 1;
    let dim_h = state.max_occupation(Mode::Harmonic) + 1;
    let (dim, other) = match mode {
        Mode::Fundamental => (dim_1, dim_h),
        Mode::Harmonic => (dim_h, dim_1),
    };
    // coefficient matrix C[kept][traced]
    let mut coeff = vec![Complex64::default(); dim * other];
    for block in &state.blocks {
        for (m, c) in block.amplitudes.iter().enumerate() {
            let n1 = state.occupation(Mode::Fundamental, block.total_quanta, m);
            let (kept, traced) = match mode {
                Mode::Fundamental => (n1, m),
                Mode::Harmonic => (m, n1),
            };
            coeff[kept * other + traced] = *c;
        }
    }
    let rows: Vec<Vec<Complex64>> = (0..dim)
        .into_par_iter()
        .map(|i| {
            let ci = &coeff[i * other..(i + 1) * other];
            (0..dim)
                .map(|j| {
                    let cj = &coeff[j * other..(j + 1) * other];
                    ci.iter().zip(cj).map(|(a, b)| a * b.conj()).sum()
                })
                .collect()
        })
        .collect();
    DensityMatrix {
        dim,
        data: rows.into_iter().flatten().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_amplitudes, prepare_product_state, CoherentInput};
    use crate::observables::fano;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn block_examples() {
        let m = ModelSpec::unit(2);
        assert_eq!(build_block(0, m).dim(), 1);
        let b2 = build_block(2, m);
        assert_eq!(b2.dim(), 2);
        assert_abs_diff_eq!(b2.offdiag[0], 2f64.sqrt(), epsilon = 1e-15);
        let b4 = build_block(4, m);
        assert_eq!(b4.dim(), 3);
        assert_abs_diff_eq!(b4.offdiag[0], 12f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(b4.offdiag[1], 2.0, epsilon = 1e-14);
        // λ(λ² − 16) = 0
        let eig = diagonalize_block(&b4).unwrap();
        let l = eig.eigenvalues();
        assert_abs_diff_eq!(l[0], -4.0, epsilon = 1e-13);
        assert_abs_diff_eq!(l[1], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(l[2], 4.0, epsilon = 1e-13);
    }

    #[test]
    fn offdiag_matches_ladder_algebra() {
        // ⟨n1−N, m+1| a1^N aN† |n1, m⟩ = √(n1!/(n1−N)!) √(m+1)
        let model = ModelSpec::new(3, 0.7).unwrap();
        let h = build_block(17, model);
        for (m, v) in h.offdiag.iter().enumerate() {
            let n1 = 17 - 3 * m;
            let falling: f64 = (0..3).map(|j| (n1 - j) as f64).product();
            let expect = 0.7 * (falling * (m + 1) as f64).sqrt();
            assert_abs_diff_eq!(*v, expect, epsilon = 1e-12 * expect);
            assert!(*v >= 0.0);
        }
    }

    #[test]
    fn eigen_invariants_on_physical_blocks() {
        for &(order, e) in &[(2u32, 151u32), (3, 200), (5, 400)] {
            let h = build_block(e, ModelSpec::new(order, 1.3).unwrap());
            let eig = diagonalize_block(&h).unwrap();
            let n = eig.dim();
            let l = eig.eigenvalues();
            // symmetric spectrum
            let scale = l[n - 1].abs();
            for k in 0..n {
                assert!((l[k] + l[n - 1 - k]).abs() < 1e-9 * scale.max(1.0));
            }
            // simple spectrum
            assert!(l.windows(2).all(|w| w[1] - w[0] > 1e-9 * scale));
            // orthogonality
            for a in (0..n).step_by(7) {
                for b in (0..n).step_by(5) {
                    let dot: f64 = eig.eigenvector(a).iter().zip(eig.eigenvector(b)).map(|(x, y)| x * y).sum();
                    let target = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - target).abs() < 1e-10);
                }
            }
            // reconstruction: H v_k = λ_k v_k
            let mut res = 0.0;
            let mut norm = 0.0;
            for k in 0..n {
                let v = eig.eigenvector(k);
                for i in 0..n {
                    let mut hv = 0.0;
                    if i > 0 {
                        hv += h.offdiag[i - 1] * v[i - 1];
                    }
                    if i + 1 < n {
                        hv += h.offdiag[i] * v[i + 1];
                    }
                    res += (hv - l[k] * v[i]).powi(2);
                }
            }
            for x in &h.offdiag {
                norm += 2.0 * x * x;
            }
            assert!(res.sqrt() < 1e-9 * norm.sqrt(), "order {order} E {e}");
        }
    }

    #[test]
    fn cache_scales_with_coupling() {
        let cache = EigenCache::new();
        let a = cache.block(ModelSpec::new(2, 1.0).unwrap(), 40).unwrap();
        let b = cache.block(ModelSpec::new(2, 2.5).unwrap(), 40).unwrap();
        assert_eq!(cache.len(), 1);
        for (x, y) in a.eigenvalues().iter().zip(b.eigenvalues()) {
            assert_abs_diff_eq!(2.5 * x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn concurrent_cache_matches_sequential() {
        let model = ModelSpec::unit(3);
        let shared = EigenCache::new();
        let parallel = shared.spectrum(model, 90).unwrap();
        let seq: Vec<_> = (0..=90).map(|e| diagonalize_block(&build_block(e, model)).unwrap()).collect();
        for (p, s) in parallel.iter().zip(&seq) {
            assert_eq!(p.eigenvalues(), s.eigenvalues());
            assert_eq!(p.eigenvectors(), s.eigenvectors());
        }
    }

    fn shg_input(a1: f64, a2: f64) -> CoherentInput {
        CoherentInput::new(c(a1), c(a2), ModelSpec::unit(2)).unwrap()
    }

    #[test]
    fn evolve_at_zero_is_identity() {
        let s = prepare_product_state(&shg_input(2.0, 1.0), 1e-12).unwrap();
        let cache = EigenCache::new();
        let eigs = cache.spectrum(s.model, s.cutoff_e).unwrap();
        let s0 = evolve(&s, &eigs, 0.0).unwrap();
        assert_eq!(s0, s);
    }

    #[test]
    fn mismatched_blocks_are_rejected() {
        let s = prepare_product_state(&shg_input(2.0, 1.0), 1e-12).unwrap();
        let eigs = EigenCache::new().spectrum(s.model, s.cutoff_e - 3).unwrap();
        assert!(evolve(&s, &eigs, 1.0).is_err());
    }

    #[test]
    fn composition_and_unitarity() {
        let input = CoherentInput::new(Complex64::from_polar(2.5, 0.4), c(1.0), ModelSpec::unit(2)).unwrap();
        let s = prepare_product_state(&input, 1e-12).unwrap();
        let cache = EigenCache::new();
        let eigs = cache.spectrum(s.model, s.cutoff_e).unwrap();
        let a = evolve(&evolve(&s, &eigs, 0.7).unwrap(), &eigs, 1.1).unwrap();
        let b = evolve(&s, &eigs, 1.8).unwrap();
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            for (u, v) in x.amplitudes.iter().zip(&y.amplitudes) {
                assert!((u - v).norm() < 1e-9);
            }
        }
        assert!((b.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn coherent_moments_embedded() {
        // |α|² = 4 in mode 1, vacuum harmonic
        let s = prepare_product_state(&shg_input(2.0, 0.0), 1e-14).unwrap();
        let m = photon_moments(&s, Mode::Fundamental, 2);
        assert_abs_diff_eq!(m[0], 4.0, epsilon = 1e-8);
        assert_abs_diff_eq!(m[1], 20.0, epsilon = 1e-8);
        let vac = TwoModeFockState::vacuum(ModelSpec::unit(2));
        assert_eq!(photon_moments(&vac, Mode::Harmonic, 3), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn prepared_state_is_poissonian() {
        let s = prepare_product_state(&shg_input(6.0, 3.0), 1e-12).unwrap();
        let m1 = photon_moments(&s, Mode::Fundamental, 2);
        let m2 = photon_moments(&s, Mode::Harmonic, 2);
        assert_abs_diff_eq!(m1[0], 36.0, epsilon = 1e-8);
        assert_abs_diff_eq!(m2[0], 9.0, epsilon = 1e-8);
        let f1 = fano(PhotonMoments { mean: m1[0], second: m1[1] }).unwrap();
        let f2 = fano(PhotonMoments { mean: m2[0], second: m2[1] }).unwrap();
        assert_abs_diff_eq!(f1, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(f2, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn reduced_density_of_product_state() {
        let alpha = Complex64::new(1.5, -0.5);
        let input = CoherentInput::new(alpha, c(0.8), ModelSpec::unit(2)).unwrap();
        let s = prepare_product_state(&input, 1e-14).unwrap();
        let rho = reduced_density(&s, Mode::Fundamental);
        let pure = DensityMatrix::pure(&coherent_amplitudes(alpha, rho.dim - 1).unwrap());
        for (a, b) in rho.data.iter().zip(&pure.data) {
            assert!((a - b).norm() < 1e-8);
        }
        assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-10);
        let a = rho.mean_annihilation();
        assert!((a - alpha).norm() < 1e-8);
    }

    #[test]
    fn reduced_density_of_vacuum() {
        let rho = reduced_density(&TwoModeFockState::vacuum(ModelSpec::unit(2)), Mode::Harmonic);
        assert_eq!(rho.dim, 1);
        assert_eq!(rho.get(0, 0), c(1.0));
    }

    #[test]
    fn interaction_entangles() {
        let s = prepare_product_state(&shg_input(6.0, 3.0), 1e-12).unwrap();
        let prop = Propagator::from_state(&s, &EigenCache::new()).unwrap();
        let st = prop.state_at(2.5);
        for mode in [Mode::Fundamental, Mode::Harmonic] {
            let rho = reduced_density(&st, mode);
            assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-10);
            assert!(rho.purity() < 0.99, "purity {}", rho.purity());
            // hermiticity
            for i in 0..rho.dim {
                for j in 0..rho.dim {
                    assert!((rho.get(i, j) - rho.get(j, i).conj()).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn moments_at_agrees_with_state_moments() {
        let s = prepare_product_state(&shg_input(3.0, 1.0), 1e-12).unwrap();
        let prop = Propagator::from_state(&s, &EigenCache::new()).unwrap();
        let t = 0.83;
        let fast = prop.moments_at(t);
        let st = prop.state_at(t);
        let m1 = photon_moments(&st, Mode::Fundamental, 2);
        let m2 = photon_moments(&st, Mode::Harmonic, 2);
        assert_abs_diff_eq!(fast.fundamental.mean, m1[0], epsilon = 1e-10);
        assert_abs_diff_eq!(fast.fundamental.second, m1[1], epsilon = 1e-8);
        assert_abs_diff_eq!(fast.harmonic.mean, m2[0], epsilon = 1e-10);
        assert_abs_diff_eq!(fast.harmonic.second, m2[1], epsilon = 1e-8);
    }

    #[test]
    fn long_time_average_approaches_diagonal_ensemble() {
        let s = prepare_product_state(&shg_input(2.0, 1.0), 1e-12).unwrap();
        let prop = Propagator::from_state(&s, &EigenCache::new()).unwrap();
        let exact = prop.time_averaged_moments();
        let ts = crate::util::linspace(0.0, 400.0, 8001);
        let means: Vec<f64> = ts.iter().map(|&t| prop.moments_at(t).harmonic.mean).collect();
        let avg = crate::util::trapezoid_mean(&means);
        assert!((avg - exact.harmonic.mean).abs() < 2e-2, "{avg} vs {}", exact.harmonic.mean);
    }
}
