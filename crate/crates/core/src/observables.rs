//! Densities, entropies and end-to-end entanglement measures.
//!
//! Entropies and the log-negativity use base-2 logarithms.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{check_site, Error, Result};
use crate::scalar::Scalar;
use crate::symmps::env::{self, Env};
use crate::symmps::CanonicalState;

/// Eigenvalues in `[-NEGATIVE_TOLERANCE, 0)` are clamped to zero; anything
/// more negative is an invalid density matrix.
pub const NEGATIVE_TOLERANCE: f64 = 1e-9;

/// Partial-transpose eigenvalues below `-PT_TOLERANCE` count as negative.
pub const PT_TOLERANCE: f64 = 1e-12;

/// An imaginary part of `⟨a†_1 a_N⟩` above this is flagged.
pub const IMAG_FLAG: f64 = 1e-8;

/// Reduced state of the two end sites, stored per pair total
/// `s = n_1 + n_N`. Block `s` is `(s+1) × (s+1)` and indexed by `n_1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDensityMatrix {
    blocks: Vec<DMatrix<Complex64>>,
}

impl PairDensityMatrix {
    /// All-zero matrix for pair totals `0..=n_pair_max`.
    pub fn zeros(n_pair_max: usize) -> Self {
        Self {
            blocks: (0..=n_pair_max)
                .map(|s| DMatrix::zeros(s + 1, s + 1))
                .collect(),
        }
    }

    /// `|φ⟩⟨φ|` for `φ = Σ c |n_1, n_N⟩`, normalized.
    pub fn from_pure(amplitudes: &[(usize, usize, Complex64)]) -> Self {
        let max = amplitudes.iter().map(|&(a, b, _)| a + b).max().unwrap_or(0);
        let mut rho = Self::zeros(max);
        for &(a, b, x) in amplitudes {
            for &(ap, bp, y) in amplitudes {
                rho.add(a, b, ap, bp, x * y.conj());
            }
        }
        rho.normalize();
        rho
    }

    pub fn n_pair_max(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn block(&self, s: usize) -> Option<&DMatrix<Complex64>> {
        self.blocks.get(s)
    }

    pub fn blocks(&self) -> &[DMatrix<Complex64>] {
        &self.blocks
    }

    /// `⟨a, b|ρ|a', b'⟩`; zero across pair totals.
    pub fn get(&self, a: usize, b: usize, ap: usize, bp: usize) -> Complex64 {
        let s = a + b;
        if ap + bp != s || s >= self.blocks.len() {
            return Complex64::new(0.0, 0.0);
        }
        self.blocks[s][(a, ap)]
    }

    pub(crate) fn add(&mut self, a: usize, b: usize, ap: usize, bp: usize, z: Complex64) {
        let s = a + b;
        debug_assert_eq!(s, ap + bp);
        self.blocks[s][(a, ap)] += z;
    }

    pub fn trace(&self) -> f64 {
        self.blocks.iter().map(|m| m.trace().re).sum()
    }

    pub(crate) fn normalize(&mut self) {
        let t = self.trace();
        if t > 0.0 {
            for m in &mut self.blocks {
                *m /= Complex64::new(t, 0.0);
            }
        }
    }

    pub fn purity(&self) -> f64 {
        self.blocks.iter().map(|m| (m * m).trace().re).sum()
    }

    /// Largest entry of `ρ - ρ†`.
    pub fn hermiticity_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(|m| {
                (m - m.adjoint())
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Largest entrywise difference from another pair state.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let n = self.blocks.len().max(other.blocks.len());
        let mut worst: f64 = 0.0;
        for s in 0..n {
            for a in 0..=s {
                for ap in 0..=s {
                    let d = self.get(a, s - a, ap, s - ap) - other.get(a, s - a, ap, s - ap);
                    worst = worst.max(d.norm());
                }
            }
        }
        worst
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .flat_map(|m| hermitian_eigenvalues(m.clone()))
            .collect()
    }

    /// Occupation distribution of site 1. The single-site state is diagonal
    /// because the pair state conserves the pair total.
    pub fn first_site_probabilities(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.blocks.len()];
        for (s, m) in self.blocks.iter().enumerate() {
            for a in 0..=s {
                p[a] += m[(a, a)].re;
            }
        }
        p
    }

    /// Spectrum of `ρ^{T_B}`, transposing the site-N index. The transposed
    /// matrix splits into sectors of fixed `n_1 - n_N`.
    pub fn partial_transpose_eigenvalues(&self) -> Vec<f64> {
        let m = self.n_pair_max() as i64;
        let mut out = Vec::new();
        for d in -m..=m {
            let pairs: Vec<(usize, usize)> = (0..=m)
                .filter_map(|a| {
                    let b = a - d;
                    (0..=m).contains(&b).then_some((a as usize, b as usize))
                })
                .collect();
            let t = DMatrix::from_fn(pairs.len(), pairs.len(), |r, c| {
                let (a, b) = pairs[r];
                let (ap, bp) = pairs[c];
                self.get(a, bp, ap, b)
            });
            out.extend(hermitian_eigenvalues(t));
        }
        out
    }

    /// `tr(a†_1 a_N ρ)`.
    pub fn adag_first_a_last(&self) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (s, m) in self.blocks.iter().enumerate() {
            for a in 0..s {
                let b = s - a;
                acc += ((a + 1) as f64).sqrt() * (b as f64).sqrt() * m[(a, a + 1)];
            }
        }
        acc
    }
}

fn hermitian_eigenvalues(m: DMatrix<Complex64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    SymmetricEigen::new(m).eigenvalues.iter().copied().collect()
}

/// `-Σ p log2 p` over a spectrum, after clamping tiny negative values.
pub fn entropy_of_spectrum(eigenvalues: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for &p in eigenvalues {
        if p < -NEGATIVE_TOLERANCE {
            return Err(Error::InvalidDensity(format!("eigenvalue {p}")));
        }
        if p > 0.0 {
            s -= p * p.log2();
        }
    }
    Ok(s.max(0.0))
}

/// Von Neumann entropy in bits.
pub fn von_neumann_entropy(rho: &PairDensityMatrix) -> Result<f64> {
    entropy_of_spectrum(&rho.eigenvalues())
}

/// Von Neumann entropy in bits of any Hermitian density matrix.
pub fn von_neumann_entropy_dense(rho: &DMatrix<Complex64>) -> Result<f64> {
    entropy_of_spectrum(&hermitian_eigenvalues(rho.clone()))
}

/// `log2 ‖ρ^{T_B}‖_1 = log2(1 + 2 Σ|μ⁻|)` over the negative partial-transpose
/// eigenvalues `μ⁻`; only those below `-PT_TOLERANCE` count.
pub fn log_negativity(rho: &PairDensityMatrix) -> Result<f64> {
    if let Some(p) = rho
        .eigenvalues()
        .into_iter()
        .find(|&p| p < -NEGATIVE_TOLERANCE)
    {
        return Err(Error::InvalidDensity(format!("eigenvalue {p}")));
    }
    let negative: f64 = rho
        .partial_transpose_eigenvalues()
        .iter()
        .filter(|&&x| x < -PT_TOLERANCE)
        .map(|x| -x)
        .sum();
    Ok((1.0 + 2.0 * negative).log2())
}

/// `Σ_k ⟨n_k⟩` style expectation through cached environments.
fn local_expectation<T: Scalar>(
    state: &CanonicalState<T>,
    envs: &env::Environments<T>,
    k0: usize,
) -> f64 {
    let s = &state.sites_raw()[k0];
    let l = env::transfer_left(&envs.left[k0], s, s, env::number);
    env::close(&l, &envs.right[k0 + 1]).real() / envs.norm_sq()
}

/// `⟨n_k⟩` for site `k` (1-based).
pub fn local_density<T: Scalar>(state: &CanonicalState<T>, k: usize) -> Result<f64> {
    check_site(k, state.n_sites())?;
    Ok(local_expectation(state, &state.environments(), k - 1))
}

/// All site densities.
pub fn densities<T: Scalar>(state: &CanonicalState<T>) -> Vec<f64> {
    let envs = state.environments();
    (0..state.n_sites())
        .map(|k| local_expectation(state, &envs, k))
        .collect()
}

/// Fraction of bosons on the two ends, `2⟨n_1⟩/M`.
pub fn zeta<T: Scalar>(state: &CanonicalState<T>) -> f64 {
    2.0 * local_density(state, 1).expect("site 1 exists") / state.n_bosons() as f64
}

/// `(⟨n_1⟩ + ⟨n_N⟩)/M`, which equals [`zeta`] for mirror-symmetric states.
pub fn zeta_mirror<T: Scalar>(state: &CanonicalState<T>) -> f64 {
    let d = densities(state);
    (d[0] + d[d.len() - 1]) / state.n_bosons() as f64
}

/// Entanglement entropy (bits) between sites `1..=l` and the rest.
pub fn block_entropy<T: Scalar>(state: &CanonicalState<T>, l: usize) -> Result<f64> {
    state.schmidt_entropy(l)
}

/// `⟨a†_i a_j⟩` with 1-based sites.
pub fn correlator_adag_a<T: Scalar>(
    state: &CanonicalState<T>,
    i: usize,
    j: usize,
) -> Result<Complex64> {
    let n = state.n_sites();
    check_site(i, n)?;
    check_site(j, n)?;
    let envs = state.environments();
    if i == j {
        return Ok(Complex64::new(local_expectation(state, &envs, i - 1), 0.0));
    }
    let sites = state.sites_raw();
    let (lo, hi) = (i.min(j) - 1, i.max(j) - 1);
    let op_at = |k: usize| {
        if k == i - 1 {
            env::create
        } else {
            env::annihilate
        }
    };
    let mut e: Env<T> = env::transfer_left(&envs.left[lo], &sites[lo], &sites[lo], op_at(lo));
    for s in &sites[lo + 1..hi] {
        e = env::transfer_left(&e, s, s, env::identity);
    }
    e = env::transfer_left(&e, &sites[hi], &sites[hi], op_at(hi));
    Ok(env::close(&e, &envs.right[hi + 1]).to_c64() / envs.norm_sq())
}

/// Reduced state of sites 1 and N, contracting sites `2..N-1` with both end
/// legs open.
pub fn end_pair_rdm<T: Scalar>(state: &CanonicalState<T>) -> PairDensityMatrix {
    let n = state.n_sites();
    let m = state.n_bosons();
    let sites = state.sites_raw();
    let first = &sites[0];
    let last = &sites[n - 1];
    let mut rho = PairDensityMatrix::zeros(m);
    // environments tagged by (a', a): bra and ket occupation of site 1
    let mut envs: BTreeMap<(usize, usize), Env<T>> = BTreeMap::new();
    for ((_, a), ka) in first.blocks_from(0) {
        for ((_, ap), ba) in first.blocks_from(0) {
            let mut e = Env::new();
            e.insert((ap, a), ba.ad_mul(ka));
            envs.insert((ap, a), e);
        }
    }
    for s in &sites[1..n - 1] {
        for e in envs.values_mut() {
            *e = env::transfer_left(e, s, s, env::identity);
        }
    }
    for ((ap, a), e) in &envs {
        for (&(qb, qk), mid) in e {
            let (Some(bra), Some(ket)) = (last.block(qb, m), last.block(qk, m)) else {
                continue;
            };
            let v = bra.ad_mul(&(mid * ket))[(0, 0)].to_c64();
            let (b, bp) = (m - qk, m - qb);
            if a + b == ap + bp {
                rho.add(*a, b, *ap, bp, v);
            }
        }
    }
    rho.normalize();
    rho
}

/// `ε = Re tr(a†_1 a_N ρ)` from both the pair state and a direct correlator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Witness {
    pub from_rdm: Complex64,
    pub direct: Complex64,
}

impl Witness {
    pub fn value(&self) -> f64 {
        self.from_rdm.re
    }

    /// The two routes differ by more than `tol`.
    pub fn disagreement(&self) -> f64 {
        (self.from_rdm - self.direct).norm()
    }

    pub fn imaginary_flag(&self) -> bool {
        self.from_rdm.im.abs() > IMAG_FLAG
    }
}

pub fn epsilon_witness<T: Scalar>(state: &CanonicalState<T>) -> Witness {
    let rho = end_pair_rdm(state);
    epsilon_witness_with(state, &rho)
}

pub(crate) fn epsilon_witness_with<T: Scalar>(
    state: &CanonicalState<T>,
    rho: &PairDensityMatrix,
) -> Witness {
    let direct = correlator_adag_a(state, 1, state.n_sites()).expect("sites in range");
    Witness {
        from_rdm: rho.adag_first_a_last(),
        direct,
    }
}

/// Observables recorded along a trajectory or for a ground state.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub densities: Vec<f64>,
    pub zeta: f64,
    pub s_half: f64,
    pub s_ends: f64,
    pub logneg: f64,
    pub eps: f64,
    pub chi_max_now: usize,
    pub discarded_cum: f64,
    /// Cumulative discarded weight exceeded its budget.
    pub truncation_warning: bool,
    /// `⟨a†_1 a_N⟩` carried an imaginary part above [`IMAG_FLAG`].
    pub eps_imag_flag: bool,
}

impl TrajectoryRecord {
    pub fn measure<T: Scalar>(
        state: &CanonicalState<T>,
        t: f64,
        discarded_cum: f64,
        budget: f64,
    ) -> Result<Self> {
        let n = state.n_sites();
        let densities = densities(state);
        let rho = end_pair_rdm(state);
        let witness = epsilon_witness_with(state, &rho);
        Ok(Self {
            t,
            zeta: 2.0 * densities[0] / state.n_bosons() as f64,
            densities,
            s_half: state.schmidt_entropy(n / 2)?,
            s_ends: von_neumann_entropy(&rho)?,
            logneg: log_negativity(&rho)?,
            eps: witness.value(),
            chi_max_now: state.max_chi(),
            discarded_cum,
            truncation_warning: discarded_cum > budget,
            eps_imag_flag: witness.imaginary_flag(),
        })
    }
}
