//! Exact diagonalization and closed forms for small chains.
//!
//! The Fock basis enumerates occupation lists in lexicographically descending
//! order, so `(M, 0, …, 0)` comes first and `(0, …, 0, M)` last. This order is
//! part of the public contract.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::LatticeSpec;
use crate::observables::PairDensityMatrix;

/// Largest basis the dense routines accept by default.
pub const DEFAULT_CAPACITY: usize = 200_000;

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// `C(N + M - 1, M)`, the number of ways to place `M` bosons on `N` sites.
pub fn basis_size(n_sites: usize, n_bosons: usize) -> u128 {
    binomial((n_sites + n_bosons - 1) as u128, n_bosons as u128)
}

#[derive(Clone, Debug)]
pub struct FockBasis {
    n_sites: usize,
    n_bosons: usize,
    states: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
}

impl FockBasis {
    pub fn new(n_sites: usize, n_bosons: usize) -> Result<Self> {
        Self::with_capacity(n_sites, n_bosons, DEFAULT_CAPACITY)
    }

    pub fn with_capacity(n_sites: usize, n_bosons: usize, cap: usize) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::InvalidSize("need at least one site".into()));
        }
        let size = basis_size(n_sites, n_bosons);
        if size > cap as u128 {
            return Err(Error::Capacity { size, cap });
        }
        let mut states = Vec::with_capacity(size as usize);
        let mut cur = vec![0; n_sites];
        fill(&mut states, &mut cur, 0, n_bosons);
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(Self {
            n_sites,
            n_bosons,
            states,
            index,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_bosons(&self) -> usize {
        self.n_bosons
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<usize>] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &[usize] {
        &self.states[i]
    }

    pub fn index_of(&self, occupations: &[usize]) -> Option<usize> {
        self.index.get(occupations).copied()
    }
}

fn fill(out: &mut Vec<Vec<usize>>, cur: &mut [usize], site: usize, left: usize) {
    if site + 1 == cur.len() {
        cur[site] = left;
        out.push(cur.to_vec());
        return;
    }
    for n in (0..=left).rev() {
        cur[site] = n;
        fill(out, cur, site + 1, left - n);
    }
}

pub fn fock_basis(n_sites: usize, n_bosons: usize) -> Result<FockBasis> {
    FockBasis::new(n_sites, n_bosons)
}

fn basis_for(spec: &LatticeSpec) -> Result<FockBasis> {
    FockBasis::new(spec.n_sites(), spec.n_bosons())
}

/// Dense Hamiltonian in the basis of [`fock_basis`].
pub fn dense_hamiltonian(spec: &LatticeSpec) -> Result<DMatrix<f64>> {
    Ok(dense_hamiltonian_in(spec, &basis_for(spec)?))
}

pub fn dense_hamiltonian_in(spec: &LatticeSpec, basis: &FockBasis) -> DMatrix<f64> {
    assert_eq!(basis.n_sites(), spec.n_sites());
    let dim = basis.len();
    let mut h = DMatrix::zeros(dim, dim);
    let mut next = vec![0; spec.n_sites()];
    for (col, occ) in basis.states().iter().enumerate() {
        h[(col, col)] = occ
            .iter()
            .enumerate()
            .map(|(k, &n)| spec.onsite_energy(k, n))
            .sum();
        for (k, &j) in spec.hopping().iter().enumerate() {
            if j == 0.0 || occ[k] == 0 {
                continue;
            }
            // a†_{k+1} a_k
            next.copy_from_slice(occ);
            next[k] -= 1;
            next[k + 1] += 1;
            let amp = ((occ[k] * (occ[k + 1] + 1)) as f64).sqrt();
            let row = basis.index_of(&next).expect("basis closed under hopping");
            h[(row, col)] -= j * amp;
            h[(col, row)] -= j * amp;
        }
    }
    h
}

/// Lowest eigenpair of a dense Hamiltonian.
#[derive(Clone, Debug)]
pub struct ExactGround {
    pub energy: f64,
    /// Largest-magnitude amplitude made positive.
    pub amplitudes: DVector<f64>,
    pub basis: FockBasis,
}

pub fn exact_ground(spec: &LatticeSpec) -> Result<ExactGround> {
    let basis = basis_for(spec)?;
    let h = dense_hamiltonian_in(spec, &basis);
    let eig = SymmetricEigen::new(h);
    let (i, &energy) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty basis");
    let mut v = eig.eigenvectors.column(i).into_owned();
    let big = v
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap();
    if big < 0.0 {
        v.neg_mut();
    }
    Ok(ExactGround {
        energy,
        amplitudes: v,
        basis,
    })
}

/// `e^{-iHt}` through a cached eigendecomposition.
#[derive(Clone, Debug)]
pub struct ExactPropagator {
    basis: FockBasis,
    energies: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl ExactPropagator {
    pub fn new(spec: &LatticeSpec) -> Result<Self> {
        let basis = basis_for(spec)?;
        let eig = SymmetricEigen::new(dense_hamiltonian_in(spec, &basis));
        Ok(Self {
            basis,
            energies: eig.eigenvalues,
            vectors: eig.eigenvectors,
        })
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn evolve(&self, psi0: &DVector<Complex64>, t: f64) -> Result<DVector<Complex64>> {
        if psi0.len() != self.basis.len() {
            return Err(Error::ShapeMismatch(format!(
                "vector of {} in basis of {}",
                psi0.len(),
                self.basis.len()
            )));
        }
        let v = self.vectors.map(|x| Complex64::new(x, 0.0));
        let mut c = v.tr_mul(psi0);
        for (ci, &e) in c.iter_mut().zip(self.energies.iter()) {
            *ci *= Complex64::from_polar(1.0, -e * t);
        }
        Ok(v * c)
    }
}

pub fn exact_evolve(
    spec: &LatticeSpec,
    psi0: &DVector<Complex64>,
    t: f64,
) -> Result<DVector<Complex64>> {
    ExactPropagator::new(spec)?.evolve(psi0, t)
}

/// `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩`.
pub fn expectation(h: &DMatrix<f64>, psi: &DVector<Complex64>) -> f64 {
    let hc = h.map(|x| Complex64::new(x, 0.0));
    (psi.dotc(&(hc * psi))).re / psi.norm_squared()
}

fn spin_coherent_mode(n_sites: usize) -> Vec<f64> {
    let two_j = (n_sites - 1) as u128;
    let scale = 0.5f64.powf(two_j as f64 / 2.0);
    (0..n_sites)
        .map(|k| scale * (binomial(two_j, k as u128) as f64).sqrt())
        .collect()
}

fn condensate(basis: &FockBasis, mode: &[f64]) -> DVector<f64> {
    let m = basis.n_bosons();
    let ln_fact = |n: usize| (1..=n).map(|x| (x as f64).ln()).sum::<f64>();
    DVector::from_iterator(
        basis.len(),
        basis.states().iter().map(|occ| {
            let mut amp = (0.5 * (ln_fact(m) - occ.iter().map(|&n| ln_fact(n)).sum::<f64>())).exp();
            for (&n, &phi) in occ.iter().zip(mode) {
                amp *= phi.powi(n as i32);
            }
            amp
        }),
    )
}

/// Repulsionless PTH ground state: all `M` bosons in the single-particle mode
/// with amplitudes `2^{-j} √C(2j, k-1)` on site `k`, `j = (N-1)/2`. Its energy
/// is `-λ j M`; `lambda` only sets that scale and is checked for sign.
pub fn pth_closed_form_ground(
    n_sites: usize,
    n_bosons: usize,
    lambda: f64,
) -> Result<DVector<f64>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let basis = FockBasis::new(n_sites, n_bosons)?;
    Ok(condensate(&basis, &spin_coherent_mode(n_sites)))
}

/// Same condensate with the alternating site signs `(-1)^{k-1}`. With the
/// `-J` hopping sign this is the highest single-particle mode, energy `+λ j M`.
pub fn pth_closed_form_alternating(n_sites: usize, n_bosons: usize) -> Result<DVector<f64>> {
    let basis = FockBasis::new(n_sites, n_bosons)?;
    let mode: Vec<f64> = spin_coherent_mode(n_sites)
        .into_iter()
        .enumerate()
        .map(|(k, x)| if k % 2 == 0 { x } else { -x })
        .collect();
    Ok(condensate(&basis, &mode))
}

pub fn pth_ground_energy(n_sites: usize, n_bosons: usize, lambda: f64) -> f64 {
    -lambda * (n_sites - 1) as f64 / 2.0 * n_bosons as f64
}

/// `e^{-iAt} e_start` for the tridiagonal matrix `A` with off-diagonals `J`.
/// `start` is 1-based.
pub fn single_particle_propagate(
    hopping: &[f64],
    start: usize,
    t: f64,
) -> Result<DVector<Complex64>> {
    let n = hopping.len() + 1;
    crate::error::check_site(start, n)?;
    let mut a = DMatrix::zeros(n, n);
    for (k, &j) in hopping.iter().enumerate() {
        a[(k, k + 1)] = j;
        a[(k + 1, k)] = j;
    }
    let eig = SymmetricEigen::new(a);
    let row = eig.eigenvectors.row(start - 1);
    Ok(DVector::from_fn(n, |i, _| {
        (0..n)
            .map(|m| {
                Complex64::from_polar(eig.eigenvectors[(i, m)] * row[m], -eig.eigenvalues[m] * t)
            })
            .sum()
    }))
}

/// Reduced state of sites 1 and N by direct summation over the middle.
pub fn pair_rdm_dense(psi: &DVector<Complex64>, basis: &FockBasis) -> Result<PairDensityMatrix> {
    if psi.len() != basis.len() {
        return Err(Error::ShapeMismatch(format!(
            "vector of {} in basis of {}",
            psi.len(),
            basis.len()
        )));
    }
    let n = basis.n_sites();
    let m = basis.n_bosons();
    let mut rho = PairDensityMatrix::zeros(m);
    if n == 1 {
        return Err(Error::InvalidSize("pair state needs two sites".into()));
    }
    // group amplitudes by their middle occupations
    let mut groups: BTreeMap<&[usize], Vec<(usize, usize, Complex64)>> = BTreeMap::new();
    for (i, occ) in basis.states().iter().enumerate() {
        groups
            .entry(&occ[1..n - 1])
            .or_default()
            .push((occ[0], occ[n - 1], psi[i]));
    }
    for amps in groups.values() {
        for &(a, b, x) in amps {
            for &(ap, bp, y) in amps {
                rho.add(a, b, ap, bp, x * y.conj());
            }
        }
    }
    rho.normalize();
    Ok(rho)
}

/// Real amplitudes promoted to complex.
pub fn complexify(v: &DVector<f64>) -> DVector<Complex64> {
    v.map(|x| Complex64::new(x, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{pth_couplings, Profile};

    #[test]
    fn basis_sizes_and_order() {
        let b = fock_basis(2, 2).unwrap();
        assert_eq!(b.states(), &[vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(fock_basis(4, 4).unwrap().len(), 35);
        assert_eq!(fock_basis(1, 5).unwrap().len(), 1);
        assert!(matches!(
            fock_basis(12, 12),
            Err(Error::Capacity {
                size: 1_352_078,
                ..
            })
        ));
        let b = fock_basis(3, 3).unwrap();
        for w in b.states().windows(2) {
            assert!(w[0] > w[1]);
        }
        for (i, s) in b.states().iter().enumerate() {
            assert_eq!(b.index_of(s), Some(i));
        }
    }

    #[test]
    fn two_site_hamiltonian() {
        let spec = LatticeSpec::new(2, 2, vec![0.0, 0.0], vec![1.0]).unwrap();
        let h = dense_hamiltonian(&spec).unwrap();
        assert!((h[(1, 0)] + 2f64.sqrt()).abs() < 1e-15);
        assert!((h[(0, 1)] - h[(1, 0)]).abs() == 0.0);
        let spec = LatticeSpec::new(2, 2, vec![2.0, 0.0], vec![1.0]).unwrap();
        assert_eq!(dense_hamiltonian(&spec).unwrap()[(0, 0)], 2.0);
    }

    #[test]
    fn ground_energies() {
        let spec = LatticeSpec::new(2, 2, vec![0.0; 2], vec![1.0]).unwrap();
        assert!((exact_ground(&spec).unwrap().energy + 2.0).abs() < 1e-12);
        let spec = LatticeSpec::end_open(4, 4, Profile::Pth, 2.0, 0.0).unwrap();
        assert!((exact_ground(&spec).unwrap().energy + 12.0).abs() < 1e-10);
        let spec = LatticeSpec::end_open(4, 4, Profile::Ch, 2.0, 0.0).unwrap();
        let e = -8.0 * (std::f64::consts::PI / 5.0).cos();
        assert!((exact_ground(&spec).unwrap().energy - e).abs() < 1e-10);
    }

    #[test]
    fn ground_phase_fixed() {
        let spec = LatticeSpec::end_open(4, 4, Profile::Ch, 2.0, 3.0).unwrap();
        let g = exact_ground(&spec).unwrap();
        let big = g
            .amplitudes
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap();
        assert!(big > 0.0);
    }

    #[test]
    fn closed_form_condensate() {
        let v = pth_closed_form_ground(2, 1, 2.0).unwrap();
        let h = 0.5f64.sqrt();
        assert!((v[0] - h).abs() < 1e-15 && (v[1] - h).abs() < 1e-15);
        let v = pth_closed_form_ground(2, 2, 2.0).unwrap();
        assert!(
            (v[0] - 0.5).abs() < 1e-15 && (v[1] - h).abs() < 1e-15 && (v[2] - 0.5).abs() < 1e-15
        );
        for n in [2, 4, 6] {
            let spec = LatticeSpec::end_open(n, n, Profile::Pth, 2.0, 0.0).unwrap();
            let h = dense_hamiltonian(&spec).unwrap();
            let psi = complexify(&pth_closed_form_ground(n, n, 2.0).unwrap());
            assert!((psi.norm() - 1.0).abs() < 1e-12);
            assert!((expectation(&h, &psi) - pth_ground_energy(n, n, 2.0)).abs() < 1e-10);
            let alt = complexify(&pth_closed_form_alternating(n, n).unwrap());
            assert!((expectation(&h, &alt) + pth_ground_energy(n, n, 2.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn evolution_conserves() {
        let spec = LatticeSpec::end_open(4, 4, Profile::Ch, 2.0, 2.0).unwrap();
        let p = ExactPropagator::new(&spec).unwrap();
        let mut psi0 = DVector::zeros(p.basis().len());
        psi0[p.basis().index_of(&[1, 1, 1, 1]).unwrap()] = Complex64::new(1.0, 0.0);
        assert!((p.evolve(&psi0, 0.0).unwrap() - &psi0).norm() < 1e-12);
        let h = dense_hamiltonian(&spec).unwrap();
        let e0 = expectation(&h, &psi0);
        for t in [0.3, 1.7, 10.0] {
            let psi = p.evolve(&psi0, t).unwrap();
            assert!((psi.norm() - 1.0).abs() < 1e-12);
            assert!((expectation(&h, &psi) - e0).abs() < 1e-10);
        }
        let idle = LatticeSpec::new(4, 4, vec![0.0; 4], vec![0.0; 3]).unwrap();
        let psi = exact_evolve(&idle, &psi0, 5.0).unwrap();
        assert!((psi - psi0).norm() < 1e-12);
    }

    #[test]
    fn hamiltonian_conserves_number() {
        // every column's nonzeros stay inside the fixed-M basis, so checking
        // that the number operator is a multiple of the identity suffices
        let spec = LatticeSpec::end_open(3, 3, Profile::Pth, 2.0, 1.0).unwrap();
        let b = fock_basis(3, 3).unwrap();
        let h = dense_hamiltonian_in(&spec, &b);
        let n = DMatrix::from_diagonal(&DVector::from_iterator(
            b.len(),
            b.states().iter().map(|s| s.iter().sum::<usize>() as f64),
        ));
        assert_eq!((&h * &n - &n * &h).norm(), 0.0);
        assert!((&h - h.transpose()).norm() == 0.0);
    }

    #[test]
    fn perfect_transfer() {
        let j = pth_couplings(5, 2.0).unwrap();
        let v = single_particle_propagate(&j, 1, 0.0).unwrap();
        assert!((v[0].norm() - 1.0).abs() < 1e-15);
        let v = single_particle_propagate(&j, 1, std::f64::consts::FRAC_PI_2).unwrap();
        assert!((v[4].norm() - 1.0).abs() < 1e-10);
        let v = single_particle_propagate(&j, 1, std::f64::consts::PI).unwrap();
        assert!((v[0].norm() - 1.0).abs() < 1e-10);
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dense_pair_rdm_of_fock_state() {
        let b = fock_basis(4, 2).unwrap();
        let mut psi = DVector::zeros(b.len());
        psi[b.index_of(&[1, 0, 0, 1]).unwrap()] = Complex64::new(1.0, 0.0);
        let rho = pair_rdm_dense(&psi, &b).unwrap();
        assert!((rho.trace() - 1.0).abs() < 1e-15);
        assert_eq!(rho.get(1, 1, 1, 1), Complex64::new(1.0, 0.0));
        assert_eq!(rho.purity(), 1.0);
    }
}
