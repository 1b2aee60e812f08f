//! Particle-number-tagged matrix product states in canonical form.
//!
//! Every Schmidt vector carries the number of bosons to its left, so a site
//! tensor only stores the blocks `(left charge, right charge)` whose
//! difference is the local occupation. The local Hilbert space is never cut:
//! a site may hold anywhere between 0 and `M` bosons, and blocks exist only
//! where the bookkeeping allows them.
//!
//! Storage follows the right-normalized convention: site `n` holds
//! `B_n = Γ_n λ_n` next to the bond spectra `λ`. The Vidal tensors `Γ` are
//! recovered on demand through [`CanonicalState::gamma`]. Keeping `B` avoids
//! dividing by small Schmidt values during two-site updates.

mod center;
mod checkpoint;
pub(crate) mod env;
mod spectrum;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub use checkpoint::CHECKPOINT_FORMAT_VERSION;
pub use spectrum::{BondSpectrum, Sector, TruncationPolicy, DEFAULT_REL_THRESHOLD};

use crate::error::{Error, Result};
use crate::oracle::FockBasis;
use crate::scalar::Scalar;
use env::Environments;

/// Schmidt values below this fraction of the largest are treated as absent
/// when dividing by them.
pub const LAMBDA_GUARD: f64 = 1e-12;

/// Charge-blocked site tensor. Block `(ql, qr)` holds the amplitudes for local
/// occupation `qr - ql`, rows indexing the left Schmidt vectors of charge `ql`
/// and columns the right Schmidt vectors of charge `qr`.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteTensor<T: Scalar> {
    blocks: BTreeMap<(usize, usize), DMatrix<T>>,
}

impl<T: Scalar> Default for SiteTensor<T> {
    fn default() -> Self {
        Self {
            blocks: BTreeMap::new(),
        }
    }
}

impl<T: Scalar> SiteTensor<T> {
    pub fn blocks(&self) -> impl Iterator<Item = ((usize, usize), &DMatrix<T>)> {
        self.blocks.iter().map(|(k, v)| (*k, v))
    }

    pub fn block(&self, ql: usize, qr: usize) -> Option<&DMatrix<T>> {
        self.blocks.get(&(ql, qr))
    }

    pub(crate) fn blocks_from(
        &self,
        ql: usize,
    ) -> impl Iterator<Item = ((usize, usize), &DMatrix<T>)> {
        self.blocks
            .range((ql, 0)..=(ql, usize::MAX))
            .map(|(k, v)| (*k, v))
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub(crate) fn insert(&mut self, ql: usize, qr: usize, m: DMatrix<T>) {
        debug_assert!(qr >= ql);
        self.blocks.insert((ql, qr), m);
    }

    /// Every stored key satisfies `left charge + occupation = right charge`
    /// with `0 <= occupation <= max_occupation`.
    pub fn respects_charge_rule(&self, max_occupation: usize) -> bool {
        self.blocks
            .keys()
            .all(|&(ql, qr)| qr >= ql && qr - ql <= max_occupation)
    }

    fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> SiteTensor<U> {
        SiteTensor {
            blocks: self.blocks.iter().map(|(k, m)| (*k, m.map(&f))).collect(),
        }
    }
}

/// Singular value decomposition with values sorted descending.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Update {
    Weighted { renormalize: bool },
    CenterRight,
    CenterLeft,
}

pub(crate) fn svd_sorted<T: Scalar>(
    m: DMatrix<T>,
    want_u: bool,
) -> (Vec<f64>, Option<DMatrix<T>>, DMatrix<T>) {
    let (s, u, vt) = T::thin_svd(&m);
    (s, want_u.then_some(u), vt)
}

/// Charge-tagged canonical matrix product state of `N` sites holding `M`
/// bosons.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalState<T: Scalar = Complex64> {
    n_sites: usize,
    n_bosons: usize,
    sites: Vec<SiteTensor<T>>,
    /// `N + 1` spectra including the two trivial boundary bonds.
    bonds: Vec<BondSpectrum>,
}

impl<T: Scalar> CanonicalState<T> {
    /// Fock product state with the given occupations.
    pub fn product_state(occupations: &[usize]) -> Result<Self> {
        let n = occupations.len();
        if n < 2 {
            return Err(Error::InvalidSize(format!(
                "need at least 2 sites, got {n}"
            )));
        }
        let mut charges = Vec::with_capacity(n + 1);
        charges.push(0usize);
        for &o in occupations {
            charges.push(charges.last().unwrap() + o);
        }
        let sites = (0..n)
            .map(|k| {
                let mut s = SiteTensor::default();
                s.insert(
                    charges[k],
                    charges[k + 1],
                    DMatrix::from_element(1, 1, T::one()),
                );
                s
            })
            .collect();
        let bonds = charges.iter().map(|&q| BondSpectrum::single(q)).collect();
        Ok(Self {
            n_sites: n,
            n_bosons: charges[n],
            sites,
            bonds,
        })
    }

    /// Like [`product_state`](Self::product_state) for unvalidated input.
    pub fn from_signed_occupations(occupations: &[i64]) -> Result<Self> {
        let occ = occupations
            .iter()
            .map(|&o| {
                usize::try_from(o)
                    .map_err(|_| Error::InvalidInput(format!("negative occupation {o}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::product_state(&occ)
    }

    /// Unit filling, one boson per site.
    pub fn mott(n_sites: usize) -> Result<Self> {
        Self::product_state(&vec![1; n_sites])
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_bosons(&self) -> usize {
        self.n_bosons
    }

    /// Spectrum of interior bond `k`, between sites `k` and `k + 1` (1-based).
    pub fn bond(&self, k: usize) -> Result<&BondSpectrum> {
        self.check_bond(k)?;
        Ok(&self.bonds[k])
    }

    pub fn bonds(&self) -> &[BondSpectrum] {
        &self.bonds[1..self.n_sites]
    }

    /// Right-normalized tensor `Γ_n λ_n` of site `n` (1-based).
    pub fn site(&self, n: usize) -> Result<&SiteTensor<T>> {
        crate::error::check_site(n, self.n_sites)?;
        Ok(&self.sites[n - 1])
    }

    /// Vidal tensor `Γ_n` of site `n` (1-based). Columns whose Schmidt value
    /// falls under [`LAMBDA_GUARD`] times the largest are set to zero.
    pub fn gamma(&self, n: usize) -> Result<SiteTensor<T>> {
        crate::error::check_site(n, self.n_sites)?;
        let right = &self.bonds[n];
        let cut = LAMBDA_GUARD * right.max_weight();
        let mut out = SiteTensor::default();
        for ((ql, qr), b) in self.sites[n - 1].blocks() {
            let w = right.weights(qr);
            let mut g = b.clone();
            for (c, &l) in w.iter().enumerate() {
                let inv = if l > cut { 1.0 / l } else { 0.0 };
                g.column_mut(c).scale_mut(inv);
            }
            out.insert(ql, qr, g);
        }
        Ok(out)
    }

    /// Rebuilds a state from Vidal tensors and interior bond spectra.
    pub(crate) fn from_gammas(
        n_bosons: usize,
        gammas: Vec<SiteTensor<T>>,
        interior: Vec<BondSpectrum>,
    ) -> Result<Self> {
        let n = gammas.len();
        if n < 2 || interior.len() != n - 1 {
            return Err(Error::ShapeMismatch(format!(
                "{n} site tensors with {} bonds",
                interior.len()
            )));
        }
        let mut bonds = Vec::with_capacity(n + 1);
        bonds.push(BondSpectrum::single(0));
        bonds.extend(interior);
        bonds.push(BondSpectrum::single(n_bosons));
        let mut sites = Vec::with_capacity(n);
        for (k, g) in gammas.into_iter().enumerate() {
            let right = &bonds[k + 1];
            let left = &bonds[k];
            let mut s = SiteTensor::default();
            for ((ql, qr), m) in g.blocks {
                if m.nrows() != left.dim(ql) || m.ncols() != right.dim(qr) {
                    return Err(Error::ShapeMismatch(format!(
                        "site {} block ({ql},{qr}) is {}x{}, bonds allow {}x{}",
                        k + 1,
                        m.nrows(),
                        m.ncols(),
                        left.dim(ql),
                        right.dim(qr)
                    )));
                }
                let mut b = m;
                for (c, &l) in right.weights(qr).iter().enumerate() {
                    b.column_mut(c).scale_mut(l);
                }
                s.insert(ql, qr, b);
            }
            sites.push(s);
        }
        let state = Self {
            n_sites: n,
            n_bosons,
            sites,
            bonds,
        };
        if !state.charge_rule_holds() {
            return Err(Error::Corruption(
                "site block violates the charge rule".into(),
            ));
        }
        Ok(state)
    }

    pub(crate) fn sites_raw(&self) -> &[SiteTensor<T>] {
        &self.sites
    }

    pub(crate) fn environments(&self) -> Environments<T> {
        Environments::new(&self.sites, self.n_bosons)
    }

    fn check_bond(&self, k: usize) -> Result<()> {
        if k == 0 || k >= self.n_sites {
            Err(Error::IndexOutOfRange {
                index: k,
                max: self.n_sites - 1,
            })
        } else {
            Ok(())
        }
    }

    /// Largest number of Schmidt values on any bond.
    pub fn max_chi(&self) -> usize {
        self.bonds.iter().map(BondSpectrum::chi).max().unwrap_or(1)
    }

    /// Charges on the left and right boundaries are 0 and `M`, and every
    /// stored block obeys the charge rule.
    pub fn charge_rule_holds(&self) -> bool {
        self.bonds[0] == BondSpectrum::single(0)
            && self.bonds[self.n_sites]
                .charges()
                .eq(std::iter::once(self.n_bosons))
            && self
                .sites
                .iter()
                .all(|s| s.respects_charge_rule(self.n_bosons))
            && self.sites.iter().enumerate().all(|(k, s)| {
                s.blocks().all(|((ql, qr), m)| {
                    m.nrows() == self.bonds[k].dim(ql) && m.ncols() == self.bonds[k + 1].dim(qr)
                })
            })
    }

    /// `⟨ψ|ψ⟩^{1/2}` by full contraction.
    pub fn norm(&self) -> f64 {
        let mut e = env::boundary::<T>(0);
        for s in &self.sites {
            e = env::transfer_left(&e, s, s, env::identity);
        }
        e.get(&(self.n_bosons, self.n_bosons))
            .map_or(0.0, |m| m[(0, 0)].real())
            .max(0.0)
            .sqrt()
    }

    /// Multiplies the state by a real factor.
    pub fn scale(&mut self, factor: f64) {
        for m in self.sites[0].blocks.values_mut() {
            *m *= T::from_re(factor);
        }
    }

    /// `⟨self|other⟩`.
    pub fn overlap(&self, other: &Self) -> Result<Complex64> {
        if self.n_sites != other.n_sites || self.n_bosons != other.n_bosons {
            return Err(Error::ShapeMismatch(format!(
                "(N, M) = ({}, {}) vs ({}, {})",
                self.n_sites, self.n_bosons, other.n_sites, other.n_bosons
            )));
        }
        let mut e = env::boundary::<T>(0);
        for (a, b) in self.sites.iter().zip(&other.sites) {
            e = env::transfer_left(&e, a, b, env::identity);
        }
        Ok(e.get(&(self.n_bosons, self.n_bosons))
            .map_or(Complex64::new(0.0, 0.0), |m| m[(0, 0)].to_c64()))
    }

    /// `|⟨a|b⟩| / (‖a‖‖b‖)`; equals `|⟨a|b⟩|` for normalized states.
    pub fn fidelity(&self, other: &Self) -> Result<f64> {
        let o = self.overlap(other)?;
        let d = self.norm() * other.norm();
        if d == 0.0 {
            return Ok(0.0);
        }
        Ok((o.norm() / d).min(1.0))
    }

    /// Entanglement entropy (bits) across interior bond `k`.
    pub fn schmidt_entropy(&self, k: usize) -> Result<f64> {
        Ok(self.bond(k)?.entropy())
    }

    /// Truncates bond `k` per `policy` and returns the discarded squared
    /// weight. The surviving Schmidt values are renormalized; site tensors are
    /// left as they were, so the state norm becomes `√(1 - discarded)`.
    pub fn truncate_bond(&mut self, k: usize, policy: &TruncationPolicy) -> Result<f64> {
        self.check_bond(k)?;
        policy.validate()?;
        let bond = &self.bonds[k];
        let spectra: Vec<(usize, &[f64])> = bond
            .sectors()
            .iter()
            .map(|s| (s.charge, s.weights.as_slice()))
            .collect();
        let sel = spectrum::select(&spectra, policy);
        if sel.kept.iter().all(|&c| c == 0) {
            return Err(Error::Corruption(format!(
                "bond {k} would be left without Schmidt values"
            )));
        }
        let discarded = sel.discarded();
        let kept: BTreeMap<usize, usize> = spectra
            .iter()
            .zip(&sel.kept)
            .map(|((q, _), &c)| (*q, c))
            .collect();
        let sectors = bond
            .sectors()
            .iter()
            .map(|s| Sector {
                charge: s.charge,
                weights: s.weights[..kept[&s.charge]].to_vec(),
            })
            .collect();
        let mut spec = BondSpectrum::from_sectors(sectors);
        spec.normalize();
        self.bonds[k] = spec;

        let left = &mut self.sites[k - 1];
        left.blocks.retain(|&(_, qr), _| kept[&qr] > 0);
        for (&(_, qr), m) in left.blocks.iter_mut() {
            let c = kept[&qr];
            if c < m.ncols() {
                *m = m.columns(0, c).into_owned();
            }
        }
        let right = &mut self.sites[k];
        right.blocks.retain(|&(ql, _), _| kept[&ql] > 0);
        for (&(ql, _), m) in right.blocks.iter_mut() {
            let c = kept[&ql];
            if c < m.nrows() {
                *m = m.rows(0, c).into_owned();
            }
        }
        Ok(discarded)
    }

    /// Amplitudes over the number-conserving Fock basis of
    /// [`FockBasis::new`], within the default capacity.
    pub fn to_dense(&self) -> Result<DVector<Complex64>> {
        let basis = FockBasis::new(self.n_sites, self.n_bosons)?;
        Ok(self.to_dense_in(&basis))
    }

    pub fn to_dense_in(&self, basis: &FockBasis) -> DVector<Complex64> {
        assert_eq!(
            (basis.n_sites(), basis.n_bosons()),
            (self.n_sites, self.n_bosons)
        );
        let mut out = DVector::zeros(basis.len());
        let mut occ = vec![0usize; self.n_sites];
        let row = DMatrix::from_element(1, 1, T::one());
        self.expand(0, 0, row, &mut occ, basis, &mut out);
        out
    }

    fn expand(
        &self,
        site: usize,
        charge: usize,
        row: DMatrix<T>,
        occ: &mut [usize],
        basis: &FockBasis,
        out: &mut DVector<Complex64>,
    ) {
        if site == self.n_sites {
            if charge == self.n_bosons {
                if let Some(i) = basis.index_of(occ) {
                    out[i] = row[(0, 0)].to_c64();
                }
            }
            return;
        }
        for ((_, qr), b) in self.sites[site].blocks_from(charge) {
            occ[site] = qr - charge;
            self.expand(site + 1, qr, &row * b, occ, basis, out);
        }
    }

    /// Same state with complex amplitudes.
    pub fn to_complex(&self) -> CanonicalState<Complex64> {
        CanonicalState {
            n_sites: self.n_sites,
            n_bosons: self.n_bosons,
            sites: self.sites.iter().map(|s| s.map(Scalar::to_c64)).collect(),
            bonds: self.bonds.clone(),
        }
    }

    /// Largest deviation from right-normalization of the site tensors and
    /// from left-normalization of `λ_{n-1} Γ_n`.
    pub fn orthogonality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, s) in self.sites.iter().enumerate() {
            let left = &self.bonds[k];
            let right = &self.bonds[k + 1];
            // Σ_qr B B† = 1 per left charge
            let mut acc: BTreeMap<usize, DMatrix<T>> = BTreeMap::new();
            for ((ql, _), b) in s.blocks() {
                let bb = b * b.adjoint();
                match acc.get_mut(&ql) {
                    Some(m) => *m += bb,
                    None => {
                        acc.insert(ql, bb);
                    }
                }
            }
            for sec in left.sectors() {
                let id = DMatrix::<T>::identity(sec.weights.len(), sec.weights.len());
                let err = acc.get(&sec.charge).map_or(1.0, |m| (m - &id).norm());
                worst = worst.max(err);
            }
            // Σ_ql B† λ_left² B = λ_right² per right charge
            let mut acc: BTreeMap<usize, DMatrix<T>> = BTreeMap::new();
            for ((ql, qr), b) in s.blocks() {
                let mut lb = b.clone();
                for (r, &w) in left.weights(ql).iter().enumerate() {
                    lb.row_mut(r).scale_mut(w * w);
                }
                let m = b.ad_mul(&lb);
                match acc.get_mut(&qr) {
                    Some(a) => *a += m,
                    None => {
                        acc.insert(qr, m);
                    }
                }
            }
            for sec in right.sectors() {
                let target = DMatrix::<T>::from_diagonal(&DVector::from_iterator(
                    sec.weights.len(),
                    sec.weights.iter().map(|w| T::from_re(w * w)),
                ));
                let err = acc.get(&sec.charge).map_or(1.0, |m| (m - &target).norm());
                worst = worst.max(err);
            }
        }
        worst
    }

    /// Restores exact canonical form and unit norm, dropping Schmidt values at
    /// or below the policy's relative threshold.
    pub fn canonicalize(&mut self, policy: &TruncationPolicy) {
        let n = self.n_sites;
        // right-to-left: make every site but the first right-normalized
        for k in (1..n).rev() {
            let left_charges: Vec<usize> = self.bonds[k].charges().collect();
            let mut new_site = SiteTensor::default();
            let mut carry: BTreeMap<usize, DMatrix<T>> = BTreeMap::new();
            let mut dims = Vec::new();
            for ql in left_charges {
                let parts: Vec<(usize, &DMatrix<T>)> = self.sites[k]
                    .blocks_from(ql)
                    .map(|((_, qr), m)| (qr, m))
                    .collect();
                if parts.is_empty() {
                    continue;
                }
                let rows = parts[0].1.nrows();
                let cols: usize = parts.iter().map(|(_, m)| m.ncols()).sum();
                let mut mat = DMatrix::<T>::zeros(rows, cols);
                let mut c0 = 0;
                for (_, m) in &parts {
                    mat.view_mut((0, c0), (rows, m.ncols())).copy_from(m);
                    c0 += m.ncols();
                }
                let (s, u, vt) = svd_sorted(mat, true);
                let u = u.unwrap();
                let cut = 1e-16 * s.first().copied().unwrap_or(0.0);
                let keep = s.iter().take_while(|&&x| x > cut).count();
                if keep == 0 {
                    continue;
                }
                let mut c0 = 0;
                for (qr, m) in &parts {
                    new_site.insert(ql, *qr, vt.view((0, c0), (keep, m.ncols())).into_owned());
                    c0 += m.ncols();
                }
                let mut us = u.columns(0, keep).into_owned();
                for (c, &x) in s.iter().take(keep).enumerate() {
                    us.column_mut(c).scale_mut(x);
                }
                carry.insert(ql, us);
                dims.push(Sector {
                    charge: ql,
                    weights: vec![1.0; keep],
                });
            }
            self.sites[k] = new_site;
            let prev = &mut self.sites[k - 1];
            let mut updated = SiteTensor::default();
            for ((ql, qr), m) in prev.blocks() {
                if let Some(us) = carry.get(&qr) {
                    updated.insert(ql, qr, m * us);
                }
            }
            *prev = updated;
            self.bonds[k] = BondSpectrum::from_sectors(dims);
        }

        // left-to-right: Schmidt decomposition at every bond
        let mut carry: BTreeMap<usize, DMatrix<T>> = BTreeMap::new();
        let mut gauge: BTreeMap<usize, DMatrix<T>> = BTreeMap::new();
        carry.insert(0, DMatrix::from_element(1, 1, T::one()));
        gauge.insert(0, DMatrix::from_element(1, 1, T::one()));
        for k in 0..n {
            let site = &self.sites[k];
            if k == n - 1 {
                let mut out = SiteTensor::default();
                for ((ql, qr), b) in site.blocks() {
                    if let Some(w) = gauge.get(&ql) {
                        out.insert(ql, qr, w * b);
                    }
                }
                self.sites[k] = out;
                break;
            }
            let mut right_charges: Vec<usize> = site.blocks().map(|((_, qr), _)| qr).collect();
            right_charges.sort_unstable();
            right_charges.dedup();
            let mut decomps = Vec::new();
            for &qr in &right_charges {
                let parts: Vec<(usize, DMatrix<T>)> = site
                    .blocks()
                    .filter(|((ql, q), _)| *q == qr && carry.contains_key(ql))
                    .map(|((ql, _), b)| (ql, &carry[&ql] * b))
                    .collect();
                if parts.is_empty() {
                    continue;
                }
                let cols = parts[0].1.ncols();
                let rows: usize = parts.iter().map(|(_, m)| m.nrows()).sum();
                let mut mat = DMatrix::<T>::zeros(rows, cols);
                let mut r0 = 0;
                for (_, m) in &parts {
                    mat.view_mut((r0, 0), (m.nrows(), cols)).copy_from(m);
                    r0 += m.nrows();
                }
                let (s, _, vt) = svd_sorted(mat, false);
                decomps.push((qr, s, vt));
            }
            let spectra: Vec<(usize, &[f64])> =
                decomps.iter().map(|(q, s, _)| (*q, s.as_slice())).collect();
            let cut_policy = TruncationPolicy {
                rel_threshold: policy.rel_threshold,
                chi_max: None,
            };
            let sel = spectrum::select(&spectra, &cut_policy);
            let norm = sel.kept_sq.sqrt();
            let mut new_site = SiteTensor::default();
            let mut next_carry = BTreeMap::new();
            let mut next_gauge = BTreeMap::new();
            let mut sectors = Vec::new();
            for ((qr, s, vt), &keep) in decomps.iter().zip(&sel.kept) {
                if keep == 0 {
                    continue;
                }
                let vt = vt.rows(0, keep).into_owned();
                let mut v = vt.adjoint();
                if k == 0 {
                    // the first site still carries the norm
                    v /= T::from_re(norm);
                }
                for ((ql, q), b) in site.blocks() {
                    if q != *qr {
                        continue;
                    }
                    if let Some(w) = gauge.get(&ql) {
                        new_site.insert(ql, *qr, w * b * &v);
                    }
                }
                let lam: Vec<f64> = s[..keep].iter().map(|x| x / norm).collect();
                let mut c = vt.clone();
                for (r, &l) in lam.iter().enumerate() {
                    c.row_mut(r).scale_mut(l);
                }
                next_carry.insert(*qr, c);
                next_gauge.insert(*qr, vt);
                sectors.push(Sector {
                    charge: *qr,
                    weights: lam,
                });
            }
            self.sites[k] = new_site;
            // the next site only keeps blocks whose left charge survived
            let keep_charges: Vec<usize> = sectors.iter().map(|s| s.charge).collect();
            self.sites[k + 1]
                .blocks
                .retain(|&(ql, _), _| keep_charges.binary_search(&ql).is_ok());
            self.bonds[k + 1] = BondSpectrum::from_sectors(sectors);
            carry = next_carry;
            gauge = next_gauge;
        }
    }

    /// Applies a two-site operator to interior bond `k` (1-based), given as
    /// one block per pair total `s` indexed by the left occupation, then
    /// re-splits by charge-sector SVD. Returns the discarded weight fraction.
    /// Two-site update at bond `k`. `Weighted` assumes the B form on both sites;
    /// the centred variants assume the orthogonality centre sits on one of the two sites
    /// and leave it on site `k` (`CenterRight`) or `k - 1` (`CenterLeft`).
    pub(crate) fn apply_two_site(
        &mut self,
        k: usize,
        gate: &[DMatrix<T>],
        policy: &TruncationPolicy,
        update: Update,
    ) -> Result<f64> {
        self.check_bond(k)?;
        let (a, b) = (k - 1, k);
        let left = &self.bonds[k - 1];
        let right = &self.bonds[k + 1];

        // θ grouped by outer charges, one entry per left occupation
        let mut theta: BTreeMap<(usize, usize), Vec<Option<DMatrix<T>>>> = BTreeMap::new();
        for ((ql, qm), ma) in self.sites[a].blocks() {
            for ((_, qr), mb) in self.sites[b].blocks_from(qm) {
                let s = qr - ql;
                let slot = theta.entry((ql, qr)).or_insert_with(|| vec![None; s + 1]);
                slot[qm - ql] = Some(ma * mb);
            }
        }

        // gate action, regrouped by the new middle charge
        let mut by_mid: BTreeMap<usize, Vec<(usize, usize, DMatrix<T>)>> = BTreeMap::new();
        for ((ql, qr), th) in &theta {
            let s = qr - ql;
            let g = gate.get(s).ok_or_else(|| {
                Error::InvalidOperator(format!("gate has no block for pair total {s}"))
            })?;
            let (rows, cols) = th.iter().flatten().next().map(|m| m.shape()).unwrap();
            for ip in 0..=s {
                let mut acc: Option<DMatrix<T>> = None;
                for (i, t) in th.iter().enumerate() {
                    let Some(t) = t else { continue };
                    let c = g[(ip, i)];
                    if c == T::zero() {
                        continue;
                    }
                    match acc.as_mut() {
                        Some(m) => *m += t * c,
                        None => acc = Some(t * c),
                    }
                }
                if let Some(m) = acc {
                    debug_assert_eq!(m.shape(), (rows, cols));
                    by_mid.entry(ql + ip).or_default().push((*ql, *qr, m));
                }
            }
        }

        struct Decomp<T: Scalar> {
            charge: usize,
            s: Vec<f64>,
            u: Option<DMatrix<T>>,
            vt: DMatrix<T>,
            phi: Option<DMatrix<T>>,
            row_charges: Vec<(usize, usize, usize)>,
            col_charges: Vec<(usize, usize, usize)>,
        }

        let mut decomps: Vec<Decomp<T>> = Vec::with_capacity(by_mid.len());
        for (c, parts) in by_mid {
            let mut row_q: Vec<usize> = parts.iter().map(|p| p.0).collect();
            row_q.sort_unstable();
            row_q.dedup();
            let mut col_q: Vec<usize> = parts.iter().map(|p| p.1).collect();
            col_q.sort_unstable();
            col_q.dedup();
            let mut row_charges = Vec::with_capacity(row_q.len());
            let mut off = 0;
            for q in row_q {
                let d = left.dim(q);
                row_charges.push((q, off, d));
                off += d;
            }
            let nrows = off;
            let mut col_charges = Vec::with_capacity(col_q.len());
            off = 0;
            for q in col_q {
                let d = right.dim(q);
                col_charges.push((q, off, d));
                off += d;
            }
            let ncols = off;
            let mut phi = DMatrix::<T>::zeros(nrows, ncols);
            for (ql, qr, m) in parts {
                let &(_, r0, _) = row_charges.iter().find(|x| x.0 == ql).unwrap();
                let &(_, c0, _) = col_charges.iter().find(|x| x.0 == qr).unwrap();
                phi.view_mut((r0, c0), m.shape()).copy_from(&m);
            }
            let (s, u, vt, phi) = if let Update::Weighted { .. } = update {
                let mut psi = phi.clone();
                for &(q, r0, d) in &row_charges {
                    for (r, &w) in left.weights(q).iter().enumerate().take(d) {
                        psi.row_mut(r0 + r).scale_mut(w);
                    }
                }
                let (s, u, vt) = svd_sorted(psi, false);
                (s, u, vt, Some(phi))
            } else {
                let (s, u, vt) = svd_sorted(phi, true);
                (s, u, vt, None)
            };
            decomps.push(Decomp {
                charge: c,
                s,
                u,
                vt,
                phi,
                row_charges,
                col_charges,
            });
        }

        let spectra: Vec<(usize, &[f64])> =
            decomps.iter().map(|d| (d.charge, d.s.as_slice())).collect();
        let sel = spectrum::select(&spectra, policy);
        if sel.kept_sq <= 0.0 || sel.kept.iter().all(|&c| c == 0) {
            return Err(Error::Corruption(format!(
                "bond {k} has an empty spectrum after the update"
            )));
        }
        let norm = sel.kept_sq.sqrt();
        let discarded = sel.discarded();

        let mut new_a = SiteTensor::default();
        let mut new_b = SiteTensor::default();
        let mut sectors = Vec::with_capacity(decomps.len());
        for (d, &keep) in decomps.iter().zip(&sel.kept) {
            if keep == 0 {
                continue;
            }
            let mut vt = d.vt.rows(0, keep).into_owned();
            let mut av = match (update, &d.phi, &d.u) {
                (Update::Weighted { renormalize }, Some(phi), _) => {
                    let mut av = phi * vt.adjoint();
                    if renormalize {
                        av *= T::from_re(1.0 / norm);
                    }
                    av
                }
                (_, _, Some(u)) => u.columns(0, keep).into_owned(),
                _ => unreachable!(),
            };
            match update {
                Update::Weighted { .. } => {}
                Update::CenterRight => {
                    for (r, x) in d.s.iter().take(keep).enumerate() {
                        vt.row_mut(r).scale_mut(x / norm);
                    }
                }
                Update::CenterLeft => {
                    for (c, x) in d.s.iter().take(keep).enumerate() {
                        av.column_mut(c).scale_mut(x / norm);
                    }
                }
            }
            for &(qr, c0, dim) in &d.col_charges {
                new_b.insert(d.charge, qr, vt.columns(c0, dim).into_owned());
            }
            for &(ql, r0, dim) in &d.row_charges {
                new_a.insert(ql, d.charge, av.rows(r0, dim).into_owned());
            }
            sectors.push(Sector {
                charge: d.charge,
                weights: d.s[..keep].iter().map(|x| x / norm).collect(),
            });
        }
        self.sites[a] = new_a;
        self.sites[b] = new_b;
        self.bonds[k] = BondSpectrum::from_sectors(sectors);
        Ok(discarded)
    }
}
