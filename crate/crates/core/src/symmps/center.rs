use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::spectrum::{self, BondSpectrum, Sector, TruncationPolicy};
use super::{svd_sorted, CanonicalState, SiteTensor};
use crate::scalar::Scalar;

impl<T: Scalar> CanonicalState<T> {
    /// Moves the orthogonality centre from site `n` to `n + 1`, leaving site `n`
    /// left-normalized and refreshing the spectrum of bond `n + 1`.
    pub(crate) fn shift_center_right(&mut self, n: usize, policy: &TruncationPolicy) {
        let left = &self.bonds[n];
        let mut right_charges: Vec<usize> = self.sites[n].blocks().map(|((_, qr), _)| qr).collect();
        right_charges.sort_unstable();
        right_charges.dedup();
        let mut decomps = Vec::with_capacity(right_charges.len());
        for qr in right_charges {
            let parts: Vec<(usize, &DMatrix<T>)> = self.sites[n]
                .blocks()
                .filter(|((ql, q), _)| *q == qr && left.dim(*ql) > 0)
                .map(|((ql, _), m)| (ql, m))
                .collect();
            if parts.is_empty() {
                continue;
            }
            let cols = parts[0].1.ncols();
            let rows: usize = parts.iter().map(|(_, m)| m.nrows()).sum();
            let mut mat = DMatrix::<T>::zeros(rows, cols);
            let mut rows_of = Vec::with_capacity(parts.len());
            let mut r0 = 0;
            for (ql, m) in &parts {
                mat.view_mut((r0, 0), m.shape()).copy_from(m);
                rows_of.push((*ql, r0, m.nrows()));
                r0 += m.nrows();
            }
            let (s, u, vt) = svd_sorted(mat, true);
            decomps.push((qr, s, u.unwrap(), vt, rows_of));
        }
        let spectra: Vec<(usize, &[f64])> = decomps.iter().map(|d| (d.0, d.1.as_slice())).collect();
        let sel = spectrum::select(
            &spectra,
            &TruncationPolicy {
                rel_threshold: policy.rel_threshold,
                chi_max: None,
            },
        );
        let norm = sel.kept_sq.sqrt();

        let mut site = SiteTensor::default();
        let mut carry = BTreeMap::new();
        let mut sectors = Vec::new();
        for ((qr, s, u, vt, rows_of), &keep) in decomps.into_iter().zip(&sel.kept) {
            if keep == 0 {
                continue;
            }
            for (ql, r0, d) in rows_of {
                site.insert(ql, qr, u.view((r0, 0), (d, keep)).into_owned());
            }
            let mut sv = vt.rows(0, keep).into_owned();
            for (r, x) in s.iter().take(keep).enumerate() {
                sv.row_mut(r).scale_mut(x / norm);
            }
            carry.insert(qr, sv);
            sectors.push(Sector {
                charge: qr,
                weights: s[..keep].iter().map(|x| x / norm).collect(),
            });
        }
        self.sites[n] = site;
        let mut next = SiteTensor::default();
        for ((ql, qr), m) in self.sites[n + 1].blocks() {
            if let Some(sv) = carry.get(&ql) {
                next.insert(ql, qr, sv * m);
            }
        }
        self.sites[n + 1] = next;
        self.bonds[n + 1] = BondSpectrum::from_sectors(sectors);
    }

    /// Moves the orthogonality centre from site `n` to `n - 1`, leaving site `n`
    /// right-normalized and refreshing the spectrum of bond `n`.
    pub(crate) fn shift_center_left(&mut self, n: usize, policy: &TruncationPolicy) {
        let right = &self.bonds[n + 1];
        let mut left_charges: Vec<usize> = self.sites[n].blocks().map(|((ql, _), _)| ql).collect();
        left_charges.sort_unstable();
        left_charges.dedup();
        let mut decomps = Vec::with_capacity(left_charges.len());
        for ql in left_charges {
            let parts: Vec<(usize, &DMatrix<T>)> = self.sites[n]
                .blocks_from(ql)
                .filter(|((_, qr), _)| right.dim(*qr) > 0)
                .map(|((_, qr), m)| (qr, m))
                .collect();
            if parts.is_empty() {
                continue;
            }
            let rows = parts[0].1.nrows();
            let cols: usize = parts.iter().map(|(_, m)| m.ncols()).sum();
            let mut mat = DMatrix::<T>::zeros(rows, cols);
            let mut cols_of = Vec::with_capacity(parts.len());
            let mut c0 = 0;
            for (qr, m) in &parts {
                mat.view_mut((0, c0), m.shape()).copy_from(m);
                cols_of.push((*qr, c0, m.ncols()));
                c0 += m.ncols();
            }
            let (s, u, vt) = svd_sorted(mat, true);
            decomps.push((ql, s, u.unwrap(), vt, cols_of));
        }
        let spectra: Vec<(usize, &[f64])> = decomps.iter().map(|d| (d.0, d.1.as_slice())).collect();
        let sel = spectrum::select(
            &spectra,
            &TruncationPolicy {
                rel_threshold: policy.rel_threshold,
                chi_max: None,
            },
        );
        let norm = sel.kept_sq.sqrt();

        let mut site = SiteTensor::default();
        let mut carry = BTreeMap::new();
        let mut sectors = Vec::new();
        for ((ql, s, u, vt, cols_of), &keep) in decomps.into_iter().zip(&sel.kept) {
            if keep == 0 {
                continue;
            }
            for (qr, c0, d) in cols_of {
                site.insert(ql, qr, vt.view((0, c0), (keep, d)).into_owned());
            }
            let mut us = u.columns(0, keep).into_owned();
            for (c, x) in s.iter().take(keep).enumerate() {
                us.column_mut(c).scale_mut(x / norm);
            }
            carry.insert(ql, us);
            sectors.push(Sector {
                charge: ql,
                weights: s[..keep].iter().map(|x| x / norm).collect(),
            });
        }
        self.sites[n] = site;
        let mut prev = SiteTensor::default();
        for ((ql, qr), m) in self.sites[n - 1].blocks() {
            if let Some(us) = carry.get(&qr) {
                prev.insert(ql, qr, m * us);
            }
        }
        self.sites[n - 1] = prev;
        self.bonds[n] = BondSpectrum::from_sectors(sectors);
    }

    /// Moves the orthogonality centre from site `from` to site `to`.
    pub(crate) fn move_center(&mut self, from: usize, to: usize, policy: &TruncationPolicy) {
        for n in from..to {
            self.shift_center_right(n, policy);
        }
        for n in (to + 1..=from).rev() {
            self.shift_center_left(n, policy);
        }
    }
}
