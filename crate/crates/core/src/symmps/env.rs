//! Transfer-matrix contractions over charge-tagged site tensors.
//!
//! An environment maps a pair `(bra charge, ket charge)` on a bond to a
//! matrix whose rows index the bra Schmidt vectors and whose columns index the
//! ket Schmidt vectors. Local operators are given as maps from the ket
//! occupation to the single bra occupation they connect to, together with the
//! matrix element. Every operator used here (number functions, `a`, `a†`)
//! has that form.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::SiteTensor;
use crate::scalar::Scalar;

pub(crate) type Env<T> = BTreeMap<(usize, usize), DMatrix<T>>;

pub(crate) fn boundary<T: Scalar>(charge: usize) -> Env<T> {
    let mut e = Env::new();
    e.insert((charge, charge), DMatrix::from_element(1, 1, T::one()));
    e
}

fn accumulate<T: Scalar>(env: &mut Env<T>, key: (usize, usize), m: DMatrix<T>) {
    match env.get_mut(&key) {
        Some(acc) => *acc += m,
        None => {
            env.insert(key, m);
        }
    }
}

/// Grows a left environment through one site.
pub(crate) fn transfer_left<T, F>(
    env: &Env<T>,
    bra: &SiteTensor<T>,
    ket: &SiteTensor<T>,
    op: F,
) -> Env<T>
where
    T: Scalar,
    F: Fn(usize) -> Option<(usize, f64)>,
{
    let mut out = Env::new();
    for (&(qb, qk), e) in env {
        for ((_, qk2), k) in ket.blocks_from(qk) {
            let Some((ib, c)) = op(qk2 - qk) else {
                continue;
            };
            let qb2 = qb + ib;
            let Some(b) = bra.block(qb, qb2) else {
                continue;
            };
            let mut m = b.ad_mul(&(e * k));
            if c != 1.0 {
                m *= T::from_re(c);
            }
            accumulate(&mut out, (qb2, qk2), m);
        }
    }
    out
}

/// Grows a right environment through one site.
pub(crate) fn transfer_right<T, F>(
    env: &Env<T>,
    bra: &SiteTensor<T>,
    ket: &SiteTensor<T>,
    op: F,
) -> Env<T>
where
    T: Scalar,
    F: Fn(usize) -> Option<(usize, f64)>,
{
    let mut out = Env::new();
    for (&(qb2, qk2), e) in env {
        for ((qk, _), k) in ket.blocks().filter(|((_, r), _)| *r == qk2) {
            let Some((ib, c)) = op(qk2 - qk) else {
                continue;
            };
            let Some(qb) = qb2.checked_sub(ib) else {
                continue;
            };
            let Some(b) = bra.block(qb, qb2) else {
                continue;
            };
            let mut m = b.map(|x| x.conjugate()) * e * k.transpose();
            if c != 1.0 {
                m *= T::from_re(c);
            }
            accumulate(&mut out, (qb, qk), m);
        }
    }
    out
}

/// Sum of elementwise products of matching left and right environments.
pub(crate) fn close<T: Scalar>(left: &Env<T>, right: &Env<T>) -> T {
    let mut acc = T::zero();
    for (key, l) in left {
        if let Some(r) = right.get(key) {
            acc += l.component_mul(r).sum();
        }
    }
    acc
}

#[inline]
pub(crate) fn identity(i: usize) -> Option<(usize, f64)> {
    Some((i, 1.0))
}

#[inline]
pub(crate) fn number(i: usize) -> Option<(usize, f64)> {
    Some((i, i as f64))
}

#[inline]
pub(crate) fn create(i: usize) -> Option<(usize, f64)> {
    Some((i + 1, ((i + 1) as f64).sqrt()))
}

#[inline]
pub(crate) fn annihilate(i: usize) -> Option<(usize, f64)> {
    (i > 0).then(|| (i - 1, (i as f64).sqrt()))
}

/// Cached identity environments for repeated local measurements.
pub(crate) struct Environments<T: Scalar> {
    /// `left[n]` covers sites `0..n`.
    pub left: Vec<Env<T>>,
    /// `right[n]` covers sites `n..N`.
    pub right: Vec<Env<T>>,
}

impl<T: Scalar> Environments<T> {
    pub fn new(sites: &[SiteTensor<T>], n_bosons: usize) -> Self {
        let n = sites.len();
        let mut left = Vec::with_capacity(n + 1);
        left.push(boundary(0));
        for s in sites {
            let next = transfer_left(left.last().unwrap(), s, s, identity);
            left.push(next);
        }
        let mut right = vec![Env::new(); n + 1];
        right[n] = boundary(n_bosons);
        for k in (0..n).rev() {
            right[k] = transfer_right(&right[k + 1], &sites[k], &sites[k], identity);
        }
        Self { left, right }
    }

    pub fn norm_sq(&self) -> f64 {
        close(&self.left[0], &self.right[0]).real()
    }
}
