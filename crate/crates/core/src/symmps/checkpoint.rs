//! JSON checkpoint of a canonical state.
//!
//! Bonds are listed as `(weight, charge)` pairs in global Schmidt order and
//! sites as `(left index, occupation, right index, re, im)` entries of the
//! Vidal tensors. Floats are written with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Deserialize;

use super::{BondSpectrum, CanonicalState, Sector, SiteTensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format_version: u32,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    bonds: Vec<Vec<(f64, usize)>>,
    sites: Vec<Vec<(usize, usize, usize, f64, f64)>>,
}

fn num(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").unwrap();
}

impl<T: Scalar> CanonicalState<T> {
    pub fn to_checkpoint_string(&self) -> String {
        let n = self.n_sites;
        let mut out = String::new();
        writeln!(
            out,
            "{{\n  \"format_version\": {CHECKPOINT_FORMAT_VERSION},"
        )
        .unwrap();
        writeln!(out, "  \"N\": {n},\n  \"M\": {},", self.n_bosons).unwrap();
        out.push_str("  \"bonds\": [");
        for (b, bond) in self.bonds().iter().enumerate() {
            out.push_str(if b == 0 { "\n    [" } else { ",\n    [" });
            for (e, (w, q)) in bond.entries().into_iter().enumerate() {
                if e > 0 {
                    out.push_str(", ");
                }
                out.push('[');
                num(&mut out, w);
                write!(out, ", {q}]").unwrap();
            }
            out.push(']');
        }
        out.push_str("\n  ],\n  \"sites\": [");
        for k in 0..n {
            let left = self.bonds[k].global_indices();
            let right = self.bonds[k + 1].global_indices();
            let gamma = self.gamma(k + 1).expect("site in range");
            out.push_str(if k == 0 { "\n    [" } else { ",\n    [" });
            let mut first = true;
            for ((ql, qr), g) in gamma.blocks() {
                for r in 0..g.nrows() {
                    for c in 0..g.ncols() {
                        let z = g[(r, c)].to_c64();
                        if !first {
                            out.push_str(", ");
                        }
                        first = false;
                        write!(
                            out,
                            "[{}, {}, {}, ",
                            left[&(ql, r)],
                            qr - ql,
                            right[&(qr, c)]
                        )
                        .unwrap();
                        num(&mut out, z.re);
                        out.push_str(", ");
                        num(&mut out, z.im);
                        out.push(']');
                    }
                }
            }
            out.push(']');
        }
        out.push_str("\n  ]\n}\n");
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let doc: Document = serde_json::from_str(text)?;
        if doc.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Corruption(format!(
                "unsupported checkpoint format {}",
                doc.format_version
            )));
        }
        if doc.n < 2 || doc.bonds.len() != doc.n - 1 || doc.sites.len() != doc.n {
            return Err(Error::Corruption(format!(
                "N = {} with {} bonds and {} sites",
                doc.n,
                doc.bonds.len(),
                doc.sites.len()
            )));
        }
        // position of each global index inside its sector
        let mut layouts: Vec<Vec<(usize, usize)>> = vec![vec![(0, 0)]];
        let mut interior = Vec::with_capacity(doc.n - 1);
        for entries in &doc.bonds {
            let mut sectors: Vec<Sector> = Vec::new();
            let mut layout = Vec::with_capacity(entries.len());
            for &(w, q) in entries {
                if !(w.is_finite() && w >= 0.0) || q > doc.m {
                    return Err(Error::Corruption(format!("bond entry ({w}, {q})")));
                }
                let s = match sectors.iter_mut().find(|s| s.charge == q) {
                    Some(s) => s,
                    None => {
                        sectors.push(Sector {
                            charge: q,
                            weights: Vec::new(),
                        });
                        sectors.last_mut().unwrap()
                    }
                };
                layout.push((q, s.weights.len()));
                s.weights.push(w);
            }
            if layout.is_empty() {
                return Err(Error::Corruption("empty bond".into()));
            }
            layouts.push(layout);
            interior.push(BondSpectrum::from_sectors(sectors));
        }
        layouts.push(vec![(doc.m, 0)]);

        let mut gammas = Vec::with_capacity(doc.n);
        for (k, entries) in doc.sites.iter().enumerate() {
            let (left, right) = (&layouts[k], &layouts[k + 1]);
            let dims =
                |layout: &[(usize, usize)], q: usize| layout.iter().filter(|e| e.0 == q).count();
            let mut site = SiteTensor::<T>::default();
            for &(l, i, r, re, im) in entries {
                let (&(ql, pl), &(qr, pr)) = match (left.get(l), right.get(r)) {
                    (Some(a), Some(b)) => (a, b),
                    _ => {
                        return Err(Error::Corruption(format!(
                            "site {} index ({l}, {r}) out of range",
                            k + 1
                        )))
                    }
                };
                if ql + i != qr {
                    return Err(Error::Corruption(format!(
                        "site {} entry violates the charge rule",
                        k + 1
                    )));
                }
                if !site.blocks.contains_key(&(ql, qr)) {
                    site.insert(ql, qr, DMatrix::zeros(dims(left, ql), dims(right, qr)));
                }
                site.blocks.get_mut(&(ql, qr)).unwrap()[(pl, pr)] =
                    T::from_c64(Complex64::new(re, im));
            }
            gammas.push(site);
        }
        CanonicalState::from_gammas(doc.m, gammas, interior)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_string())?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        Self::from_checkpoint_str(&std::fs::read_to_string(path)?)
    }
}
