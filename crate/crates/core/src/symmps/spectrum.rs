use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative cut on Schmidt values, measured against the largest one.
pub const DEFAULT_REL_THRESHOLD: f64 = 1e-14;

/// Schmidt values sharing one particle-number tag.
#[derive(Clone, Debug, PartialEq)]
pub struct Sector {
    /// Number of bosons to the left of the bond.
    pub charge: usize,
    /// Sorted descending.
    pub weights: Vec<f64>,
}

/// Schmidt spectrum of one bond, grouped by charge.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct BondSpectrum {
    sectors: Vec<Sector>,
}

impl BondSpectrum {
    /// One Schmidt value of weight 1 with the given charge.
    pub fn single(charge: usize) -> Self {
        Self {
            sectors: vec![Sector {
                charge,
                weights: vec![1.0],
            }],
        }
    }

    /// Builds a spectrum from sectors; empty sectors are dropped and weights
    /// within each sector are sorted descending.
    pub fn from_sectors(mut sectors: Vec<Sector>) -> Self {
        sectors.retain(|s| !s.weights.is_empty());
        for s in &mut sectors {
            s.weights.sort_by(|a, b| b.total_cmp(a));
        }
        sectors.sort_by_key(|s| s.charge);
        Self { sectors }
    }

    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub fn charges(&self) -> impl Iterator<Item = usize> + '_ {
        self.sectors.iter().map(|s| s.charge)
    }

    pub fn sector(&self, charge: usize) -> Option<&Sector> {
        self.sectors
            .binary_search_by_key(&charge, |s| s.charge)
            .ok()
            .map(|i| &self.sectors[i])
    }

    pub fn weights(&self, charge: usize) -> &[f64] {
        self.sector(charge).map_or(&[], |s| &s.weights)
    }

    pub fn dim(&self, charge: usize) -> usize {
        self.weights(charge).len()
    }

    /// Number of retained Schmidt values.
    pub fn chi(&self) -> usize {
        self.sectors.iter().map(|s| s.weights.len()).sum()
    }

    pub fn max_weight(&self) -> f64 {
        self.sectors
            .iter()
            .flat_map(|s| s.weights.first().copied())
            .fold(0.0, f64::max)
    }

    pub fn norm_sq(&self) -> f64 {
        self.sectors
            .iter()
            .flat_map(|s| s.weights.iter())
            .map(|w| w * w)
            .sum()
    }

    /// `(weight, charge)` pairs ordered by descending weight, ties by lower
    /// charge. This order defines the global Schmidt index of the bond.
    pub fn entries(&self) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = self
            .sectors
            .iter()
            .flat_map(|s| s.weights.iter().map(move |&w| (w, s.charge)))
            .collect();
        // stable: equal weights in one sector keep their sector order
        out.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        out
    }

    /// Maps `(charge, position within sector)` to the global index of
    /// [`entries`](Self::entries).
    pub(crate) fn global_indices(&self) -> std::collections::BTreeMap<(usize, usize), usize> {
        let mut tagged: Vec<(f64, usize, usize)> = self
            .sectors
            .iter()
            .flat_map(|s| {
                s.weights
                    .iter()
                    .enumerate()
                    .map(move |(i, &w)| (w, s.charge, i))
            })
            .collect();
        tagged.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        tagged
            .into_iter()
            .enumerate()
            .map(|(g, (_, q, i))| ((q, i), g))
            .collect()
    }

    /// Von Neumann entropy of the bipartition in bits.
    pub fn entropy(&self) -> f64 {
        let total = self.norm_sq();
        let s: f64 = self
            .sectors
            .iter()
            .flat_map(|s| s.weights.iter())
            .map(|w| w * w / total)
            .filter(|p| *p > 0.0)
            .map(|p| -p * p.log2())
            .sum();
        s.max(0.0)
    }

    pub(crate) fn normalize(&mut self) {
        let n = self.norm_sq().sqrt();
        if n > 0.0 {
            for s in &mut self.sectors {
                for w in &mut s.weights {
                    *w /= n;
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationPolicy {
    #[serde(default = "default_rel")]
    pub rel_threshold: f64,
    #[serde(default)]
    pub chi_max: Option<usize>,
}

fn default_rel() -> f64 {
    DEFAULT_REL_THRESHOLD
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            rel_threshold: DEFAULT_REL_THRESHOLD,
            chi_max: None,
        }
    }
}

impl TruncationPolicy {
    pub fn with_chi_max(chi_max: usize) -> Self {
        Self {
            chi_max: Some(chi_max),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_threshold > 0.0 && self.rel_threshold < 1.0) {
            return Err(Error::InvalidInput(format!(
                "rel_threshold must lie in (0, 1), got {}",
                self.rel_threshold
            )));
        }
        if self.chi_max == Some(0) {
            return Err(Error::InvalidInput("chi_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of selecting which singular values survive a truncation.
#[derive(Debug)]
pub(crate) struct Selection {
    /// Retained prefix length per input sector.
    pub kept: Vec<usize>,
    pub kept_sq: f64,
    pub dropped_sq: f64,
    pub total_sq: f64,
}

impl Selection {
    /// Discarded fraction of the squared weight.
    pub fn discarded(&self) -> f64 {
        if self.total_sq > 0.0 {
            self.dropped_sq / self.total_sq
        } else {
            0.0
        }
    }
}

/// Chooses the surviving values of per-charge descending spectra.
///
/// Values at or below `rel_threshold × max` go first. A `chi_max` cap then
/// keeps the largest values, ties resolved towards lower charge and then
/// earlier position. Since each input is sorted, survivors always form a
/// prefix of every sector.
pub(crate) fn select(spectra: &[(usize, &[f64])], policy: &TruncationPolicy) -> Selection {
    let max = spectra
        .iter()
        .flat_map(|(_, w)| w.first().copied())
        .fold(0.0, f64::max);
    let cut = policy.rel_threshold * max;
    let mut kept: Vec<usize> = spectra
        .iter()
        .map(|(_, w)| w.iter().take_while(|&&x| x > cut).count())
        .collect();
    if let Some(cap) = policy.chi_max {
        let total: usize = kept.iter().sum();
        if total > cap {
            let mut cand: Vec<(f64, usize, usize, usize)> = Vec::with_capacity(total);
            for (s, (q, w)) in spectra.iter().enumerate() {
                for (i, &x) in w.iter().take(kept[s]).enumerate() {
                    cand.push((x, *q, i, s));
                }
            }
            cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            kept.iter_mut().for_each(|k| *k = 0);
            for &(_, _, _, s) in cand.iter().take(cap) {
                kept[s] += 1;
            }
        }
    }
    let total_sq: f64 = spectra
        .iter()
        .flat_map(|(_, w)| w.iter())
        .map(|x| x * x)
        .sum();
    let kept_sq: f64 = spectra
        .iter()
        .zip(&kept)
        .flat_map(|((_, w), &k)| w.iter().take(k))
        .map(|x| x * x)
        .sum();
    let dropped_sq: f64 = spectra
        .iter()
        .zip(&kept)
        .flat_map(|((_, w), &k)| w.iter().skip(k))
        .map(|x| x * x)
        .sum();
    Selection {
        kept,
        kept_sq,
        dropped_sq,
        total_sq,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_sorted_with_charge_ties() {
        let b = BondSpectrum::from_sectors(vec![
            Sector {
                charge: 2,
                weights: vec![0.5, 0.1],
            },
            Sector {
                charge: 1,
                weights: vec![0.5],
            },
            Sector {
                charge: 3,
                weights: vec![],
            },
        ]);
        assert_eq!(b.entries(), vec![(0.5, 1), (0.5, 2), (0.1, 2)]);
        assert_eq!(b.chi(), 3);
        assert_eq!(b.dim(3), 0);
        let g = b.global_indices();
        assert_eq!(g[&(1, 0)], 0);
        assert_eq!(g[&(2, 0)], 1);
        assert_eq!(g[&(2, 1)], 2);
    }

    #[test]
    fn entropy_values() {
        let h = 0.5f64.sqrt();
        let b = BondSpectrum::from_sectors(vec![
            Sector {
                charge: 0,
                weights: vec![h],
            },
            Sector {
                charge: 1,
                weights: vec![h],
            },
        ]);
        assert!((b.entropy() - 1.0).abs() < 1e-15);
        assert_eq!(BondSpectrum::single(3).entropy(), 0.0);
        let b = BondSpectrum::from_sectors(vec![Sector {
            charge: 0,
            weights: vec![0.9f64.sqrt(), 0.1f64.sqrt()],
        }]);
        // -0.9 log2 0.9 - 0.1 log2 0.1
        assert!((b.entropy() - 0.468_995_593_589_281_2).abs() < 1e-14);
    }

    #[test]
    fn select_threshold_and_cap() {
        let w = [0.8, 0.6, 0.8e-16];
        let s = select(&[(0, &w)], &TruncationPolicy::default());
        assert_eq!(s.kept, vec![2]);

        let w: Vec<f64> = (0..60).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let s = select(
            &[(0, &w[..30]), (1, &w[30..])],
            &TruncationPolicy::with_chi_max(50),
        );
        assert_eq!(s.kept.iter().sum::<usize>(), 50);
        assert_eq!(s.kept, vec![30, 20]);

        let tie = [0.5, 0.5];
        let s = select(
            &[(3, &tie[..1]), (1, &tie[1..])],
            &TruncationPolicy::with_chi_max(1),
        );
        assert_eq!(s.kept, vec![0, 1]);
    }

    #[test]
    fn policy_validation() {
        assert!(TruncationPolicy::default().validate().is_ok());
        assert!(TruncationPolicy {
            rel_threshold: 0.0,
            chi_max: None
        }
        .validate()
        .is_err());
        assert!(TruncationPolicy {
            rel_threshold: 1e-14,
            chi_max: Some(0)
        }
        .validate()
        .is_err());
    }
}
