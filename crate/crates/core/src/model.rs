//! Bose-Hubbard chain parameterization.
//!
//! A chain of `N` sites holding `M` bosons is described by per-site on-site
//! repulsions `U_k`, per-bond hopping amplitudes `J_k` and optional local
//! potentials `V_k(n) = lin·n + quad·n²`:
//!
//! ```text
//! H = Σ_k [U_k/2 n_k(n_k-1) + V_k(n_k)] - Σ_k J_k (a†_{k+1} a_k + a†_k a_{k+1})
//! ```
//!
//! Site and bond indices in this module's public API are 1-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coupling profile scale used throughout unless overridden.
pub const DEFAULT_LAMBDA: f64 = 2.0;

/// Mean-field boundary of the Mott lobe at unit filling, in units of `z·J`.
pub const MOTT_THRESHOLD: f64 = 5.8;

/// A single-site potential `lin·n + quad·n²`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalPotential {
    pub lin: f64,
    pub quad: f64,
}

impl LocalPotential {
    pub fn new(lin: f64, quad: f64) -> Self {
        Self { lin, quad }
    }

    #[inline]
    pub fn eval(&self, n: usize) -> f64 {
        let x = n as f64;
        self.lin * x + self.quad * x * x
    }

    pub fn is_zero(&self) -> bool {
        self.lin == 0.0 && self.quad == 0.0
    }
}

/// Full parameterization of an open Bose-Hubbard chain in a fixed particle
/// sector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    n_sites: usize,
    n_bosons: usize,
    repulsion: Vec<f64>,
    hopping: Vec<f64>,
    potential: Vec<LocalPotential>,
}

impl LatticeSpec {
    pub fn new(
        n_sites: usize,
        n_bosons: usize,
        repulsion: Vec<f64>,
        hopping: Vec<f64>,
    ) -> Result<Self> {
        let potential = vec![LocalPotential::default(); n_sites];
        Self::with_potential(n_sites, n_bosons, repulsion, hopping, potential)
    }

    pub fn with_potential(
        n_sites: usize,
        n_bosons: usize,
        repulsion: Vec<f64>,
        hopping: Vec<f64>,
        potential: Vec<LocalPotential>,
    ) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::InvalidSize(format!(
                "need at least 2 sites, got {n_sites}"
            )));
        }
        if n_bosons < 1 {
            return Err(Error::InvalidInput("need at least one boson".into()));
        }
        if repulsion.len() != n_sites {
            return Err(Error::InvalidInput(format!(
                "expected {n_sites} repulsion values, got {}",
                repulsion.len()
            )));
        }
        if hopping.len() != n_sites - 1 {
            return Err(Error::InvalidInput(format!(
                "expected {} hopping values, got {}",
                n_sites - 1,
                hopping.len()
            )));
        }
        if potential.len() != n_sites {
            return Err(Error::InvalidInput(format!(
                "expected {n_sites} local potentials, got {}",
                potential.len()
            )));
        }
        if repulsion.iter().any(|u| !u.is_finite()) {
            return Err(Error::InvalidInput("repulsion must be finite".into()));
        }
        if hopping.iter().any(|j| !j.is_finite() || *j < 0.0) {
            return Err(Error::InvalidInput(
                "hopping must be finite and nonnegative".into(),
            ));
        }
        if potential
            .iter()
            .any(|v| !v.lin.is_finite() || !v.quad.is_finite())
        {
            return Err(Error::InvalidInput(
                "local potentials must be finite".into(),
            ));
        }
        Ok(Self {
            n_sites,
            n_bosons,
            repulsion,
            hopping,
            potential,
        })
    }

    /// Chain with free ends (`U_1 = U_N = 0`), uniform interior repulsion and
    /// the given hopping profile.
    pub fn end_open(
        n_sites: usize,
        n_bosons: usize,
        profile: Profile,
        lambda: f64,
        u_mid: f64,
    ) -> Result<Self> {
        let hopping = profile.couplings(n_sites, lambda)?;
        let repulsion = end_open_repulsion(n_sites, u_mid)?;
        Self::new(n_sites, n_bosons, repulsion, hopping)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_bosons(&self) -> usize {
        self.n_bosons
    }

    pub fn repulsion(&self) -> &[f64] {
        &self.repulsion
    }

    pub fn hopping(&self) -> &[f64] {
        &self.hopping
    }

    pub fn potential(&self) -> &[LocalPotential] {
        &self.potential
    }

    /// Same chain with the local potentials replaced.
    pub fn with_potentials(&self, potential: Vec<LocalPotential>) -> Result<Self> {
        Self::with_potential(
            self.n_sites,
            self.n_bosons,
            self.repulsion.clone(),
            self.hopping.clone(),
            potential,
        )
    }

    /// On-site energy `U_k/2 n(n-1) + V_k(n)` of `n` bosons on 0-based site `k`.
    #[inline]
    pub(crate) fn onsite_energy(&self, k: usize, n: usize) -> f64 {
        let x = n as f64;
        0.5 * self.repulsion[k] * x * (x - 1.0) + self.potential[k].eval(n)
    }

    /// True when the parameters are mirror symmetric about the chain centre.
    pub fn is_mirror_symmetric(&self) -> bool {
        let n = self.n_sites;
        (0..n).all(|k| {
            self.repulsion[k] == self.repulsion[n - 1 - k]
                && self.potential[k] == self.potential[n - 1 - k]
        }) && (0..n - 1).all(|k| self.hopping[k] == self.hopping[n - 2 - k])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Constant hopping `J_k = 1`.
    Ch,
    /// Perfect-transmission hopping `J_k = (λ/2)√(k(N-k))`.
    Pth,
}

impl Profile {
    pub fn couplings(self, n_sites: usize, lambda: f64) -> Result<Vec<f64>> {
        match self {
            Profile::Ch => uniform_couplings(n_sites, 1.0),
            Profile::Pth => pth_couplings(n_sites, lambda),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Ch => "ch",
            Profile::Pth => "pth",
        }
    }
}

fn check_size(n_sites: usize) -> Result<()> {
    if n_sites < 2 {
        Err(Error::InvalidSize(format!(
            "need at least 2 sites, got {n_sites}"
        )))
    } else {
        Ok(())
    }
}

pub fn uniform_couplings(n_sites: usize, j0: f64) -> Result<Vec<f64>> {
    check_size(n_sites)?;
    if !(j0 >= 0.0) || !j0.is_finite() {
        return Err(Error::InvalidInput(format!(
            "hopping must be nonnegative, got {j0}"
        )));
    }
    Ok(vec![j0; n_sites - 1])
}

/// Spin-`j` ladder couplings, `j = (N-1)/2`. Exactly mirror symmetric.
pub fn pth_couplings(n_sites: usize, lambda: f64) -> Result<Vec<f64>> {
    check_size(n_sites)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    // k(N-k) is symmetric in k <-> N-k, so the products are bit-identical.
    Ok((1..n_sites)
        .map(|k| 0.5 * lambda * ((k * (n_sites - k)) as f64).sqrt())
        .collect())
}

/// Interior repulsion `u_mid` with repulsionless end sites.
pub fn end_open_repulsion(n_sites: usize, u_mid: f64) -> Result<Vec<f64>> {
    check_size(n_sites)?;
    if !(u_mid >= 0.0) || !u_mid.is_finite() {
        return Err(Error::InvalidInput(format!(
            "repulsion must be nonnegative, got {u_mid}"
        )));
    }
    let mut u = vec![u_mid; n_sites];
    u[0] = 0.0;
    u[n_sites - 1] = 0.0;
    Ok(u)
}

/// Distance from 1-based site `j` to the closest chain end.
pub fn distance_to_end(j: usize, n_sites: usize) -> Result<usize> {
    crate::error::check_site(j, n_sites)?;
    Ok((j - 1).min(n_sites - j))
}

/// Perturbing potential that pumps bosons between the ends and the bulk.
///
/// Interior sites get a linear potential `Δ·k`, `k` the distance to the closest
/// end. The two ends get `c₂n² + c₁n` with `c₁ = ((N-1)/2 + 2n₀)Δ` and
/// `c₂ = -Δ`. The returned values already include the factor `Δ`; callers add
/// them to the Hamiltonian as-is.
pub fn perturbation_profile(n_sites: usize, delta: f64, n0: f64) -> Result<Vec<LocalPotential>> {
    if n_sites < 4 || n_sites % 2 != 0 {
        return Err(Error::Unsupported(format!(
            "perturbation profile needs an even chain of at least 4 sites, got {n_sites}"
        )));
    }
    if !delta.is_finite() {
        return Err(Error::InvalidInput("delta must be finite".into()));
    }
    if !(n0 >= 0.0) || !n0.is_finite() {
        return Err(Error::InvalidInput(format!(
            "n0 must be nonnegative, got {n0}"
        )));
    }
    let c1 = (0.5 * (n_sites as f64 - 1.0) + 2.0 * n0) * delta;
    let c2 = -delta;
    let mut out = Vec::with_capacity(n_sites);
    for j in 1..=n_sites {
        if j == 1 || j == n_sites {
            out.push(LocalPotential::new(c1, c2));
        } else {
            let k = distance_to_end(j, n_sites)?;
            out.push(LocalPotential::new(delta * k as f64, 0.0));
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Mott,
    Superfluid,
}

/// Mean-field phase label: Mott when `U/(zJ)` exceeds 5.8.
pub fn regime_hint(u: f64, j: f64, z: usize) -> Result<Regime> {
    if z < 1 {
        return Err(Error::InvalidInput(
            "neighbour count must be at least 1".into(),
        ));
    }
    if j < 0.0 || !j.is_finite() || !u.is_finite() {
        return Err(Error::InvalidInput(format!("bad couplings U={u}, J={j}")));
    }
    if j == 0.0 {
        return Ok(Regime::Mott);
    }
    Ok(if u / (z as f64 * j) > MOTT_THRESHOLD {
        Regime::Mott
    } else {
        Regime::Superfluid
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn uniform_examples() {
        assert_eq!(uniform_couplings(4, 1.0).unwrap(), vec![1.0, 1.0, 1.0]);
        assert_eq!(uniform_couplings(2, 1.0).unwrap(), vec![1.0]);
        assert_eq!(uniform_couplings(3, 0.0).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(
            uniform_couplings(1, 1.0),
            Err(Error::InvalidSize(_))
        ));
    }

    #[test]
    fn pth_examples() {
        let s3 = 3f64.sqrt();
        assert!(close(
            &pth_couplings(4, 2.0).unwrap(),
            &[s3, 2.0, s3],
            1e-15
        ));
        assert!(close(&pth_couplings(2, 2.0).unwrap(), &[1.0], 1e-15));
        let s6 = 6f64.sqrt();
        assert!(close(
            &pth_couplings(5, 2.0).unwrap(),
            &[2.0, s6, s6, 2.0],
            1e-15
        ));
        assert!(matches!(pth_couplings(1, 2.0), Err(Error::InvalidSize(_))));
    }

    #[test]
    fn end_open_examples() {
        assert_eq!(
            end_open_repulsion(4, 5.0).unwrap(),
            vec![0.0, 5.0, 5.0, 0.0]
        );
        assert_eq!(end_open_repulsion(2, 7.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            end_open_repulsion(6, 100.0).unwrap(),
            vec![0.0, 100.0, 100.0, 100.0, 100.0, 0.0]
        );
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance_to_end(1, 6).unwrap(), 0);
        assert_eq!(distance_to_end(3, 6).unwrap(), 2);
        assert_eq!(distance_to_end(5, 6).unwrap(), 1);
        assert!(distance_to_end(0, 6).is_err());
        assert!(distance_to_end(7, 6).is_err());
    }

    #[test]
    fn perturbation_examples() {
        let p = perturbation_profile(6, 0.01, 2.0).unwrap();
        for end in [p[0], p[5]] {
            assert!((end.lin - 0.065).abs() < 1e-15);
            assert!((end.quad + 0.01).abs() < 1e-15);
        }
        let mids: Vec<f64> = p[1..5].iter().map(|v| v.lin).collect();
        assert!(close(&mids, &[0.01, 0.02, 0.02, 0.01], 1e-15));
        assert!(p[1..5].iter().all(|v| v.quad == 0.0));

        assert!(perturbation_profile(4, 0.0, 1.0)
            .unwrap()
            .iter()
            .all(|v| v.is_zero()));

        let p = perturbation_profile(8, 0.05, 3.0).unwrap();
        assert!((p[0].lin - 0.475).abs() < 1e-14);
        assert!((p[0].quad + 0.05).abs() < 1e-15);

        assert!(matches!(
            perturbation_profile(5, 0.1, 1.0),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            perturbation_profile(2, 0.1, 1.0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn regime_examples() {
        assert_eq!(regime_hint(20.0, 1.0, 2).unwrap(), Regime::Mott);
        assert_eq!(regime_hint(0.4, 1.0, 2).unwrap(), Regime::Superfluid);
        assert_eq!(regime_hint(11.6, 1.0, 2).unwrap(), Regime::Superfluid);
        assert_eq!(regime_hint(1.0, 0.0, 2).unwrap(), Regime::Mott);
    }

    #[test]
    fn spec_validation() {
        assert!(LatticeSpec::new(3, 3, vec![0.0; 3], vec![1.0; 2]).is_ok());
        assert!(LatticeSpec::new(3, 3, vec![0.0; 2], vec![1.0; 2]).is_err());
        assert!(LatticeSpec::new(3, 3, vec![0.0; 3], vec![1.0; 3]).is_err());
        assert!(LatticeSpec::new(3, 3, vec![0.0; 3], vec![-1.0, 1.0]).is_err());
        assert!(LatticeSpec::new(3, 3, vec![f64::NAN, 0.0, 0.0], vec![1.0; 2]).is_err());
        assert!(LatticeSpec::new(1, 3, vec![0.0], vec![]).is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn pth_symmetric_and_peaked(n in 2usize..80, lambda in 0.1f64..10.0) {
                let j = pth_couplings(n, lambda).unwrap();
                for k in 0..j.len() {
                    prop_assert_eq!(j[k], j[j.len() - 1 - k]);
                }
                let half = (j.len() + 1) / 2;
                for k in 1..half {
                    prop_assert!(j[k] > j[k - 1]);
                }
            }

            #[test]
            fn perturbation_mirror(half in 2usize..20, delta in -1.0f64..1.0, n0 in 0.0f64..10.0) {
                let n = 2 * half;
                let p = perturbation_profile(n, delta, n0).unwrap();
                for k in 0..n {
                    prop_assert_eq!(p[k], p[n - 1 - k]);
                }
            }

            #[test]
            fn end_open_ends_vanish(n in 2usize..50, u in 0.0f64..1e3) {
                let r = end_open_repulsion(n, u).unwrap();
                prop_assert_eq!(r[0], 0.0);
                prop_assert_eq!(r[n - 1], 0.0);
            }
        }
    }
}
