//! Trotterized real- and imaginary-time evolution.
//!
//! Each bond carries `h_k = -J_k (a†_{k+1} a_k + h.c.)` plus its share of the
//! on-site terms: half of each neighbouring site, except that the two end
//! sites belong entirely to their only bond. A second-order step applies odd
//! bonds for `dt/2`, even bonds for `dt`, then odd bonds for `dt/2` again.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LatticeSpec;
use crate::observables::TrajectoryRecord;
use crate::scalar::Scalar;
use crate::symmps::env::{self, Env};
use crate::symmps::{CanonicalState, TruncationPolicy, Update};

pub const DEFAULT_TOL: f64 = 1e-14;
pub const DEFAULT_MAX_STEPS: usize = 1_000_000;
pub const DEFAULT_DISCARDED_BUDGET: f64 = 1e-6;
/// Largest imaginary step of a staged ground search.
pub const COARSE_DT: f64 = 1e-2;
const STAGE_TOL: f64 = 1e-10;
/// Default largest change of any Schmidt value between convergence checks.
pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-10;

/// `1e-3 / N`.
pub fn default_dt(n_sites: usize) -> f64 {
    1e-3 / n_sites as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `exp(-i h dt)`.
    Real,
    /// `exp(-h dt)`, with the state renormalized after every gate.
    Imaginary,
}

/// Bond operator split by pair total `s`; block `s` is indexed by the left
/// occupation `i_1 = 0..=s`.
#[derive(Clone, Debug, PartialEq)]
pub struct BondHamiltonian {
    pub bond: usize,
    pub blocks: Vec<DMatrix<f64>>,
}

/// Exponential of a bond operator, block by block.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoSiteGate<T: Scalar> {
    pub bond: usize,
    pub mode: Mode,
    pub blocks: Vec<DMatrix<T>>,
}

impl<T: Scalar> TwoSiteGate<T> {
    /// Largest deviation of any block from unitarity.
    pub fn unitarity_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(|g| (g.adjoint() * g - DMatrix::<T>::identity(g.nrows(), g.ncols())).norm())
            .fold(0.0, f64::max)
    }
}

/// `h_k` for bond `k` (1-based) over all pair totals up to `M`.
pub fn bond_hamiltonian(spec: &LatticeSpec, k: usize) -> Result<BondHamiltonian> {
    let n = spec.n_sites();
    if k == 0 || k >= n {
        return Err(Error::IndexOutOfRange {
            index: k,
            max: n - 1,
        });
    }
    let w_l = if k == 1 { 1.0 } else { 0.5 };
    let w_r = if k == n - 1 { 1.0 } else { 0.5 };
    let j = spec.hopping()[k - 1];
    let blocks = (0..=spec.n_bosons())
        .map(|s| {
            let mut h = DMatrix::zeros(s + 1, s + 1);
            for i1 in 0..=s {
                let i2 = s - i1;
                h[(i1, i1)] = w_l * spec.onsite_energy(k - 1, i1) + w_r * spec.onsite_energy(k, i2);
                if i1 > 0 {
                    // a†_2 a_1 |i1, i2⟩ = √(i1 (i2+1)) |i1-1, i2+1⟩
                    let amp = -j * ((i1 * (i2 + 1)) as f64).sqrt();
                    h[(i1 - 1, i1)] = amp;
                    h[(i1, i1 - 1)] = amp;
                }
            }
            h
        })
        .collect();
    Ok(BondHamiltonian { bond: k, blocks })
}

/// `exp(-i h dt)` or `exp(-h dt)` per block via eigendecomposition.
pub fn gate_from_bond<T: Scalar>(
    h: &BondHamiltonian,
    dt: f64,
    mode: Mode,
) -> Result<TwoSiteGate<T>> {
    if mode == Mode::Real && !T::IS_COMPLEX {
        return Err(Error::Unsupported(
            "real-time gates need complex amplitudes".into(),
        ));
    }
    let mut blocks = Vec::with_capacity(h.blocks.len());
    for (s, m) in h.blocks.iter().enumerate() {
        if (m - m.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidOperator(format!(
                "bond {} block {s} is not Hermitian",
                h.bond
            )));
        }
        let eig = SymmetricEigen::new(m.clone());
        let phase = |e: f64| match mode {
            Mode::Real => T::from_c64(Complex64::from_polar(1.0, -e * dt)),
            Mode::Imaginary => T::from_re((-e * dt).exp()),
        };
        let v = eig.eigenvectors.map(T::from_re);
        let mut vd = v.clone();
        for (c, &e) in eig.eigenvalues.iter().enumerate() {
            let p = phase(e);
            vd.column_mut(c).iter_mut().for_each(|x| *x *= p);
        }
        blocks.push(vd * v.transpose());
    }
    Ok(TwoSiteGate {
        bond: h.bond,
        mode,
        blocks,
    })
}

/// Applies a gate to its bond and returns the discarded weight fraction.
pub fn apply_gate<T: Scalar>(
    state: &mut CanonicalState<T>,
    gate: &TwoSiteGate<T>,
    policy: &TruncationPolicy,
) -> Result<f64> {
    check_gate(state, gate)?;
    state.apply_two_site(
        gate.bond,
        &gate.blocks,
        policy,
        Update::Weighted {
            renormalize: gate.mode == Mode::Imaginary,
        },
    )
}

fn check_gate<T: Scalar>(state: &CanonicalState<T>, gate: &TwoSiteGate<T>) -> Result<()> {
    if gate.blocks.len() <= state.n_bosons() {
        return Err(Error::ShapeMismatch(format!(
            "gate covers pair totals up to {}, state holds {}",
            gate.blocks.len() - 1,
            state.n_bosons()
        )));
    }
    Ok(())
}

/// Gates of one second-order step, built once and reused.
#[derive(Clone, Debug)]
pub struct SweepGates<T: Scalar> {
    /// Odd bonds at `dt/2`; at `dt` when the chain has no even bond.
    odd: Vec<TwoSiteGate<T>>,
    even: Vec<TwoSiteGate<T>>,
}

impl<T: Scalar> SweepGates<T> {
    pub fn new(spec: &LatticeSpec, dt: f64, mode: Mode) -> Result<Self> {
        let n = spec.n_sites();
        let half = if n == 2 { dt } else { dt / 2.0 };
        let mut odd = Vec::new();
        let mut even = Vec::new();
        for k in 1..n {
            let h = bond_hamiltonian(spec, k)?;
            if k % 2 == 1 {
                odd.push(gate_from_bond(&h, half, mode)?);
            } else {
                even.push(gate_from_bond(&h, dt, mode)?);
            }
        }
        Ok(Self { odd, even })
    }

    /// One step; returns the discarded weight summed and maximized over gates.
    pub fn sweep(
        &self,
        state: &mut CanonicalState<T>,
        policy: &TruncationPolicy,
    ) -> Result<(f64, f64)> {
        if self.odd[0].mode == Mode::Imaginary {
            return self.sweep_centered(state, policy);
        }
        let mut sum = 0.0;
        let mut max: f64 = 0.0;
        let mut run = |gates: &[TwoSiteGate<T>], state: &mut CanonicalState<T>| -> Result<()> {
            for g in gates {
                let d = apply_gate(state, g, policy)?;
                sum += d;
                max = max.max(d);
            }
            Ok(())
        };
        run(&self.odd, state)?;
        if !self.even.is_empty() {
            run(&self.even, state)?;
            run(&self.odd, state)?;
        }
        Ok((sum, max))
    }
}

impl<T: Scalar> SweepGates<T> {
    /// Non-unitary gates spoil the right-normalization the weighted update
    /// relies on, so imaginary steps carry an orthogonality centre along: odd
    /// bonds left to right, even bonds right to left, and a final pass back to
    /// site 0 that restores every Schmidt spectrum.
    fn sweep_centered(
        &self,
        state: &mut CanonicalState<T>,
        policy: &TruncationPolicy,
    ) -> Result<(f64, f64)> {
        let mut sum = 0.0;
        let mut max: f64 = 0.0;
        let mut center = 0;
        let mut run = |gates: &mut dyn Iterator<Item = &TwoSiteGate<T>>,
                       state: &mut CanonicalState<T>,
                       rightward: bool|
         -> Result<()> {
            for g in gates {
                check_gate(state, g)?;
                let (a, b) = (g.bond - 1, g.bond);
                let target = if center <= a {
                    a
                } else if center >= b {
                    b
                } else {
                    center
                };
                state.move_center(center, target, policy);
                let update = if rightward {
                    Update::CenterRight
                } else {
                    Update::CenterLeft
                };
                let d = state.apply_two_site(g.bond, &g.blocks, policy, update)?;
                center = if rightward { b } else { a };
                sum += d;
                max = max.max(d);
            }
            Ok(())
        };
        run(&mut self.odd.iter(), state, true)?;
        if !self.even.is_empty() {
            run(&mut self.even.iter().rev(), state, false)?;
            run(&mut self.odd.iter(), state, true)?;
        }
        state.move_center(center, 0, policy);
        Ok((sum, max))
    }
}

/// One second-order step; returns the largest discarded weight of any gate.
pub fn sweep_second_order<T: Scalar>(
    state: &mut CanonicalState<T>,
    spec: &LatticeSpec,
    dt: f64,
    mode: Mode,
    policy: &TruncationPolicy,
) -> Result<f64> {
    Ok(SweepGates::new(spec, dt, mode)?.sweep(state, policy)?.1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionParams {
    pub dt: f64,
    /// Duration of a real-time run.
    #[serde(default)]
    pub t_total: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub policy: TruncationPolicy,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Imaginary steps between convergence checks; by default as many as
    /// fit in one unit of imaginary time.
    #[serde(default)]
    pub check_every: Option<usize>,
    /// Largest change of any Schmidt value allowed between checks, on top of
    /// the fidelity test. `None` checks fidelity only.
    #[serde(default = "default_spectral_tol")]
    pub spectral_tol: Option<f64>,
    #[serde(default = "default_budget")]
    pub discarded_budget: f64,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn one() -> usize {
    1
}

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

fn default_spectral_tol() -> Option<f64> {
    Some(DEFAULT_SPECTRAL_TOL)
}

fn default_budget() -> f64 {
    DEFAULT_DISCARDED_BUDGET
}

impl EvolutionParams {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            t_total: None,
            tol: DEFAULT_TOL,
            policy: TruncationPolicy::default(),
            record_every: 1,
            max_steps: DEFAULT_MAX_STEPS,
            check_every: None,
            spectral_tol: Some(DEFAULT_SPECTRAL_TOL),
            discarded_budget: DEFAULT_DISCARDED_BUDGET,
        }
    }

    pub fn for_chain(n_sites: usize) -> Self {
        Self::new(default_dt(n_sites))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.record_every == 0 || self.check_every == Some(0) {
            return Err(Error::InvalidInput("strides must be at least 1".into()));
        }
        if let Some(t) = self.t_total {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "t_total must be nonnegative, got {t}"
                )));
            }
        }
        self.policy.validate()
    }

    fn check_stride(&self) -> usize {
        self.check_every
            .unwrap_or_else(|| (1.0 / self.dt).ceil().max(1.0) as usize)
    }
}

/// Result of an imaginary-time ground-state search.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub state: CanonicalState<f64>,
    pub energy: f64,
    pub steps: usize,
    /// Largest bond dimension after every step.
    pub chi_history: Vec<usize>,
}

/// Product state holding `M` bosons as evenly as possible, extra bosons on
/// the leftmost sites. Unit filling gives the Mott state.
pub fn default_seed(n_sites: usize, n_bosons: usize) -> Result<CanonicalState<f64>> {
    let base = n_bosons / n_sites;
    let extra = n_bosons % n_sites;
    let occ: Vec<usize> = (0..n_sites)
        .map(|k| base + usize::from(k < extra))
        .collect();
    CanonicalState::product_state(&occ)
}

/// Largest change of any Schmidt value between two states of equal shape,
/// missing values counted as zero.
pub fn spectral_drift<T: Scalar>(a: &CanonicalState<T>, b: &CanonicalState<T>) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, y) in a.bonds().iter().zip(b.bonds()) {
        let mut charges: Vec<usize> = x.charges().chain(y.charges()).collect();
        charges.sort_unstable();
        charges.dedup();
        for q in charges {
            let (wx, wy) = (x.weights(q), y.weights(q));
            for i in 0..wx.len().max(wy.len()) {
                let d = wx.get(i).copied().unwrap_or(0.0) - wy.get(i).copied().unwrap_or(0.0);
                worst = worst.max(d.abs());
            }
        }
    }
    worst
}

pub fn ground_state(spec: &LatticeSpec, params: &EvolutionParams) -> Result<GroundState> {
    ground_state_from(spec, params, default_seed(spec.n_sites(), spec.n_bosons())?)
}

/// Imaginary-time evolution from `seed`. Runs at steps larger than
/// `params.dt` (from [`COARSE_DT`] down by factors of ten) come first and stop
/// at `|1 - F| < STAGE_TOL`; the final run at `params.dt` stops once two states
/// `check_every` steps apart have `|1 - F| < tol` and, when set, Schmidt values
/// within `spectral_tol`. Hitting `max_steps` in total returns
/// [`Error::NonConvergence`] carrying the last state.
pub fn ground_state_from(
    spec: &LatticeSpec,
    params: &EvolutionParams,
    seed: CanonicalState<f64>,
) -> Result<GroundState> {
    params.validate()?;
    if seed.n_sites() != spec.n_sites() || seed.n_bosons() != spec.n_bosons() {
        return Err(Error::ShapeMismatch("seed does not match the chain".into()));
    }
    let mut run = Relaxation {
        state: seed,
        steps: 0,
        chi_history: Vec::new(),
        max_steps: params.max_steps,
    };
    run.state.canonicalize(&params.policy);
    let mut dt = COARSE_DT;
    while dt > params.dt * (1.0 + 1e-9) {
        let stride = (1.0 / dt).ceil() as usize;
        if !run.relax(
            spec,
            dt,
            &params.policy,
            stride,
            params.tol.max(STAGE_TOL),
            None,
        )? {
            return Err(run.fail(spec));
        }
        dt /= 10.0;
    }
    if run.relax(
        spec,
        params.dt,
        &params.policy,
        params.check_stride(),
        params.tol,
        params.spectral_tol,
    )? {
        let energy = energy(&run.state, spec);
        Ok(GroundState {
            state: run.state,
            energy,
            steps: run.steps,
            chi_history: run.chi_history,
        })
    } else {
        Err(run.fail(spec))
    }
}

struct Relaxation {
    state: CanonicalState<f64>,
    steps: usize,
    chi_history: Vec<usize>,
    max_steps: usize,
}

impl Relaxation {
    fn relax(
        &mut self,
        spec: &LatticeSpec,
        dt: f64,
        policy: &TruncationPolicy,
        stride: usize,
        tol: f64,
        spectral_tol: Option<f64>,
    ) -> Result<bool> {
        let gates = SweepGates::<f64>::new(spec, dt, Mode::Imaginary)?;
        let mut prev = self.state.clone();
        let mut taken = 0;
        while self.steps < self.max_steps {
            gates.sweep(&mut self.state, policy)?;
            self.steps += 1;
            taken += 1;
            self.chi_history.push(self.state.max_chi());
            if taken % stride == 0 {
                let f = prev.fidelity(&self.state)?;
                let settled =
                    spectral_tol.is_none_or(|tol| spectral_drift(&prev, &self.state) < tol);
                if (1.0 - f).abs() < tol && settled {
                    return Ok(true);
                }
                prev.clone_from(&self.state);
            }
        }
        Ok(false)
    }

    fn fail(self, spec: &LatticeSpec) -> Error {
        let energy = energy(&self.state, spec);
        Error::NonConvergence(Box::new(GroundState {
            state: self.state,
            energy,
            steps: self.steps,
            chi_history: self.chi_history,
        }))
    }
}

/// `⟨H⟩ / ⟨ψ|ψ⟩`, with every on-site term counted once.
pub fn energy<T: Scalar>(state: &CanonicalState<T>, spec: &LatticeSpec) -> f64 {
    let envs = state.environments();
    let sites = state.sites_raw();
    let mut e = 0.0;
    for (k, s) in sites.iter().enumerate() {
        let op = |i: usize| Some((i, spec.onsite_energy(k, i)));
        let l = env::transfer_left(&envs.left[k], s, s, op);
        e += env::close(&l, &envs.right[k + 1]).real();
    }
    for (k, &j) in spec.hopping().iter().enumerate() {
        if j == 0.0 {
            continue;
        }
        // ⟨a†_{k+1} a_k⟩
        let l: Env<T> = env::transfer_left(&envs.left[k], &sites[k], &sites[k], env::annihilate);
        let l = env::transfer_left(&l, &sites[k + 1], &sites[k + 1], env::create);
        e -= 2.0 * j * env::close(&l, &envs.right[k + 2]).real();
    }
    e / envs.norm_sq()
}

/// Real-time evolution for `t_total`, calling `observer` with the step
/// index, time and state at step 0 and every `record_every` steps.
/// Returns the cumulative discarded weight.
pub fn evolve_with<F>(
    state: &mut CanonicalState<Complex64>,
    spec: &LatticeSpec,
    params: &EvolutionParams,
    mut observer: F,
) -> Result<f64>
where
    F: FnMut(usize, f64, &CanonicalState<Complex64>, f64) -> Result<()>,
{
    params.validate()?;
    let t_total = params
        .t_total
        .ok_or_else(|| Error::InvalidInput("real-time evolution needs t_total".into()))?;
    let n_steps = (t_total / params.dt).round() as usize;
    let gates = SweepGates::<Complex64>::new(spec, params.dt, Mode::Real)?;
    let mut discarded = 0.0;
    observer(0, 0.0, state, discarded)?;
    for step in 1..=n_steps {
        discarded += gates.sweep(state, &params.policy)?.0;
        if step % params.record_every == 0 {
            observer(step, step as f64 * params.dt, state, discarded)?;
        }
    }
    Ok(discarded)
}

/// Real-time evolution recording the full observable bundle.
pub fn evolve(
    state: &mut CanonicalState<Complex64>,
    spec: &LatticeSpec,
    params: &EvolutionParams,
) -> Result<Vec<TrajectoryRecord>> {
    let mut records = Vec::new();
    evolve_with(state, spec, params, |_, t, s, d| {
        records.push(TrajectoryRecord::measure(s, t, d, params.discarded_budget)?);
        Ok(())
    })?;
    Ok(records)
}
