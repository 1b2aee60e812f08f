//! Browser bindings for three small demos: end-to-end transfer, ground-state
//! density profiles and quench density frames.

use bosechain::observables::{densities, end_pair_rdm, epsilon_witness, log_negativity};
use bosechain::oracle::single_particle_propagate;
use bosechain::tebd::{self, EvolutionParams};
use bosechain::{CanonicalState, LatticeSpec, Profile};
use wasm_bindgen::prelude::*;

/// Largest chain the page will simulate with the MPS code.
pub const MAX_SITES: usize = 8;
const DEMO_DT: f64 = 0.01;

fn profile(name: &str) -> Result<Profile, JsError> {
    match name {
        "pth" => Ok(Profile::Pth),
        "ch" => Ok(Profile::Ch),
        other => Err(JsError::new(&format!("unknown profile {other:?}"))),
    }
}

fn spec(n: usize, name: &str, lambda: f64, u: f64) -> Result<LatticeSpec, JsError> {
    if n > MAX_SITES {
        return Err(JsError::new(&format!("at most {MAX_SITES} sites")));
    }
    Ok(LatticeSpec::end_open(n, n, profile(name)?, lambda, u)?)
}

/// Probability of finding a single particle on site N after starting on
/// site 1, sampled at `samples + 1` times in `[0, t_max]`. Returns
/// `[t_0, pth_0, ch_0, t_1, ...]`.
#[wasm_bindgen]
pub fn transfer_curve(
    n: usize,
    lambda: f64,
    t_max: f64,
    samples: usize,
) -> Result<Vec<f64>, JsError> {
    let pth = Profile::Pth.couplings(n, lambda)?;
    let ch = Profile::Ch.couplings(n, lambda)?;
    let mut out = Vec::with_capacity(3 * (samples + 1));
    for i in 0..=samples {
        let t = t_max * i as f64 / samples.max(1) as f64;
        out.push(t);
        for hopping in [&pth, &ch] {
            out.push(single_particle_propagate(hopping, 1, t)?[n - 1].norm_sqr());
        }
    }
    Ok(out)
}

/// Ground state at unit filling. Returns the site densities followed by
/// the end-pair log-negativity and the witness `ε`.
#[wasm_bindgen]
pub fn ground_profile(n: usize, profile: &str, lambda: f64, u: f64) -> Result<Vec<f64>, JsError> {
    let spec = spec(n, profile, lambda, u)?;
    let g = tebd::ground_state(&spec, &EvolutionParams::new(DEMO_DT))?;
    let mut out = densities(&g.state);
    out.push(log_negativity(&end_pair_rdm(&g.state))?);
    out.push(epsilon_witness(&g.state).value());
    Ok(out)
}

/// Site densities after a quench from the Mott state, `frames + 1` rows of
/// `n` values from `t = 0` to `t_total`.
#[wasm_bindgen]
pub fn quench_frames(
    n: usize,
    profile: &str,
    lambda: f64,
    u: f64,
    t_total: f64,
    frames: usize,
) -> Result<Vec<f64>, JsError> {
    let spec = spec(n, profile, lambda, u)?;
    let steps = (t_total / DEMO_DT).round() as usize;
    let mut params = EvolutionParams::new(DEMO_DT);
    params.t_total = Some(t_total);
    params.record_every = (steps / frames.max(1)).max(1);
    let mut state = CanonicalState::mott(n)?;
    let mut out = Vec::new();
    tebd::evolve_with(&mut state, &spec, &params, |_, _, s, _| {
        out.extend(densities(s));
        Ok(())
    })?;
    Ok(out)
}
