//! Acceptance criteria 1 to 9. Each criterion writes one `PASS`/`FAIL` line to
//! stderr; the test fails if any criterion does.

use std::f64::consts::PI;
use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use bosechain::experiments::{
    self, dense_densities, perturb_ground_state, run_perturb_with_ground, transfer_report,
    Experiment, RunConfig,
};
use bosechain::observables::{
    densities, end_pair_rdm, epsilon_witness, log_negativity, PairDensityMatrix, PT_TOLERANCE,
};
use bosechain::oracle::{self, ExactPropagator};
use bosechain::scalar::Scalar;
use bosechain::tebd::{self, default_dt, evolve_with};
use bosechain::{CanonicalState, EvolutionParams, LatticeSpec, Profile, TruncationPolicy};
use num_complex::Complex64;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn announce(n: usize, title: &str, v: &Verdict) {
    let tag = if v.passed { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "criterion {n} [{title}]: {tag} ({})",
        v.detail
    );
}

/// Witness bookkeeping over every state the other criteria produce.
#[derive(Default)]
struct WitnessLog {
    states: usize,
    worst_disagreement: f64,
    pt_mismatches: usize,
}

impl WitnessLog {
    fn check<T: Scalar>(&mut self, state: &CanonicalState<T>) {
        let w = epsilon_witness(state);
        self.worst_disagreement = self.worst_disagreement.max(w.disagreement());
        let rho = end_pair_rdm(state);
        if !pt_consistent(&rho) {
            self.pt_mismatches += 1;
        }
        self.states += 1;
    }
}

fn pt_consistent(rho: &PairDensityMatrix) -> bool {
    let positive = log_negativity(rho).unwrap() > 0.0;
    let negative_eig = rho
        .partial_transpose_eigenvalues()
        .iter()
        .any(|&x| x < -PT_TOLERANCE);
    positive == negative_eig
}

fn spec(n: usize, profile: Profile, u: f64) -> LatticeSpec {
    LatticeSpec::end_open(n, n, profile, 2.0, u).unwrap()
}

fn criterion_1(log: &mut WitnessLog) -> Verdict {
    let t = Instant::now();
    let g4 =
        tebd::ground_state(&spec(4, Profile::Pth, 0.0), &EvolutionParams::for_chain(4)).unwrap();
    let elapsed = t.elapsed();
    let g6 =
        tebd::ground_state(&spec(6, Profile::Pth, 0.0), &EvolutionParams::for_chain(6)).unwrap();
    log.check(&g4.state);
    log.check(&g6.state);
    let (e4, e6) = ((g4.energy + 12.0).abs(), (g6.energy + 30.0).abs());
    verdict(
        e4 < 1e-8 && e6 < 1e-7 && elapsed < Duration::from_secs(60),
        format!(
            "|E4+12| = {e4:.2e}, |E6+30| = {e6:.2e}, N=4 took {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

const ORACLE_DT: f64 = 1e-4;

fn criterion_2(log: &mut WitnessLog) -> Verdict {
    let (mut de, mut df, mut drho, mut deps): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for profile in [Profile::Pth, Profile::Ch] {
        for u in [0.0, 1.0, 5.0, 20.0] {
            let s = spec(4, profile, u);
            let g = tebd::ground_state(&s, &EvolutionParams::new(ORACLE_DT)).unwrap();
            log.check(&g.state);
            let exact = oracle::exact_ground(&s).unwrap();
            let psi = oracle::complexify(&exact.amplitudes);
            let dense = g.state.to_dense_in(&exact.basis);
            let fidelity = dense.dotc(&psi).norm_sqr() / dense.norm_squared();
            let rho_exact = oracle::pair_rdm_dense(&psi, &exact.basis).unwrap();
            de = de.max((g.energy - exact.energy).abs());
            df = df.max(1.0 - fidelity);
            drho = drho.max(end_pair_rdm(&g.state).max_abs_diff(&rho_exact));
            deps = deps
                .max((epsilon_witness(&g.state).from_rdm - rho_exact.adag_first_a_last()).norm());
        }
    }
    verdict(
        de < 1e-8 && df <= 1e-8 && drho < 1e-8 && deps < 1e-8,
        format!("energy {de:.2e}, 1-F {df:.2e}, pair state {drho:.2e}, eps {deps:.2e}"),
    )
}

fn criterion_3() -> Verdict {
    let mut worst_transfer: f64 = 1.0;
    let mut worst_revival: f64 = 1.0;
    for n in 2..=64 {
        let r = transfer_report(n, Profile::Pth, 2.0).unwrap();
        worst_transfer = worst_transfer.min(r.fidelity_at_mirror);
        worst_revival = worst_revival.min(r.revival_at_twice);
    }
    verdict(
        worst_transfer >= 1.0 - 1e-8 && worst_revival >= 1.0 - 1e-8,
        format!("min transfer {worst_transfer:.12}, min revival {worst_revival:.12} over N=2..64"),
    )
}

fn criterion_4(log: &mut WitnessLog) -> Verdict {
    let s = spec(4, Profile::Pth, 5.0);
    let psi0 = CanonicalState::<Complex64>::mott(4)
        .unwrap()
        .to_dense()
        .unwrap();
    let basis = oracle::fock_basis(4, 4).unwrap();
    let exact = dense_densities(&oracle::exact_evolve(&s, &psi0, 0.5).unwrap(), &basis);
    let mut err = |dt: f64| {
        let mut p = EvolutionParams::new(dt);
        p.t_total = Some(0.5);
        p.record_every = usize::MAX;
        let mut state = CanonicalState::<Complex64>::mott(4).unwrap();
        tebd::evolve(&mut state, &s, &p).unwrap();
        log.check(&state);
        densities(&state)
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let dt = 0.05;
    let (e1, e2) = (err(dt), err(dt / 2.0));
    let ratio = e1 / e2;
    verdict(
        (3.5..=4.5).contains(&ratio),
        format!("errors {e1:.3e} at dt={dt} and {e2:.3e} at dt/2, ratio {ratio:.4}"),
    )
}

fn criterion_5(log: &mut WitnessLog) -> Verdict {
    let mut config = RunConfig::new(Experiment::GroundScan, 8, Profile::Pth);
    config.dt = Some(0.01);
    let points = experiments::scan(&config).unwrap();
    for (_, g) in &points {
        log.check(&g.state);
    }
    let rows: Vec<_> = points.iter().map(|(r, _)| r).collect();
    let converged = rows.iter().all(|r| r.converged);
    let monotone = rows.windows(2).all(|w| w[1].zeta >= w[0].zeta - 1e-6);
    let bound = 0.5 + 1.0 / 8.0;
    let zeta_max = rows.iter().map(|r| r.zeta).fold(f64::MIN, f64::max);
    let (first, last) = (rows[0], rows[rows.len() - 1]);
    // approaching the bound: the last point sits closer to it than to the first value
    let approaches = bound - last.zeta < 0.5 * (bound - first.zeta);
    verdict(
        converged && monotone && zeta_max <= bound + 1e-8 && approaches && last.logneg > first.logneg,
        format!(
            "zeta {:.6} at U={} to {:.6} at U={}, max {zeta_max:.8}, logneg {:.6} to {:.6}, monotone {monotone}, converged {converged}",
            first.zeta, first.u, last.zeta, last.u, first.logneg, last.logneg
        ),
    )
}

fn criterion_6(log: &mut WitnessLog) -> Verdict {
    let t = Instant::now();
    let s = spec(6, Profile::Pth, 100.0);
    let checkpoints = 20;
    let per = ((PI / checkpoints as f64) / default_dt(6)).ceil() as usize;
    let mut p = EvolutionParams::new(PI / (checkpoints * per) as f64);
    p.t_total = Some(PI);
    p.record_every = per;
    p.policy = TruncationPolicy::with_chi_max(50);
    let prop = ExactPropagator::new(&s).unwrap();
    let mut state = CanonicalState::<Complex64>::mott(6).unwrap();
    let psi0 = state.to_dense_in(prop.basis());
    let (mut dn, mut dl, mut peak, mut seen): (f64, f64, f64, usize) = (0.0, 0.0, 0.0, 0);
    evolve_with(&mut state, &s, &p, |step, time, st, _| {
        if step == 0 {
            return Ok(());
        }
        seen += 1;
        log.check(st);
        let psi = prop.evolve(&psi0, time)?;
        let exact_n = dense_densities(&psi, prop.basis());
        for (a, b) in densities(st).iter().zip(&exact_n) {
            dn = dn.max((a - b).abs());
        }
        let ln = log_negativity(&end_pair_rdm(st))?;
        let ln_exact = log_negativity(&oracle::pair_rdm_dense(&psi, prop.basis())?)?;
        dl = dl.max((ln - ln_exact).abs());
        peak = peak.max(ln);
        Ok(())
    })
    .unwrap();
    let elapsed = t.elapsed();
    verdict(
        seen == checkpoints && dn < 1e-4 && dl < 1e-3 && peak > 0.01 && elapsed < Duration::from_secs(600),
        format!(
            "{seen} checkpoints, density error {dn:.2e}, logneg error {dl:.2e}, peak logneg {peak:.4}, {:.0} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_7(log: &WitnessLog) -> Verdict {
    let products: [&[usize]; 5] = [
        &[1, 1, 1, 1],
        &[2, 0, 1, 1],
        &[0, 3, 0, 1, 0],
        &[4, 0, 0, 4],
        &[1, 0],
    ];
    let mut worst_product: f64 = 0.0;
    let mut pt_ok = true;
    for occ in products {
        let s = CanonicalState::<Complex64>::product_state(occ).unwrap();
        let w = epsilon_witness(&s);
        worst_product = worst_product.max(w.from_rdm.norm()).max(w.direct.norm());
        pt_ok &= pt_consistent(&end_pair_rdm(&s));
    }
    verdict(
        log.states > 0 && log.worst_disagreement <= 1e-10 && worst_product <= 1e-12 && log.pt_mismatches == 0 && pt_ok,
        format!(
            "{} states, rdm vs direct {:.2e}, product states {worst_product:.1e}, negativity mismatches {}",
            log.states, log.worst_disagreement, log.pt_mismatches
        ),
    )
}

fn criterion_8() -> Verdict {
    let mut config = RunConfig::new(Experiment::Perturb, 8, Profile::Pth);
    config.u_mid = Some(10.0);
    config.dt = Some(2.5e-4);
    config.t_total = Some(2.0);
    config.record_every = 400;
    config.delta = Some(0.0);
    let ground = perturb_ground_state(&config).unwrap();
    let mut swing = |delta: f64| {
        config.delta = Some(delta);
        let run = run_perturb_with_ground(&config, &ground, false).unwrap();
        let l0 = run.records[0].logneg;
        run.records
            .iter()
            .map(|r| (r.logneg - l0).abs())
            .fold(0.0, f64::max)
    };
    let (still, driven) = (swing(0.0), swing(0.02));
    verdict(
        still <= 1e-6 && driven > 1e-3,
        format!("logneg swing {still:.2e} at delta=0, {driven:.2e} at delta=0.02"),
    )
}

fn run_binary(kind: &str, config: &Path, out: &Path, threads: &str) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_bosechain"))
        .args([kind, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("BOSECHAIN_THREADS", threads)
        .status()
        .unwrap();
    assert!(status.success(), "{kind} exited with {status}");
    std::fs::read(out).unwrap()
}

fn criterion_9() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        (
            "ground-scan",
            r#"{"experiment": "ground-scan", "N": 4, "M": 4, "profile": "pth", "U_values": [0.0, 1.0, 5.0], "dt": 0.01}"#,
        ),
        (
            "quench",
            r#"{"experiment": "quench", "N": 6, "M": 6, "profile": "ch", "U_mid": 3.0, "t_total": 0.5, "dt": 0.005, "record_every": 10}"#,
        ),
        (
            "perturb",
            r#"{"experiment": "perturb", "N": 4, "M": 4, "profile": "pth", "U_mid": 10.0, "delta": 0.02, "t_total": 0.5, "dt": 0.005, "record_every": 10}"#,
        ),
    ];
    let mut identical = true;
    let mut sizes = Vec::new();
    for (kind, text) in configs {
        let path = dir.path().join(format!("{kind}.json"));
        std::fs::write(&path, text).unwrap();
        let a = run_binary(kind, &path, &dir.path().join(format!("{kind}-a.csv")), "1");
        let b = run_binary(kind, &path, &dir.path().join(format!("{kind}-b.csv")), "2");
        identical &= a == b && !a.is_empty();
        sizes.push(format!("{kind} {} bytes", a.len()));
    }
    verdict(identical, format!("two runs each, {}", sizes.join(", ")))
}

#[test]
fn acceptance_criteria() {
    let mut log = WitnessLog::default();
    let mut failed = Vec::new();
    let mut report = |n: usize, title: &str, v: Verdict| {
        announce(n, title, &v);
        if !v.passed {
            failed.push(n);
        }
    };
    report(1, "ground energy", criterion_1(&mut log));
    report(2, "oracle equivalence", criterion_2(&mut log));
    report(3, "perfect transfer", criterion_3());
    report(4, "trotter order", criterion_4(&mut log));
    report(5, "zeta trend", criterion_5(&mut log));
    report(6, "quench cross-check", criterion_6(&mut log));
    report(7, "witness consistency", criterion_7(&log));
    report(8, "perturbation control", criterion_8());
    report(9, "determinism", criterion_9());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
