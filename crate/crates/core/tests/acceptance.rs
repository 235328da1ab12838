//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned
//! below. Runs as a plain binary (`harness = false`) so the report reads top
//! to bottom; the process fails if any criterion fails.

use std::fs;
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qmsync::analytic::{enhancement_bound, ideal_enhancement, ideal_sync_prob, Normalization, Source, SyncModel};
use qmsync::interference::{fit_homi, indistinguishability, purity, scan_delays, synthetic_scan, HomiParams, JsiGrid};
use qmsync::model::{ExperimentConfig, HeraldWindow};
use qmsync::qkd::{reference_stats, secure_key_rate, Basis, BoundMode, DEFAULT_EC_INEFFICIENCY};
use qmsync::sim::{
    generate_qkd_counts, latest_slot_policy, PolicyKind, QkdCountOptions, QubitSchedule, RngContract, SimOptions,
    Simulator,
};

// 1. reference key rates
const KEY_RATE_SYNC: f64 = 0.212e-7;
const KEY_RATE_SYNC_REL_TOL: f64 = 0.01;
const KEY_RATE_NOSYNC: f64 = -0.00107e-7;
const KEY_RATE_NOSYNC_REL_TOL: f64 = 0.05;

// 2. analytic vs Monte Carlo
const ORACLE_SETS: usize = 5;
const ORACLE_PARAM_SEED: u64 = 2024;
const ORACLE_FRAMES: u64 = 10_000_000;
const ORACLE_MAX_SE: f64 = 4.0;

// 3. lossless scaling
const SCALING_NS: [u32; 3] = [5, 10, 20];
const SCALING_FRAMES: u64 = 10_000_000;
const SCALING_MAX_SE: f64 = 2.0;
const SCALING_MAX_PN: f64 = 0.05;
const SCALING_BOUND_REL_TOL: f64 = 0.05;

// 4. default-configuration enhancement and baseline
const ENHANCEMENT_TARGET: f64 = 30.5;
const ENHANCEMENT_REL_TOL: f64 = 0.25;
const BASELINE_TARGET: f64 = 1.21e-8;
const BASELINE_MAX_FACTOR: f64 = 2.0;
const ENHANCEMENT_MC_FRAMES: u64 = 10_000_000;

// 5. latest-slot policy
const POLICY_FRAMES: u64 = 1_000_000;

// 6. BSM / QBER
const BSM_FRAMES: u64 = 10_000_000;
const BSM_VISIBILITY: f64 = 0.92;
const BSM_RATIO_TARGET: f64 = 0.08;
const BSM_RATIO_TOL: f64 = 0.005;
const BSM_EX_TOL: f64 = 0.01;
const BSM_EX_OBSERVED: f64 = 0.0797;

// 7. dip fit recovery
const HOMI_REALIZATIONS: u64 = 100;
const HOMI_MIN_COVERED: usize = 95;
const HOMI_VISIBILITY: f64 = 0.957;
const HOMI_WIDTH_PS: f64 = 6.0;
const HOMI_AMPLITUDE: f64 = 1000.0;
const HOMI_BACKGROUND: f64 = 23.2;
const HOMI_V_TOL: f64 = 0.02;
const HOMI_WIDTH_TOL_PS: f64 = 0.2;

// 8. spectral purity
const JSI_RANK1_TOL: f64 = 1e-6;
const JSI_DIAGONAL_TOL: f64 = 1e-9;
const JSI_RANDOM_GRIDS: usize = 1000;
const JSI_CS_SLACK: f64 = 1e-12;

// 9. determinism
const DETERMINISM_FRAMES: &str = "300000";
const DETERMINISM_WORKERS: [&str; 3] = ["1", "2", "4"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn info(line: impl AsRef<str>) {
    println!("       {}", line.as_ref());
}

fn run_sim(config: &ExperimentConfig, options: SimOptions, frames: u64, seed: u64) -> qmsync::sim::SimStats {
    Simulator::new(config, options)
        .expect("valid simulator")
        .run(frames, RngContract::new(seed))
        .expect("simulation runs")
}

fn key_rates() -> Outcome {
    let rate = |sync| {
        secure_key_rate(&reference_stats(sync), DEFAULT_EC_INEFFICIENCY, BoundMode::ReportedOffsets)
            .unwrap()
            .rate_per_pulse
    };
    let (sync, nosync) = (rate(true), rate(false));
    let e_sync = (sync - KEY_RATE_SYNC).abs() / KEY_RATE_SYNC;
    let e_nosync = (nosync - KEY_RATE_NOSYNC).abs() / KEY_RATE_NOSYNC.abs();
    outcome(
        e_sync <= KEY_RATE_SYNC_REL_TOL && e_nosync <= KEY_RATE_NOSYNC_REL_TOL,
        format!(
            "synchronized R = {sync:.4e} ({:.2}% off), unsynchronized R = {nosync:.4e} ({:.2}% off)",
            100.0 * e_sync,
            100.0 * e_nosync
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(ORACLE_PARAM_SEED);
    let mut worst: f64 = 0.0;
    for set in 0..ORACLE_SETS {
        let mu = rng.random_range(0.005..=0.05);
        let eta = rng.random_range(0.1..=0.6);
        let t_qm = rng.random_range(0.9..=1.0);
        let n = [5, 10, 20][rng.random_range(0..3)];
        let mut c = ExperimentConfig::default();
        for s in [&mut c.source_a, &mut c.source_b] {
            s.mu = mu;
            s.eta_t = eta;
        }
        c.channel.t_memory_cycle = t_qm;
        c.timing.max_storage = n;
        c.timing.slots_per_frame = n;
        let analytic = SyncModel::new(&c).unwrap().sync_prob(2, n).unwrap();
        let stats = run_sim(&c, SimOptions::default(), ORACLE_FRAMES, 1000 + set as u64);
        let mc = stats.single_pair_rate();
        let z = mc.z_score(analytic);
        worst = worst.max(z.abs());
        info(format!(
            "set {set}: mu={mu:.4} eta_t={eta:.3} T_QM={t_qm:.4} N=F={n}: analytic {analytic:.5e}, MC {:.5e} ± {:.1e} (z = {z:+.2})",
            mc.value, mc.std_err
        ));
    }
    outcome(
        worst <= ORACLE_MAX_SE,
        format!("{ORACLE_SETS} sets × {ORACLE_FRAMES} frames, worst |z| = {worst:.2} (limit {ORACLE_MAX_SE})"),
    )
}

fn lossless_scaling() -> Outcome {
    let mut c = ExperimentConfig::default();
    c.channel.t_channel = 1.0;
    c.channel.t_memory_cycle = 1.0;
    c.channel.eta_det = 1.0;
    for s in [&mut c.source_a, &mut c.source_b] {
        s.cascade_size = 1;
    }
    let mut pass = true;
    let mut worst_z: f64 = 0.0;
    let mut worst_bound: f64 = 0.0;
    for (i, &n) in SCALING_NS.iter().enumerate() {
        let mut cfg = c;
        cfg.timing.max_storage = n;
        let p = SyncModel::new(&cfg).unwrap().source(Source::A).herald_per_slot();
        let ideal = ideal_sync_prob(p, n, 2).unwrap();
        let stats = run_sim(&cfg, SimOptions::default(), SCALING_FRAMES, 77 + i as u64);
        let mc = stats.sync_rate();
        let z = mc.z_score(ideal);
        let bound_ratio = ideal_enhancement(p, n, 2).unwrap() / enhancement_bound(n, 2);
        let mc_ratio = mc.value / (p * p * f64::from(n)) / enhancement_bound(n, 2);
        worst_z = worst_z.max(z.abs());
        pass &= z.abs() <= SCALING_MAX_SE;
        if p * f64::from(n) <= SCALING_MAX_PN {
            worst_bound = worst_bound.max(1.0 - bound_ratio);
            pass &= 1.0 - bound_ratio <= SCALING_BOUND_REL_TOL;
        }
        info(format!(
            "N={n} pN={:.4}: ideal {ideal:.5e}, MC {:.5e} ± {:.1e} (z = {z:+.2}); enhancement/N^(M-1) analytic {bound_ratio:.4}, MC {mc_ratio:.4}",
            p * f64::from(n),
            mc.value,
            mc.std_err
        ));
    }
    outcome(
        pass,
        format!(
            "worst |z| = {worst_z:.2} (limit {SCALING_MAX_SE}); largest shortfall from N^(M-1) = {:.2}% (limit {:.0}%)",
            100.0 * worst_bound,
            100.0 * SCALING_BOUND_REL_TOL
        ),
    )
}

fn default_enhancement() -> Outcome {
    let c = ExperimentConfig::default();
    let model = SyncModel::new(&c).unwrap();
    let n = c.timing.max_storage;
    let enhancement = model.enhancement_factor(n, Normalization::PerNSlots).unwrap();
    let baseline = model.nonsync_prob_per_pulse();
    let e_dev = (enhancement - ENHANCEMENT_TARGET) / ENHANCEMENT_TARGET;
    let b_factor = (baseline / BASELINE_TARGET).max(BASELINE_TARGET / baseline);

    // the analytic model covers the N-slot window; heralding anywhere in the
    // frame is only available in the simulator
    let per_frame = model.enhancement_factor(n, Normalization::PerAttemptFrame).unwrap();
    let mut whole_frame = c;
    whole_frame.timing.herald_window = HeraldWindow::Frame;
    let frame_mc = run_sim(&whole_frame, SimOptions::default(), ENHANCEMENT_MC_FRAMES, 4)
        .coincidence_per_pulse(c.timing.slots_per_frame)
        .scaled(1.0 / baseline);
    info(format!(
        "variants per {}-pulse attempt frame: N-slot window {per_frame:.2} ({:+.0}%), heralds anywhere in the frame (Monte Carlo) {:.2} ± {:.2} ({:+.0}%)",
        c.timing.slots_per_frame,
        100.0 * (per_frame / ENHANCEMENT_TARGET - 1.0),
        frame_mc.value,
        frame_mc.std_err,
        100.0 * (frame_mc.value / ENHANCEMENT_TARGET - 1.0)
    ));

    let stats = run_sim(&c, SimOptions::default(), ENHANCEMENT_MC_FRAMES, 4);
    let mc = stats.coincidence_per_pulse(n).scaled(1.0 / baseline);
    info(format!(
        "Monte Carlo cross-check: enhancement {:.2} ± {:.2} (z = {:+.2} against analytic)",
        mc.value,
        mc.std_err,
        mc.z_score(enhancement)
    ));
    outcome(
        e_dev.abs() <= ENHANCEMENT_REL_TOL && b_factor <= BASELINE_MAX_FACTOR,
        format!(
            "enhancement {enhancement:.2} ({:+.1}% vs {ENHANCEMENT_TARGET}), baseline {baseline:.3e} per pulse (×{b_factor:.2} vs {BASELINE_TARGET:e})",
            100.0 * e_dev
        ),
    )
}

fn latest_slot() -> Outcome {
    let example = latest_slot_policy(&[3, 29], &[31], 40);
    let cycles = example.map(|d| d.storage_cycles);
    let c = ExperimentConfig::default();
    let run = |policy| {
        let options = SimOptions {
            policy,
            ..SimOptions::default()
        };
        run_sim(&c, options, POLICY_FRAMES, 5)
    };
    let (latest, first) = (run(PolicyKind::LatestSlot), run(PolicyKind::FirstHerald));
    let (ml, mf) = (latest.mean_storage_cycles().value, first.mean_storage_cycles().value);
    outcome(
        cycles == Some(2) && latest.sync_successes == first.sync_successes && ml <= mf,
        format!(
            "example gives {cycles:?} cycles; mean storage latest-slot {ml:.3} vs first-herald {mf:.3} over {} paired syncs",
            latest.sync_successes
        ),
    )
}

fn bsm_consistency() -> Outcome {
    let mut c = ExperimentConfig::default();
    c.channel.t_channel = 1.0;
    for s in [&mut c.source_a, &mut c.source_b] {
        s.eta_t = 0.6;
    }
    let run = |include_multiphoton| {
        let options = QkdCountOptions {
            visibility: BSM_VISIBILITY,
            include_multiphoton,
            ..QkdCountOptions::default()
        };
        generate_qkd_counts(
            &c,
            &QubitSchedule::both_bases(),
            options,
            SimOptions::default(),
            BSM_FRAMES,
            RngContract::new(6),
        )
        .unwrap()
    };
    let e_x = |t: &qmsync::qkd::CoincidenceTable| {
        assert_eq!(t.basis, Basis::X);
        t.errors() as f64 / t.total() as f64
    };
    let clean = run(false);
    let noisy = run(true);
    let ratio = clean.identical_to_orthogonal();
    let ex_clean = e_x(&clean.x);
    let ex_noisy = e_x(&noisy.x);
    let expected_ex = (1.0 - BSM_VISIBILITY) / (2.0 - BSM_VISIBILITY);
    let multi = SyncModel::new(&c).unwrap().joint_pair_table(c.timing.max_storage).unwrap().multiphoton_ratio();
    info(format!(
        "single-photon only: {} X coincidences, e_X {ex_clean:.4}; with multi-photon deliveries ({:.1}% of the (1,1) mass): e_X {ex_noisy:.4}, e_Z {:.4}",
        clean.x.total(),
        100.0 * multi,
        noisy.z.errors() as f64 / noisy.z.total() as f64
    ));
    let pass = (ratio - BSM_RATIO_TARGET).abs() <= BSM_RATIO_TOL
        && (ex_clean - expected_ex).abs() <= BSM_EX_TOL
        && ex_clean <= BSM_EX_OBSERVED
        && BSM_EX_OBSERVED <= ex_noisy;
    outcome(
        pass,
        format!(
            "identical/orthogonal {ratio:.4} (target {BSM_RATIO_TARGET} ± {BSM_RATIO_TOL}); e_X {ex_clean:.4} vs {expected_ex:.4} ± {BSM_EX_TOL}; [{ex_clean:.4}, {ex_noisy:.4}] brackets {BSM_EX_OBSERVED}"
        ),
    )
}

fn homi_recovery() -> Outcome {
    let params = HomiParams {
        visibility: HOMI_VISIBILITY,
        dip_width_ps: HOMI_WIDTH_PS,
        amplitude: HOMI_AMPLITUDE,
        center_ps: 0.0,
    };
    let delays = scan_delays();
    let mut covered = 0;
    let mut worst_v: f64 = 0.0;
    let mut worst_w: f64 = 0.0;
    for seed in 0..HOMI_REALIZATIONS {
        let scan = synthetic_scan(&params, &delays, HOMI_BACKGROUND, seed).unwrap();
        match fit_homi(&scan) {
            Ok(fit) => {
                let dv = (fit.visibility_net - HOMI_VISIBILITY).abs();
                let dw = (fit.dip_width_ps - HOMI_WIDTH_PS).abs();
                worst_v = worst_v.max(dv);
                worst_w = worst_w.max(dw);
                if dv <= HOMI_V_TOL && dw <= HOMI_WIDTH_TOL_PS {
                    covered += 1;
                }
            }
            Err(e) => info(format!("realization {seed}: {e}")),
        }
    }
    outcome(
        covered >= HOMI_MIN_COVERED,
        format!(
            "{covered}/{HOMI_REALIZATIONS} within ±{HOMI_V_TOL} in V and ±{HOMI_WIDTH_TOL_PS} ps in FWHM ({} points, amplitude {HOMI_AMPLITUDE}, background {HOMI_BACKGROUND}); worst |ΔV| {worst_v:.4}, |Δw| {worst_w:.3} ps",
            delays.len()
        ),
    )
}

fn jsi_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_rank1: f64 = 0.0;
    for _ in 0..50 {
        let (r, c) = (rng.random_range(2..40), rng.random_range(2..40));
        let u: Vec<f64> = (0..r).map(|_| rng.random::<f64>() + 1e-3).collect();
        let v: Vec<f64> = (0..c).map(|_| rng.random::<f64>() + 1e-3).collect();
        let grid = JsiGrid::from_matrix(DMatrix::from_fn(r, c, |i, j| u[i] * v[j])).unwrap();
        worst_rank1 = worst_rank1.max((purity(&grid).unwrap() - 1.0).abs());
    }
    let mut worst_diag: f64 = 0.0;
    for d in 2..=64usize {
        let grid = JsiGrid::from_matrix(DMatrix::identity(d, d)).unwrap();
        worst_diag = worst_diag.max((purity(&grid).unwrap() - 1.0 / d as f64).abs());
    }
    let mut violations = 0;
    for _ in 0..JSI_RANDOM_GRIDS {
        let (r, c) = (rng.random_range(2..16), rng.random_range(2..16));
        let mut random = || JsiGrid::from_matrix(DMatrix::from_fn(r, c, |_, _| rng.random::<f64>().powi(3))).unwrap();
        let (a, b) = (random(), random());
        let bound = (purity(&a).unwrap() * purity(&b).unwrap()).sqrt();
        if indistinguishability(&a, &b).unwrap() > bound + JSI_CS_SLACK {
            violations += 1;
        }
    }
    outcome(
        worst_rank1 <= JSI_RANK1_TOL && worst_diag <= JSI_DIAGONAL_TOL && violations == 0,
        format!(
            "rank-1 |P-1| ≤ {worst_rank1:.1e}, diagonal |P-1/d| ≤ {worst_diag:.1e}, Cauchy–Schwarz violations {violations}/{JSI_RANDOM_GRIDS}"
        ),
    )
}

fn determinism() -> Outcome {
    let runs: [&[&str]; 3] = [
        &[],
        &["--policy", "first-herald", "--dark-counts"],
        &["--set", "channel.t_channel=1", "--set", "source.eta_t=0.6"],
    ];
    let mut identical = true;
    for extra in runs {
        let outputs: Vec<Vec<u8>> = DETERMINISM_WORKERS
            .iter()
            .map(|w| {
                let dir = tempfile::tempdir().unwrap();
                let status = Command::new(env!("CARGO_BIN_EXE_qmsync"))
                    .current_dir(dir.path())
                    .args(["simulate", "--frames", DETERMINISM_FRAMES, "--seed", "9", "--workers", w, "--out", "run.txt"])
                    .args(extra)
                    .status()
                    .unwrap();
                assert!(status.success());
                fs::read(dir.path().join("run.txt")).unwrap()
            })
            .collect();
        identical &= outputs.windows(2).all(|w| w[0] == w[1]);
    }
    outcome(
        identical,
        format!("3 simulate configurations × workers {DETERMINISM_WORKERS:?}: outputs byte-identical = {identical}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("reference key rates", key_rates),
        ("analytic vs Monte Carlo sync probability", oracle_equivalence),
        ("lossless scaling law and enhancement bound", lossless_scaling),
        ("default enhancement and unsynchronized baseline", default_enhancement),
        ("latest-slot storage policy", latest_slot),
        ("BSM coincidence ratio and X-basis QBER", bsm_consistency),
        ("dip fit recovery", homi_recovery),
        ("JSI purity and overlap", jsi_properties),
        ("determinism across worker counts", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let status = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "[{status}] {} {name}: {} ({:.1}s)",
            i + 1,
            result.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!result.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
