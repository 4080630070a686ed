//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any fails.
//!
//! Run with `cargo test --release -p beamsplit --test acceptance`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use beamsplit::engine::{literal_step, step, Checkpoint, DetectorTally, Network, PhotonState};
use beamsplit::experiments::{
    fraction_grid, realization_config, run_ensemble, run_realization, run_sweep, summarize, ScenarioKind,
    ScenarioSpec, SweepResult, SweepRow, SweepSpec,
};
use beamsplit::lattice::{BoundarySpec, Mode, ReflectorConfig, Side, SiteIndex};
use beamsplit::oracle::{compare_with_engine, confinement_check, max_deviation, path_sum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one criterion: pass flag plus a one-line summary.
struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }
}

fn combined(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

fn corner(n: usize, t: u64) -> ScenarioSpec {
    ScenarioSpec::new(ScenarioKind::CornerAbsorbing, n, t).unwrap()
}

// 1. Defect-free lattice, corner injection: no exit before t = N, complete
//    percolation by t = 2N - 1, no backward amplitude ever.
fn regular_array_timing() -> Verdict {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;
    for n in [25usize, 50] {
        let net = Network::new(&ReflectorConfig::open(n).unwrap(), BoundarySpec::AbsorbAll);
        let mut s = PhotonState::init(n, SiteIndex::new(1, 1), Mode::A).unwrap();
        let mut tally = DetectorTally::new();
        let mut early_exit = false;
        let mut backward = false;
        let mut done_at = None;
        for _ in 0..2 * n as u64 {
            step(&mut s, &net, &mut tally).unwrap();
            let t = s.t();
            early_exit |= t < n as u64 && tally.perc_cum != 0.0;
            backward |= s.backward_norm() != 0.0 || tally.back_cum != 0.0;
            if done_at.is_none() && (tally.perc_cum - 1.0).abs() <= 1e-10 {
                done_at = Some(t);
            }
        }
        let ok = !early_exit && !backward && done_at.is_some_and(|t| t <= 2 * n as u64 - 1);
        pass &= ok;
        notes.push(format!("N={n}: complete at t={}", done_at.map_or("never".into(), |t| t.to_string())));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(1);
    Verdict::new(pass, format!("{}; {:.3}s", notes.join(", "), elapsed.as_secs_f64()))
}

// 2. Every edge mirrored: all probability leaves through the bottom arm of
//    the corner at t = 2.
fn blocked_corner_result() -> Verdict {
    let start = Instant::now();
    let mut pass = true;
    let mut worst_oracle: f64 = 0.0;
    let corner_site = SiteIndex::new(1, 1);
    for n in [2usize, 5, 50] {
        let cfg = ReflectorConfig::blocked(n).unwrap();
        let net = Network::new(&cfg, BoundarySpec::AbsorbAll);
        let mut s = PhotonState::init(n, corner_site, Mode::A).unwrap();
        let mut tally = DetectorTally::with_records();
        step(&mut s, &net, &mut tally).unwrap();
        // t = 1: (-i/sqrt2) C + (-1/sqrt2) D at the corner, nothing else.
        let c_ok = (s.amp(corner_site, Mode::C) - Complex64::new(0.0, -FRAC_1_SQRT_2)).norm() < 1e-15;
        let d_ok = (s.amp(corner_site, Mode::D) - Complex64::new(-FRAC_1_SQRT_2, 0.0)).norm() < 1e-15;
        pass &= c_ok && d_ok && s.components().count() == 2;
        step(&mut s, &net, &mut tally).unwrap();
        pass &= (tally.back_cum - 1.0).abs() <= 1e-12 && tally.perc_cum == 0.0 && s.lattice_norm() <= 1e-24;
        let records = tally.records.as_ref().unwrap();
        let bottom: f64 = records
            .iter()
            .filter(|r| r.t == 2 && r.side == Side::Bottom && r.mode == Mode::D)
            .map(|r| r.probability)
            .sum();
        pass &= (bottom - 1.0).abs() <= 1e-12;
        pass &= records.iter().all(|r| r.side == Side::Bottom || r.probability <= 1e-30);
        // The brute-force oracle is limited to small lattices.
        if n <= 8 {
            let o = path_sum(&cfg, &BoundarySpec::AbsorbAll, corner_site, Mode::A, 2).unwrap();
            let dev = max_deviation(&s, &o).max((o.back_cum - tally.back_cum).abs()).max((o.back_cum - 1.0).abs());
            worst_oracle = worst_oracle.max(dev);
        }
    }
    pass &= worst_oracle <= 1e-12;
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(1);
    Verdict::new(pass, format!("oracle deviation {worst_oracle:.1e}; {:.3}s", elapsed.as_secs_f64()))
}

// 3. Conservation on random instances, closed-system drift, and the
//    printed reflector coin losing probability.
fn conservation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let boundaries = [
        BoundarySpec::AbsorbAll,
        BoundarySpec::ReflectInjectionSides { exit_site: SiteIndex::new(1, 1) },
        BoundarySpec::AllReflect,
    ];
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let n = rng.random_range(2..=20);
        let f = rng.random_range(0.3..=1.0);
        let cfg = ReflectorConfig::sample(n, f, &mut rng).unwrap();
        let net = Network::new(&cfg, boundaries[trial % 3]);
        let site = SiteIndex::new(rng.random_range(1..=n), rng.random_range(1..=n));
        let mut s = PhotonState::init(n, site, Mode::from_index(rng.random_range(0..4))).unwrap();
        let mut tally = DetectorTally::new();
        for _ in 0..4 * n {
            step(&mut s, &net, &mut tally).unwrap();
            worst = worst.max((tally.total() + s.lattice_norm() - 1.0).abs());
        }
    }

    let cfg = ReflectorConfig::sample(20, 0.7, &mut rng).unwrap();
    let net = Network::new(&cfg, BoundarySpec::AllReflect);
    let mut s = PhotonState::init(20, SiteIndex::new(10, 10), Mode::A).unwrap();
    let mut tally = DetectorTally::new();
    for _ in 0..10_000 {
        step(&mut s, &net, &mut tally).unwrap();
    }
    let closed_drift = (s.lattice_norm() - 1.0).abs();

    // One mirror east of (2,2): both arrivals there at t = 2 meet it.
    let mut cfg = ReflectorConfig::open(4).unwrap();
    cfg.set_h_edge(2, 2, true).unwrap();
    let net = Network::new(&cfg, BoundarySpec::AbsorbAll);
    let mut s = PhotonState::init(4, SiteIndex::new(1, 1), Mode::A).unwrap();
    let mut tally = DetectorTally::new();
    let mut literal_drift: f64 = 0.0;
    for _ in 0..5 {
        literal_step(&mut s, &net, &mut tally).unwrap();
        literal_drift = literal_drift.max((s.lattice_norm() + tally.total() - 1.0).abs());
    }

    let pass = worst <= 1e-10 && closed_drift < 1e-8 && literal_drift > 1e-3;
    Verdict::new(
        pass,
        format!("max step deviation {worst:.1e}; closed drift {closed_drift:.1e}; literal coin drift {literal_drift:.3}"),
    )
}

// 4. Engine against exhaustive path sums.
fn oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let boundaries = [
        BoundarySpec::AbsorbAll,
        BoundarySpec::ReflectInjectionSides { exit_site: SiteIndex::new(1, 1) },
        BoundarySpec::AllReflect,
    ];
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let f = rng.random_range(0.0..=1.0);
        let cfg = ReflectorConfig::sample(4, f, &mut rng).unwrap();
        let site = SiteIndex::new(rng.random_range(1..=4), rng.random_range(1..=4));
        let mode = Mode::from_index(rng.random_range(0..4));
        for t in 1..=10 {
            worst = worst.max(compare_with_engine(&cfg, &boundaries[trial % 3], site, mode, t).unwrap());
        }
    }
    Verdict::new(worst <= 1e-12, format!("max deviation {worst:.1e} over 20 configs, t = 1..10"))
}

fn sweep_corner(n: usize, realizations: usize, seed: u64) -> SweepResult {
    let sweep = SweepSpec::new(fraction_grid(0.5, 1.0, 0.02).unwrap(), realizations, seed).unwrap();
    run_sweep(&corner(n, 2 * n as u64), &sweep).unwrap()
}

fn at_time(result: &SweepResult, t: u64) -> Vec<&SweepRow> {
    result.rows.iter().filter(|r| r.t == t).collect()
}

// 5. Backscattering dominates until f is close to 1.
fn backscattering_regime(n100: &SweepResult, elapsed: Duration) -> Verdict {
    let rows = at_time(n100, 200);
    let mut pass = true;
    let mut tightest = f64::INFINITY;
    for r in rows.iter().filter(|r| r.f <= 0.90 + 1e-9) {
        let margin = (r.back.mean - r.perc.mean) / combined(r.back.stderr, r.perc.stderr).max(f64::MIN_POSITIVE);
        tightest = tightest.min(margin);
        pass &= r.back.mean - r.perc.mean > 3.0 * combined(r.back.stderr, r.perc.stderr);
    }
    let full = rows.iter().find(|r| r.f == 1.0).unwrap();
    pass &= (full.perc.mean - 1.0).abs() <= 1e-10;
    // Mean percolation is a polynomial in f, hence continuous: it crosses 0.5
    // strictly between the last grid point below and the first one above.
    let first_above = rows.iter().position(|r| r.perc.mean > 0.5).unwrap();
    let below = rows[first_above - 1];
    let above = rows[first_above];
    let below_ok = below.perc.mean + 3.0 * below.perc.stderr < 0.5;
    pass &= below_ok && below.f >= 0.90 && above.f <= 1.0;
    Verdict::new(
        pass,
        format!(
            "back - perc >= {tightest:.1} se for f <= 0.90; P_perc(1.0) = {}; crossing 0.5 in ({}, {}) with P_perc({}) = {:.3}; sweep {:.0}s",
            full.perc.mean,
            below.f,
            above.f,
            below.f,
            below.perc.mean,
            elapsed.as_secs_f64()
        ),
    )
}

// 6. N = 50 and N = 100 curves at t = 2N agree pointwise.
fn size_insensitivity(n50: &SweepResult, n100: &SweepResult) -> Verdict {
    let small = at_time(n50, 100);
    let large = at_time(n100, 200);
    let mut pass = true;
    let mut failures = Vec::new();
    let mut worst = (0.0, 0.0, "");
    for (a, b) in small.iter().zip(&large) {
        assert_eq!(a.f, b.f);
        for (name, x, y) in [("perc", a.perc, b.perc), ("back", a.back, b.back), ("loc", a.loc, b.loc)] {
            let gap = (x.mean - y.mean).abs();
            let allowed = 0.1 + 3.0 * combined(x.stderr, y.stderr);
            if gap - allowed > worst.0 {
                worst = (gap - allowed, a.f, name);
            }
            if gap > allowed {
                pass = false;
                failures.push(format!("{name}@{}: |{:.3} - {:.3}| > {:.3}", a.f, x.mean, y.mean, allowed));
            }
        }
    }
    let detail = if pass {
        "all 26 grid points within 0.1 + 3 se".to_string()
    } else {
        format!("{} violations: {}", failures.len(), failures.join("; "))
    };
    Verdict::new(pass, detail)
}

// 7. Localization decays with time.
fn localization_decay() -> Verdict {
    let scenario = corner(100, 800).with_checkpoints(vec![100, 200, 400, 800]).unwrap();
    let sweep = SweepSpec::new(vec![0.92, 0.96], 500, 7).unwrap();
    let result = run_sweep(&scenario, &sweep).unwrap();
    let mut pass = true;
    let mut notes = Vec::new();
    for f in [0.92, 0.96] {
        let locs: Vec<&SweepRow> = [100, 200, 400, 800].iter().map(|&t| result.row(f, t).unwrap()).collect();
        for w in locs.windows(2) {
            pass &= w[1].loc.mean <= w[0].loc.mean + 3.0 * combined(w[0].loc.stderr, w[1].loc.stderr);
        }
        notes.push(format!(
            "f={f}: P_loc {}",
            locs.iter().map(|r| format!("{:.4}", r.loc.mean)).collect::<Vec<_>>().join(" -> ")
        ));
    }
    Verdict::new(pass, notes.join("; "))
}

// 8. Mirrors on the injection sides trade backscattering for localization.
fn reflecting_edges_comparison() -> Verdict {
    let n = 100;
    let absorbing = corner(n, 200);
    let reflecting = ScenarioSpec::new(ScenarioKind::CornerReflecting, n, 200).unwrap();
    let sweep = SweepSpec::new(fraction_grid(0.70, 0.95, 0.05).unwrap(), 500, 8).unwrap();
    let mut pass = true;
    let mut tightest = f64::INFINITY;
    for (fi, &f) in sweep.fractions.iter().enumerate() {
        // Same seeds, hence the same configurations, under both boundaries.
        let a: Vec<Vec<Checkpoint>> = run_ensemble(&absorbing, &sweep, fi).unwrap();
        let r: Vec<Vec<Checkpoint>> = run_ensemble(&reflecting, &sweep, fi).unwrap();
        let a = &summarize(&absorbing, f, &a)[1];
        let r = &summarize(&reflecting, f, &r)[1];
        assert_eq!((a.t, r.t), (200, 200));
        let back_gap = (a.back.mean - r.back.mean) / combined(a.back.stderr, r.back.stderr);
        let loc_gap = (r.loc.mean - a.loc.mean) / combined(a.loc.stderr, r.loc.stderr);
        tightest = tightest.min(back_gap).min(loc_gap);
        pass &= back_gap >= 3.0 && loc_gap >= 3.0;
    }
    let same_configs = (0..5).all(|i| realization_config(n, &sweep, 2, i).unwrap() == realization_config(n, &sweep, 2, i).unwrap());
    pass &= same_configs;
    Verdict::new(pass, format!("smallest separation {tightest:.1} se over f = 0.70..0.95"))
}

// 9. Center injection.
fn center_injection() -> Verdict {
    let n = 100;
    let scenario = ScenarioSpec::new(ScenarioKind::CenterAbsorbing, n, 1600).unwrap().with_checkpoints(vec![1600]).unwrap();
    let grid = vec![0.30, 0.35, 0.40, 0.45, 0.55, 0.60, 0.65, 0.70, 0.75, 1.0];
    let sweep = SweepSpec::new(grid, 300, 9).unwrap();
    let result = run_sweep(&scenario, &sweep).unwrap();
    let mut pass = true;
    let mut min_loc: f64 = 1.0;
    let mut max_gap: f64 = 0.0;
    for r in &result.rows {
        if r.f <= 0.45 + 1e-9 {
            min_loc = min_loc.min(r.loc.mean);
            pass &= r.loc.mean >= 0.99;
        } else if (0.55 - 1e-9..=0.75 + 1e-9).contains(&r.f) {
            let gap = (r.perc.mean - r.back.mean).abs();
            max_gap = max_gap.max(gap);
            pass &= gap <= 0.1;
        }
    }
    let full = result.row(1.0, 1600).unwrap();
    pass &= (full.perc.mean - 1.0).abs() <= 1e-10;

    let center = scenario.injection.0;
    let mut confined = 0;
    for i in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + i);
        let cfg = ReflectorConfig::sample(n, 0.4, &mut rng).unwrap();
        match confinement_check(&cfg, &BoundarySpec::AbsorbAll, center, 1600) {
            Ok(true) => {
                confined += 1;
                let series = run_realization(&scenario, &cfg).unwrap();
                pass &= series.iter().all(|c| c.p_perc == 0.0 && c.p_back == 0.0);
            }
            Ok(false) => {}
            Err(_) => pass = false,
        }
    }
    Verdict::new(
        pass,
        format!(
            "min P_loc(f<=0.45) = {min_loc:.6}; max |P_perc - P_back| on [0.55,0.75] = {max_gap:.4}; P_perc(1.0) = {}; {confined}/100 f=0.4 clusters closed, all confined",
            full.perc.mean
        ),
    )
}

// 10. Byte-identical CSV for any worker count; N = 400 realization speed.
fn determinism_and_throughput() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_beamsplit");
    let mut outputs = Vec::new();
    for threads in ["1", "4", "1"] {
        let out = dir.path().join(format!("sweep-{threads}-{}.csv", outputs.len()));
        let status = Command::new(bin)
            .args(["--threads", threads, "sweep", "--scenario", "corner-reflecting", "--n", "24", "--t", "60"])
            .args(["--fractions", "0.6:1.0:0.1", "--realizations", "40", "--seed", "42"])
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        if !status.success() {
            return Verdict::new(false, format!("sweep with {threads} threads failed: {status}"));
        }
        outputs.push(std::fs::read(&out).unwrap());
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let cfg = ReflectorConfig::sample(400, 0.9, &mut rng).unwrap();
    let scenario = corner(400, 800);
    let start = Instant::now();
    let series = run_realization(&scenario, &cfg).unwrap();
    let elapsed = start.elapsed();
    let conserved = series.iter().all(|c| (c.total() - 1.0).abs() < 1e-9);
    Verdict::new(
        identical && conserved && elapsed < Duration::from_secs(5),
        format!(
            "CSV identical across 1/4/1 workers: {identical}; N=400 t=800 realization {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    let mut verdicts: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut record = |id: u32, name: &'static str, v: Verdict| {
        println!("[{}] {id:>2}. {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        verdicts.push((id, name, v));
    };

    record(1, "regular-array timing", regular_array_timing());
    record(2, "fully blocked corner", blocked_corner_result());
    record(3, "conservation", conservation());
    record(4, "oracle equivalence", oracle_equivalence());

    let start = Instant::now();
    let n100 = sweep_corner(100, 500, 5);
    let elapsed = start.elapsed();
    record(5, "backscattering regime", backscattering_regime(&n100, elapsed));
    let n50 = sweep_corner(50, 500, 6);
    record(6, "size insensitivity", size_insensitivity(&n50, &n100));

    record(7, "localization decay", localization_decay());
    record(8, "reflecting injection edges", reflecting_edges_comparison());
    record(9, "center injection", center_injection());
    record(10, "determinism and throughput", determinism_and_throughput());

    let failed: Vec<u32> = verdicts.iter().filter(|(_, _, v)| !v.pass).map(|(id, _, _)| *id).collect();
    println!("acceptance: {}/{} criteria passed", verdicts.len() - failed.len(), verdicts.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
