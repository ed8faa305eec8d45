//! Acceptance suite: one pass/fail line per criterion.
//!
//! Run with `cargo test --test acceptance`; pass criterion numbers after
//! `--` to run a subset, e.g. `cargo test --test acceptance -- 7 12`.

use rstar_cli::experiment::{run_experiment, ExperimentSpec, ReplicateRow};
use rstar_diag::diagnostics::{bulk_ess, rank_rhat, tail_ess};
use rstar_diag::generators::{gen_ar1, gen_mvn, preset, Ar1Config, CovarianceSpec, Scenario, TransitionMatrix};
use rstar_diag::oracles::{bayes_optimal_rstar, stationary_distribution};
use rstar_diag::rng::mix;
use rstar_diag::rstar::{compute_rstar, replicate_seeds, ClassifierKind, RStarConfig};
use rstar_diag::stats::{mean, median, variance};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

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

fn count(xs: impl IntoIterator<Item = bool>) -> usize {
    xs.into_iter().filter(|&b| b).count()
}

fn spec(name: &str, replicates: usize, seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        replicates,
        seed,
        rstar_draws: 0,
        optimal_draws: 0,
        ..ExperimentSpec::for_preset(name)
    }
}

fn rows(spec: &ExperimentSpec) -> Vec<ReplicateRow> {
    run_experiment(spec, 1).expect("experiment runs").1
}

fn gbm(rows: &[ReplicateRow]) -> Vec<f64> {
    rows.iter().map(|r| r.r_star_gbm.unwrap()).collect()
}

fn gbm_means(rows: &[ReplicateRow]) -> Vec<f64> {
    rows.iter().map(|r| r.r_star_gbm_draws_mean.unwrap()).collect()
}

fn non_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] >= w[0])
}

fn fmt(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn sd(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// AR(1) heterogeneity: R* and rank-R-hat both flag the odd chain.
fn c1() -> Outcome {
    let t = Instant::now();
    let r = rows(&spec("ar1-hetero", 100, 101));
    let secs = t.elapsed().as_secs_f64();
    let above = count(r.iter().map(|x| x.r_star_gbm.unwrap() > 1.0));
    let flagged = count(r.iter().map(|x| x.max_rank_rhat > 1.01));
    outcome(
        above >= 99 && flagged >= 99 && secs < 600.0,
        format!("R* > 1 in {above}/100, rank-R-hat > 1.01 in {flagged}/100, {secs:.0}s"),
    )
}

/// Identical i.i.d. chains: both algorithms centre on 1.
fn c2() -> Outcome {
    let r = rows(&ExperimentSpec {
        rstar_draws: 1000,
        ..spec("iid-normal", 100, 202)
    });
    let m = median(&gbm(&r));
    let means = gbm_means(&r);
    let inside = count(means.iter().map(|v| (0.95..=1.05).contains(v)));
    outcome(
        (0.9..=1.1).contains(&m) && inside >= 95,
        format!("median R* {m:.3}; draw mean within [0.95, 1.05] in {inside}/100"),
    )
}

/// Mean of the draws sits below the point estimate; values match the
/// reported experiment, which used chain-4 variance 1/3.
fn c3() -> Outcome {
    let stated = rows(&ExperimentSpec {
        rstar_draws: 1000,
        ..spec("ar1-hetero", 100, 303)
    });
    let ordered = count(stated.iter().map(|x| x.r_star_gbm_draws_mean.unwrap() < x.r_star_gbm.unwrap()));
    let mut calibrated = spec("ar1-hetero", 100, 304);
    calibrated.rstar_draws = 1000;
    calibrated
        .set
        .insert("sigmas".into(), serde_json::json!([1.0, 1.0, 1.0, (1.0f64 / 3.0).sqrt()]));
    let cal = rows(&calibrated);
    let cal_ordered = count(cal.iter().map(|x| x.r_star_gbm_draws_mean.unwrap() < x.r_star_gbm.unwrap()));
    let (p, d) = (median(&gbm(&cal)), median(&gbm_means(&cal)));
    let (sp, sd_) = (median(&gbm(&stated)), median(&gbm_means(&stated)));
    println!(
        "      info: sigma_4 = 1/3 gives point {sp:.3}, draw mean {sd_:.3}; its Bayes-optimal R* is 1.48 and a calibrated draw mean is 1.21"
    );
    outcome(
        ordered >= 95 && cal_ordered >= 95 && (p - 1.22).abs() <= 0.15 && (d - 1.07).abs() <= 0.15,
        format!(
            "draw mean < point in {ordered}/100 (sigma_4 = 1/3) and {cal_ordered}/100 (variance 1/3); \
             variance-1/3 medians: point {p:.3} (1.22 +/- 0.15), draw mean {d:.3} (1.07 +/- 0.15)"
        ),
    )
}

/// Correlation difference invisible to marginal diagnostics.
fn c4() -> Outcome {
    let sc = preset("mvn-bivariate").unwrap();
    let seeds = replicate_seeds(404, 10);
    let mut gbm_means = Vec::new();
    let mut rf_means = Vec::new();
    let (mut gbm_above, mut rf_above, mut total) = (0usize, 0usize, 0usize);
    let mut marginal_ok = 0;
    let mut worst_rhat: f64 = 0.0;
    let mut worst_ess = f64::INFINITY;
    for &seed in &seeds {
        let cs = sc.generate(mix(seed, 0)).unwrap();
        for (kind, means, above) in [
            (ClassifierKind::Gbm, &mut gbm_means, &mut gbm_above),
            (ClassifierKind::Rf, &mut rf_means, &mut rf_above),
        ] {
            let r = compute_rstar(&cs, &RStarConfig::default().with_classifier(kind), mix(seed, 1)).unwrap();
            let draws = r.uncertainty_draws.unwrap();
            means.push(mean(&draws));
            *above += count(draws.iter().map(|&v| v > 1.0));
            if kind == ClassifierKind::Gbm {
                total += draws.len();
            }
        }
        let sn = (cs.n_chains() * cs.n_iter()) as f64;
        let mut ok = true;
        for k in 0..2 {
            let rh = rank_rhat(&cs, k).unwrap();
            let (b, t) = (bulk_ess(&cs, k).unwrap().value, tail_ess(&cs, k).unwrap().value);
            worst_rhat = worst_rhat.max(rh);
            worst_ess = worst_ess.min(b.min(t) / sn);
            ok &= rh < 1.01 && b > 0.8 * sn && t > 0.8 * sn;
        }
        marginal_ok += ok as usize;
    }
    let (g, f) = (median(&gbm_means), median(&rf_means));
    let (gf, ff) = (gbm_above as f64 / total as f64, rf_above as f64 / total as f64);
    outcome(
        (g - 1.14).abs() <= 0.10 && (f - 1.27).abs() <= 0.12 && gf > 0.99 && ff > 0.99 && marginal_ok == seeds.len(),
        format!(
            "median draw mean GBM {g:.3}, RF {f:.3}; draws above 1: GBM {:.1}%, RF {:.1}%; \
             marginals clean in {marginal_ok}/10 (max rank-R-hat {worst_rhat:.4}, min ESS/SN {worst_ess:.2})",
            100.0 * gf,
            100.0 * ff
        ),
    )
}

/// Small discrete state space.
fn c5() -> Outcome {
    let p1 = rows(&spec("discrete-small-p1", 40, 501));
    let p2 = rows(&spec("discrete-small-p2", 40, 502));
    let p3 = rows(&spec("discrete-small-p3", 40, 503));
    let m1 = median(&gbm(&p1));
    let p2_above = count(gbm(&p2).iter().map(|&v| v > 1.0));
    let p3_above = count(gbm(&p3).iter().map(|&v| v > 1.0));
    let p3_rhat = count(p3.iter().map(|x| x.max_rank_rhat > 1.01));
    outcome(
        (0.95..=1.05).contains(&m1) && p3_above == 40 && p3_rhat == 40 && p2_above > 20,
        format!(
            "P1 median {m1:.3}; P2 R* > 1 in {p2_above}/40; P3 R* > 1 in {p3_above}/40, rank-R-hat > 1.01 in {p3_rhat}/40"
        ),
    )
}

/// Large discrete state space: R* sees what R-hat misses.
fn c6() -> Outcome {
    let r = rows(&spec("discrete-large", 40, 601));
    let above = count(gbm(&r).iter().map(|&v| v > 1.0));
    let quiet = count(r.iter().map(|x| x.max_rank_rhat < 1.01));
    outcome(
        above >= 38 && quiet >= 35,
        format!("R* > 1 in {above}/40, rank-R-hat < 1.01 in {quiet}/40"),
    )
}

/// Stationary distributions against exact fractions.
fn c7() -> Outcome {
    let cases = [
        (TransitionMatrix::small_base(), [11.0 / 46.0, 15.0 / 46.0, 14.0 / 46.0, 6.0 / 46.0]),
        (TransitionMatrix::small_p2(), [71.0 / 198.0, 17.0 / 66.0, 10.0 / 33.0, 8.0 / 99.0]),
        (TransitionMatrix::small_p3(), [4.0 / 9.0, 2.0 / 9.0, 8.0 / 27.0, 1.0 / 27.0]),
    ];
    let mut worst: f64 = 0.0;
    for (p, exact) in &cases {
        let pi = stationary_distribution(p).unwrap();
        for (a, b) in pi.iter().zip(exact) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= 1e-10, format!("max abs error {worst:.2e}"))
}

/// Trending mean: only split chains reveal it.
fn c8() -> Outcome {
    let split = |mut s: ExperimentSpec, k: usize| {
        s.split = k;
        median(&gbm(&rows(&s)))
    };
    let base = spec("trend-mean", 10, 801);
    let (unsplit, split2) = (split(base.clone(), 1), split(base, 2));
    let mut wide = spec("trend-mean", 10, 802);
    wide.set.insert("dim".into(), serde_json::json!(16));
    let (wide_unsplit, wide_split) = (split(wide.clone(), 1), split(wide, 2));
    outcome(
        (0.9..=1.1).contains(&unsplit) && split2 > 1.2 && (0.9..=1.1).contains(&wide_unsplit) && wide_split > 1.2,
        format!(
            "1-d: unsplit median {unsplit:.3}, split {split2:.3}; 1 of 16 trending: unsplit {wide_unsplit:.3}, split {wide_split:.3}"
        ),
    )
}

/// Trending correlation: marginals look fine, R* does not.
fn c9() -> Outcome {
    let r = rows(&spec("trend-corr", 10, 901));
    let quiet = count(r.iter().map(|x| x.max_rank_rhat < 1.01));
    let above = count(gbm(&r).iter().map(|&v| v > 1.0));
    outcome(
        quiet >= 9 && above >= 9,
        format!("rank-R-hat < 1.01 on both marginals in {quiet}/10, R* > 1 in {above}/10"),
    )
}

/// Persistent chains: R* stays conservative as S grows only when ρ = 1.
fn c10() -> Outcome {
    const REPS: usize = 100;
    let sizes = [250usize, 1000, 4000];
    let mut medians = Vec::new();
    let mut unit_root_all_above = true;
    for (i, rho) in [0.8, 0.95, 1.0].into_iter().enumerate() {
        let mut row = Vec::new();
        for &s in &sizes {
            // the same replicate seeds at every S, so chains at smaller S are
            // prefixes of those at larger S and the comparison across S is paired
            let mut sp = spec("ar1-persist", REPS, 1000 + i as u64);
            sp.n_iter = Some(s);
            sp.set.insert("rho".into(), serde_json::json!(rho));
            let v = gbm(&rows(&sp));
            if rho == 1.0 {
                unit_root_all_above &= v.iter().all(|&x| x > 1.0);
            }
            row.push(median(&v));
        }
        medians.push(row);
    }
    let unit = &medians[2];
    let low = &medians[0];
    let pass = unit_root_all_above && non_decreasing(unit) && low.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        pass,
        format!(
            "medians over S = 250/1000/4000: rho 0.8 {}, rho 0.95 {}, rho 1 {}; rho 1 all > 1: {unit_root_all_above}",
            fmt(low),
            fmt(&medians[1]),
            fmt(unit)
        ),
    )
}

/// Standard error of a sample median, about 1.25 times that of the mean.
fn median_se(v: &[f64]) -> f64 {
    1.25 * sd(v) / (v.len() as f64).sqrt()
}

/// Strict order, and order up to three combined standard errors per step.
fn ordered_medians(cells: &[&Vec<f64>]) -> (bool, bool) {
    let m: Vec<f64> = cells.iter().map(|v| median(v)).collect();
    let within = cells.windows(2).zip(m.windows(2)).all(|(c, w)| {
        let (a, b) = (median_se(c[0]), median_se(c[1]));
        w[1] >= w[0] - 3.0 * (a * a + b * b).sqrt()
    });
    (non_decreasing(&m), within)
}

struct Cell {
    label: String,
    optimal: f64,
    optimal_se: f64,
    gbm: Vec<f64>,
    rf: Vec<f64>,
}

impl Cell {
    fn run(label: String, sc: &Scenario, base: u64, reps: usize) -> Cell {
        let densities = sc.densities().unwrap().expect("independent fixture has densities");
        let mut optimal = Vec::new();
        let mut optimal_se = Vec::new();
        let (mut gbm, mut rf) = (Vec::new(), Vec::new());
        for seed in replicate_seeds(base, reps) {
            let cs = sc.generate(mix(seed, 0)).unwrap();
            for (kind, out) in [(ClassifierKind::Gbm, &mut gbm), (ClassifierKind::Rf, &mut rf)] {
                let cfg = RStarConfig::default().with_classifier(kind).with_draws(0);
                out.push(compute_rstar(&cs, &cfg, mix(seed, 1)).unwrap().r_star);
            }
            let o = bayes_optimal_rstar(&densities, 100_000, mix(seed, 2)).unwrap();
            optimal.push(o.r_star);
            optimal_se.push(o.std_error);
        }
        Cell {
            label,
            optimal: median(&optimal),
            // the median of independent estimates has error about 1.25 / sqrt(reps) of one estimate
            optimal_se: 1.25 * mean(&optimal_se) / (reps as f64).sqrt(),
            gbm,
            rf,
        }
    }

    /// Classifier median against optimal median plus three combined errors.
    fn dominated(&self) -> bool {
        [&self.gbm, &self.rf].iter().all(|v| {
            let se = median_se(v);
            median(v) <= self.optimal + 3.0 * (se * se + self.optimal_se * self.optimal_se).sqrt()
        })
    }

    fn describe(&self) -> String {
        format!(
            "{}: opt {:.3}, GBM {:.3}, RF {:.3}",
            self.label,
            self.optimal,
            median(&self.gbm),
            median(&self.rf)
        )
    }
}

/// Tree classifiers never beat the Bayes-optimal classifier.
fn c11() -> Outcome {
    const REPS: usize = 20;
    let dims = [1usize, 2, 4, 8, 16, 32];
    let joint: Vec<Cell> = dims
        .iter()
        .map(|&d| {
            let sc = preset("lkj-joint").unwrap().with_field("dim", &d.to_string()).unwrap();
            Cell::run(format!("d={d}"), &sc, 1100 + d as u64, REPS)
        })
        .collect();
    let tails: Vec<Cell> = [4u32, 8, 16, 32]
        .iter()
        .map(|&nu| {
            let sc = preset("studentt-tails").unwrap().with_field("last_dof", &nu.to_string()).unwrap();
            Cell::run(format!("nu={nu}"), &sc, 1200 + nu as u64, REPS)
        })
        .collect();
    for c in joint.iter().chain(&tails) {
        println!("      info: {}", c.describe());
    }
    let dominated = count(joint.iter().chain(&tails).map(Cell::dominated));
    let d1 = &joint[0];
    let unit = (d1.optimal - 1.0).abs() <= 3.0 * d1.optimal_se;
    let opt: Vec<f64> = joint.iter().map(|c| c.optimal).collect();
    let g: Vec<f64> = joint.iter().map(|c| median(&c.gbm)).collect();
    let f: Vec<f64> = joint.iter().map(|c| median(&c.rf)).collect();
    // the optimum has tiny error and is held to a strict order; classifier
    // medians near d = 1 differ by less than their noise, so a drop within
    // three combined errors is tolerated and reported
    let (g_strict, g_within) = ordered_medians(&joint.iter().map(|c| &c.gbm).collect::<Vec<_>>());
    let (f_strict, f_within) = ordered_medians(&joint.iter().map(|c| &c.rf).collect::<Vec<_>>());
    let monotone = non_decreasing(&opt) && g_within && f_within;
    outcome(
        dominated == joint.len() + tails.len() && unit && monotone,
        format!(
            "dominated in {dominated}/10 cells; optimal at d=1 {:.4} (se {:.4}); medians over d: optimal {}, \
             GBM {} (strict order {g_strict}), RF {} (strict order {f_strict})",
            d1.optimal,
            d1.optimal_se,
            fmt(&opt),
            fmt(&g),
            fmt(&f)
        ),
    )
}

/// Bulk-ESS near S·N for i.i.d. draws, far below it for AR(0.9).
fn c12() -> Outcome {
    const RUNS: usize = 50;
    let sn = 8000.0;
    let mut inside = 0;
    let mut ar_ok = 0;
    let mut ar_max: f64 = 0.0;
    for (i, seed) in replicate_seeds(1201, RUNS).into_iter().enumerate() {
        let iid = gen_mvn(&vec![CovarianceSpec::identity(1); 4], 2000, seed).unwrap();
        let b = bulk_ess(&iid, 0).unwrap().value;
        inside += (0.8 * sn..=1.25 * sn).contains(&b) as usize;
        let cfg = Ar1Config {
            rho: 0.9,
            sigmas: vec![1.0; 4],
            n_iter: 2000,
            x0: 0.0,
        };
        let ar = gen_ar1(&cfg, mix(seed, i as u64)).unwrap();
        let a = bulk_ess(&ar, 0).unwrap().value;
        ar_max = ar_max.max(a);
        ar_ok += (a < 0.2 * sn) as usize;
    }
    outcome(
        inside as f64 >= 0.9 * RUNS as f64 && ar_ok == RUNS,
        format!("i.i.d. in band {inside}/{RUNS}; AR(0.9) below 0.2*S*N in {ar_ok}/{RUNS} (max {ar_max:.0})"),
    )
}

fn digest_dir(dir: &Path, stdout: &[u8]) -> String {
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let mut h = Sha256::new();
    h.update(stdout);
    for n in names {
        h.update(n.as_encoded_bytes());
        h.update(std::fs::read(dir.join(&n)).unwrap());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Every CLI command is byte-reproducible.
fn c13() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let draws = tmp.path().join("input").join("draws.csv");
    let run = |args: &[&str], dir: &Path| -> String {
        let out = Command::new(env!("CARGO_BIN_EXE_rstar"))
            .args(args)
            .arg("--out")
            .arg(dir)
            .env_remove("RSTAR_OUT_DIR")
            .output()
            .unwrap();
        assert!(out.status.code().is_some_and(|c| c == 0 || c == 2), "{:?}", out);
        digest_dir(dir, &out.stdout)
    };
    run(&["simulate", "--preset", "mvn-bivariate", "--n-iter", "500", "--seed", "13"], &tmp.path().join("input"));
    let d = draws.to_str().unwrap();
    let commands: [Vec<&str>; 5] = [
        vec!["simulate", "--preset", "ar1-hetero", "--seed", "7"],
        vec!["diagnose", d, "--seed", "3"],
        vec!["diagnose", d, "--classifier", "both", "--seed", "3", "--strict"],
        vec!["experiment", "--preset", "discrete-small-p2", "--n-iter", "1000", "--replicates", "3", "--seed", "5"],
        vec!["experiment", "--preset", "lkj-joint", "--set", "dim=2", "--n-iter", "400", "--replicates", "3", "--classifier", "both", "--jobs", "2"],
    ];
    let mut same = 0;
    for (i, args) in commands.iter().enumerate() {
        let a = run(args, &tmp.path().join(format!("{i}a")));
        let b = run(args, &tmp.path().join(format!("{i}b")));
        same += (a == b) as usize;
    }
    outcome(same == commands.len(), format!("{same}/{} commands byte-identical", commands.len()))
}

/// One R* computation per classifier at a typical size.
fn c14() -> Outcome {
    let cs = gen_mvn(&vec![CovarianceSpec::identity(10); 4], 2000, 14).unwrap();
    let t = Instant::now();
    let mut parts = Vec::new();
    for kind in [ClassifierKind::Gbm, ClassifierKind::Rf] {
        let s = Instant::now();
        let cfg = RStarConfig::default().with_classifier(kind);
        compute_rstar(&cs, &cfg, 1).unwrap();
        parts.push(format!("{kind} {:.1}s", s.elapsed().as_secs_f64()));
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(secs < 60.0, format!("{} (total {secs:.1}s)", parts.join(", ")))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 14] = [
        (1, "AR(1) heterogeneity detected by R* and rank-R-hat", c1),
        (2, "null case centred on 1", c2),
        (3, "draw mean below point estimate", c3),
        (4, "bivariate joint-distribution detection", c4),
        (5, "discrete small state space", c5),
        (6, "discrete large state space", c6),
        (7, "stationary simplices", c7),
        (8, "split vs unsplit trending mean", c8),
        (9, "trending correlation", c9),
        (10, "AR(1) persistence conservatism", c10),
        (11, "Bayes-optimal dominance", c11),
        (12, "ESS sanity", c12),
        (13, "CLI determinism", c13),
        (14, "performance envelope", c14),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} {status} {name}: {} [{:.0}s]",
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
