//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use filica_cli::config::ExperimentConfig;
use filica_cli::runner::run_experiment;
use filica_core::eval::{best_match, EvalReport, C1_CORR_BIAS, C2_COHENS_D_BIAS, C2_CORR_BIAS, H_ABS_CORR, XW_ABS_CORR};
use filica_core::filica::{crude_h, fit_complete_case, fit_filica, rescale_h, standardize};
use filica_core::lica::{decompose, reconstruct, Decomposition, EngineOptions};
use filica_core::matrixio::MaskedModality;
use filica_core::simgen::{gen_replicate, logistic_missing_prob, ALLOWED_PCTS};
use filica_core::stats::{pearson, sd};
use filica_core::{FiLicaConfig, Matrix, Method, Setting};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::time::{Duration, Instant};

const BASE_SEED: u64 = 2024;
const PCTS: [f64; 3] = [0.05, 0.10, 0.20];

struct Ledger {
    failed: Vec<String>,
}

impl Ledger {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(name.to_string());
        }
    }
}

fn randn(g: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| g.sample(StandardNormal))
}

fn row(m: &Matrix, r: usize) -> Vec<f64> {
    m.row(r).iter().copied().collect()
}

/// For each row of `truth`, the best |corr| with any row of `est`.
fn best_rows(est: &Matrix, truth: &Matrix) -> Vec<f64> {
    (0..truth.nrows())
        .map(|t| {
            (0..est.nrows())
                .filter_map(|e| pearson(&row(est, e), &row(truth, t)))
                .map(f64::abs)
                .fold(0.0, f64::max)
        })
        .collect()
}

fn threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn grid(settings: Vec<Setting>, pcts: Vec<f64>, methods: Vec<Method>, out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        settings,
        missing_pcts: pcts,
        n_replicates: 20,
        methods,
        base_seed: BASE_SEED,
        out_dir: out.to_path_buf(),
        parallelism: threads(),
        ..Default::default()
    }
}

fn mean_of(report: &EvalReport, setting: &str, pct: f64, method: &str, metric: &str, component: usize) -> f64 {
    report
        .find(setting, pct, method, metric, component)
        .map_or(f64::NAN, |a| a.mean)
}

fn degeneracy(ledger: &mut Ledger) {
    let start = Instant::now();
    let cfg = FiLicaConfig {
        seed: 3,
        ..Default::default()
    };
    let mut worst = f64::INFINITY;
    for seed in [1, 2] {
        let data = gen_replicate(Setting::Mcar, 0.0, seed).unwrap();
        let fi = fit_filica(&data.masked, &cfg).unwrap();
        let cc = fit_complete_case(&data.masked, &cfg).unwrap();
        for c in best_rows(&fi.decomposition.h, &cc.decomposition.h) {
            worst = worst.min(c);
        }
    }
    let elapsed = start.elapsed();
    ledger.record(
        "criterion 1 (no missing data: FI-LICA equals complete-case)",
        worst >= 0.999 && elapsed < Duration::from_secs(60),
        format!("min matched |corr(H)| {worst:.6}, {:.1}s", elapsed.as_secs_f64()),
    );
}

fn noiseless(ledger: &mut Ledger) {
    let blocks = |nv: usize| Matrix::from_fn(nv, 2, |i, c| if i / 30 == c { 1.0 } else { 0.0 });
    let h = randn(&mut ChaCha8Rng::seed_from_u64(5), 2, 40);
    let data = vec![blocks(300) * &h, blocks(500) * &h];
    let d = decompose(&data, &EngineOptions::new(2, 500, 0), None).unwrap();
    let corr = best_rows(&d.h, &h);
    let resid = (0..2)
        .map(|k| (reconstruct(&d, k).unwrap() - &data[k]).norm())
        .fold(0.0, f64::max);
    ledger.record(
        "criterion 2 (noiseless rank-2 identifiability)",
        corr.iter().all(|&c| c > 0.999) && resid < 1e-6,
        format!("|corr(H)| {corr:.6?}, max residual {resid:.2e}"),
    );
}

fn setting_one(ledger: &mut Ledger, report: &EvalReport) {
    let mut pass = true;
    let mut detail = Vec::new();
    for comp in 1..=2 {
        let fi = mean_of(report, "mcar", 0.2, "filica", H_ABS_CORR, comp);
        let r0 = mean_of(report, "mcar", 0.2, "replace0", H_ABS_CORR, comp);
        let cc = mean_of(report, "mcar", 0.2, "completer", H_ABS_CORR, comp);
        pass &= fi >= r0 + 0.03 && (fi - cc).abs() <= 0.05;
        detail.push(format!("C{comp}: filica {fi:.4} replace0 {r0:.4} completer {cc:.4}"));
    }
    ledger.record(
        "criterion 3 (MCAR 20%: FI-LICA >= replace0 + 0.03, within 0.05 of completer)",
        pass,
        detail.join("; "),
    );
}

fn setting_two(ledger: &mut Ledger) {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = grid(
        vec![Setting::MarContinuous],
        PCTS.to_vec(),
        vec![Method::Filica, Method::Replace0],
        tmp.path(),
    );
    let run = run_experiment(&cfg, false).unwrap();
    let report = &run.report;
    let mut pass = run.failures.is_empty();
    let mut detail = Vec::new();
    for pct in PCTS {
        let fi1 = mean_of(report, "mar_continuous", pct, "filica", C1_CORR_BIAS, 1);
        let r01 = mean_of(report, "mar_continuous", pct, "replace0", C1_CORR_BIAS, 1);
        let fi2 = mean_of(report, "mar_continuous", pct, "filica", C2_CORR_BIAS, 2);
        let r02 = mean_of(report, "mar_continuous", pct, "replace0", C2_CORR_BIAS, 2);
        pass &= fi1.abs() <= 0.10 && fi1.abs() <= r01.abs() && fi2.abs() <= r02.abs();
        detail.push(format!(
            "{}%: C1 bias filica {fi1:+.4} replace0 {r01:+.4}, C2 bias filica {fi2:+.4} replace0 {r02:+.4}",
            pct * 100.0
        ));
    }
    ledger.record(
        "criterion 4 (MAR continuous: FI-LICA covariate bias closest to zero)",
        pass,
        detail.join("; "),
    );
}

fn setting_three(ledger: &mut Ledger) {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = grid(
        vec![Setting::MarMixed],
        vec![0.2],
        vec![Method::Filica, Method::Replace0],
        tmp.path(),
    );
    let run = run_experiment(&cfg, false).unwrap();
    let report = &run.report;
    let fi_d = mean_of(report, "mar_mixed", 0.2, "filica", C2_COHENS_D_BIAS, 2);
    let r0_d = mean_of(report, "mar_mixed", 0.2, "replace0", C2_COHENS_D_BIAS, 2);
    let xw: Vec<f64> = (1..=2)
        .map(|c| mean_of(report, "mar_mixed", 0.2, "filica", XW_ABS_CORR, c))
        .collect();
    ledger.record(
        "criterion 5 (MAR mixed 20%: Cohen's d bias and map recovery)",
        run.failures.is_empty() && fi_d.abs() <= r0_d.abs() && xw.iter().all(|&x| x >= 0.9),
        format!("d bias filica {fi_d:+.4} replace0 {r0_d:+.4}; filica |corr(X_W)| {xw:.4?}"),
    );
}

fn invariant_suites(ledger: &mut Ledger) {
    let start = Instant::now();
    let mut g = ChaCha8Rng::seed_from_u64(99);
    let mut notes = Vec::new();

    // Standardization over observed subjects.
    let mut std_err: f64 = 0.0;
    for _ in 0..20 {
        let values = randn(&mut g, 15, 12).map(|v| 3.0 * v + 2.0);
        let missing: Vec<usize> = (0..12).filter(|_| g.random_bool(0.3)).take(8).collect();
        let m = MaskedModality::with_missing("m", values, &missing);
        let z = standardize(&m).unwrap();
        let obs = m.observed_subjects();
        for r in 0..15 {
            let v: Vec<f64> = obs.iter().map(|&j| z.values[(r, j)]).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
            std_err = std_err.max(mean.abs()).max((rms - 1.0).abs());
        }
    }
    let std_ok = std_err <= 1e-10;
    notes.push(format!("standardize {std_err:.1e}"));

    // rescale_h keeps every reconstruction and gives unit row sd.
    let (mut rec_err, mut sd_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let l = 4;
        let xw = vec![randn(&mut g, 30, l), randn(&mut g, 20, l)];
        let h = randn(&mut g, l, 25).map(|v| 5.0 * v);
        let d = Decomposition {
            weights: vec![vec![1.0; l]; 2],
            noise_var: vec![1.0; 2],
            xw,
            h,
            objective_trace: vec![],
            converged: true,
            n_components: l,
        };
        let r = rescale_h(&d).unwrap();
        for k in 0..2 {
            let a = &d.xw[k] * &d.h;
            rec_err = rec_err.max((&r.xw[k] * &r.h - &a).amax() / a.amax());
        }
        for i in 0..l {
            sd_err = sd_err.max((sd(&row(&r.h, i)) - 1.0).abs());
        }
    }
    let rescale_ok = rec_err <= 1e-10 && sd_err <= 1e-8;
    notes.push(format!("rescale {rec_err:.1e}/{sd_err:.1e}"));

    // crude_h against the normal equations.
    let mut crude_err: f64 = 0.0;
    for _ in 0..50 {
        let x = randn(&mut g, 40, 5);
        let y = randn(&mut g, 40, 10);
        let cols = [1, 4, 7];
        let got = crude_h(&x, &y, &cols).unwrap();
        let xtx = x.transpose() * &x;
        for (c, &j) in cols.iter().enumerate() {
            let rhs = x.transpose() * y.column(j);
            let want = xtx.clone().lu().solve(&rhs).unwrap();
            crude_err = crude_err.max((got.column(c) - want).amax());
        }
    }
    let crude_ok = crude_err <= 1e-8;
    notes.push(format!("crude_h {crude_err:.1e}"));

    // best_match against brute-force argmax.
    let mut match_ok = true;
    for _ in 0..50 {
        let est = randn(&mut g, 60, 5);
        let truth = randn(&mut g, 60, 2) + est.columns(1, 2) * 0.3;
        let m = best_match(&est, &truth).unwrap();
        for t in 0..2 {
            let tc: Vec<f64> = truth.column(t).iter().copied().collect();
            let mut best = (0, -1.0);
            for e in 0..5 {
                let ec: Vec<f64> = est.column(e).iter().copied().collect();
                let r = pearson(&ec, &tc).unwrap().abs();
                if r > best.1 {
                    best = (e, r);
                }
            }
            match_ok &= m.mapping[t] == best.0 && m.xw_abs_corr[t] == best.1;
        }
    }
    notes.push(format!("best_match exact {match_ok}"));

    // Generator masks: exact counts, disjoint across modalities.
    let mut mask_ok = true;
    for setting in Setting::ALL {
        for pct in ALLOWED_PCTS {
            for seed in 0..3 {
                let rep = gen_replicate(setting, pct, seed).unwrap();
                let want = (pct * 100.0).round() as usize;
                let a = rep.masked[0].missing_subjects();
                let b = rep.masked[1].missing_subjects();
                mask_ok &= a.len() == want && b.len() == want && a.iter().all(|j| !b.contains(j));
            }
        }
    }
    notes.push(format!("masks {mask_ok}"));

    let logistic_ok = [(0.0, 0.0, 0.3543436937742), (1.2, 0.0, 0.5), (0.0, 0.5, 0.5)]
        .iter()
        .all(|&(c1, c2, want)| (logistic_missing_prob(c1, c2) - want).abs() <= 1e-12)
        && [(-1.0, 0.7), (2.5, -0.3)].iter().all(|&(c1, c2)| {
            let eta = 0.5 * c1 + 1.2 * c2 - 0.6;
            (logistic_missing_prob(c1, c2) - eta.exp() / (1.0 + eta.exp())).abs() <= 1e-12
        });
    notes.push(format!("logistic {logistic_ok}"));

    let elapsed = start.elapsed();
    ledger.record(
        "criterion 6 (invariant suites)",
        std_ok && rescale_ok && crude_ok && match_ok && mask_ok && logistic_ok && elapsed < Duration::from_secs(120),
        format!("{}; {:.1}s", notes.join(", "), elapsed.as_secs_f64()),
    );
}

#[test]
fn acceptance() {
    let mut ledger = Ledger { failed: Vec::new() };
    degeneracy(&mut ledger);
    noiseless(&mut ledger);

    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let methods = vec![Method::Filica, Method::Replace0, Method::Completer];
    let start = Instant::now();
    let run = run_experiment(&grid(vec![Setting::Mcar], vec![0.2], methods.clone(), first.path()), false).unwrap();
    println!("criterion 3 grid ran in {:.1}s", start.elapsed().as_secs_f64());
    assert!(run.failures.is_empty(), "{:?}", run.failures);
    setting_one(&mut ledger, &run.report);

    setting_two(&mut ledger);
    setting_three(&mut ledger);
    invariant_suites(&mut ledger);

    run_experiment(&grid(vec![Setting::Mcar], vec![0.2], methods, second.path()), false).unwrap();
    let a = std::fs::read(first.path().join("summary.csv")).unwrap();
    let b = std::fs::read(second.path().join("summary.csv")).unwrap();
    ledger.record(
        "criterion 7 (determinism)",
        a == b,
        format!("summary.csv {} bytes, identical: {}", a.len(), a == b),
    );

    println!("SKIP criterion 8: private-cohort results are out of scope");
    assert!(ledger.failed.is_empty(), "failed: {:?}", ledger.failed);
}
