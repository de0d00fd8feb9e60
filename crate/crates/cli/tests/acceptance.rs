//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed. Monte Carlo cells run once and are shared.

#[path = "../../core/tests/support/jacobi.rs"]
mod jacobi;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weakfactor::linalg::eig_sym_desc;
use weakfactor::panel::standardize;
use weakfactor::replicate::{run_replications, EstimationSummary};
use weakfactor::simulate::{gen_errors, gen_factors, gen_loadings, support_size};
use weakfactor::{Method, MetricsReport, Panel, PcModel, ReplicationOptions, SimConfig, Task};

const SEED: u64 = 20_240_611;
const STRENGTHS: [f64; 3] = [0.9, 0.75, 0.6];
const TWO_STRENGTHS: [f64; 2] = [0.9, 0.6];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn in_range(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

fn near(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn max_ratio(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::MIN, f64::max);
    let lo = xs.iter().copied().fold(f64::MAX, f64::min);
    hi / lo
}

fn monotone_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn fmt(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3}")).collect();
    format!("({})", parts.join(", "))
}

fn simulate(n: usize, alpha: &[f64], reps: usize, tasks: &[Task]) -> MetricsReport {
    let config = SimConfig::new(n, n, alpha.to_vec(), SEED ^ n as u64);
    let report = run_replications(&config, reps, tasks, &ReplicationOptions::default())
        .expect("replications run");
    assert!(report.aggregates.failed.is_empty(), "failed replications at N = {n}");
    report
}

fn summary(report: &MetricsReport) -> &EstimationSummary {
    report.aggregates.estimation.as_ref().expect("estimation summary")
}

struct Cells {
    main: MetricsReport,
    by_size: BTreeMap<usize, MetricsReport>,
    two_factor: BTreeMap<usize, MetricsReport>,
}

fn run_cells() -> Cells {
    let start = Instant::now();
    let main = simulate(200, &STRENGTHS, 500, &Task::ALL);
    let mut by_size = BTreeMap::new();
    by_size.insert(100, simulate(100, &STRENGTHS, 500, &[Task::Estimate]));
    by_size.insert(400, simulate(400, &STRENGTHS, 500, &[Task::Estimate]));
    let mut two_factor = BTreeMap::new();
    for n in [100, 200, 400] {
        two_factor.insert(n, simulate(n, &TWO_STRENGTHS, 200, &[Task::Estimate]));
    }
    println!("monte carlo cells done in {:.0}s", start.elapsed().as_secs_f64());
    Cells { main, by_size, two_factor }
}

fn factor_counts(c: &Cells) -> Outcome {
    let r = &c.main.aggregates.r_hat;
    let wz = r[&Method::Svt];
    let bn = r[&Method::IcP1];
    let ah = r[&Method::Ah];
    let pass = in_range(wz.rmse, 0.04, 0.25)
        && wz.bias.abs() <= 0.06
        && in_range(bn.bias, -0.10, 0.01)
        && ah.bias <= -1.8;
    outcome(
        pass,
        format!(
            "wz rmse {:.3} bias {:.3}; bn bias {:.3}; ah bias {:.3}",
            wz.rmse, wz.bias, bn.bias, ah.bias
        ),
    )
}

fn estimation_quality(c: &Cells) -> Outcome {
    let s = summary(&c.main);
    let pass = near(s.tr_f, 0.964, 0.015) && near(s.tr_lambda, 0.811, 0.03) && near(s.rmse_c, 0.881, 0.03);
    outcome(
        pass,
        format!("TR_F {:.3}, TR_L {:.3}, RMSE_C {:.3}", s.tr_f, s.tr_lambda, s.rmse_c),
    )
}

fn support_recovery(c: &Cells) -> Outcome {
    let s200 = summary(&c.main);
    let s400 = summary(&c.by_size[&400]);
    let pass = near(s200.fdr[0], 0.213, 0.05)
        && near(s200.power[0], 0.872, 0.05)
        && near(s400.fdr[0], 0.201, 0.05)
        && near(s400.power[0], 0.923, 0.04);
    outcome(
        pass,
        format!(
            "(200,200) FDR1 {:.3} power1 {:.3}; (400,400) FDR1 {:.3} power1 {:.3}",
            s200.fdr[0], s200.power[0], s400.fdr[0], s400.power[0]
        ),
    )
}

fn strength_estimation(c: &Cells) -> Outcome {
    let s = summary(&c.main);
    let bias_ok = s.alpha_bias.iter().zip([0.002, 0.023, 0.091]).all(|(b, t)| near(*b, t, 0.03));
    let rmse_ok = s.alpha_rmse.iter().zip([0.009, 0.045, 0.138]).all(|(r, t)| near(*r, t, 0.04));
    outcome(
        bias_ok && rmse_ok,
        format!("bias {} rmse {}", fmt(&s.alpha_bias), fmt(&s.alpha_rmse)),
    )
}

fn max_abs(m: &Array2<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn pc_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    let mut exact = true;
    for case in 0..100 {
        let n = rng.random_range(3..60);
        let t = rng.random_range(3..60);
        let x = Array2::from_shape_fn((n, t), |_| rng.random_range(-2.0..2.0));
        let panel = standardize(&Panel::from_matrix(x).unwrap()).unwrap();
        let r = 1 + case % n.min(t).min(6);
        let fit = PcModel::new(&panel).unwrap().fit(r).unwrap();
        let ftf = fit.factors.t().dot(&fit.factors) / t as f64 - Array2::<f64>::eye(r);
        let ltl = fit.loadings.t().dot(&fit.loadings) / n as f64 - Array2::from_diag(&fit.eigvals);
        let ef = fit.resid.dot(&fit.factors);
        worst = worst.max(max_abs(&ftf)).max(max_abs(&ltl)).max(max_abs(&ef));
        exact &= max_abs(&(&fit.common + &fit.resid - panel.values())) < 1e-12;
    }
    outcome(worst < 1e-8 && exact, format!("largest identity error {worst:.1e}"))
}

fn eigen_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut value_err, mut recon_err) = (0.0f64, 0.0f64);
    for case in 0..200 {
        let n = 1 + case % 12;
        let a = jacobi::random_symmetric(&mut rng, n);
        let (mut reference, _) = jacobi::jacobi(&a);
        reference.sort_by(|x, y| y.total_cmp(x));
        let eig = eig_sym_desc(&a).unwrap();
        for (got, want) in eig.values.iter().zip(&reference) {
            value_err = value_err.max((got - want).abs());
        }
        let back = (&eig.vectors * &eig.values.view().insert_axis(ndarray::Axis(0))).dot(&eig.vectors.t());
        recon_err = recon_err.max(max_abs(&(back - &a)));
    }
    outcome(
        value_err < 1e-9 && recon_err < 1e-8,
        format!("values {value_err:.1e}, reconstruction {recon_err:.1e}"),
    )
}

fn rotation_triangularity(c: &Cells) -> Outcome {
    let q21: Vec<f64> = c.two_factor.values().map(|r| summary(r).median_abs_q[1][0]).collect();
    let scaled: Vec<f64> = c.two_factor.keys().zip(&q21).map(|(n, q)| q * (*n as f64).powf(0.3)).collect();
    let full_rank = c.two_factor.values().map(|r| summary(r).q_full_rank_share).fold(1.0, f64::min);
    let pass = monotone_decreasing(&q21) && max_ratio(&scaled) <= 2.0 && full_rank >= 0.95;
    outcome(
        pass,
        format!(
            "median |Q21| {} scaled {} full rank share {:.3}",
            fmt(&q21),
            fmt(&scaled),
            full_rank
        ),
    )
}

fn eigenvalue_rates(c: &Cells) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, a) in TWO_STRENGTHS.iter().enumerate() {
        let scaled: Vec<f64> = c
            .two_factor
            .iter()
            .map(|(n, r)| summary(r).median_eigenvalues[k] * (*n as f64).powf(1.0 - a))
            .collect();
        pass &= max_ratio(&scaled) <= 3.0;
        parts.push(format!("k={} {}", k + 1, fmt(&scaled)));
    }
    outcome(pass, parts.join("; "))
}

fn sparsity_trend(c: &Cells) -> Outcome {
    let cells = [&c.by_size[&100], &c.main, &c.by_size[&400]];
    let mut pass = true;
    let mut parts = Vec::new();
    for k in 0..STRENGTHS.len() {
        let medians: Vec<f64> = cells.iter().map(|r| summary(r).median_symm_diff[k]).collect();
        pass &= monotone_decreasing(&medians);
        parts.push(format!("k={} {}", k + 1, fmt(&medians)));
    }
    outcome(pass, parts.join("; "))
}

fn var(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

fn generator_moments() -> Outcome {
    let t = 100_000;
    let f = gen_factors(t, 1, SEED, 100).unwrap();
    let v = var(&f.column(0).to_vec());
    let var_ok = (v / (4.0 / 3.0) - 1.0).abs() < 0.03;

    let (e, sigma) = gen_errors(8, t, SEED, Some(1)).unwrap();
    let cov_err = max_abs(&(e.dot(&e.t()) / t as f64 - sigma.to_dense()));

    let mut sizes_ok = true;
    for seed in 0..50u64 {
        for n in [50usize, 100, 200, 400] {
            let (lambda, supports) = gen_loadings(n, &STRENGTHS, seed, Default::default(), None).unwrap();
            for (k, s) in supports.iter().enumerate() {
                let nonzero = lambda.column(k).iter().filter(|x| **x != 0.0).count();
                sizes_ok &= s.len() == support_size(n, STRENGTHS[k]) && nonzero == s.len();
                sizes_ok &= s.len() == (n as f64).powf(STRENGTHS[k]).floor() as usize;
            }
        }
    }
    outcome(
        var_ok && cov_err < 0.02 && sizes_ok,
        format!("AR(1) variance {v:.4}, covariance error {cov_err:.4}, support sizes exact {sizes_ok}"),
    )
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|f| f.file_name().unwrap() != "manifest.json")
        .map(|f| (f.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&f).unwrap()))
        .collect();
    files.sort();
    files
}

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["weakfactor"];
    argv.extend_from_slice(args);
    weakfactor_cli::run_cli(argv)
}

fn determinism() -> Outcome {
    let tmp = tempfile::TempDir::new().unwrap();
    let root = tmp.path();
    let dir = |name: &str| root.join(name).to_string_lossy().into_owned();
    let mut sims = Vec::new();
    for workers in ["1", "8"] {
        let out = dir(&format!("sim{workers}"));
        let code = cli(&[
            "simulate", "--grid", "100x100,60x80", "--alpha", "0.9,0.75,0.6", "--reps", "20", "--seed", "7",
            "--workers", workers, "--write-panel", "--out", &out,
        ]);
        assert_eq!(code, 0);
        sims.push(outputs(Path::new(&out)));
    }
    let workers_ok = sims[0] == sims[1];

    let panel = root.join("sim1").join("panel.csv").to_string_lossy().into_owned();
    let commands: [&[&str]; 5] = [
        &["estimate"],
        &["select-r"],
        &["strengths"],
        &["rolling", "--window", "70"],
        &["heatmap", "--from", "21", "--to", "100"],
    ];
    let mut reruns_ok = true;
    for cmd in commands {
        let mut runs = Vec::new();
        for i in 0..2 {
            let out = dir(&format!("{}{i}", cmd[0]));
            let mut args = cmd.to_vec();
            args.extend(["--data", &panel, "--out", &out]);
            assert_eq!(cli(&args), 0, "{}", cmd[0]);
            runs.push(outputs(Path::new(&out)));
        }
        reruns_ok &= runs[0] == runs[1] && !runs[0].is_empty();
    }
    outcome(
        workers_ok && reruns_ok,
        format!("workers 1 vs 8 identical {workers_ok}; CLI reruns identical {reruns_ok}"),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("algebraic identities", pc_identities()),
        ("eigen oracle", eigen_oracle()),
        ("generator moments", generator_moments()),
        ("determinism", determinism()),
    ];
    let cells = run_cells();
    results.extend([
        ("factor-count accuracy", factor_counts(&cells)),
        ("estimation quality", estimation_quality(&cells)),
        ("support recovery", support_recovery(&cells)),
        ("strength estimation", strength_estimation(&cells)),
        ("rotation triangularity", rotation_triangularity(&cells)),
        ("eigenvalue rates", eigenvalue_rates(&cells)),
        ("sparsity-preservation trend", sparsity_trend(&cells)),
    ]);
    let order = [
        "factor-count accuracy",
        "estimation quality",
        "support recovery",
        "strength estimation",
        "algebraic identities",
        "eigen oracle",
        "rotation triangularity",
        "eigenvalue rates",
        "sparsity-preservation trend",
        "generator moments",
        "determinism",
    ];
    let mut failed = 0;
    for (i, name) in order.iter().enumerate() {
        let (_, o) = results.iter().find(|(n, _)| n == name).unwrap();
        failed += usize::from(!o.pass);
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", order.len() - failed, order.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
