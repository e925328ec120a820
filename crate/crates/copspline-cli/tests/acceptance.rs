//! Acceptance suite: one test per release criterion, each printing a single
//! PASS/FAIL line (visible with `--nocapture`).

use std::fs;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use copspline::basis::TensorBasis;
use copspline::copulas::{l2_error, sample, Copula, Fgm, Gaussian, Independence};
use copspline::estimator::{error_report, fit, FitConfig};
use copspline::moments::{moment_vector, population_moments, pseudo_observations};
use copspline::penalty::{
    assemble_penalty, eval_penalty, BivariateMarginalSpec, MarginalSet, PairCounting,
};
use copspline::quadrature::QuadratureRule;
use copspline::KnotGrid;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {id:2} [{}] {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn basis(cells: &[usize]) -> TensorBasis {
    TensorBasis::new(KnotGrid::new(cells.to_vec()).unwrap())
}

/// Criterion 1: Tensor Gram matrix matches per-entry Gauss-Legendre quadrature of
/// the basis products, d=2, m=(2,2), within 1e-10, in under a second.
#[test]
fn criterion_01_gram_oracle() {
    let start = Instant::now();
    let basis = basis(&[2, 2]);
    let gram = basis.gram_tensor();
    let rule = QuadratureRule::new(5);
    let mut max_err = 0.0f64;
    for s in 0..basis.len() {
        for t in 0..basis.len() {
            let quad = rule
                .integrate(&[2, 2], |u| {
                    Ok(basis.eval_basis(s, u)? * basis.eval_basis(t, u)?)
                })
                .unwrap();
            max_err = max_err.max((gram[(s, t)] - quad).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = max_err <= 1e-10 && elapsed.as_secs_f64() < 1.0;
    report(
        1,
        "gram oracle",
        pass,
        &format!("max |delta| = {max_err:.2e}, {elapsed:.2?}"),
    );
}

/// Criterion 2: Partition of unity: basis values sum to 1 everywhere, checked at 10^4
/// random points to 1e-12.
#[test]
fn criterion_02_partition_of_unity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for (cells, d) in [(vec![3usize, 4], 2usize), (vec![2, 3, 2], 3)] {
        let basis = basis(&cells);
        for _ in 0..10_000 {
            let u: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            let total: f64 = (0..basis.len())
                .map(|t| basis.eval_basis(t, &u).unwrap())
                .sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    report(
        2,
        "partition of unity",
        worst <= 1e-12,
        &format!("max |sum - 1| = {worst:.2e}"),
    );
}

/// Criterion 3: The penalty quadratic form agrees with brute-force midpoint Riemann
/// quadrature of the squared marginal mismatch on 1000^2 cells, relative
/// error 1e-4, for 20 random coefficient vectors.
#[test]
fn criterion_03_penalty_oracle() {
    let basis = basis(&[1, 1]);
    let model = Fgm::new(1.0).unwrap();
    let mut set = MarginalSet::new();
    set.insert(0, 1, BivariateMarginalSpec::Analytic(Box::new(model.clone())))
        .unwrap();
    let form = assemble_penalty(&basis, &set, &QuadratureRule::new(5), PairCounting::Unordered)
        .unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = 1000usize;
    let mut worst_rel = 0.0f64;
    for _ in 0..20 {
        let alpha: Vec<f64> = (0..basis.len()).map(|_| rng.gen::<f64>() * 2.0).collect();
        let quad_form = eval_penalty(&form, &alpha).unwrap();
        let mut riemann = 0.0;
        for a in 0..r {
            let u = (a as f64 + 0.5) / r as f64;
            for b in 0..r {
                let v = (b as f64 + 0.5) / r as f64;
                let diff = basis.eval_expansion(&alpha, &[u, v]).unwrap()
                    - model.density(&[u, v]).unwrap();
                riemann += diff * diff;
            }
        }
        riemann /= (r * r) as f64;
        let rel = (quad_form - riemann).abs() / riemann.max(1e-12);
        worst_rel = worst_rel.max(rel);
    }
    report(
        3,
        "penalty oracle",
        worst_rel <= 1e-4,
        &format!("max relative error = {worst_rel:.2e} over 20 random alpha"),
    );
}

/// Criterion 4: Closed-form anchor: the L2 distance between the constant density 1 and
/// FGM theta=1 is exactly 1/3.
#[test]
fn criterion_04_l2_anchor() {
    let model = Fgm::new(1.0).unwrap();
    let err = l2_error(
        &[64, 64],
        &QuadratureRule::new(5),
        |_: &[f64]| Ok(1.0),
        |u| model.density(u),
    )
    .unwrap();
    let delta = (err - 1.0 / 3.0).abs();
    report(
        4,
        "closed-form L2 anchor",
        delta <= 1e-4,
        &format!("l2_error(1, FGM(1)) = {err:.8}, |delta| = {delta:.2e}"),
    );
}

/// Criterion 5: Feasibility certificate: 50 randomized fits (d = 2 and 3, n in
/// {100, 1000}, with and without the penalty) all return a coefficient
/// vector satisfying nonnegativity, the marginal constraints, and the KKT
/// conditions to 1e-8.
#[test]
fn criterion_05_feasibility_certificate() {
    let models: Vec<Box<dyn Copula>> = vec![
        Box::new(Independence::new(2)),
        Box::new(Fgm::new(0.7).unwrap()),
        Box::new(Gaussian::new(nalgebra_corr3()).unwrap()),
    ];
    let mut worst = 0.0f64;
    let mut count = 0usize;
    let mut run = 0u64;
    while count < 50 {
        for model in &models {
            for &n in &[100usize, 1000] {
                for &lambda in &[0.0, 1.0] {
                    if count >= 50 {
                        break;
                    }
                    run += 1;
                    let d = model.dims();
                    let cells = if d == 2 { vec![2, 3] } else { vec![2, 2, 2] };
                    let data = sample(model.as_ref(), n, 500 + run).unwrap();
                    let mut config = FitConfig::new(KnotGrid::new(cells).unwrap());
                    config.lambda = lambda;
                    if lambda > 0.0 {
                        config.marginals = Some(MarginalSet::from_model(model.as_ref()).unwrap());
                    }
                    let est = fit(&data, &config).unwrap();
                    let diag = &est.diagnostics;
                    worst = worst
                        .max(-diag.min_alpha)
                        .max(diag.constraint_residual)
                        .max(diag.kkt.max_residual());
                    count += 1;
                }
            }
        }
    }
    report(
        5,
        "feasibility certificate",
        worst <= 1e-8,
        &format!("worst residual over {count} fits = {worst:.2e}"),
    );
}

fn nalgebra_corr3() -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(3, 3, &[1.0, 0.4, 0.1, 0.4, 1.0, -0.2, 0.1, -0.2, 1.0])
}

/// Criterion 6: Moment-error rate: the mean squared error of the empirical moments
/// decays like 1/n. Log-log regression slope over n in {250, 1000, 4000},
/// 200 replications each, must land in [-1.35, -0.65] within 2 minutes.
#[test]
fn criterion_06_moment_error_rate() {
    let start = Instant::now();
    let model = Independence::new(2);
    let basis = basis(&[2, 2]);
    let pop = population_moments(|u| model.density(u), &basis, &QuadratureRule::new(5)).unwrap();
    let ns = [250usize, 1000, 4000];
    let mut log_n = Vec::new();
    let mut log_mse = Vec::new();
    for (idx, &n) in ns.iter().enumerate() {
        let mut total = 0.0;
        for rep in 0..200u64 {
            let data = sample(&model, n, 6_000 + 1_000 * idx as u64 + rep).unwrap();
            let emp = moment_vector(&pseudo_observations(&data), &basis).unwrap();
            total += (0..basis.len())
                .map(|t| (emp.values[t] - pop.values[t]).powi(2))
                .sum::<f64>()
                / basis.len() as f64;
        }
        log_n.push((n as f64).ln());
        log_mse.push((total / 200.0).ln());
    }
    let slope = regression_slope(&log_n, &log_mse);
    let elapsed = start.elapsed();
    let pass = (-1.35..=-0.65).contains(&slope) && elapsed.as_secs_f64() < 120.0;
    report(
        6,
        "moment-error rate",
        pass,
        &format!("log-log slope = {slope:.3}, {elapsed:.2?}"),
    );
}

fn regression_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

/// Criterion 7: Consistency trend: unpenalized fits of FGM theta=0.9 on m=(4,4) have
/// strictly decreasing median L2 error over n in {500, 2000, 8000}, 20
/// replications each, within 5 minutes.
#[test]
fn criterion_07_consistency_trend() {
    let start = Instant::now();
    let model = Fgm::new(0.9).unwrap();
    let grid = KnotGrid::new(vec![4, 4]).unwrap();
    let rule = QuadratureRule::new(5);
    let mut medians = Vec::new();
    for (idx, &n) in [500usize, 2000, 8000].iter().enumerate() {
        let mut errs = Vec::new();
        for rep in 0..20u64 {
            let data = sample(&model, n, 7_000 + 1_000 * idx as u64 + rep).unwrap();
            let mut config = FitConfig::new(grid.clone());
            config.lambda = 0.0;
            let est = fit(&data, &config).unwrap();
            errs.push(error_report(&est, &model, &rule).unwrap());
        }
        medians.push(median(&mut errs));
    }
    let elapsed = start.elapsed();
    let pass = medians[0] > medians[1] && medians[1] > medians[2] && elapsed.as_secs_f64() < 300.0;
    report(
        7,
        "consistency trend",
        pass,
        &format!(
            "median L2 = [{:.4}, {:.4}, {:.4}], {elapsed:.2?}",
            medians[0], medians[1], medians[2]
        ),
    );
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Criterion 8: Penalty benefit: with the true bivariate marginal supplied, the
/// penalized fit (lambda=1) has median L2 error no worse than the
/// unpenalized fit at n=500, 50 replications on shared data.
#[test]
fn criterion_08_penalty_benefit() {
    let model = Fgm::new(0.9).unwrap();
    let grid = KnotGrid::new(vec![4, 4]).unwrap();
    let rule = QuadratureRule::new(5);
    let mut plain = Vec::new();
    let mut penalized = Vec::new();
    for rep in 0..50u64 {
        let data = sample(&model, 500, 8_000 + rep).unwrap();
        let mut config0 = FitConfig::new(grid.clone());
        config0.lambda = 0.0;
        let est0 = fit(&data, &config0).unwrap();
        plain.push(error_report(&est0, &model, &rule).unwrap());

        let mut config1 = FitConfig::new(grid.clone());
        config1.lambda = 1.0;
        config1.marginals = Some(MarginalSet::from_model(&model).unwrap());
        let est1 = fit(&data, &config1).unwrap();
        penalized.push(error_report(&est1, &model, &rule).unwrap());
    }
    let med0 = median(&mut plain);
    let med1 = median(&mut penalized);
    report(
        8,
        "penalty benefit",
        med1 <= med0,
        &format!("median L2: lambda=1 {med1:.4} vs lambda=0 {med0:.4}"),
    );
}

/// Criterion 9: Determinism: the fit subcommand writes byte-identical estimate JSON on
/// repeated runs over the same input.
#[test]
fn criterion_09_fit_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.json");
    fs::write(&model_path, "{\"family\": \"fgm\", \"theta\": 0.8}\n").unwrap();
    let data_path = dir.path().join("data.csv");
    let bin = env!("CARGO_BIN_EXE_copspline");
    let status = Command::new(bin)
        .args(["simulate", "--model"])
        .arg(&model_path)
        .args(["--n", "400", "--seed", "11", "--out"])
        .arg(&data_path)
        .status()
        .unwrap();
    assert!(status.success());

    let mut outputs = Vec::new();
    for run in 0..2 {
        let out_dir = dir.path().join(format!("fit{run}"));
        let status = Command::new(bin)
            .arg("fit")
            .arg(&data_path)
            .args(["--grid", "3,3", "--lambda", "1", "--marginals"])
            .arg(&model_path)
            .arg("--out")
            .arg(&out_dir)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(fs::read(out_dir.join("estimate.json")).unwrap());
    }
    let pass = outputs[0] == outputs[1];
    report(
        9,
        "fit determinism",
        pass,
        &format!("{} bytes, identical = {pass}", outputs[0].len()),
    );
}

/// Criterion 10: Independence sanity: a penalized fit of independence data with the
/// independence marginal recovers a density within L2 distance 0.15 of the
/// constant 1.
#[test]
fn criterion_10_independence_sanity() {
    let model = Independence::new(2);
    let data = sample(&model, 2000, 10).unwrap();
    let mut config = FitConfig::new(KnotGrid::new(vec![2, 2]).unwrap());
    config.lambda = 1.0;
    config.marginals = Some(MarginalSet::from_model(&model).unwrap());
    let est = fit(&data, &config).unwrap();
    let err = error_report(&est, &model, &QuadratureRule::new(5)).unwrap();
    report(
        10,
        "independence sanity",
        err <= 0.15,
        &format!("L2 error vs constant density = {err:.4}"),
    );
}
