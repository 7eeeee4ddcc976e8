//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line. Run with `cargo test -p fansite-cli --test acceptance`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use fansite_core::bounds::{build_report, gauss_ratio_bound, verify_bounds, EigMode};
use fansite_core::estimator::estimate_cond_entropy;
use fansite_core::flow::{
    build_masks, build_subset_order, compact_rescale, conditioner_forward, forward_latents,
    forward_logderivs, masked_log_likelihood, masked_log_likelihood_grad, train, FansConfig,
    FansModel, TrainConfig,
};
use fansite_core::gauss::{gaussian_cond_entropy, CovMatrix, STD_NORMAL_ENTROPY};
use fansite_core::graph::markov_boundary_of;
use fansite_core::metrics::{avep, evaluate_run, f1, ndcg};
use fansite_core::rng::substream;
use fansite_core::search::{discover_all, FansScorer, GaussianScorer, SearchConfig};
use fansite_core::synth::{
    analytic_covariance, sample_er_dag, sample_sem_weights, simulate_gp_sem, simulate_linear_sem,
    NoiseSpec,
};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fansite"))
}

fn pass(criterion: &str, detail: String) {
    println!("[PASS] {criterion}: {detail}");
}

/// Criterion 1: exact boundary recovery against brute-force enumeration,
/// through the CLI, for 300 target instances in under 30 s.
#[test]
fn criterion_1_oracle_soundness() {
    let start = Instant::now();
    let out = bin()
        .args(["oracle-check", "--d", "6", "--trials", "50"])
        .output()
        .expect("binary runs");
    let elapsed = start.elapsed();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "oracle-check failed: {stdout}");
    assert!(
        stdout.contains("exact-recovery rate: 100.00% (300/300 targets)"),
        "unexpected output: {stdout}"
    );
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    pass(
        "criterion 1 (oracle soundness)",
        format!("300/300 exact recoveries in {elapsed:.2?}"),
    );
}

/// Criterion 2: for 20 random d=6 linear-Gaussian SEMs, exhaustive subset
/// enumeration confirms the true boundary minimizes H(T|S) and every
/// superset matches within 1e-9. Under one minute.
#[test]
fn criterion_2_entropy_minimizer_brute_force() {
    let start = Instant::now();
    let d = 6;
    for seed in 0..20u64 {
        let dag = sample_er_dag(d, 1.5, 40_000 + seed).unwrap();
        let weights = sample_sem_weights(&dag, seed);
        let sigma = analytic_covariance(&dag, &weights, &vec![1.0; d]).unwrap();
        let cov = CovMatrix::new(sigma).unwrap();
        for target in 0..d {
            let truth = markov_boundary_of(&dag, target).unwrap();
            let truth_vec: Vec<usize> = truth.iter().copied().collect();
            let h_mb = gaussian_cond_entropy(&cov, target, &truth_vec).unwrap();
            let others: Vec<usize> = (0..d).filter(|&v| v != target).collect();
            for mask in 0u32..(1 << others.len()) {
                let subset: Vec<usize> = others
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, &v)| v)
                    .collect();
                let h = gaussian_cond_entropy(&cov, target, &subset).unwrap();
                assert!(h >= h_mb - 1e-9, "H(T|S) below the boundary minimum");
                if truth.iter().all(|m| subset.contains(m)) {
                    assert!((h - h_mb).abs() <= 1e-9, "superset value differs");
                }
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    pass(
        "criterion 2 (minimizer brute force)",
        format!("20 SEMs x 6 targets enumerated in {elapsed:.2?}"),
    );
}

/// Criterion 3: linear d=30, degree 1, N=1000, Gaussian scorer with the
/// sparse thresholds; mean F1 and nDCG at least 0.95 over 5 seeds in under
/// two minutes.
#[test]
fn criterion_3_linear_d30_desk_scale() {
    let start = Instant::now();
    let d = 30;
    let mut f1_sum = 0.0;
    let mut ndcg_sum = 0.0;
    let seeds = 5u64;
    for seed in 0..seeds {
        let dag = sample_er_dag(d, 1.0, seed).unwrap();
        let weights = sample_sem_weights(&dag, seed);
        let data =
            simulate_linear_sem(&dag, &weights, 1000, &NoiseSpec::standard_gaussian(), seed)
                .unwrap();
        let scorer = GaussianScorer::from_dataset(&data).unwrap();
        let cfg = SearchConfig {
            seed,
            ..SearchConfig::sparse_defaults(d)
        };
        assert_eq!(cfg.eps_grow, 0.005);
        assert_eq!(cfg.eps_shrink, 0.002);
        let results = discover_all(&scorer, &cfg, 1).unwrap();
        let map: BTreeMap<usize, Vec<usize>> = results
            .iter()
            .map(|(&t, r)| (t, r.members.clone()))
            .collect();
        let (_, macros) = evaluate_run(&map, &dag).unwrap();
        f1_sum += macros.f1;
        ndcg_sum += macros.ndcg;
    }
    let mean_f1 = f1_sum / seeds as f64;
    let mean_ndcg = ndcg_sum / seeds as f64;
    let elapsed = start.elapsed();
    assert!(mean_f1 >= 0.95, "mean F1 {mean_f1} < 0.95");
    assert!(mean_ndcg >= 0.95, "mean nDCG {mean_ndcg} < 0.95");
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    pass(
        "criterion 3 (linear d30)",
        format!("mean F1 {mean_f1:.4}, mean nDCG {mean_ndcg:.4} over 5 seeds in {elapsed:.2?}"),
    );
}

// ---------------------------------------------------------------------------
// Flow-correctness property helpers are shared by criteria 4 (fallback) and
// 5.

fn property_gradient_check() -> Result<String, String> {
    let d = 3;
    let cfg = FansConfig {
        m: 3,
        ..FansConfig::defaults_for(d)
    };
    let mut model = FansModel::init(cfg, 51).unwrap();
    let mut rng = substream(52, "acc_grad");
    let batch = Array2::from_shape_fn((6, d), |_| rng.gen_range(-1.5..1.5));
    let mask = [1u8, 0, 1];
    let (_, grad) = masked_log_likelihood_grad(&model, &batch, &mask).unwrap();
    let params = model.param_vector();
    let h = 1e-5;
    let mut max_rel: f64 = 0.0;
    for _ in 0..150 {
        let i = rng.gen_range(0..params.len());
        let mut pp = params.clone();
        pp[i] += h;
        model.set_param_vector(&pp).unwrap();
        let lp = masked_log_likelihood(&model, &batch, &mask).unwrap();
        pp[i] -= 2.0 * h;
        model.set_param_vector(&pp).unwrap();
        let lm = masked_log_likelihood(&model, &batch, &mask).unwrap();
        let fd = (lp - lm) / (2.0 * h);
        let rel = (grad[i] - fd).abs() / fd.abs().max(1e-3);
        max_rel = max_rel.max(rel);
        if rel >= 1e-4 {
            return Err(format!(
                "gradient mismatch at parameter {i}: analytic {} vs fd {fd}",
                grad[i]
            ));
        }
    }
    Ok(format!("max relative gradient error {max_rel:.2e}"))
}

fn property_sparsity_and_zero_leak() -> Result<String, String> {
    let mut rng = substream(61, "acc_sparsity");
    let mut checked = 0;
    while checked < 200 {
        let d = rng.gen_range(3..9usize);
        let cfg = FansConfig {
            m: d,
            flow_layers: 1 + (checked % 2),
            ..FansConfig::defaults_for(d)
        };
        let model = FansModel::init(cfg, 7000 + checked as u64).unwrap();
        let size = rng.gen_range(1..=d);
        let mut vars: Vec<usize> = (0..d).collect();
        vars.shuffle(&mut rng);
        vars.truncate(size);
        vars.sort_unstable();
        let mut row = Array2::zeros((1, d));
        for &v in &vars {
            row[(0, v)] = rng.gen_range(-1.5..1.5);
        }
        let base = forward_latents(&model, &row, &vars).unwrap();
        // Autoregressive sparsity: a later position cannot move an earlier u.
        for (j, &vj) in vars.iter().enumerate() {
            let mut pert = row.clone();
            pert[(0, vj)] += 0.41;
            let u = forward_latents(&model, &pert, &vars).unwrap();
            for &vi in vars.iter().take(j) {
                if u[(0, vi)] != base[(0, vi)] {
                    return Err(format!("sparsity leak: {vj} -> {vi} (d={d})"));
                }
            }
        }
        // Zero-leak: masked-out coordinates cannot move anything (the masked
        // input is zeroed structurally, so compare against a poked copy
        // through the conditioner directly).
        if let Some(out) = (0..d).find(|v| !vars.contains(v)) {
            let order = build_subset_order(&vars, d).unwrap();
            let masks = build_masks(&order, model.config()).unwrap();
            let x0 = row.row(0).to_owned();
            let heads_base = conditioner_forward(&model, &x0, &masks).unwrap();
            let mut poked = x0.clone();
            poked[out] = 2.5;
            let heads_poked = conditioner_forward(&model, &poked, &masks).unwrap();
            if heads_base != heads_poked {
                return Err(format!("zero-leak through masked coordinate {out}"));
            }
        }
        checked += 1;
    }
    Ok("200 random (subset, input) pairs exact".to_string())
}

fn property_logdet_finite_difference() -> Result<String, String> {
    let mut rng = substream(71, "acc_logdet");
    let h = 1e-6;
    let mut max_rel: f64 = 0.0;
    for trial in 0..40u64 {
        let d = rng.gen_range(2..7usize);
        let cfg = FansConfig {
            m: d,
            ..FansConfig::defaults_for(d)
        };
        let mut model = FansModel::init(cfg, 9000 + trial).unwrap();
        // Move off the near-identity initialization so the log-determinant
        // is not degenerately close to zero.
        let mut params = model.param_vector();
        for p in params.iter_mut() {
            *p += rng.gen_range(-0.5..0.5);
        }
        model.set_param_vector(&params).unwrap();
        let size = rng.gen_range(1..=d);
        let mut vars: Vec<usize> = (0..d).collect();
        vars.shuffle(&mut rng);
        vars.truncate(size);
        vars.sort_unstable();
        let mut row = Array2::zeros((1, d));
        for &v in &vars {
            row[(0, v)] = rng.gen_range(-1.2..1.2);
        }
        let analytic = forward_logderivs(&model, &row, &vars).unwrap()[0];
        // The Jacobian is triangular, so log|det| is the sum of the diagonal
        // derivatives, measured by central differences per coordinate.
        let mut fd_sum = 0.0;
        for &v in &vars {
            let mut up = row.clone();
            up[(0, v)] += h;
            let mut dn = row.clone();
            dn[(0, v)] -= h;
            let uu = forward_latents(&model, &up, &vars).unwrap()[(0, v)];
            let ud = forward_latents(&model, &dn, &vars).unwrap()[(0, v)];
            fd_sum += ((uu - ud) / (2.0 * h)).ln();
        }
        let rel = (analytic - fd_sum).abs() / fd_sum.abs().max(1e-6);
        max_rel = max_rel.max(rel);
        if rel >= 1e-6 {
            return Err(format!(
                "log-det mismatch on trial {trial}: analytic {analytic} vs fd {fd_sum}"
            ));
        }
    }
    Ok(format!("max relative log-det error {max_rel:.2e}"))
}

fn property_compact_rescale_examples() -> Result<String, String> {
    // d=5, M=3: positions [2,3,5] rescale to [1,2,3].
    let a = build_subset_order(&[1, 2, 4], 5).unwrap();
    let ra = compact_rescale(&a, 3, 5).unwrap();
    if ra.indices() != [1, 2, 3] {
        return Err(format!("first worked example gave {:?}", ra.indices()));
    }
    // M-1=6: raw [1,1,2,6,6] adjusts to [1,2,3,5,6] (d=13, M=7 realizes the
    // raw sequence from positions [1,2,3,11,12]).
    let b = build_subset_order(&[0, 1, 2, 10, 11], 13).unwrap();
    let raw: Vec<usize> = b.indices().iter().map(|&i| (6 * i).div_ceil(12)).collect();
    if raw != [1, 1, 2, 6, 6] {
        return Err(format!("raw rescale mismatch: {raw:?}"));
    }
    let rb = compact_rescale(&b, 7, 13).unwrap();
    if rb.indices() != [1, 2, 3, 5, 6] {
        return Err(format!("second worked example gave {:?}", rb.indices()));
    }
    Ok("both worked rescale examples reproduced exactly".to_string())
}

fn run_property_suite() -> Result<Vec<String>, String> {
    Ok(vec![
        property_gradient_check()?,
        property_sparsity_and_zero_leak()?,
        property_logdet_finite_difference()?,
        property_compact_rescale_examples()?,
    ])
}

/// Criterion 4: nonlinear desk scale. d=10 GP-SEM, N=1000, flow trained for
/// at most 2000 epochs; mean F1 at least 0.70 over 3 seeds. If the
/// threshold is missed, the flow-correctness property suite is the fallback
/// acceptance for this path.
#[test]
fn criterion_4_nonlinear_desk_scale() {
    let start = Instant::now();
    let d = 10;
    let seeds = 3u64;
    let mut f1_sum = 0.0;
    for seed in 0..seeds {
        let dag = sample_er_dag(d, 1.0, seed).unwrap();
        let specs = vec![NoiseSpec::standard_gaussian(); d];
        let data = simulate_gp_sem(&dag, 1000, &specs, seed).unwrap();
        let model_cfg = FansConfig::defaults_for(d);
        let mut model = FansModel::init(model_cfg, 100 + seed).unwrap();
        let tc = TrainConfig {
            epochs: 2000,
            ..TrainConfig::defaults_for(&model_cfg, 200 + seed)
        };
        train(&mut model, &data, &tc).unwrap();
        let cfg = SearchConfig {
            max_subset: model_cfg.m,
            seed: 300 + seed,
            ..SearchConfig::sparse_defaults(d)
        };
        let scorer = FansScorer::new(model, &data, cfg.mc_samples, cfg.seed).unwrap();
        let results = discover_all(&scorer, &cfg, 4).unwrap();
        let map: BTreeMap<usize, Vec<usize>> = results
            .iter()
            .map(|(&t, r)| (t, r.members.clone()))
            .collect();
        let (_, macros) = evaluate_run(&map, &dag).unwrap();
        f1_sum += macros.f1;
    }
    let mean_f1 = f1_sum / seeds as f64;
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(45 * 60), "took {elapsed:?}");
    if mean_f1 >= 0.70 {
        pass(
            "criterion 4 (nonlinear desk scale)",
            format!("mean F1 {mean_f1:.4} over 3 seeds in {elapsed:.2?}"),
        );
    } else {
        // Fallback acceptance: the flow-correctness property suite.
        match run_property_suite() {
            Ok(details) => pass(
                "criterion 4 (nonlinear desk scale, property-suite fallback)",
                format!(
                    "mean F1 {mean_f1:.4} below 0.70; fallback properties hold: {}",
                    details.join("; ")
                ),
            ),
            Err(e) => panic!(
                "[FAIL] criterion 4: mean F1 {mean_f1:.4} < 0.70 and fallback property suite failed: {e}"
            ),
        }
    }
}

/// Criterion 5: flow correctness properties (gradients, autoregressive
/// sparsity and zero-leak, log-det Jacobian, compact rescale examples).
#[test]
fn criterion_5_flow_correctness_properties() {
    let a = property_gradient_check().unwrap_or_else(|e| panic!("[FAIL] 5a: {e}"));
    let b = property_sparsity_and_zero_leak().unwrap_or_else(|e| panic!("[FAIL] 5b: {e}"));
    let c = property_logdet_finite_difference().unwrap_or_else(|e| panic!("[FAIL] 5c: {e}"));
    let d = property_compact_rescale_examples().unwrap_or_else(|e| panic!("[FAIL] 5d: {e}"));
    pass(
        "criterion 5 (flow correctness)",
        format!("(a) {a}; (b) {b}; (c) {c}; (d) {d}"),
    );
}

/// Criterion 6: estimator calibration on 2-D Gaussians, within 0.05 nats of
/// the analytic entropies, in under ten minutes.
#[test]
fn criterion_6_estimator_calibration() {
    let start = Instant::now();
    let dag = fansite_core::graph::Dag::new(2, []).unwrap();
    let cfg = FansConfig::defaults_for(2);

    let standard = simulate_linear_sem(
        &dag,
        &BTreeMap::new(),
        2000,
        &NoiseSpec::standard_gaussian(),
        600,
    )
    .unwrap();
    let mut model = FansModel::init(cfg, 601).unwrap();
    let tc = TrainConfig {
        epochs: 1500,
        ..TrainConfig::defaults_for(&cfg, 602)
    };
    train(&mut model, &standard, &tc).unwrap();
    let est = estimate_cond_entropy(&model, &standard, 0, &[1], 1000, 603).unwrap();
    let err_cond = (est.value - STD_NORMAL_ENTROPY).abs();
    assert!(
        err_cond < 0.05,
        "H(X0|X1) = {} vs {STD_NORMAL_ENTROPY}",
        est.value
    );

    let wide = simulate_linear_sem(
        &dag,
        &BTreeMap::new(),
        2000,
        &NoiseSpec::Gaussian { mean: 0.0, std: 2.0 },
        610,
    )
    .unwrap();
    let mut model2 = FansModel::init(cfg, 611).unwrap();
    let tc2 = TrainConfig {
        epochs: 1500,
        ..TrainConfig::defaults_for(&cfg, 612)
    };
    train(&mut model2, &wide, &tc2).unwrap();
    let est2 = estimate_cond_entropy(&model2, &wide, 0, &[], 1000, 613).unwrap();
    let target2 = STD_NORMAL_ENTROPY + 2.0f64.ln();
    let err_marg = (est2.value - target2).abs();
    assert!(err_marg < 0.05, "H(X0) = {} vs {target2}", est2.value);

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(600), "took {elapsed:?}");
    pass(
        "criterion 6 (estimator calibration)",
        format!(
            "|H(X0|X1) - {STD_NORMAL_ENTROPY:.5}| = {err_cond:.4}, |H(X0) - {target2:.5}| = {err_marg:.4} in {elapsed:.2?}"
        ),
    );
}

/// Criterion 7: bound verification on oracle runs at d=10 plus the
/// interlacing-vs-exact eigenvalue ordering on d<=8 correlation matrices.
#[test]
fn criterion_7_bound_verification() {
    let d = 10;
    for run in 0..10u64 {
        let dag = sample_er_dag(d, 1.0, 700 + run).unwrap();
        let weights = sample_sem_weights(&dag, 700 + run);
        let sigma = analytic_covariance(&dag, &weights, &vec![1.0; d]).unwrap();
        let cov = CovMatrix::new(sigma).unwrap();
        let scorer = GaussianScorer::from_covariance(cov.clone());
        let cfg = SearchConfig {
            eps_grow: 1e-6,
            eps_shrink: 1e-6,
            ..SearchConfig::sparse_defaults(d)
        };
        let results = discover_all(&scorer, &cfg, 1).unwrap();
        for target in 0..d {
            let truth: Vec<usize> = markov_boundary_of(&dag, target)
                .unwrap()
                .into_iter()
                .collect();
            let mb_plus: Vec<usize> = results[&target]
                .grow_trace
                .iter()
                .map(|&(v, _)| v)
                .collect();
            let report = build_report(
                &cov,
                target,
                &truth,
                &mb_plus,
                1000,
                1.0,
                0.01,
                EigMode::Exact,
            )
            .unwrap();
            let verdict = verify_bounds(&report);
            assert!(
                verdict.pass,
                "run {run} target {target} violated {:?}",
                verdict.violated
            );
        }
    }

    // Interlacing-mode lambda_min never exceeds exact mode.
    let mut rng = substream(77, "acc_bounds");
    for _ in 0..15 {
        let dd = rng.gen_range(4..=8usize);
        let a = Array2::from_shape_fn((dd, dd), |_| rng.gen_range(-1.0..1.0));
        let mut sigma = Array2::<f64>::zeros((dd, dd));
        for i in 0..dd {
            for j in 0..dd {
                let mut acc = 0.0;
                for k in 0..dd {
                    acc += a[(i, k)] * a[(j, k)];
                }
                sigma[(i, j)] = acc;
            }
        }
        for i in 0..dd {
            sigma[(i, i)] += 0.5;
        }
        let corr = CovMatrix::new(sigma).unwrap().to_correlation().unwrap();
        for k_plus in 1..=(dd / 2) {
            let (exact, _) = gauss_ratio_bound(&corr, k_plus, EigMode::Exact).unwrap();
            let (inter, _) = gauss_ratio_bound(&corr, k_plus, EigMode::Interlacing).unwrap();
            assert!(inter <= exact + 1e-10, "interlacing {inter} > exact {exact}");
        }
    }
    pass(
        "criterion 7 (bound verification)",
        "all clauses pass on 10 oracle runs; interlacing <= exact on d<=8".to_string(),
    );
}

fn read_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn run_pipeline(dir: &Path, workers: &str) {
    let run = |args: &[&str]| {
        let out = bin().args(args).output().expect("binary runs");
        assert!(
            out.status.success(),
            "command {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    let gen_dir = dir.join("gen");
    let model_dir = dir.join("model");
    let mb_dir = dir.join("mb");
    run(&[
        "generate",
        "--d",
        "5",
        "--degree",
        "1.2",
        "--sem",
        "gp",
        "--noise",
        "gaussian",
        "--n",
        "400",
        "--seed",
        "11",
        "--out",
        gen_dir.to_str().unwrap(),
    ]);
    let data = gen_dir.join("dataset.csv");
    run(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        model_dir.to_str().unwrap(),
        "--epochs",
        "80",
        "--m",
        "5",
        "--seed",
        "11",
    ]);
    run(&[
        "discover",
        "--data",
        data.to_str().unwrap(),
        "--scorer",
        "fans",
        "--checkpoint",
        model_dir.join("model.fans").to_str().unwrap(),
        "--k",
        "400",
        "--workers",
        workers,
        "--seed",
        "11",
        "--out",
        mb_dir.to_str().unwrap(),
    ]);
    run(&[
        "evaluate",
        "--mb",
        mb_dir.join("mb.json").to_str().unwrap(),
        "--truth",
        gen_dir.join("dag.csv").to_str().unwrap(),
        "--out",
        dir.join("metrics.csv").to_str().unwrap(),
    ]);
}

/// Criterion 8: the full pipeline is byte-identical across two runs with
/// the same seed and across worker counts 1 and 8.
#[test]
fn criterion_8_pipeline_determinism() {
    let root = tempfile::tempdir().unwrap();
    let a = root.path().join("a");
    let b = root.path().join("b");
    let c = root.path().join("c");
    run_pipeline(&a, "1");
    run_pipeline(&b, "1");
    run_pipeline(&c, "8");
    for rel in [
        "gen/dataset.csv",
        "gen/dag.csv",
        "gen/manifest.json",
        "model/model.fans",
        "model/loss_trace.csv",
        "mb/mb.json",
        "metrics.csv",
    ] {
        assert_eq!(
            read_bytes(&a.join(rel)),
            read_bytes(&b.join(rel)),
            "{rel} differs between identical runs"
        );
    }
    assert_eq!(
        read_bytes(&a.join("mb/mb.json")),
        read_bytes(&c.join("mb/mb.json")),
        "mb.json differs between worker counts 1 and 8"
    );
    pass(
        "criterion 8 (determinism)",
        "pipeline byte-identical across reruns and worker counts {1, 8}".to_string(),
    );
}

/// Criterion 9: the hand-computed ranking-metric examples, exact to 1e-9.
#[test]
fn criterion_9_metric_unit_suite() {
    let truth: BTreeSet<usize> = [1, 2].into_iter().collect();
    let ranked = [3usize, 1, 2];

    let ndcg_val = ndcg(&ranked, &truth).unwrap();
    let expected_ndcg = (1.0 / 3.0f64.log2() + 0.5) / (1.0 + 1.0 / 3.0f64.log2());
    assert!((ndcg_val - expected_ndcg).abs() <= 1e-9);
    assert!((ndcg_val - 0.69342).abs() < 1e-5);

    let avep_val = avep(&ranked, &truth).unwrap();
    let expected_avep = 0.5 * (0.5 + 2.0 / 3.0);
    assert!((avep_val - expected_avep).abs() <= 1e-9);
    assert!((avep_val - 0.58333).abs() < 1e-5);

    let predicted: BTreeSet<usize> = [1, 2, 3].into_iter().collect();
    let f1_val = f1(&predicted, &truth);
    assert!((f1_val - 0.8).abs() <= 1e-9);

    pass(
        "criterion 9 (metric unit suite)",
        format!("nDCG {ndcg_val:.5}, AveP {avep_val:.5}, F1 {f1_val:.1}"),
    );
}

/// The real GRN CSV loader path: evaluate joins prediction and truth by
/// name, so shuffled key order cannot change the metrics.
#[test]
fn evaluate_joins_by_name() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path();
    let run = |args: &[&str]| {
        let out = bin().args(args).output().expect("binary runs");
        assert!(out.status.success());
        String::from_utf8_lossy(&out.stdout).to_string()
    };
    run(&[
        "generate",
        "--d",
        "6",
        "--degree",
        "1.0",
        "--sem",
        "linear",
        "--n",
        "500",
        "--seed",
        "4",
        "--out",
        dir.join("g").to_str().unwrap(),
    ]);
    run(&[
        "discover",
        "--data",
        dir.join("g/dataset.csv").to_str().unwrap(),
        "--scorer",
        "gaussian",
        "--out",
        dir.join("m").to_str().unwrap(),
    ]);
    let table = run(&[
        "evaluate",
        "--mb",
        dir.join("m/mb.json").to_str().unwrap(),
        "--truth",
        dir.join("g/dag.csv").to_str().unwrap(),
    ]);
    // Shuffle the markov_boundaries key order in the JSON; metrics must not
    // change because the join is name-based.
    let path = dir.join("m/mb.json");
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let map = doc["markov_boundaries"].as_object().unwrap().clone();
    let mut shuffled = serde_json::Map::new();
    for (k, v) in map.iter().rev() {
        shuffled.insert(k.clone(), v.clone());
    }
    doc["markov_boundaries"] = serde_json::Value::Object(shuffled);
    std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    let table2 = run(&[
        "evaluate",
        "--mb",
        path.to_str().unwrap(),
        "--truth",
        dir.join("g/dag.csv").to_str().unwrap(),
    ]);
    assert_eq!(table, table2, "metrics changed under shuffled key order");
}
