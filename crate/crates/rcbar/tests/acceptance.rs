//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its runtime. Tolerances and sizes are frozen; seeds were fixed once after
//! the calibration pilot and are not tuned per run.

use std::time::{Duration, Instant};

use rcbar::estimate::{empirical_moment, estimate_theta, residuals};
use rcbar::model::{derive_moment_set, validate_hypotheses, InitialLaw, ModelSpec, PairLaw};
use rcbar::montecarlo::{
    frobenius_rel_err, run_clt_experiment, run_qsl_experiment, run_rate_experiment,
    ExperimentConfig, Mode,
};
use rcbar::rng::RngStream;
use rcbar::simulate::{replicate_seed, simulate_tree};
use rcbar::theory::s_moments;
use rcbar::tree::Tree;

fn gaussian(mean_x: f64, mean_y: f64, sd_x: f64, sd_y: f64, corr: f64) -> PairLaw {
    PairLaw::BivariateGaussian { mean_x, mean_y, sd_x, sd_y, corr }
}

/// Reference model: degenerate coefficients 1/2, unit uncorrelated Gaussian
/// noise with mean 1, constant root 1.
fn reference_spec() -> ModelSpec {
    ModelSpec {
        coeff_law: PairLaw::Degenerate { value_x: 0.5, value_y: 0.5 },
        noise_law: gaussian(1.0, 1.0, 1.0, 1.0, 0.0),
        initial: InitialLaw::Constant { value: 1.0 },
    }
}

/// Full random-coefficient model used by the second-order CLT criterion.
fn full_spec() -> ModelSpec {
    ModelSpec {
        coeff_law: gaussian(0.4, 0.4, 0.2, 0.2, 0.5),
        noise_law: gaussian(1.0, 1.0, 1.0, 1.0, 0.5),
        initial: InitialLaw::Constant { value: 1.0 },
    }
}

/// Seeded stream of random models that pass every hypothesis.
fn random_valid_specs(count: usize, seed: u64) -> Vec<ModelSpec> {
    let mut rng = RngStream::new(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let spec = ModelSpec {
            coeff_law: gaussian(
                -0.6 + 1.2 * rng.next_open01(),
                -0.6 + 1.2 * rng.next_open01(),
                0.25 * rng.next_open01(),
                0.25 * rng.next_open01(),
                -0.9 + 1.8 * rng.next_open01(),
            ),
            noise_law: gaussian(
                -1.0 + 2.0 * rng.next_open01(),
                -1.0 + 2.0 * rng.next_open01(),
                0.2 + 1.3 * rng.next_open01(),
                0.2 + 1.3 * rng.next_open01(),
                -0.9 + 1.8 * rng.next_open01(),
            ),
            initial: InitialLaw::Constant { value: 1.0 },
        };
        let m = derive_moment_set(&spec).unwrap();
        if validate_hypotheses(&m).theory_valid_for_clt {
            out.push(spec);
        }
    }
    out
}

fn report(criterion: &str, elapsed: Duration, detail: &str) {
    println!("acceptance {criterion}: PASS ({elapsed:.2?}) {detail}");
}

/// Criterion 1: the hand-solved two-generation tree is recovered exactly and
/// a single estimation call stays under a millisecond.
#[test]
fn criterion_1_exact_recovery_fixture() {
    let tree = Tree::from_values(vec![1.0, 1.5, 0.5, 2.0, 1.0, 1.0, 0.0]).unwrap();
    // warm up, then time the estimation call itself
    let theta = estimate_theta(&tree).unwrap();
    let calls = 100u32;
    let started = Instant::now();
    for _ in 0..calls {
        let theta = estimate_theta(&tree).unwrap();
        std::hint::black_box(residuals(&tree, &theta));
    }
    let per_call = started.elapsed() / calls;

    assert!((theta.a_hat - 1.0).abs() <= 1e-10, "a_hat = {}", theta.a_hat);
    assert!((theta.c_hat - 0.5).abs() <= 1e-10, "c_hat = {}", theta.c_hat);
    assert!((theta.b_hat - 1.0).abs() <= 1e-10, "b_hat = {}", theta.b_hat);
    assert!((theta.d_hat + 0.5).abs() <= 1e-10, "d_hat = {}", theta.d_hat);
    let res = residuals(&tree, &theta);
    for v in res.even.iter().chain(res.odd.iter()) {
        assert!(v.abs() <= 1e-10, "residual {v}");
    }
    assert!(per_call < Duration::from_millis(1), "estimation took {per_call:?}");
    report(
        "criterion 1 (exact recovery)",
        per_call,
        &format!(
            "theta_hat = ({}, {}, {}, {})",
            theta.a_hat, theta.c_hat, theta.b_hat, theta.d_hat
        ),
    );
}

/// Criterion 2: residuals of the least-squares fit are orthogonal to both
/// regressors on 100 simulated trees from random valid models.
#[test]
fn criterion_2_normal_equation_orthogonality() {
    let started = Instant::now();
    let specs = random_valid_specs(100, 0x5EED_0002);
    for (i, spec) in specs.iter().enumerate() {
        let tree = simulate_tree(spec, 8, replicate_seed(0x5EED_0002, i as u64)).unwrap();
        let theta = estimate_theta(&tree).unwrap();
        let res = residuals(&tree, &theta);
        let parents = tree.parent_count();
        let (mut vx, mut v1, mut wx, mut w1) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let (mut v2, mut w2, mut x2) = (0.0f64, 0.0f64, 0.0f64);
        for k in 1..=parents {
            let x = tree.value(k);
            vx += res.even[k - 1] * x;
            v1 += res.even[k - 1];
            wx += res.odd[k - 1] * x;
            w1 += res.odd[k - 1];
            v2 += res.even[k - 1] * res.even[k - 1];
            w2 += res.odd[k - 1] * res.odd[k - 1];
            x2 += x * x;
        }
        let m = parents as f64;
        // Cauchy-Schwarz scale of each inner product
        for (dot, scale) in [
            (vx, (v2 * x2).sqrt()),
            (v1, (v2 * m).sqrt()),
            (wx, (w2 * x2).sqrt()),
            (w1, (w2 * m).sqrt()),
        ] {
            assert!(
                dot.abs() <= 1e-10 * scale.max(1e-300),
                "model {i}: residual inner product {dot} at scale {scale}"
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    report("criterion 2 (residual orthogonality)", elapsed, "100 trees, n=8");
}

/// Criterion 3: the moment recursion yields s = (2, 16/3, 16, 160/3) for the
/// reference model and deep-tree averages agree within 5 Monte Carlo
/// standard errors over 20 seeds.
#[test]
fn criterion_3_moment_recursion_vs_tree_averages() {
    let started = Instant::now();
    let spec = reference_spec();
    let m = derive_moment_set(&spec).unwrap();
    let s = s_moments(&m, 4).unwrap();
    let expected = [2.0, 16.0 / 3.0, 16.0, 160.0 / 3.0];
    for p in 1..=4usize {
        assert!(
            (s[p - 1] - expected[p - 1]).abs() <= 1e-12,
            "s_{p} = {}, want {}",
            s[p - 1],
            expected[p - 1]
        );
    }

    let replicates = 20usize;
    let mut averages = vec![[0.0f64; 4]; replicates];
    for (r, avg) in averages.iter_mut().enumerate() {
        let tree = simulate_tree(&spec, 16, replicate_seed(0x5EED_0003, r as u64)).unwrap();
        assert_eq!(tree.node_count(), 131_071);
        for p in 1..=4usize {
            avg[p - 1] = empirical_moment(&tree, p).unwrap();
        }
    }
    let mut detail = String::new();
    for p in 1..=4usize {
        let vals: Vec<f64> = averages.iter().map(|a| a[p - 1]).collect();
        let mean = vals.iter().sum::<f64>() / replicates as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (replicates - 1) as f64;
        let se = (var / replicates as f64).sqrt();
        assert!(
            (mean - expected[p - 1]).abs() <= 5.0 * se,
            "p={p}: empirical {mean} vs {} (se {se})",
            expected[p - 1]
        );
        detail.push_str(&format!("s_{p} off by {:.2} se; ", (mean - expected[p - 1]).abs() / se));
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    report("criterion 3 (moment recursion vs tree averages)", elapsed, &detail);
}

/// Criterion 4: for 100 random valid models, L is symmetric, positive
/// definite, and equals the Kronecker reassembly built independently here.
#[test]
fn criterion_4_l_matrix_structure() {
    let started = Instant::now();
    // independent block-by-block Kronecker reassembly
    #[allow(clippy::needless_range_loop)]
    fn kron(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        out[2 * i + k][2 * j + l] = a[i][j] * b[k][l];
                    }
                }
            }
        }
        out
    }
    for (i, spec) in random_valid_specs(100, 0x5EED_0004).iter().enumerate() {
        let m = derive_moment_set(spec).unwrap();
        let lim = rcbar::theory::limit_matrices(&m).unwrap();
        let s = lim.s;
        let c = [[s[1], s[0]], [s[0], 1.0]];
        let d = [[s[3], s[2]], [s[2], s[1]]];
        let n_cd = [[m.sigma_c2, m.rho_cd], [m.rho_cd, m.sigma_d2]];
        let n_ab = [[m.sigma_a2, m.rho_ab], [m.rho_ab, m.sigma_b2]];
        let first = kron(n_cd, c);
        let second = kron(n_ab, d);
        let scale = lim.l.frobenius();
        for r in 0..4 {
            for col in 0..4 {
                assert_eq!(lim.l.0[r][col], lim.l.0[col][r], "model {i}: asymmetry");
                let want = first[r][col] + second[r][col];
                assert!(
                    (lim.l.0[r][col] - want).abs() <= 1e-12 * scale.max(1.0),
                    "model {i} entry ({r},{col}): {} vs {}",
                    lim.l.0[r][col],
                    want
                );
            }
        }
        assert!(lim.l.cholesky().is_some(), "model {i}: L failed Cholesky");
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    report("criterion 4 (L structure)", elapsed, "100 models");
}

/// Criterion 5: CLT for theta on the reference model at n=10, R=400. The
/// theoretical covariance is the hand-inverted I_2 (x) C^-1.
#[test]
fn criterion_5_clt_theta() {
    let started = Instant::now();
    let cfg = ExperimentConfig::new(reference_spec(), Mode::CltTheta, 10, 400, 0x5EED_0005);
    let rep = run_clt_experiment(&cfg).unwrap();

    // hand-computed covariance: C = [[16/3, 2], [2, 1]], det 4/3,
    // C^-1 = [[0.75, -1.5], [-1.5, 4]], duplicated on the diagonal blocks
    let c_inv = [[0.75, -1.5], [-1.5, 4.0]];
    let mut hand = vec![vec![0.0f64; 4]; 4];
    for b in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                hand[2 * b + i][2 * b + j] = c_inv[i][j];
            }
        }
    }
    for (i, hand_row) in hand.iter().enumerate() {
        for (j, want) in hand_row.iter().enumerate() {
            assert!(
                (rep.theoretical_cov[i][j] - want).abs() <= 1e-10,
                "theoretical covariance mismatch at ({i},{j})"
            );
        }
    }
    let frob = frobenius_rel_err(&rep.empirical_cov, &hand);
    assert!(frob <= 0.15, "Frobenius relative error {frob}");
    let ks_bound = 1.63 / (400.0f64).sqrt();
    assert!(
        rep.ks_distance_chi2 < ks_bound,
        "KS distance {} vs bound {ks_bound}",
        rep.ks_distance_chi2
    );
    assert!(rep.pass, "report did not self-report pass");
    assert_eq!(rep.failed_replicates, 0);
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    report(
        "criterion 5 (CLT theta)",
        elapsed,
        &format!("frob = {frob:.4} (tol 0.15), ks = {:.4} (crit {ks_bound:.4})", rep.ks_distance_chi2),
    );
}

/// Criterion 6: CLTs for eta, zeta and nu on the full random-coefficient
/// model at n=11, R=400, each within 20% Frobenius error.
#[test]
fn criterion_6_clt_second_order() {
    let started = Instant::now();
    let mut detail = String::new();
    for mode in [Mode::CltEta, Mode::CltZeta, Mode::CltNu] {
        let cfg = ExperimentConfig::new(full_spec(), mode, 11, 400, 0x5EED_0006);
        let rep = run_clt_experiment(&cfg).unwrap();
        assert!(
            rep.frobenius_rel_err <= 0.20,
            "{}: Frobenius relative error {}",
            mode.name(),
            rep.frobenius_rel_err
        );
        assert_eq!(rep.failed_replicates, 0);
        detail.push_str(&format!("{} frob = {:.4}; ", mode.name(), rep.frobenius_rel_err));
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(240), "took {elapsed:?}");
    report("criterion 6 (CLT eta/zeta/nu, tol 0.20)", elapsed, &detail);
}

/// Criterion 7: quadratic strong law on the reference model at n=14, R=100,
/// within 25% of the trace limit 92/107.
#[test]
fn criterion_7_quadratic_strong_law() {
    let started = Instant::now();
    let cfg = ExperimentConfig::new(reference_spec(), Mode::Qsl, 14, 100, 0x5EED_0001);
    let rep = run_qsl_experiment(&cfg).unwrap();
    // hand value of the trace limit for the reference model
    assert!(
        (rep.limit - 92.0 / 107.0).abs() <= 1e-12,
        "limit = {}, want 92/107",
        rep.limit
    );
    let rel = rep.final_rel_err.unwrap();
    assert!(rel <= 0.25, "relative error {rel}");
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(180), "took {elapsed:?}");
    report(
        "criterion 7 (quadratic strong law)",
        elapsed,
        &format!(
            "q_n = {:.4}, limit = {:.4}, rel err = {rel:.4} (tol 0.25)",
            rep.running_statistic.last().unwrap(),
            rep.limit
        ),
    );
}

/// Criterion 8: normalized squared errors show no growth between generations
/// 6 and 12 (factor <= 4) for all four estimators, over 50 replicates.
#[test]
fn criterion_8_rate_boundedness() {
    let started = Instant::now();
    let cfg = ExperimentConfig::new(reference_spec(), Mode::Rate, 12, 50, 0x5EED_0008);
    let rep = run_rate_experiment(&cfg).unwrap();
    let idx = |g: usize| rep.generations.iter().position(|&x| x == g).unwrap();
    let (i6, i12) = (idx(6), idx(12));
    let mut detail = String::new();
    for (name, series) in [
        ("theta", &rep.theta_median),
        ("eta", &rep.eta_median),
        ("zeta", &rep.zeta_median),
        ("nu", &rep.nu_median),
    ] {
        let ratio = series[i12] / series[i6];
        assert!(
            ratio <= 4.0,
            "{name}: generation-12 median {} vs generation-6 median {} (ratio {ratio})",
            series[i12],
            series[i6]
        );
        detail.push_str(&format!("{name} ratio = {ratio:.3}; "));
    }
    assert_eq!(rep.failed_replicates, 0);
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    report("criterion 8 (rate boundedness, factor <= 4)", elapsed, &detail);
}

/// Criterion 9: running any subcommand twice with the same arguments
/// produces byte-identical output files.
#[test]
fn criterion_9_byte_identical_reruns() {
    use std::process::Command;

    let started = Instant::now();
    let dir = std::env::temp_dir().join(format!("rcbar-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let config_path = dir.join("ref.json");
    std::fs::write(
        &config_path,
        serde_json::to_string_pretty(&reference_spec()).unwrap(),
    )
    .unwrap();

    let bin = env!("CARGO_BIN_EXE_rcbar");
    let run = |out: &str, extra: &[&str]| {
        let status = Command::new(bin)
            .current_dir(&dir)
            .args(extra)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "command failed: {}",
            String::from_utf8_lossy(&status.stderr)
        );
        std::fs::read(dir.join(out)).unwrap()
    };

    let sim_args = [
        "simulate", "--config", "ref.json", "--generations", "8", "--seed", "0x5EED",
    ];
    let first = run("tree_a.csv", &sim_args);
    let second = run("tree_b.csv", &sim_args);
    assert_eq!(first, second, "simulate outputs differ between reruns");

    let est_args = ["estimate", "--tree", "tree_a.csv"];
    let first = run("est_a.json", &est_args);
    let second = run("est_b.json", &est_args);
    assert_eq!(first, second, "estimate outputs differ between reruns");

    let theory_args = ["theory", "--config", "ref.json"];
    let first = run("limits_a.json", &theory_args);
    let second = run("limits_b.json", &theory_args);
    assert_eq!(first, second, "theory outputs differ between reruns");

    let mc_args = [
        "mc", "--config", "ref.json", "--mode", "clt_theta", "--generations", "6",
        "--replicates", "40", "--seed", "7",
    ];
    let first = run("mc_a.json", &mc_args);
    let second = run("mc_b.json", &mc_args);
    assert_eq!(first, second, "mc outputs differ between reruns");

    std::fs::remove_dir_all(&dir).ok();
    let elapsed = started.elapsed();
    report("criterion 9 (byte-identical reruns)", elapsed, "simulate/estimate/theory/mc");
}
