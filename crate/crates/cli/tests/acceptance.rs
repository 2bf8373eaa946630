//! End-to-end verification of the package's headline numerical claims.
//!
//! Each test prints one verdict line of the form
//! `[acceptance] criterion <id> PASS|FAIL: <detail>` and then asserts the
//! verdict, so a red criterion fails its test with the measured numbers
//! in the detail. Criterion 7b is expected to stay red: the exact abort
//! probability of the all-equal device at the stated size is 0.98633,
//! below the 0.99 target; the assertion is kept honest rather than
//! loosened to pass.

use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use randamp::attacks::{feasibility_threshold, DesignatedPairAttack};
use randamp::bounds::{amplification_bound, batch_random_check, select_r};
use randamp::certify::{
    all_equal_device, estimate_abort_rate, exponent_sign_change, violation_trend, ProtocolParams,
    Scenario,
};
use randamp::chained::{
    chained_value, classical_min_chained, quantum_chained_box, quantum_closed_form,
    ChainedSettings,
};
use randamp::dist::is_no_signalling;
use randamp::ghz::{
    detection_monte_carlo, detection_probability_lower_bound, deterministic_party_box,
    max_classical_satisfiable, relations, sample_ghz_outcomes,
    worst_case_detection_exact,
};
use randamp::sources::{inner_product_extractor_demo, BiasRule, SvSourceModel};

fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!(
        "[acceptance] criterion {criterion} {}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

#[test]
fn criterion_01_quantum_chained_value() {
    let mut max_diff = 0.0f64;
    let mut n2_value = 0.0;
    for n in [2usize, 4, 8, 16, 32, 64] {
        let settings = ChainedSettings::new(n).unwrap();
        let b = quantum_chained_box(&settings).unwrap();
        let value = chained_value(&settings, &b).unwrap();
        max_diff = max_diff.max((value - quantum_closed_form(n)).abs());
        if n == 2 {
            n2_value = value;
        }
    }
    let n2_ok = (n2_value - (2.0 - 2.0f64.sqrt())).abs() < 1e-9;
    verdict(
        "1",
        max_diff < 1e-9 && n2_ok,
        &format!("max |value - closed form| = {max_diff:.3e} over n in 2..64, n=2 value {n2_value:.9}"),
    );
}

#[test]
fn criterion_02_classical_minimum() {
    let mut minima = Vec::new();
    for n in 2..=6usize {
        let (min, witness) = classical_min_chained(n).unwrap();
        let settings = ChainedSettings::new(n).unwrap();
        assert_eq!(witness.chained_score(&settings), min);
        minima.push(min);
    }
    verdict(
        "2",
        minima.iter().all(|&m| m == 1),
        &format!("exhaustive minima for n = 2..6: {minima:?}"),
    );
}

#[test]
fn criterion_03_freedom_bound_property_suite() {
    let mut families = 0usize;
    let mut violations = 0usize;
    let mut min_margin = f64::INFINITY;
    for n in [2usize, 3] {
        let batch = batch_random_check(n, 500, 3, 2024 + n as u64).unwrap();
        families += batch.len();
        for reports in &batch {
            for rep in reports {
                min_margin = min_margin.min(rep.margin);
                if rep.lhs > rep.rhs + 1e-9 {
                    violations += 1;
                }
            }
        }
    }
    verdict(
        "3",
        families == 1000 && violations == 0,
        &format!("{families} random families, {violations} bound violations, worst margin {min_margin:.3e}"),
    );
}

#[test]
fn criterion_04_amplification_threshold_bracketing() {
    let below: Vec<f64> = (1..=12)
        .map(|r| amplification_bound(0.08, r).unwrap().closed)
        .collect();
    let above: Vec<f64> = (1..=12)
        .map(|r| amplification_bound(0.09, r).unwrap().closed)
        .collect();
    let decreasing = below.windows(2).all(|w| w[1] < w[0]);
    let increasing = above.windows(2).all(|w| w[1] > w[0]);
    let r = select_r(0.0, 0.01).unwrap();
    verdict(
        "4",
        decreasing && increasing && r == 6,
        &format!(
            "closed bound decreasing at epsilon=0.08: {decreasing}, increasing at 0.09: {increasing}, select_r(0, 0.01) = {r}"
        ),
    );
}

#[test]
fn criterion_05_attack_value_and_threshold() {
    let attack = DesignatedPairAttack::build(2, 0.1).unwrap();
    let est = attack.estimate_observed_i(100_000, &mut rng(424242)).unwrap();
    let idealized = 0.4096;
    let within = (est.value - idealized).abs() <= 3.0 * est.sigma;
    let threshold = feasibility_threshold(40).unwrap();
    let threshold_ok = (threshold - 0.1464).abs() <= 1e-3;
    verdict(
        "5",
        within && threshold_ok,
        &format!(
            "observed {0:.6} vs {idealized} (sigma {1:.6}), threshold(40) = {threshold:.6}",
            est.value, est.sigma
        ),
    );
}

#[test]
fn criterion_06_exponent_sign_change() {
    let root = exponent_sign_change(0.001, 0.1).unwrap();
    verdict(
        "6",
        (root - 0.0158).abs() <= 1e-3,
        &format!("sign change at epsilon = {root:.6}"),
    );
}

#[test]
fn criterion_07a_honest_violation_trend() {
    let rows = violation_trend(&[4, 8, 16], 2000, 777).unwrap();
    let means: Vec<f64> = rows.iter().map(|r| r.mean_violations).collect();
    let decreasing = means[1] < means[0] && means[2] < means[1];
    let target = 0.5f64.sqrt();
    let r1 = means[1] / means[0];
    let r2 = means[2] / means[1];
    // Ratio error at 2000 runs per size is about 0.03; a +-0.1 window is
    // a three-sigma test of the inverse-square-root trend.
    let trend = (r1 - target).abs() < 0.1 && (r2 - target).abs() < 0.1;
    verdict(
        "7a",
        decreasing && trend,
        &format!(
            "mean violations {means:?}, ratios {r1:.4}/{r2:.4} vs {target:.4}"
        ),
    );
}

#[test]
fn criterion_07b_all_equal_abort_probability() {
    let params = ProtocolParams::defaults(4).unwrap();
    assert_eq!(params.m(), 32);
    let device = all_equal_device(4).unwrap();
    let scenario = Scenario::Fixed {
        w: 0,
        source: SvSourceModel::new(0.0, BiasRule::Unbiased).unwrap(),
    };
    // The exact abort probability is 0.9863283807: accepting requires the
    // kept count to land in the 8..=11 window with zero wrap-edge rounds,
    // which has probability sum_{k=8}^{11} C(32,k) (7/16)^k (1/2)^(32-k)
    // = 0.0136716. No window convention reaches 0.99 (widest reading
    // gives 0.9872), so the 0.99 target is unattainable and this
    // criterion is expected to stay red. 20000 trials put the target
    // 14 sigma above the true rate so the verdict cannot flip on seed
    // luck (at 1000 trials roughly one seed in five lands above 0.99).
    let est = estimate_abort_rate(&params, &device, &scenario, 20_000, 999).unwrap();
    verdict(
        "7b",
        est.rate >= 0.99,
        &format!(
            "measured abort rate {:.5} (95% CI {:.5}..{:.5}) vs target 0.99; exact value 0.986328",
            est.rate, est.wilson_low, est.wilson_high
        ),
    );
}

#[test]
fn criterion_08_ghz_suite() {
    let (best, _) = max_classical_satisfiable(3).unwrap();
    let classical_ok = best == 3;

    let rels = relations(3).unwrap();
    let mut sampler_failures = 0usize;
    let mut r = rng(8088);
    for round in 0..100_000 {
        let rel = &rels[round % rels.len()];
        let outcomes = sample_ghz_outcomes(&rel.pattern, &mut r).unwrap();
        let product: i32 = outcomes.iter().product();
        sampler_failures += usize::from(product != rel.parity);
    }

    let mut box_ok = true;
    let mut worst_ns = 0.0f64;
    for party in 0..3 {
        for &(out0, out1) in &[(1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let b = deterministic_party_box(party, out0, out1).unwrap();
            let (ok, violation) = is_no_signalling(&b, 1e-12).unwrap();
            worst_ns = worst_ns.max(violation);
            box_ok &= ok;
            for rel in &rels {
                let inputs: Vec<u32> = rel.pattern.iter().map(|&c| u32::from(c)).collect();
                let mut satisfied = 0.0;
                for outputs in b.joint_outputs() {
                    let product: i32 = outputs.iter().product();
                    if product == rel.parity {
                        satisfied += b.prob(&inputs, &outputs).unwrap();
                    }
                }
                box_ok &= (satisfied - 1.0).abs() < 1e-12;
            }
        }
    }

    let mut detection_ok = true;
    let mut detection_detail = String::new();
    for &epsilon in &[0.0, 0.2, 0.4] {
        let bound = detection_probability_lower_bound(epsilon).unwrap();
        let (_, witness) = worst_case_detection_exact(epsilon).unwrap();
        let trials = 100_000;
        let empirical = detection_monte_carlo(&witness, epsilon, trials, &mut r).unwrap();
        let sigma = (bound * (1.0 - bound) / trials as f64).sqrt();
        detection_ok &= empirical >= bound - 3.0 * sigma;
        detection_detail.push_str(&format!(" {empirical:.5}>={bound:.5}-3s"));
    }

    verdict(
        "8",
        classical_ok && sampler_failures == 0 && box_ok && detection_ok,
        &format!(
            "classical max {best}/4, sampler failures {sampler_failures}/1e5, box no-signalling worst {worst_ns:.2e}, detection{detection_detail}"
        ),
    );
}

#[test]
fn criterion_09_extractor_demonstration() {
    let rep = inner_product_extractor_demo(0.1, 64, 100_000, &mut rng(5150)).unwrap();
    verdict(
        "9",
        rep.independent_deficit < 0.01 && rep.correlated_deficit > 0.03,
        &format!(
            "independent deficit {:.5} (< 0.01), correlated deficit {:.5} (> 0.03)",
            rep.independent_deficit, rep.correlated_deficit
        ),
    );
}

#[test]
fn criterion_10_cli_determinism() {
    let bin = env!("CARGO_BIN_EXE_randamp");
    let dir = std::env::temp_dir().join(format!("randamp-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cases: &[&[&str]] = &[
        &["certify", "run", "--N", "4", "--epsilon", "0.01", "--device", "honest", "--trials", "50", "--seed", "42"],
        &["certify", "run", "--N", "4", "--device", "attack", "--epsilon", "0.1", "--trials", "50", "--seed", "42", "--format", "json"],
        &["bounds", "check", "--instances", "20", "--N", "2", "--seed", "7"],
        &["ghz", "detect", "--epsilon", "0.4", "--trials", "2000", "--seed", "3"],
    ];
    let mut all_identical = true;
    for (i, args) in cases.iter().enumerate() {
        let mut bodies = Vec::new();
        for pass in 0..2 {
            let path = dir.join(format!("case{i}-pass{pass}.out"));
            let status = Command::new(bin)
                .args(*args)
                .arg("--out")
                .arg(&path)
                .status()
                .unwrap();
            assert!(status.success(), "case {i} pass {pass} exited {status}");
            bodies.push(std::fs::read(&path).unwrap());
            assert!(!bodies[pass].is_empty());
        }
        all_identical &= bodies[0] == bodies[1];
    }
    std::fs::remove_dir_all(&dir).ok();
    verdict(
        "10",
        all_identical,
        &format!("{} commands re-run with fixed seeds, all byte-identical", cases.len()),
    );
}
