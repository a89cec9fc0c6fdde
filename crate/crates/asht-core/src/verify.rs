//! The verification suite behind `ashte verify`: cross-checks every
//! production path against its independent oracle on a reproducible fuzz
//! corpus and reports one pass/fail line per check.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::instance::{generate_synthetic, uniform_instance, GenMode, Instance};
use crate::oracles::{
    brute_force_odt, brute_force_sfr, exact_policy_cost, lp_closed_form, lp_lower_bound_check,
    LpInstance,
};
use crate::policy::baselines::{max_min_lp, nj_phase1_distribution, DEFAULT_KL_CAP_NATS};
use crate::policy::fa::noiseless_greedy_expected_cost;
use crate::policy::rnb::{build_plan, execute, RnbParams};
use crate::ranking::{gre_rank, min_marginal_epsilon_multi, CoverFunction};
use crate::rng;
use crate::simplex::{self, LinearProgram, Relop, SolveStatus};
use crate::{error::Result, family::OutcomeFamily};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, cases: usize, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed,
            cases,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub fuzz_seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

fn random_lp(rng: &mut rand_chacha::ChaCha8Rng, max_d: f64) -> LpInstance {
    let n = rng.gen_range(2..=16);
    let d: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..max_d)).collect();
    let t = rng.gen_range(0..=n);
    LpInstance::new(d, t).unwrap()
}

/// Closed form vs the dense simplex (and exact rational pivots on a
/// subset), 200 fuzzed instances.
pub fn check_lp_closed_form(seed: u64) -> CheckResult {
    let mut rng = rng::stream("verify-lp", seed);
    let cases = 200;
    for i in 0..cases {
        let lp = random_lp(&mut rng, 3.0);
        let closed = lp_closed_form(&lp);
        let program = lp.to_program();
        let sol = simplex::solve(&program);
        if sol.status != SolveStatus::Optimal || (closed - sol.objective).abs() > 1e-9 {
            return CheckResult::new(
                "lp_closed_form_vs_simplex",
                false,
                i + 1,
                format!(
                    "mismatch at case {i}: closed {closed} vs simplex {} ({:?})",
                    sol.objective, sol.status
                ),
            );
        }
        if i < 30 {
            let exact = simplex::solve_exact(&program);
            if (closed - exact.objective).abs() > 1e-9 {
                return CheckResult::new(
                    "lp_closed_form_vs_simplex",
                    false,
                    i + 1,
                    format!(
                        "rational mismatch at case {i}: {closed} vs {}",
                        exact.objective
                    ),
                );
            }
        }
    }
    CheckResult::new(
        "lp_closed_form_vs_simplex",
        true,
        cases,
        "closed form agrees with float and rational simplex within 1e-9",
    )
}

/// `LP* >= t min d_i`, 500 fuzzed instances with per-step mass at most 1.
pub fn check_lp_lower_bound(seed: u64) -> CheckResult {
    let mut rng = rng::stream("verify-lp-lb", seed);
    let cases = 500;
    for i in 0..cases {
        let lp = random_lp(&mut rng, 1.0);
        if !lp_lower_bound_check(&lp) {
            return CheckResult::new(
                "lp_lower_bound",
                false,
                i + 1,
                format!(
                    "violated at case {i}: LP* = {} < t*min = {}",
                    lp_closed_form(&lp),
                    lp.t() as f64 * lp.min_step()
                ),
            );
        }
    }
    // Uniform-d case returns exactly t.
    let uniform = LpInstance::new(vec![0.5; 5], 3).unwrap();
    if (lp_closed_form(&uniform) - 3.0).abs() > 1e-12 {
        return CheckResult::new("lp_lower_bound", false, cases, "uniform case != t");
    }
    CheckResult::new(
        "lp_lower_bound",
        true,
        cases + 1,
        "stopping-time lower bound holds on every fuzzed instance",
    )
}

fn random_small_instance(
    rng: &mut rand_chacha::ChaCha8Rng,
    max_h: usize,
    max_a: usize,
) -> Instance {
    loop {
        let nh = rng.gen_range(2..=max_h);
        let na = rng.gen_range(1..=max_a);
        let means: Vec<Vec<f64>> = (0..nh)
            .map(|_| {
                (0..na)
                    .map(|_| f64::from(rng.gen_range(1u32..8)) / 8.0)
                    .collect()
            })
            .collect();
        if let Ok(inst) = uniform_instance("fuzz", OutcomeFamily::bernoulli(), &means) {
            return inst;
        }
    }
}

/// Greedy weighted cover time vs exhaustive permutation search on ground
/// sets of size at most 6, plus the `O(log eps^-1)` regression guard.
pub fn check_sfr_greedy(seed: u64) -> CheckResult {
    let mut rng = rng::stream("verify-sfr", seed);
    let cases = 100;
    let mut worst_ratio = 1.0_f64;
    let mut i = 0;
    while i < cases {
        let inst = random_small_instance(&mut rng, 4, 3);
        let m = rng.gen_range(1..=2);
        let na = inst.num_actions();
        if m * na > 6 {
            continue;
        }
        // Saturation low enough that the multiset can cover every pair.
        let mut max_b = f64::INFINITY;
        for g in 0..inst.num_hypotheses() {
            for h in 0..inst.num_hypotheses() {
                if g == h {
                    continue;
                }
                let total: f64 = (0..na).map(|a| inst.divergence(g, h, a)).sum();
                max_b = max_b.min(total * m as f64);
            }
        }
        if !(max_b > 0.05) {
            continue;
        }
        let b = rng.gen_range(0.05..max_b.min(2.0));
        let counts = vec![m; na];
        let Ok((_, optimum)) = brute_force_sfr(&inst, b, &counts) else {
            continue;
        };
        let greedy = gre_rank(&inst, b, m);
        let Some(greedy_cost) = greedy.weighted_total_cover_time(&inst) else {
            return CheckResult::new(
                "sfr_greedy_vs_bruteforce",
                false,
                i + 1,
                "greedy failed to cover a coverable instance".to_string(),
            );
        };
        if greedy_cost < optimum - 1e-9 {
            return CheckResult::new(
                "sfr_greedy_vs_bruteforce",
                false,
                i + 1,
                format!("greedy {greedy_cost} beat the exhaustive optimum {optimum}"),
            );
        }
        let eps = match min_marginal_epsilon_multi(&inst, b, &counts) {
            Ok(e) => e,
            Err(_) => continue,
        };
        if optimum > 0.0 {
            let ratio = greedy_cost / optimum;
            let guard = 4.0 * (1.0 + (1.0 / eps).ln());
            if ratio > guard {
                return CheckResult::new(
                    "sfr_greedy_vs_bruteforce",
                    false,
                    i + 1,
                    format!("ratio {ratio} exceeded the guard {guard} (eps {eps})"),
                );
            }
            worst_ratio = worst_ratio.max(ratio);
        }
        i += 1;
    }
    CheckResult::new(
        "sfr_greedy_vs_bruteforce",
        true,
        cases,
        format!("greedy never beat the optimum; worst ratio {worst_ratio:.3}"),
    )
}

/// Noiseless greedy tree cost vs the subset-DP optimum on 50 fuzzed
/// instances, plus the analytic one-vs-rest case.
pub fn check_odt_greedy(seed: u64) -> CheckResult {
    let mut rng = rng::stream("verify-odt", seed);
    let cases = 50;
    let mut worst_ratio = 1.0_f64;
    for i in 0..cases {
        let inst = random_small_instance(&mut rng, 10, 6);
        let optimum = match brute_force_odt(&inst) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let greedy = match noiseless_greedy_expected_cost(&inst) {
            Ok(v) => v,
            Err(e) => {
                return CheckResult::new(
                    "odt_greedy_vs_dp",
                    false,
                    i + 1,
                    format!("greedy tree failed: {e}"),
                )
            }
        };
        if greedy < optimum - 1e-9 {
            return CheckResult::new(
                "odt_greedy_vs_dp",
                false,
                i + 1,
                format!("greedy {greedy} beat the DP optimum {optimum}"),
            );
        }
        let ratio = greedy / optimum;
        if ratio > 4.0 {
            return CheckResult::new(
                "odt_greedy_vs_dp",
                false,
                i + 1,
                format!("greedy/optimum = {ratio} exceeded 4"),
            );
        }
        worst_ratio = worst_ratio.max(ratio);
    }
    // One-vs-rest analytic case: n = 4 -> 2.25.
    let mut means = vec![vec![0.2; 4]; 4];
    for (i, row) in means.iter_mut().enumerate() {
        row[i] = 0.8;
    }
    let ovr = uniform_instance("ovr", OutcomeFamily::bernoulli(), &means).unwrap();
    let opt = brute_force_odt(&ovr).unwrap();
    if (opt - 2.25).abs() > 1e-12 {
        return CheckResult::new(
            "odt_greedy_vs_dp",
            false,
            cases,
            format!("one-vs-rest DP gave {opt}, expected 2.25"),
        );
    }
    CheckResult::new(
        "odt_greedy_vs_dp",
        true,
        cases + 1,
        format!("greedy within 4x of the DP everywhere; worst ratio {worst_ratio:.3}"),
    )
}

/// Monte-Carlo estimates vs exact enumeration for 20 small plans.
pub fn check_exact_vs_monte_carlo(seed: u64) -> CheckResult {
    let mut rng = rng::stream("verify-exact", seed);
    let mut done = 0;
    let target = 20;
    let trials = 4000_u64;
    let mut attempts = 0;
    while done < target {
        attempts += 1;
        if attempts > 500 {
            return CheckResult::new(
                "exact_vs_monte_carlo",
                false,
                done,
                "could not build enough small plans".to_string(),
            );
        }
        let inst = random_small_instance(&mut rng, 3, 2);
        let alpha = rng.gen_range(1..=2);
        let m = rng.gen_range(1..=2);
        let b = rng.gen_range(0.1..0.5);
        let params = RnbParams {
            b,
            alpha,
            delta: 0.25,
            multiplicity: m,
        };
        let Ok(plan) = build_plan(&inst, &params) else {
            continue;
        };
        if plan.boosted_len() > 14 {
            continue;
        }
        let stats = match exact_policy_cost(&inst, &plan) {
            Ok(s) => s,
            Err(_) => continue,
        };
        for h in 0..inst.num_hypotheses() {
            if (stats.leaf_prob_sum[h] - 1.0).abs() > 1e-12 {
                return CheckResult::new(
                    "exact_vs_monte_carlo",
                    false,
                    done,
                    format!("leaf probabilities sum to {}", stats.leaf_prob_sum[h]),
                );
            }
            // Monte-Carlo estimate under truth h.
            let mut cost_sum = 0.0;
            let mut cost_sq = 0.0;
            let mut errors = 0u64;
            let mut trial_rng = rng::stream("verify-exact-mc", seed ^ (done as u64) << 8 | h as u64);
            for _ in 0..trials {
                let run = execute(&plan, &inst, &mut |a| {
                    inst.sample_outcome(h, a, &mut trial_rng)
                });
                cost_sum += run.cost;
                cost_sq += run.cost * run.cost;
                errors += u64::from(run.output != h);
            }
            let n = trials as f64;
            let mean = cost_sum / n;
            let var = ((cost_sq - n * mean * mean) / (n - 1.0)).max(0.0);
            let se_cost = (var / n).sqrt();
            let tol_cost = 3.0 * se_cost + 1e-9;
            if (mean - stats.expected_cost[h]).abs() > tol_cost {
                return CheckResult::new(
                    "exact_vs_monte_carlo",
                    false,
                    done,
                    format!(
                        "cost estimate {mean} vs exact {} (tol {tol_cost})",
                        stats.expected_cost[h]
                    ),
                );
            }
            let p = stats.error[h];
            let se_err = (p * (1.0 - p) / n).sqrt();
            let emp_err = errors as f64 / n;
            if (emp_err - p).abs() > 3.0 * se_err + 1e-9 {
                return CheckResult::new(
                    "exact_vs_monte_carlo",
                    false,
                    done,
                    format!("error estimate {emp_err} vs exact {p}"),
                );
            }
        }
        done += 1;
    }
    CheckResult::new(
        "exact_vs_monte_carlo",
        true,
        target,
        "sampled cost and error within 3 standard errors of enumeration",
    )
}

/// Production max-min LP vs the full-row exact-rational simplex on 100
/// random alive sets.
pub fn check_nj_lp(seed: u64) -> CheckResult {
    let mut rng = rng::stream("verify-nj", seed);
    let cases = 100;
    let mut i = 0;
    while i < cases {
        let inst = random_small_instance(&mut rng, 6, 5);
        let nh = inst.num_hypotheses();
        let mut alive = vec![false; nh];
        let mut count = 0;
        for flag in alive.iter_mut() {
            *flag = rng.gen_bool(0.7);
            count += usize::from(*flag);
        }
        if count < 2 {
            continue;
        }
        let dist = match nj_phase1_distribution(&inst, &alive, DEFAULT_KL_CAP_NATS) {
            Ok(d) => d,
            Err(_) => continue,
        };
        // Full program, exact pivots.
        let na = inst.num_actions();
        let mut constraints = Vec::new();
        for g in 0..nh {
            for h in 0..nh {
                if g == h || !alive[g] || !alive[h] {
                    continue;
                }
                let mut row: Vec<f64> = (0..na)
                    .map(|a| inst.divergence(g, h, a).min(DEFAULT_KL_CAP_NATS))
                    .collect();
                row.push(-1.0);
                row.push(1.0);
                constraints.push((row, Relop::Ge, 0.0));
            }
        }
        let mut simplex_row = vec![1.0; na];
        simplex_row.push(0.0);
        simplex_row.push(0.0);
        constraints.push((simplex_row, Relop::Eq, 1.0));
        let mut objective = vec![0.0; na + 2];
        objective[na] = -1.0;
        objective[na + 1] = 1.0;
        let exact = simplex::solve_exact(&LinearProgram {
            objective,
            constraints,
        });
        if exact.status != SolveStatus::Optimal {
            continue;
        }
        let oracle_value = -exact.objective;
        if (dist.value - oracle_value).abs() > 1e-9 {
            return CheckResult::new(
                "nj_lp_vs_rational_simplex",
                false,
                i + 1,
                format!("value {} vs oracle {oracle_value}", dist.value),
            );
        }
        let mass: f64 = dist.lambda.iter().sum();
        if (mass - 1.0).abs() > 1e-9 || dist.lambda.iter().any(|l| *l < -1e-12) {
            return CheckResult::new(
                "nj_lp_vs_rational_simplex",
                false,
                i + 1,
                "lambda is not a distribution".to_string(),
            );
        }
        i += 1;
    }
    CheckResult::new(
        "nj_lp_vs_rational_simplex",
        true,
        cases,
        "cutting-plane solver matches exact rational pivoting within 1e-9",
    )
}

/// Monotonicity and submodularity of the coverage functions on random
/// (S subset of T, u) triples.
pub fn check_cover_function_laws(seed: u64) -> CheckResult {
    let mut rng = rng::stream("verify-cover", seed);
    let cases = 200;
    for i in 0..cases {
        let inst = random_small_instance(&mut rng, 5, 4);
        let b = rng.gen_range(0.1..3.0);
        let h = rng.gen_range(0..inst.num_hypotheses());
        let f = CoverFunction::new(&inst, h, b);
        let na = inst.num_actions();
        let mut small: Vec<usize> = Vec::new();
        let mut large: Vec<usize> = Vec::new();
        for _ in 0..rng.gen_range(0..5) {
            let a = rng.gen_range(0..na);
            small.push(a);
            large.push(a);
        }
        for _ in 0..rng.gen_range(0..4) {
            large.push(rng.gen_range(0..na));
        }
        let u = rng.gen_range(0..na);
        let fs = f.eval(&small);
        let ft = f.eval(&large);
        let mut small_u = small.clone();
        small_u.push(u);
        let mut large_u = large.clone();
        large_u.push(u);
        let gain_small = f.eval(&small_u) - fs;
        let gain_large = f.eval(&large_u) - ft;
        if ft < fs - 1e-12 || gain_small < gain_large - 1e-12 {
            return CheckResult::new(
                "cover_monotone_submodular",
                false,
                i + 1,
                format!("violation: f(S)={fs} f(T)={ft} gains {gain_small}/{gain_large}"),
            );
        }
    }
    CheckResult::new(
        "cover_monotone_submodular",
        true,
        cases,
        "monotone and submodular within 1e-12 on random triples",
    )
}

/// Negative control: perturb the closed form and confirm the comparator
/// actually reports a mismatch.
pub fn check_negative_control(seed: u64) -> CheckResult {
    let mut rng = rng::stream("verify-negative", seed);
    let lp = random_lp(&mut rng, 1.0);
    let closed = lp_closed_form(&lp) + 1e-6;
    let sol = simplex::solve(&lp.to_program());
    let detected = (closed - sol.objective).abs() > 1e-9;
    CheckResult::new(
        "negative_control",
        detected,
        1,
        if detected {
            "injected 1e-6 perturbation was detected"
        } else {
            "perturbation slipped through the comparator"
        },
    )
}

/// Synthetic generation determinism and the max-min LP hand case.
pub fn check_foundations(seed: u64) -> CheckResult {
    let a = generate_synthetic(5, 8, GenMode::Grid(8), seed).unwrap();
    let b = generate_synthetic(5, 8, GenMode::Grid(8), seed).unwrap();
    if a.to_json().unwrap() != b.to_json().unwrap() {
        return CheckResult::new("foundations", false, 1, "generation not deterministic");
    }
    let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
    let dist = max_min_lp(&rows).unwrap();
    let ok = (dist.value - 0.5).abs() < 1e-9 && (dist.lambda[0] - 0.5).abs() < 1e-9;
    CheckResult::new(
        "foundations",
        ok,
        2,
        if ok {
            "deterministic generation; symmetric max-min LP solved by hand value"
        } else {
            "symmetric max-min LP disagreed with the hand solution"
        },
    )
}

/// Run every check with substreams of `fuzz_seed`.
pub fn run_all(fuzz_seed: u64) -> Result<VerifyReport> {
    let checks = vec![
        check_lp_closed_form(fuzz_seed),
        check_lp_lower_bound(fuzz_seed),
        check_sfr_greedy(fuzz_seed),
        check_odt_greedy(fuzz_seed),
        check_exact_vs_monte_carlo(fuzz_seed),
        check_nj_lp(fuzz_seed),
        check_cover_function_laws(fuzz_seed),
        check_negative_control(fuzz_seed),
        check_foundations(fuzz_seed),
    ];
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        fuzz_seed,
        passed,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_checks_pass() {
        assert!(check_lp_closed_form(1).passed);
        assert!(check_lp_lower_bound(1).passed);
    }

    #[test]
    fn cover_laws_pass() {
        assert!(check_cover_function_laws(1).passed);
    }

    #[test]
    fn negative_control_detects_perturbations() {
        assert!(check_negative_control(1).passed);
    }

    #[test]
    fn report_is_reproducible() {
        let a = check_lp_closed_form(7);
        let b = check_lp_closed_form(7);
        assert_eq!(a.detail, b.detail);
    }
}
