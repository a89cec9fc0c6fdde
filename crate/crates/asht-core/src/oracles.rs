//! Independent brute-force and closed-form references.
//!
//! Everything here exists to check the production paths from a second
//! angle: exhaustive enumeration, subset DP, exact rational pivoting, and
//! the two-point closed form of the stopping-time LP relaxation.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::policy::rnb::RnbPlan;
use crate::ranking::{cover_time, CoverFunction, CoverTime};
use crate::simplex::{LinearProgram, Relop};

// ----------------------------------------------------------------------
// The stopping-time LP relaxation
// ----------------------------------------------------------------------

/// `LP(d, t): min sum_i i*z_i  s.t.  sum_i d^i z_i >= d^t, z in simplex`,
/// where `d^i` are prefix sums of strictly positive `d_i`.
#[derive(Clone, Debug)]
pub struct LpInstance {
    d: Vec<f64>,
    t: usize,
    prefix: Vec<f64>,
}

impl LpInstance {
    pub fn new(d: Vec<f64>, t: usize) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::InvalidParameter {
                name: "d",
                reason: "need at least one step".into(),
            });
        }
        if d.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "d",
                reason: "entries must be strictly positive and finite".into(),
            });
        }
        if t > d.len() {
            return Err(Error::InvalidParameter {
                name: "t",
                reason: format!("t = {t} exceeds N = {}", d.len()),
            });
        }
        let mut prefix = Vec::with_capacity(d.len());
        let mut acc = 0.0;
        for x in &d {
            acc += x;
            prefix.push(acc);
        }
        Ok(LpInstance { d, t, prefix })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn min_step(&self) -> f64 {
        self.d.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn prefix_sum(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.prefix[i - 1]
        }
    }

    /// The equivalent explicit linear program, for the simplex oracle.
    pub fn to_program(&self) -> LinearProgram<f64> {
        let n = self.len();
        let objective: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let constraints = vec![
            (
                (1..=n).map(|i| self.prefix_sum(i)).collect(),
                Relop::Ge,
                self.prefix_sum(self.t),
            ),
            (vec![1.0; n], Relop::Eq, 1.0),
        ];
        LinearProgram {
            objective,
            constraints,
        }
    }
}

/// Two-point closed form of the LP optimum:
/// `LP* = min over i <= t < j of i + (j-i) (d^t - d^i) / (d^j - d^i)`.
/// Degenerate ends: `t = 0` relaxes the constraint entirely (optimum 1, the
/// cheapest simplex vertex) and `t = N` pins all mass on `z_N`.
pub fn lp_closed_form(lp: &LpInstance) -> f64 {
    let n = lp.len();
    let t = lp.t;
    if t == 0 {
        return 1.0;
    }
    if t == n {
        return n as f64;
    }
    let dt = lp.prefix_sum(t);
    let mut best = f64::INFINITY;
    for i in 1..=t {
        let di = lp.prefix_sum(i);
        for j in (t + 1)..=n {
            let dj = lp.prefix_sum(j);
            let value = i as f64 + (j - i) as f64 * (dt - di) / (dj - di);
            best = best.min(value);
        }
    }
    best
}

/// `LP*(d, t) >= t * min_i d_i`; holds whenever every `d_i <= 1` (the
/// regime the stopping-time argument uses, where each `d_i` is bounded by
/// the saturation budget per step).
pub fn lp_lower_bound_check(lp: &LpInstance) -> bool {
    lp_closed_form(lp) >= lp.t as f64 * lp.min_step() - 1e-12
}

// ----------------------------------------------------------------------
// Exhaustive SFR
// ----------------------------------------------------------------------

const SFR_GUARD: usize = 8;

/// Exhaustive search over all orderings of the duplicated ground set
/// (`counts[a]` copies of action `a`): the minimum prior-weighted total
/// cover time and one optimal sequence (lexicographically smallest).
pub fn brute_force_sfr(inst: &Instance, b: f64, counts: &[usize]) -> Result<(Vec<usize>, f64)> {
    assert_eq!(counts.len(), inst.num_actions());
    let total: usize = counts.iter().sum();
    if total > SFR_GUARD {
        return Err(Error::OracleGuard {
            what: "duplicated ground-set size",
            size: total,
            limit: SFR_GUARD,
        });
    }
    let nh = inst.num_hypotheses();
    let functions: Vec<CoverFunction<'_>> =
        (0..nh).map(|h| CoverFunction::new(inst, h, b)).collect();

    // Feasibility under the full multiset.
    let full: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(a, &c)| std::iter::repeat(a).take(c))
        .collect();
    for f in &functions {
        if matches!(cover_time(f, &full), CoverTime::Infeasible) {
            return Err(Error::Uncovered(vec![
                inst.hypotheses()[f.hypothesis()].clone()
            ]));
        }
    }

    let mut remaining = counts.to_vec();
    let mut sequence = Vec::with_capacity(total);
    let mut best: Option<(Vec<usize>, f64)> = None;
    fn recurse(
        inst: &Instance,
        functions: &[CoverFunction<'_>],
        remaining: &mut Vec<usize>,
        sequence: &mut Vec<usize>,
        total: usize,
        best: &mut Option<(Vec<usize>, f64)>,
    ) {
        if sequence.len() == total {
            let mut weighted = 0.0;
            for f in functions {
                let ct = match cover_time(f, sequence) {
                    CoverTime::Covered(t) => t,
                    CoverTime::Infeasible => unreachable!("feasibility pre-checked"),
                };
                weighted += inst.prior()[f.hypothesis()] * ct as f64;
            }
            let replace = match best {
                None => true,
                Some((seq, cost)) => {
                    weighted < *cost - 1e-15
                        || ((weighted - *cost).abs() <= 1e-15 && sequence < seq)
                }
            };
            if replace {
                *best = Some((sequence.clone(), weighted));
            }
            return;
        }
        for a in 0..remaining.len() {
            if remaining[a] == 0 {
                continue;
            }
            remaining[a] -= 1;
            sequence.push(a);
            recurse(inst, functions, remaining, sequence, total, best);
            sequence.pop();
            remaining[a] += 1;
        }
    }
    recurse(
        inst,
        &functions,
        &mut remaining,
        &mut sequence,
        total,
        &mut best,
    );
    best.ok_or_else(|| Error::Numerical("empty ground set".into()))
}

// ----------------------------------------------------------------------
// Optimal decision tree DP
// ----------------------------------------------------------------------

const ODT_GUARD: usize = 12;

/// Exact minimum expected cost of identifying the truth with the noiseless
/// tests `T_a(h) = mu(h,a)` at cost `c(a)`, via memoized recursion over
/// alive subsets. Conditional priors renormalize inside each subset.
pub fn brute_force_odt(inst: &Instance) -> Result<f64> {
    let nh = inst.num_hypotheses();
    if nh > ODT_GUARD {
        return Err(Error::OracleGuard {
            what: "|H|",
            size: nh,
            limit: ODT_GUARD,
        });
    }
    let full = (1u32 << nh) - 1;
    let mut memo = HashMap::new();
    brute_force_odt_subset(inst, full, &mut memo)
}

/// DP over one alive subset (bitmask); exposed for the subset-monotonicity
/// invariant.
pub fn brute_force_odt_subset(
    inst: &Instance,
    mask: u32,
    memo: &mut HashMap<u32, f64>,
) -> Result<f64> {
    if mask.count_ones() <= 1 {
        return Ok(0.0);
    }
    if let Some(&v) = memo.get(&mask) {
        return Ok(v);
    }
    let nh = inst.num_hypotheses();
    let alive: Vec<usize> = (0..nh).filter(|&h| mask & (1 << h) != 0).collect();
    let mass: f64 = alive.iter().map(|&h| inst.prior()[h]).sum();
    if mass <= 0.0 {
        return Err(Error::Numerical(
            "alive subset carries no prior mass".into(),
        ));
    }
    let mut best = f64::INFINITY;
    for a in 0..inst.num_actions() {
        // Branch the subset by outcome value.
        let mut branches: Vec<(f64, u32)> = Vec::new();
        for &h in &alive {
            let omega = inst.mean(h, a);
            match branches.iter_mut().find(|(v, _)| *v == omega) {
                Some((_, m)) => *m |= 1 << h,
                None => branches.push((omega, 1 << h)),
            }
        }
        if branches.len() < 2 {
            continue; // does not split this subset
        }
        let mut expected = inst.cost(a);
        for &(_, sub) in &branches {
            let sub_mass: f64 = (0..nh)
                .filter(|&h| sub & (1 << h) != 0)
                .map(|h| inst.prior()[h])
                .sum();
            expected += sub_mass / mass * brute_force_odt_subset(inst, sub, memo)?;
        }
        best = best.min(expected);
    }
    if best.is_infinite() {
        return Err(Error::Indistinguishable {
            g: inst.hypotheses()[alive[0]].clone(),
            h: inst.hypotheses()[alive[1]].clone(),
        });
    }
    memo.insert(mask, best);
    Ok(best)
}

// ----------------------------------------------------------------------
// Exact expectation of a Rank-and-Boost plan
// ----------------------------------------------------------------------

const EXACT_PLAN_GUARD: usize = 22;

/// Exact per-hypothesis expectations of a (non-cyclic) plan on a Bernoulli
/// instance, by enumerating every outcome string and replaying the
/// timestamp stopping rule.
#[derive(Clone, Debug)]
pub struct ExactPlanStats {
    pub expected_cost: Vec<f64>,
    pub error: Vec<f64>,
    /// Total enumerated leaf probability per hypothesis; 1 up to float
    /// error by construction.
    pub leaf_prob_sum: Vec<f64>,
}

pub fn exact_policy_cost(inst: &Instance, plan: &RnbPlan) -> Result<ExactPlanStats> {
    if !inst.family().is_bernoulli() {
        return Err(Error::InvalidParameter {
            name: "family",
            reason: "exact enumeration supports Bernoulli outcomes only".into(),
        });
    }
    if plan.cyclic {
        return Err(Error::InvalidParameter {
            name: "plan",
            reason: "exact enumeration requires the finite theory plan".into(),
        });
    }
    let len = plan.boosted_len();
    if len > EXACT_PLAN_GUARD {
        return Err(Error::OracleGuard {
            what: "boosted plan length",
            size: len,
            limit: EXACT_PLAN_GUARD,
        });
    }
    let nh = inst.num_hypotheses();
    let threshold = f64::from(plan.alpha) * plan.b / 2.0;
    let actions: Vec<usize> = (1..=len).map(|t| plan.action_at(t)).collect();
    let mut prefix_cost = vec![0.0; len + 1];
    for t in 1..=len {
        prefix_cost[t] = prefix_cost[t - 1] + inst.cost(actions[t - 1]);
    }
    // Timestamps grouped by step, hypotheses ascending.
    let mut at_step: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(t, h) in &plan.timestamps {
        at_step.entry(t).or_default().push(h);
    }

    let mut stats = ExactPlanStats {
        expected_cost: vec![0.0; nh],
        error: vec![0.0; nh],
        leaf_prob_sum: vec![0.0; nh],
    };
    if nh == 1 {
        stats.leaf_prob_sum[0] = 1.0;
        return Ok(stats);
    }

    struct Frame {
        t: usize,
        log_lik: Vec<f64>,
        path_prob: Vec<f64>,
    }
    let mut stack = vec![Frame {
        t: 0,
        log_lik: vec![0.0; nh],
        path_prob: vec![1.0; nh],
    }];
    let leaf = |stats: &mut ExactPlanStats, output: usize, t: usize, path_prob: &[f64]| {
        for h in 0..nh {
            stats.expected_cost[h] += path_prob[h] * prefix_cost[t];
            stats.leaf_prob_sum[h] += path_prob[h];
            if output != h {
                stats.error[h] += path_prob[h];
            }
        }
    };
    while let Some(frame) = stack.pop() {
        if frame.t == len {
            // Exhausted scan: maximum posterior, ties to the lowest index.
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for h in 0..nh {
                let score = inst.prior()[h].ln() + frame.log_lik[h];
                if score > best_score {
                    best_score = score;
                    best = h;
                }
            }
            leaf(&mut stats, best, len, &frame.path_prob);
            continue;
        }
        let t = frame.t + 1;
        let a = actions[frame.t];
        for y in [0.0, 1.0] {
            let mut log_lik = frame.log_lik.clone();
            let mut path_prob = frame.path_prob.clone();
            for h in 0..nh {
                let theta = inst.mean(h, a);
                log_lik[h] += inst.log_density(h, a, y);
                path_prob[h] *= if y >= 0.5 { theta } else { 1.0 - theta };
            }
            let mut stopped = None;
            if let Some(hs) = at_step.get(&t) {
                for &h in hs {
                    let min_llr = (0..nh)
                        .filter(|g| *g != h)
                        .map(|g| log_lik[h] - log_lik[g])
                        .fold(f64::INFINITY, f64::min);
                    if min_llr >= threshold {
                        stopped = Some(h);
                        break;
                    }
                }
            }
            match stopped {
                Some(h) => leaf(&mut stats, h, t, &path_prob),
                None => stack.push(Frame {
                    t,
                    log_lik,
                    path_prob,
                }),
            }
        }
    }
    for h in 0..nh {
        stats.error[h] /= stats.leaf_prob_sum[h];
    }
    Ok(stats)
}
