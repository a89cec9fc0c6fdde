//! Rank-and-Boost: a greedy-ranked action sequence, boosted by an integer
//! intensity, scanned with likelihood-ratio checks at per-hypothesis
//! timestamps. The experiment variant ranks with replacement, truncates at
//! the last first-occurrence, and stops on a posterior threshold instead.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::ranking::{self, RankedSequence};

/// Parameters of the theory policy.
#[derive(Clone, Copy, Debug)]
pub struct RnbParams {
    /// Coverage saturation level B > 0, at most ln(1/delta)/2.
    pub b: f64,
    /// Boosting intensity (rounded up to an integer).
    pub alpha: u32,
    /// Target error in (0, 1/4].
    pub delta: f64,
    /// Copies of each action in the duplicated ground set.
    pub multiplicity: usize,
}

impl RnbParams {
    /// `alpha = ceil(1 + ln|H|/ln(1/delta))`, `B = ln(1/delta)/2`, and the
    /// default multiplicity `ceil(s^-1 |H|^2 ln(|H|/delta))`.
    pub fn derived_defaults(inst: &Instance, delta: f64) -> Result<Self> {
        validate_delta(delta)?;
        let nh = inst.num_hypotheses() as f64;
        let log_inv_delta = (1.0 / delta).ln();
        let alpha = (1.0 + nh.ln() / log_inv_delta).ceil() as u32;
        let b = 0.5 * log_inv_delta;
        let multiplicity = ranking::default_multiplicity(inst, delta)?;
        Ok(RnbParams {
            b,
            alpha: alpha.max(1),
            delta,
            multiplicity,
        })
    }

    pub fn validate(&self) -> Result<()> {
        validate_delta(self.delta)?;
        if !(self.b > 0.0) {
            return Err(Error::InvalidParameter {
                name: "b",
                reason: "saturation level must be positive".into(),
            });
        }
        let cap = 0.5 * (1.0 / self.delta).ln();
        if self.b > cap + 1e-12 {
            return Err(Error::InvalidParameter {
                name: "b",
                reason: format!("B = {} exceeds ln(1/delta)/2 = {cap}", self.b),
            });
        }
        if self.alpha < 1 {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: "boosting intensity must be at least 1".into(),
            });
        }
        if self.multiplicity == 0 {
            return Err(Error::InvalidParameter {
                name: "multiplicity",
                reason: "need at least one copy per action".into(),
            });
        }
        Ok(())
    }
}

fn validate_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 0.25) {
        return Err(Error::InvalidParameter {
            name: "delta",
            reason: format!("delta = {delta} outside (0, 1/4]"),
        });
    }
    Ok(())
}

/// A built plan: the ranked sequence, its boosting intensity, and the
/// timestamps `tau(h) = alpha * CT(f_h, sigma)` at which each hypothesis is
/// checked.
#[derive(Clone, Debug)]
pub struct RnbPlan {
    pub ranked: RankedSequence,
    pub alpha: u32,
    pub b: f64,
    /// `(boosted step, hypothesis)` sorted by step then hypothesis index.
    pub timestamps: Vec<(usize, usize)>,
    /// Scan the boosted sequence cyclically (experiment variant).
    pub cyclic: bool,
}

#[derive(Serialize)]
struct RnbPlanFile<'a> {
    sigma: Vec<&'a str>,
    alpha: u32,
    b: f64,
    timestamps: Vec<(String, usize)>,
    cyclic: bool,
}

impl RnbPlan {
    pub fn boosted_len(&self) -> usize {
        self.ranked.actions.len() * self.alpha as usize
    }

    /// Action performed at boosted step `t` (1-based).
    pub fn action_at(&self, t: usize) -> usize {
        let idx = (t - 1) / self.alpha as usize;
        self.ranked.actions[idx % self.ranked.actions.len()]
    }

    pub fn to_json(&self, inst: &Instance) -> Result<String> {
        let file = RnbPlanFile {
            sigma: self
                .ranked
                .actions
                .iter()
                .map(|&a| inst.actions()[a].as_str())
                .collect(),
            alpha: self.alpha,
            b: self.b,
            timestamps: self
                .timestamps
                .iter()
                .map(|&(t, h)| (inst.hypotheses()[h].clone(), t))
                .collect(),
            cyclic: self.cyclic,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

fn timestamps_from(ranked: &RankedSequence, alpha: u32) -> Vec<(usize, usize)> {
    let mut ts: Vec<(usize, usize)> = ranked
        .cover_times
        .iter()
        .enumerate()
        .filter_map(|(h, ct)| ct.finite().map(|t| (t * alpha as usize, h)))
        .collect();
    ts.sort_unstable();
    ts
}

/// Rank the duplicated ground set and attach timestamps. Fails with the
/// uncovered hypothesis set if the copies cannot saturate every function.
///
/// The greedy scan stops adding informative elements once every coverage
/// function saturates; past that point every score is zero and the tie rule
/// appends the leftover copies in action-index order, so the plan carries
/// the full multiset. The exhausted-scan fallback therefore judges the
/// posterior on all `M` copies of every action, which is what makes it a
/// rare failure path rather than a coin flip.
pub fn build_plan(inst: &Instance, params: &RnbParams) -> Result<RnbPlan> {
    params.validate()?;
    let mut ranked = ranking::gre_rank(inst, params.b, params.multiplicity);
    if inst.num_hypotheses() > 1 {
        let uncovered = ranked.uncovered();
        if !uncovered.is_empty() {
            return Err(Error::Uncovered(
                uncovered
                    .into_iter()
                    .map(|h| inst.hypotheses()[h].clone())
                    .collect(),
            ));
        }
        let mut used = vec![0usize; inst.num_actions()];
        for &a in &ranked.actions {
            used[a] += 1;
        }
        for (a, &count) in used.iter().enumerate() {
            for _ in count..params.multiplicity {
                ranked.actions.push(a);
            }
        }
    }
    let timestamps = timestamps_from(&ranked, params.alpha);
    Ok(RnbPlan {
        ranked,
        alpha: params.alpha,
        b: params.b,
        timestamps,
        cyclic: false,
    })
}

/// Experiment variant: greedy over actions with replacement for at most
/// `eta` steps, truncated at the largest index where an action appears for
/// the first time. Executed cyclically with a posterior stopping rule.
pub fn build_plan_experiment(inst: &Instance, b: f64, eta: usize) -> Result<RnbPlan> {
    if eta < 1 {
        return Err(Error::InvalidParameter {
            name: "eta",
            reason: "maximum sequence length must be at least 1".into(),
        });
    }
    let scanned = ranking::gre_rank_with_replacement(inst, b, eta);
    let actions = truncate_at_last_first_occurrence(&scanned.actions);
    let mut ranked = RankedSequence {
        cover_times: Vec::new(),
        actions,
        saturation: b,
    };
    ranked.cover_times = (0..inst.num_hypotheses())
        .map(|h| {
            ranking::cover_time(
                &ranking::CoverFunction::new(inst, h, b),
                &ranked.actions,
            )
        })
        .collect();
    let timestamps = timestamps_from(&ranked, 1);
    Ok(RnbPlan {
        ranked,
        alpha: 1,
        b,
        timestamps,
        cyclic: true,
    })
}

/// Keep the prefix ending at the last index where some action occurs for the
/// first time.
pub fn truncate_at_last_first_occurrence(sequence: &[usize]) -> Vec<usize> {
    let mut seen = std::collections::HashSet::new();
    let mut last_first = 0;
    for (i, a) in sequence.iter().enumerate() {
        if seen.insert(*a) {
            last_first = i + 1;
        }
    }
    sequence[..last_first].to_vec()
}

/// Result of driving a plan through one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct RnbRun {
    pub output: usize,
    pub cost: f64,
    pub steps: u64,
    /// True when the scan exhausted the boosted sequence and fell back to
    /// the maximum-posterior hypothesis.
    pub fell_back: bool,
}

/// Theory execution: scan the boosted sequence, and at each timestamp
/// `tau(h)` return `h` if `log Lambda(h,g) >= alpha*B/2` against every
/// other hypothesis. Falls back to the posterior argmax at exhaustion.
pub fn execute(
    plan: &RnbPlan,
    inst: &Instance,
    sampler: &mut dyn FnMut(usize) -> f64,
) -> RnbRun {
    let nh = inst.num_hypotheses();
    if nh == 1 {
        return RnbRun {
            output: 0,
            cost: 0.0,
            steps: 0,
            fell_back: false,
        };
    }
    let threshold = f64::from(plan.alpha) * plan.b / 2.0;
    let mut log_lik = vec![0.0; nh];
    let mut cost = 0.0;
    let mut ts_iter = plan.timestamps.iter().peekable();
    let total = plan.boosted_len();
    for t in 1..=total {
        let a = plan.action_at(t);
        let y = sampler(a);
        cost += inst.cost(a);
        for (h, ll) in log_lik.iter_mut().enumerate() {
            *ll += inst.log_density(h, a, y);
        }
        while let Some(&&(ts, h)) = ts_iter.peek() {
            if ts > t {
                break;
            }
            ts_iter.next();
            if ts < t {
                continue;
            }
            let min_llr = (0..nh)
                .filter(|g| *g != h)
                .map(|g| log_lik[h] - log_lik[g])
                .fold(f64::INFINITY, f64::min);
            if min_llr >= threshold {
                return RnbRun {
                    output: h,
                    cost,
                    steps: t as u64,
                    fell_back: false,
                };
            }
        }
    }
    // Exhausted scan: the hypothesis with the highest posterior, ties to the
    // lowest index.
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for h in 0..nh {
        let score = inst.prior()[h].ln() + log_lik[h];
        if score > best_score {
            best_score = score;
            best = h;
        }
    }
    RnbRun {
        output: best,
        cost,
        steps: total as u64,
        fell_back: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::OutcomeFamily;
    use crate::instance::{generate_synthetic, uniform_instance, GenMode};

    fn two_hyp() -> Instance {
        uniform_instance("two", OutcomeFamily::bernoulli(), &[vec![0.2], vec![0.8]]).unwrap()
    }

    #[test]
    fn derived_defaults_match_the_formulas() {
        // delta = 0.01, |H| = 100 -> alpha = 2, B = ln(100)/2.
        let means: Vec<Vec<f64>> = (0..100)
            .map(|i| vec![0.01 + 0.98 * i as f64 / 99.0])
            .collect();
        let inst = uniform_instance("h100", OutcomeFamily::bernoulli(), &means).unwrap();
        let p = RnbParams::derived_defaults(&inst, 0.01).unwrap();
        assert_eq!(p.alpha, 2);
        assert!((p.b - 100.0_f64.ln() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn default_multiplicity_uses_natural_logs() {
        // s = 0.5, |H| = 4, delta = 0.1 -> ceil(2 * 16 * ln 40) = 119.
        let means = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let inst = uniform_instance("m", OutcomeFamily::UnitGaussian, &means).unwrap();
        assert!((inst.separation() - 0.5).abs() < 1e-12);
        assert_eq!(ranking::default_multiplicity(&inst, 0.1).unwrap(), 119);
    }

    #[test]
    fn alpha_one_keeps_sigma_and_cover_times() {
        let inst = two_hyp();
        let params = RnbParams {
            b: 0.5,
            alpha: 1,
            delta: 0.25,
            multiplicity: 4,
        };
        let plan = build_plan(&inst, &params).unwrap();
        assert_eq!(plan.boosted_len(), plan.ranked.actions.len());
        for &(t, h) in &plan.timestamps {
            assert_eq!(Some(t), plan.ranked.cover_times[h].finite());
        }
    }

    #[test]
    fn boosted_structure_repeats_each_action_alpha_times() {
        let inst = two_hyp();
        let params = RnbParams {
            b: 0.8,
            alpha: 3,
            delta: 0.05,
            multiplicity: 5,
        };
        let plan = build_plan(&inst, &params).unwrap();
        for t in 1..=plan.boosted_len() {
            let expect = plan.ranked.actions[(t - 1) / 3];
            assert_eq!(plan.action_at(t), expect);
        }
        for &(t, _) in &plan.timestamps {
            assert_eq!(t % 3, 0);
        }
    }

    #[test]
    fn build_plan_propagates_uncovered_hypotheses() {
        // One copy of a weak action cannot reach B.
        let inst = uniform_instance(
            "weak",
            OutcomeFamily::UnitGaussian,
            &[vec![0.0], vec![0.2]],
        )
        .unwrap();
        let params = RnbParams {
            b: 1.0,
            alpha: 1,
            delta: 0.05,
            multiplicity: 1,
        };
        assert!(matches!(
            build_plan(&inst, &params),
            Err(Error::Uncovered(_))
        ));
    }

    #[test]
    fn single_hypothesis_returns_immediately() {
        let inst = uniform_instance("one", OutcomeFamily::bernoulli(), &[vec![0.5]]).unwrap();
        let plan = build_plan(
            &inst,
            &RnbParams {
                b: 0.5,
                alpha: 2,
                delta: 0.1,
                multiplicity: 1,
            },
        )
        .unwrap();
        let run = execute(&plan, &inst, &mut |_| 1.0);
        assert_eq!(run.output, 0);
        assert_eq!(run.cost, 0.0);
        assert_eq!(run.steps, 0);
    }

    #[test]
    fn stopping_depends_only_on_the_observed_prefix() {
        let inst = generate_synthetic(4, 6, GenMode::Grid(8), 21).unwrap();
        let params = RnbParams::derived_defaults(&inst, 0.1).unwrap();
        let plan = build_plan(&inst, &params).unwrap();
        let mut rng = crate::rng::stream("stopping", 5);
        let outcomes: Vec<f64> = (0..plan.boosted_len())
            .map(|t| inst.sample_outcome(0, plan.action_at(t + 1), &mut rng))
            .collect();

        let mut i = 0;
        let first = execute(&plan, &inst, &mut |_| {
            let y = outcomes[i];
            i += 1;
            y
        });
        // Mutate everything after the recorded stop; the replay must stop at
        // the same step with the same output.
        let mut mutated = outcomes.clone();
        for y in mutated.iter_mut().skip(first.steps as usize) {
            *y = 1.0 - *y;
        }
        let mut j = 0;
        let second = execute(&plan, &inst, &mut |_| {
            let y = mutated[j];
            j += 1;
            y
        });
        assert_eq!(first, second);
    }

    #[test]
    fn cost_accounting_is_alpha_times_the_sigma_index() {
        let inst = uniform_instance(
            "sep",
            OutcomeFamily::bernoulli(),
            &[vec![0.01], vec![0.99]],
        )
        .unwrap();
        let params = RnbParams {
            b: 1.0,
            alpha: 2,
            delta: 0.1,
            multiplicity: 4,
        };
        let plan = build_plan(&inst, &params).unwrap();
        // Feed outcomes that perfectly match hypothesis 1.
        let run = execute(&plan, &inst, &mut |_| 1.0);
        assert!(!run.fell_back);
        assert_eq!(run.output, 1);
        let sigma_index = run.steps / 2;
        assert_eq!(run.cost, (2 * sigma_index) as f64);
    }

    #[test]
    fn truncation_cuts_after_the_last_first_occurrence() {
        assert_eq!(
            truncate_at_last_first_occurrence(&[0, 0, 1, 1, 0, 2, 2, 2]),
            vec![0, 0, 1, 1, 0, 2]
        );
        assert_eq!(truncate_at_last_first_occurrence(&[3]), vec![3]);
    }

    #[test]
    fn experiment_plan_with_eta_one_is_the_single_best_action() {
        let inst = generate_synthetic(5, 7, GenMode::Uniform01, 2).unwrap();
        let plan = build_plan_experiment(&inst, 1.0, 1).unwrap();
        assert_eq!(plan.ranked.actions.len(), 1);
        assert!(plan.cyclic);
    }

    #[test]
    fn experiment_plan_truncates_below_eta_on_easy_instances() {
        let inst = generate_synthetic(6, 10, GenMode::Uniform01, 13).unwrap();
        let plan = build_plan_experiment(&inst, 1.0, 800).unwrap();
        assert!(!plan.ranked.actions.is_empty());
        assert!(plan.ranked.actions.len() < 800);
    }

    #[test]
    fn params_reject_oversized_saturation() {
        let p = RnbParams {
            b: 2.0,
            alpha: 1,
            delta: 0.25,
            multiplicity: 1,
        };
        assert!(p.validate().is_err());
    }
}
