//! Fully adaptive policies.
//!
//! Theory mode reduces the problem to a noiseless decision tree: each step
//! greedily picks the action with the best worst-case elimination count,
//! boosts it `ceil(s(a)^-1 ln(|H|/delta))` times, rounds the empirical mean
//! to the nearest attainable outcome value, and intersects the alive set.
//!
//! Experiment mode scores meta-tests `T_{a,k}` (action `a` repeated `k`
//! times) by worst-case eliminations per unit cost, updates a posterior
//! after every single outcome (so ruled-out hypotheses can revive), and
//! stops on a posterior threshold.

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::posterior::PosteriorState;

/// A meta-test: `action` repeated `reps` times, cost `reps * c(action)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MetaTest {
    pub action: usize,
    pub reps: usize,
}

impl MetaTest {
    pub fn cost(&self, inst: &Instance) -> f64 {
        self.reps as f64 * inst.cost(self.action)
    }
}

/// Distinct outcome values of an action over the full hypothesis set,
/// ascending.
pub fn outcome_values(inst: &Instance, a: usize) -> Vec<f64> {
    let mut vals: Vec<f64> = (0..inst.num_hypotheses()).map(|h| inst.mean(h, a)).collect();
    vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
    vals.dedup();
    vals
}

/// Round `mu_hat` to the nearest attainable value; ties go to the smaller.
pub fn round_to_outcome(values: &[f64], mu_hat: f64) -> f64 {
    let mut best = values[0];
    let mut best_d = (mu_hat - best).abs();
    for &v in &values[1..] {
        let d = (mu_hat - v).abs();
        if d < best_d {
            best_d = d;
            best = v;
        }
    }
    best
}

fn alive_pair_kl(inst: &Instance, alive: &[bool], a: usize) -> f64 {
    let nh = inst.num_hypotheses();
    let mut total = 0.0;
    for h in 0..nh {
        if !alive[h] {
            continue;
        }
        for g in 0..nh {
            if g == h || !alive[g] {
                continue;
            }
            total += inst.divergence(h, g, a);
        }
    }
    total
}

/// Greedy step of the noiseless reduction: the action maximizing the
/// worst-case number of alive hypotheses eliminated over its possible
/// outcomes. Ties break by total alive-pair KL, then by action index.
pub fn odt_greedy_step(inst: &Instance, alive: &[bool]) -> Result<usize> {
    let nh = inst.num_hypotheses();
    let na = inst.num_actions();
    let alive_count = alive.iter().filter(|x| **x).count();
    debug_assert!(alive_count >= 2);

    let mut best: Option<(usize, usize, f64)> = None;
    for a in 0..na {
        // Worst case over the outcome values attained by alive hypotheses.
        let mut score = usize::MAX;
        let mut seen: Vec<f64> = Vec::new();
        for h in 0..nh {
            if !alive[h] {
                continue;
            }
            let omega = inst.mean(h, a);
            if seen.contains(&omega) {
                continue;
            }
            seen.push(omega);
            let kept = (0..nh)
                .filter(|&g| alive[g] && inst.mean(g, a) == omega)
                .count();
            score = score.min(alive_count - kept);
        }
        let better = match &best {
            None => score > 0,
            Some((_, bs, btie)) => {
                if score != *bs {
                    score > *bs
                } else {
                    alive_pair_kl(inst, alive, a) > *btie
                }
            }
        };
        if better {
            best = Some((a, score, alive_pair_kl(inst, alive, a)));
        }
    }
    match best {
        Some((a, _, _)) => Ok(a),
        None => Err(Error::Numerical(
            "no action eliminates any alive hypothesis".into(),
        )),
    }
}

/// Precomputed per-action tables for theory mode.
pub struct FaTables {
    pub values: Vec<Vec<f64>>,
    pub boost: Vec<usize>,
}

impl FaTables {
    pub fn build(inst: &Instance, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: format!("delta = {delta} outside (0, 1/2)"),
            });
        }
        let log_term = (inst.num_hypotheses() as f64 / delta).ln();
        let na = inst.num_actions();
        let mut values = Vec::with_capacity(na);
        let mut boost = Vec::with_capacity(na);
        for a in 0..na {
            values.push(outcome_values(inst, a));
            let k = match inst.action_separation(a) {
                Some(s) => (log_term / s).ceil().max(1.0) as usize,
                None => 1,
            };
            boost.push(k);
        }
        Ok(FaTables { values, boost })
    }
}

/// One trial of the theory policy.
#[derive(Clone, Debug)]
pub struct TheoryRun {
    pub output: usize,
    pub cost: f64,
    pub steps: u64,
    pub recoveries: u64,
    pub capped: bool,
    /// `(action, alive set after the update)` per iteration.
    pub trace: Vec<(usize, Vec<usize>)>,
}

pub fn run_theory(
    inst: &Instance,
    tables: &FaTables,
    sampler: &mut dyn FnMut(usize) -> f64,
    max_steps: u64,
) -> Result<TheoryRun> {
    let nh = inst.num_hypotheses();
    let mut run = TheoryRun {
        output: 0,
        cost: 0.0,
        steps: 0,
        recoveries: 0,
        capped: false,
        trace: Vec::new(),
    };
    if nh == 1 {
        return Ok(run);
    }
    let mut alive = vec![true; nh];
    loop {
        let alive_idx: Vec<usize> = (0..nh).filter(|&h| alive[h]).collect();
        if alive_idx.len() == 1 {
            run.output = alive_idx[0];
            return Ok(run);
        }
        if run.steps >= max_steps {
            run.capped = true;
            run.output = alive_idx[0];
            return Ok(run);
        }
        let a = odt_greedy_step(inst, &alive)?;
        let k = tables.boost[a];
        let mut sum = 0.0;
        for _ in 0..k {
            sum += sampler(a);
        }
        run.steps += k as u64;
        run.cost += k as f64 * inst.cost(a);
        let mu_hat = sum / k as f64;
        let omega = round_to_outcome(&tables.values[a], mu_hat);
        for h in 0..nh {
            if alive[h] && inst.mean(h, a) != omega {
                alive[h] = false;
            }
        }
        if alive.iter().all(|x| !x) {
            // Extreme noise emptied the alive set; restart the elimination
            // from the full hypothesis set and keep the cost on the books.
            alive = vec![true; nh];
            run.recoveries += 1;
        }
        run.trace
            .push((a, (0..nh).filter(|&h| alive[h]).collect()));
    }
}

/// Noiseless replay of the theory loop under `truth`: outcomes equal their
/// means exactly, so rounding is exact. Used as the coupling oracle.
pub fn noiseless_greedy_trace(inst: &Instance, truth: usize) -> Result<Vec<(usize, Vec<usize>)>> {
    let nh = inst.num_hypotheses();
    let mut alive = vec![true; nh];
    let mut trace = Vec::new();
    while alive.iter().filter(|x| **x).count() > 1 {
        let a = odt_greedy_step(inst, &alive)?;
        let omega = inst.mean(truth, a);
        for h in 0..nh {
            if alive[h] && inst.mean(h, a) != omega {
                alive[h] = false;
            }
        }
        trace.push((a, (0..nh).filter(|&h| alive[h]).collect()));
    }
    Ok(trace)
}

/// Expected cost of the noiseless greedy decision tree with per-test cost
/// `c(a)`, averaging over the prior.
pub fn noiseless_greedy_expected_cost(inst: &Instance) -> Result<f64> {
    fn recurse(inst: &Instance, alive: &mut Vec<bool>) -> Result<f64> {
        let nh = inst.num_hypotheses();
        let alive_idx: Vec<usize> = (0..nh).filter(|&h| alive[h]).collect();
        if alive_idx.len() <= 1 {
            return Ok(0.0);
        }
        let a = odt_greedy_step(inst, alive)?;
        let mass: f64 = alive_idx.iter().map(|&h| inst.prior()[h]).sum();
        let mut expected = inst.cost(a);
        let mut values: Vec<f64> = alive_idx.iter().map(|&h| inst.mean(h, a)).collect();
        values.sort_by(|x, y| x.partial_cmp(y).unwrap());
        values.dedup();
        for omega in values {
            let branch: Vec<usize> = alive_idx
                .iter()
                .copied()
                .filter(|&h| inst.mean(h, a) == omega)
                .collect();
            let branch_mass: f64 = branch.iter().map(|&h| inst.prior()[h]).sum();
            if branch_mass == 0.0 {
                continue;
            }
            let mut sub = vec![false; nh];
            for &h in &branch {
                sub[h] = true;
            }
            expected += branch_mass / mass * recurse(inst, &mut sub)?;
        }
        Ok(expected)
    }
    let mut alive = vec![true; inst.num_hypotheses()];
    recurse(inst, &mut alive)
}

/// Elimination set of the meta-test `T_{a,k}` at observed mean `mu_bar`:
/// hypotheses whose parameter sits strictly more than `C k^{-1/2}` away.
/// Parameters exactly on the interval edge stay plausible; counting them
/// out would let a test whose values coincide across the alive set score as
/// if it eliminated everything, and the scan would loop on it forever.
pub fn elimination_set(inst: &Instance, a: usize, k: usize, c: f64, mu_bar: f64) -> Vec<usize> {
    let width = c / (k as f64).sqrt();
    (0..inst.num_hypotheses())
        .filter(|&h| (inst.mean(h, a) - mu_bar).abs() > width)
        .collect()
}

/// Greedy meta-test choice for the experiment policy.
///
/// Alive hypotheses are those with posterior above `delta/|H|`. The score of
/// `T_{a,k}` is its worst case over the empirical-mean grid `{0,1/k,...,1}`
/// of alive eliminations per unit cost; if nothing scores positive, fall
/// back to the single action with the largest alive-pair KL at `k = 1`.
pub fn fa_experiment_step(
    inst: &Instance,
    posterior: &[f64],
    k_max: usize,
    delta: f64,
    c: f64,
) -> MetaTest {
    let nh = inst.num_hypotheses();
    let na = inst.num_actions();
    let threshold = delta / nh as f64;
    let alive: Vec<bool> = posterior.iter().map(|&p| p > threshold).collect();

    let mut best: Option<(MetaTest, f64, f64)> = None;
    for a in 0..na {
        for k in 1..=k_max {
            let width = c / (k as f64).sqrt();
            let cost = k as f64 * inst.cost(a);
            let mut worst = f64::INFINITY;
            for i in 0..=k {
                let mu_bar = i as f64 / k as f64;
                let eliminated = (0..nh)
                    .filter(|&h| alive[h] && (inst.mean(h, a) - mu_bar).abs() > width)
                    .count();
                worst = worst.min(eliminated as f64 / cost);
                if worst == 0.0 {
                    break;
                }
            }
            if worst <= 0.0 {
                continue;
            }
            let candidate = MetaTest { action: a, reps: k };
            let better = match &best {
                None => true,
                Some((bt, bs, btie)) => {
                    if worst != *bs {
                        worst > *bs
                    } else {
                        let tie = alive_pair_kl(inst, &alive, a);
                        tie > *btie || (tie == *btie && a < bt.action)
                    }
                }
            };
            if better {
                let tie = alive_pair_kl(inst, &alive, a);
                best = Some((candidate, worst, tie));
            }
        }
    }
    if let Some((mt, _, _)) = best {
        return mt;
    }
    // No test can further distinguish the alive hypotheses under k_max.
    let mut fallback = 0;
    let mut fallback_kl = f64::NEG_INFINITY;
    for a in 0..na {
        let kl = alive_pair_kl(inst, &alive, a);
        if kl > fallback_kl {
            fallback_kl = kl;
            fallback = a;
        }
    }
    MetaTest {
        action: fallback,
        reps: 1,
    }
}

/// One trial of the experiment policy.
#[derive(Clone, Debug)]
pub struct ExperimentRun {
    pub output: usize,
    pub cost: f64,
    pub steps: u64,
    pub capped: bool,
}

pub fn run_experiment(
    inst: &Instance,
    delta: f64,
    k_max: usize,
    c: f64,
    sampler: &mut dyn FnMut(usize) -> f64,
    max_steps: u64,
) -> Result<ExperimentRun> {
    let mut posterior = PosteriorState::from_prior(inst.prior());
    let mut run = ExperimentRun {
        output: 0,
        cost: 0.0,
        steps: 0,
        capped: false,
    };
    if inst.num_hypotheses() == 1 {
        return Ok(run);
    }
    loop {
        if posterior.max_prob() >= 1.0 - delta {
            run.output = posterior.map_hypothesis();
            return Ok(run);
        }
        if run.steps >= max_steps {
            run.capped = true;
            run.output = posterior.map_hypothesis();
            return Ok(run);
        }
        let mt = fa_experiment_step(inst, posterior.probs(), k_max, delta, c);
        for _ in 0..mt.reps {
            let y = sampler(mt.action);
            posterior.update(inst, mt.action, y)?;
            run.steps += 1;
            run.cost += inst.cost(mt.action);
            // The posterior updates on every revealed observation, so the
            // threshold can fire inside a meta-test.
            if posterior.max_prob() >= 1.0 - delta {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::OutcomeFamily;
    use crate::instance::uniform_instance;

    #[test]
    fn greedy_picks_the_separating_action_for_two_alive() {
        let inst = uniform_instance(
            "pair",
            OutcomeFamily::bernoulli(),
            &[vec![0.3, 0.2], vec![0.3, 0.8]],
        )
        .unwrap();
        let a = odt_greedy_step(&inst, &[true, true]).unwrap();
        assert_eq!(a, 1);
    }

    #[test]
    fn one_vs_rest_ties_break_by_pair_kl() {
        // Four one-vs-rest actions, all with worst-case elimination 1; the
        // isolated value of action 2 is the farthest, so its alive-pair KL
        // sum is the largest.
        let base = 0.5;
        let mut means = vec![vec![base; 4]; 4];
        means[0][0] = 0.6;
        means[1][1] = 0.7;
        means[2][2] = 0.9;
        means[3][3] = 0.7;
        let inst = uniform_instance("ovr", OutcomeFamily::bernoulli(), &means).unwrap();
        let picked = odt_greedy_step(&inst, &[true, true, true, true]).unwrap();
        assert_eq!(picked, 2);
    }

    #[test]
    fn balanced_split_beats_one_vs_rest() {
        let inst = uniform_instance(
            "split",
            OutcomeFamily::bernoulli(),
            &[
                vec![0.9, 0.2, 0.5],
                vec![0.5, 0.2, 0.5],
                vec![0.5, 0.8, 0.5],
                vec![0.5, 0.8, 0.52],
            ],
        )
        .unwrap();
        // Action 0 isolates h0 (worst-case elimination 1), action 2 isolates
        // h3; action 1 splits 2-2 (worst-case elimination 2).
        let picked = odt_greedy_step(&inst, &[true, true, true, true]).unwrap();
        assert_eq!(picked, 1);
    }

    #[test]
    fn boost_counts_use_per_action_separation() {
        // s(a) = 0.5 via unit-gaussian means 0,1,...; |H| = 8, delta = 0.05
        // -> ceil(2 ln 160) = 11.
        let means: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let inst = uniform_instance("s8", OutcomeFamily::UnitGaussian, &means).unwrap();
        let tables = FaTables::build(&inst, 0.05).unwrap();
        assert_eq!(tables.boost[0], 11);
    }

    #[test]
    fn rounding_ties_go_to_the_smaller_value() {
        let values = vec![0.2, 0.8];
        assert_eq!(round_to_outcome(&values, 0.5), 0.2);
        assert_eq!(round_to_outcome(&values, 0.51), 0.8);
        assert_eq!(round_to_outcome(&values, 0.0), 0.2);
    }

    #[test]
    fn theory_run_on_single_hypothesis_is_free() {
        let inst = uniform_instance("one", OutcomeFamily::bernoulli(), &[vec![0.4]]).unwrap();
        let tables = FaTables::build(&inst, 0.1).unwrap();
        let run = run_theory(&inst, &tables, &mut |_| 1.0, 1_000_000).unwrap();
        assert_eq!(run.output, 0);
        assert_eq!(run.cost, 0.0);
    }

    #[test]
    fn theory_alive_set_shrinks_every_iteration_without_recoveries() {
        let inst = crate::instance::generate_synthetic(
            6,
            8,
            crate::instance::GenMode::Grid(8),
            3,
        )
        .unwrap();
        let tables = FaTables::build(&inst, 0.05).unwrap();
        let truth = 2;
        let mut rng = crate::rng::stream("fa-shrink", 9);
        let run = run_theory(
            &inst,
            &tables,
            &mut |a| inst.sample_outcome(truth, a, &mut rng),
            1_000_000,
        )
        .unwrap();
        if run.recoveries == 0 {
            let mut prev = inst.num_hypotheses();
            for (_, alive) in &run.trace {
                assert!(alive.len() < prev);
                prev = alive.len();
            }
            assert!(run.trace.len() <= inst.num_hypotheses() - 1);
        }
    }

    #[test]
    fn elimination_threshold_arithmetic() {
        // k = 4, C = 0.5 -> width 0.25 at mu_bar = 0.9.
        let inst = uniform_instance(
            "thr",
            OutcomeFamily::bernoulli(),
            &[vec![0.3], vec![0.8]],
        )
        .unwrap();
        let e = elimination_set(&inst, 0, 4, 0.5, 0.9);
        assert_eq!(e, vec![0]);
    }

    #[test]
    fn near_identical_pair_falls_back_to_k_one() {
        let inst = uniform_instance(
            "near",
            OutcomeFamily::bernoulli(),
            &[vec![0.30, 0.40], vec![0.31, 0.41]],
        )
        .unwrap();
        let mt = fa_experiment_step(&inst, &[0.5, 0.5], 5, 0.05, 0.5);
        assert_eq!(mt.reps, 1);
        // Fallback picks the largest alive-pair KL action.
        let kl0 = inst.divergence(0, 1, 0) + inst.divergence(1, 0, 0);
        let kl1 = inst.divergence(0, 1, 1) + inst.divergence(1, 0, 1);
        let expect = if kl0 >= kl1 { 0 } else { 1 };
        assert_eq!(mt.action, expect);
    }

    #[test]
    fn k_one_scores_match_the_noiseless_greedy_ranking_on_binary_columns() {
        // Grid-valued binary columns whose value gap exceeds C = 0.5, so the
        // k = 1 elimination sets coincide with the noiseless test branches.
        let inst = uniform_instance(
            "bin",
            OutcomeFamily::bernoulli(),
            &[
                vec![0.125, 0.125, 0.4],
                vec![0.125, 0.750, 0.4],
                vec![0.750, 0.750, 0.4],
                vec![0.750, 0.750, 0.9],
            ],
        )
        .unwrap();
        let alive = vec![true; 4];
        let posterior = vec![0.25; 4];
        // Experiment scores with k_max = 1.
        let mut scores = Vec::new();
        for a in 0..3 {
            let mut worst = usize::MAX;
            for mu_bar in [0.0, 1.0] {
                let count = elimination_set(&inst, a, 1, 0.5, mu_bar).len();
                worst = worst.min(count);
            }
            scores.push(worst);
        }
        // Noiseless worst-case eliminations.
        let mut odt_scores = Vec::new();
        for a in 0..3 {
            let mut worst = usize::MAX;
            for omega in outcome_values(&inst, a) {
                let kept = (0..4).filter(|&h| inst.mean(h, a) == omega).count();
                worst = worst.min(4 - kept);
            }
            odt_scores.push(worst);
        }
        assert_eq!(scores, odt_scores);
        let picked = fa_experiment_step(&inst, &posterior, 1, 0.05, 0.5);
        let odt_pick = odt_greedy_step(&inst, &alive).unwrap();
        assert_eq!(picked.action, odt_pick);
    }

    #[test]
    fn experiment_step_is_replay_deterministic() {
        let inst = crate::instance::generate_synthetic(
            5,
            6,
            crate::instance::GenMode::Grid(8),
            8,
        )
        .unwrap();
        let posterior = vec![0.4, 0.3, 0.15, 0.1, 0.05];
        let first = fa_experiment_step(&inst, &posterior, 5, 0.05, 0.5);
        for _ in 0..5 {
            assert_eq!(fa_experiment_step(&inst, &posterior, 5, 0.05, 0.5), first);
        }
    }

    #[test]
    fn large_delta_terminates_on_the_first_decisive_update() {
        let inst = uniform_instance(
            "fast",
            OutcomeFamily::bernoulli(),
            &[vec![0.9], vec![0.1]],
        )
        .unwrap();
        let mut rng = crate::rng::stream("fa-fast", 2);
        let run = run_experiment(
            &inst,
            0.49,
            5,
            0.5,
            &mut |a| inst.sample_outcome(0, a, &mut rng),
            1_000_000,
        )
        .unwrap();
        // A single Bernoulli outcome moves the posterior to 0.9/0.1.
        assert_eq!(run.steps, 1);
    }
}
