//! Comparison policies: a uniform-random baseline and the two-phase
//! max-min-KL sampling heuristic (phase 1 over all alive pairs, phase 2
//! against the current posterior leader).

use std::collections::HashMap;
use std::sync::RwLock;

use rand::Rng;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::simplex::{self, LinearProgram, Relop, SolveStatus};

/// Cap applied to unbounded KL entries before entering the LP.
pub const DEFAULT_KL_CAP_NATS: f64 = 50.0;

/// A sampling distribution over actions with its attained max-min value.
#[derive(Clone, Debug)]
pub struct ActionDistribution {
    pub lambda: Vec<f64>,
    pub value: f64,
    /// Number of KL entries clamped to the finite cap before solving.
    pub clamped_entries: usize,
    /// True when the LP value is (numerically) zero: some pair cannot be
    /// separated by any mixture.
    pub degenerate: bool,
}

impl ActionDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (a, &w) in self.lambda.iter().enumerate() {
            acc += w;
            if u < acc {
                return a;
            }
        }
        self.lambda.len() - 1
    }
}

/// Uniform random baseline step.
pub fn random_policy_step<R: Rng + ?Sized>(inst: &Instance, rng: &mut R) -> usize {
    rng.gen_range(0..inst.num_actions())
}

/// Solve `max_{lambda in simplex} min_rows row . lambda` for a dense
/// nonnegative matrix, one row per hypothesis pair.
///
/// Posed through the classic game substitution `x = lambda / v`:
/// `min sum x  s.t.  K x >= 1, x >= 0`, then `v = 1 / sum x` and
/// `lambda = v x`. Rows are introduced lazily: solve on a working subset,
/// then add the most violated row until none is violated. Every solve runs
/// the dense Bland simplex, so the result is deterministic; the full-row
/// program is what the exact-rational oracle checks against.
pub fn max_min_lp(rows: &[Vec<f64>]) -> Result<ActionDistribution> {
    let num_rows = rows.len();
    assert!(num_rows > 0, "need at least one pair row");
    let n = rows[0].len();
    assert!(rows.iter().all(|r| r.len() == n));

    // A pair with no separating action pins the max-min value at zero.
    if rows.iter().any(|r| r.iter().all(|v| *v <= 0.0)) {
        return Ok(ActionDistribution {
            lambda: vec![1.0 / n as f64; n],
            value: 0.0,
            clamped_entries: 0,
            degenerate: true,
        });
    }
    if n == 1 {
        let value = rows.iter().map(|r| r[0]).fold(f64::INFINITY, f64::min);
        return Ok(ActionDistribution {
            lambda: vec![1.0],
            value,
            clamped_entries: 0,
            degenerate: value <= 1e-12,
        });
    }

    // Working set: each action's weakest row gives decent starting coverage.
    let mut active: Vec<usize> = Vec::new();
    for a in 0..n {
        let mut worst = 0;
        let mut worst_v = f64::INFINITY;
        for (i, row) in rows.iter().enumerate() {
            if row[a] < worst_v {
                worst_v = row[a];
                worst = i;
            }
        }
        if !active.contains(&worst) {
            active.push(worst);
        }
    }
    active.sort_unstable();

    loop {
        // Solve the dual `max 1.y : K_active^T y <= 1, y >= 0`: its slack
        // basis is immediately feasible (no artificials), the row count is
        // |A| regardless of how many pairs are active, and the primal
        // weights come back as the slack columns' reduced costs.
        let p = active.len();
        let constraints: Vec<(Vec<f64>, Relop, f64)> = (0..n)
            .map(|a| {
                (
                    active.iter().map(|&i| rows[i][a]).collect(),
                    Relop::Le,
                    1.0,
                )
            })
            .collect();
        let sol = simplex::solve(&LinearProgram {
            objective: vec![-1.0; p],
            constraints,
        });
        if sol.status != SolveStatus::Optimal {
            return Err(Error::Numerical(format!(
                "max-min LP did not solve: {:?}",
                sol.status
            )));
        }
        let x: Vec<f64> = (0..n).map(|a| sol.reduced_costs[p + a].max(0.0)).collect();
        let total: f64 = x.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Numerical("max-min LP returned zero mass".into()));
        }
        let lambda: Vec<f64> = x.iter().map(|v| v / total).collect();

        // Violated full rows under x, most violated first.
        let mut violated: Vec<(f64, usize)> = Vec::new();
        let mut min_dot = f64::INFINITY;
        for (i, row) in rows.iter().enumerate() {
            let dot: f64 = row.iter().zip(&x).map(|(r, l)| r * l).sum();
            min_dot = min_dot.min(dot);
            if dot < 1.0 - 1e-9 && !active.contains(&i) {
                violated.push((dot, i));
            }
        }
        if violated.is_empty() {
            // v = min over all rows of lambda . row; report the attained
            // value rather than 1/total so the certificate is tight.
            let value = rows
                .iter()
                .map(|row| row.iter().zip(&lambda).map(|(r, l)| r * l).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            return Ok(ActionDistribution {
                lambda,
                value,
                clamped_entries: 0,
                degenerate: value <= 1e-12,
            });
        }
        violated.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for (_, i) in violated.into_iter().take(64) {
            active.push(i);
        }
        active.sort_unstable();
    }
}

/// Pair rows for a set of alive hypotheses: one row per ordered pair
/// `(g, h)`, entries `KL(D_mu(g,a) || D_mu(h,a))` capped at `cap` nats.
/// Returns the rows plus the number of clamped entries.
fn pair_rows(inst: &Instance, pairs: &[(usize, usize)], cap: f64) -> (Vec<Vec<f64>>, usize) {
    let na = inst.num_actions();
    let mut clamped = 0;
    let rows = pairs
        .iter()
        .map(|&(g, h)| {
            (0..na)
                .map(|a| {
                    let d = inst.divergence(g, h, a);
                    if d > cap {
                        clamped += 1;
                        cap
                    } else {
                        d
                    }
                })
                .collect()
        })
        .collect();
    (rows, clamped)
}

fn alive_indices(alive: &[bool]) -> Vec<usize> {
    alive
        .iter()
        .enumerate()
        .filter(|(_, x)| **x)
        .map(|(i, _)| i)
        .collect()
}

/// Phase-1 distribution: maximize the minimum expected KL over all ordered
/// alive pairs.
pub fn nj_phase1_distribution(
    inst: &Instance,
    alive: &[bool],
    cap: f64,
) -> Result<ActionDistribution> {
    let idx = alive_indices(alive);
    if idx.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "alive",
            reason: "phase 1 needs at least two alive hypotheses".into(),
        });
    }
    let mut pairs = Vec::new();
    for &g in &idx {
        for &h in &idx {
            if g != h {
                pairs.push((g, h));
            }
        }
    }
    let (rows, clamped) = pair_rows(inst, &pairs, cap);
    let mut dist = max_min_lp(&rows)?;
    dist.clamped_entries = clamped;
    Ok(dist)
}

/// Phase-2 distribution: pairs restricted to (leader, g).
pub fn nj_phase2_distribution(
    inst: &Instance,
    leader: usize,
    alive: &[bool],
    cap: f64,
) -> Result<ActionDistribution> {
    let idx = alive_indices(alive);
    if !alive[leader] || idx.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "leader",
            reason: "leader must be alive alongside at least one other hypothesis".into(),
        });
    }
    let pairs: Vec<(usize, usize)> = idx
        .iter()
        .copied()
        .filter(|&g| g != leader)
        .map(|g| (leader, g))
        .collect();
    let (rows, clamped) = pair_rows(inst, &pairs, cap);
    let mut dist = max_min_lp(&rows)?;
    dist.clamped_entries = clamped;
    Ok(dist)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum PhaseKey {
    One,
    Two(usize),
}

/// Two-phase controller. Phase 1 samples from the fixed max-min
/// distribution over every hypothesis pair (outcome-independent, which is
/// what keeps the phase-1-only variant partially adaptive); phase 2 focuses
/// the pairs between the posterior leader and all other hypotheses. The
/// finitely many distributions are solved once and cached.
pub struct NjController {
    /// Posterior threshold for switching to phase 2.
    pub r: f64,
    pub delta: f64,
    pub cap: f64,
    /// Phase 2 disabled entirely (the partially adaptive variant).
    pub phase1_only: bool,
    cache: RwLock<HashMap<PhaseKey, std::sync::Arc<ActionDistribution>>>,
}

impl NjController {
    pub fn new(r: f64, delta: f64, phase1_only: bool) -> Self {
        NjController {
            r,
            delta,
            cap: DEFAULT_KL_CAP_NATS,
            phase1_only,
            cache: RwLock::new(HashMap::new()),
        }
    }

    fn distribution(
        &self,
        inst: &Instance,
        key: PhaseKey,
    ) -> Result<std::sync::Arc<ActionDistribution>> {
        if let Some(hit) = self.cache.read().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let alive = vec![true; inst.num_hypotheses()];
        let dist = match key {
            PhaseKey::One => nj_phase1_distribution(inst, &alive, self.cap)?,
            PhaseKey::Two(leader) => nj_phase2_distribution(inst, leader, &alive, self.cap)?,
        };
        let arc = std::sync::Arc::new(dist);
        self.cache
            .write()
            .unwrap()
            .entry(key)
            .or_insert_with(|| arc.clone());
        Ok(arc)
    }

    /// Pick the next action for the given posterior.
    pub fn step<R: Rng + ?Sized>(
        &self,
        inst: &Instance,
        posterior: &[f64],
        rng: &mut R,
    ) -> Result<usize> {
        let max_p = posterior.iter().copied().fold(0.0, f64::max);
        let key = if !self.phase1_only && max_p >= self.r && inst.num_hypotheses() >= 2 {
            let leader = posterior
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                .map(|(h, _)| h)
                .unwrap();
            PhaseKey::Two(leader)
        } else {
            PhaseKey::One
        };
        let dist = self.distribution(inst, key)?;
        Ok(dist.sample(rng))
    }
}
