//! Replication runner and metrics aggregation.
//!
//! Trials are embarrassingly parallel; every trial derives its own stream
//! from (master seed, instance id, policy id, replication index), so the
//! emitted records are byte-identical for any worker-thread count.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::policy::{self, PolicySpec, PreparedPolicy, MAX_TRIAL_STEPS};
use crate::rng;

/// One replication's outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub instance_id: String,
    pub policy: String,
    pub delta: f64,
    pub rep: u64,
    pub true_h: String,
    pub output_h: String,
    pub cost: f64,
    pub steps: u64,
    pub correct: bool,
    pub seed: u64,
    #[serde(default)]
    pub capped: bool,
}

/// Draw the ground-truth hypothesis from the prior.
pub fn draw_truth<R: Rng + ?Sized>(inst: &Instance, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (h, &p) in inst.prior().iter().enumerate() {
        acc += p;
        if u < acc {
            return h;
        }
    }
    inst.num_hypotheses() - 1
}

/// Run one replication. Deterministic in
/// (master seed, instance id, policy id, rep).
pub fn run_trial(
    inst: &Instance,
    prepared: &PreparedPolicy,
    master_seed: u64,
    rep: u64,
) -> Result<TrialRecord> {
    let seed = rng::trial_key(master_seed, inst.id(), prepared.id(), rep);
    let mut stream = rng::trial_rng(master_seed, inst.id(), prepared.id(), rep);
    let truth = draw_truth(inst, &mut stream);
    let outcome = prepared.run(inst, truth, &mut stream, MAX_TRIAL_STEPS)?;
    Ok(TrialRecord {
        instance_id: inst.id().to_string(),
        policy: prepared.id().to_string(),
        delta: prepared.delta(),
        rep,
        true_h: inst.hypotheses()[truth].clone(),
        output_h: inst.hypotheses()[outcome.output].clone(),
        cost: outcome.cost,
        steps: outcome.steps,
        correct: truth == outcome.output,
        seed,
        capped: outcome.capped,
    })
}

/// Batch execution settings.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BatchConfig {
    pub deltas: Vec<f64>,
    pub replications: u64,
    pub master_seed: u64,
    /// 0 = rayon default.
    pub threads: usize,
}

/// All replications for every (instance, policy, delta) combination, in a
/// deterministic order.
pub fn run_batch(
    instances: &[Instance],
    specs: &[PolicySpec],
    cfg: &BatchConfig,
) -> Result<Vec<TrialRecord>> {
    if cfg.replications < 1 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    for d in &cfg.deltas {
        if !(*d > 0.0 && *d < 0.5) {
            return Err(Error::Config(format!("delta {d} outside (0, 0.5)")));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let mut records = Vec::new();
    for inst in instances {
        for spec in specs {
            for &delta in &cfg.deltas {
                let prepared = policy::prepare(spec, inst, delta)?;
                let batch: Result<Vec<TrialRecord>> = pool.install(|| {
                    (0..cfg.replications)
                        .into_par_iter()
                        .map(|rep| run_trial(inst, &prepared, cfg.master_seed, rep))
                        .collect()
                });
                records.extend(batch?);
            }
        }
    }
    Ok(records)
}

// ----------------------------------------------------------------------
// Aggregation
// ----------------------------------------------------------------------

/// Aggregates of one (instance, policy, delta) record group.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metrics {
    pub instance_id: String,
    pub policy: String,
    pub delta: f64,
    pub replications: u64,
    pub accuracy: f64,
    pub mean_cost: f64,
    pub std_cost: f64,
    /// Mean cost divided by the reference policy's largest mean cost;
    /// filled by the report stage.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub norm_cost: Option<f64>,
    pub hypotheses: Vec<String>,
    /// `confusion[true][output]`, ordered like `hypotheses`.
    pub confusion: Vec<Vec<u64>>,
    pub sensitivity: Vec<Option<f64>>,
    pub specificity: Vec<Option<f64>>,
    /// Per-hypothesis error `P_h(output != h)`.
    pub pac_error: Vec<Option<f64>>,
    /// Prior-weighted error.
    pub total_error: f64,
    pub capped_trials: u64,
}

/// Fold one homogeneous record group into metrics. Records from mixed
/// instances, policies, or deltas are rejected.
pub fn aggregate(records: &[TrialRecord], inst: &Instance) -> Result<Metrics> {
    let first = records.first().ok_or_else(|| {
        Error::Config("cannot aggregate an empty record set".into())
    })?;
    if records.iter().any(|r| {
        r.instance_id != first.instance_id || r.policy != first.policy || r.delta != first.delta
    }) {
        return Err(Error::Config(
            "mixed instance/policy/delta records need explicit grouping".into(),
        ));
    }
    if first.instance_id != inst.id() {
        return Err(Error::Config(format!(
            "records belong to `{}`, not `{}`",
            first.instance_id,
            inst.id()
        )));
    }
    let nh = inst.num_hypotheses();
    let mut confusion = vec![vec![0u64; nh]; nh];
    let mut cost_sum = 0.0;
    let mut cost_sq = 0.0;
    let mut correct = 0u64;
    let mut capped = 0u64;
    for r in records {
        let t = inst.hypothesis_index(&r.true_h).ok_or_else(|| {
            Error::Config(format!("unknown hypothesis `{}` in records", r.true_h))
        })?;
        let o = inst.hypothesis_index(&r.output_h).ok_or_else(|| {
            Error::Config(format!("unknown hypothesis `{}` in records", r.output_h))
        })?;
        confusion[t][o] += 1;
        cost_sum += r.cost;
        cost_sq += r.cost * r.cost;
        correct += u64::from(r.correct);
        capped += u64::from(r.capped);
    }
    let n = records.len() as f64;
    let mean_cost = cost_sum / n;
    let var = if records.len() > 1 {
        (cost_sq - n * mean_cost * mean_cost).max(0.0) / (n - 1.0)
    } else {
        0.0
    };

    let mut sensitivity = Vec::with_capacity(nh);
    let mut specificity = Vec::with_capacity(nh);
    let mut pac_error = Vec::with_capacity(nh);
    for h in 0..nh {
        let row: u64 = confusion[h].iter().sum();
        let tp = confusion[h][h];
        sensitivity.push((row > 0).then(|| tp as f64 / row as f64));
        pac_error.push((row > 0).then(|| 1.0 - tp as f64 / row as f64));
        let negatives: u64 = (0..nh).filter(|&t| t != h).map(|t| confusion[t].iter().sum::<u64>()).sum();
        let fp: u64 = (0..nh).filter(|&t| t != h).map(|t| confusion[t][h]).sum();
        specificity.push((negatives > 0).then(|| 1.0 - fp as f64 / negatives as f64));
    }
    let total_error: f64 = (0..nh)
        .map(|h| inst.prior()[h] * pac_error[h].unwrap_or(0.0))
        .sum();

    Ok(Metrics {
        instance_id: first.instance_id.clone(),
        policy: first.policy.clone(),
        delta: first.delta,
        replications: records.len() as u64,
        accuracy: correct as f64 / n,
        mean_cost,
        std_cost: var.sqrt(),
        norm_cost: None,
        hypotheses: inst.hypotheses().to_vec(),
        confusion,
        sensitivity,
        specificity,
        pac_error,
        total_error,
        capped_trials: capped,
    })
}

// ----------------------------------------------------------------------
// Trial CSV
// ----------------------------------------------------------------------

pub const TRIAL_CSV_HEADER: &str =
    "instance_id,policy,delta,rep,true_h,output_h,cost,steps,correct,seed";

/// Deterministic trial CSV: fixed column order, records sorted by
/// (instance, policy, delta, rep).
pub fn write_trials_csv<W: Write>(records: &[TrialRecord], mut out: W) -> Result<()> {
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.instance_id
            .cmp(&b.instance_id)
            .then(a.policy.cmp(&b.policy))
            .then(a.delta.partial_cmp(&b.delta).unwrap())
            .then(a.rep.cmp(&b.rep))
    });
    writeln!(out, "{TRIAL_CSV_HEADER}")?;
    for r in sorted {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.instance_id,
            r.policy,
            r.delta,
            r.rep,
            r.true_h,
            r.output_h,
            r.cost,
            r.steps,
            r.correct,
            r.seed
        )?;
    }
    Ok(())
}

pub fn read_trials_csv<Rd: std::io::Read>(reader: Rd) -> Result<Vec<TrialRecord>> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let mut records = Vec::new();
    for row in csv_reader.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("").to_string();
        let parse_f = |i: usize| -> Result<f64> {
            row.get(i)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::Config(format!("bad numeric field in trial CSV: {row:?}")))
        };
        let parse_u = |i: usize| -> Result<u64> {
            row.get(i)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::Config(format!("bad integer field in trial CSV: {row:?}")))
        };
        records.push(TrialRecord {
            instance_id: get(0),
            policy: get(1),
            delta: parse_f(2)?,
            rep: parse_u(3)?,
            true_h: get(4),
            output_h: get(5),
            cost: parse_f(6)?,
            steps: parse_u(7)?,
            correct: get(8) == "true",
            seed: parse_u(9)?,
            capped: false,
        });
    }
    Ok(records)
}
