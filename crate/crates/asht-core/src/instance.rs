//! ASHT instances: hypotheses, actions, prior, the outcome-mean table, and
//! the eagerly computed pairwise-divergence cache.
//!
//! Instances are immutable after construction and safe to share across
//! concurrent trials.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{Divergence, OutcomeFamily};
use crate::rng;

const PRIOR_TOL: f64 = 1e-12;
const VALIDITY_RETRIES: usize = 100;

/// A fully specified testing instance `(H, A, pi, mu, D)` plus per-action
/// costs. The divergence cache `d(g,h;a)` is filled at construction.
#[derive(Clone, Debug)]
pub struct Instance {
    id: String,
    family: OutcomeFamily,
    hypotheses: Vec<String>,
    actions: Vec<String>,
    prior: Vec<f64>,
    costs: Vec<f64>,
    /// Row-major `mu[h * num_actions + a]`.
    means: Vec<f64>,
    /// `d(g,h;a)` at `(g * num_h + h) * num_actions + a`; +inf when unbounded.
    divergences: Vec<f64>,
    separation: f64,
    per_action_separation: Vec<Option<f64>>,
}

/// Global and per-action separation, with the divergence cache attached.
#[derive(Clone, Debug)]
pub struct SeparationReport {
    /// Minimum strictly positive `d(g,h;a)` over all pairs and actions.
    pub s: f64,
    /// Minimum strictly positive divergence per action; `None` when an
    /// action has identical outcome parameters under every hypothesis.
    pub per_action: Vec<Option<f64>>,
    /// Cached `d(g,h;a)`, same layout as in the instance.
    pub pair_divergences: Vec<f64>,
}

/// Synthetic mean-table generation modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenMode {
    /// Each mean drawn uniformly from [0.01, 0.99] (clamped away from the
    /// boundary so every pairwise KL stays finite).
    Uniform01,
    /// Each mean drawn uniformly from {1/k, ..., (k-1)/k}.
    Grid(u32),
}

impl std::fmt::Display for GenMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GenMode::Uniform01 => write!(f, "uniform01"),
            GenMode::Grid(k) => write!(f, "grid{k}"),
        }
    }
}

/// On-disk JSON mirror of [`Instance`].
#[derive(Serialize, Deserialize)]
struct InstanceFile {
    family: OutcomeFamily,
    hypotheses: Vec<String>,
    prior: Vec<f64>,
    actions: Vec<String>,
    costs: Vec<f64>,
    means: Vec<Vec<f64>>,
}

impl Instance {
    pub fn new(
        id: impl Into<String>,
        family: OutcomeFamily,
        hypotheses: Vec<String>,
        actions: Vec<String>,
        prior: Vec<f64>,
        costs: Vec<f64>,
        means: Vec<f64>,
    ) -> Result<Self> {
        let num_h = hypotheses.len();
        let num_a = actions.len();
        if num_h == 0 {
            return Err(Error::InvalidParameter {
                name: "hypotheses",
                reason: "at least one hypothesis required".into(),
            });
        }
        if num_a == 0 {
            return Err(Error::InvalidParameter {
                name: "actions",
                reason: "at least one action required".into(),
            });
        }
        if prior.len() != num_h {
            return Err(Error::InvalidParameter {
                name: "prior",
                reason: format!("length {} != |H| = {}", prior.len(), num_h),
            });
        }
        if costs.len() != num_a {
            return Err(Error::InvalidParameter {
                name: "costs",
                reason: format!("length {} != |A| = {}", costs.len(), num_a),
            });
        }
        if means.len() != num_h * num_a {
            return Err(Error::InvalidParameter {
                name: "means",
                reason: format!("length {} != |H|*|A| = {}", means.len(), num_h * num_a),
            });
        }
        if prior.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "prior",
                reason: "entries must be finite and nonnegative".into(),
            });
        }
        let sum: f64 = prior.iter().sum();
        if (sum - 1.0).abs() > PRIOR_TOL {
            return Err(Error::PriorNotNormalized { sum });
        }
        if costs.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "costs",
                reason: "entries must be strictly positive".into(),
            });
        }
        for &m in &means {
            family.validate_param(m)?;
        }

        let mut inst = Instance {
            id: id.into(),
            family,
            hypotheses,
            actions,
            prior,
            costs,
            means,
            divergences: Vec::new(),
            separation: f64::INFINITY,
            per_action_separation: vec![None; num_a],
        };
        inst.check_validity()?;
        inst.build_divergence_cache()?;
        Ok(inst)
    }

    /// Assumption check: every pair of hypotheses differs under some action.
    fn check_validity(&self) -> Result<()> {
        let (nh, na) = (self.num_hypotheses(), self.num_actions());
        for g in 0..nh {
            for h in (g + 1)..nh {
                let distinguishable =
                    (0..na).any(|a| self.means[g * na + a] != self.means[h * na + a]);
                if !distinguishable {
                    return Err(Error::Indistinguishable {
                        g: self.hypotheses[g].clone(),
                        h: self.hypotheses[h].clone(),
                    });
                }
            }
        }
        Ok(())
    }

    fn build_divergence_cache(&mut self) -> Result<()> {
        let (nh, na) = (self.num_hypotheses(), self.num_actions());
        let mut cache = vec![0.0; nh * nh * na];
        let mut global = f64::INFINITY;
        let mut per_action = vec![f64::INFINITY; na];
        for g in 0..nh {
            for h in 0..nh {
                for a in 0..na {
                    let d = if g == h {
                        0.0
                    } else {
                        self.family
                            .kl(self.means[g * na + a], self.means[h * na + a])?
                            .nats()
                    };
                    cache[(g * nh + h) * na + a] = d;
                    if d > 0.0 {
                        global = global.min(d);
                        per_action[a] = per_action[a].min(d);
                    }
                }
            }
        }
        self.divergences = cache;
        self.separation = global;
        self.per_action_separation = per_action
            .into_iter()
            .map(|v| if v.is_finite() { Some(v) } else { None })
            .collect();
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn family(&self) -> &OutcomeFamily {
        &self.family
    }

    pub fn num_hypotheses(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn hypotheses(&self) -> &[String] {
        &self.hypotheses
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn cost(&self, a: usize) -> f64 {
        self.costs[a]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn mean(&self, h: usize, a: usize) -> f64 {
        self.means[h * self.num_actions() + a]
    }

    /// Cached `d(g,h;a) = KL(D_mu(g,a) || D_mu(h,a))` in nats (+inf possible).
    pub fn divergence(&self, g: usize, h: usize, a: usize) -> f64 {
        self.divergences[(g * self.num_hypotheses() + h) * self.num_actions() + a]
    }

    pub fn divergence_outcome(&self, g: usize, h: usize, a: usize) -> Divergence {
        Divergence::from_nats(self.divergence(g, h, a))
    }

    /// Global separation `s`: minimum strictly positive cached divergence.
    pub fn separation(&self) -> f64 {
        self.separation
    }

    /// Per-action separation `s(a)`.
    pub fn action_separation(&self, a: usize) -> Option<f64> {
        self.per_action_separation[a]
    }

    pub fn separation_report(&self) -> SeparationReport {
        SeparationReport {
            s: self.separation,
            per_action: self.per_action_separation.clone(),
            pair_divergences: self.divergences.clone(),
        }
    }

    pub fn log_density(&self, h: usize, a: usize, y: f64) -> f64 {
        self.family.log_density(self.mean(h, a), y)
    }

    pub fn sample_outcome<R: Rng + ?Sized>(&self, h: usize, a: usize, rng: &mut R) -> f64 {
        self.family.sample(self.mean(h, a), rng)
    }

    pub fn hypothesis_index(&self, name: &str) -> Option<usize> {
        self.hypotheses.iter().position(|x| x == name)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    // ------------------------------------------------------------------
    // JSON interface
    // ------------------------------------------------------------------

    pub fn to_json(&self) -> Result<String> {
        let na = self.num_actions();
        let file = InstanceFile {
            family: self.family,
            hypotheses: self.hypotheses.clone(),
            prior: self.prior.clone(),
            actions: self.actions.clone(),
            costs: self.costs.clone(),
            means: self.means.chunks(na).map(|r| r.to_vec()).collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(id: impl Into<String>, json: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(json)?;
        let flat: Vec<f64> = file.means.iter().flatten().copied().collect();
        if file.means.len() != file.hypotheses.len()
            || file.means.iter().any(|r| r.len() != file.actions.len())
        {
            return Err(Error::InvalidParameter {
                name: "means",
                reason: "matrix shape must be |H| x |A|".into(),
            });
        }
        Instance::new(
            id,
            file.family,
            file.hypotheses,
            file.actions,
            file.prior,
            file.costs,
            flat,
        )
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "instance".into());
        Instance::from_json(id, &text)
    }
}

/// Convenience: uniform prior, unit costs.
pub fn uniform_instance(
    id: impl Into<String>,
    family: OutcomeFamily,
    means_by_hypothesis: &[Vec<f64>],
) -> Result<Instance> {
    let nh = means_by_hypothesis.len();
    let na = means_by_hypothesis.first().map_or(0, |r| r.len());
    let hypotheses = (0..nh).map(|i| format!("h{i}")).collect();
    let actions = (0..na).map(|i| format!("a{i}")).collect();
    let prior = vec![1.0 / nh as f64; nh];
    let costs = vec![1.0; na];
    let means = means_by_hypothesis.iter().flatten().copied().collect();
    Instance::new(id, family, hypotheses, actions, prior, costs, means)
}

/// Draws a Bernoulli instance with a uniform prior; deterministic in its
/// arguments. Columns that leave some pair indistinguishable are redrawn up
/// to a bounded number of times.
pub fn generate_synthetic(num_h: usize, num_a: usize, mode: GenMode, seed: u64) -> Result<Instance> {
    if num_h < 2 {
        return Err(Error::InvalidParameter {
            name: "num_h",
            reason: "need at least 2 hypotheses".into(),
        });
    }
    if num_a < 1 {
        return Err(Error::InvalidParameter {
            name: "num_a",
            reason: "need at least 1 action".into(),
        });
    }
    if let GenMode::Grid(k) = mode {
        if k < 2 {
            return Err(Error::InvalidParameter {
                name: "mode",
                reason: "grid(k) requires k >= 2".into(),
            });
        }
    }

    let mut rng = rng::stream(&format!("synthetic-{mode}-{num_h}x{num_a}"), seed);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
        match mode {
            GenMode::Uniform01 => rng.gen_range(0.01..=0.99),
            GenMode::Grid(k) => {
                let i = rng.gen_range(1..k);
                f64::from(i) / f64::from(k)
            }
        }
    };

    let mut means = vec![0.0; num_h * num_a];
    for v in means.iter_mut() {
        *v = draw(&mut rng);
    }

    let indistinguishable = |means: &[f64]| -> Option<(usize, usize)> {
        for g in 0..num_h {
            for h in (g + 1)..num_h {
                if (0..num_a).all(|a| means[g * num_a + a] == means[h * num_a + a]) {
                    return Some((g, h));
                }
            }
        }
        None
    };

    let mut attempt = 0;
    while indistinguishable(&means).is_some() {
        if attempt >= VALIDITY_RETRIES {
            return Err(Error::GenerationFailed {
                retries: VALIDITY_RETRIES,
            });
        }
        let col = attempt % num_a;
        for h in 0..num_h {
            means[h * num_a + col] = draw(&mut rng);
        }
        attempt += 1;
    }

    let id = format!("gen-{mode}-{num_h}x{num_a}-seed{seed}");
    let hypotheses = (0..num_h).map(|i| format!("h{i}")).collect();
    let actions = (0..num_a).map(|i| format!("a{i}")).collect();
    let prior = vec![1.0 / num_h as f64; num_h];
    let costs = vec![1.0; num_a];
    Instance::new(
        id,
        OutcomeFamily::bernoulli(),
        hypotheses,
        actions,
        prior,
        costs,
        means,
    )
}

/// Ingests a mutation-probability CSV: header row carries hypothesis names,
/// each following row is one action (test) with its probability per
/// hypothesis. Zero entries are replaced by `floor` and duplicate actions
/// (identical probability rows after flooring) are dropped.
pub fn load_mutation_table<R: Read>(reader: R, path_label: &str, floor: f64) -> Result<Instance> {
    if !(floor > 0.0 && floor < 1.0) {
        return Err(Error::InvalidParameter {
            name: "floor",
            reason: format!("floor {floor} must lie in (0,1)"),
        });
    }
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = csv_reader.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Parse {
            path: path_label.into(),
            record: 0,
            reason: "header must name at least one hypothesis column".into(),
        });
    }
    let hypotheses: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
    let num_h = hypotheses.len();

    let mut action_names: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in csv_reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if record.len() != num_h + 1 {
            return Err(Error::Parse {
                path: path_label.into(),
                record: line,
                reason: format!("expected {} fields, found {}", num_h + 1, record.len()),
            });
        }
        let name = record.get(0).unwrap_or("").to_string();
        let mut probs = Vec::with_capacity(num_h);
        for cell in record.iter().skip(1) {
            let p: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path_label.into(),
                record: line,
                reason: format!("non-numeric cell `{cell}`"),
            })?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Parse {
                    path: path_label.into(),
                    record: line,
                    reason: format!("probability {p} outside [0,1]"),
                });
            }
            probs.push(if p == 0.0 { floor } else { p });
        }
        if !rows.contains(&probs) {
            rows.push(probs);
            action_names.push(name);
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path_label.into(),
            record: 0,
            reason: "no data rows found".into(),
        });
    }

    // Transpose: rows are actions, the instance table is hypothesis-major.
    let num_a = rows.len();
    let mut means = vec![0.0; num_h * num_a];
    for (a, row) in rows.iter().enumerate() {
        for (h, p) in row.iter().enumerate() {
            means[h * num_a + a] = *p;
        }
    }
    let prior = vec![1.0 / num_h as f64; num_h];
    let costs = vec![1.0; num_a];
    Instance::new(
        path_label,
        OutcomeFamily::bernoulli(),
        hypotheses,
        action_names,
        prior,
        costs,
        means,
    )
}

pub fn load_mutation_table_path(path: &Path, floor: f64) -> Result<Instance> {
    let file = std::fs::File::open(path)?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mutations".into());
    load_mutation_table(file, &label, floor)
}
