//! Policy kinds, their per-(instance, delta) preparation, and a single
//! entry point the trial runner drives.

pub mod baselines;
pub mod fa;
pub mod rnb;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::posterior::PosteriorState;

/// Hard cap on selections per trial; trials hitting it come back flagged.
pub const MAX_TRIAL_STEPS: u64 = 1_000_000;

fn default_eta() -> usize {
    400
}
fn default_k_max() -> usize {
    5
}
fn default_c() -> f64 {
    0.5
}
fn default_r() -> f64 {
    0.1
}

/// Configuration of one policy, as it appears in config files and on the
/// command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicySpec {
    /// Uniform action choice, posterior stopping.
    Random,
    /// Rank-and-Boost with likelihood-ratio timestamps.
    RnbTheory {
        #[serde(skip_serializing_if = "Option::is_none", default)]
        b: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        alpha: Option<u32>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        multiplicity: Option<usize>,
    },
    /// Truncated with-replacement ranking, cyclic scan, posterior stopping.
    RnbExp {
        #[serde(default = "default_eta")]
        eta: usize,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        b: Option<f64>,
    },
    /// Noiseless-reduction greedy with fixed boosting.
    FaTheory,
    /// Meta-test greedy with posterior stopping.
    FaExp {
        #[serde(default = "default_k_max")]
        k_max: usize,
        #[serde(default = "default_c")]
        c: f64,
    },
    /// Max-min-KL sampling, phase 1 only.
    NjPa,
    /// Two-phase max-min-KL sampling with leader threshold `r`.
    NjAdaptive {
        #[serde(default = "default_r")]
        r: f64,
    },
}

impl PolicySpec {
    pub fn id(&self) -> &'static str {
        match self {
            PolicySpec::Random => "random",
            PolicySpec::RnbTheory { .. } => "rnb-theory",
            PolicySpec::RnbExp { .. } => "rnb-exp",
            PolicySpec::FaTheory => "fa-theory",
            PolicySpec::FaExp { .. } => "fa-exp",
            PolicySpec::NjPa => "nj-pa",
            PolicySpec::NjAdaptive { .. } => "nj-adaptive",
        }
    }

    pub fn parse_flag(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(PolicySpec::Random),
            "rnb-theory" => Ok(PolicySpec::RnbTheory {
                b: None,
                alpha: None,
                multiplicity: None,
            }),
            "rnb-exp" => Ok(PolicySpec::RnbExp {
                eta: default_eta(),
                b: None,
            }),
            "fa-theory" => Ok(PolicySpec::FaTheory),
            "fa-exp" => Ok(PolicySpec::FaExp {
                k_max: default_k_max(),
                c: default_c(),
            }),
            "nj-pa" => Ok(PolicySpec::NjPa),
            "nj-adaptive" => Ok(PolicySpec::NjAdaptive { r: default_r() }),
            other => Err(Error::Config(format!("unknown policy `{other}`"))),
        }
    }
}

enum PreparedKind {
    Random,
    RnbTheory { plan: rnb::RnbPlan },
    RnbExp { plan: rnb::RnbPlan },
    FaTheory { tables: fa::FaTables },
    FaExp { k_max: usize, c: f64 },
    Nj { controller: baselines::NjController },
}

/// A policy bound to one instance and one delta, ready to run trials.
pub struct PreparedPolicy {
    id: &'static str,
    delta: f64,
    kind: PreparedKind,
}

/// Outcome of one trial run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOutcome {
    pub output: usize,
    pub cost: f64,
    pub steps: u64,
    pub capped: bool,
}

pub fn prepare(spec: &PolicySpec, inst: &Instance, delta: f64) -> Result<PreparedPolicy> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidParameter {
            name: "delta",
            reason: format!("delta = {delta} outside (0, 0.5)"),
        });
    }
    let kind = match spec {
        PolicySpec::Random => PreparedKind::Random,
        PolicySpec::RnbTheory {
            b,
            alpha,
            multiplicity,
        } => {
            let mut params = rnb::RnbParams::derived_defaults(inst, delta)?;
            if let Some(b) = b {
                params.b = *b;
            }
            if let Some(alpha) = alpha {
                params.alpha = *alpha;
            }
            if let Some(m) = multiplicity {
                params.multiplicity = *m;
            }
            PreparedKind::RnbTheory {
                plan: rnb::build_plan(inst, &params)?,
            }
        }
        PolicySpec::RnbExp { eta, b } => {
            // Default saturation: one cycle should carry about the evidence
            // the posterior stopping rule consumes, ln(|H|/delta) nats.
            let b = b.unwrap_or((inst.num_hypotheses() as f64 / delta).ln());
            PreparedKind::RnbExp {
                plan: rnb::build_plan_experiment(inst, b, *eta)?,
            }
        }
        PolicySpec::FaTheory => PreparedKind::FaTheory {
            tables: fa::FaTables::build(inst, delta)?,
        },
        PolicySpec::FaExp { k_max, c } => {
            if *k_max < 1 {
                return Err(Error::InvalidParameter {
                    name: "k_max",
                    reason: "k_max must be at least 1".into(),
                });
            }
            if !(*c > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "c",
                    reason: "C must be positive".into(),
                });
            }
            PreparedKind::FaExp {
                k_max: *k_max,
                c: *c,
            }
        }
        PolicySpec::NjPa => PreparedKind::Nj {
            controller: baselines::NjController::new(1.0, delta, true),
        },
        PolicySpec::NjAdaptive { r } => {
            if !(*r > 0.0 && *r < 1.0) {
                return Err(Error::InvalidParameter {
                    name: "r",
                    reason: format!("phase threshold r = {r} outside (0,1)"),
                });
            }
            PreparedKind::Nj {
                controller: baselines::NjController::new(*r, delta, false),
            }
        }
    };
    Ok(PreparedPolicy {
        id: spec.id(),
        delta,
        kind,
    })
}

impl PreparedPolicy {
    pub fn id(&self) -> &'static str {
        self.id
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Drive one trial with `truth` as the ground-truth hypothesis.
    pub fn run(
        &self,
        inst: &Instance,
        truth: usize,
        rng: &mut ChaCha8Rng,
        max_steps: u64,
    ) -> Result<RunOutcome> {
        match &self.kind {
            PreparedKind::Random => {
                self.run_posterior_loop(inst, truth, rng, max_steps, |_, _, rng| {
                    Ok(baselines::random_policy_step(inst, rng))
                })
            }
            PreparedKind::Nj { controller } => {
                self.run_posterior_loop(inst, truth, rng, max_steps, |inst, posterior, rng| {
                    controller.step(inst, posterior, rng)
                })
            }
            PreparedKind::RnbTheory { plan } => {
                let mut sampler = |a: usize| inst.sample_outcome(truth, a, rng);
                let run = rnb::execute(plan, inst, &mut sampler);
                Ok(RunOutcome {
                    output: run.output,
                    cost: run.cost,
                    steps: run.steps,
                    capped: false,
                })
            }
            PreparedKind::RnbExp { plan } => self.run_rnb_cyclic(inst, plan, truth, rng, max_steps),
            PreparedKind::FaTheory { tables } => {
                let mut sampler = |a: usize| inst.sample_outcome(truth, a, rng);
                let run = fa::run_theory(inst, tables, &mut sampler, max_steps)?;
                Ok(RunOutcome {
                    output: run.output,
                    cost: run.cost,
                    steps: run.steps,
                    capped: run.capped,
                })
            }
            PreparedKind::FaExp { k_max, c } => {
                let mut sampler = |a: usize| inst.sample_outcome(truth, a, rng);
                let run =
                    fa::run_experiment(inst, self.delta, *k_max, *c, &mut sampler, max_steps)?;
                Ok(RunOutcome {
                    output: run.output,
                    cost: run.cost,
                    steps: run.steps,
                    capped: run.capped,
                })
            }
        }
    }

    /// Shared loop for posterior-threshold policies: pick an action, observe
    /// one outcome, update, stop at max posterior >= 1 - delta.
    fn run_posterior_loop(
        &self,
        inst: &Instance,
        truth: usize,
        rng: &mut ChaCha8Rng,
        max_steps: u64,
        mut pick: impl FnMut(&Instance, &[f64], &mut ChaCha8Rng) -> Result<usize>,
    ) -> Result<RunOutcome> {
        let mut posterior = PosteriorState::from_prior(inst.prior());
        let mut out = RunOutcome {
            output: 0,
            cost: 0.0,
            steps: 0,
            capped: false,
        };
        loop {
            if posterior.max_prob() >= 1.0 - self.delta {
                out.output = posterior.map_hypothesis();
                return Ok(out);
            }
            if out.steps >= max_steps {
                out.capped = true;
                out.output = posterior.map_hypothesis();
                return Ok(out);
            }
            let a = pick(inst, posterior.probs(), rng)?;
            let y = inst.sample_outcome(truth, a, rng);
            posterior.update(inst, a, y)?;
            out.steps += 1;
            out.cost += inst.cost(a);
        }
    }

    /// Cyclic scan of the experiment plan with posterior stopping.
    fn run_rnb_cyclic(
        &self,
        inst: &Instance,
        plan: &rnb::RnbPlan,
        truth: usize,
        rng: &mut ChaCha8Rng,
        max_steps: u64,
    ) -> Result<RunOutcome> {
        let mut posterior = PosteriorState::from_prior(inst.prior());
        let mut out = RunOutcome {
            output: 0,
            cost: 0.0,
            steps: 0,
            capped: false,
        };
        loop {
            if posterior.max_prob() >= 1.0 - self.delta {
                out.output = posterior.map_hypothesis();
                return Ok(out);
            }
            if out.steps >= max_steps {
                out.capped = true;
                out.output = posterior.map_hypothesis();
                return Ok(out);
            }
            let a = plan.action_at(out.steps as usize + 1);
            let y = inst.sample_outcome(truth, a, rng);
            posterior.update(inst, a, y)?;
            out.steps += 1;
            out.cost += inst.cost(a);
        }
    }
}
