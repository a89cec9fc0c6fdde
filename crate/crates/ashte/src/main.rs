//! `ashte`: generate instances, run policy benchmarks, verify against the
//! oracle suite, and emit plot data.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use asht_core::engine::{self, BatchConfig};
use asht_core::instance::{self, Instance};
use asht_core::policy::PolicySpec;
use asht_core::{bench, report, verify};
use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, GenerateSpec, InstanceSource};

const EXIT_VALIDATION: u8 = 2;
const EXIT_VERIFY: u8 = 3;
const EXIT_NONTERMINATION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "ashte",
    about = "Active sequential hypothesis testing benchmark harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an instance JSON file (synthetic or from a mutation table).
    Gen(GenArgs),
    /// Run policies over instances and emit trial CSV + metrics JSON.
    Run(RunArgs),
    /// Run the oracle verification suite.
    Verify(VerifyArgs),
    /// Join trial CSVs into accuracy-vs-normalized-cost plot data.
    Report(ReportArgs),
    /// Run a canned acceptance benchmark.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of hypotheses.
    #[arg(long)]
    hyps: Option<usize>,
    /// Number of actions.
    #[arg(long)]
    acts: Option<usize>,
    /// Generation mode: uniform01 or grid:K.
    #[arg(long, default_value = "uniform01")]
    mode: String,
    /// Generation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Build the instance from a mutation-probability CSV instead.
    #[arg(long, conflicts_with_all = ["hyps", "acts", "seed"])]
    from_mutations: Option<PathBuf>,
    /// Replacement for zero probabilities in the mutation table.
    #[arg(long, default_value_t = 1e-10)]
    floor: f64,
    /// Output path.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Instance JSON files.
    #[arg(long = "instance")]
    instances: Vec<PathBuf>,
    /// Inline generation spec HYPSxACTS:MODE:SEED, e.g. 25x40:uniform01:1.
    #[arg(long = "gen")]
    gens: Vec<String>,
    /// Policy ids (random, rnb-theory, rnb-exp, fa-theory, fa-exp, nj-pa,
    /// nj-adaptive).
    #[arg(long = "policy")]
    policies: Vec<String>,
    /// Target error levels to sweep.
    #[arg(long = "delta")]
    deltas: Vec<f64>,
    /// Replications per (instance, policy, delta).
    #[arg(long)]
    reps: Option<u64>,
    /// Master seed (default: ASHTE_SEED or 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_metrics: Option<PathBuf>,
    /// Reference policy for cost normalization.
    #[arg(long)]
    reference: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Fuzz corpus seed.
    #[arg(long, default_value_t = 1)]
    fuzz_seed: u64,
    /// Write the pass/fail report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Trial CSV files to join.
    #[arg(long = "trials", required = true)]
    trials: Vec<PathBuf>,
    /// Reference policy whose largest mean cost maps to 1.0.
    #[arg(long, default_value = "random")]
    reference: String,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// One of: pac-rnb, pac-fa, ordering, scarcity, all.
    name: String,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Write the measurements as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn master_seed_default() -> u64 {
    std::env::var("ASHTE_SEED")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

fn cmd_gen(args: &GenArgs) -> anyhow::Result<()> {
    let inst = match &args.from_mutations {
        Some(path) => instance::load_mutation_table_path(path, args.floor)?,
        None => {
            let hyps = args.hyps.context("--hyps required without --from-mutations")?;
            let acts = args.acts.context("--acts required without --from-mutations")?;
            let seed = args.seed.unwrap_or_else(master_seed_default);
            let mode = config::parse_mode(&args.mode)?;
            instance::generate_synthetic(hyps, acts, mode, seed)?
        }
    };
    std::fs::write(&args.out, inst.to_json()?)?;
    println!(
        "wrote {} ({} hypotheses x {} actions, s = {:.3e})",
        args.out.display(),
        inst.num_hypotheses(),
        inst.num_actions(),
        inst.separation()
    );
    Ok(())
}

fn parse_gen_spec(s: &str) -> anyhow::Result<GenerateSpec> {
    // HYPSxACTS:MODE:SEED, where MODE itself may contain a colon (grid:K).
    let (rest, seed) = s
        .rsplit_once(':')
        .with_context(|| format!("bad generation spec `{s}`"))?;
    let (dims, mode) = rest
        .split_once(':')
        .with_context(|| format!("bad generation spec `{s}`"))?;
    let (h, a) = dims
        .split_once('x')
        .with_context(|| format!("bad generation spec `{s}`"))?;
    Ok(GenerateSpec {
        hyps: h.parse()?,
        acts: a.parse()?,
        mode: mode.to_string(),
        seed: seed.parse()?,
    })
}

fn resolve_instances(config: &ExperimentConfig) -> anyhow::Result<Vec<Instance>> {
    let mut out = Vec::new();
    for source in &config.instances {
        match source {
            InstanceSource::File { path } => {
                out.push(Instance::load_json(path).with_context(|| format!("{}", path.display()))?)
            }
            InstanceSource::Generate { generate } => out.push(instance::generate_synthetic(
                generate.hyps,
                generate.acts,
                generate.gen_mode()?,
                generate.seed,
            )?),
        }
    }
    Ok(out)
}

fn merge_run_args(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)
            .with_context(|| format!("parsing {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if !args.instances.is_empty() || !args.gens.is_empty() {
        config.instances.clear();
        for path in &args.instances {
            config.instances.push(InstanceSource::File { path: path.clone() });
        }
        for g in &args.gens {
            config.instances.push(InstanceSource::Generate {
                generate: parse_gen_spec(g)?,
            });
        }
    }
    if !args.policies.is_empty() {
        config.policies = args
            .policies
            .iter()
            .map(|p| PolicySpec::parse_flag(p))
            .collect::<Result<_, _>>()?;
    }
    if !args.deltas.is_empty() {
        config.deltas = args.deltas.clone();
    }
    if let Some(reps) = args.reps {
        config.replications = reps;
    }
    if let Some(seed) = args.seed {
        config.master_seed = Some(seed);
    }
    if let Some(threads) = args.threads {
        config.threads = threads;
    }
    if let Some(path) = &args.out_csv {
        config.out_csv = Some(path.clone());
    }
    if let Some(path) = &args.out_metrics {
        config.out_metrics = Some(path.clone());
    }
    if let Some(reference) = &args.reference {
        config.reference = reference.clone();
    }
    Ok(config)
}

#[derive(serde::Serialize)]
struct MetricsFile<'a> {
    config: &'a ExperimentConfig,
    groups: Vec<engine::Metrics>,
    curves: Vec<report::CurvePoint>,
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<bool> {
    let config = merge_run_args(args)?;
    config.validate()?;
    let instances = resolve_instances(&config)?;
    let batch = BatchConfig {
        deltas: config.deltas.clone(),
        replications: config.replications,
        master_seed: config.master_seed.unwrap_or_else(master_seed_default),
        threads: config.threads,
    };
    let records = engine::run_batch(&instances, &config.policies, &batch)?;
    let capped = records.iter().filter(|r| r.capped).count();

    if let Some(path) = &config.out_csv {
        let mut buf = Vec::new();
        engine::write_trials_csv(&records, &mut buf)?;
        std::fs::write(path, buf)?;
    }

    let mut groups = Vec::new();
    for inst in &instances {
        for spec in &config.policies {
            for &delta in &config.deltas {
                let slice: Vec<engine::TrialRecord> = records
                    .iter()
                    .filter(|r| {
                        r.instance_id == inst.id()
                            && r.policy == spec.id()
                            && r.delta == delta
                    })
                    .cloned()
                    .collect();
                groups.push(engine::aggregate(&slice, inst)?);
            }
        }
    }
    let mut curves = report::pool_curves(&records);
    if config.policies.iter().any(|p| p.id() == config.reference) {
        report::normalize(&mut curves, &config.reference)?;
    }
    if let Some(path) = &config.out_metrics {
        let file = MetricsFile {
            config: &config,
            groups,
            curves,
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    } else {
        for g in &groups {
            println!(
                "{} {} delta={}: accuracy {:.4}, mean cost {:.2} (+-{:.2})",
                g.instance_id, g.policy, g.delta, g.accuracy, g.mean_cost, g.std_cost
            );
        }
    }
    if capped > 0 {
        eprintln!("warning: {capped} trial(s) hit the step cap");
    }
    Ok(capped > 0)
}

fn cmd_verify(args: &VerifyArgs) -> anyhow::Result<bool> {
    let report = verify::run_all(args.fuzz_seed)?;
    for check in &report.checks {
        println!(
            "[{}] {} ({} cases): {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.cases,
            check.detail
        );
    }
    if let Some(path) = &args.out {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report.passed)
}

fn cmd_report(args: &ReportArgs) -> anyhow::Result<()> {
    let mut records = Vec::new();
    for path in &args.trials {
        let file = std::fs::File::open(path).with_context(|| format!("{}", path.display()))?;
        records.extend(engine::read_trials_csv(file)?);
    }
    if records.is_empty() {
        anyhow::bail!("no trial records found");
    }
    let mut points = report::pool_curves(&records);
    report::normalize(&mut points, &args.reference)?;
    let mut buf = Vec::new();
    report::write_plot_csv(&points, &mut buf)?;
    std::fs::write(&args.out, buf)?;
    println!("wrote {} ({} curve points)", args.out.display(), points.len());
    Ok(())
}

fn write_bench_json<T: serde::Serialize>(path: &Option<PathBuf>, value: &T) -> anyhow::Result<()> {
    if let Some(path) = path {
        std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> anyhow::Result<bool> {
    let mut all_passed = true;
    let mut outputs = serde_json::Map::new();
    let names: Vec<&str> = match args.name.as_str() {
        "all" => vec!["pac-rnb", "pac-fa", "ordering", "scarcity"],
        other => vec![other],
    };
    for name in names {
        match name {
            "pac-rnb" | "pac-fa" => {
                let result = if name == "pac-rnb" {
                    bench::rnb_pac_bench(args.threads)?
                } else {
                    bench::fa_pac_bench(args.threads)?
                };
                println!(
                    "[{}] {name}: per-instance error {:?} <= {:.4} ({:.1}s)",
                    if result.passed { "PASS" } else { "FAIL" },
                    result.per_instance_error,
                    result.threshold,
                    result.elapsed_secs
                );
                all_passed &= result.passed;
                outputs.insert(name.into(), serde_json::to_value(&result)?);
            }
            "ordering" => {
                let result = bench::ordering_bench(args.threads)?;
                for m in &result.matched {
                    println!(
                        "  {} cost at accuracy {:.2}: {:.2} (se {:.2})",
                        m.policy, result.target_accuracy, m.cost, m.se
                    );
                }
                println!(
                    "[{}] ordering: fa-exp < rnb-exp < random (gaps {:?}, {:.1}s)",
                    if result.ordering_passed && result.nj_passed {
                        "PASS"
                    } else {
                        "FAIL"
                    },
                    result.gaps_in_se,
                    result.elapsed_secs
                );
                all_passed &= result.ordering_passed && result.nj_passed;
                outputs.insert(name.into(), serde_json::to_value(&result)?);
            }
            "scarcity" => {
                let result = bench::scarcity_bench(args.threads)?;
                println!(
                    "[{}] scarcity: improvement {:.3} (3 actions) vs {:.3} (40 actions) ({:.1}s)",
                    if result.passed { "PASS" } else { "FAIL" },
                    result.improvement_scarce,
                    result.improvement_wide,
                    result.elapsed_secs
                );
                all_passed &= result.passed;
                outputs.insert(name.into(), serde_json::to_value(&result)?);
            }
            other => anyhow::bail!("unknown bench `{other}`"),
        }
    }
    write_bench_json(&args.out, &serde_json::Value::Object(outputs))?;
    Ok(all_passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen(args) => cmd_gen(args).map(|()| ExitCode::SUCCESS),
        Command::Run(args) => cmd_run(args).map(|capped| {
            if capped {
                ExitCode::from(EXIT_NONTERMINATION)
            } else {
                ExitCode::SUCCESS
            }
        }),
        Command::Verify(args) => cmd_verify(args).map(|passed| {
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY)
            }
        }),
        Command::Report(args) => cmd_report(args).map(|()| ExitCode::SUCCESS),
        Command::Bench(args) => cmd_bench(args).map(|passed| {
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY)
            }
        }),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}
