use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use travelers_core::adversary::{corrupt, corrupt_unchecked, AdversaryState};
use travelers_core::analysis::{complexity_estimates, hub_plan, plan_hubs, singleton_plan_with_paths};
use travelers_core::assignment::{Assigner, BlockRandomness};
use travelers_core::harness::acceptance::{self, Scale};
use travelers_core::harness::report::trial_seed;
use travelers_core::harness::{complexity_report, run, simulate, ExperimentConfig, RunReport, SweepSettings, TrialMetrics};
use travelers_core::simnet::{stream_seed, Stream};
use travelers_core::SystemParams;

#[derive(Parser)]
#[command(name = "travelers", version, about = "Hub/path timestamping simulator and analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form parameter planning.
    Plan {
        #[command(subcommand)]
        which: PlanCommand,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the path table of one block as CSV.
    Topology(TopologyArgs),
    /// Run one experiment and write its JSON report.
    Run(RunArgs),
    /// Run an experiment for each value of one parameter and write CSV.
    Sweep(SweepArgs),
    /// Run the acceptance suite.
    Verify(VerifyArgs),
}

#[derive(Subcommand)]
enum PlanCommand {
    /// Singleton hubs: path length and client retries for error exponent `c`.
    Singleton {
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = 1.2)]
        c: f64,
        #[arg(long, default_value_t = 2.0 / 3.0)]
        p_h: f64,
        #[arg(long, default_value_t = 1.0 / 3.0)]
        p_d: f64,
        /// Paths per block; defaults to `n`.
        #[arg(long)]
        paths: Option<u32>,
    },
    /// Multi-node hubs. With `--q` the given hub is evaluated, otherwise the smallest suitable one is searched.
    Hubs {
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 2)]
        k: u32,
        #[arg(long, default_value_t = 1.0 / 3.0)]
        p_corrupt: f64,
        #[arg(long, default_value_t = 0.9)]
        target: f64,
        #[arg(long)]
        q: Option<u32>,
        #[arg(long)]
        t: Option<u32>,
        #[arg(long, default_value_t = 8)]
        retries: u32,
        #[arg(long)]
        paths: Option<u32>,
    },
    /// Asymptotic per-transaction cost of the compared protocols.
    Compare {
        #[arg(long)]
        n: f64,
        #[arg(long, default_value_t = 1000.0)]
        txs: f64,
        #[arg(long, default_value_t = 250.0)]
        payload: f64,
        #[arg(long, default_value_t = 32.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's trial count.
    #[arg(long)]
    trials: Option<u32>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TopologyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    block: u64,
    /// Trial whose corruption draw labels the members.
    #[arg(long, default_value_t = 0)]
    trial: u32,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Per-trial metrics as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Event trace of trial 0 as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config (TOML). Not needed with `--complexity`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parameter to vary, e.g. `n`, `q`, `k`, `delta_net`, `kappa`, `transactions`, `delay_prob`.
    #[arg(long, required_unless_present = "complexity")]
    param: Option<String>,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required_unless_present = "complexity")]
    values: Vec<f64>,
    /// Byte-cost sweep over `n` with `q = ceil(3 log2 n)`, ignoring the config.
    #[arg(long)]
    complexity: bool,
    /// Network sizes for `--complexity`.
    #[arg(long, value_delimiter = ',', default_values_t = vec![64u32, 128, 256, 512])]
    ns: Vec<u32>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Reduced sizes for a quick check. Results are not the pinned criteria.
    #[arg(long)]
    smoke: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn writer(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut w = writer(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn plan(which: PlanCommand, out: Option<&Path>) -> Result<()> {
    match which {
        PlanCommand::Singleton { n, c, p_h, p_d, paths } => {
            write_json(&singleton_plan_with_paths(n, c, p_h, p_d, paths.unwrap_or(n))?, out)
        }
        PlanCommand::Hubs { n, c, k, p_corrupt, target, q, t, retries, paths } => {
            let paths = paths.unwrap_or(n);
            let plan = match q {
                Some(q) => {
                    let t = t.unwrap_or_else(|| travelers_core::analysis::two_thirds_threshold(q));
                    hub_plan(q, t, k, p_corrupt, retries, paths)?
                }
                None => plan_hubs(n, c, k, p_corrupt, target, paths)?,
            };
            write_json(&plan, out)
        }
        PlanCommand::Compare { n, txs, payload, lambda, c } => write_json(&complexity_estimates(n, txs, payload, lambda, c), out),
    }
}

#[derive(Serialize)]
struct TopologyRow {
    block: u64,
    path: u32,
    hub: u32,
    hub_type: String,
    slot: u32,
    node: u32,
    corrupted: bool,
}

fn topology(args: TopologyArgs) -> Result<()> {
    let cfg = args.common.load()?;
    let seed = trial_seed(&cfg, args.trial);
    let p = &cfg.params;
    let adv: AdversaryState = match (cfg.adversary.corrupt, cfg.adversary.allow_stress) {
        (false, _) => AdversaryState::honest(p.n),
        (true, false) => corrupt(seed, p.n, p.f())?,
        (true, true) => corrupt_unchecked(seed, p.n, p.f()),
    };
    let rand = BlockRandomness::from_beacon(stream_seed(seed, Stream::Beacon), args.block);
    let paths = Assigner::new(p).with_decryption(cfg.decryption_set.as_ref()).enumerate_paths(&rand);
    let mut w = csv::Writer::from_writer(writer(args.common.out.as_deref())?);
    for path in &paths {
        for (hub, ty) in path.hubs.iter().zip(adv.hub_types(path, p.t)) {
            for (slot, node) in hub.members.iter().enumerate() {
                w.serialize(TopologyRow {
                    block: args.block,
                    path: path.path_id,
                    hub: hub.hub_index,
                    hub_type: format!("{ty:?}"),
                    slot: slot as u32,
                    node: node.0,
                    corrupted: adv.is_corrupted(*node),
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TrialRow {
    trial: u32,
    seed: u64,
    transactions: u64,
    traversals: u64,
    regular_paths: u64,
    mixed_paths: u64,
    corrupted_paths: u64,
    impasse_paths: u64,
    delivered: u64,
    adversary_delivered: u64,
    stalled: u64,
    tactics_rejected: u64,
    kind_true: u64,
    kind_advanced: u64,
    kind_delayed: u64,
    kind_arbitrary: u64,
    committed_txs: u64,
    commit_rate: f64,
    censored_certs: u64,
    fairness_pairs: u64,
    fairness_violations: u64,
    delayed_filter_counterexamples: u64,
    submission_bytes_per_tx: f64,
    delivery_bytes_per_tx: f64,
    messages_per_tx: f64,
    latency_p50: i64,
    latency_p99: i64,
    feasible_traps: Option<u64>,
}

impl From<&TrialMetrics> for TrialRow {
    fn from(m: &TrialMetrics) -> Self {
        TrialRow {
            trial: m.trial,
            seed: m.seed,
            transactions: m.transactions,
            traversals: m.traversals,
            regular_paths: m.paths.regular,
            mixed_paths: m.paths.mixed,
            corrupted_paths: m.paths.corrupted,
            impasse_paths: m.paths.contains_impasse,
            delivered: m.delivered,
            adversary_delivered: m.adversary_delivered,
            stalled: m.stalled,
            tactics_rejected: m.tactics_rejected,
            kind_true: m.kinds.true_kind,
            kind_advanced: m.kinds.advanced,
            kind_delayed: m.kinds.delayed,
            kind_arbitrary: m.kinds.arbitrary,
            committed_txs: m.committed_txs,
            commit_rate: m.commit_rate,
            censored_certs: m.censored_certs,
            fairness_pairs: m.fairness.pairs_checked,
            fairness_violations: m.fairness.violation_count,
            delayed_filter_counterexamples: m.delayed_filter_counterexamples,
            submission_bytes_per_tx: m.submission_bytes_per_tx,
            delivery_bytes_per_tx: m.delivery_bytes_per_tx,
            messages_per_tx: m.messages_per_tx,
            latency_p50: m.latency.p50,
            latency_p99: m.latency.p99,
            feasible_traps: m.sandwich.as_ref().map(|s| s.feasible),
        }
    }
}

fn run_cmd(args: RunArgs) -> Result<()> {
    let cfg = args.common.load()?;
    let report: RunReport = run(&cfg)?;
    write_json(&report, args.common.out.as_deref())?;
    if let Some(path) = &args.csv {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        for m in &report.trials {
            w.serialize(TrialRow::from(m))?;
        }
        w.flush()?;
    }
    if let Some(path) = &args.trace {
        let out = simulate(&cfg, 0, trial_seed(&cfg, 0), true)?;
        let mut w = writer(Some(path))?;
        for rec in out.trace.unwrap_or_default() {
            serde_json::to_writer(&mut w, &rec)?;
            writeln!(w)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn set_param(cfg: &mut ExperimentConfig, name: &str, v: f64) -> Result<()> {
    let whole = || -> Result<u32> {
        if v.fract() != 0.0 || v < 0.0 {
            bail!("{name} needs a non-negative integer, got {v}");
        }
        Ok(v as u32)
    };
    let p: &mut SystemParams = &mut cfg.params;
    match name {
        "n" => p.n = whole()?,
        "f" => p.f = Some(whole()?),
        "q" => p.q = whole()?,
        "t" => p.t = whole()?,
        "k" => p.k = whole()?,
        "c" => p.c = v,
        "delta_net" => p.delta_net = whole()? as i64,
        "delta_clock" => p.delta_clock = whole()? as i64,
        "kappa" => p.kappa = v,
        "lambda_bytes" => p.lambda_bytes = whole()?,
        "paths_per_block" => p.paths_per_block = Some(whole()?),
        "transactions" => cfg.workload.transactions = whole()?,
        "paths_per_tx" => cfg.workload.paths_per_tx = whole()?,
        "payload_len" => cfg.workload.payload_len = whole()?,
        "mean_gap" => cfg.workload.mean_gap = whole()? as i64,
        "hidden_fraction" => cfg.workload.hidden_fraction = v,
        "block_interval" => cfg.block_interval = whole()? as i64,
        "delay_prob" => cfg.adversary.policy.delay_prob = v,
        "advance_prob" => cfg.adversary.policy.advance_prob = v,
        "victim_fraction" => cfg.adversary.policy.victim_fraction = v,
        other => bail!("unknown sweep parameter {other:?}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    param: String,
    value: f64,
    trials: u64,
    transactions: u64,
    commit_rate: f64,
    commit_lower: f64,
    commit_upper: f64,
    corrupted_table_rate: f64,
    stalled_rate: f64,
    fairness_violations: u64,
    delayed_filter_counterexamples: u64,
    submission_bytes_per_tx: f64,
    messages_per_tx: f64,
}

fn sweep(args: SweepArgs) -> Result<()> {
    if args.complexity {
        let mut settings = SweepSettings { ns: args.ns.clone(), ..Default::default() };
        if let Some(s) = args.seed {
            settings.seed = s;
        }
        let report = complexity_report(&settings)?;
        let mut w = csv::Writer::from_writer(writer(args.out.as_deref())?);
        for row in &report.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        eprintln!("fit slope {:.4}, R2 {:.6}", report.slope, report.r2);
        return Ok(());
    }
    let Some(config) = &args.config else { bail!("--config is required unless --complexity is set") };
    let common = Common { config: config.clone(), seed: args.seed, trials: args.trials, out: None };
    let base = common.load()?;
    let name = args.param.as_deref().expect("clap enforces --param");
    let mut w = csv::Writer::from_writer(writer(args.out.as_deref())?);
    for &v in &args.values {
        let mut cfg = base.clone();
        set_param(&mut cfg, name, v)?;
        cfg.validate().with_context(|| format!("{name} = {v}"))?;
        let a = run(&cfg)?.aggregate;
        w.serialize(SweepRow {
            param: name.to_string(),
            value: v,
            trials: a.trials,
            transactions: a.transactions,
            commit_rate: a.committed.estimate,
            commit_lower: a.committed.lower,
            commit_upper: a.committed.upper,
            corrupted_table_rate: a.corrupted_table.estimate,
            stalled_rate: a.stalled.estimate,
            fairness_violations: a.fairness_violations,
            delayed_filter_counterexamples: a.delayed_filter_counterexamples,
            submission_bytes_per_tx: a.mean_submission_bytes_per_tx,
            messages_per_tx: a.mean_messages_per_tx,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<bool> {
    let scale = if args.smoke { Scale::smoke() } else { Scale::full() };
    let results = acceptance::run_all(&scale)?;
    for r in &results {
        println!("{}", r.line());
    }
    if let Some(path) = &args.out {
        write_json(&results, Some(path))?;
    }
    Ok(results.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan { which, out } => plan(which, out.as_deref()).map(|_| true),
        Command::Topology(a) => topology(a).map(|_| true),
        Command::Run(a) => run_cmd(a).map(|_| true),
        Command::Sweep(a) => sweep(a).map(|_| true),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
