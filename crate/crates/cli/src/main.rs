//! Batch front-end: reproducible experiments over the tandem speed-scaling
//! toolkit with machine-readable output. Exit code 0 when all requested
//! checks pass, 1 on audit violations, 2 on usage or config errors.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use manifest::RunManifest;
use tandemscale::engine::{cost, simulate, SimOptions};
use tandemscale::offline::{closed_form_lb, enhanced_opt, ratios_against};
use tandemscale::policies::{AutonomousPolicy, ProposedPolicy, ReplicationPolicy, SpeedPolicy};
use tandemscale::potential::audit_all;
use tandemscale::power::PowerCurve;
use tandemscale::stochastic::simulate_network;
use tandemscale::workload::{self, gen_batch, gen_poisson, gen_trickle_then_burst};
use tandemscale::{NetworkConfig64, PowerFunction64, Trace64};

#[derive(Parser)]
#[command(
    name = "tandemscale",
    version,
    about = "Speed-scaling simulator, offline bounds, and audits for tandem servers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a unit-job arrival trace file
    GenTrace(GenTraceArgs),
    /// Simulate a trace under a speed policy; emit costs and trajectory
    Simulate(SimulateArgs),
    /// Audit a trace: simulate, solve enhanced OPT, check drift/jumps/bound
    Audit(AuditArgs),
    /// Offline lower bounds for a trace: enhanced OPT and the closed form
    Optbound(OptboundArgs),
    /// Closed forms, lower bounds, certificates, and simulation for a
    /// layered stochastic network
    Stochastic(StochasticArgs),
    /// Sweep policies over a grid of trace patterns; emit a ratio CSV
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenTraceArgs {
    #[command(subcommand)]
    pattern: PatternCmd,
}

#[derive(Subcommand)]
enum PatternCmd {
    /// All jobs arrive at one instant
    Batch {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long)]
        k: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// One job at 0, one at the gap, then a burst just after
    TrickleBurst {
        #[arg(long)]
        gap: f64,
        #[arg(long)]
        burst: usize,
        #[arg(long)]
        k: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Seeded Poisson arrivals truncated at a horizon
    Poisson {
        #[arg(long)]
        rate: f64,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        k: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    Proposed,
    Autonomous,
    Replication,
}

impl PolicyKind {
    fn name(self) -> &'static str {
        match self {
            PolicyKind::Proposed => "proposed",
            PolicyKind::Autonomous => "autonomous",
            PolicyKind::Replication => "replication",
        }
    }

    fn build(self, pf: PowerFunction64) -> Box<dyn SpeedPolicy<f64>> {
        match self {
            PolicyKind::Proposed => Box::new(ProposedPolicy::new(pf)),
            PolicyKind::Autonomous => Box::new(AutonomousPolicy::new(pf)),
            PolicyKind::Replication => Box::new(ReplicationPolicy::new(pf)),
        }
    }
}

fn parse_power(arg: &str) -> Result<PowerFunction64, String> {
    let parts: Vec<&str> = arg.split(',').collect();
    let parse = |s: &str| -> Result<f64, String> {
        s.trim()
            .parse::<f64>()
            .map_err(|e| format!("bad power component {s:?}: {e}"))
    };
    match parts.len() {
        2 => PowerFunction64::new(parse(parts[0])?, parse(parts[1])?).map_err(|e| e.to_string()),
        3 => PowerFunction64::with_cap(parse(parts[0])?, parse(parts[1])?, parse(parts[2])?)
            .map_err(|e| e.to_string()),
        _ => Err("expected c,alpha or c,alpha,cap".into()),
    }
}

#[derive(Args)]
struct SimulateArgs {
    trace: PathBuf,
    #[arg(long, value_enum)]
    policy: PolicyKind,
    /// Power curve as c,alpha or c,alpha,cap
    #[arg(long, value_parser = parse_power, default_value = "1,2")]
    power: PowerFunction64,
    /// Write the cost table here instead of stdout
    #[arg(long)]
    out_costs: Option<PathBuf>,
    /// Also export the full trajectory as JSON
    #[arg(long)]
    out_trajectory: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    trace: PathBuf,
    /// Charge multiplier in the drift and jump audits
    #[arg(long = "c", default_value_t = 6.0)]
    charge: f64,
    #[arg(long, value_parser = parse_power, default_value = "1,2")]
    power: PowerFunction64,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptboundArgs {
    trace: PathBuf,
    #[arg(long, value_parser = parse_power, default_value = "1,2")]
    power: PowerFunction64,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StochasticArgs {
    config: PathBuf,
    #[arg(long)]
    horizon: f64,
    /// Defaults to 10% of the horizon
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Also write the per-layer table as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| e.to_string()))
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PatternKind {
    Batch,
    TrickleBurst,
    Poisson,
}

impl PatternKind {
    fn name(self) -> &'static str {
        match self {
            PatternKind::Batch => "batch",
            PatternKind::TrickleBurst => "trickle-burst",
            PatternKind::Poisson => "poisson",
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    /// Job counts, comma separated (empty list allowed)
    #[arg(long, value_parser = parse_usize_list, default_value = "1,2,5,10,20,50")]
    n_list: std::vec::Vec<usize>,
    /// Server counts, comma separated
    #[arg(long, value_parser = parse_usize_list, default_value = "1,2,4,8")]
    k_list: std::vec::Vec<usize>,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "batch,trickle-burst,poisson"
    )]
    patterns: Vec<PatternKind>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "proposed")]
    policies: Vec<PolicyKind>,
    #[arg(long, value_parser = parse_power, default_value = "1,2")]
    power: PowerFunction64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenTrace(args) => cmd_gen_trace(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Audit(args) => cmd_audit(args),
        Command::Optbound(args) => cmd_optbound(args),
        Command::Stochastic(args) => cmd_stochastic(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match outcome {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn write_or_print(path: Option<&Path>, body: &str) -> Result<(), String> {
    match path {
        Some(p) => std::fs::write(p, body).map_err(|e| format!("writing {}: {e}", p.display())),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn load_trace(path: &Path) -> Result<Trace64, String> {
    workload::parse(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_gen_trace(args: GenTraceArgs) -> Result<ExitCode, String> {
    let (manifest, trace, out) = match args.pattern {
        PatternCmd::Batch { n, t0, k, out } => {
            if t0 < 0.0 || !t0.is_finite() {
                return Err("t0 must be nonnegative".into());
            }
            if k == 0 {
                return Err("k must be at least 1".into());
            }
            let manifest = RunManifest::new(
                "gen-trace",
                json!({"pattern": "batch", "n": n, "t0": t0, "k": k}),
            );
            (manifest, gen_batch(n, t0, k), out)
        }
        PatternCmd::TrickleBurst { gap, burst, k, out } => {
            if gap <= 0.0 || !gap.is_finite() {
                return Err("gap must be positive".into());
            }
            if k == 0 {
                return Err("k must be at least 1".into());
            }
            let manifest = RunManifest::new(
                "gen-trace",
                json!({"pattern": "trickle-burst", "gap": gap, "burst": burst, "k": k}),
            );
            (manifest, gen_trickle_then_burst(gap, burst, k), out)
        }
        PatternCmd::Poisson {
            rate,
            horizon,
            seed,
            k,
            out,
        } => {
            if rate <= 0.0 || horizon < 0.0 {
                return Err("rate must be positive and horizon nonnegative".into());
            }
            if k == 0 {
                return Err("k must be at least 1".into());
            }
            let manifest = RunManifest::new(
                "gen-trace",
                json!({"pattern": "poisson", "rate": rate, "horizon": horizon, "k": k}),
            )
            .with_seed(seed);
            (manifest, gen_poisson(rate, horizon, seed, k), out)
        }
    };
    // The trace file format is pinned (header line plus one record per
    // job), so the manifest goes to stdout rather than into the file.
    workload::emit(&trace, &out).map_err(|e| e.to_string())?;
    #[derive(Serialize)]
    struct GenTraceResult {
        path: String,
        jobs: usize,
        k: usize,
    }
    print!(
        "{}",
        manifest.envelope(&GenTraceResult {
            path: out.display().to_string(),
            jobs: trace.job_count(),
            k: trace.servers(),
        })
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct CostRow<'a> {
    policy: &'a str,
    power_c: f64,
    power_alpha: f64,
    power_cap: Option<f64>,
    jobs: usize,
    servers: usize,
    flow_time: f64,
    energy: f64,
    total: f64,
}

fn power_params(pf: &PowerFunction64) -> serde_json::Value {
    serde_json::to_value(pf).expect("power serializable")
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, String> {
    let trace = load_trace(&args.trace)?;
    let manifest = RunManifest::new(
        "simulate",
        json!({
            "trace": args.trace.display().to_string(),
            "policy": args.policy.name(),
            "power": power_params(&args.power),
        }),
    )
    .with_input(&args.trace)
    .map_err(|e| e.to_string())?;

    let policy = args.policy.build(args.power);
    let traj =
        simulate(&trace, policy.as_ref(), &SimOptions::default()).map_err(|e| e.to_string())?;
    let report = cost(&traj).map_err(|e| e.to_string())?;

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .serialize(CostRow {
            policy: args.policy.name(),
            power_c: args.power.coefficient(),
            power_alpha: args.power.exponent(),
            power_cap: args.power.speed_cap(),
            jobs: trace.job_count(),
            servers: trace.servers(),
            flow_time: report.flow_time,
            energy: report.energy,
            total: report.total,
        })
        .map_err(|e| e.to_string())?;
    let table =
        String::from_utf8(writer.into_inner().map_err(|e| e.to_string())?).expect("csv is utf-8");
    let body = format!("{}{}", manifest.csv_header(), table);
    write_or_print(args.out_costs.as_deref(), &body)?;

    if let Some(path) = &args.out_trajectory {
        std::fs::write(path, manifest.envelope(&traj))
            .map_err(|e| format!("writing {}: {e}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_audit(args: AuditArgs) -> Result<ExitCode, String> {
    let trace = load_trace(&args.trace)?;
    if args.charge <= 0.0 || !args.charge.is_finite() {
        return Err("charge must be positive".into());
    }
    let manifest = RunManifest::new(
        "audit",
        json!({
            "trace": args.trace.display().to_string(),
            "c": args.charge,
            "power": power_params(&args.power),
        }),
    )
    .with_input(&args.trace)
    .map_err(|e| e.to_string())?;

    let pf = args.power;
    let policy = ProposedPolicy::new(pf);
    let traj = simulate(&trace, &policy, &SimOptions::default()).map_err(|e| e.to_string())?;
    let opt = enhanced_opt(&trace, &pf);
    let report = audit_all(&traj, &opt, &pf, args.charge).map_err(|e| e.to_string())?;

    let violations = report.drift.violations.len()
        + report.jumps.arrival_jump_violations.len()
        + usize::from(!report.jumps.pass && report.jumps.arrival_jump_violations.is_empty())
        + usize::from(!report.integrated.pass);

    #[derive(Serialize)]
    struct AuditResult<'a> {
        pass: bool,
        violations: usize,
        jobs: usize,
        servers: usize,
        report: &'a tandemscale::potential::AuditReport<f64>,
    }
    let body = manifest.envelope(&AuditResult {
        pass: report.pass,
        violations,
        jobs: trace.job_count(),
        servers: trace.servers(),
        report: &report,
    });
    write_or_print(args.out.as_deref(), &body)?;
    eprintln!(
        "drift: {} ({} violations in {} samples); jumps: {} ({:.4} of {:.4}); bound: {} (slack {:.4})",
        if report.drift.pass { "pass" } else { "FAIL" },
        report.drift.violations.len(),
        report.drift.sampled,
        if report.jumps.pass { "pass" } else { "FAIL" },
        report.jumps.total_increase,
        report.jumps.budget,
        if report.integrated.pass { "pass" } else { "FAIL" },
        report.integrated.slack,
    );
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_optbound(args: OptboundArgs) -> Result<ExitCode, String> {
    let trace = load_trace(&args.trace)?;
    let manifest = RunManifest::new(
        "optbound",
        json!({
            "trace": args.trace.display().to_string(),
            "power": power_params(&args.power),
        }),
    )
    .with_input(&args.trace)
    .map_err(|e| e.to_string())?;
    let opt = enhanced_opt(&trace, &args.power);
    #[derive(Serialize)]
    struct OptboundResult {
        jobs: usize,
        servers: usize,
        closed_form_lb: f64,
        opt_e_cost: f64,
        schedule: tandemscale::OptSchedule64,
    }
    let body = manifest.envelope(&OptboundResult {
        jobs: trace.job_count(),
        servers: trace.servers(),
        closed_form_lb: closed_form_lb(trace.job_count(), trace.servers(), &args.power),
        opt_e_cost: opt.cost,
        schedule: opt,
    });
    write_or_print(args.out.as_deref(), &body)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_stochastic(args: StochasticArgs) -> Result<ExitCode, String> {
    let raw = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("{}: {e}", args.config.display()))?;
    let cfg: NetworkConfig64 =
        serde_json::from_str(&raw).map_err(|e| format!("{}: {e}", args.config.display()))?;
    cfg.validate().map_err(|e| e.to_string())?;
    let warmup = args.warmup.unwrap_or(0.1 * args.horizon);
    let manifest = RunManifest::new(
        "stochastic",
        json!({
            "config": args.config.display().to_string(),
            "horizon": args.horizon,
            "warmup": warmup,
        }),
    )
    .with_seed(args.seed)
    .with_input(&args.config)
    .map_err(|e| e.to_string())?;
    let report =
        simulate_network(&cfg, args.horizon, warmup, args.seed).map_err(|e| e.to_string())?;
    let body = manifest.envelope(&report);
    write_or_print(args.out.as_deref(), &body)?;

    if let Some(path) = &args.csv {
        #[derive(Serialize)]
        struct LayerRow {
            layer: usize,
            m: usize,
            mu: f64,
            c: f64,
            alpha: f64,
            gated_speed: f64,
            closed_form: f64,
            sim_cost: f64,
            mean_response: f64,
            response_halfwidth: f64,
            energy_per_job: f64,
            energy_halfwidth: f64,
            lb_energy: f64,
            lb_isolation: f64,
            certificate: f64,
            completed: u64,
        }
        let mut writer = csv::Writer::from_writer(Vec::new());
        for (i, layer) in report.layers.iter().enumerate() {
            writer
                .serialize(LayerRow {
                    layer: i + 1,
                    m: cfg.layers[i].m,
                    mu: cfg.layers[i].mu,
                    c: cfg.layers[i].c,
                    alpha: cfg.layers[i].alpha,
                    gated_speed: layer.gated_speed,
                    closed_form: layer.closed_form,
                    sim_cost: layer.sim_cost,
                    mean_response: layer.mean_response,
                    response_halfwidth: layer.response_halfwidth,
                    energy_per_job: layer.energy_per_job,
                    energy_halfwidth: layer.energy_halfwidth,
                    lb_energy: layer.lb_energy,
                    lb_isolation: layer.lb_isolation,
                    certificate: layer.certificate,
                    completed: layer.completed,
                })
                .map_err(|e| e.to_string())?;
        }
        let table = String::from_utf8(writer.into_inner().map_err(|e| e.to_string())?)
            .expect("csv is utf-8");
        std::fs::write(path, format!("{}{}", manifest.csv_header(), table))
            .map_err(|e| format!("writing {}: {e}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SweepRow {
    pattern: &'static str,
    n: usize,
    k: usize,
    policy: &'static str,
    jobs: usize,
    flow_time: f64,
    energy: f64,
    total: f64,
    opt_e_cost: f64,
    closed_form_lb: f64,
    ratio_vs_opt_e: Option<f64>,
    ratio_vs_closed_form: Option<f64>,
    finalbound_slack: f64,
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode, String> {
    let manifest = RunManifest::new(
        "sweep",
        json!({
            "n_list": args.n_list,
            "k_list": args.k_list,
            "patterns": args.patterns.iter().map(|p| p.name()).collect::<Vec<_>>(),
            "policies": args.policies.iter().map(|p| p.name()).collect::<Vec<_>>(),
            "power": power_params(&args.power),
        }),
    )
    .with_seed(args.seed);

    let mut cells = Vec::new();
    for &pattern in &args.patterns {
        for &n in &args.n_list {
            for &k in &args.k_list {
                cells.push((pattern, n, k, cells.len() as u64));
            }
        }
    }

    let pf = args.power;
    let policies = args.policies.clone();
    let seed = args.seed;
    let threads = std::env::var("TANDEMSCALE_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| e.to_string())?;

    let rows: Result<Vec<Vec<SweepRow>>, String> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(pattern, n, k, index)| {
                let trace = match pattern {
                    PatternKind::Batch => gen_batch(n, 0.0, k),
                    PatternKind::TrickleBurst => {
                        gen_trickle_then_burst(1.0, n.saturating_sub(2), k)
                    }
                    PatternKind::Poisson => gen_poisson(1.0, n as f64, seed.wrapping_add(index), k),
                };
                let opt = enhanced_opt(&trace, &pf);
                let closed = closed_form_lb(trace.job_count(), k, &pf);
                policies
                    .iter()
                    .map(|&policy| {
                        let built = policy.build(pf);
                        let traj = simulate(&trace, built.as_ref(), &SimOptions::default())
                            .map_err(|e| e.to_string())?;
                        let report = cost(&traj).map_err(|e| e.to_string())?;
                        let ratios = ratios_against(&trace, &pf, report.total, &opt)
                            .map_err(|e| e.to_string())?;
                        Ok(SweepRow {
                            pattern: pattern.name(),
                            n,
                            k,
                            policy: policy.name(),
                            jobs: trace.job_count(),
                            flow_time: report.flow_time,
                            energy: report.energy,
                            total: report.total,
                            opt_e_cost: opt.cost,
                            closed_form_lb: closed,
                            ratio_vs_opt_e: ratios.vs_opt_e,
                            ratio_vs_closed_form: ratios.vs_closed_form,
                            finalbound_slack: ratios.finalbound_slack,
                        })
                    })
                    .collect()
            })
            .collect()
    });

    let mut writer = csv::Writer::from_writer(Vec::new());
    // Header row survives even an empty grid.
    if cells.is_empty() || args.policies.is_empty() {
        writer
            .write_record([
                "pattern",
                "n",
                "k",
                "policy",
                "jobs",
                "flow_time",
                "energy",
                "total",
                "opt_e_cost",
                "closed_form_lb",
                "ratio_vs_opt_e",
                "ratio_vs_closed_form",
                "finalbound_slack",
            ])
            .map_err(|e| e.to_string())?;
    }
    for cell_rows in rows? {
        for row in cell_rows {
            writer.serialize(row).map_err(|e| e.to_string())?;
        }
    }
    let table =
        String::from_utf8(writer.into_inner().map_err(|e| e.to_string())?).expect("csv is utf-8");
    let body = format!("{}{}", manifest.csv_header(), table);
    write_or_print(args.out.as_deref(), &body)?;
    Ok(ExitCode::SUCCESS)
}
