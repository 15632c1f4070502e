//! The `deconfound` command line.
//!
//! Exit codes: 0 success, 2 invalid input, 3 degenerate group under
//! `--fallback error`, 4 empirical data exhausted.

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{
    allocate_budget, lower_bound_w, m_base, m_policy, owsp_vs_nsp_ratio_witness, solve_min_m, worst_case_m,
    AccuracySpec, BoundValue,
};
use crate::error::{Error, Result};
use crate::estimate::{
    estimate_deconfounded_only, estimate_finite, estimate_stratified_ite, estimate_with_known_confounded,
    EstimationResult, Fallback,
};
use crate::io::{self, InstanceFile};
use crate::model::{
    adversarial_instance, ate_exact, general_lower_pair, hardness_pair, joint_from_parts, parts_from_joint, policy_lower_pair,
    random_instance, AdversarialCase, ConditionalTable, ConfoundedDistribution, Group, HardInstancePair, PairParams,
    Stratum,
};
use crate::policy::{policy_weights, Policy, PolicyWeights};
use crate::sim::{run_empirical_experiment, run_finite_experiment, run_infinite_experiment, ErrorCurve};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_EXHAUSTED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "deconfound", version, about = "ATE estimation with selectively deconfounded data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact ATE of an instance file.
    Ate(AteArgs),
    /// Plug-in ATE estimate from a record CSV.
    Estimate(EstimateArgs),
    /// Sample-complexity bounds and sample-size planning.
    Plan(PlanArgs),
    /// Write a random, adversarial or lower-bound instance.
    GenInstance(GenArgs),
    /// Error curves with unlimited confounded data.
    Simulate(SimArgs),
    /// Error curves over a grid of confounded sample sizes.
    SimulateFinite(SimArgs),
    /// Error curves with a fully revealed record table as ground truth.
    SimulateReal(RealArgs),
}

#[derive(Debug, Args)]
struct AteArgs {
    #[arg(long)]
    instance: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimateMode {
    DeconfOnly,
    KnownA,
    Finite,
    Stratified,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FallbackArg {
    Error,
    Uniform,
}

impl From<FallbackArg> for Fallback {
    fn from(f: FallbackArg) -> Self {
        match f {
            FallbackArg::Error => Fallback::Error,
            FallbackArg::Uniform => Fallback::Uniform,
        }
    }
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Confounder cardinality.
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, value_enum)]
    mode: EstimateMode,
    /// File with the known marginal `a` (required by known-a).
    #[arg(long)]
    a_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "uniform")]
    fallback: FallbackArg,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlanFormat {
    Text,
    Csv,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    delta: f64,
    /// Instance with both `a` and `q`.
    #[arg(long, conflicts_with = "a_file")]
    instance: Option<PathBuf>,
    /// Marginal only; enables the q-free worst-case and lower bounds.
    #[arg(long)]
    a_file: Option<PathBuf>,
    /// Confounder cardinality when no instance gives it.
    #[arg(long)]
    k: Option<usize>,
    /// Floor on every q entry for worst-case and lower bounds.
    #[arg(long)]
    beta: Option<f64>,
    /// Constant in front of the lower bounds.
    #[arg(long, default_value_t = 1.0)]
    c1: f64,
    /// Confounded samples available; prints the minimum m per policy.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long, requires_all = ["cost_confounded", "cost_deconfound"])]
    budget: Option<f64>,
    #[arg(long)]
    cost_confounded: Option<f64>,
    #[arg(long)]
    cost_deconfound: Option<f64>,
    /// Grid points along the budget line.
    #[arg(long, default_value_t = 200)]
    grid: usize,
    /// Restrict policy-dependent lines to one policy.
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Custom weights w00,w01,w10,w11.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "text")]
    format: PlanFormat,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Nsp,
    Usp,
    Owsp,
    Custom,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LowerBoundKind {
    General,
    Policy,
    OwspNsp,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("kind").required(true).args(["random", "adversarial", "hardness", "lower_bound"])))]
struct GenArgs {
    /// Joint table uniform on the simplex with this many confounder values.
    #[arg(long, value_name = "K", requires = "seed")]
    random: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "CASE")]
    adversarial: Option<AdversarialCase>,
    /// Near-indistinguishable pair with a large ATE gap.
    #[arg(long, requires_all = ["gamma", "q_floor"])]
    hardness: bool,
    #[arg(long, value_enum)]
    lower_bound: Option<LowerBoundKind>,
    /// Marginal for pair constructions, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "a_file")]
    a: Option<Vec<f64>>,
    #[arg(long)]
    a_file: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    q_floor: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    q00: Option<f64>,
    #[arg(long)]
    q01: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; output does not depend on it.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Args)]
struct RealArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Fully revealed y,t,z records.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 2)]
    k: usize,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::DegenerateGroup(_) => EXIT_DEGENERATE,
        Error::Exhausted { .. } => EXIT_EXHAUSTED,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_INPUT
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::Ate(a) => cmd_ate(&a, out),
        Command::Estimate(a) => cmd_estimate(&a, out),
        Command::Plan(a) => cmd_plan(&a, out, err),
        Command::GenInstance(a) => cmd_gen_instance(&a, out),
        Command::Simulate(a) => {
            let config = load_config(&a)?;
            emit_curve(&a, &run_infinite_experiment(&config, a.workers)?)
        }
        Command::SimulateFinite(a) => {
            let config = load_config(&a)?;
            emit_curve(&a, &run_finite_experiment(&config, a.workers)?)
        }
        Command::SimulateReal(a) => {
            let config = load_config(&a.sim)?;
            let table = io::read_full_table(&a.data, a.k)?;
            emit_curve(&a.sim, &run_empirical_experiment(&table, &config, a.sim.workers)?)
        }
    }
}

/// `v` with `digits` significant digits.
pub fn sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

fn strata_text(strata: &[Stratum]) -> String {
    if strata.is_empty() {
        return "none".into();
    }
    strata
        .iter()
        .map(|s| format!("(t={}, z={})", s.t, s.z))
        .collect::<Vec<_>>()
        .join(" ")
}

fn groups_text(groups: &[Group]) -> String {
    if groups.is_empty() {
        return "none".into();
    }
    groups
        .iter()
        .map(|g| format!("(y={}, t={})", g.y, g.t))
        .collect::<Vec<_>>()
        .join(" ")
}

fn cmd_ate(args: &AteArgs, out: &mut dyn Write) -> Result<()> {
    let p = io::read_instance(&args.instance)?;
    let ate = ate_exact(&p);
    writeln!(out, "ate = {}", sig(ate.value, 10))?;
    writeln!(out, "degenerate strata: {}", strata_text(&ate.degenerate_strata))?;
    Ok(())
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    ate_hat: f64,
    a_hat: &'a [f64; 4],
    q_hat: &'a [Vec<f64>; 4],
    degenerate_groups: &'a [Group],
    degenerate_strata: &'a [Stratum],
}

impl<'a> From<&'a EstimationResult> for EstimateReport<'a> {
    fn from(r: &'a EstimationResult) -> Self {
        EstimateReport {
            ate_hat: r.ate_hat,
            a_hat: r.a_hat.as_array(),
            q_hat: r.q_hat.rows(),
            degenerate_groups: &r.degenerate_groups,
            degenerate_strata: &r.degenerate_strata,
        }
    }
}

fn print_estimate(out: &mut dyn Write, r: &EstimationResult) -> Result<()> {
    writeln!(out, "ate_hat = {}", sig(r.ate_hat, 10))?;
    writeln!(out, "a_hat = {:?}", r.a_hat.as_array())?;
    for g in Group::ALL {
        writeln!(out, "q_hat (y={}, t={}) = {:?}", g.y, g.t, r.q_hat.row(g))?;
    }
    writeln!(out, "degenerate groups: {}", groups_text(&r.degenerate_groups))?;
    writeln!(out, "degenerate strata: {}", strata_text(&r.degenerate_strata))?;
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs, out: &mut dyn Write) -> Result<()> {
    let fallback = args.fallback.into();
    if let EstimateMode::Stratified = args.mode {
        let records = io::read_stratified(&args.data, args.k)?;
        let est = estimate_stratified_ite(&records, args.k, fallback)?;
        if args.json {
            #[derive(Serialize)]
            struct Stratum<'a> {
                x: usize,
                size: u64,
                #[serde(flatten)]
                estimate: EstimateReport<'a>,
            }
            #[derive(Serialize)]
            struct Report<'a> {
                aggregate: f64,
                strata: Vec<Stratum<'a>>,
            }
            let report = Report {
                aggregate: est.aggregate,
                strata: est
                    .strata
                    .iter()
                    .map(|s| Stratum {
                        x: s.x,
                        size: s.size,
                        estimate: (&s.estimate).into(),
                    })
                    .collect(),
            };
            return io::write_json(out, &report);
        }
        writeln!(out, "aggregate ate_hat = {}", sig(est.aggregate, 10))?;
        for s in &est.strata {
            writeln!(out, "x = {} (n = {}): ate_hat = {}", s.x, s.size, sig(s.estimate.ate_hat, 10))?;
        }
        return Ok(());
    }

    let data = io::read_dataset(&args.data, args.k)?;
    let result = match args.mode {
        EstimateMode::DeconfOnly => estimate_deconfounded_only(data.deconfounded(), args.k)?,
        EstimateMode::KnownA => {
            let path = args
                .a_file
                .as_ref()
                .ok_or_else(|| Error::invalid("--mode known-a requires --a-file"))?;
            let a = io::read_marginal(path)?;
            estimate_with_known_confounded(&a, data.deconfounded(), args.k, fallback)?
        }
        EstimateMode::Finite => estimate_finite(&data, fallback)?,
        EstimateMode::Stratified => unreachable!("handled above"),
    };
    if args.json {
        io::write_json(out, &EstimateReport::from(&result))
    } else {
        print_estimate(out, &result)
    }
}

const NAMED: [Policy; 3] = [Policy::Nsp, Policy::Usp, Policy::Owsp];

fn bound_text(b: &BoundValue) -> String {
    match b.witness {
        Some(s) if b.value.is_finite() => format!("{} at (t={}, z={})", sig(b.value, 10), s.t, s.z),
        _ => "inf".into(),
    }
}

fn cmd_plan(args: &PlanArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let instance = match &args.instance {
        Some(p) => Some(parts_from_joint(&io::read_instance(p)?)),
        None => None,
    };
    let a: Option<ConfoundedDistribution> = match (&instance, &args.a_file) {
        (Some(f), _) => Some(f.a.clone()),
        (None, Some(p)) => Some(io::read_marginal(p)?),
        (None, None) => None,
    };
    let q: Option<&ConditionalTable> = instance.as_ref().map(|f| &f.q);
    let k = match (q.map(ConditionalTable::k), args.k) {
        (Some(ki), Some(kf)) if ki != kf => {
            return Err(Error::invalid(format!("--k {kf} disagrees with the instance's k = {ki}")))
        }
        (Some(ki), _) => ki,
        (None, Some(kf)) => kf,
        (None, None) => 2,
    };
    // β only enters the worst-case and lower-bound lines.
    let spec = AccuracySpec::new(args.epsilon, args.delta, k, args.beta.unwrap_or(0.25))?;

    let policies: Vec<Policy> = match (args.policy, &args.weights) {
        (None, None) => NAMED.to_vec(),
        (Some(PolicyArg::Custom), Some(w)) | (None, Some(w)) => {
            if w.len() != 4 {
                return Err(Error::invalid(format!("--weights takes 4 values, got {}", w.len())));
            }
            vec![Policy::Custom(PolicyWeights::new([w[0], w[1], w[2], w[3]])?)]
        }
        (Some(PolicyArg::Custom), None) => return Err(Error::invalid("--policy custom requires --weights")),
        (Some(_), Some(_)) => return Err(Error::invalid("--weights only applies to --policy custom")),
        (Some(PolicyArg::Nsp), None) => vec![Policy::Nsp],
        (Some(PolicyArg::Usp), None) => vec![Policy::Usp],
        (Some(PolicyArg::Owsp), None) => vec![Policy::Owsp],
    };

    let mut lines: Vec<(String, String)> = vec![
        ("C".into(), sig(spec.c(), 10)),
        ("finite_threshold".into(), sig(spec.finite_threshold(), 10)),
    ];
    if let (Some(a), Some(q)) = (&a, q) {
        lines.push(("m_base".into(), bound_text(&m_base(&joint_from_parts(a, q), &spec)?)));
        for p in &policies {
            lines.push((format!("m_{}", p.name()), bound_text(&m_policy(a, q, &spec, p)?)));
        }
    }
    if let (Some(a), Some(_)) = (&a, args.beta) {
        for p in &policies {
            lines.push((format!("M_{}", p.name()), sig(worst_case_m(a, &spec, p), 10)));
        }
        if !spec.lower_bound_regime() {
            writeln!(err, "warning: k*beta >= 1, outside the regime the lower bounds assume")?;
        }
        for p in policies.iter().filter(|p| !matches!(p, Policy::Custom(_))) {
            lines.push((
                format!("w_{}", p.name()),
                format!("{} (c1 = {})", sig(lower_bound_w(a, &spec, p, args.c1)?, 10), args.c1),
            ));
        }
    }
    if let Some(n) = args.n {
        let (a, q) = a
            .as_ref()
            .zip(q)
            .ok_or_else(|| Error::invalid("--n needs --instance"))?;
        for p in &policies {
            let w = policy_weights(p, a)?;
            let value = match solve_min_m(a, q, &w, n, &spec)? {
                Some(m) => m.to_string(),
                None => "infeasible".into(),
            };
            lines.push((format!("min_m_{}", p.name()), value));
        }
    }
    if let Some(budget) = args.budget {
        let (a, q) = a
            .as_ref()
            .zip(q)
            .ok_or_else(|| Error::invalid("--budget needs --instance"))?;
        let (cc, cz) = (
            args.cost_confounded.expect("required by clap"),
            args.cost_deconfound.expect("required by clap"),
        );
        for p in &policies {
            let plan = allocate_budget(a, q, budget, cc, cz, &spec, p, args.grid)?;
            lines.push((format!("budget_{}_m", p.name()), sig(plan.m, 10)));
            lines.push((format!("budget_{}_n", p.name()), sig(plan.n, 10)));
            lines.push((format!("budget_{}_margin", p.name()), sig(plan.margin, 10)));
        }
    }
    match args.format {
        PlanFormat::Text => {
            for (name, value) in &lines {
                writeln!(out, "{name} = {value}")?;
            }
        }
        PlanFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record(["quantity", "value"]).map_err(std::io::Error::other)?;
            for (name, value) in &lines {
                w.write_record([name, value]).map_err(std::io::Error::other)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct PairFile {
    base: InstanceFile,
    alternate: InstanceFile,
    gap: f64,
    params: PairParams,
}

impl From<&HardInstancePair> for PairFile {
    fn from(p: &HardInstancePair) -> Self {
        PairFile {
            base: InstanceFile::from_parts(&p.a, &p.base),
            alternate: InstanceFile::from_parts(&p.a, &p.alternate),
            gap: p.gap,
            params: p.params.clone(),
        }
    }
}

fn need<T: Copy>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::invalid(format!("missing --{flag}")))
}

fn cmd_gen_instance(args: &GenArgs, out: &mut dyn Write) -> Result<()> {
    let marginal = || -> Result<ConfoundedDistribution> {
        match (&args.a, &args.a_file) {
            (Some(v), _) if v.len() == 4 => ConfoundedDistribution::new([v[0], v[1], v[2], v[3]]),
            (Some(v), _) => Err(Error::invalid(format!("--a takes 4 values, got {}", v.len()))),
            (None, Some(p)) => io::read_marginal(p),
            (None, None) => Err(Error::invalid("pair constructions need --a or --a-file")),
        }
    };
    let mut sink: Box<dyn Write + '_> = match &args.out {
        Some(path) => Box::new(File::create(path).map_err(|e| Error::Input {
            path: path.clone(),
            message: e.to_string(),
        })?),
        None => Box::new(&mut *out),
    };
    if let Some(k) = args.random {
        let p = random_instance(k, need(args.seed, "seed")?)?;
        let file = InstanceFile {
            k: Some(k),
            p: Some(p.cells().to_vec()),
            ..Default::default()
        };
        return io::write_json(&mut *sink, &file);
    }
    if let Some(case) = args.adversarial {
        let (a, q) = adversarial_instance(case);
        let file = InstanceFile {
            name: Some(case.name().into()),
            ..InstanceFile::from_parts(&a, &q)
        };
        return io::write_json(&mut *sink, &file);
    }
    let pair = if args.hardness {
        hardness_pair(&marginal()?, need(args.gamma, "gamma")?, need(args.q_floor, "q-floor")?)?
    } else {
        match args.lower_bound.expect("clap enforces one kind") {
            LowerBoundKind::General => general_lower_pair(
                &marginal()?,
                need(args.q00, "q00")?,
                need(args.q01, "q01")?,
                need(args.beta, "beta")?,
                need(args.gamma, "gamma")?,
            )?,
            LowerBoundKind::Policy => policy_lower_pair(
                &marginal()?,
                need(args.k, "k")?,
                need(args.beta, "beta")?,
                need(args.gamma, "gamma")?,
            )?,
            LowerBoundKind::OwspNsp => {
                let beta = need(args.beta, "beta")?;
                let spec = AccuracySpec::new(0.1, 0.05, args.k.unwrap_or(2), beta)?;
                owsp_vs_nsp_ratio_witness(need(args.eta, "eta")?, &spec)?.pair
            }
        }
    };
    io::write_json(&mut *sink, &PairFile::from(&pair))
}

fn load_config(args: &SimArgs) -> Result<crate::sim::ExperimentConfig> {
    let mut config = io::read_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn emit_curve(args: &SimArgs, curve: &ErrorCurve) -> Result<()> {
    io::write_error_curve_file(&args.out, curve)
}

/// Runs with captured output: (exit code, stdout, stderr).
pub fn run_captured(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("deconfound").chain(args.iter().copied()), &mut out, &mut err);
    (
        code,
        String::from_utf8_lossy(&out).into_owned(),
        String::from_utf8_lossy(&err).into_owned(),
    )
}
