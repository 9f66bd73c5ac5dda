use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use counterfact::answerer::{Answerer, AnswererKind, HttpClient, Sampling};
use counterfact::datagen::{self, Algorithm, AnswerMode, Extractor, Variant};
use counterfact::dsl::{self, World};
use counterfact::experiment::{self, PlanOverrides, RunConfig, TupleOrder};
use counterfact::metrics::{self, MetricsReport};
use counterfact::qa::{render_unit, Generator};
use counterfact::scm::{evaluate, sample_context, Edge};
use counterfact::worlds::{self, availability_of, BuiltinWorld};
use counterfact::GeneralizationMode;

/// Counterfactual reasoning benchmarks over structural causal models.
#[derive(Parser)]
#[command(name = "counterfact", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a world file and print its diagnostics.
    Validate(ValidateArgs),
    /// Print sampled contexts with their endogenous values, one JSON object per line.
    Sample(SampleArgs),
    /// Print the factual and counterfactual questions for one context.
    Ask(AskArgs),
    /// Generate a fine-tuning dataset as JSON lines.
    GenData(GenArgs),
    /// Evaluate an answerer on the test edge of a generalization mode.
    Eval(EvalArgs),
    /// Closed-form sweep of the noisy answerer families on the six-tuple world.
    SweepFig3(SweepArgs),
    /// Normalize report tables against a base method.
    Report(ReportArgs),
}

#[derive(Args)]
struct WorldArg {
    /// Built-in world name or path to a `.world` file.
    world: String,
    /// Replacement mean table for the engineering world.
    #[arg(long, value_name = "CSV")]
    means: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    world: WorldArg,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    world: WorldArg,
    /// Number of contexts.
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AskArgs {
    #[command(flatten)]
    world: WorldArg,
    /// Edge as CAUSE:EFFECT or CAUSE->EFFECT.
    #[arg(long)]
    edge: Edge,
    #[arg(long, default_value_t = 0)]
    context_seed: u64,
    /// Draw index under the context seed.
    #[arg(long, default_value_t = 0)]
    index: u64,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run-config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Answerer: oracle, remote, or FAMILY:EPS[:SPLIT] with FAMILY one of
    /// factually-correct, uniformly-correct, causally-consistent.
    #[arg(long)]
    answerer: Option<AnswererKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bound on concurrent answerer calls.
    #[arg(long, value_name = "N")]
    parallel: Option<usize>,
    /// Contexts per edge.
    #[arg(long, value_name = "N")]
    contexts: Option<usize>,
    /// Answers sampled per question.
    #[arg(long, value_name = "M")]
    samples: Option<usize>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    world: WorldArg,
    /// Single edge to generate for.
    #[arg(long, conflicts_with = "mode", required_unless_present = "mode")]
    edge: Option<Edge>,
    /// Generate for every train edge of this mode's plan.
    #[arg(long)]
    mode: Option<GeneralizationMode>,
    /// Selects among several plans of one mode by their test edge.
    #[arg(long, requires = "mode")]
    test_edge: Option<Edge>,
    #[arg(long, value_enum)]
    alg: AlgArg,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Draw twice the contexts for only-f and only-cf.
    #[arg(long)]
    double_contexts: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgArg {
    Sft,
    Dpo,
    Ccf,
}

impl From<AlgArg> for Algorithm {
    fn from(a: AlgArg) -> Self {
        match a {
            AlgArg::Sft => Algorithm::Sft,
            AlgArg::Dpo => Algorithm::Dpo,
            AlgArg::Ccf => Algorithm::Ccf,
        }
    }
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse()
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    world: WorldArg,
    #[arg(long)]
    mode: GeneralizationMode,
    /// Selects among several plans of one mode by their test edge.
    #[arg(long)]
    test_edge: Option<Edge>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Method column of the report.
    #[arg(long)]
    method: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format; inferred from the extension of --out, else csv.
    #[arg(long, value_enum)]
    format: Option<ReportFormat>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ReportFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct SweepArgs {
    /// Tuple order: x-yx-yx', x-yx'-yx, or both.
    #[arg(long, default_value = "both")]
    order: String,
    /// Comma-separated error levels.
    #[arg(long, value_delimiter = ',', default_values_t = experiment::DEFAULT_EPS_LEVELS)]
    eps: Vec<f64>,
    /// Comma-separated error splits λ.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report CSV files written by `eval`.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "Base")]
    base: String,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Validate(a) => validate(&a),
        Command::Sample(a) => sample(&a).map(|_| ExitCode::SUCCESS),
        Command::Ask(a) => ask(&a).map(|_| ExitCode::SUCCESS),
        Command::GenData(a) => gen_data(&a).map(|_| ExitCode::SUCCESS),
        Command::Eval(a) => eval(&a).map(|_| ExitCode::SUCCESS),
        Command::SweepFig3(a) => sweep(&a).map(|_| ExitCode::SUCCESS),
        Command::Report(a) => report(&a).map(|_| ExitCode::SUCCESS),
    }
}

fn load_world(arg: &WorldArg) -> Result<World> {
    if let Ok(id) = arg.world.parse::<BuiltinWorld>() {
        return match (&arg.means, id) {
            (None, _) => Ok(worlds::load_builtin(id)),
            (Some(path), BuiltinWorld::Engineering) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Ok(worlds::engineering_with_means(&worlds::parse_means(&text)?)?)
            }
            (Some(_), _) => bail!("--means applies only to the engineering world"),
        };
    }
    if arg.means.is_some() {
        bail!("--means applies only to the built-in engineering world");
    }
    let src = fs::read_to_string(&arg.world).with_context(|| format!("reading {}", arg.world))?;
    dsl::compile(&src).map_err(|d| anyhow!("invalid world file\n{}", dsl::format_diagnostics(&arg.world, &d).trim_end()))
}

fn validate(a: &ValidateArgs) -> Result<ExitCode> {
    let arg = &a.world;
    if arg.means.is_some() || arg.world.parse::<BuiltinWorld>().is_ok() {
        return Ok(report_valid(&arg.world, &load_world(arg)?));
    }
    let src = fs::read_to_string(&arg.world).with_context(|| format!("reading {}", arg.world))?;
    match dsl::compile(&src) {
        Ok(w) => Ok(report_valid(&arg.world, &w)),
        Err(d) => {
            print!("{}", dsl::format_diagnostics(&arg.world, &d));
            Ok(ExitCode::from(1))
        }
    }
}

fn report_valid(name: &str, w: &World) -> ExitCode {
    let modes: Vec<_> = availability_of(w).iter().map(|m| m.as_str()).collect();
    println!(
        "{name}: ok (world {}, {} edges, modes: {})",
        w.name,
        w.model.edges().len(),
        modes.join(", ")
    );
    ExitCode::SUCCESS
}

#[derive(Serialize)]
struct SampleLine<'a> {
    id: u64,
    exogenous: &'a std::collections::BTreeMap<String, counterfact::scm::Value>,
    endogenous: std::collections::BTreeMap<String, bool>,
}

fn sample(a: &SampleArgs) -> Result<()> {
    let w = load_world(&a.world)?;
    let mut out = io::stdout().lock();
    for i in 0..a.n as u64 {
        let ctx = sample_context(&w.model, a.seed, i)?;
        let val = evaluate(&w.model, &ctx)?;
        let line = SampleLine {
            id: ctx.id,
            exogenous: &ctx.values,
            endogenous: val.endogenous(&w.model),
        };
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    Ok(())
}

fn ask(a: &AskArgs) -> Result<()> {
    let w = load_world(&a.world)?;
    let ctx = sample_context(&w.model, a.context_seed, a.index)?;
    let u = render_unit(&w, &ctx, &a.edge)?;
    let t = &u.unit;
    println!(
        "context {} of seed {}: {} = {}, {} = {}, {} under do({} = {}) = {}",
        ctx.id, a.context_seed, t.cause, t.x, t.effect, t.y, t.effect, t.cause, !t.x, t.y_cf
    );
    println!();
    println!("[factual]\n{}", u.factual.text);
    println!();
    println!("[counterfactual]\n{}", u.counterfactual.text);
    Ok(())
}

fn load_config(run: &RunArgs) -> Result<RunConfig> {
    let mut cfg: RunConfig = match &run.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(k) = &run.answerer {
        // A bare `remote` keeps the endpoint from the config file.
        let keep = matches!((k, &cfg.answerer), (AnswererKind::Remote(_), Some(AnswererKind::Remote(_))));
        if !keep {
            cfg.answerer = Some(k.clone());
        }
    }
    if let Some(s) = run.seed {
        cfg.eval.seed = s;
        cfg.gen.seed = s;
    }
    if let Some(n) = run.contexts {
        cfg.eval.n_contexts = n;
        cfg.gen.n_contexts = n;
    }
    if let Some(m) = run.samples {
        cfg.eval.m_samples = m;
        cfg.gen.m_samples = m;
    }
    let remote = matches!(cfg.answerer, Some(AnswererKind::Remote(_)));
    let parallel = run.parallel.unwrap_or(if remote {
        4
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    });
    if parallel == 0 {
        bail!("--parallel must be at least 1");
    }
    cfg.eval.parallelism = parallel;
    cfg.gen.parallelism = parallel;
    Ok(cfg)
}

fn gen_data(a: &GenArgs) -> Result<()> {
    let w = load_world(&a.world)?;
    let mut cfg = load_config(&a.run)?;
    if let Some(v) = a.variant {
        cfg.gen.variant = v;
    }
    if a.double_contexts {
        cfg.gen.double_contexts = true;
    }
    let kind = cfg.answerer.clone().unwrap_or(AnswererKind::Oracle);
    let answerer = Answerer::from_kind(&kind)?;
    let h = Extractor::from_kind(&cfg.extractor)?;
    let remote_gen = match (&cfg.gen.answer_mode, &kind) {
        (AnswerMode::Template, _) => None,
        (AnswerMode::Remote, AnswererKind::Remote(rc)) => Some(HttpClient::new(rc.clone())?),
        (AnswerMode::Remote, _) => bail!("answer_mode = \"remote\" needs a remote answerer"),
    };
    let generator = match &remote_gen {
        None => Generator::Template,
        Some(c) => Generator::Remote(
            c,
            Sampling {
                temperature: cfg.gen.temperature,
                max_tokens: cfg.gen.max_tokens,
            },
        ),
    };
    let alg = Algorithm::from(a.alg);
    let data = match (&a.edge, a.mode) {
        (Some(edge), _) => datagen::generate_dataset(&w, edge, &cfg.gen, alg, &answerer, &h, generator)?,
        (None, Some(mode)) => {
            let overrides = PlanOverrides {
                test_edge: a.test_edge.clone(),
                contexts_per_edge: Some(cfg.gen.n_contexts),
            };
            let plan = experiment::plan(&w, mode, &overrides)?;
            experiment::plan_dataset(&w, &plan, &cfg.gen, alg, &answerer, &h, generator)?
        }
        (None, None) => bail!("either --edge or --mode is required"),
    };
    if data.is_empty() {
        log::warn!("dataset is empty (no contrastive pairs)");
    }
    datagen::write_dataset(&data, &a.out)?;
    eprintln!("wrote {} records to {}", data.len(), a.out.display());
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let w = load_world(&a.world)?;
    let mut cfg = load_config(&a.run)?;
    if let Some(r) = a.repeats {
        cfg.eval.repeats = r;
    }
    if a.method.is_some() {
        cfg.eval.method = a.method.clone();
    }
    let kind = cfg.answerer.clone().unwrap_or(AnswererKind::Oracle);
    let answerer = Answerer::from_kind(&kind)?;
    let h = Extractor::from_kind(&cfg.extractor)?;
    let overrides = PlanOverrides {
        test_edge: a.test_edge.clone(),
        contexts_per_edge: None,
    };
    let plan = experiment::plan(&w, a.mode, &overrides)?;
    let ev = experiment::evaluate(&w, &plan, &answerer, &h, &cfg.eval, &kind.label())?;
    let format = a.format.unwrap_or_else(|| match a.out.as_deref().and_then(Path::extension) {
        Some(ext) if ext == "json" => ReportFormat::Json,
        _ => ReportFormat::Csv,
    });
    let mut buf = Vec::new();
    match format {
        ReportFormat::Csv => metrics::write_report_csv(std::slice::from_ref(&ev.report), &mut buf)?,
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut buf, &ev.report)?;
            buf.push(b'\n');
        }
    }
    emit(a.out.as_deref(), &buf)
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let orders: Vec<TupleOrder> = match a.order.as_str() {
        "both" => TupleOrder::ALL.to_vec(),
        s => vec![s.parse().map_err(|e: String| anyhow!(e))?],
    };
    let lambdas = a.lambdas.clone().unwrap_or_else(experiment::default_lambda_grid);
    let mut rows = Vec::new();
    for order in orders {
        rows.extend(experiment::sweep_fig3(&a.eps, &lambdas, order)?);
    }
    let mut buf = Vec::new();
    experiment::write_sweep_csv(&rows, &mut buf)?;
    emit(a.out.as_deref(), &buf)
}

fn report(a: &ReportArgs) -> Result<()> {
    let mut all: Vec<MetricsReport> = Vec::new();
    for path in &a.inputs {
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        all.extend(metrics::read_report_csv(file).with_context(|| format!("reading {}", path.display()))?);
    }
    let scores = metrics::normalize(&all, &a.base)?;
    let mut buf = Vec::new();
    metrics::write_normalized_csv(&scores, &mut buf)?;
    emit(a.out.as_deref(), &buf)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => Ok(io::stdout().write_all(bytes)?),
    }
}
