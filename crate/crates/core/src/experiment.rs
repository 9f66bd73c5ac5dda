//! Generalization-mode experiments: which edges are trained and which one
//! is tested, evaluation of an answerer on the test edge, and the
//! closed-form study of noisy answerers on the six-tuple world.

use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::answerer::{
    answer_batch, answer_key, flip_distribution, AnswerError, Answerer, AnswererKind, Dialogue,
    Noise, NoiseFamily, Sampling,
};
use crate::datagen::{self, Algorithm, Dataset, Extractor, ExtractorKind, GenConfig, GenError};
use crate::dsl::{self, World};
use crate::metrics::{
    aggregate, classify, MetricsError, MetricsReport, Relation, RunMeta, SampleReport, UnitEval,
};
use crate::mode::GeneralizationMode;
use crate::qa::{render_unit, Generator, QaError, UnitQuestions};
use crate::rng;
use crate::scm::{sample_context, Edge, ScmError};
use crate::worlds::{availability_of, effective_plans};

pub const DEFAULT_CONTEXTS_PER_EDGE: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub world: String,
    pub mode: GeneralizationMode,
    pub train_edges: Vec<Edge>,
    pub test_edge: Edge,
    /// Training contexts drawn for each train edge.
    pub contexts_per_edge: usize,
}

impl ExperimentPlan {
    pub fn train_contexts(&self) -> usize {
        self.contexts_per_edge * self.train_edges.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlanOverrides {
    /// Picks among several plans of one mode; for in-domain, any declared
    /// edge may be named.
    pub test_edge: Option<Edge>,
    pub contexts_per_edge: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("mode {mode} is not available for world {world} (available: {available})")]
    UnavailableMode {
        world: String,
        mode: GeneralizationMode,
        available: String,
    },
    #[error("world {world} has no {mode} plan testing {edge}")]
    NoPlanForEdge {
        world: String,
        mode: GeneralizationMode,
        edge: Edge,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Qa(#[from] QaError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Answer(#[from] AnswerError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Resolves the train and test edges of `mode` in `world`.
pub fn plan(
    world: &World,
    mode: GeneralizationMode,
    overrides: &PlanOverrides,
) -> Result<ExperimentPlan, ExperimentError> {
    let plans = effective_plans(world);
    let candidates: Vec<_> = plans.iter().filter(|p| p.mode == mode).collect();
    if candidates.is_empty() {
        let available: Vec<_> = availability_of(world).iter().map(|m| m.as_str()).collect();
        return Err(ExperimentError::UnavailableMode {
            world: world.name.clone(),
            mode,
            available: if available.is_empty() { "none".into() } else { available.join(", ") },
        });
    }
    let (train, test) = match &overrides.test_edge {
        None => (candidates[0].train.clone(), candidates[0].test.clone()),
        Some(edge) => match candidates.iter().find(|p| &p.test == edge) {
            Some(p) => (p.train.clone(), p.test.clone()),
            None if mode == GeneralizationMode::InDomain && world.model.has_edge(edge) => {
                (vec![edge.clone()], edge.clone())
            }
            None => {
                return Err(ExperimentError::NoPlanForEdge {
                    world: world.name.clone(),
                    mode,
                    edge: edge.clone(),
                })
            }
        },
    };
    let contexts_per_edge = overrides.contexts_per_edge.unwrap_or(DEFAULT_CONTEXTS_PER_EDGE);
    if contexts_per_edge == 0 {
        return Err(ExperimentError::Config("contexts_per_edge must be at least 1".into()));
    }
    Ok(ExperimentPlan {
        world: world.name.clone(),
        mode,
        train_edges: train,
        test_edge: test,
        contexts_per_edge,
    })
}

/// Training data for a plan: one generator run per train edge, each with
/// `contexts_per_edge` contexts, concatenated and sorted.
pub fn plan_dataset(
    world: &World,
    plan: &ExperimentPlan,
    cfg: &GenConfig,
    alg: Algorithm,
    answerer: &Answerer,
    h: &Extractor,
    generator: Generator<'_>,
) -> Result<Dataset, ExperimentError> {
    let cfg = GenConfig {
        n_contexts: plan.contexts_per_edge,
        mode: Some(plan.mode),
        ..cfg.clone()
    };
    let mut all = Dataset::empty(alg.format());
    for edge in &plan.train_edges {
        all.extend(datagen::generate_dataset(world, edge, &cfg, alg, answerer, h, generator)?)?;
    }
    all.sort();
    Ok(all)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_contexts: usize,
    pub m_samples: usize,
    pub repeats: usize,
    pub seed: u64,
    pub temperature: f64,
    pub max_tokens: u32,
    pub parallelism: usize,
    /// Method column of the report; the answerer label when absent.
    pub method: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_contexts: 100,
            m_samples: 10,
            repeats: 5,
            seed: 0,
            temperature: 1.0,
            max_tokens: 256,
            parallelism: 1,
            method: None,
        }
    }
}

impl EvalConfig {
    fn check(&self) -> Result<(), ExperimentError> {
        for (name, v) in [
            ("n_contexts", self.n_contexts),
            ("m_samples", self.m_samples),
            ("repeats", self.repeats),
        ] {
            if v == 0 {
                return Err(ExperimentError::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// A complete run-config file: shared answerer and extractor plus the
/// evaluation and generation sections.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub answerer: Option<AnswererKind>,
    pub extractor: ExtractorKind,
    pub eval: EvalConfig,
    pub gen: GenConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub samples: Vec<SampleReport>,
}

/// Evaluates `answerer` on the plan's test edge. Each repeat draws fresh
/// contexts; every sample index of every repeat yields one
/// [`SampleReport`], and the report aggregates all of them.
pub fn evaluate(
    world: &World,
    plan: &ExperimentPlan,
    answerer: &Answerer,
    h: &Extractor,
    cfg: &EvalConfig,
    method: &str,
) -> Result<Evaluation, ExperimentError> {
    cfg.check()?;
    let meta = RunMeta {
        world: world.name.clone(),
        mode: plan.mode.as_str().into(),
        edge: plan.test_edge.to_string(),
        method: cfg.method.clone().unwrap_or_else(|| method.to_string()),
        seed: cfg.seed,
    };
    let m = cfg.m_samples;
    let base = rng::derive(cfg.seed, "eval");
    let keys: Vec<u64> = (0..cfg.repeats as u64).map(|r| rng::derive_index(base, r)).collect();
    let mut units: Vec<UnitQuestions> = Vec::with_capacity(cfg.repeats * cfg.n_contexts);
    for &key in &keys {
        for i in 0..cfg.n_contexts as u64 {
            let ctx = sample_context(&world.model, key, i)?;
            units.push(render_unit(world, &ctx, &plan.test_edge)?);
        }
    }
    // Per unit and sample: factual then counterfactual, sharing one key.
    let items: Vec<(Dialogue, u64)> = units
        .iter()
        .enumerate()
        .flat_map(|(k, u)| {
            let key = keys[k / cfg.n_contexts];
            (0..m as u64).flat_map(move |s| {
                let ak = answer_key(key, u.unit.context_id, s);
                [(Dialogue::ask(&u.factual), ak), (Dialogue::ask(&u.counterfactual), ak)]
            })
        })
        .collect();
    let sampling = Sampling {
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
    };
    let answers = answer_batch(answerer, &items, &sampling, cfg.parallelism);
    let verdict = |i: usize, question: &str| match &answers[i] {
        Ok(a) => h.extract(a, question),
        Err(e) => {
            log::warn!("answer failed, scoring as undecidable: {e}");
            None
        }
    };
    let mut samples = Vec::with_capacity(cfg.repeats * m);
    for r in 0..cfg.repeats {
        let block = &units[r * cfg.n_contexts..(r + 1) * cfg.n_contexts];
        for s in 0..m {
            let evals: Vec<UnitEval> = block
                .iter()
                .enumerate()
                .map(|(c, u)| {
                    let i = 2 * (((r * cfg.n_contexts) + c) * m + s);
                    UnitEval {
                        outcome: u.unit.clone(),
                        y_hat: verdict(i, &u.factual.text),
                        y_cf_hat: verdict(i + 1, &u.counterfactual.text),
                        sample_index: s,
                    }
                })
                .collect();
            samples.push(SampleReport::compute(meta.clone(), r, s, &evals)?);
        }
    }
    let report = aggregate(&samples)?;
    for r in &report.flagged_repeats {
        log::warn!("{meta}: repeat {r} has more than 10% undecidable answers");
    }
    Ok(Evaluation { report, samples })
}

/// Column order of the six-tuple unit types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TupleOrder {
    /// (X, Y_x, Y_x').
    CauseFirst,
    /// (X, Y_x', Y_x).
    CauseAbsentFirst,
}

impl TupleOrder {
    pub const ALL: [TupleOrder; 2] = [TupleOrder::CauseFirst, TupleOrder::CauseAbsentFirst];

    pub fn as_str(self) -> &'static str {
        match self {
            TupleOrder::CauseFirst => "x-yx-yx'",
            TupleOrder::CauseAbsentFirst => "x-yx'-yx",
        }
    }

    /// (X, Y_x, Y_x') for a listed triple.
    fn potential(self, (x, a, b): (bool, bool, bool)) -> (bool, bool, bool) {
        match self {
            TupleOrder::CauseFirst => (x, a, b),
            TupleOrder::CauseAbsentFirst => (x, b, a),
        }
    }
}

impl fmt::Display for TupleOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TupleOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x-yx-yx'" | "cause-first" => Ok(TupleOrder::CauseFirst),
            "x-yx'-yx" | "cause-absent-first" => Ok(TupleOrder::CauseAbsentFirst),
            _ => Err(format!("unknown tuple order `{s}` (expected x-yx-yx' or x-yx'-yx)")),
        }
    }
}

/// The six equiprobable triples, as listed, with x = true and y = true.
pub const SIX_TUPLES: [(bool, bool, bool); 6] = [
    (true, false, false),
    (true, false, true),
    (true, true, true),
    (false, false, false),
    (false, false, true),
    (false, true, true),
];

/// Factual (X, Y, Y_cf) of each six-tuple unit type under `order`.
pub fn six_tuple_units(order: TupleOrder) -> [(bool, bool, bool); 6] {
    SIX_TUPLES.map(|t| {
        let (x, y_x, y_not_x) = order.potential(t);
        if x {
            (x, y_x, y_not_x)
        } else {
            (x, y_not_x, y_x)
        }
    })
}

fn label((x, a, b): (bool, bool, bool)) -> String {
    let v = |on: bool, s: &str| if on { s.to_string() } else { format!("{s}'") };
    format!("{}/{}/{}", v(x, "x"), v(a, "y"), v(b, "y"))
}

/// Six-outcome world over the listed triples with edge X -> Y.
pub fn illustrative_world(order: TupleOrder) -> World {
    let labels: Vec<String> = SIX_TUPLES.iter().map(|t| label(*t)).collect();
    let dist: Vec<String> = labels.iter().map(|l| format!("\"{l}\": 1 / 6")).collect();
    let any = |pick: &dyn Fn(bool, bool, bool) -> bool| {
        let hits: Vec<String> = SIX_TUPLES
            .iter()
            .zip(&labels)
            .filter(|(t, _)| {
                let (x, y_x, y_not_x) = order.potential(**t);
                pick(x, y_x, y_not_x)
            })
            .map(|(_, l)| format!("U == \"{l}\""))
            .collect();
        if hits.is_empty() { "false".to_string() } else { hits.join(" or ") }
    };
    let name = match order {
        TupleOrder::CauseFirst => "six-tuple",
        TupleOrder::CauseAbsentFirst => "six-tuple-swapped",
    };
    let src = format!(
        r#"world {name}
exo U ~ categorical({dist})
var X = {x}
var Y = if X then ({yx}) else ({ynx})
edge X -> Y
context "A unit of type {{U}}."
ask Y "Does the effect occur?"
ask_if X=true about Y "Had the cause been present, would the effect occur?"
ask_if X=false about Y "Had the cause been absent, would the effect occur?"
answer Y "the effect occurs" "the effect does not occur" "the effect would occur" "the effect would not occur"
plan in-domain train X -> Y test X -> Y
"#,
        dist = dist.join(", "),
        x = any(&|x, _, _| x),
        yx = any(&|_, a, _| a),
        ynx = any(&|_, _, b| b),
    );
    match dsl::compile(&src) {
        Ok(w) => w,
        Err(d) => panic!("six-tuple world is invalid:\n{}", dsl::format_diagnostics(name, &d)),
    }
}

/// One closed-form point of the noisy-answerer sweep. Rates are
/// expectations over unit types and flips; PN̂ and PŜ are the population
/// ratios the estimators converge to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub order: String,
    pub family: NoiseFamily,
    pub eps: f64,
    pub lambda: f64,
    pub f_er: f64,
    pub cf_er: f64,
    pub avg_er: f64,
    pub pn_hat: Option<f64>,
    pub ps_hat: Option<f64>,
    pub pn_true: Option<f64>,
    pub ps_true: Option<f64>,
    pub n_ir: f64,
    pub s_ir: f64,
    pub an_ir: f64,
    pub as_ir: f64,
}

/// Exact expectations for one noise setting over weighted unit types
/// (X, Y, Y_cf).
pub fn closed_form(units: &[((bool, bool, bool), f64)], noise: &Noise) -> SweepRow {
    let mut f_er = 0.0;
    let mut cf_er = 0.0;
    let mut ir = [0.0; 4];
    let (mut pn, mut pn_d, mut ps, mut ps_d) = (0.0, 0.0, 0.0, 0.0);
    let (mut tpn, mut tpn_d, mut tps, mut tps_d) = (0.0, 0.0, 0.0, 0.0);
    for &((x, y, y_cf), w) in units {
        if x && y {
            tpn_d += w;
            tpn += w * f64::from(u8::from(!y_cf));
        }
        if !x && !y {
            tps_d += w;
            tps += w * f64::from(u8::from(y_cf));
        }
        for ((ff, fc), p) in flip_distribution(noise, x) {
            let q = w * p;
            if q == 0.0 {
                continue;
            }
            let (yh, ych) = (y != ff, y_cf != fc);
            f_er += q * f64::from(u8::from(ff));
            cf_er += q * f64::from(u8::from(fc));
            for (k, rel) in Relation::ALL.iter().enumerate() {
                if classify(*rel, x, yh, ych) != classify(*rel, x, y, y_cf) {
                    ir[k] += q;
                }
            }
            if x && yh {
                pn_d += q;
                pn += q * f64::from(u8::from(!ych));
            }
            if !x && !yh {
                ps_d += q;
                ps += q * f64::from(u8::from(ych));
            }
        }
    }
    let ratio = |a: f64, b: f64| (b > 0.0).then(|| a / b);
    SweepRow {
        order: String::new(),
        family: noise.family,
        eps: noise.eps,
        lambda: noise.split,
        f_er,
        cf_er,
        avg_er: (f_er + cf_er) / 2.0,
        pn_hat: ratio(pn, pn_d),
        ps_hat: ratio(ps, ps_d),
        pn_true: ratio(tpn, tpn_d),
        ps_true: ratio(tps, tps_d),
        n_ir: ir[0],
        s_ir: ir[1],
        an_ir: ir[2],
        as_ir: ir[3],
    }
}

/// Closed-form sweep over family × eps × λ on the six-tuple world.
pub fn sweep_fig3(
    eps_levels: &[f64],
    lambda_grid: &[f64],
    order: TupleOrder,
) -> Result<Vec<SweepRow>, ExperimentError> {
    if eps_levels.is_empty() || lambda_grid.is_empty() {
        return Err(ExperimentError::Config("sweep grids must be nonempty".into()));
    }
    let units: Vec<_> = six_tuple_units(order).iter().map(|u| (*u, 1.0 / 6.0)).collect();
    let mut rows = Vec::new();
    for family in NoiseFamily::ALL {
        for &eps in eps_levels {
            for &lambda in lambda_grid {
                let mut row = closed_form(&units, &Noise::new(family, eps, lambda)?);
                row.order = order.as_str().into();
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

pub const DEFAULT_EPS_LEVELS: [f64; 5] = [0.0, 0.1, 0.2, 0.3, 0.4];

/// λ from 0 to 1 in steps of 0.1.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) / 10.0).collect()
}

pub fn write_sweep_csv<W: io::Write>(rows: &[SweepRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
