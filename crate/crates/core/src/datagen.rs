//! Fine-tuning dataset generation: supervised pairs,
//! factual/counterfactual preferences and causal-consistency
//! preferences over two-turn dialogues.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::answerer::{
    answer_batch, answer_key, Answerer, ChatClient, ClientError, Dialogue, HttpClient, Message,
    RemoteConfig, Sampling,
};
use crate::dsl::World;
use crate::metrics::ccf_reward;
use crate::mode::GeneralizationMode;
use crate::qa::{
    extract_remote, extract_rule, generate_answer, render_unit, Generator, QaError,
    RenderedQuestion, UnitQuestions,
};
use crate::rng;
use crate::scm::{sample_context, Edge, ScmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    OnlyF,
    OnlyCf,
    FAndCf,
    OnlyFx2,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::OnlyF => "only-f",
            Variant::OnlyCf => "only-cf",
            Variant::FAndCf => "f-and-cf",
            Variant::OnlyFx2 => "only-fx2",
        }
    }

    fn factual(self) -> bool {
        self != Variant::OnlyCf
    }

    fn counterfactual(self) -> bool {
        matches!(self, Variant::OnlyCf | Variant::FAndCf)
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Variant::OnlyF, Variant::OnlyCf, Variant::FAndCf, Variant::OnlyFx2]
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant `{s}` (expected only-f, only-cf, f-and-cf or only-fx2)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnswerMode {
    Template,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_contexts: usize,
    pub m_samples: usize,
    pub variant: Variant,
    pub seed: u64,
    pub answer_mode: AnswerMode,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Draw twice as many contexts for the single-kind variants, so they
    /// see as many examples as the paired variant.
    pub double_contexts: bool,
    pub parallelism: usize,
    /// Recorded in each record's metadata.
    pub mode: Option<GeneralizationMode>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_contexts: 100,
            m_samples: 10,
            variant: Variant::FAndCf,
            seed: 0,
            answer_mode: AnswerMode::Template,
            temperature: 1.0,
            max_tokens: 256,
            double_contexts: false,
            parallelism: 1,
            mode: None,
        }
    }
}

impl GenConfig {
    /// Contexts drawn for one edge.
    pub fn contexts(&self) -> usize {
        match self.variant {
            Variant::OnlyFx2 => 2 * self.n_contexts,
            Variant::OnlyF | Variant::OnlyCf if self.double_contexts => 2 * self.n_contexts,
            _ => self.n_contexts,
        }
    }

    fn sampling(&self) -> Sampling {
        Sampling {
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }

    fn check(&self, preference: bool) -> Result<(), GenError> {
        if self.n_contexts == 0 {
            return Err(GenError::Config("n_contexts must be at least 1".into()));
        }
        if preference && self.m_samples < 2 {
            return Err(GenError::Config("m_samples must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Qa(#[from] QaError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Schema { path: String, line: usize, message: String },
}

/// Record metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub world: String,
    pub edge: String,
    pub mode: Option<String>,
    pub context_id: u64,
    /// `factual`, `counterfactual` or `dialogue`.
    pub kind: String,
    pub seed: u64,
    /// Sample index of the chosen side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Sample index of the rejected side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_rejected: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisedExample {
    pub prompt: String,
    pub completion: String,
    pub meta: Meta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextPreference {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub meta: Meta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialoguePreference {
    pub messages_prefix: Vec<Message>,
    pub chosen_messages: Vec<Message>,
    pub rejected_messages: Vec<Message>,
    pub meta: Meta,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PreferenceRecord {
    Text(TextPreference),
    Dialogue(DialoguePreference),
}

/// Extractor h.
#[derive(Clone)]
pub enum Extractor {
    Rule,
    Remote(Arc<dyn ChatClient>),
}

impl Extractor {
    /// `None` when the answer is undecidable or remote extraction fails.
    pub fn extract(&self, answer: &str, question: &str) -> Option<bool> {
        match self {
            Extractor::Rule => extract_rule(answer).map(|a| a.value.as_bool()),
            Extractor::Remote(c) => match extract_remote(answer, question, c.as_ref()) {
                Ok(a) => Some(a.value.as_bool()),
                Err(e) => {
                    log::warn!("extraction failed, scoring as undecidable: {e}");
                    None
                }
            },
        }
    }
}

/// Serializable description of an [`Extractor`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExtractorKind {
    #[default]
    Rule,
    Remote(RemoteConfig),
}

impl Extractor {
    pub fn from_kind(kind: &ExtractorKind) -> Result<Self, ClientError> {
        Ok(match kind {
            ExtractorKind::Rule => Extractor::Rule,
            ExtractorKind::Remote(cfg) => Extractor::Remote(Arc::new(HttpClient::new(cfg.clone())?)),
        })
    }
}

/// Which generator produces a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Supervised pairs, written as `sft`.
    Sft,
    /// Factual/counterfactual preferences, written as `dpo`.
    Dpo,
    /// Causal-consistency dialogue preferences, written as `dpo-dialogue`.
    Ccf,
}

impl Algorithm {
    pub fn format(self) -> Format {
        match self {
            Algorithm::Sft => Format::Sft,
            Algorithm::Dpo => Format::Dpo,
            Algorithm::Ccf => Format::DpoDialogue,
        }
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sft" => Ok(Algorithm::Sft),
            "dpo" => Ok(Algorithm::Dpo),
            "ccf" => Ok(Algorithm::Ccf),
            _ => Err(format!("unknown algorithm `{s}` (expected sft, dpo or ccf)")),
        }
    }
}

/// Runs one generator on one edge and returns the sorted dataset.
pub fn generate_dataset(
    world: &World,
    edge: &Edge,
    cfg: &GenConfig,
    alg: Algorithm,
    answerer: &Answerer,
    h: &Extractor,
    generator: Generator<'_>,
) -> Result<Dataset, GenError> {
    let mut data = match alg {
        Algorithm::Sft => Dataset::Sft(gen_supervised(world, edge, cfg, generator)?),
        Algorithm::Dpo => Dataset::from_preferences(gen_preference_cf(world, edge, cfg, answerer, h)?, Format::Dpo)?,
        Algorithm::Ccf => Dataset::from_preferences(
            gen_preference_ccf(world, edge, cfg, answerer, h)?,
            Format::DpoDialogue,
        )?,
    };
    data.sort();
    Ok(data)
}

const GENERATION_ATTEMPTS: usize = 3;

fn units(world: &World, edge: &Edge, seed: u64, n: usize) -> Result<Vec<UnitQuestions>, GenError> {
    let key = rng::derive(seed, &format!("train:{edge}"));
    (0..n as u64)
        .map(|i| {
            let ctx = sample_context(&world.model, key, i)?;
            Ok(render_unit(world, &ctx, edge)?)
        })
        .collect()
}

fn meta(world: &World, edge: &Edge, cfg: &GenConfig, context_id: u64, kind: &str) -> Meta {
    Meta {
        world: world.name.clone(),
        edge: edge.to_string(),
        mode: cfg.mode.map(|m| m.as_str().to_string()),
        context_id,
        kind: kind.into(),
        seed: cfg.seed,
        m: None,
        m_rejected: None,
    }
}

fn generate(q: &RenderedQuestion, truth: bool, generator: Generator<'_>) -> Option<String> {
    for attempt in 1..=GENERATION_ATTEMPTS {
        match generate_answer(q, truth, generator) {
            Ok(a) => return Some(a),
            Err(e) => log::warn!(
                "context {}: generation attempt {attempt} failed: {e}",
                q.context_id
            ),
        }
    }
    log::warn!("context {}: skipping {:?} question", q.context_id, q.kind);
    None
}

/// Question/answer pairs with answers generated from the truth.
pub fn gen_supervised(
    world: &World,
    edge: &Edge,
    cfg: &GenConfig,
    generator: Generator<'_>,
) -> Result<Vec<SupervisedExample>, GenError> {
    cfg.check(false)?;
    let mut out = Vec::new();
    for u in units(world, edge, cfg.seed, cfg.contexts())? {
        let id = u.unit.context_id;
        if cfg.variant.factual() {
            if let Some(a) = generate(&u.factual, u.unit.y, generator) {
                out.push(SupervisedExample {
                    prompt: u.factual.text.clone(),
                    completion: a,
                    meta: meta(world, edge, cfg, id, "factual"),
                });
            }
        }
        if cfg.variant.counterfactual() {
            if let Some(a) = generate(&u.counterfactual, u.unit.y_cf, generator) {
                out.push(SupervisedExample {
                    prompt: u.counterfactual.text.clone(),
                    completion: a,
                    meta: meta(world, edge, cfg, id, "counterfactual"),
                });
            }
        }
    }
    Ok(out)
}

fn answer_all(
    answerer: &Answerer,
    items: Vec<(Dialogue, u64)>,
    cfg: &GenConfig,
) -> Vec<Option<String>> {
    answer_batch(answerer, &items, &cfg.sampling(), cfg.parallelism)
        .into_iter()
        .map(|r| match r {
            Ok(a) => Some(a),
            Err(e) => {
                log::warn!("answer failed, scoring as undecidable: {e}");
                None
            }
        })
        .collect()
}

fn answer_seed(cfg: &GenConfig, edge: &Edge) -> u64 {
    rng::derive(cfg.seed, &format!("train-answers:{edge}"))
}

/// For each question, every (correct, incorrect) pair among
/// the sampled answers becomes one preference record.
pub fn gen_preference_cf(
    world: &World,
    edge: &Edge,
    cfg: &GenConfig,
    answerer: &Answerer,
    h: &Extractor,
) -> Result<Vec<PreferenceRecord>, GenError> {
    cfg.check(true)?;
    let units = units(world, edge, cfg.seed, cfg.contexts())?;
    let seed = answer_seed(cfg, edge);
    let m = cfg.m_samples;
    let mut questions: Vec<(&RenderedQuestion, bool, &str)> = Vec::new();
    for u in &units {
        if cfg.variant.factual() {
            questions.push((&u.factual, u.unit.y, "factual"));
        }
        if cfg.variant.counterfactual() {
            questions.push((&u.counterfactual, u.unit.y_cf, "counterfactual"));
        }
    }
    let items = questions
        .iter()
        .flat_map(|(q, _, _)| {
            (0..m).map(move |s| (Dialogue::ask(q), answer_key(seed, q.context_id, s as u64)))
        })
        .collect();
    let answers = answer_all(answerer, items, cfg);
    let mut out = Vec::new();
    for (qi, (q, truth, kind)) in questions.iter().enumerate() {
        let block = &answers[qi * m..(qi + 1) * m];
        let verdicts: Vec<Option<bool>> = block
            .iter()
            .map(|a| a.as_deref().and_then(|a| h.extract(a, &q.text)))
            .collect();
        for i in 0..m {
            for j in 0..m {
                let (Some(chosen), Some(rejected)) = (&block[i], &block[j]) else {
                    continue;
                };
                if verdicts[i] == Some(*truth) && verdicts[j] != Some(*truth) {
                    let mut md = meta(world, edge, cfg, q.context_id, kind);
                    md.m = Some(i);
                    md.m_rejected = Some(j);
                    out.push(PreferenceRecord::Text(TextPreference {
                        prompt: q.text.clone(),
                        chosen: chosen.clone(),
                        rejected: rejected.clone(),
                        meta: md,
                    }));
                }
            }
        }
    }
    Ok(out)
}

/// M two-turn dialogues per context scored with the
/// causal-consistency reward; every pair with a strictly higher reward
/// yields a preference between the two dialogues.
pub fn gen_preference_ccf(
    world: &World,
    edge: &Edge,
    cfg: &GenConfig,
    answerer: &Answerer,
    h: &Extractor,
) -> Result<Vec<PreferenceRecord>, GenError> {
    cfg.check(true)?;
    let units = units(world, edge, cfg.seed, cfg.contexts())?;
    let seed = answer_seed(cfg, edge);
    let m = cfg.m_samples;
    let key = |u: &UnitQuestions, s: usize| answer_key(seed, u.unit.context_id, s as u64);
    let first: Vec<(Dialogue, u64)> = units
        .iter()
        .flat_map(|u| (0..m).map(move |s| (Dialogue::ask(&u.factual), key(u, s))))
        .collect();
    let factual = answer_all(answerer, first.clone(), cfg);
    let second: Vec<(Dialogue, u64)> = first
        .iter()
        .zip(&factual)
        .enumerate()
        .map(|(k, ((d, key), a))| {
            let u = &units[k / m];
            (
                d.clone().follow_up(a.clone().unwrap_or_default(), &u.counterfactual),
                *key,
            )
        })
        .collect();
    let counterfactual = answer_all(answerer, second, cfg);
    let mut out = Vec::new();
    for (ui, u) in units.iter().enumerate() {
        let t = &u.unit;
        let idx = |s: usize| ui * m + s;
        let reward = |s: usize| {
            let yh = factual[idx(s)]
                .as_deref()
                .and_then(|a| h.extract(a, &u.factual.text))
                .unwrap_or(!t.y);
            let ych = counterfactual[idx(s)]
                .as_deref()
                .and_then(|a| h.extract(a, &u.counterfactual.question))
                .unwrap_or(!t.y_cf);
            ccf_reward(t.x, t.y, t.y_cf, yh, ych)
        };
        let rewards: Vec<u8> = (0..m).map(reward).collect();
        let suffix = |s: usize| -> Option<Vec<Message>> {
            Some(vec![
                Message::assistant(factual[idx(s)].clone()?),
                Message::user(u.counterfactual.question.clone()),
                Message::assistant(counterfactual[idx(s)].clone()?),
            ])
        };
        for i in 0..m {
            for j in 0..m {
                if rewards[i] <= rewards[j] {
                    continue;
                }
                let (Some(chosen), Some(rejected)) = (suffix(i), suffix(j)) else {
                    continue;
                };
                let mut md = meta(world, edge, cfg, t.context_id, "dialogue");
                md.m = Some(i);
                md.m_rejected = Some(j);
                out.push(PreferenceRecord::Dialogue(DialoguePreference {
                    messages_prefix: vec![Message::user(u.factual.text.clone())],
                    chosen_messages: chosen,
                    rejected_messages: rejected,
                    meta: md,
                }));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Sft,
    Dpo,
    DpoDialogue,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sft" => Ok(Format::Sft),
            "dpo" => Ok(Format::Dpo),
            "dpo-dialogue" => Ok(Format::DpoDialogue),
            _ => Err(format!("unknown format `{s}` (expected sft, dpo or dpo-dialogue)")),
        }
    }
}

/// A homogeneous list of records of one format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dataset {
    Sft(Vec<SupervisedExample>),
    Dpo(Vec<TextPreference>),
    DpoDialogue(Vec<DialoguePreference>),
}

impl Dataset {
    pub fn format(&self) -> Format {
        match self {
            Dataset::Sft(_) => Format::Sft,
            Dataset::Dpo(_) => Format::Dpo,
            Dataset::DpoDialogue(_) => Format::DpoDialogue,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Sft(v) => v.len(),
            Dataset::Dpo(v) => v.len(),
            Dataset::DpoDialogue(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends records of the same format.
    pub fn extend(&mut self, other: Dataset) -> Result<(), GenError> {
        match (self, other) {
            (Dataset::Sft(a), Dataset::Sft(b)) => a.extend(b),
            (Dataset::Dpo(a), Dataset::Dpo(b)) => a.extend(b),
            (Dataset::DpoDialogue(a), Dataset::DpoDialogue(b)) => a.extend(b),
            (a, b) => {
                return Err(GenError::Config(format!(
                    "cannot merge {:?} records into a {:?} dataset",
                    b.format(),
                    a.format()
                )))
            }
        }
        Ok(())
    }

    pub fn empty(format: Format) -> Self {
        match format {
            Format::Sft => Dataset::Sft(Vec::new()),
            Format::Dpo => Dataset::Dpo(Vec::new()),
            Format::DpoDialogue => Dataset::DpoDialogue(Vec::new()),
        }
    }

    /// Splits preference records by shape. Text records go to `dpo`,
    /// dialogue records to `dpo-dialogue`.
    pub fn from_preferences(records: Vec<PreferenceRecord>, format: Format) -> Result<Self, GenError> {
        let mut text = Vec::new();
        let mut dialogue = Vec::new();
        for r in records {
            match r {
                PreferenceRecord::Text(t) => text.push(t),
                PreferenceRecord::Dialogue(d) => dialogue.push(d),
            }
        }
        match format {
            Format::Dpo if dialogue.is_empty() => Ok(Dataset::Dpo(text)),
            Format::DpoDialogue if text.is_empty() => Ok(Dataset::DpoDialogue(dialogue)),
            _ => Err(GenError::Config(format!(
                "records do not fit the {format:?} format"
            ))),
        }
    }

    /// Orders records by (context, kind, m, m_rejected, edge).
    pub fn sort(&mut self) {
        fn key(m: &Meta) -> (u64, String, Option<usize>, Option<usize>, String) {
            (m.context_id, m.kind.clone(), m.m, m.m_rejected, m.edge.clone())
        }
        match self {
            Dataset::Sft(v) => v.sort_by_key(|r| key(&r.meta)),
            Dataset::Dpo(v) => v.sort_by_key(|r| key(&r.meta)),
            Dataset::DpoDialogue(v) => v.sort_by_key(|r| key(&r.meta)),
        }
    }

    fn lines(&self) -> Vec<String> {
        fn enc<T: Serialize>(v: &[T]) -> Vec<String> {
            v.iter()
                .map(|r| serde_json::to_string(r).expect("record serializes"))
                .collect()
        }
        match self {
            Dataset::Sft(v) => enc(v),
            Dataset::Dpo(v) => enc(v),
            Dataset::DpoDialogue(v) => enc(v),
        }
    }
}

/// Writes JSON lines, one record per line.
pub fn write_dataset(data: &Dataset, path: &Path) -> Result<(), GenError> {
    let io_err = |source| GenError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for line in data.lines() {
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads a file written by [`write_dataset`]; schema violations report
/// their 1-based line number.
pub fn read_dataset(path: &Path, format: Format) -> Result<Dataset, GenError> {
    let p = path.display().to_string();
    let file = File::open(path).map_err(|source| GenError::Io {
        path: p.clone(),
        source,
    })?;
    fn parse<T: for<'de> Deserialize<'de>>(
        p: &str,
        reader: impl BufRead,
    ) -> Result<Vec<T>, GenError> {
        let mut out = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| GenError::Io {
                path: p.into(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| GenError::Schema {
                path: p.into(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(out)
    }
    let reader = BufReader::new(file);
    Ok(match format {
        Format::Sft => Dataset::Sft(parse(&p, reader)?),
        Format::Dpo => Dataset::Dpo(parse(&p, reader)?),
        Format::DpoDialogue => Dataset::DpoDialogue(parse(&p, reader)?),
    })
}
