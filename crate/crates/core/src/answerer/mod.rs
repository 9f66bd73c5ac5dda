//! Answering agents: a remote chat model, a perfect oracle, and three
//! simulated noisy models with known error structure.

mod client;

use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use client::{
    parse_reply, request_body, ChatClient, ClientError, Dialogue, DialogueError, HttpClient,
    Message, RemoteConfig, Role, Sampling,
};

use crate::qa::{template_answer, QuestionKind};
use crate::rng::{self, Stream};
use crate::scm::UnitOutcome;

/// Serializable description of an answerer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AnswererKind {
    Remote(RemoteConfig),
    Oracle,
    FactuallyCorrect { eps: f64, split: f64 },
    UniformlyCorrect { eps: f64, split: f64 },
    CausallyConsistent { eps: f64, split: f64 },
}

/// Error structure of a simulated answerer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseFamily {
    /// Never wrong on factual questions.
    FactuallyCorrect,
    /// Independent factual and counterfactual mistakes.
    UniformlyCorrect,
    /// Both answers of a unit are right or both are wrong.
    CausallyConsistent,
}

impl NoiseFamily {
    pub const ALL: [NoiseFamily; 3] = [
        NoiseFamily::FactuallyCorrect,
        NoiseFamily::UniformlyCorrect,
        NoiseFamily::CausallyConsistent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseFamily::FactuallyCorrect => "factually-correct",
            NoiseFamily::UniformlyCorrect => "uniformly-correct",
            NoiseFamily::CausallyConsistent => "causally-consistent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub family: NoiseFamily,
    pub eps: f64,
    /// Share of the error budget placed on units with X = true.
    pub split: f64,
}

impl Noise {
    pub fn new(family: NoiseFamily, eps: f64, split: f64) -> Result<Self, AnswerError> {
        for (name, v) in [("eps", eps), ("split", split)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(AnswerError::Config(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        Ok(Self { family, eps, split })
    }

    /// Per-unit flip probability: 2·eps·λ on X = true units and
    /// 2·eps·(1−λ) otherwise, clamped to [0, 1].
    pub fn rate(&self, x: bool) -> f64 {
        let share = if x { self.split } else { 1.0 - self.split };
        (2.0 * self.eps * share).clamp(0.0, 1.0)
    }

    /// (factual flip probability, counterfactual flip probability). The
    /// factually-correct family spends the whole budget on counterfactual
    /// answers, so its counterfactual rate is doubled to keep Avg-ER equal.
    pub fn flip_rates(&self, x: bool) -> (f64, f64) {
        let r = self.rate(x);
        match self.family {
            NoiseFamily::FactuallyCorrect => (0.0, (2.0 * r).min(1.0)),
            _ => (r, r),
        }
    }
}

/// Which answers of a unit a simulated answerer gets wrong.
pub fn noisy_flip_schedule(noise: &Noise, unit: &UnitOutcome, rng: &mut Stream) -> (bool, bool) {
    let (rf, rc) = noise.flip_rates(unit.x);
    match noise.family {
        NoiseFamily::FactuallyCorrect => (false, rng.bernoulli(rc)),
        NoiseFamily::UniformlyCorrect => {
            let f = rng.bernoulli(rf);
            (f, rng.bernoulli(rc))
        }
        NoiseFamily::CausallyConsistent => {
            let b = rng.bernoulli(rf);
            (b, b)
        }
    }
}

/// Exact law of [`noisy_flip_schedule`] for a unit with cause value `x`:
/// probability of each (factual flip, counterfactual flip) pair.
pub fn flip_distribution(noise: &Noise, x: bool) -> [((bool, bool), f64); 4] {
    let (rf, rc) = noise.flip_rates(x);
    let both = |a: bool, b: bool| match noise.family {
        NoiseFamily::CausallyConsistent => match (a, b) {
            (true, true) => rf,
            (false, false) => 1.0 - rf,
            _ => 0.0,
        },
        _ => {
            let pf = if a { rf } else { 1.0 - rf };
            let pc = if b { rc } else { 1.0 - rc };
            pf * pc
        }
    };
    [false, true]
        .into_iter()
        .flat_map(|a| [false, true].map(|b| (a, b)))
        .map(|(a, b)| ((a, b), both(a, b)))
        .collect::<Vec<_>>()
        .try_into()
        .expect("four outcomes")
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnswerError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error("simulated answerers need questions rendered by this toolkit ({0})")]
    MissingProvenance(&'static str),
    #[error("answerer configuration: {0}")]
    Config(String),
}

#[derive(Clone)]
pub enum Answerer {
    Remote(Arc<dyn ChatClient>),
    Oracle,
    Simulated(Noise),
}

impl std::fmt::Debug for Answerer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Answerer::Remote(_) => f.write_str("Remote"),
            Answerer::Oracle => f.write_str("Oracle"),
            Answerer::Simulated(n) => write!(f, "Simulated({n:?})"),
        }
    }
}

impl Answerer {
    pub fn from_kind(kind: &AnswererKind) -> Result<Self, AnswerError> {
        Ok(match kind {
            AnswererKind::Remote(cfg) => Answerer::Remote(Arc::new(HttpClient::new(cfg.clone())?)),
            AnswererKind::Oracle => Answerer::Oracle,
            AnswererKind::FactuallyCorrect { eps, split } => {
                Answerer::Simulated(Noise::new(NoiseFamily::FactuallyCorrect, *eps, *split)?)
            }
            AnswererKind::UniformlyCorrect { eps, split } => {
                Answerer::Simulated(Noise::new(NoiseFamily::UniformlyCorrect, *eps, *split)?)
            }
            AnswererKind::CausallyConsistent { eps, split } => {
                Answerer::Simulated(Noise::new(NoiseFamily::CausallyConsistent, *eps, *split)?)
            }
        })
    }

    pub fn is_simulated(&self) -> bool {
        !matches!(self, Answerer::Remote(_))
    }

    /// Answers the last user turn. Simulated answerers draw from a stream
    /// keyed by `key`; give the factual and counterfactual questions of one
    /// unit and sample the same key so that their flips are coupled.
    pub fn answer(&self, dialogue: &Dialogue, sampling: &Sampling, key: u64) -> Result<String, AnswerError> {
        dialogue.last_user()?;
        match self {
            Answerer::Remote(client) => Ok(client.complete(dialogue.turns(), sampling)?),
            Answerer::Oracle => {
                let q = dialogue.question().ok_or(AnswerError::MissingProvenance("no question"))?;
                let p = q.provenance.as_ref().ok_or(AnswerError::MissingProvenance("no record"))?;
                Ok(template_answer(q, p.truth))
            }
            Answerer::Simulated(noise) => {
                let q = dialogue.question().ok_or(AnswerError::MissingProvenance("no question"))?;
                let p = q.provenance.as_ref().ok_or(AnswerError::MissingProvenance("no record"))?;
                let unit = p.unit.as_ref().ok_or(AnswerError::MissingProvenance("no unit"))?;
                let (ff, fc) = noisy_flip_schedule(noise, unit, &mut Stream::new(key, 0));
                let flip = match q.kind {
                    QuestionKind::Factual => ff,
                    QuestionKind::Interventional => fc,
                };
                Ok(template_answer(q, p.truth != flip))
            }
        }
    }
}

/// Key for answer draw `sample` on context `context_id` of a run.
pub fn answer_key(seed: u64, context_id: u64, sample: u64) -> u64 {
    let k = rng::derive_index(rng::derive(seed, "answers"), context_id);
    rng::derive_index(k, sample)
}

/// Answers every item with at most `parallelism` concurrent calls. Results
/// are positionally aligned with `items` and do not depend on scheduling.
pub fn answer_batch(
    answerer: &Answerer,
    items: &[(Dialogue, u64)],
    sampling: &Sampling,
    parallelism: usize,
) -> Vec<Result<String, AnswerError>> {
    let workers = parallelism.max(1).min(items.len().max(1));
    if workers == 1 {
        return items
            .iter()
            .map(|(d, k)| answerer.answer(d, sampling, *k))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let mut out: Vec<Option<Result<String, AnswerError>>> = vec![None; items.len()];
    let chunks: Vec<Vec<(usize, Result<String, AnswerError>)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some((d, k)) = items.get(i) else { break };
                        done.push((i, answerer.answer(d, sampling, *k)));
                    }
                    done
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("answer worker panicked"))
            .collect()
    });
    for (i, r) in chunks.into_iter().flatten() {
        out[i] = Some(r);
    }
    out.into_iter().map(|r| r.expect("every item answered")).collect()
}

/// Parses `oracle`, `uniformly-correct:EPS[:SPLIT]` and the other simulated
/// families; `remote` yields the default endpoint (normally overridden by a
/// run config).
impl FromStr for AnswererKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        let name = parts.next().unwrap_or_default();
        let nums: Vec<f64> = parts
            .map(|p| p.parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
            .collect::<Result<_, _>>()?;
        let noisy = |nums: &[f64]| -> Result<(f64, f64), String> {
            match nums {
                [eps] => Ok((*eps, 0.5)),
                [eps, split] => Ok((*eps, *split)),
                _ => Err(format!("`{s}` needs EPS or EPS:SPLIT")),
            }
        };
        let plain = |k: AnswererKind| {
            if nums.is_empty() {
                Ok(k)
            } else {
                Err(format!("`{name}` takes no parameters"))
            }
        };
        match name {
            "oracle" => plain(AnswererKind::Oracle),
            "remote" => plain(AnswererKind::Remote(RemoteConfig::default())),
            "factually-correct" => {
                noisy(&nums).map(|(eps, split)| AnswererKind::FactuallyCorrect { eps, split })
            }
            "uniformly-correct" => {
                noisy(&nums).map(|(eps, split)| AnswererKind::UniformlyCorrect { eps, split })
            }
            "causally-consistent" => {
                noisy(&nums).map(|(eps, split)| AnswererKind::CausallyConsistent { eps, split })
            }
            _ => Err(format!(
                "unknown answerer `{name}` (expected oracle, remote, factually-correct, uniformly-correct or causally-consistent)"
            )),
        }
    }
}

impl AnswererKind {
    /// Short label used in reports, e.g. `uniformly-correct(0.3,0.5)`.
    pub fn label(&self) -> String {
        match self {
            AnswererKind::Remote(c) => format!("remote({})", c.model),
            AnswererKind::Oracle => "oracle".into(),
            AnswererKind::FactuallyCorrect { eps, split } => format!("factually-correct({eps},{split})"),
            AnswererKind::UniformlyCorrect { eps, split } => format!("uniformly-correct({eps},{split})"),
            AnswererKind::CausallyConsistent { eps, split } => {
                format!("causally-consistent({eps},{split})")
            }
        }
    }
}
