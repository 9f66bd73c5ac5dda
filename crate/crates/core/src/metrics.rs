//! Correctness and causal-consistency metrics.
//!
//! Undecidable estimates (`None`) are resolved to the complement of the
//! truth before any metric is computed.

use std::collections::BTreeMap;
use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};

use crate::scm::UnitOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    /// Necessity, on units with X and Y.
    N,
    /// Sufficiency, on units with neither X nor Y.
    S,
    /// Absent necessity, on units with Y but not X.
    AN,
    /// Absent sufficiency, on units with X but not Y.
    AS,
}

impl Relation {
    pub const ALL: [Relation; 4] = [Relation::N, Relation::S, Relation::AN, Relation::AS];

    /// The (X, Y) cell on which the relation is defined.
    pub fn cell(self) -> (bool, bool) {
        match self {
            Relation::N => (true, true),
            Relation::S => (false, false),
            Relation::AN => (false, true),
            Relation::AS => (true, false),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Class {
    Occurs,
    OccursNot,
    Irrelevant,
}

/// Unit-wise class of one relation. On its cell, the relation occurs when
/// flipping the cause flips the effect.
pub fn classify(rel: Relation, x: bool, y: bool, y_cf: bool) -> Class {
    if (x, y) != rel.cell() {
        Class::Irrelevant
    } else if y_cf != y {
        Class::Occurs
    } else {
        Class::OccursNot
    }
}

/// A unit's truth together with one draw of estimates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitEval {
    pub outcome: UnitOutcome,
    /// `None` when the answer could not be reduced to yes/no.
    pub y_hat: Option<bool>,
    pub y_cf_hat: Option<bool>,
    pub sample_index: usize,
}

impl UnitEval {
    pub fn resolved(&self) -> (bool, bool) {
        (
            self.y_hat.unwrap_or(!self.outcome.y),
            self.y_cf_hat.unwrap_or(!self.outcome.y_cf),
        )
    }

    pub fn undecidable(&self) -> usize {
        usize::from(self.y_hat.is_none()) + usize::from(self.y_cf_hat.is_none())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("no units to score")]
    Empty,
    #[error("reports describe different runs: {0} vs {1}")]
    MetadataMismatch(String, String),
    #[error("no base report `{method}` for world {world}, mode {mode}")]
    MissingBase { method: String, world: String, mode: String },
    #[error("base `{method}` has a zero {metric} for world {world}, mode {mode}")]
    ZeroBase {
        method: String,
        metric: &'static str,
        world: String,
        mode: String,
    },
    #[error("report table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub f_er: f64,
    pub cf_er: f64,
    pub avg_er: f64,
}

pub fn error_rates(units: &[UnitEval]) -> Result<ErrorRates, MetricsError> {
    if units.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = units.len() as f64;
    let (mut f, mut c) = (0usize, 0usize);
    for u in units {
        let (yh, ych) = u.resolved();
        f += usize::from(yh != u.outcome.y);
        c += usize::from(ych != u.outcome.y_cf);
    }
    let (f_er, cf_er) = (f as f64 / n, c as f64 / n);
    Ok(ErrorRates {
        f_er,
        cf_er,
        avg_er: (f_er + cf_er) / 2.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InconsistencyRates {
    pub n_ir: f64,
    pub s_ir: f64,
    pub an_ir: f64,
    pub as_ir: f64,
    pub avg_ir: f64,
}

pub fn inconsistency_rates(units: &[UnitEval]) -> Result<InconsistencyRates, MetricsError> {
    if units.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut miss = [0usize; 4];
    for u in units {
        let o = &u.outcome;
        let (yh, ych) = u.resolved();
        for (k, rel) in Relation::ALL.iter().enumerate() {
            miss[k] += usize::from(classify(*rel, o.x, yh, ych) != classify(*rel, o.x, o.y, o.y_cf));
        }
    }
    let n = units.len() as f64;
    let r = miss.map(|m| m as f64 / n);
    Ok(InconsistencyRates {
        n_ir: r[0],
        s_ir: r[1],
        an_ir: r[2],
        as_ir: r[3],
        avg_ir: r.iter().sum::<f64>() / 4.0,
    })
}

/// Empirical PN = P(¬Y_cf | X, Y) and PS = P(Y_cf | ¬X, ¬Y). With
/// `use_estimates`, Y and Y_cf are replaced by the estimates, conditioning
/// on (X, Ŷ). An empty conditioning set gives `None`.
pub fn pn_ps(units: &[UnitEval], use_estimates: bool) -> (Option<f64>, Option<f64>) {
    let (mut pn_num, mut pn_den, mut ps_num, mut ps_den) = (0usize, 0usize, 0usize, 0usize);
    for u in units {
        let x = u.outcome.x;
        let (y, y_cf) = if use_estimates {
            u.resolved()
        } else {
            (u.outcome.y, u.outcome.y_cf)
        };
        if x && y {
            pn_den += 1;
            pn_num += usize::from(!y_cf);
        }
        if !x && !y {
            ps_den += 1;
            ps_num += usize::from(y_cf);
        }
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    (ratio(pn_num, pn_den), ratio(ps_num, ps_den))
}

/// Causal-consistency reward: how many of the four relations the estimate
/// pair classifies correctly.
pub fn ccf_reward(x: bool, y: bool, y_cf: bool, y_hat: bool, y_cf_hat: bool) -> u8 {
    Relation::ALL
        .iter()
        .filter(|r| classify(**r, x, y_hat, y_cf_hat) == classify(**r, x, y, y_cf))
        .count() as u8
}

/// Identity of a run, shared by all of its per-sample reports.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunMeta {
    pub world: String,
    pub mode: String,
    pub edge: String,
    pub method: String,
    pub seed: u64,
}

impl fmt::Display for RunMeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{} (seed {})",
            self.world, self.mode, self.edge, self.method, self.seed
        )
    }
}

/// Metrics of one answer-sample index within one repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub meta: RunMeta,
    pub repeat: usize,
    pub sample_index: usize,
    pub errors: ErrorRates,
    pub inconsistency: InconsistencyRates,
    pub pn_hat: Option<f64>,
    pub ps_hat: Option<f64>,
    pub pn_true: Option<f64>,
    pub ps_true: Option<f64>,
    pub units: usize,
    pub undecidable: usize,
}

impl SampleReport {
    pub fn compute(
        meta: RunMeta,
        repeat: usize,
        sample_index: usize,
        units: &[UnitEval],
    ) -> Result<Self, MetricsError> {
        let errors = error_rates(units)?;
        let inconsistency = inconsistency_rates(units)?;
        let (pn_hat, ps_hat) = pn_ps(units, true);
        let (pn_true, ps_true) = pn_ps(units, false);
        Ok(Self {
            meta,
            repeat,
            sample_index,
            errors,
            inconsistency,
            pn_hat,
            ps_hat,
            pn_true,
            ps_true,
            units: units.len(),
            undecidable: units.iter().map(UnitEval::undecidable).sum(),
        })
    }
}

/// Mean, population standard deviation and number of values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    /// `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stat {
            mean,
            std: var.sqrt(),
            count: values.len(),
        })
    }
}

pub const METRIC_NAMES: [&str; 12] = [
    "f_er", "cf_er", "avg_er", "n_ir", "s_ir", "an_ir", "as_ir", "avg_ir", "pn_hat", "ps_hat",
    "pn_true", "ps_true",
];

/// Aggregated metrics of one run. Probability estimates are absent when
/// no sample had a non-empty conditioning set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub meta: RunMeta,
    pub f_er: Stat,
    pub cf_er: Stat,
    pub avg_er: Stat,
    pub n_ir: Stat,
    pub s_ir: Stat,
    pub an_ir: Stat,
    pub as_ir: Stat,
    pub avg_ir: Stat,
    pub pn_hat: Option<Stat>,
    pub ps_hat: Option<Stat>,
    pub pn_true: Option<Stat>,
    pub ps_true: Option<Stat>,
    /// Repeats where more than 10% of answers were undecidable.
    #[serde(default)]
    pub flagged_repeats: Vec<usize>,
}

impl MetricsReport {
    /// Metric by its column name.
    pub fn metric(&self, name: &str) -> Option<Option<Stat>> {
        Some(match name {
            "f_er" => Some(self.f_er),
            "cf_er" => Some(self.cf_er),
            "avg_er" => Some(self.avg_er),
            "n_ir" => Some(self.n_ir),
            "s_ir" => Some(self.s_ir),
            "an_ir" => Some(self.an_ir),
            "as_ir" => Some(self.as_ir),
            "avg_ir" => Some(self.avg_ir),
            "pn_hat" => self.pn_hat,
            "ps_hat" => self.ps_hat,
            "pn_true" => self.pn_true,
            "ps_true" => self.ps_true,
            _ => return None,
        })
    }
}

/// Mean/std/count over all per-sample reports of one run.
pub fn aggregate(samples: &[SampleReport]) -> Result<MetricsReport, MetricsError> {
    let first = samples.first().ok_or(MetricsError::Empty)?;
    if let Some(other) = samples.iter().find(|s| s.meta != first.meta) {
        return Err(MetricsError::MetadataMismatch(
            first.meta.to_string(),
            other.meta.to_string(),
        ));
    }
    let col = |f: &dyn Fn(&SampleReport) -> f64| {
        Stat::of(&samples.iter().map(f).collect::<Vec<_>>()).expect("nonempty")
    };
    let opt = |f: &dyn Fn(&SampleReport) -> Option<f64>| {
        Stat::of(&samples.iter().filter_map(f).collect::<Vec<_>>())
    };
    let mut per_repeat: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for s in samples {
        let e = per_repeat.entry(s.repeat).or_default();
        e.0 += s.undecidable;
        e.1 += 2 * s.units;
    }
    Ok(MetricsReport {
        meta: first.meta.clone(),
        f_er: col(&|s| s.errors.f_er),
        cf_er: col(&|s| s.errors.cf_er),
        avg_er: col(&|s| s.errors.avg_er),
        n_ir: col(&|s| s.inconsistency.n_ir),
        s_ir: col(&|s| s.inconsistency.s_ir),
        an_ir: col(&|s| s.inconsistency.an_ir),
        as_ir: col(&|s| s.inconsistency.as_ir),
        avg_ir: col(&|s| s.inconsistency.avg_ir),
        pn_hat: opt(&|s| s.pn_hat),
        ps_hat: opt(&|s| s.ps_hat),
        pn_true: opt(&|s| s.pn_true),
        ps_true: opt(&|s| s.ps_true),
        flagged_repeats: per_repeat
            .into_iter()
            .filter(|(_, (u, n))| *n > 0 && *u * 10 > *n)
            .map(|(r, _)| r)
            .collect(),
    })
}

/// Scores of one method relative to the base method, averaged over the
/// worlds that share a mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScore {
    pub mode: String,
    pub method: String,
    pub avg_er: f64,
    pub avg_ir: f64,
    pub worlds: usize,
}

pub fn normalize(reports: &[MetricsReport], base: &str) -> Result<Vec<NormalizedScore>, MetricsError> {
    let mut sums: BTreeMap<(String, String), (f64, f64, usize)> = BTreeMap::new();
    for r in reports {
        let b = reports
            .iter()
            .find(|b| b.meta.method == base && b.meta.world == r.meta.world && b.meta.mode == r.meta.mode)
            .ok_or_else(|| MetricsError::MissingBase {
                method: base.into(),
                world: r.meta.world.clone(),
                mode: r.meta.mode.clone(),
            })?;
        let zero = |metric| MetricsError::ZeroBase {
            method: base.into(),
            metric,
            world: r.meta.world.clone(),
            mode: r.meta.mode.clone(),
        };
        if b.avg_er.mean == 0.0 {
            return Err(zero("avg_er"));
        }
        if b.avg_ir.mean == 0.0 {
            return Err(zero("avg_ir"));
        }
        let e = sums
            .entry((r.meta.mode.clone(), r.meta.method.clone()))
            .or_default();
        e.0 += r.avg_er.mean / b.avg_er.mean;
        e.1 += r.avg_ir.mean / b.avg_ir.mean;
        e.2 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|((mode, method), (er, ir, n))| NormalizedScore {
            mode,
            method,
            avg_er: er / n as f64,
            avg_ir: ir / n as f64,
            worlds: n,
        })
        .collect())
}

/// One line of the long-format report table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub world: String,
    pub mode: String,
    pub edge: String,
    pub method: String,
    pub metric: String,
    /// Empty when the metric is absent.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub count: usize,
}

pub fn report_rows(r: &MetricsReport) -> Vec<ReportRow> {
    METRIC_NAMES
        .iter()
        .map(|name| {
            let s = r.metric(name).flatten();
            ReportRow {
                world: r.meta.world.clone(),
                mode: r.meta.mode.clone(),
                edge: r.meta.edge.clone(),
                method: r.meta.method.clone(),
                metric: name.to_string(),
                mean: s.map(|s| s.mean),
                std: s.map(|s| s.std),
                count: s.map_or(0, |s| s.count),
            }
        })
        .collect()
}

/// Writes reports as CSV with columns
/// `world,mode,edge,method,metric,mean,std,count`.
pub fn write_report_csv<W: io::Write>(reports: &[MetricsReport], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        for row in report_rows(r) {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds reports from the long-format table. The seed is not part of
/// the table and comes back as 0.
pub fn read_report_csv<R: io::Read>(input: R) -> Result<Vec<MetricsReport>, MetricsError> {
    let mut reader = csv::Reader::from_reader(input);
    let mut groups: BTreeMap<(String, String, String, String), BTreeMap<String, Option<Stat>>> =
        BTreeMap::new();
    let mut order = Vec::new();
    for (i, row) in reader.deserialize::<ReportRow>().enumerate() {
        let row = row.map_err(|e| MetricsError::Table(format!("row {}: {e}", i + 2)))?;
        let key = (row.world, row.mode, row.edge, row.method);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        let stat = match (row.mean, row.std) {
            (Some(mean), Some(std)) => Some(Stat {
                mean,
                std,
                count: row.count,
            }),
            _ => None,
        };
        groups.entry(key).or_default().insert(row.metric, stat);
    }
    order
        .into_iter()
        .map(|key| {
            let m = &groups[&key];
            let need = |name: &str| -> Result<Stat, MetricsError> {
                m.get(name)
                    .copied()
                    .flatten()
                    .ok_or_else(|| MetricsError::Table(format!("{key:?} lacks `{name}`")))
            };
            let opt = |name: &str| m.get(name).copied().flatten();
            Ok(MetricsReport {
                meta: RunMeta {
                    world: key.0.clone(),
                    mode: key.1.clone(),
                    edge: key.2.clone(),
                    method: key.3.clone(),
                    seed: 0,
                },
                f_er: need("f_er")?,
                cf_er: need("cf_er")?,
                avg_er: need("avg_er")?,
                n_ir: need("n_ir")?,
                s_ir: need("s_ir")?,
                an_ir: need("an_ir")?,
                as_ir: need("as_ir")?,
                avg_ir: need("avg_ir")?,
                pn_hat: opt("pn_hat"),
                ps_hat: opt("ps_hat"),
                pn_true: opt("pn_true"),
                ps_true: opt("ps_true"),
                flagged_repeats: Vec::new(),
            })
        })
        .collect()
}

/// Writes normalized scores as CSV with columns
/// `mode,method,avg_er,avg_ir,worlds`.
pub fn write_normalized_csv<W: io::Write>(scores: &[NormalizedScore], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for s in scores {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}
