//! The six shipped world models, compiled from the files under `worlds/`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dsl::{
    self, DeclKind, DistNode, ExprNode, PlanSpec, Spanned, SourceSpan, World, WorldFile,
};
use crate::mode::GeneralizationMode;
use crate::scm::{BinaryOp, Edge, Expr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinWorld {
    CandyBipartite,
    CandyChainNde,
    CandyChainWde,
    Healthcare,
    Engineering,
    MathDownload,
}

impl BuiltinWorld {
    pub const ALL: [BuiltinWorld; 6] = [
        BuiltinWorld::CandyBipartite,
        BuiltinWorld::CandyChainNde,
        BuiltinWorld::CandyChainWde,
        BuiltinWorld::Healthcare,
        BuiltinWorld::Engineering,
        BuiltinWorld::MathDownload,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BuiltinWorld::CandyBipartite => "candy-bipartite",
            BuiltinWorld::CandyChainNde => "candy-chain-nde",
            BuiltinWorld::CandyChainWde => "candy-chain-wde",
            BuiltinWorld::Healthcare => "healthcare",
            BuiltinWorld::Engineering => "engineering",
            BuiltinWorld::MathDownload => "math-download",
        }
    }

    /// Shipped source text.
    pub fn source(self) -> &'static str {
        match self {
            BuiltinWorld::CandyBipartite => include_str!("../../../worlds/candy-bipartite.world"),
            BuiltinWorld::CandyChainNde => include_str!("../../../worlds/candy-chain-nde.world"),
            BuiltinWorld::CandyChainWde => include_str!("../../../worlds/candy-chain-wde.world"),
            BuiltinWorld::Healthcare => include_str!("../../../worlds/healthcare.world"),
            BuiltinWorld::Engineering => include_str!("../../../worlds/engineering.world"),
            BuiltinWorld::MathDownload => include_str!("../../../worlds/math-download.world"),
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.world", self.as_str())
    }

    fn index(self) -> usize {
        Self::ALL.iter().position(|w| *w == self).unwrap()
    }
}

impl fmt::Display for BuiltinWorld {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BuiltinWorld {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|w| w.as_str() == s)
            .ok_or_else(|| format!("unknown built-in world `{s}`"))
    }
}

/// Default engineering mean table.
pub const MEANS_CSV: &str = include_str!("../../../worlds/means.csv");

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("means table: {0}")]
    Csv(#[from] csv::Error),
    #[error("means table: {0}")]
    Means(String),
    #[error("{0}")]
    Diagnostics(String),
}

/// Compiled built-in world. The shipped files are validated by the test
/// suite, so compiling them cannot fail.
pub fn load_builtin(id: BuiltinWorld) -> World {
    static CACHE: OnceLock<Vec<World>> = OnceLock::new();
    let all = CACHE.get_or_init(|| {
        BuiltinWorld::ALL
            .iter()
            .map(|w| match dsl::compile(w.source()) {
                Ok(world) => world,
                Err(d) => panic!(
                    "built-in world is invalid:\n{}",
                    dsl::format_diagnostics(&w.file_name(), &d)
                ),
            })
            .collect()
    });
    all[id.index()].clone()
}

/// Modes with at least one plan: the world's plan blocks, or the
/// structural defaults of [`effective_plans`] when it declares none.
pub fn availability_of(world: &World) -> BTreeSet<GeneralizationMode> {
    effective_plans(world).iter().map(|p| p.mode).collect()
}

/// Declared plan blocks, falling back to [`derived_plans`].
pub fn effective_plans(world: &World) -> Vec<PlanSpec> {
    if world.plans.is_empty() {
        derived_plans(world.model.edges())
    } else {
        world.plans.clone()
    }
}

/// Plans implied by the declared edges alone. Every edge gives an in-domain
/// plan, pairs sharing a cause or an effect give common-cause and
/// common-effect plans, and each triangle A→B, B→C, A→C gives the
/// inductive and both deductive plans.
pub fn derived_plans(edges: &[Edge]) -> Vec<PlanSpec> {
    use GeneralizationMode::*;
    let has = |c: &str, e: &str| edges.iter().any(|x| x.cause == c && x.effect == e);
    let spec = |mode, train: Vec<&Edge>, test: &Edge| PlanSpec {
        mode,
        train: train.into_iter().cloned().collect(),
        test: test.clone(),
    };
    let mut out: Vec<PlanSpec> = edges.iter().map(|e| spec(InDomain, vec![e], e)).collect();
    for a in edges {
        for b in edges {
            if a == b {
                continue;
            }
            if a.cause == b.cause {
                out.push(spec(CommonCause, vec![a], b));
            }
            if a.effect == b.effect {
                out.push(spec(CommonEffect, vec![a], b));
            }
        }
    }
    for ab in edges {
        for bc in edges.iter().filter(|e| e.cause == ab.effect) {
            if !has(&ab.cause, &bc.effect) {
                continue;
            }
            let ac = Edge::new(&ab.cause, &bc.effect);
            out.push(spec(Inductive, vec![ab, bc], &ac));
            out.push(spec(DeductiveCauseBased, vec![&ac, ab], bc));
            out.push(spec(DeductiveEffectBased, vec![&ac, bc], ab));
        }
    }
    out
}

pub fn availability(id: BuiltinWorld) -> BTreeSet<GeneralizationMode> {
    availability_of(&load_builtin(id))
}

/// One row of the engineering mean table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub fault_class: String,
    pub x_mean: f64,
    pub y_mean: f64,
    pub z_mean: f64,
}

pub fn parse_means(text: &str) -> Result<Vec<MeanRow>, WorldError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let rows = reader
        .deserialize()
        .collect::<Result<Vec<MeanRow>, _>>()?;
    if rows.is_empty() {
        return Err(WorldError::Means("no rows".into()));
    }
    for (i, r) in rows.iter().enumerate() {
        let ok = !r.fault_class.is_empty()
            && r.fault_class.chars().all(|c| c.is_ascii_alphanumeric())
            && [r.x_mean, r.y_mean, r.z_mean].iter().all(|v| v.is_finite());
        if !ok {
            return Err(WorldError::Means(format!("row {} is malformed", i + 2)));
        }
    }
    Ok(rows)
}

/// Row labels as used in the world file: fault class plus a 1-based
/// counter within the class, e.g. `BC1`, `BC2`.
pub fn row_labels(rows: &[MeanRow]) -> Vec<String> {
    let mut seen: Vec<(String, usize)> = Vec::new();
    rows.iter()
        .map(|r| {
            let n = match seen.iter_mut().find(|(c, _)| *c == r.fault_class) {
                Some((_, n)) => {
                    *n += 1;
                    *n
                }
                None => {
                    seen.push((r.fault_class.clone(), 1));
                    1
                }
            };
            format!("{}{n}", r.fault_class)
        })
        .collect()
}

fn node(expr: Expr, refs: &[&str]) -> ExprNode {
    ExprNode {
        expr,
        span: SourceSpan::default(),
        refs: refs
            .iter()
            .map(|r| Spanned::new(r.to_string(), SourceSpan::default()))
            .collect(),
    }
}

/// The engineering world with a replacement mean table.
pub fn engineering_with_means(rows: &[MeanRow]) -> Result<World, WorldError> {
    let mut file: WorldFile = dsl::parse(BuiltinWorld::Engineering.source())
        .map_err(|d| WorldError::Diagnostics(dsl::format_diagnostics("engineering.world", &d)))?;
    let labels = row_labels(rows);
    let n = rows.len() as i64;
    for decl in &mut file.decls {
        let DeclKind::Exo { name, dist } = &mut decl.kind else {
            continue;
        };
        let pick: Option<fn(&MeanRow) -> f64> = match name.value.as_str() {
            "X" => Some(|r| r.x_mean),
            "Y" => Some(|r| r.y_mean),
            "Z" => Some(|r| r.z_mean),
            _ => None,
        };
        if name.value == "row" {
            *dist = DistNode::Categorical(
                labels
                    .iter()
                    .map(|l| {
                        let w = Expr::bin(BinaryOp::Div, Expr::Int(1), Expr::Int(n));
                        (Spanned::new(l.clone(), SourceSpan::default()), node(w, &[]))
                    })
                    .collect(),
            );
        } else if let Some(pick) = pick {
            *dist = DistNode::Case(
                rows.iter()
                    .zip(&labels)
                    .map(|(r, l)| {
                        let sel = Expr::bin(BinaryOp::Eq, Expr::var("row"), Expr::Label(l.clone()));
                        let normal = DistNode::Normal {
                            mu: node(Expr::Real(pick(r)), &[]),
                            sigma: node(Expr::Real(0.1), &[]),
                            round: Some(Spanned::new(2, SourceSpan::default())),
                            positive: false,
                        };
                        (node(sel, &["row"]), normal)
                    })
                    .collect(),
            );
        }
    }
    dsl::lower(&file)
        .map_err(|d| WorldError::Diagnostics(dsl::format_diagnostics("engineering.world", &d)))
}
